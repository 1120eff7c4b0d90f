#pragma once

// Line-delimited record file: one flat JSON object per line, sorted by
// sample_id. Embedding vectors live in .edb blocks; a record points at its
// row through "embedding_row".

#include <algorithm>
#include <optional>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "edits/core/fileio.hpp"
#include "edits/core/types.hpp"

namespace edits {

using json = nlohmann::json;

inline json to_manifest_line(const SampleRecord& r) {
    json j = {{"sample_id", r.sample_id}, {"class_id", r.class_id}, {"image_ref", r.image_ref}};
    if (r.caption) j["caption"] = *r.caption;
    if (r.embedding_row) j["embedding_row"] = *r.embedding_row;
    return j;
}

inline SampleRecord from_manifest_line(const json& j) {
    SampleRecord r;
    r.sample_id = j.at("sample_id").get<SampleId>();
    r.class_id = j.at("class_id").get<ClassId>();
    r.image_ref = j.at("image_ref").get<std::string>();
    if (auto it = j.find("caption"); it != j.end() && !it->is_null()) r.caption = it->get<std::string>();
    if (auto it = j.find("embedding_row"); it != j.end() && !it->is_null())
        r.embedding_row = it->get<std::uint32_t>();
    return r;
}

namespace detail {

inline void check_records(const std::vector<SampleRecord>& records, std::optional<std::size_t> num_classes) {
    std::unordered_set<SampleId> seen;
    for (const auto& r : records) {
        if (!seen.insert(r.sample_id).second)
            throw Error(ErrorCode::duplicate_id, "duplicate sample_id " + std::to_string(r.sample_id));
        if (r.class_id < 0 || (num_classes && static_cast<std::size_t>(r.class_id) >= *num_classes))
            throw Error(ErrorCode::unknown_class, "sample_id " + std::to_string(r.sample_id) + " has unknown class_id " +
                                                      std::to_string(r.class_id));
    }
}

}  // namespace detail

inline std::string encode_manifest(std::vector<SampleRecord> records,
                                   std::optional<std::size_t> num_classes = std::nullopt) {
    detail::check_records(records, num_classes);
    std::sort(records.begin(), records.end(),
              [](const SampleRecord& a, const SampleRecord& b) { return a.sample_id < b.sample_id; });
    std::string out;
    for (const auto& r : records) {
        out += to_manifest_line(r).dump();
        out += '\n';
    }
    return out;
}

inline std::vector<SampleRecord> decode_manifest(const std::string& text,
                                                 std::optional<std::size_t> num_classes = std::nullopt) {
    std::vector<SampleRecord> records;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            records.push_back(from_manifest_line(json::parse(line)));
        } catch (const json::exception& e) {
            throw Error(ErrorCode::io, "manifest line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    detail::check_records(records, num_classes);
    std::sort(records.begin(), records.end(),
              [](const SampleRecord& a, const SampleRecord& b) { return a.sample_id < b.sample_id; });
    return records;
}

inline void write_manifest(const fs::path& path, const std::vector<SampleRecord>& records,
                           std::optional<std::size_t> num_classes = std::nullopt) {
    write_file_atomic(path, encode_manifest(records, num_classes));
}

inline std::vector<SampleRecord> read_manifest(const fs::path& path,
                                               std::optional<std::size_t> num_classes = std::nullopt) {
    return decode_manifest(read_text_file(path), num_classes);
}

}  // namespace edits
