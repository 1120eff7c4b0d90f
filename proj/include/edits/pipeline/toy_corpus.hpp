#pragma once

#include "edits/core/manifest.hpp"
#include "edits/core/png.hpp"
#include "edits/core/rng.hpp"
#include "edits/pipeline/config.hpp"

namespace edits::pipeline {

inline const std::vector<std::string>& default_class_names() {
    static const std::vector<std::string> names = {"tench",      "english_springer", "cassette_player", "chain_saw",
                                                   "church",     "french_horn",      "garbage_truck",   "gas_pump",
                                                   "golf_ball",  "parachute"};
    return names;
}

/// Writes `per_class` random 16x16 grayscale PNGs per class under
/// <dir>/images/<class>/ plus <dir>/manifest.jsonl without captions.
inline CorpusConfig make_toy_corpus(const fs::path& dir, std::size_t num_classes, std::size_t per_class,
                                    std::uint64_t seed) {
    CorpusConfig corpus;
    corpus.manifest = dir / "manifest.jsonl";
    corpus.root = dir;
    std::vector<SampleRecord> records;
    Rng rng(seed);
    SampleId next_id = 0;
    for (std::size_t c = 0; c < num_classes; ++c) {
        const std::string name = c < default_class_names().size() ? default_class_names()[c] : "class_" + std::to_string(c);
        corpus.classes.push_back(name);
        for (std::size_t i = 0; i < per_class; ++i) {
            std::vector<std::uint8_t> pixels(16 * 16);
            for (auto& p : pixels) p = static_cast<std::uint8_t>(rng.below(256));
            const std::string ref = "images/" + name + "/" + std::to_string(i) + ".png";
            write_file_atomic(dir / ref, encode_png_gray(16, 16, pixels));
            SampleRecord r;
            r.sample_id = next_id++;
            r.class_id = static_cast<ClassId>(c);
            r.image_ref = ref;
            records.push_back(std::move(r));
        }
    }
    write_manifest(corpus.manifest, records, num_classes);
    return corpus;
}

}  // namespace edits::pipeline
