#pragma once

#include <map>
#include <optional>
#include <shared_mutex>
#include <string>

#include "edits/core/fileio.hpp"

namespace edits::clients {

/// Content-addressed response cache, `<root>/<service>/<key[0:2]>/<key>`.
/// With an empty root it lives in memory only. Concurrent readers, one writer.
class ResponseCache {
public:
    ResponseCache() = default;
    explicit ResponseCache(fs::path root) : root_(std::move(root)) {}

    const fs::path& root() const noexcept { return root_; }

    fs::path entry_path(const std::string& service, const std::string& key) const {
        return root_ / service / key.substr(0, 2) / key;
    }

    std::optional<std::string> get(const std::string& service, const std::string& key) const {
        std::shared_lock lock(mutex_);
        if (root_.empty()) {
            auto it = memory_.find(service + "/" + key);
            if (it == memory_.end()) return std::nullopt;
            return it->second;
        }
        const fs::path p = entry_path(service, key);
        std::error_code ec;
        if (!fs::exists(p, ec)) return std::nullopt;
        return read_text_file(p);
    }

    void put(const std::string& service, const std::string& key, const std::string& value) {
        std::unique_lock lock(mutex_);
        if (root_.empty()) {
            memory_[service + "/" + key] = value;
            return;
        }
        write_file_atomic(entry_path(service, key), value);
    }

private:
    fs::path root_;
    mutable std::shared_mutex mutex_;
    std::map<std::string, std::string> memory_;
};

}  // namespace edits::clients
