#pragma once

// Wire contract shared by every model service.
//
//   request  : POST <base_url>/<method>, body = flat JSON object
//   response : JSON object with the method's result fields, or
//              {"error": {"code": "<code>", "message": "<text>"}}
//   blobs    : "<name>_b64" inline base64 when under 1 MiB, otherwise
//              "<name>_file" naming a temporary file with the raw bytes
//
// Methods: handshake, caption, embed, summarize, vae_encode, vae_decode, generate.

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>

#include <json.hpp>

#include "edits/core/fileio.hpp"
#include "edits/core/hash.hpp"

namespace edits::clients {

using json = nlohmann::json;

inline constexpr std::size_t kInlineBlobLimit = std::size_t{1} << 20;

class Transport {
public:
    virtual ~Transport() = default;
    /// Throws Error(transport) when the service cannot be reached or fails
    /// below the application layer. Error envelopes are returned, not thrown.
    virtual json call(std::string_view method, const json& request) = 0;
};

/// Counts calls per method; wraps another transport.
class CountingTransport final : public Transport {
public:
    explicit CountingTransport(std::shared_ptr<Transport> inner) : inner_(std::move(inner)) {}

    json call(std::string_view method, const json& request) override {
        {
            std::lock_guard lock(mutex_);
            ++counts_[std::string(method)];
        }
        ++total_;
        return inner_->call(method, request);
    }

    std::size_t total() const noexcept { return total_; }
    std::size_t count(std::string_view method) const {
        std::lock_guard lock(mutex_);
        auto it = counts_.find(std::string(method));
        return it == counts_.end() ? 0 : it->second;
    }

private:
    std::shared_ptr<Transport> inner_;
    mutable std::mutex mutex_;
    std::map<std::string, std::size_t> counts_;
    std::atomic<std::size_t> total_{0};
};

inline json error_envelope(std::string_view code, std::string_view message) {
    return {{"error", {{"code", code}, {"message", message}}}};
}

/// Attach a blob under `name`, inline or by file reference depending on size.
inline void put_blob(json& body, std::string_view name, std::span<const std::uint8_t> data,
                     const fs::path& spill_dir = fs::temp_directory_path()) {
    const std::string key(name);
    if (data.size() < kInlineBlobLimit) {
        body[key + "_b64"] = base64_encode(data);
        return;
    }
    const fs::path path = spill_dir / ("edits-blob-" + sha256_hex(data));
    if (!fs::exists(path)) write_file_atomic(path, data);
    body[key + "_file"] = path.string();
}

inline Bytes get_blob(const json& body, std::string_view name) {
    const std::string key(name);
    if (auto it = body.find(key + "_b64"); it != body.end()) return base64_decode(it->get<std::string>());
    if (auto it = body.find(key + "_file"); it != body.end()) return read_file(it->get<std::string>());
    throw Error(ErrorCode::service, "response lacks blob field '" + key + "'");
}

}  // namespace edits::clients
