#pragma once

#include <condition_variable>
#include <memory>
#include <mutex>
#include <optional>

#include "edits/clients/cache.hpp"
#include "edits/clients/clock.hpp"
#include "edits/clients/endpoint.hpp"
#include "edits/clients/transport.hpp"

namespace edits::clients {

class ConcurrencyLimit {
public:
    explicit ConcurrencyLimit(int slots) : free_(slots < 1 ? 1 : slots) {}

    void acquire() {
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [&] { return free_ > 0; });
        --free_;
    }
    void release() {
        {
            std::lock_guard lock(mutex_);
            ++free_;
        }
        cv_.notify_one();
    }

private:
    std::mutex mutex_;
    std::condition_variable cv_;
    int free_;
};

struct ServiceContext {
    std::shared_ptr<Transport> transport;
    std::shared_ptr<ResponseCache> cache = std::make_shared<ResponseCache>();
    std::shared_ptr<Clock> clock = std::make_shared<SystemClock>();
    ServiceEndpoint endpoint;
};

/// Request path shared by all service clients: content-hash cache lookup,
/// then up to max_retries + 1 transport attempts with exponential backoff
/// (backoff_ms * 2^attempt between attempts).
class ServiceClient {
public:
    ServiceClient(std::string service, ServiceContext ctx)
        : service_(std::move(service)), ctx_(std::move(ctx)), limit_(ctx_.endpoint.max_concurrent) {
        if (!ctx_.transport) throw Error(ErrorCode::invalid_argument, service_ + ": no transport");
        if (!ctx_.cache) ctx_.cache = std::make_shared<ResponseCache>();
        if (!ctx_.clock) ctx_.clock = std::make_shared<SystemClock>();
        ctx_.endpoint.validate(service_);
    }

    const std::string& service() const noexcept { return service_; }
    const ServiceEndpoint& endpoint() const noexcept { return ctx_.endpoint; }
    const std::shared_ptr<ResponseCache>& cache() const noexcept { return ctx_.cache; }

    /// Key derived from content only: `key_material` must describe the request
    /// by hashes and values, never by paths or credentials.
    std::string cache_key(std::string_view method, const json& key_material) const {
        return sha256_hex(service_ + "\n" + std::string(method) + "\n" + key_material.dump());
    }

    json cached_call(std::string_view method, const json& body, const json& key_material) {
        const std::string key = cache_key(method, key_material);
        if (auto hit = ctx_.cache->get(service_, key)) return json::parse(*hit);
        json response = call(method, body);
        ctx_.cache->put(service_, key, response.dump());
        return response;
    }

    json call(std::string_view method, const json& body) {
        const int attempts = ctx_.endpoint.max_retries + 1;
        for (int attempt = 0;; ++attempt) {
            json response;
            try {
                limit_.acquire();
                struct Release {
                    ConcurrencyLimit& l;
                    ~Release() { l.release(); }
                } release{limit_};
                response = ctx_.transport->call(method, body);
            } catch (const Error& e) {
                if (e.code() != ErrorCode::transport || attempt + 1 >= attempts)
                    throw Error(e.code(), service_ + "." + std::string(method) + " failed after " +
                                              std::to_string(attempt + 1) + " attempt(s): " + e.what());
                ctx_.clock->sleep_for(std::chrono::milliseconds(std::int64_t{ctx_.endpoint.backoff_ms} << attempt));
                continue;
            }
            if (auto it = response.find("error"); it != response.end()) {
                throw Error(ErrorCode::service, service_ + "." + std::string(method) + ": " +
                                                    it->value("code", std::string("unknown")) + ": " +
                                                    it->value("message", std::string()));
            }
            return response;
        }
    }

    /// Memoized per client instance; not written to the response cache so a
    /// model swap behind the same endpoint is noticed on the next run.
    const json& handshake() {
        std::lock_guard lock(handshake_mutex_);
        if (!handshake_) handshake_ = call("handshake", json::object());
        return *handshake_;
    }

private:
    std::string service_;
    ServiceContext ctx_;
    ConcurrencyLimit limit_;
    std::mutex handshake_mutex_;
    std::optional<json> handshake_;
};

}  // namespace edits::clients
