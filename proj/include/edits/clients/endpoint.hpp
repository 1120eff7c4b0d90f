#pragma once

#include <string>

#include <json.hpp>

#include "edits/core/error.hpp"

namespace edits::clients {

/// Where and how to reach one model service. The auth token is referenced by
/// environment-variable name and read at request time, never stored.
struct ServiceEndpoint {
    std::string base_url;
    std::string auth_env;
    double timeout_s = 60.0;
    int max_retries = 3;
    int backoff_ms = 200;
    int max_concurrent = 4;

    void validate(const std::string& name) const {
        if (!(timeout_s > 0.0)) throw Error(ErrorCode::config, name + ": timeout must be > 0");
        if (max_retries < 0) throw Error(ErrorCode::config, name + ": max_retries must be >= 0");
        if (backoff_ms < 0) throw Error(ErrorCode::config, name + ": backoff must be >= 0");
        if (max_concurrent < 1) throw Error(ErrorCode::config, name + ": max_concurrent must be >= 1");
    }
};

inline void to_json(nlohmann::json& j, const ServiceEndpoint& e) {
    j = {{"base_url", e.base_url},     {"auth_env", e.auth_env},       {"timeout_s", e.timeout_s},
         {"max_retries", e.max_retries}, {"backoff_ms", e.backoff_ms}, {"max_concurrent", e.max_concurrent}};
}

inline void from_json(const nlohmann::json& j, ServiceEndpoint& e) {
    e.base_url = j.value("base_url", e.base_url);
    e.auth_env = j.value("auth_env", e.auth_env);
    e.timeout_s = j.value("timeout_s", e.timeout_s);
    e.max_retries = j.value("max_retries", e.max_retries);
    e.backoff_ms = j.value("backoff_ms", e.backoff_ms);
    e.max_concurrent = j.value("max_concurrent", e.max_concurrent);
}

}  // namespace edits::clients
