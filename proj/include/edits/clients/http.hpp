#pragma once

#include <cstdlib>

#include <httplib.h>

#include "edits/clients/endpoint.hpp"
#include "edits/clients/transport.hpp"

namespace edits::clients {

/// JSON over HTTP: POST <base_url>/<method>. Connection failures and 5xx are
/// transport errors (retried by ServiceClient); 4xx bodies are passed through
/// as error envelopes.
class HttpTransport final : public Transport {
public:
    explicit HttpTransport(ServiceEndpoint endpoint) : endpoint_(std::move(endpoint)) {
        if (endpoint_.base_url.empty()) throw Error(ErrorCode::config, "http transport needs a base_url");
        // split "scheme://host:port/prefix" into host part and path prefix
        const auto scheme = endpoint_.base_url.find("://");
        const auto path_start = endpoint_.base_url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
        host_ = endpoint_.base_url.substr(0, path_start);
        if (path_start != std::string::npos) prefix_ = endpoint_.base_url.substr(path_start);
        while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
    }

    json call(std::string_view method, const json& request) override {
        httplib::Client cli(host_);
        const auto secs = static_cast<time_t>(endpoint_.timeout_s);
        const auto usecs = static_cast<time_t>((endpoint_.timeout_s - static_cast<double>(secs)) * 1e6);
        cli.set_connection_timeout(secs, usecs);
        cli.set_read_timeout(secs, usecs);
        cli.set_write_timeout(secs, usecs);
        httplib::Headers headers;
        if (!endpoint_.auth_env.empty()) {
            if (const char* token = std::getenv(endpoint_.auth_env.c_str()); token && *token)
                headers.emplace("Authorization", std::string("Bearer ") + token);
        }
        const std::string path = prefix_ + "/" + std::string(method);
        auto res = cli.Post(path, headers, request.dump(), "application/json");
        if (!res) throw Error(ErrorCode::transport, "POST " + path + ": " + httplib::to_string(res.error()));
        if (res->status >= 500)
            throw Error(ErrorCode::transport, "POST " + path + ": HTTP " + std::to_string(res->status));
        json body;
        try {
            body = json::parse(res->body);
        } catch (const json::exception&) {
            if (res->status >= 400) return error_envelope("http_" + std::to_string(res->status), "non-JSON error body");
            throw Error(ErrorCode::service, "POST " + path + ": response is not JSON");
        }
        if (res->status >= 400 && !body.contains("error"))
            return error_envelope("http_" + std::to_string(res->status), body.dump());
        return body;
    }

private:
    ServiceEndpoint endpoint_;
    std::string host_;
    std::string prefix_;
};

}  // namespace edits::clients
