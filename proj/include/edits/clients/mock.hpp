#pragma once

// Deterministic offline services. Each mock speaks the same wire protocol as
// a live endpoint, so caching, retries and payload handling are exercised
// unchanged. Outputs are pure functions of the request and the mock seed.

#include <algorithm>
#include <cmath>

#include "edits/clients/models.hpp"
#include "edits/core/png.hpp"

namespace edits::clients {

enum class ServiceKind { caption, embed, summarize, diffusion };

struct MockSettings {
    std::uint64_t seed = 0;
    std::size_t embed_dim = 64;
    LatentShape latent_shape{4, 32, 32};
};

namespace mock {

inline std::vector<double> unit_vector(std::uint64_t seed, std::size_t d) {
    Rng rng(seed);
    std::vector<double> v(d);
    double norm = 0.0;
    for (double& x : v) {
        x = rng.normal();
        norm += x * x;
    }
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
}

/// Grayscale PNG (height x width) of the channel mean, squashed through tanh,
/// tagged with the latent hash so distinct latents never share bytes.
inline Bytes render_latent(const Latent& latent) {
    const auto& s = latent.shape;
    std::vector<std::uint8_t> pixels(s.height * s.width);
    for (std::size_t y = 0; y < s.height; ++y) {
        for (std::size_t x = 0; x < s.width; ++x) {
            double acc = 0.0;
            for (std::size_t c = 0; c < s.channels; ++c) acc += latent.data[(c * s.height + y) * s.width + x];
            const double v = std::tanh(acc / static_cast<double>(std::max<std::size_t>(1, s.channels)));
            pixels[y * s.width + x] = static_cast<std::uint8_t>(std::lround(127.5 + 127.5 * v));
        }
    }
    return encode_png_gray(s.width, s.height, pixels, "edits-latent-sha256", latent_hash(latent));
}

}  // namespace mock

class MockTransport final : public Transport {
public:
    MockTransport(ServiceKind kind, MockSettings settings = {}) : kind_(kind), settings_(settings) {}

    json call(std::string_view method, const json& req) override {
        if (method == "handshake") return handshake();
        switch (kind_) {
            case ServiceKind::caption:
                if (method == "caption") return caption(req);
                break;
            case ServiceKind::embed:
                if (method == "embed") return embed(req);
                break;
            case ServiceKind::summarize:
                if (method == "summarize")
                    return {{"text", "mock summary " + sha256_hex(req.at("prompt").get<std::string>()).substr(0, 8)}};
                break;
            case ServiceKind::diffusion:
                if (method == "vae_encode") return vae_encode(req);
                if (method == "vae_decode") return vae_decode(req);
                if (method == "generate") return generate(req);
                break;
        }
        return error_envelope("unknown_method", std::string(method));
    }

private:
    json handshake() const {
        json j = {{"offline_mock", true}, {"model_id", "mock-" + std::to_string(settings_.seed)}};
        switch (kind_) {
            case ServiceKind::caption: j["service"] = "caption"; break;
            case ServiceKind::embed:
                j["service"] = "embed";
                j["dim"] = settings_.embed_dim;
                break;
            case ServiceKind::summarize: j["service"] = "summarize"; break;
            case ServiceKind::diffusion:
                j["service"] = "diffusion";
                j["latent_shape"] = shape_to_json(settings_.latent_shape);
                j["alphas_cumprod"] = NoiseSchedule::scaled_linear().alphas_cumprod;
                j["schedulers"] = {"ddim"};
                break;
        }
        return j;
    }

    json caption(const json& req) const {
        const Bytes image = get_blob(req, "image");
        const std::string label = req.at("class_label").get<std::string>();
        return {{"caption", "mock caption " + label + " " + sha256_hex(image).substr(0, 8)}};
    }

    json embed(const json& req) const {
        const std::string modality = req.at("modality").get<std::string>();
        json vectors = json::array();
        json errors = json::array();
        const json& items = req.at("items");
        for (std::size_t i = 0; i < items.size(); ++i) {
            std::string content_hash;
            if (modality == "text" && items[i].contains("text")) {
                content_hash = sha256_hex(items[i]["text"].get<std::string>());
            } else if (modality == "image") {
                content_hash = sha256_hex(get_blob(items[i], "image"));
            } else {
                errors.push_back({{"index", i}, {"code", "bad_item"}, {"message", "item does not match modality"}});
                continue;
            }
            const std::uint64_t s = derive_seed(settings_.seed, hash64(modality + ":" + content_hash));
            vectors.push_back(mock::unit_vector(s, settings_.embed_dim));
        }
        if (!errors.empty()) return {{"errors", errors}};
        return {{"vectors", vectors}};
    }

    json vae_encode(const json& req) const {
        const Bytes image = get_blob(req, "image");
        const Latent l =
            gaussian_latent(derive_seed(settings_.seed, hash64("vae:" + sha256_hex(image))), settings_.latent_shape);
        json r = {{"shape", shape_to_json(l.shape)}};
        put_blob(r, "latent", encode_latent(l));
        return r;
    }

    json vae_decode(const json& req) const {
        const LatentShape shape = shape_from_json(req.at("shape"));
        if (shape != settings_.latent_shape) return error_envelope("shape_mismatch", to_string(shape));
        json r = json::object();
        put_blob(r, "image", mock::render_latent(decode_latent(get_blob(req, "latent"), shape)));
        return r;
    }

    // Final latent = 0.5 * init + 0.5 * (prompt-and-seed derived tensor), so a
    // change in either prototype changes the output.
    json generate(const json& req) const {
        const LatentShape shape = shape_from_json(req.at("shape"));
        if (shape != settings_.latent_shape) return error_envelope("shape_mismatch", to_string(shape));
        if (req.value("scheduler", std::string()) != "ddim")
            return error_envelope("unsupported_scheduler", req.value("scheduler", std::string()));
        const Latent init = decode_latent(get_blob(req, "init_latent"), shape);
        const std::string prompt = req.at("prompt").get<std::string>();
        const std::uint64_t s =
            derive_seed(derive_seed(settings_.seed, hash64("prompt:" + prompt)), req.at("seed").get<std::uint64_t>());
        const Latent cond = gaussian_latent(s, shape);
        Latent out(shape);
        for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = 0.5f * init.data[i] + 0.5f * cond.data[i];
        json r = json::object();
        put_blob(r, "latent", encode_latent(out));
        put_blob(r, "image", mock::render_latent(out));
        return r;
    }

    ServiceKind kind_;
    MockSettings settings_;
};

}  // namespace edits::clients
