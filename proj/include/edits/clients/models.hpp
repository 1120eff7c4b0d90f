#pragma once

// Typed clients over ServiceClient, one per model service.
//
//   caption    {prompt, class_label, image_*}            -> {caption}
//   embed      {modality: "text"|"image", items: [...]}  -> {vectors} | {errors: [{index, code, message}]}
//   summarize  {prompt}                                  -> {text}
//   vae_encode {image_*}                                 -> {latent_*, shape}
//   vae_decode {latent_*, shape}                         -> {image_*}
//   generate   {init_latent_*, shape, prompt, num_steps, guidance_scale,
//               scheduler, seed, t_start}                -> {image_*, latent_*}
//   handshake  {}  -> {service, model_id, offline_mock, dim | latent_shape + alphas_cumprod}
//
// Latent blobs are single-row .edb blocks; "shape" is [channels, height, width].

#include <cmath>
#include <string>
#include <vector>

#include "edits/clients/service.hpp"
#include "edits/core/edb.hpp"
#include "edits/core/rng.hpp"
#include "edits/core/types.hpp"
#include "edits/prompts.hpp"

namespace edits::clients {

inline Bytes encode_latent(const Latent& latent) {
    MatrixF row(1, latent.data.size());
    std::copy(latent.data.begin(), latent.data.end(), row.values().begin());
    return encode_embedding_block(row);
}

inline Latent decode_latent(std::span<const std::uint8_t> bytes, const LatentShape& shape) {
    const MatrixF row = decode_embedding_block(bytes);
    if (row.size() != shape.numel())
        throw Error(ErrorCode::shape_mismatch, "latent has " + std::to_string(row.size()) + " values, shape " +
                                                   to_string(shape) + " needs " + std::to_string(shape.numel()));
    return Latent(shape, std::vector<float>(row.values().begin(), row.values().end()));
}

inline json shape_to_json(const LatentShape& s) { return json::array({s.channels, s.height, s.width}); }

inline LatentShape shape_from_json(const json& j) {
    if (!j.is_array() || j.size() != 3) throw Error(ErrorCode::service, "latent shape must be [c, h, w]");
    return {j[0].get<std::size_t>(), j[1].get<std::size_t>(), j[2].get<std::size_t>()};
}

inline std::string latent_hash(const Latent& latent) { return sha256_hex(encode_latent(latent)); }

/// Standard-normal latent drawn from a seeded stream.
inline Latent gaussian_latent(std::uint64_t seed, const LatentShape& shape) {
    Rng rng(seed);
    Latent l(shape);
    for (float& x : l.data) x = static_cast<float>(rng.normal());
    return l;
}

class CaptionClient {
public:
    explicit CaptionClient(ServiceContext ctx) : client_("caption", std::move(ctx)) {}

    std::string caption(std::span<const std::uint8_t> image, const std::string& class_label) {
        const std::string prompt = prompts::build_caption_prompt(class_label);
        json body = {{"prompt", prompt}, {"class_label", class_label}};
        put_blob(body, "image", image);
        const json key = {{"image_sha256", sha256_hex(image)},
                          {"class_label", class_label},
                          {"prompt_sha256", sha256_hex(prompt)}};
        const json response = client_.cached_call("caption", body, key);
        std::string text = response.value("caption", std::string());
        if (text.empty()) throw Error(ErrorCode::empty_caption, "caption service returned an empty caption");
        return text;
    }

    ServiceClient& raw() noexcept { return client_; }

private:
    ServiceClient client_;
};

class EmbedClient {
public:
    explicit EmbedClient(ServiceContext ctx) : client_("embed", std::move(ctx)) {}

    /// Joint-space dimension declared by the service.
    std::size_t dim() { return client_.handshake().at("dim").get<std::size_t>(); }

    MatrixD embed_texts(const std::vector<std::string>& texts) {
        std::vector<json> items;
        std::vector<std::string> hashes;
        for (const auto& t : texts) {
            items.push_back({{"text", t}});
            hashes.push_back(sha256_hex(t));
        }
        return embed("text", items, hashes);
    }

    MatrixD embed_images(const std::vector<Bytes>& images) {
        std::vector<json> items;
        std::vector<std::string> hashes;
        for (const auto& img : images) {
            json item = json::object();
            put_blob(item, "image", img);
            items.push_back(std::move(item));
            hashes.push_back(sha256_hex(img));
        }
        return embed("image", items, hashes);
    }

    ServiceClient& raw() noexcept { return client_; }

private:
    // Per-item cache; the misses of one call go out as a single batch.
    MatrixD embed(const std::string& modality, const std::vector<json>& items, const std::vector<std::string>& hashes) {
        if (items.empty()) throw Error(ErrorCode::empty_input, "embed needs a nonempty batch");
        const std::size_t d = dim();
        MatrixD out(items.size(), d);
        auto& cache = *client_.cache();
        std::vector<std::size_t> missing;
        std::vector<std::string> keys(items.size());
        for (std::size_t i = 0; i < items.size(); ++i) {
            keys[i] = client_.cache_key("embed", {{"modality", modality}, {"sha256", hashes[i]}});
            if (auto hit = cache.get(client_.service(), keys[i])) {
                store_row(out, i, json::parse(*hit), d);
            } else {
                missing.push_back(i);
            }
        }
        if (missing.empty()) return out;

        json batch = json::array();
        for (const auto i : missing) batch.push_back(items[i]);
        const json response = client_.call("embed", {{"modality", modality}, {"items", batch}});
        if (auto it = response.find("errors"); it != response.end() && !it->empty()) {
            std::string msg;
            for (const auto& e : *it) {
                const auto local = e.at("index").get<std::size_t>();
                const std::size_t item = local < missing.size() ? missing[local] : local;
                msg += " [item " + std::to_string(item) + ": " + e.value("code", std::string("error")) + " " +
                       e.value("message", std::string()) + "]";
            }
            throw Error(ErrorCode::service, "embed batch had failing items:" + msg);
        }
        const json& vectors = response.at("vectors");
        if (vectors.size() != missing.size())
            throw Error(ErrorCode::service, "embed returned " + std::to_string(vectors.size()) + " vectors for " +
                                                std::to_string(missing.size()) + " items");
        for (std::size_t r = 0; r < missing.size(); ++r) {
            store_row(out, missing[r], vectors[r], d);
            cache.put(client_.service(), keys[missing[r]], vectors[r].dump());
        }
        return out;
    }

    static void store_row(MatrixD& out, std::size_t i, const json& v, std::size_t d) {
        if (v.size() != d)
            throw Error(ErrorCode::dimension_mismatch, "embedding has dim " + std::to_string(v.size()) +
                                                           ", handshake declared " + std::to_string(d));
        for (std::size_t c = 0; c < d; ++c) out(i, c) = v[c].get<double>();
    }

    ServiceClient client_;
};

class SummarizeClient {
public:
    explicit SummarizeClient(ServiceContext ctx) : client_("summarize", std::move(ctx)) {}

    /// True when the endpoint is the deterministic offline mock.
    bool offline() { return client_.handshake().value("offline_mock", false); }

    std::string summarize(const std::string& prompt) {
        const json response =
            client_.cached_call("summarize", {{"prompt", prompt}}, {{"prompt_sha256", sha256_hex(prompt)}});
        return response.value("text", std::string());
    }

    ServiceClient& raw() noexcept { return client_; }

private:
    ServiceClient client_;
};

/// Cumulative signal rate abar over the service's training timesteps 1..T.
struct NoiseSchedule {
    std::vector<double> alphas_cumprod;

    /// abar at inference step t of total_steps (evenly spaced over training
    /// timesteps); abar at step 0 is 1.
    double alpha_bar(std::size_t step, std::size_t total_steps) const {
        if (step == 0 || alphas_cumprod.empty()) return 1.0;
        const double frac = static_cast<double>(std::min(step, total_steps)) / static_cast<double>(total_steps);
        const auto idx = static_cast<std::size_t>(std::llround(frac * static_cast<double>(alphas_cumprod.size())));
        return alphas_cumprod[std::clamp<std::size_t>(idx, 1, alphas_cumprod.size()) - 1];
    }

    static NoiseSchedule scaled_linear(std::size_t steps = 1000, double beta_start = 0.00085, double beta_end = 0.012) {
        NoiseSchedule s;
        double prod = 1.0;
        const double a = std::sqrt(beta_start), b = std::sqrt(beta_end);
        for (std::size_t t = 0; t < steps; ++t) {
            const double r = steps > 1 ? static_cast<double>(t) / static_cast<double>(steps - 1) : 0.0;
            const double beta = (a + (b - a) * r) * (a + (b - a) * r);
            prod *= 1.0 - beta;
            s.alphas_cumprod.push_back(prod);
        }
        return s;
    }
};

struct NoisedLatent {
    Latent latent;
    std::size_t t_start = 0;
};

/// Variance-preserving forward noising with caller-supplied noise:
/// sqrt(abar) * latent + sqrt(1 - abar) * eps at t_start = round(strength * total_steps).
inline NoisedLatent add_noise(const Latent& latent, double strength, std::size_t total_steps,
                              const NoiseSchedule& schedule, std::span<const double> eps) {
    if (!(strength >= 0.0 && strength <= 1.0))
        throw Error(ErrorCode::invalid_argument, "noise strength must lie in [0, 1]");
    if (eps.size() != latent.data.size()) throw Error(ErrorCode::shape_mismatch, "noise size differs from latent");
    NoisedLatent out{latent, static_cast<std::size_t>(std::llround(strength * static_cast<double>(total_steps)))};
    if (out.t_start == 0) return out;
    const double abar = schedule.alpha_bar(out.t_start, total_steps);
    const double signal = std::sqrt(abar), noise = std::sqrt(1.0 - abar);
    for (std::size_t i = 0; i < out.latent.data.size(); ++i)
        out.latent.data[i] = static_cast<float>(signal * latent.data[i] + noise * eps[i]);
    return out;
}

inline NoisedLatent add_noise(const Latent& latent, double strength, std::size_t total_steps,
                              const NoiseSchedule& schedule, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> eps(latent.data.size());
    for (double& e : eps) e = rng.normal();
    return add_noise(latent, strength, total_steps, schedule, eps);
}

struct GenerationRequest {
    Latent init_latent;
    std::string prompt;
    std::size_t num_steps = 50;
    double guidance_scale = 7.5;
    std::string scheduler_id = "ddim";
    std::uint64_t seed = 0;
    /// Step the reverse loop starts from; num_steps for pure text-to-image.
    std::size_t t_start = 0;
};

struct GenerationResult {
    Bytes image;
    Latent latent;
};

class DiffusionClient {
public:
    explicit DiffusionClient(ServiceContext ctx) : client_("diffusion", std::move(ctx)) {}

    LatentShape latent_shape() { return shape_from_json(client_.handshake().at("latent_shape")); }

    NoiseSchedule schedule() {
        return {client_.handshake().at("alphas_cumprod").get<std::vector<double>>()};
    }

    std::string vae_id() { return client_.handshake().value("model_id", std::string("unknown")); }

    Latent vae_encode(std::span<const std::uint8_t> image) {
        json body = json::object();
        put_blob(body, "image", image);
        const json r = client_.cached_call("vae_encode", body, {{"image_sha256", sha256_hex(image)}, {"vae", vae_id()}});
        const LatentShape shape = shape_from_json(r.at("shape"));
        if (shape != latent_shape())
            throw Error(ErrorCode::shape_mismatch, "encoder returned " + to_string(shape) + ", handshake declared " +
                                                       to_string(latent_shape()));
        return decode_latent(get_blob(r, "latent"), shape);
    }

    Bytes vae_decode(const Latent& latent) {
        check_shape(latent);
        json body = {{"shape", shape_to_json(latent.shape)}};
        put_blob(body, "latent", encode_latent(latent));
        const json r = client_.cached_call("vae_decode", body, {{"latent_sha256", latent_hash(latent)}, {"vae", vae_id()}});
        return get_blob(r, "image");
    }

    GenerationResult generate(const GenerationRequest& req) {
        check_shape(req.init_latent);
        if (req.num_steps < 1) throw Error(ErrorCode::invalid_argument, "num_steps must be >= 1");
        if (req.guidance_scale < 0.0) throw Error(ErrorCode::invalid_argument, "guidance_scale must be >= 0");
        json body = {{"shape", shape_to_json(req.init_latent.shape)},
                     {"prompt", req.prompt},
                     {"num_steps", req.num_steps},
                     {"guidance_scale", req.guidance_scale},
                     {"scheduler", req.scheduler_id},
                     {"seed", req.seed},
                     {"t_start", req.t_start}};
        put_blob(body, "init_latent", encode_latent(req.init_latent));
        json key = body;
        key.erase("init_latent_b64");
        key.erase("init_latent_file");
        key["init_latent_sha256"] = latent_hash(req.init_latent);
        key["vae"] = vae_id();
        const json r = client_.cached_call("generate", body, key);
        return {get_blob(r, "image"), decode_latent(get_blob(r, "latent"), req.init_latent.shape)};
    }

    ServiceClient& raw() noexcept { return client_; }

private:
    void check_shape(const Latent& latent) {
        const LatentShape expected = latent_shape();
        if (latent.shape != expected || latent.data.size() != expected.numel())
            throw Error(ErrorCode::shape_mismatch,
                        "latent " + to_string(latent.shape) + " does not match handshake " + to_string(expected));
    }

    ServiceClient client_;
};

}  // namespace edits::clients
