#pragma once

#include <cstdlib>
#include <string>
#include <vector>

#include <json.hpp>

#include "edits/clients/endpoint.hpp"
#include "edits/clients/mock.hpp"
#include "edits/cluster.hpp"
#include "edits/core/fileio.hpp"

namespace edits::pipeline {

using json = nlohmann::json;

inline const std::vector<std::string>& stage_names() {
    static const std::vector<std::string> names = {"caption", "embed", "fuse", "cluster", "lsa", "generate", "report"};
    return names;
}

struct CorpusConfig {
    fs::path manifest;
    fs::path root;
    std::vector<std::string> classes;
};

struct ModuleToggles {
    bool gsq = true;
    bool lsa = true;
    bool dpg = true;
};

struct ServicesConfig {
    clients::ServiceEndpoint caption;
    clients::ServiceEndpoint embed;
    clients::ServiceEndpoint summarize;
    clients::ServiceEndpoint diffusion;
};

struct PipelineConfig {
    CorpusConfig corpus;
    fs::path output_dir;
    fs::path cache_dir;  // empty: <output_dir>/cache

    std::size_t ipc = 10;
    double temperature = 0.07;
    std::size_t awareness_capacity = 5;
    std::uint64_t seed = 0;
    bool normalize_embeddings = true;
    bool per_class_softmax = false;
    std::size_t block_size = 256;
    cluster::KMeansParams kmeans;

    double noise_strength = 0.7;
    std::size_t num_steps = 50;
    double guidance_scale = 7.5;
    std::string scheduler = "ddim";
    std::size_t images_per_prototype = 1;

    std::size_t workers = 1;
    std::size_t embed_batch = 64;
    bool mock = false;
    clients::MockSettings mock_settings;
    ServicesConfig services;
    ModuleToggles modules;

    /// Last stage to execute; empty runs everything.
    std::string stop_after;
    bool force = false;

    void validate() const {
        if (ipc < 1) throw Error(ErrorCode::config, "ipc must be >= 1");
        if (!(temperature > 0.0)) throw Error(ErrorCode::config, "temperature must be > 0");
        if (awareness_capacity < 1) throw Error(ErrorCode::config, "awareness_capacity must be >= 1");
        if (!(noise_strength >= 0.0 && noise_strength <= 1.0))
            throw Error(ErrorCode::config, "noise_strength must lie in [0, 1]");
        if (num_steps < 1) throw Error(ErrorCode::config, "num_steps must be >= 1");
        if (guidance_scale < 0.0) throw Error(ErrorCode::config, "guidance_scale must be >= 0");
        if (images_per_prototype < 1) throw Error(ErrorCode::config, "images_per_prototype must be >= 1");
        if (kmeans.restarts < 1 || kmeans.max_iter < 1) throw Error(ErrorCode::config, "kmeans needs restarts, max_iter >= 1");
        if (corpus.manifest.empty()) throw Error(ErrorCode::config, "corpus.manifest is required");
        if (corpus.classes.empty()) throw Error(ErrorCode::config, "corpus.classes must name at least one class");
        if (output_dir.empty()) throw Error(ErrorCode::config, "output_dir is required");
        if (!stop_after.empty()) {
            const auto& names = stage_names();
            if (std::find(names.begin(), names.end(), stop_after) == names.end())
                throw Error(ErrorCode::config, "unknown stage '" + stop_after + "'");
        }
        if (!mock) {
            services.caption.validate("caption");
            services.embed.validate("embed");
            services.summarize.validate("summarize");
            services.diffusion.validate("diffusion");
        }
    }
};

inline fs::path effective_cache_dir(const PipelineConfig& c) {
    if (const char* env = std::getenv("EDITS_CACHE_DIR"); env && *env) return env;
    if (!c.cache_dir.empty()) return c.cache_dir;
    return c.output_dir / "cache";
}

inline json to_json(const PipelineConfig& c) {
    json services = {{"caption", c.services.caption},
                     {"embed", c.services.embed},
                     {"summarize", c.services.summarize},
                     {"diffusion", c.services.diffusion}};
    return {
        {"corpus", {{"manifest", c.corpus.manifest.string()}, {"root", c.corpus.root.string()}, {"classes", c.corpus.classes}}},
        {"output_dir", c.output_dir.string()},
        {"cache_dir", c.cache_dir.string()},
        {"ipc", c.ipc},
        {"temperature", c.temperature},
        {"awareness_capacity", c.awareness_capacity},
        {"seed", c.seed},
        {"normalize_embeddings", c.normalize_embeddings},
        {"per_class_softmax", c.per_class_softmax},
        {"block_size", c.block_size},
        {"kmeans",
         {{"max_iter", c.kmeans.max_iter},
          {"tol", c.kmeans.tol},
          {"restarts", c.kmeans.restarts},
          {"init", c.kmeans.init == cluster::Init::random ? "random" : "kmeans++"}}},
        {"noise_strength", c.noise_strength},
        {"num_steps", c.num_steps},
        {"guidance_scale", c.guidance_scale},
        {"scheduler", c.scheduler},
        {"images_per_prototype", c.images_per_prototype},
        {"workers", c.workers},
        {"embed_batch", c.embed_batch},
        {"mock", c.mock},
        {"mock_settings",
         {{"seed", c.mock_settings.seed},
          {"embed_dim", c.mock_settings.embed_dim},
          {"latent_shape", clients::shape_to_json(c.mock_settings.latent_shape)}}},
        {"services", services},
        {"modules", {{"gsq", c.modules.gsq}, {"lsa", c.modules.lsa}, {"dpg", c.modules.dpg}}},
    };
}

/// Relative paths are resolved against `base`.
inline PipelineConfig config_from_json(const json& j, const fs::path& base = {}) {
    PipelineConfig c;
    auto path = [&](const json& obj, const char* key) -> fs::path {
        const std::string v = obj.value(key, std::string());
        if (v.empty()) return {};
        fs::path p(v);
        return p.is_relative() && !base.empty() ? base / p : p;
    };
    try {
        if (auto it = j.find("corpus"); it != j.end()) {
            c.corpus.manifest = path(*it, "manifest");
            c.corpus.root = path(*it, "root");
            c.corpus.classes = it->value("classes", std::vector<std::string>{});
            if (c.corpus.root.empty() && !c.corpus.manifest.empty()) c.corpus.root = c.corpus.manifest.parent_path();
        }
        c.output_dir = path(j, "output_dir");
        c.cache_dir = path(j, "cache_dir");
        c.ipc = j.value("ipc", c.ipc);
        c.temperature = j.value("temperature", c.temperature);
        c.awareness_capacity = j.value("awareness_capacity", c.awareness_capacity);
        c.seed = j.value("seed", c.seed);
        c.normalize_embeddings = j.value("normalize_embeddings", c.normalize_embeddings);
        c.per_class_softmax = j.value("per_class_softmax", c.per_class_softmax);
        c.block_size = j.value("block_size", c.block_size);
        if (auto it = j.find("kmeans"); it != j.end()) {
            c.kmeans.max_iter = it->value("max_iter", c.kmeans.max_iter);
            c.kmeans.tol = it->value("tol", c.kmeans.tol);
            c.kmeans.restarts = it->value("restarts", c.kmeans.restarts);
            const std::string init = it->value("init", std::string("kmeans++"));
            if (init == "random") c.kmeans.init = cluster::Init::random;
            else if (init == "kmeans++") c.kmeans.init = cluster::Init::kmeans_plus_plus;
            else throw Error(ErrorCode::config, "unknown kmeans.init '" + init + "'");
        }
        c.noise_strength = j.value("noise_strength", c.noise_strength);
        c.num_steps = j.value("num_steps", c.num_steps);
        c.guidance_scale = j.value("guidance_scale", c.guidance_scale);
        c.scheduler = j.value("scheduler", c.scheduler);
        c.images_per_prototype = j.value("images_per_prototype", c.images_per_prototype);
        c.workers = j.value("workers", c.workers);
        c.embed_batch = j.value("embed_batch", c.embed_batch);
        c.mock = j.value("mock", c.mock);
        if (auto it = j.find("mock_settings"); it != j.end()) {
            c.mock_settings.seed = it->value("seed", c.mock_settings.seed);
            c.mock_settings.embed_dim = it->value("embed_dim", c.mock_settings.embed_dim);
            if (it->contains("latent_shape")) c.mock_settings.latent_shape = clients::shape_from_json(it->at("latent_shape"));
        }
        if (auto it = j.find("services"); it != j.end()) {
            if (it->contains("caption")) c.services.caption = it->at("caption").get<clients::ServiceEndpoint>();
            if (it->contains("embed")) c.services.embed = it->at("embed").get<clients::ServiceEndpoint>();
            if (it->contains("summarize")) c.services.summarize = it->at("summarize").get<clients::ServiceEndpoint>();
            if (it->contains("diffusion")) c.services.diffusion = it->at("diffusion").get<clients::ServiceEndpoint>();
        }
        if (auto it = j.find("modules"); it != j.end()) {
            c.modules.gsq = it->value("gsq", true);
            c.modules.lsa = it->value("lsa", true);
            c.modules.dpg = it->value("dpg", true);
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::config, e.what());
    }
    return c;
}

inline PipelineConfig load_config(const fs::path& path) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::config, path.string() + ": " + e.what());
    }
    return config_from_json(j, path.parent_path());
}

}  // namespace edits::pipeline
