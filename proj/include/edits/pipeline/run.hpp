#pragma once

// Stage orchestrator. Stages exchange data only through files under the
// output directory, so any prefix of the pipeline can be resumed:
//
//   caption  -> manifest.jsonl
//   embed    -> embeddings/visual.edb, embeddings/text.edb
//   fuse     -> embeddings/features.edb (h, or f_v when GSQ is off)
//   cluster  -> buffers/class_<id>.jsonl, buffers/centers_<id>.edb, buffers/summary.json
//   lsa      -> prototypes/manifest.jsonl, prototypes/latents.edb, prototypes/features.edb
//   generate -> synthetic/<class_name>/<k>.png, synthetic/manifest.jsonl
//   report   -> report.json
//
// Each finished stage leaves .stages/<name>.done holding a fingerprint of the
// configuration it depends on. A stage is skipped when its marker matches and
// its outputs exist, unless forced or an earlier stage ran in this invocation.

#include <chrono>
#include <functional>
#include <map>

#include "edits/clients/http.hpp"
#include "edits/clients/mock.hpp"
#include "edits/clients/models.hpp"
#include "edits/cluster.hpp"
#include "edits/core/edb.hpp"
#include "edits/core/manifest.hpp"
#include "edits/gsq.hpp"
#include "edits/lsa.hpp"
#include "edits/pipeline/config.hpp"
#include "edits/pipeline/metrics.hpp"

namespace edits::pipeline {

struct Services {
    std::shared_ptr<clients::CaptionClient> caption;
    std::shared_ptr<clients::EmbedClient> embed;
    std::shared_ptr<clients::SummarizeClient> summarize;
    std::shared_ptr<clients::DiffusionClient> diffusion;
    std::map<std::string, std::shared_ptr<clients::CountingTransport>> transports;

    std::size_t transport_calls(const std::string& service, std::string_view method) const {
        auto it = transports.find(service);
        return it == transports.end() ? 0 : it->second->count(method);
    }
    std::size_t transport_calls(const std::string& service) const {
        auto it = transports.find(service);
        return it == transports.end() ? 0 : it->second->total();
    }
};

/// Replacement transports keyed by service name ("caption", "embed",
/// "summarize", "diffusion"); used by tests and custom deployments.
struct ServiceOverrides {
    std::map<std::string, std::shared_ptr<clients::Transport>> transports;
    std::shared_ptr<clients::Clock> clock;
};

inline Services make_services(const PipelineConfig& config, const ServiceOverrides& overrides = {}) {
    auto cache = std::make_shared<clients::ResponseCache>(effective_cache_dir(config));
    std::shared_ptr<clients::Clock> clock = overrides.clock ? overrides.clock : std::make_shared<clients::SystemClock>();
    Services s;
    auto context = [&](const std::string& name, clients::ServiceKind kind, const clients::ServiceEndpoint& ep) {
        std::shared_ptr<clients::Transport> inner;
        if (auto it = overrides.transports.find(name); it != overrides.transports.end()) inner = it->second;
        else if (config.mock) inner = std::make_shared<clients::MockTransport>(kind, config.mock_settings);
        else inner = std::make_shared<clients::HttpTransport>(ep);
        auto counted = std::make_shared<clients::CountingTransport>(inner);
        s.transports[name] = counted;
        return clients::ServiceContext{counted, cache, clock, config.mock ? clients::ServiceEndpoint{} : ep};
    };
    s.caption = std::make_shared<clients::CaptionClient>(
        context("caption", clients::ServiceKind::caption, config.services.caption));
    s.embed = std::make_shared<clients::EmbedClient>(context("embed", clients::ServiceKind::embed, config.services.embed));
    s.summarize = std::make_shared<clients::SummarizeClient>(
        context("summarize", clients::ServiceKind::summarize, config.services.summarize));
    s.diffusion = std::make_shared<clients::DiffusionClient>(
        context("diffusion", clients::ServiceKind::diffusion, config.services.diffusion));
    return s;
}

struct RunLayout {
    fs::path root;

    fs::path manifest() const { return root / "manifest.jsonl"; }
    fs::path visual() const { return root / "embeddings" / "visual.edb"; }
    fs::path text() const { return root / "embeddings" / "text.edb"; }
    fs::path features() const { return root / "embeddings" / "features.edb"; }
    fs::path buffers() const { return root / "buffers"; }
    fs::path buffer_summary() const { return buffers() / "summary.json"; }
    fs::path prototypes() const { return root / "prototypes"; }
    fs::path prototype_manifest() const { return prototypes() / "manifest.jsonl"; }
    fs::path prototype_latents() const { return prototypes() / "latents.edb"; }
    fs::path prototype_features() const { return prototypes() / "features.edb"; }
    fs::path synthetic() const { return root / "synthetic"; }
    fs::path synthetic_manifest() const { return synthetic() / "manifest.jsonl"; }
    fs::path report() const { return root / "report.json"; }
    fs::path marker(const std::string& stage) const { return root / ".stages" / (stage + ".done"); }
};

inline std::vector<json> read_json_lines(const fs::path& path) {
    std::vector<json> out;
    std::istringstream in(read_text_file(path));
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) out.push_back(json::parse(line));
    return out;
}

inline std::string join_json_lines(const std::vector<json>& lines) {
    std::string text;
    for (const auto& l : lines) text += l.dump() + "\n";
    return text;
}

inline std::string path_safe(const std::string& name) {
    std::string out;
    for (const char c : name)
        out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.') ? c : '_';
    return out.empty() ? "_" : out;
}

/// Manifest records of a run with f_v / f_tau attached from the .edb blocks.
inline Corpus load_corpus(const RunLayout& layout, std::optional<std::size_t> num_classes = std::nullopt,
                          bool with_embeddings = true) {
    Corpus records = read_manifest(layout.manifest(), num_classes);
    if (!with_embeddings) return records;
    const MatrixF visual = read_embedding_block(layout.visual());
    const MatrixF text = read_embedding_block(layout.text());
    for (auto& r : records) {
        if (!r.embedding_row || *r.embedding_row >= visual.rows() || *r.embedding_row >= text.rows())
            throw Error(ErrorCode::io, "sample_id " + std::to_string(r.sample_id) + " has no valid embedding_row");
        const auto v = visual.row(*r.embedding_row);
        const auto t = text.row(*r.embedding_row);
        r.f_v.assign(v.begin(), v.end());
        r.f_tau.assign(t.begin(), t.end());
    }
    return records;
}

/// Features (corpus-aligned) and prototype features of a finished run.
inline PrototypeMetrics run_metrics(const fs::path& run_dir) {
    const RunLayout layout{run_dir};
    const Corpus records = load_corpus(layout, std::nullopt, false);
    const MatrixD features = read_embedding_block(layout.features()).cast<double>();
    MatrixD samples(records.size(), features.cols());
    std::vector<ClassId> sample_classes;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto row = features.row(records[i].embedding_row.value_or(static_cast<std::uint32_t>(i)));
        std::copy(row.begin(), row.end(), samples.row(i).begin());
        sample_classes.push_back(records[i].class_id);
    }
    const MatrixD protos = read_embedding_block(layout.prototype_features()).cast<double>();
    std::vector<ClassId> proto_classes;
    for (const auto& line : read_json_lines(layout.prototype_manifest()))
        proto_classes.push_back(line.at("class_id").get<ClassId>());
    return prototype_metrics(protos, proto_classes, samples, sample_classes);
}

class Pipeline {
public:
    using Logger = std::function<void(const std::string&)>;

    Pipeline(PipelineConfig config, Services services, Logger log = {})
        : config_(std::move(config)), services_(std::move(services)), log_(std::move(log)), layout_{config_.output_dir} {
        config_.validate();
    }

    const RunLayout& layout() const noexcept { return layout_; }
    const Services& services() const noexcept { return services_; }

    /// Runs (or resumes) every stage up to config.stop_after. Returns the
    /// report, or null when stopped before the report stage.
    json run() {
        timings_ = json::object();
        bool upstream_ran = false;
        Stage stages[] = {
            {"caption", [this] { stage_caption(); }},
            {"embed", [this] { stage_embed(); }},
            {"fuse", [this] { stage_fuse(); }},
            {"cluster", [this] { stage_cluster(); }},
            {"lsa", [this] { stage_lsa(); }},
            {"generate", [this] { stage_generate(); }},
        };
        for (auto& stage : stages) {
            const std::string fp = fingerprint(stage.name);
            const bool skip = !config_.force && !upstream_ran && marker_matches(stage.name, fp) && outputs_exist(stage.name);
            const auto start = std::chrono::steady_clock::now();
            if (!skip) {
                log("stage " + stage.name + ": running");
                guarded(stage.name, stage.body);
                write_file_atomic(layout_.marker(stage.name), json{{"stage", stage.name}, {"fingerprint", fp}}.dump());
                upstream_ran = true;
            } else {
                log("stage " + stage.name + ": up to date, skipped");
            }
            record_timing(stage.name, start, skip);
            if (config_.stop_after == stage.name) return nullptr;
        }
        const auto start = std::chrono::steady_clock::now();
        json report;
        guarded("report", [&] { report = build_report(); });
        record_timing("report", start, false);
        report["timings"] = timings_;
        write_file_atomic(layout_.report(), report.dump(2) + "\n");
        write_file_atomic(layout_.marker("report"), json{{"stage", "report"}, {"fingerprint", fingerprint("report")}}.dump());
        return report;
    }

private:
    struct Stage {
        std::string name;
        std::function<void()> body;
    };

    void log(const std::string& msg) const {
        if (log_) log_(msg);
    }

    void guarded(const std::string& name, const std::function<void()>& body) {
        try {
            body();
        } catch (const std::exception& e) {
            throw Error(ErrorCode::stage_failure, "stage " + name + ": " + e.what());
        }
    }

    void record_timing(const std::string& name, std::chrono::steady_clock::time_point start, bool skipped) {
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        timings_[name] = {{"seconds", secs}, {"status", skipped ? "skipped" : "executed"}};
    }

    std::string fingerprint(const std::string& stage) const {
        const json all = to_json(config_);
        json part;
        if (stage == "caption") {
            std::string manifest_hash;
            std::error_code ec;
            if (fs::exists(config_.corpus.manifest, ec)) manifest_hash = sha256_hex(read_file(config_.corpus.manifest));
            part = {{"manifest_sha256", manifest_hash}, {"root", all["corpus"]["root"]}, {"classes", config_.corpus.classes},
                    {"mock", config_.mock}, {"mock_seed", config_.mock_settings.seed},
                    {"url", config_.services.caption.base_url}};
        } else if (stage == "embed") {
            part = {{"mock", config_.mock}, {"mock_settings", all["mock_settings"]}, {"url", config_.services.embed.base_url},
                    {"batch", config_.embed_batch}};
        } else if (stage == "fuse") {
            part = {{"gsq", config_.modules.gsq},           {"temperature", config_.temperature},
                    {"normalize", config_.normalize_embeddings}, {"per_class", config_.per_class_softmax},
                    {"block", config_.block_size}};
        } else if (stage == "cluster") {
            part = {{"ipc", config_.ipc}, {"seed", config_.seed}, {"kmeans", all["kmeans"]}};
        } else if (stage == "lsa") {
            part = {{"lsa", config_.modules.lsa}, {"capacity", config_.awareness_capacity}, {"mock", all["mock_settings"]},
                    {"diffusion", config_.services.diffusion.base_url}, {"summarize", config_.services.summarize.base_url}};
        } else if (stage == "generate") {
            part = {{"dpg", config_.modules.dpg},         {"strength", config_.noise_strength},
                    {"steps", config_.num_steps},         {"guidance", config_.guidance_scale},
                    {"scheduler", config_.scheduler},     {"per_prototype", config_.images_per_prototype},
                    {"seed", config_.seed}};
        } else {
            part = all;
            part.erase("output_dir");
            part.erase("cache_dir");
            part.erase("workers");
        }
        return sha256_hex(stage + part.dump());
    }

    bool marker_matches(const std::string& stage, const std::string& fp) const {
        std::error_code ec;
        if (!fs::exists(layout_.marker(stage), ec)) return false;
        try {
            return json::parse(read_text_file(layout_.marker(stage))).value("fingerprint", std::string()) == fp;
        } catch (const std::exception&) {
            return false;
        }
    }

    bool outputs_exist(const std::string& stage) const {
        std::error_code ec;
        auto exists = [&](const fs::path& p) { return fs::exists(p, ec); };
        try {
            if (stage == "caption") return exists(layout_.manifest());
            if (stage == "embed") return exists(layout_.visual()) && exists(layout_.text());
            if (stage == "fuse") return exists(layout_.features());
            if (stage == "cluster") {
                if (!exists(layout_.buffer_summary())) return false;
                const json summary = json::parse(read_text_file(layout_.buffer_summary()));
                for (const auto& c : summary.at("classes")) {
                    const auto id = c.at("class_id").get<ClassId>();
                    if (!exists(cluster::buffer_members_path(layout_.buffers(), id)) ||
                        !exists(cluster::buffer_centers_path(layout_.buffers(), id)))
                        return false;
                }
                return true;
            }
            if (stage == "lsa")
                return exists(layout_.prototype_manifest()) && exists(layout_.prototype_latents()) &&
                       exists(layout_.prototype_features());
            if (stage == "generate") {
                if (!exists(layout_.synthetic_manifest())) return false;
                for (const auto& line : read_json_lines(layout_.synthetic_manifest()))
                    if (!exists(layout_.root / line.at("path").get<std::string>())) return false;
                return true;
            }
        } catch (const std::exception&) {
            return false;
        }
        return false;
    }

    std::string class_name(ClassId id) const {
        const auto i = static_cast<std::size_t>(id);
        return i < config_.corpus.classes.size() ? config_.corpus.classes[i] : std::to_string(id);
    }

    Bytes load_image(const SampleRecord& r) const { return read_file(config_.corpus.root / r.image_ref); }

    // --- stages

    void stage_caption() {
        Corpus records = read_manifest(config_.corpus.manifest, config_.corpus.classes.size());
        for (std::size_t i = 0; i < records.size(); ++i) records[i].embedding_row = static_cast<std::uint32_t>(i);
        parallel_for(records.size(), config_.workers, [&](std::size_t i) {
            auto& r = records[i];
            if (r.caption && !r.caption->empty()) return;
            r.caption = services_.caption->caption(load_image(r), class_name(r.class_id));
        });
        write_manifest(layout_.manifest(), records, config_.corpus.classes.size());
    }

    void stage_embed() {
        const Corpus records = load_corpus(layout_, config_.corpus.classes.size(), false);
        if (records.empty()) throw Error(ErrorCode::empty_input, "corpus is empty");
        const std::size_t d = services_.embed->dim();
        MatrixD visual(records.size(), d), text(records.size(), d);
        const std::size_t batch = std::max<std::size_t>(1, config_.embed_batch);
        for (std::size_t begin = 0; begin < records.size(); begin += batch) {
            const std::size_t end = std::min(records.size(), begin + batch);
            std::vector<std::string> captions;
            std::vector<Bytes> images(end - begin);
            for (std::size_t i = begin; i < end; ++i) {
                if (!records[i].caption || records[i].caption->empty())
                    throw Error(ErrorCode::empty_caption, "sample_id " + std::to_string(records[i].sample_id) + " has no caption");
                captions.push_back(*records[i].caption);
            }
            parallel_for(end - begin, config_.workers, [&](std::size_t k) { images[k] = load_image(records[begin + k]); });
            const MatrixD t = services_.embed->embed_texts(captions);
            const MatrixD v = services_.embed->embed_images(images);
            for (std::size_t i = begin; i < end; ++i) {
                const std::size_t row = *records[i].embedding_row;
                std::copy(v.row(i - begin).begin(), v.row(i - begin).end(), visual.row(row).begin());
                std::copy(t.row(i - begin).begin(), t.row(i - begin).end(), text.row(row).begin());
            }
        }
        write_embedding_block(visual, layout_.visual());
        write_embedding_block(text, layout_.text());
    }

    gsq::Options gsq_options() const {
        return {config_.temperature, config_.normalize_embeddings, config_.block_size, config_.per_class_softmax};
    }

    /// Corpus in embedding-row order with embeddings normalized per config.
    Corpus corpus_in_row_order() const {
        Corpus records = load_corpus(layout_, config_.corpus.classes.size());
        std::sort(records.begin(), records.end(),
                  [](const SampleRecord& a, const SampleRecord& b) { return *a.embedding_row < *b.embedding_row; });
        if (config_.normalize_embeddings) {
            std::vector<SampleId> ids;
            for (const auto& r : records) ids.push_back(r.sample_id);
            const MatrixD v = gsq::normalize_rows(gsq::visual_matrix(records), ids);
            const MatrixD t = gsq::normalize_rows(gsq::text_matrix(records), ids);
            for (std::size_t i = 0; i < records.size(); ++i) {
                records[i].f_v.assign(v.row(i).begin(), v.row(i).end());
                records[i].f_tau.assign(t.row(i).begin(), t.row(i).end());
            }
        }
        return records;
    }

    void stage_fuse() {
        Corpus records = corpus_in_row_order();
        MatrixD features;
        if (config_.modules.gsq) {
            records = gsq::fused_features(std::move(records), gsq_options());
            features = gsq::fused_feature_matrix(records);
        } else {
            features = gsq::visual_matrix(records);
        }
        write_embedding_block(features, layout_.features());
    }

    void stage_cluster() {
        const Corpus records = corpus_in_row_order();
        const MatrixD features = read_embedding_block(layout_.features()).cast<double>();
        for (std::size_t c = 0; c < config_.corpus.classes.size(); ++c) {
            const bool present = std::any_of(records.begin(), records.end(),
                                             [&](const SampleRecord& r) { return r.class_id == static_cast<ClassId>(c); });
            if (!present) throw Error(ErrorCode::empty_input, "class " + class_name(static_cast<ClassId>(c)) + " has no members");
        }
        const auto buffers = cluster::build_buffers(records, features, config_.ipc, config_.seed, config_.kmeans);
        json summary = json::array();
        for (const auto& b : buffers) {
            cluster::write_buffer(layout_.buffers(), b);
            summary.push_back(cluster::buffer_summary(b));
        }
        write_file_atomic(layout_.buffer_summary(), json{{"classes", summary}}.dump(2) + "\n");
    }

    void stage_lsa() {
        const Corpus records = corpus_in_row_order();
        const MatrixD features = read_embedding_block(layout_.features()).cast<double>();
        std::vector<cluster::ClusterBuffer> buffers;
        const json summary = json::parse(read_text_file(layout_.buffer_summary()));
        for (const auto& s : summary.at("classes"))
            buffers.push_back(cluster::read_buffer(layout_.buffers(), s));

        const lsa::PrototypeInputs in{records, features, config_.corpus.classes,
                                      [this](const SampleRecord& r) { return load_image(r); }};
        const auto pairs = lsa::build_prototypes(buffers, in, *services_.diffusion, services_.summarize.get(),
                                                 {config_.awareness_capacity, config_.modules.lsa, config_.workers});
        if (pairs.empty()) throw Error(ErrorCode::empty_input, "no prototypes were built");

        const LatentShape shape = pairs.front().image_prototype.shape;
        MatrixF latents(pairs.size(), shape.numel());
        MatrixD proto_features(pairs.size(), features.cols());
        std::vector<json> lines;
        for (std::size_t p = 0; p < pairs.size(); ++p) {
            const auto& pair = pairs[p];
            std::copy(pair.image_prototype.data.begin(), pair.image_prototype.data.end(), latents.row(p).begin());
            std::copy(pair.feature.begin(), pair.feature.end(), proto_features.row(p).begin());
            lines.push_back({{"row", p},
                             {"class_id", pair.class_id},
                             {"center_index", pair.center_index},
                             {"provenance", pair.provenance},
                             {"text_prototype", pair.text_prototype},
                             {"fallback", pair.fallback},
                             {"radius", pair.radius},
                             {"latent_shape", clients::shape_to_json(pair.image_prototype.shape)}});
        }
        write_embedding_block(latents, layout_.prototype_latents());
        write_embedding_block(proto_features, layout_.prototype_features());
        write_file_atomic(layout_.prototype_manifest(), join_json_lines(lines));
    }

    void stage_generate() {
        const auto protos = read_json_lines(layout_.prototype_manifest());
        const MatrixF latents = read_embedding_block(layout_.prototype_latents());
        const auto schedule = services_.diffusion->schedule();
        const std::size_t per = config_.images_per_prototype;
        std::vector<json> lines(protos.size() * per);
        parallel_for(lines.size(), config_.workers, [&](std::size_t job) {
            const json& proto = protos[job / per];
            const std::size_t replica = job % per;
            const auto cls = proto.at("class_id").get<ClassId>();
            const auto k = proto.at("center_index").get<std::size_t>();
            const LatentShape shape = clients::shape_from_json(proto.at("latent_shape"));
            const auto row = latents.row(proto.at("row").get<std::size_t>());
            const Latent image_proto(shape, std::vector<float>(row.begin(), row.end()));

            const std::uint64_t seed =
                derive_seed(derive_seed(config_.seed, (static_cast<std::uint64_t>(cls) << 32) | k), replica);
            clients::GenerationRequest req;
            req.num_steps = config_.num_steps;
            req.guidance_scale = config_.guidance_scale;
            req.scheduler_id = config_.scheduler;
            req.seed = seed;
            if (config_.modules.dpg) {
                auto noised = clients::add_noise(image_proto, config_.noise_strength, config_.num_steps, schedule, seed);
                req.init_latent = std::move(noised.latent);
                req.t_start = noised.t_start;
                req.prompt = proto.at("text_prototype").get<std::string>();
            } else {
                req.init_latent = clients::gaussian_latent(seed, shape);
                req.t_start = config_.num_steps;
                req.prompt = class_name(cls);
            }
            const auto result = services_.diffusion->generate(req);
            const std::string name = per == 1 ? std::to_string(k) + ".png"
                                              : std::to_string(k) + "_" + std::to_string(replica) + ".png";
            const fs::path rel = fs::path("synthetic") / path_safe(class_name(cls)) / name;
            write_file_atomic(layout_.root / rel, result.image);
            lines[job] = {{"class_id", cls},
                          {"center_index", k},
                          {"replica", replica},
                          {"path", rel.generic_string()},
                          {"image_sha256", sha256_hex(result.image)},
                          {"prompt_kind", config_.modules.dpg ? "text_prototype" : "class_label"}};
        });
        write_file_atomic(layout_.synthetic_manifest(), join_json_lines(lines));
    }

    json build_report() const {
        json report;
        report["config"] = to_json(config_);
        report["seed"] = config_.seed;
        report["uncited_defaults"] = {{"temperature", config_.temperature},
                                      {"noise_strength", config_.noise_strength},
                                      {"num_steps", config_.num_steps},
                                      {"guidance_scale", config_.guidance_scale},
                                      {"kmeans", to_json(config_)["kmeans"]}};
        json warnings = json::array();
        const json summary = json::parse(read_text_file(layout_.buffer_summary()));
        for (const auto& c : summary.at("classes")) {
            if (c.at("clamped").get<bool>())
                warnings.push_back("class " + class_name(c.at("class_id").get<ClassId>()) + " has " +
                                   std::to_string(c.at("population").get<std::size_t>()) + " members < ipc " +
                                   std::to_string(c.at("requested_k").get<std::size_t>()) + "; K clamped to " +
                                   std::to_string(c.at("k").get<std::size_t>()));
        }
        report["clusters"] = summary.at("classes");
        report["warnings"] = warnings;

        const auto protos = read_json_lines(layout_.prototype_manifest());
        std::size_t fallbacks = 0;
        double radius_sum = 0.0;
        for (const auto& p : protos) {
            fallbacks += p.at("fallback").get<bool>() ? 1 : 0;
            radius_sum += p.at("radius").get<double>();
        }
        report["prototypes"] = {{"count", protos.size()},
                                {"fallback_count", fallbacks},
                                {"mean_radius", protos.empty() ? 0.0 : radius_sum / static_cast<double>(protos.size())}};
        report["synthetic"] = {{"count", read_json_lines(layout_.synthetic_manifest()).size()},
                               {"layout", "synthetic/<class_name>/<center>.png"}};
        report["metrics"] = to_json(run_metrics(layout_.root));
        return report;
    }

    PipelineConfig config_;
    Services services_;
    Logger log_;
    RunLayout layout_;
    json timings_;
};

inline json run(const PipelineConfig& config, const ServiceOverrides& overrides = {}, Pipeline::Logger log = {}) {
    Pipeline p(config, make_services(config, overrides), std::move(log));
    return p.run();
}

}  // namespace edits::pipeline
