#include <sys/wait.h>

#include <cstdlib>
#include <thread>

#include <gtest/gtest.h>

#include "edits/pipeline/ablate.hpp"
#include "support/constructed_corpus.hpp"
#include "support/oracles.hpp"
#include "support/pipeline_fixtures.hpp"
#include "support/stub_transport.hpp"
#include "support/tempdir.hpp"

using namespace edits;
using namespace edits::pipeline;
using edits::testing::differing_files;
using edits::testing::snapshot;
using edits::testing::stable_report;
using edits::testing::TempDir;
using edits::testing::toy_config;

namespace {

std::size_t count_pngs(const fs::path& dir) {
    std::size_t n = 0;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".png") ++n;
    return n;
}

const std::vector<std::string> kCachedMethods = {"caption", "embed", "summarize", "vae_encode", "vae_decode", "generate"};

std::size_t cached_method_calls(const Services& s) {
    std::size_t n = 0;
    for (const auto& [name, t] : s.transports)
        for (const auto& m : kCachedMethods) n += t->count(m);
    return n;
}

}  // namespace

TEST(Pipeline, ToyCorpusCounts) {
    TempDir dir;
    const PipelineConfig cfg = toy_config(dir.path());
    const json report = run(cfg);
    EXPECT_EQ(report["prototypes"]["count"], 12);
    EXPECT_EQ(report["synthetic"]["count"], 12);
    EXPECT_EQ(count_pngs(cfg.output_dir / "synthetic"), 12u);
    for (const auto& name : cfg.corpus.classes)
        for (int k = 0; k < 4; ++k) EXPECT_TRUE(fs::exists(cfg.output_dir / "synthetic" / name / (std::to_string(k) + ".png")));
    EXPECT_EQ(report["prototypes"]["fallback_count"], 12);  // offline summarizer
    EXPECT_TRUE(report["warnings"].empty());
    EXPECT_EQ(report["seed"], 3);
    EXPECT_EQ(report["config"]["temperature"], 0.07);
    const double purity = report["metrics"]["purity"].get<double>();
    EXPECT_GE(purity, 0.0);
    EXPECT_LE(purity, 1.0);
    EXPECT_GE(report["metrics"]["dispersion_ratio"].get<double>(), 0.0);
}

TEST(Pipeline, RerunSkipsEverything) {
    TempDir dir;
    const PipelineConfig cfg = toy_config(dir.path());
    const json first = run(cfg);
    const auto files = snapshot(cfg.output_dir);

    Pipeline again(cfg, make_services(cfg));
    const json second = again.run();
    for (const auto& stage : {"caption", "embed", "fuse", "cluster", "lsa", "generate"})
        EXPECT_EQ(second["timings"][stage]["status"], "skipped") << stage;
    EXPECT_EQ(stable_report(first), stable_report(second));
    EXPECT_EQ(differing_files(snapshot(cfg.output_dir), files), std::vector<std::string>{});
    EXPECT_EQ(cached_method_calls(again.services()), 0u);
}

TEST(Pipeline, DeletedClusterArtifactsRerunDownstreamOnly) {
    TempDir dir;
    const PipelineConfig cfg = toy_config(dir.path());
    const json first = run(cfg);
    const auto before = snapshot(cfg.output_dir);
    fs::remove_all(cfg.output_dir / "buffers");

    const json second = run(cfg);
    for (const auto& stage : {"caption", "embed", "fuse"}) EXPECT_EQ(second["timings"][stage]["status"], "skipped");
    for (const auto& stage : {"cluster", "lsa", "generate"}) EXPECT_EQ(second["timings"][stage]["status"], "executed");
    EXPECT_EQ(differing_files(snapshot(cfg.output_dir), before), std::vector<std::string>{});
    EXPECT_EQ(stable_report(first), stable_report(second));
}

TEST(Pipeline, ChangedParameterRerunsDependentStages) {
    TempDir dir;
    PipelineConfig cfg = toy_config(dir.path());
    run(cfg);
    cfg.ipc = 3;
    const json report = run(cfg);
    for (const auto& stage : {"caption", "embed", "fuse"}) EXPECT_EQ(report["timings"][stage]["status"], "skipped");
    EXPECT_EQ(report["timings"]["cluster"]["status"], "executed");
    EXPECT_EQ(report["prototypes"]["count"], 9);
}

TEST(Pipeline, ResumeAfterEveryStageMatchesUninterrupted) {
    TempDir dir;
    PipelineConfig reference = toy_config(dir.path(), 3, 20, 3);
    reference.output_dir = dir / "reference";
    reference.cache_dir = dir / "ref-cache";
    const json ref_report = run(reference);
    const auto ref_files = snapshot(reference.output_dir);

    for (const auto& stage : stage_names()) {
        if (stage == "report") continue;
        PipelineConfig cfg = reference;
        cfg.output_dir = dir / ("resume-" + stage);
        cfg.cache_dir = dir / ("cache-" + stage);
        cfg.stop_after = stage;
        EXPECT_TRUE(run(cfg).is_null());
        EXPECT_TRUE(fs::exists(cfg.output_dir / ".stages" / (stage + ".done")));
        cfg.stop_after.clear();
        const json resumed = run(cfg);
        EXPECT_EQ(differing_files(snapshot(cfg.output_dir), ref_files), std::vector<std::string>{}) << "interrupted after " << stage;
        EXPECT_EQ(stable_report(resumed), stable_report(ref_report)) << stage;
    }
}

TEST(Pipeline, DeterministicAcrossRunsAndWorkerCounts) {
    TempDir dir;
    PipelineConfig a = toy_config(dir.path(), 3, 30, 4);
    a.output_dir = dir / "a";
    PipelineConfig b = a;
    b.output_dir = dir / "b";
    b.workers = 4;
    run(a);
    run(b);
    EXPECT_EQ(differing_files(snapshot(a.output_dir), snapshot(b.output_dir)), std::vector<std::string>{});
}

TEST(Pipeline, SharedCacheMeansNoRepeatedServiceCalls) {
    TempDir dir;
    PipelineConfig a = toy_config(dir.path(), 3, 20, 3);
    a.output_dir = dir / "a";
    a.cache_dir = dir / "shared-cache";
    PipelineConfig b = a;
    b.output_dir = dir / "b";
    Pipeline first(a, make_services(a));
    first.run();
    EXPECT_GT(cached_method_calls(first.services()), 0u);
    Pipeline second(b, make_services(b));
    second.run();
    EXPECT_EQ(cached_method_calls(second.services()), 0u);
    EXPECT_EQ(differing_files(snapshot(a.output_dir), snapshot(b.output_dir)), std::vector<std::string>{});
}

TEST(Pipeline, SmallClassIsClampedAndReported) {
    TempDir dir;
    PipelineConfig cfg = toy_config(dir.path(), 2, 10, 4);
    Corpus records = read_manifest(cfg.corpus.manifest);
    records.erase(std::remove_if(records.begin(), records.end(),
                                 [](const SampleRecord& r) { return r.class_id == 1 && r.sample_id > 11; }),
                  records.end());
    write_manifest(cfg.corpus.manifest, records);
    const json report = run(cfg);
    EXPECT_EQ(report["prototypes"]["count"], 6);  // 4 + min(4, 2)
    EXPECT_EQ(report["synthetic"]["count"], 6);
    ASSERT_EQ(report["warnings"].size(), 1u);
    EXPECT_NE(report["warnings"][0].get<std::string>().find("english_springer"), std::string::npos);
}

TEST(Pipeline, StageFailureNamesStageAndKeepsArtifacts) {
    TempDir dir;
    const PipelineConfig cfg = toy_config(dir.path(), 2, 5, 2);
    ServiceOverrides ov;
    ov.transports["embed"] = std::make_shared<edits::testing::FunctionTransport>([](std::string_view m, const json&) {
        if (m == "handshake") return json{{"dim", 8}};
        return clients::error_envelope("overloaded", "try later");
    });
    try {
        run(cfg, ov);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::stage_failure);
        EXPECT_EQ(std::string(e.what()).find("stage failure: stage embed:"), 0u) << e.what();
        EXPECT_NE(std::string(e.what()).find("overloaded"), std::string::npos);
    }
    EXPECT_TRUE(fs::exists(cfg.output_dir / "manifest.jsonl"));
    EXPECT_TRUE(fs::exists(cfg.output_dir / ".stages" / "caption.done"));
    EXPECT_FALSE(fs::exists(cfg.output_dir / ".stages" / "embed.done"));

    const json report = run(cfg);  // recovers with the working service
    EXPECT_EQ(report["timings"]["caption"]["status"], "skipped");
    EXPECT_EQ(report["prototypes"]["count"], 4);
}

TEST(Pipeline, InvalidConfig) {
    TempDir dir;
    PipelineConfig cfg = toy_config(dir.path(), 2, 5, 2);
    cfg.temperature = 0.0;
    EXPECT_THROW(run(cfg), Error);
    cfg = toy_config(dir.path(), 2, 5, 2);
    cfg.stop_after = "bogus";
    EXPECT_THROW(run(cfg), Error);
}

TEST(Config, JsonRoundTripAndRelativePaths) {
    PipelineConfig c;
    c.corpus.manifest = "data/manifest.jsonl";
    c.corpus.classes = {"a", "b"};
    c.output_dir = "out";
    c.ipc = 7;
    c.temperature = 0.5;
    c.kmeans.init = cluster::Init::random;
    c.modules.lsa = false;
    c.services.caption.base_url = "http://host:1/v1";
    c.services.caption.auth_env = "CAPTION_TOKEN";
    const PipelineConfig back = config_from_json(to_json(c), "/base");
    EXPECT_EQ(back.corpus.manifest, fs::path("/base/data/manifest.jsonl"));
    EXPECT_EQ(back.corpus.root, fs::path("/base/data"));
    EXPECT_EQ(back.output_dir, fs::path("/base/out"));
    EXPECT_EQ(back.ipc, 7u);
    EXPECT_EQ(back.temperature, 0.5);
    EXPECT_EQ(back.kmeans.init, cluster::Init::random);
    EXPECT_FALSE(back.modules.lsa);
    EXPECT_EQ(back.services.caption.auth_env, "CAPTION_TOKEN");
    EXPECT_THROW(config_from_json(json{{"kmeans", {{"init", "forgy"}}}}), Error);
}

TEST(Config, CacheDirEnvironmentOverride) {
    PipelineConfig c;
    c.output_dir = "/o";
    ::unsetenv("EDITS_CACHE_DIR");
    EXPECT_EQ(effective_cache_dir(c), fs::path("/o/cache"));
    c.cache_dir = "/c";
    EXPECT_EQ(effective_cache_dir(c), fs::path("/c"));
    ::setenv("EDITS_CACHE_DIR", "/env", 1);
    EXPECT_EQ(effective_cache_dir(c), fs::path("/env"));
    ::unsetenv("EDITS_CACHE_DIR");
}

TEST(Metrics, IdenticalPrototypesDegenerate) {
    const MatrixD protos = MatrixD::from_rows({{1.0, 1.0}, {1.0, 1.0}});
    const std::vector<ClassId> pc = {0, 1};
    Rng rng(1);
    const MatrixD samples = oracle::random_matrix(rng, 40, 2);
    std::vector<ClassId> sc(40);
    for (std::size_t i = 0; i < 40; ++i) sc[i] = static_cast<ClassId>(i % 2);
    const auto m = prototype_metrics(protos, pc, samples, sc);
    EXPECT_LE(m.purity, 0.5 + 1e-12);
    EXPECT_FALSE(m.dispersion_ratio.has_value());  // no intra-class pair
}

TEST(Metrics, SeparatedBlobsArePure) {
    Rng rng(2);
    const std::size_t classes = 3, per = 60;
    MatrixD samples(classes * per, 4);
    std::vector<ClassId> sc;
    MatrixD protos(classes * 2, 4, 0.0);
    std::vector<ClassId> pc;
    for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t i = 0; i < per; ++i) {
            for (std::size_t k = 0; k < 4; ++k) samples(c * per + i, k) = (k == c ? 10.0 : 0.0) + rng.normal();
            sc.push_back(static_cast<ClassId>(c));
        }
        for (std::size_t p = 0; p < 2; ++p) {
            protos(c * 2 + p, c) = 10.0 + (p ? 0.3 : -0.3);
            pc.push_back(static_cast<ClassId>(c));
        }
    }
    const auto m = prototype_metrics(protos, pc, samples, sc);
    EXPECT_EQ(m.purity, 1.0);
    ASSERT_TRUE(m.dispersion_ratio.has_value());
    EXPECT_GT(*m.dispersion_ratio, 10.0);

    // shuffled labels: purity falls to chance
    std::vector<ClassId> shuffled = sc;
    for (std::size_t i = shuffled.size() - 1; i > 0; --i) std::swap(shuffled[i], shuffled[rng.below(i + 1)]);
    const auto chance = prototype_metrics(protos, pc, samples, shuffled);
    EXPECT_NEAR(chance.purity, 1.0 / 3.0, 0.1);
}

TEST(Metrics, SingleClassHasNoDispersion) {
    const auto m = prototype_metrics(MatrixD::from_rows({{0.0}, {1.0}}), std::vector<ClassId>{0, 0},
                                     MatrixD::from_rows({{0.2}}), std::vector<ClassId>{0});
    EXPECT_FALSE(m.dispersion_ratio.has_value());
    EXPECT_EQ(m.purity, 1.0);
    EXPECT_EQ(to_json(m)["dispersion_ratio"], nullptr);
}

TEST(Metrics, RunDirMatchesReport) {
    TempDir dir;
    const PipelineConfig cfg = toy_config(dir.path(), 3, 20, 3);
    const json report = run(cfg);
    EXPECT_EQ(to_json(run_metrics(cfg.output_dir)), report["metrics"]);
}

TEST(Ablate, AxesParsing) {
    EXPECT_EQ(parse_axes("gsq,lsa"), (std::vector<std::string>{"gsq", "lsa"}));
    EXPECT_EQ(parse_axes("dpg,dpg"), (std::vector<std::string>{"dpg"}));
    EXPECT_THROW(parse_axes("gsq,foo"), Error);
    EXPECT_THROW(parse_axes(""), Error);
    EXPECT_EQ(variant_name({true, true, true}), "gsq+lsa+dpg");
    EXPECT_EQ(variant_name({false, false, false}), "none");
    EXPECT_EQ(variant_name({false, true, false}), "lsa");
}

TEST(Ablate, AllVariantsAndFullMatchesRun) {
    TempDir dir;
    PipelineConfig cfg = toy_config(dir.path(), 3, 20, 3);
    const json result = ablate(cfg, parse_axes("gsq,lsa,dpg"));
    ASSERT_EQ(result["variants"].size(), 8u);
    EXPECT_EQ(result["variants"][0]["variant"], "gsq+lsa+dpg");
    EXPECT_EQ(result["variants"][7]["variant"], "none");
    EXPECT_TRUE(fs::exists(cfg.output_dir / "ablation.json"));

    PipelineConfig plain = cfg;
    plain.output_dir = dir / "plain";
    EXPECT_EQ(run(plain)["metrics"], result["variants"][0]["metrics"]);

    // baseline: class-label prompts and no awareness sets
    const fs::path none = cfg.output_dir / "ablate" / "none";
    for (const auto& line : read_json_lines(none / "synthetic" / "manifest.jsonl"))
        EXPECT_EQ(line["prompt_kind"], "class_label");
    for (const auto& line : read_json_lines(none / "prototypes" / "manifest.jsonl"))
        EXPECT_EQ(line["provenance"].size(), 1u);
    // GSQ off clusters visual embeddings only
    EXPECT_EQ(read_embedding_block(none / "embeddings" / "features.edb").cols(), 64u);
    EXPECT_EQ(read_embedding_block(cfg.output_dir / "ablate" / "gsq+lsa+dpg" / "embeddings" / "features.edb").cols(), 128u);
}

TEST(Ablate, CaptionSemanticsImprovePurityOnConstructedCorpus) {
    TempDir dir;
    const auto cc = edits::testing::make_constructed_corpus(dir / "corpus");
    PipelineConfig cfg;
    cfg.corpus = cc.corpus;
    cfg.output_dir = dir / "out";
    cfg.ipc = 4;
    cfg.mock = true;
    ServiceOverrides ov;
    ov.transports["embed"] = cc.embed;
    const json result = ablate(cfg, {"gsq"}, ov);
    const double full = result["variants"][0]["metrics"]["purity"].get<double>();
    const double visual_only = result["variants"][1]["metrics"]["purity"].get<double>();
    EXPECT_EQ(result["variants"][1]["variant"], "lsa+dpg");
    EXPECT_GE(full, visual_only + 0.1) << full << " vs " << visual_only;
}

namespace {

/// The four mock services behind one HTTP server: POST /<service>/<method>.
class MockHttpServices {
public:
    MockHttpServices() {
        for (const auto& [name, kind] : {std::pair{"caption", clients::ServiceKind::caption},
                                         std::pair{"embed", clients::ServiceKind::embed},
                                         std::pair{"summarize", clients::ServiceKind::summarize},
                                         std::pair{"diffusion", clients::ServiceKind::diffusion}})
            mocks_[name] = std::make_shared<clients::MockTransport>(kind);
        server_.Post(R"(/(\w+)/(\w+))", [this](const httplib::Request& req, httplib::Response& res) {
            {
                std::lock_guard lock(mu_);
                auth_.insert(req.get_header_value("Authorization"));
            }
            const json out = mocks_.at(req.matches[1])->call(std::string(req.matches[2]), json::parse(req.body));
            res.set_content(out.dump(), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~MockHttpServices() {
        server_.stop();
        thread_.join();
    }
    std::string url(const std::string& service) const {
        return "http://127.0.0.1:" + std::to_string(port_) + "/" + service;
    }
    std::set<std::string> auth_headers() {
        std::lock_guard lock(mu_);
        return auth_;
    }

private:
    std::map<std::string, std::shared_ptr<clients::MockTransport>> mocks_;
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
    std::mutex mu_;
    std::set<std::string> auth_;
};

}  // namespace

TEST(Pipeline, SecretsNeverReachArtifactsLogsOrCache) {
    const std::string secret = "sk-live-0a1b2c3d4e5f60718293";
    ::setenv("EDITS_PIPELINE_TOKEN", secret.c_str(), 1);
    MockHttpServices services;
    TempDir dir;
    PipelineConfig cfg = toy_config(dir.path(), 2, 6, 2);
    cfg.mock = false;
    for (auto* ep : {&cfg.services.caption, &cfg.services.embed, &cfg.services.summarize, &cfg.services.diffusion})
        ep->auth_env = "EDITS_PIPELINE_TOKEN";
    cfg.services.caption.base_url = services.url("caption");
    cfg.services.embed.base_url = services.url("embed");
    cfg.services.summarize.base_url = services.url("summarize");
    cfg.services.diffusion.base_url = services.url("diffusion");
    std::string log;
    const json report = run(cfg, {}, [&](const std::string& m) { log += m + "\n"; });
    EXPECT_EQ(report["prototypes"]["count"], 4);
    EXPECT_EQ(services.auth_headers(), (std::set<std::string>{"Bearer " + secret}));

    EXPECT_EQ(log.find(secret), std::string::npos);
    std::size_t scanned = 0;
    for (const auto& e : fs::recursive_directory_iterator(cfg.output_dir)) {
        if (!e.is_regular_file()) continue;
        ++scanned;
        EXPECT_EQ(read_text_file(e.path()).find(secret), std::string::npos) << e.path();
        EXPECT_EQ(e.path().string().find(secret), std::string::npos);
    }
    EXPECT_GT(scanned, 20u);
    EXPECT_NE(read_text_file(cfg.output_dir / "report.json").find("EDITS_PIPELINE_TOKEN"), std::string::npos);
    ::unsetenv("EDITS_PIPELINE_TOKEN");
}

namespace {

int run_cli(const std::string& args) {
    const std::string cmd = std::string(EDITS_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Cli, ExitCodes) {
    TempDir dir;
    const std::string root = dir.path().string();
    ASSERT_EQ(run_cli("toy-corpus --out " + root + "/toy --classes 2 --per-class 8"), 0);
    const std::string config = root + "/toy/config.json";
    ASSERT_TRUE(fs::exists(config));

    EXPECT_EQ(run_cli("run --config " + config + " --stage embed"), 0);
    EXPECT_TRUE(fs::exists(dir / "toy" / "run" / "embeddings" / "visual.edb"));
    EXPECT_FALSE(fs::exists(dir / "toy" / "run" / "buffers"));
    EXPECT_EQ(run_cli("run --config " + config + " --ipc 3 --capacity 2 --seed 9"), 0);
    const json report = json::parse(read_text_file(dir / "toy" / "run" / "report.json"));
    EXPECT_EQ(report["prototypes"]["count"], 6);
    EXPECT_EQ(report["config"]["awareness_capacity"], 2);
    EXPECT_EQ(report["seed"], 9);
    EXPECT_EQ(run_cli("metrics " + root + "/toy/run"), 0);
    EXPECT_EQ(run_cli("ablate --config " + config + " --axis lsa"), 0);
    EXPECT_TRUE(fs::exists(dir / "toy" / "run" / "ablate" / "gsq+dpg" / "report.json"));

    // usage errors
    EXPECT_EQ(run_cli(""), 1);
    EXPECT_EQ(run_cli("run"), 1);
    EXPECT_EQ(run_cli("run --config " + root + "/missing.json"), 1);
    EXPECT_EQ(run_cli("run --config " + config + " --stage nonsense"), 1);
    EXPECT_EQ(run_cli("run --config " + config + " --temperature -1"), 1);
    EXPECT_EQ(run_cli("ablate --config " + config + " --axis gsq,foo"), 1);

    // stage failure: live services that cannot be reached
    json broken = json::parse(read_text_file(config));
    broken["mock"] = false;
    for (const auto& s : {"caption", "embed", "summarize", "diffusion"})
        broken["services"][s] = {{"base_url", "http://127.0.0.1:1"}, {"timeout_s", 1}, {"max_retries", 0}};
    broken["output_dir"] = "broken-run";
    write_file_atomic(dir / "toy" / "broken.json", broken.dump());
    EXPECT_EQ(run_cli("run --config " + root + "/toy/broken.json"), 2);
    EXPECT_EQ(run_cli("run --config " + root + "/toy/broken.json --mock"), 0);
}
