// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Tolerances and time limits are fixed here.

#include <chrono>
#include <cstdio>
#include <functional>
#include <sstream>

#include "edits/edits.hpp"
#include "support/constructed_corpus.hpp"
#include "support/oracles.hpp"
#include "support/pipeline_fixtures.hpp"
#include "support/tempdir.hpp"

using namespace edits;
using edits::testing::TempDir;

namespace {

struct Outcome {
    bool ok = true;
    std::string detail;
};

/// Records the first failed condition of a check.
class Check {
public:
    void require(bool cond, const std::string& what) {
        if (!cond && ok_) {
            ok_ = false;
            first_failure_ = what;
        }
    }
    bool ok() const noexcept { return ok_; }
    Outcome done(std::string detail) const { return {ok_, ok_ ? std::move(detail) : first_failure_}; }

private:
    bool ok_ = true;
    std::string first_failure_;
};

std::string fmt(double v) {
    std::ostringstream s;
    s.precision(4);
    s << v;
    return s.str();
}

Outcome influence_softmax() {
    Check chk;
    Rng rng(101);
    double worst_sum = 0.0, worst_shift = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + rng.below(64), d = 1 + rng.below(16);
        const MatrixD f_v = oracle::random_matrix(rng, n, d);
        MatrixD f_tau = oracle::random_matrix(rng, n, d);
        const double t = rng.uniform(0.02, 2.0);
        const auto s = gsq::influence_matrix(f_v, f_tau, t);
        for (std::size_t i = 0; i < n; ++i) {
            double sum = 0.0;
            for (double v : s.row(i)) {
                chk.require(v > 0.0 && std::isfinite(v), "non-positive influence entry");
                sum += v;
            }
            worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
        }
        // a constant w added to every caption shifts row i's logits by <f_v^i, w>
        std::vector<double> w(d);
        for (double& x : w) x = rng.uniform(-2, 2);
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t c = 0; c < d; ++c) f_tau(j, c) += w[c];
        const auto shifted = gsq::influence_matrix(f_v, f_tau, t);
        for (std::size_t k = 0; k < n * n; ++k)
            worst_shift = std::max(worst_shift, std::abs(s.values().values()[k] - shifted.values().values()[k]));

        // temperature limits on one row with a unique max and gap >= 0.1
        MatrixD logits(n, 1);
        for (std::size_t j = 0; j < n; ++j) logits(j, 0) = 0.1 * static_cast<double>(j) + rng.uniform(0, 1e-3);
        if (n >= 2) {
            MatrixD probe(n, 1, 1.0);
            const auto cold = gsq::influence_matrix(probe, logits, 1e-4);
            chk.require(cold(0, n - 1) >= 1.0 - 1e-6, "argmax weight below 1-1e-6 at T=1e-4");
        }
        MatrixD probe(n, 1, 1.0);
        const auto hot = gsq::influence_matrix(probe, logits, 1e6);
        for (double v : hot.row(0))
            chk.require(std::abs(v - 1.0 / static_cast<double>(n)) <= 1e-6, "entry differs from 1/N by >1e-6 at T=1e6");
    }
    chk.require(worst_sum <= 1e-6, "row sum off by " + fmt(worst_sum));
    chk.require(worst_shift <= 1e-9, "shift changed a row by " + fmt(worst_shift));
    return chk.done("200 instances, max |row sum - 1| = " + fmt(worst_sum) + ", max shift delta = " + fmt(worst_shift));
}

Outcome fusion() {
    Check chk;
    Rng rng(202);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + rng.below(64), dt = 1 + rng.below(12), dv = 1 + rng.below(12);
        const MatrixD agg = oracle::random_matrix(rng, n, dt);
        const MatrixD f_v = oracle::random_matrix(rng, n, dv, -100, 100);
        const MatrixD h = gsq::fuse(agg, f_v);
        chk.require(h.rows() == n && h.cols() == dt + dv, "fused dim is not d_tau + d_v");
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < dv; ++c) chk.require(h(i, dt + c) == f_v(i, c), "visual block not bit-exact");

        const std::size_t d = 1 + rng.below(12);
        const MatrixD v = oracle::random_matrix(rng, n, d), t = oracle::random_matrix(rng, n, d);
        gsq::Options opt;
        opt.temperature = rng.uniform(0.05, 1.0);
        opt.block_size = 1 + rng.below(16);
        const MatrixD blocked = gsq::fused_matrix(v, t, opt);
        const auto dense = oracle::dense_fusion(v, t, opt.temperature);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < 2 * d; ++c) worst = std::max(worst, std::abs(blocked(i, c) - dense[i][c]));
    }
    chk.require(worst <= 1e-9, "blocked vs dense differs by " + fmt(worst));
    return chk.done("100 instances, visual block bit-exact, max blocked-vs-dense delta = " + fmt(worst));
}

Outcome kmeans_oracle() {
    Check chk;
    Rng rng(303);
    int hits = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t k = 1 + rng.below(3);
        const std::size_t m = k + rng.below(11 - k);
        const std::size_t d = 1 + rng.below(2);
        const MatrixD pts = oracle::random_matrix(rng, m, d, -10, 10);
        cluster::KMeansParams p;
        p.restarts = 20;
        const auto res = cluster::kmeans(pts, k, rng.next(), p);
        if (std::abs(res.sse - oracle::brute_force_sse(pts, k)) <= 1e-9) ++hits;
        for (const auto& trace : res.sse_history)
            for (std::size_t i = 1; i < trace.size(); ++i)
                chk.require(trace[i] <= trace[i - 1] + 1e-12 * std::max(1.0, trace[i - 1]), "SSE increased in a Lloyd iteration");
    }
    chk.require(hits >= 95, "only " + std::to_string(hits) + "/100 instances reach the optimum");
    return chk.done(std::to_string(hits) + "/100 match brute-force optimum, SSE monotone");
}

Outcome awareness_selection() {
    Check chk;
    Rng rng(404);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = 1 + rng.below(200);
        std::vector<cluster::Member> members;
        std::vector<SampleId> ids(n);
        std::iota(ids.begin(), ids.end(), 0);
        for (std::size_t i = n - 1; i > 0; --i) std::swap(ids[i], ids[rng.below(i + 1)]);
        for (std::size_t i = 0; i < n; ++i) members.push_back({ids[i], std::round(rng.uniform(0, 5) * 4.0) / 4.0});
        cluster::ClusterBuffer b;
        b.centers = MatrixD(1, 1, 0.0);
        b.members = {members};
        const std::size_t cap = 1 + rng.below(10);
        const auto set = lsa::select_awareness_set(b, 0, cap);

        std::vector<cluster::Member> pool = members, expect;
        while (expect.size() < std::min(cap, n)) {
            std::size_t best = 0;
            for (std::size_t i = 1; i < pool.size(); ++i)
                if (pool[i].distance < pool[best].distance ||
                    (pool[i].distance == pool[best].distance && pool[i].sample_id < pool[best].sample_id))
                    best = i;
            expect.push_back(pool[best]);
            pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(best));
        }
        chk.require(set.members == expect, "selection differs from brute-force k-NN");
        for (const auto& ex : pool) chk.require(set.radius() <= ex.distance, "excluded member inside the radius");
    }
    return chk.done("100 instances equal brute-force k-NN with id tie-break; radius consistent");
}

Outcome image_prototype_properties() {
    Check chk;
    Rng rng(505);
    double worst_perm = 0, worst_hom = 0, worst_mean = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const LatentShape shape{4, 8, 8};
        std::vector<Tensor<double>> ls;
        const std::size_t n = 1 + rng.below(6);
        for (std::size_t m = 0; m < n; ++m) {
            Tensor<double> t(shape);
            for (double& v : t.data) v = rng.normal();
            ls.push_back(t);
        }
        const auto p = lsa::image_prototype(ls);
        auto perm = ls;
        for (std::size_t i = perm.size() - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
        const auto q = lsa::image_prototype(perm);
        const double alpha = rng.uniform(-4, 4);
        auto scaled = ls;
        for (auto& t : scaled)
            for (double& v : t.data) v *= alpha;
        const auto s = lsa::image_prototype(scaled);
        for (std::size_t i = 0; i < p.data.size(); ++i) {
            worst_perm = std::max(worst_perm, std::abs(p.data[i] - q.data[i]));
            worst_hom = std::max(worst_hom, std::abs(s.data[i] - alpha * p.data[i]));
        }

        std::vector<Latent> fl;
        for (std::size_t m = 0; m < 3; ++m) fl.push_back(clients::gaussian_latent(rng.next(), shape));
        const Latent mean = lsa::image_prototype(fl);
        // oracle mean in double, emitted at the float32 storage precision
        for (std::size_t i = 0; i < mean.data.size(); ++i) {
            const double o = (static_cast<double>(fl[0].data[i]) + fl[1].data[i] + fl[2].data[i]) / 3.0;
            worst_mean = std::max(worst_mean, std::abs(static_cast<double>(mean.data[i]) - static_cast<float>(o)));
        }
        // with double storage the tolerance bounds the arithmetic itself
        const std::vector<Tensor<double>> dl(ls.begin(), ls.begin() + std::min<std::size_t>(3, ls.size()));
        const auto dmean = lsa::image_prototype(dl);
        for (std::size_t i = 0; i < dmean.data.size(); ++i) {
            double o = 0.0;
            for (const auto& t : dl) o += t.data[i];
            worst_mean = std::max(worst_mean, std::abs(dmean.data[i] - o / static_cast<double>(dl.size())));
        }
        chk.require(lsa::image_prototype(std::vector<Latent>{fl[0]}) == fl[0], "singleton prototype is not identity");
    }
    chk.require(worst_perm <= 1e-9, "permutation delta " + fmt(worst_perm));
    chk.require(worst_hom <= 1e-9, "homogeneity delta " + fmt(worst_hom));
    chk.require(worst_mean <= 1e-7, "mean delta " + fmt(worst_mean));
    return chk.done("perm " + fmt(worst_perm) + ", homogeneity " + fmt(worst_hom) + ", mean " + fmt(worst_mean));
}

Outcome prompt_fidelity() {
    Check chk;
    const std::string cap = prompts::build_caption_prompt("beagle");
    chk.require(cap.rfind("Generate an extremely detailed and vivid caption for this image beagle", 0) == 0,
                "caption prompt opening differs");
    chk.require(cap.find("{CLASS}") == std::string::npos, "caption prompt left {CLASS} unsubstituted");
    const std::string sum = prompts::build_summarization_prompt({"first caption", "second caption"}, "beagle");
    const std::string expected =
        "Please analyze the following 2 texts and generate a high-quality representative prototype text.\n"
        "## Input Texts:\n"
        "[1] first caption\n"
        "[2] second caption\n"
        "## Output Requirements:\n"
        "1. Extract semantic content directly related to label beagle in each text.\n"
        "2. Merge unique information and expressions from each text.\n"
        "3. Fluent language, accurate information and clear structure.\n";
    chk.require(sum == expected, "summarization prompt differs from the template");
    chk.require(prompts::build_summarization_prompt({"x"}, "c").find("following 1 texts") != std::string::npos,
                "literal count substitution");
    return chk.done("caption and summarization templates byte-exact");
}

Outcome end_to_end_determinism() {
    Check chk;
    TempDir dir;
    pipeline::PipelineConfig a = edits::testing::toy_config(dir.path(), 3, 60, 4);
    a.workers = 1;
    a.output_dir = dir / "first";
    pipeline::PipelineConfig b = a;
    b.output_dir = dir / "second";
    b.cache_dir = dir / "second-cache";
    const json ra = pipeline::run(a);
    pipeline::run(b);
    chk.require(ra["prototypes"]["count"] == 12, "prototype count " + ra["prototypes"]["count"].dump());
    chk.require(ra["synthetic"]["count"] == 12, "synthetic count " + ra["synthetic"]["count"].dump());
    std::size_t pngs = 0;
    for (const auto& e : fs::recursive_directory_iterator(a.output_dir / "synthetic"))
        if (e.path().extension() == ".png") ++pngs;
    chk.require(pngs == 12, std::to_string(pngs) + " synthetic images on disk");
    const auto diff = edits::testing::differing_files(edits::testing::snapshot(a.output_dir),
                                                      edits::testing::snapshot(b.output_dir));
    chk.require(diff.empty(), diff.empty() ? "" : "runs differ in " + diff.front());
    return chk.done("12 prototypes, 12 images, runs byte-identical");
}

Outcome semantic_purity_gap() {
    Check chk;
    TempDir dir;
    const auto cc = edits::testing::make_constructed_corpus(dir / "corpus");
    pipeline::PipelineConfig cfg;
    cfg.corpus = cc.corpus;
    cfg.output_dir = dir / "out";
    cfg.ipc = 4;
    cfg.mock = true;
    pipeline::ServiceOverrides ov;
    ov.transports["embed"] = cc.embed;
    const json result = pipeline::ablate(cfg, {"gsq"}, ov);
    const double full = result["variants"][0]["metrics"]["purity"].get<double>();
    const double visual = result["variants"][1]["metrics"]["purity"].get<double>();
    chk.require(full - visual >= 0.1, "purity gap " + fmt(full - visual) + " (full " + fmt(full) + ", no query " + fmt(visual) + ")");
    return chk.done("purity full " + fmt(full) + " vs visual-only " + fmt(visual));
}

Outcome resume_and_cache() {
    Check chk;
    TempDir dir;
    pipeline::PipelineConfig ref = edits::testing::toy_config(dir.path(), 3, 30, 4);
    ref.output_dir = dir / "uninterrupted";
    ref.cache_dir = dir / "cache-a";
    pipeline::run(ref);

    pipeline::PipelineConfig cut = ref;
    cut.output_dir = dir / "interrupted";
    cut.cache_dir = dir / "cache-b";
    cut.stop_after = "cluster";
    pipeline::run(cut);
    cut.stop_after.clear();
    pipeline::run(cut);
    const auto diff =
        edits::testing::differing_files(edits::testing::snapshot(ref.output_dir), edits::testing::snapshot(cut.output_dir));
    chk.require(diff.empty(), diff.empty() ? "" : "resumed run differs in " + diff.front());

    pipeline::PipelineConfig warm = ref;
    warm.output_dir = dir / "warm";
    pipeline::Pipeline p(warm, pipeline::make_services(warm));
    p.run();
    std::size_t calls = 0;
    for (const auto& [name, t] : p.services().transports)
        calls += t->total() - t->count("handshake");
    chk.require(calls == 0, std::to_string(calls) + " transport operations despite a warm cache");
    return chk.done("resume byte-identical; warm-cache run made 0 service calls");
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        double limit_s;  // 0: no limit
        std::function<Outcome()> fn;
    };
    const Criterion criteria[] = {
        {"1 influence softmax", 5.0, influence_softmax},
        {"2 visual-textual fusion", 0.0, fusion},
        {"3 k-means optimality", 30.0, kmeans_oracle},
        {"4 awareness selection", 0.0, awareness_selection},
        {"5 image prototype", 0.0, image_prototype_properties},
        {"6 prompt fidelity", 0.0, prompt_fidelity},
        {"7 end-to-end determinism", 60.0, end_to_end_determinism},
        {"8 semantic purity gap", 0.0, semantic_purity_gap},
        {"9 resume and cache", 0.0, resume_and_cache},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = c.fn();
        } catch (const std::exception& e) {
            out = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (c.limit_s > 0.0 && secs >= c.limit_s) {
            out.ok = false;
            out.detail += "; took " + fmt(secs) + " s, limit " + fmt(c.limit_s) + " s";
        }
        std::printf("[%s] %-26s %s (%.2f s)\n", out.ok ? "PASS" : "FAIL", c.name, out.detail.c_str(), secs);
        failures += out.ok ? 0 : 1;
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(std::size(criteria)) - failures, std::size(criteria));
    return failures == 0 ? 0 : 1;
}
