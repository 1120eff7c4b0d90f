#pragma once

// Per-class K-means over fused features: Lloyd iterations from k-means++
// seeding, several restarts, best SSE wins. The result is the prior buffer
// that awareness selection draws from.

#include <algorithm>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "edits/core/edb.hpp"
#include "edits/core/manifest.hpp"
#include "edits/core/rng.hpp"
#include "edits/core/types.hpp"

namespace edits::cluster {

enum class Init { kmeans_plus_plus, random };

struct KMeansParams {
    std::size_t max_iter = 300;
    double tol = 1e-6;
    std::size_t restarts = 10;
    Init init = Init::kmeans_plus_plus;
};

struct KMeansResult {
    MatrixD centers;
    std::vector<std::size_t> assignment;
    double sse = 0.0;
    std::size_t best_restart = 0;
    /// SSE after every Lloyd iteration, one trace per restart. The last entry
    /// of each trace is the SSE of the final reassignment.
    std::vector<std::vector<double>> sse_history;
};

/// Index and squared distance of the nearest center; ties go to the lowest index.
inline std::pair<std::size_t, double> nearest_center(std::span<const double> point, const MatrixD& centers) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < centers.rows(); ++k) {
        const double d = squared_distance(point, centers.row(k));
        if (d < best_d) {
            best_d = d;
            best = k;
        }
    }
    return {best, best_d};
}

struct LloydState {
    MatrixD centers;
    std::vector<std::size_t> assignment;
};

inline double assign_all(const MatrixD& points, LloydState& state) {
    state.assignment.resize(points.rows());
    double sse = 0.0;
    for (std::size_t i = 0; i < points.rows(); ++i) {
        const auto [k, d] = nearest_center(points.row(i), state.centers);
        state.assignment[i] = k;
        sse += d;
    }
    return sse;
}

inline double state_sse(const MatrixD& points, const LloydState& state) {
    double sse = 0.0;
    for (std::size_t i = 0; i < points.rows(); ++i)
        sse += squared_distance(points.row(i), state.centers.row(state.assignment[i]));
    return sse;
}

/// Farthest-point reseeding: each empty center jumps to the point that is
/// farthest from its own center, and that point joins it. Returns the number
/// of centers moved; a state without empty clusters is left untouched.
inline std::size_t reseed_empty_clusters(const MatrixD& points, LloydState& state) {
    const std::size_t k_count = state.centers.rows();
    std::vector<std::size_t> counts(k_count, 0);
    for (const auto a : state.assignment) ++counts[a];
    std::size_t moved = 0;
    for (std::size_t k = 0; k < k_count; ++k) {
        if (counts[k] != 0) continue;
        std::size_t far = points.rows();
        double far_d = 0.0;
        for (std::size_t i = 0; i < points.rows(); ++i) {
            if (counts[state.assignment[i]] <= 1) continue;
            const double d = squared_distance(points.row(i), state.centers.row(state.assignment[i]));
            if (d > far_d) {
                far_d = d;
                far = i;
            }
        }
        if (far == points.rows()) continue;  // every point coincides with its center
        --counts[state.assignment[far]];
        state.assignment[far] = k;
        counts[k] = 1;
        std::copy(points.row(far).begin(), points.row(far).end(), state.centers.row(k).begin());
        ++moved;
    }
    return moved;
}

inline MatrixD init_centers(const MatrixD& points, std::size_t k_count, Init init, Rng& rng) {
    const std::size_t m = points.rows();
    MatrixD centers(k_count, points.cols());
    auto take = [&](std::size_t k, std::size_t i) {
        std::copy(points.row(i).begin(), points.row(i).end(), centers.row(k).begin());
    };
    if (init == Init::random) {
        std::vector<std::size_t> idx(m);
        for (std::size_t i = 0; i < m; ++i) idx[i] = i;
        for (std::size_t k = 0; k < k_count; ++k) {
            std::swap(idx[k], idx[k + rng.below(m - k)]);
            take(k, idx[k]);
        }
        return centers;
    }
    take(0, rng.below(m));
    std::vector<double> d2(m, std::numeric_limits<double>::infinity());
    for (std::size_t k = 1; k < k_count; ++k) {
        double total = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            d2[i] = std::min(d2[i], squared_distance(points.row(i), centers.row(k - 1)));
            total += d2[i];
        }
        std::size_t pick = m - 1;
        if (total > 0.0) {
            double target = rng.uniform() * total;
            for (std::size_t i = 0; i < m; ++i) {
                target -= d2[i];
                if (target < 0.0) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = rng.below(m);
        }
        take(k, pick);
    }
    return centers;
}

namespace detail {

inline MatrixD cluster_means(const MatrixD& points, const LloydState& state) {
    const std::size_t k_count = state.centers.rows();
    MatrixD sums(k_count, points.cols());
    std::vector<std::size_t> counts(k_count, 0);
    for (std::size_t i = 0; i < points.rows(); ++i) {
        auto dst = sums.row(state.assignment[i]);
        const auto src = points.row(i);
        for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
        ++counts[state.assignment[i]];
    }
    for (std::size_t k = 0; k < k_count; ++k) {
        auto row = sums.row(k);
        if (counts[k] == 0) {
            std::copy(state.centers.row(k).begin(), state.centers.row(k).end(), row.begin());
            continue;
        }
        for (double& v : row) v /= static_cast<double>(counts[k]);
    }
    return sums;
}

}  // namespace detail

inline KMeansResult kmeans(const MatrixD& points, std::size_t k_count, std::uint64_t seed,
                           const KMeansParams& params = {}) {
    if (k_count == 0) throw Error(ErrorCode::invalid_argument, "K must be >= 1");
    if (points.rows() < k_count)
        throw Error(ErrorCode::invalid_argument,
                    "need M >= K (M=" + std::to_string(points.rows()) + ", K=" + std::to_string(k_count) + ")");
    if (!all_finite(points.values())) throw Error(ErrorCode::non_finite, "kmeans input has non-finite entries");

    KMeansResult best;
    best.sse = std::numeric_limits<double>::infinity();
    const std::size_t restarts = std::max<std::size_t>(1, params.restarts);
    for (std::size_t r = 0; r < restarts; ++r) {
        Rng rng(derive_seed(seed, r));
        LloydState state{init_centers(points, k_count, params.init, rng), {}};
        std::vector<double> trace;
        for (std::size_t it = 0; it < params.max_iter; ++it) {
            assign_all(points, state);
            reseed_empty_clusters(points, state);
            trace.push_back(state_sse(points, state));
            MatrixD next = detail::cluster_means(points, state);
            double shift = 0.0;
            for (std::size_t k = 0; k < k_count; ++k)
                shift = std::max(shift, std::sqrt(squared_distance(next.row(k), state.centers.row(k))));
            state.centers = std::move(next);
            if (shift < params.tol) break;
        }
        const double sse = assign_all(points, state);
        trace.push_back(sse);
        best.sse_history.push_back(std::move(trace));
        if (sse < best.sse) {
            best.sse = sse;
            best.centers = state.centers;
            best.assignment = state.assignment;
            best.best_restart = r;
        }
    }
    return best;
}

struct Member {
    SampleId sample_id = 0;
    double distance = 0.0;  // Euclidean, fused space

    bool operator==(const Member&) const = default;
};

/// Orders members by ascending distance, then ascending sample_id.
inline bool member_less(const Member& a, const Member& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.sample_id < b.sample_id;
}

struct ClusterBuffer {
    ClassId class_id = 0;
    MatrixD centers;
    std::map<SampleId, std::size_t> assignment;
    /// members[k] sorted by member_less.
    std::vector<std::vector<Member>> members;
    double sse = 0.0;
    std::size_t requested_k = 0;
    std::size_t population = 0;

    std::size_t k() const noexcept { return centers.rows(); }
    bool clamped() const noexcept { return k() < requested_k; }
};

/// Cluster one class. `features` rows correspond to `ids`.
inline ClusterBuffer cluster_class(ClassId class_id, std::span<const SampleId> ids, const MatrixD& features,
                                   std::size_t ipc, std::uint64_t seed, const KMeansParams& params) {
    if (ids.empty()) throw Error(ErrorCode::empty_input, "class " + std::to_string(class_id) + " has no members");
    if (ids.size() != features.rows()) throw Error(ErrorCode::shape_mismatch, "ids/features row mismatch");
    ClusterBuffer buf;
    buf.class_id = class_id;
    buf.requested_k = ipc;
    buf.population = ids.size();
    const std::size_t k_count = std::min(ipc, ids.size());
    KMeansResult res = kmeans(features, k_count, derive_seed(seed, static_cast<std::uint64_t>(class_id)), params);
    buf.centers = std::move(res.centers);
    buf.sse = res.sse;
    buf.members.assign(k_count, {});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const std::size_t k = res.assignment[i];
        buf.assignment[ids[i]] = k;
        buf.members[k].push_back({ids[i], std::sqrt(squared_distance(features.row(i), buf.centers.row(k)))});
    }
    for (auto& list : buf.members) std::sort(list.begin(), list.end(), member_less);
    return buf;
}

/// One buffer per class present in `corpus`, ordered by class_id. `features`
/// row i belongs to corpus[i].
inline std::vector<ClusterBuffer> build_buffers(const Corpus& corpus, const MatrixD& features, std::size_t ipc,
                                                std::uint64_t seed, const KMeansParams& params = {}) {
    if (ipc == 0) throw Error(ErrorCode::invalid_argument, "ipc must be >= 1");
    if (features.rows() != corpus.size()) throw Error(ErrorCode::shape_mismatch, "features/corpus row mismatch");
    std::map<ClassId, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < corpus.size(); ++i) groups[corpus[i].class_id].push_back(i);
    std::vector<ClusterBuffer> out;
    for (const auto& [cls, idx] : groups) {
        MatrixD pts(idx.size(), features.cols());
        std::vector<SampleId> ids;
        for (std::size_t r = 0; r < idx.size(); ++r) {
            std::copy(features.row(idx[r]).begin(), features.row(idx[r]).end(), pts.row(r).begin());
            ids.push_back(corpus[idx[r]].sample_id);
        }
        out.push_back(cluster_class(cls, ids, pts, ipc, seed, params));
    }
    return out;
}

/// Buffers from the fused vectors h of every record.
inline std::vector<ClusterBuffer> build_buffers(const Corpus& corpus, std::size_t ipc, std::uint64_t seed,
                                                const KMeansParams& params = {}) {
    if (corpus.empty()) return {};
    const std::size_t d = corpus.front().h.size();
    MatrixD features(corpus.size(), d);
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        if (corpus[i].h.empty() || corpus[i].h.size() != d)
            throw Error(ErrorCode::invalid_argument, "sample_id " + std::to_string(corpus[i].sample_id) +
                                                         " has no fused vector h");
        std::copy(corpus[i].h.begin(), corpus[i].h.end(), features.row(i).begin());
    }
    return build_buffers(corpus, features, ipc, seed, params);
}

// --- persistence: <dir>/class_<id>.jsonl (members) + <dir>/centers_<id>.edb

inline fs::path buffer_members_path(const fs::path& dir, ClassId c) {
    return dir / ("class_" + std::to_string(c) + ".jsonl");
}
inline fs::path buffer_centers_path(const fs::path& dir, ClassId c) {
    return dir / ("centers_" + std::to_string(c) + ".edb");
}

inline json buffer_summary(const ClusterBuffer& b) {
    return {{"class_id", b.class_id}, {"k", b.k()},          {"requested_k", b.requested_k},
            {"population", b.population}, {"sse", b.sse}, {"clamped", b.clamped()}};
}

inline void write_buffer(const fs::path& dir, const ClusterBuffer& b) {
    std::string text;
    for (std::size_t k = 0; k < b.members.size(); ++k)
        for (const auto& m : b.members[k])
            text += json{{"sample_id", m.sample_id}, {"center", k}, {"distance", m.distance}}.dump() + "\n";
    write_file_atomic(buffer_members_path(dir, b.class_id), text);
    write_embedding_block(b.centers, buffer_centers_path(dir, b.class_id));
}

/// Reads a buffer back. Centers come back at binary32 precision; member
/// distances are exact.
inline ClusterBuffer read_buffer(const fs::path& dir, const json& summary) {
    ClusterBuffer b;
    b.class_id = summary.at("class_id").get<ClassId>();
    b.requested_k = summary.at("requested_k").get<std::size_t>();
    b.population = summary.at("population").get<std::size_t>();
    b.sse = summary.at("sse").get<double>();
    b.centers = read_embedding_block(buffer_centers_path(dir, b.class_id)).cast<double>();
    b.members.assign(b.centers.rows(), {});
    std::istringstream in(read_text_file(buffer_members_path(dir, b.class_id)));
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line);
        const auto k = j.at("center").get<std::size_t>();
        if (k >= b.members.size()) throw Error(ErrorCode::io, "buffer member references center " + std::to_string(k));
        const Member m{j.at("sample_id").get<SampleId>(), j.at("distance").get<double>()};
        b.members[k].push_back(m);
        b.assignment[m.sample_id] = k;
    }
    for (auto& list : b.members) std::sort(list.begin(), list.end(), member_less);
    return b;
}

}  // namespace edits::cluster
