#pragma once

// Global semantic query: every image attends over every caption embedding
// with a temperature softmax on dot products, and the attended text vector is
// concatenated in front of the visual embedding.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>

#include "edits/core/types.hpp"

namespace edits::gsq {

/// Scale each row to unit Euclidean norm. `ids`, when given, names the
/// offending sample in the zero-row error.
inline MatrixD normalize_rows(const MatrixD& f, std::span<const SampleId> ids = {}) {
    MatrixD out = f;
    for (std::size_t i = 0; i < out.rows(); ++i) {
        auto row = out.row(i);
        double norm_sq = 0.0;
        for (const double v : row) norm_sq += v * v;
        const double norm = std::sqrt(norm_sq);
        if (!(norm > 0.0) || !std::isfinite(norm)) {
            const std::string who = i < ids.size() ? "sample_id " + std::to_string(ids[i]) : "row " + std::to_string(i);
            throw Error(ErrorCode::zero_row, who + " has zero (or non-finite) norm");
        }
        for (double& v : row) v /= norm;
    }
    return out;
}

/// Numerically stable softmax of one row of logits, in place.
inline void softmax_inplace(std::span<double> logits) {
    if (logits.empty()) return;
    const double peak = *std::max_element(logits.begin(), logits.end());
    double denom = 0.0;
    for (double& v : logits) {
        v = std::exp(v - peak);
        denom += v;
    }
    for (double& v : logits) v /= denom;
}

/// Row-stochastic N x N matrix of influence scores.
class InfluenceMatrix {
public:
    InfluenceMatrix() = default;
    explicit InfluenceMatrix(MatrixD values) : values_(std::move(values)) {}

    std::size_t rows() const noexcept { return values_.rows(); }
    std::size_t cols() const noexcept { return values_.cols(); }
    double operator()(std::size_t i, std::size_t j) const { return values_(i, j); }
    std::span<const double> row(std::size_t i) const { return values_.row(i); }
    const MatrixD& values() const noexcept { return values_; }

private:
    MatrixD values_;
};

namespace detail {

inline void check_influence_inputs(const MatrixD& f_v, const MatrixD& f_tau, double temperature) {
    if (!(temperature > 0.0) || !std::isfinite(temperature))
        throw Error(ErrorCode::invalid_argument, "temperature must be positive and finite");
    if (f_v.rows() == 0 || f_tau.rows() == 0) throw Error(ErrorCode::empty_input, "influence needs N >= 1");
    if (f_v.cols() != f_tau.cols())
        throw Error(ErrorCode::dimension_mismatch, "visual dim " + std::to_string(f_v.cols()) + " != text dim " +
                                                       std::to_string(f_tau.cols()));
}

}  // namespace detail

/// Influence rows [begin, end) of f_v against every row of f_tau.
inline MatrixD influence_block(const MatrixD& f_v, const MatrixD& f_tau, double temperature, std::size_t begin,
                               std::size_t end) {
    detail::check_influence_inputs(f_v, f_tau, temperature);
    end = std::min(end, f_v.rows());
    MatrixD block(end > begin ? end - begin : 0, f_tau.rows());
    for (std::size_t i = begin; i < end; ++i) {
        auto out = block.row(i - begin);
        const auto query = f_v.row(i);
        for (std::size_t j = 0; j < f_tau.rows(); ++j) out[j] = dot(query, f_tau.row(j)) / temperature;
        softmax_inplace(out);
    }
    return block;
}

inline InfluenceMatrix influence_matrix(const MatrixD& f_v, const MatrixD& f_tau, double temperature) {
    if (f_v.rows() != f_tau.rows())
        throw Error(ErrorCode::shape_mismatch, "influence needs one caption per image");
    return InfluenceMatrix(influence_block(f_v, f_tau, temperature, 0, f_v.rows()));
}

/// Row i = sum_j weights(i, j) * f_tau(j), accumulated in double.
inline MatrixD attend_text(const MatrixD& weights, const MatrixD& f_tau) {
    if (weights.cols() != f_tau.rows())
        throw Error(ErrorCode::shape_mismatch, "weights have " + std::to_string(weights.cols()) + " columns, " +
                                                   std::to_string(f_tau.rows()) + " text rows");
    MatrixD out(weights.rows(), f_tau.cols());
    for (std::size_t i = 0; i < weights.rows(); ++i) {
        auto dst = out.row(i);
        const auto w = weights.row(i);
        for (std::size_t j = 0; j < f_tau.rows(); ++j) {
            const auto src = f_tau.row(j);
            for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += w[j] * src[c];
        }
    }
    return out;
}

inline MatrixD attend_text(const InfluenceMatrix& s, const MatrixD& f_tau) { return attend_text(s.values(), f_tau); }

/// h_i = concat(text_agg_i, f_v_i). The visual block is copied verbatim.
inline MatrixD fuse(const MatrixD& text_agg, const MatrixD& f_v) {
    if (text_agg.rows() != f_v.rows())
        throw Error(ErrorCode::shape_mismatch, "fuse row counts differ: " + std::to_string(text_agg.rows()) + " vs " +
                                                   std::to_string(f_v.rows()));
    const std::size_t dt = text_agg.cols();
    MatrixD out(f_v.rows(), dt + f_v.cols());
    for (std::size_t i = 0; i < out.rows(); ++i) {
        auto dst = out.row(i);
        std::copy(text_agg.row(i).begin(), text_agg.row(i).end(), dst.begin());
        std::copy(f_v.row(i).begin(), f_v.row(i).end(), dst.begin() + static_cast<std::ptrdiff_t>(dt));
    }
    return out;
}

struct Options {
    double temperature = 0.07;
    bool normalize = true;
    std::size_t block_size = 256;
    /// Softmax over same-class captions only. Ablation switch; the default
    /// queries the whole corpus.
    bool per_class_softmax = false;
};

/// Blocked global query: peak extra memory is block_size x N.
inline MatrixD fused_matrix(const MatrixD& f_v, const MatrixD& f_tau, const Options& opt) {
    if (f_v.rows() != f_tau.rows()) throw Error(ErrorCode::shape_mismatch, "visual/text row counts differ");
    const std::size_t n = f_v.rows();
    const std::size_t block = std::max<std::size_t>(1, opt.block_size);
    MatrixD agg(n, f_tau.cols());
    for (std::size_t begin = 0; begin < n; begin += block) {
        const std::size_t end = std::min(n, begin + block);
        const MatrixD rows = attend_text(influence_block(f_v, f_tau, opt.temperature, begin, end), f_tau);
        for (std::size_t i = begin; i < end; ++i)
            std::copy(rows.row(i - begin).begin(), rows.row(i - begin).end(), agg.row(i).begin());
    }
    return fuse(agg, f_v);
}

namespace detail {

inline MatrixD stack(const Corpus& corpus, std::vector<double> SampleRecord::*field, const char* name) {
    if (corpus.empty()) return {};
    const std::size_t d = (corpus.front().*field).size();
    MatrixD m(corpus.size(), d);
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const auto& v = corpus[i].*field;
        if (v.size() != d || d == 0)
            throw Error(ErrorCode::dimension_mismatch,
                        std::string(name) + " of sample_id " + std::to_string(corpus[i].sample_id) + " has dim " +
                            std::to_string(v.size()) + ", expected " + std::to_string(d));
        if (!all_finite(v))
            throw Error(ErrorCode::non_finite, std::string(name) + " of sample_id " +
                                                   std::to_string(corpus[i].sample_id) + " is not finite");
        std::copy(v.begin(), v.end(), m.row(i).begin());
    }
    return m;
}

}  // namespace detail

inline MatrixD visual_matrix(const Corpus& corpus) { return detail::stack(corpus, &SampleRecord::f_v, "f_v"); }
inline MatrixD text_matrix(const Corpus& corpus) { return detail::stack(corpus, &SampleRecord::f_tau, "f_tau"); }
inline MatrixD fused_feature_matrix(const Corpus& corpus) { return detail::stack(corpus, &SampleRecord::h, "h"); }

/// Fill h for every record. With normalization on, f_v and f_tau are replaced
/// by their unit-norm versions so the trailing block of h equals f_v exactly.
inline Corpus fused_features(Corpus corpus, const Options& opt) {
    if (corpus.empty()) return corpus;
    std::vector<SampleId> ids;
    ids.reserve(corpus.size());
    for (const auto& r : corpus) ids.push_back(r.sample_id);
    MatrixD f_v = visual_matrix(corpus);
    MatrixD f_tau = text_matrix(corpus);
    if (opt.normalize) {
        f_v = normalize_rows(f_v, ids);
        f_tau = normalize_rows(f_tau, ids);
    }

    MatrixD h;
    if (!opt.per_class_softmax) {
        h = fused_matrix(f_v, f_tau, opt);
    } else {
        h = MatrixD(corpus.size(), f_v.cols() + f_tau.cols());
        std::map<ClassId, std::vector<std::size_t>> groups;
        for (std::size_t i = 0; i < corpus.size(); ++i) groups[corpus[i].class_id].push_back(i);
        for (const auto& [cls, idx] : groups) {
            MatrixD gv(idx.size(), f_v.cols()), gt(idx.size(), f_tau.cols());
            for (std::size_t r = 0; r < idx.size(); ++r) {
                std::copy(f_v.row(idx[r]).begin(), f_v.row(idx[r]).end(), gv.row(r).begin());
                std::copy(f_tau.row(idx[r]).begin(), f_tau.row(idx[r]).end(), gt.row(r).begin());
            }
            const MatrixD gh = fused_matrix(gv, gt, opt);
            for (std::size_t r = 0; r < idx.size(); ++r)
                std::copy(gh.row(r).begin(), gh.row(r).end(), h.row(idx[r]).begin());
        }
    }

    for (std::size_t i = 0; i < corpus.size(); ++i) {
        corpus[i].f_v.assign(f_v.row(i).begin(), f_v.row(i).end());
        corpus[i].f_tau.assign(f_tau.row(i).begin(), f_tau.row(i).end());
        corpus[i].h.assign(h.row(i).begin(), h.row(i).end());
    }
    return corpus;
}

}  // namespace edits::gsq
