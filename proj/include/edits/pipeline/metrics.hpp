#pragma once

// Embedding-space surrogates for prototype quality:
//   dispersion ratio = mean inter-class prototype distance / mean intra-class
//                      prototype distance
//   purity           = fraction of samples whose nearest prototype (squared
//                      Euclidean, ties to the lower prototype index) has
//                      their class

#include <optional>
#include <set>

#include <json.hpp>

#include "edits/core/types.hpp"

namespace edits::pipeline {

struct PrototypeMetrics {
    std::optional<double> dispersion_ratio;
    std::optional<double> mean_inter_distance;
    std::optional<double> mean_intra_distance;
    double purity = 0.0;
    std::size_t num_prototypes = 0;
    std::size_t num_samples = 0;
    std::size_t num_classes = 0;
};

inline nlohmann::json to_json(const PrototypeMetrics& m) {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    return {{"dispersion_ratio", opt(m.dispersion_ratio)},
            {"mean_inter_distance", opt(m.mean_inter_distance)},
            {"mean_intra_distance", opt(m.mean_intra_distance)},
            {"purity", m.purity},
            {"num_prototypes", m.num_prototypes},
            {"num_samples", m.num_samples},
            {"num_classes", m.num_classes}};
}

/// `prototypes` rows are ordered by (class, center); `prototype_classes[p]` is
/// the class of row p. `samples` and `sample_classes` describe the corpus in
/// the same feature space.
inline PrototypeMetrics prototype_metrics(const MatrixD& prototypes, std::span<const ClassId> prototype_classes,
                                          const MatrixD& samples, std::span<const ClassId> sample_classes) {
    if (prototypes.rows() != prototype_classes.size() || samples.rows() != sample_classes.size())
        throw Error(ErrorCode::shape_mismatch, "metrics: class labels do not match rows");
    if (prototypes.rows() == 0) throw Error(ErrorCode::empty_input, "metrics: no prototypes");
    if (samples.rows() > 0 && prototypes.cols() != samples.cols())
        throw Error(ErrorCode::dimension_mismatch, "metrics: prototype and sample dims differ");

    PrototypeMetrics m;
    m.num_prototypes = prototypes.rows();
    m.num_samples = samples.rows();
    m.num_classes = std::set<ClassId>(prototype_classes.begin(), prototype_classes.end()).size();

    double inter = 0.0, intra = 0.0;
    std::size_t n_inter = 0, n_intra = 0;
    for (std::size_t a = 0; a < prototypes.rows(); ++a) {
        for (std::size_t b = a + 1; b < prototypes.rows(); ++b) {
            const double d = std::sqrt(squared_distance(prototypes.row(a), prototypes.row(b)));
            if (prototype_classes[a] == prototype_classes[b]) {
                intra += d;
                ++n_intra;
            } else {
                inter += d;
                ++n_inter;
            }
        }
    }
    if (n_inter > 0) m.mean_inter_distance = inter / static_cast<double>(n_inter);
    if (n_intra > 0) m.mean_intra_distance = intra / static_cast<double>(n_intra);
    if (m.num_classes >= 2 && m.mean_inter_distance && m.mean_intra_distance && *m.mean_intra_distance > 0.0)
        m.dispersion_ratio = *m.mean_inter_distance / *m.mean_intra_distance;

    std::size_t hits = 0;
    for (std::size_t i = 0; i < samples.rows(); ++i) {
        std::size_t best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t p = 0; p < prototypes.rows(); ++p) {
            const double d = squared_distance(samples.row(i), prototypes.row(p));
            if (d < best_d) {
                best_d = d;
                best = p;
            }
        }
        if (prototype_classes[best] == sample_classes[i]) ++hits;
    }
    m.purity = samples.rows() == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(samples.rows());
    return m;
}

}  // namespace edits::pipeline
