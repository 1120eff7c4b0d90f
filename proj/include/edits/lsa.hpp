#pragma once

// Local semantic awareness: the capacity-bounded nearest members of each
// cluster center form its awareness set; their VAE latents are averaged into
// the image prototype and their captions summarized into the text prototype.

#include <functional>
#include <map>
#include <optional>
#include <unordered_map>

#include "edits/clients/models.hpp"
#include "edits/cluster.hpp"
#include "edits/core/parallel.hpp"
#include "edits/prompts.hpp"

namespace edits::lsa {

struct AwarenessSet {
    ClassId class_id = 0;
    std::size_t center_index = 0;
    /// Ascending by (distance, sample_id).
    std::vector<cluster::Member> members;

    /// Effective awareness radius: distance of the last member taken.
    double radius() const noexcept { return members.empty() ? 0.0 : members.back().distance; }
};

/// The `capacity` members of cluster k nearest its center. Only members
/// assigned to k are eligible; a smaller cluster is taken whole.
inline AwarenessSet select_awareness_set(const cluster::ClusterBuffer& buffer, std::size_t k, std::size_t capacity) {
    if (capacity == 0) throw Error(ErrorCode::invalid_argument, "awareness capacity must be >= 1");
    if (k >= buffer.members.size())
        throw Error(ErrorCode::invalid_argument, "center index " + std::to_string(k) + " out of range for class " +
                                                     std::to_string(buffer.class_id));
    std::vector<cluster::Member> sorted = buffer.members[k];
    std::sort(sorted.begin(), sorted.end(), cluster::member_less);
    sorted.resize(std::min(capacity, sorted.size()));
    return {buffer.class_id, k, std::move(sorted)};
}

/// Element-wise mean, accumulated in double and emitted at T's precision.
template <typename T>
Tensor<T> image_prototype(std::span<const Tensor<T>> latents) {
    if (latents.empty()) throw Error(ErrorCode::empty_input, "image prototype needs at least one latent");
    const LatentShape shape = latents.front().shape;
    std::vector<double> acc(shape.numel(), 0.0);
    for (const auto& l : latents) {
        if (l.shape != shape || l.data.size() != shape.numel())
            throw Error(ErrorCode::shape_mismatch, "latent " + to_string(l.shape) + " differs from " + to_string(shape));
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += static_cast<double>(l.data[i]);
    }
    Tensor<T> out(shape);
    const double n = static_cast<double>(latents.size());
    for (std::size_t i = 0; i < acc.size(); ++i) out.data[i] = static_cast<T>(acc[i] / n);
    return out;
}

template <typename T>
Tensor<T> image_prototype(const std::vector<Tensor<T>>& latents) {
    return image_prototype(std::span<const Tensor<T>>(latents));
}

/// Index of the row with minimal summed Euclidean distance to the others;
/// ties go to the lowest index.
inline std::size_t medoid_index(const MatrixD& embeddings) {
    if (embeddings.rows() == 0) throw Error(ErrorCode::empty_input, "medoid of an empty set");
    std::size_t best = 0;
    double best_sum = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < embeddings.rows(); ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < embeddings.rows(); ++j)
            if (i != j) sum += std::sqrt(squared_distance(embeddings.row(i), embeddings.row(j)));
        if (sum < best_sum) {
            best_sum = sum;
            best = i;
        }
    }
    return best;
}

struct TextPrototype {
    std::string text;
    bool fallback = false;  // medoid caption used instead of a live summary
};

/// Summarize an awareness set's captions. The medoid caption stands in when
/// the summarizer is the offline mock, is absent, or fails after retries.
inline TextPrototype text_prototype(const std::vector<std::string>& captions, const MatrixD& caption_embeddings,
                                    const std::string& class_label, clients::SummarizeClient* summarizer) {
    if (captions.empty()) throw Error(ErrorCode::empty_input, "text prototype needs captions");
    if (std::all_of(captions.begin(), captions.end(), [](const std::string& c) { return c.empty(); }))
        throw Error(ErrorCode::empty_caption, "every caption in the awareness set is empty");
    if (caption_embeddings.rows() != captions.size())
        throw Error(ErrorCode::shape_mismatch, "one embedding per caption required");
    if (summarizer != nullptr) {
        try {
            if (!summarizer->offline()) {
                std::string text = summarizer->summarize(prompts::build_summarization_prompt(captions, class_label));
                if (!text.empty()) return {std::move(text), false};
            }
        } catch (const Error& e) {
            if (e.code() != ErrorCode::transport && e.code() != ErrorCode::service) throw;
        }
    }
    return {captions[medoid_index(caption_embeddings)], true};
}

struct PrototypePair {
    ClassId class_id = 0;
    std::size_t center_index = 0;
    Latent image_prototype;
    std::string text_prototype;
    std::vector<SampleId> provenance;
    bool fallback = false;
    double radius = 0.0;
    /// Mean clustering-space feature of the awareness set; used by metrics.
    std::vector<double> feature;
};

struct BuildOptions {
    std::size_t capacity = 5;
    /// Off: the single member nearest the center is the awareness set.
    bool awareness = true;
    std::size_t workers = 1;
};

struct PrototypeInputs {
    const Corpus& corpus;
    const MatrixD& features;  // row i <-> corpus[i]
    const std::vector<std::string>& class_names;
    std::function<Bytes(const SampleRecord&)> load_image;
};

/// One PrototypePair per (class, center), ordered by (class_id, center_index).
inline std::vector<PrototypePair> build_prototypes(const std::vector<cluster::ClusterBuffer>& buffers,
                                                   const PrototypeInputs& in, clients::DiffusionClient& vae,
                                                   clients::SummarizeClient* summarizer, const BuildOptions& opt) {
    std::unordered_map<SampleId, std::size_t> row_of;
    for (std::size_t i = 0; i < in.corpus.size(); ++i) row_of[in.corpus[i].sample_id] = i;
    auto row = [&](SampleId id) -> std::size_t {
        auto it = row_of.find(id);
        if (it == row_of.end()) throw Error(ErrorCode::invalid_argument, "buffer names unknown sample_id " + std::to_string(id));
        return it->second;
    };

    std::vector<std::pair<std::size_t, std::size_t>> jobs;
    for (std::size_t b = 0; b < buffers.size(); ++b)
        for (std::size_t k = 0; k < buffers[b].k(); ++k) jobs.emplace_back(b, k);

    std::vector<PrototypePair> out(jobs.size());
    parallel_for(jobs.size(), opt.workers, [&](std::size_t j) {
        const auto& buffer = buffers[jobs[j].first];
        const std::size_t k = jobs[j].second;
        const AwarenessSet set = select_awareness_set(buffer, k, opt.awareness ? opt.capacity : 1);
        const std::string label = static_cast<std::size_t>(buffer.class_id) < in.class_names.size()
                                      ? in.class_names[static_cast<std::size_t>(buffer.class_id)]
                                      : std::to_string(buffer.class_id);

        PrototypePair pair;
        pair.class_id = buffer.class_id;
        pair.center_index = k;
        pair.radius = set.radius();
        std::vector<Latent> latents;
        std::vector<std::string> captions;
        MatrixD caption_vecs(set.members.size(), in.corpus.empty() ? 0 : in.corpus.front().f_tau.size());
        pair.feature.assign(in.features.cols(), 0.0);
        for (std::size_t m = 0; m < set.members.size(); ++m) {
            const SampleRecord& rec = in.corpus[row(set.members[m].sample_id)];
            pair.provenance.push_back(rec.sample_id);
            latents.push_back(vae.vae_encode(in.load_image(rec)));
            captions.push_back(rec.caption.value_or(""));
            if (rec.f_tau.size() != caption_vecs.cols())
                throw Error(ErrorCode::dimension_mismatch, "sample_id " + std::to_string(rec.sample_id) + " lacks f_tau");
            std::copy(rec.f_tau.begin(), rec.f_tau.end(), caption_vecs.row(m).begin());
            const auto f = in.features.row(row(rec.sample_id));
            for (std::size_t c = 0; c < f.size(); ++c) pair.feature[c] += f[c];
        }
        for (double& v : pair.feature) v /= static_cast<double>(set.members.size());
        pair.image_prototype = image_prototype(latents);
        auto text = text_prototype(captions, caption_vecs, label, summarizer);
        pair.text_prototype = std::move(text.text);
        pair.fallback = text.fallback;
        out[j] = std::move(pair);
    });
    return out;
}

}  // namespace edits::lsa
