#include "itta/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace itta {

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw DimensionError("dimension mismatch: " + std::to_string(a.size()) + " vs " +
                             std::to_string(b.size()));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double l2_norm(std::span<const double> v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return std::sqrt(acc);
}

bool is_unit_norm(std::span<const double> v, double tolerance) {
    const double n = l2_norm(v);
    return std::isfinite(n) && std::abs(n - 1.0) <= tolerance;
}

FeatureVector normalized(std::span<const double> v) {
    const double n = l2_norm(v);
    if (!(n > 0.0) || !std::isfinite(n)) throw DegenerateInputError("cannot normalize a zero vector");
    FeatureVector out(v.begin(), v.end());
    for (double& x : out) x /= n;
    return out;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw DimensionError("dimension mismatch: " + std::to_string(a.size()) + " vs " +
                             std::to_string(b.size()));
    }
    const double na = l2_norm(a);
    const double nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0) throw DegenerateInputError("cosine similarity of a zero vector");
    return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

Probabilities softmax_logits(std::span<const double> logits) {
    if (logits.empty()) throw EmptyInputError("softmax of an empty vector");
    const double m = *std::max_element(logits.begin(), logits.end());
    Probabilities out(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - m);
        total += out[i];
    }
    for (double& p : out) p /= total;
    return out;
}

Probabilities softmax_scaled(std::span<const double> similarities, double logit_scale) {
    std::vector<double> logits(similarities.size());
    for (std::size_t i = 0; i < similarities.size(); ++i) logits[i] = logit_scale * similarities[i];
    return softmax_logits(logits);
}

std::size_t argmax(std::span<const double> values) {
    if (values.empty()) throw EmptyInputError("argmax of an empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) best = i;
    }
    return best;
}

ClassRegistry::ClassRegistry(std::size_t dim, FeatureVector background) : dim_(dim) {
    if (background.size() != dim) throw DimensionError("background embedding has wrong dimension");
    background_.vector = normalized(background);
}

std::size_t ClassRegistry::add(TextEmbedding entry, bool initially_seen) {
    if (entry.class_id == kBackgroundId) throw StateError("class id collides with the background sentinel");
    if (contains(entry.class_id)) {
        throw StateError("class " + std::to_string(entry.class_id) + " already registered");
    }
    if (dim_ == 0) dim_ = entry.vector.size();
    if (entry.vector.size() != dim_) throw DimensionError("text embedding has wrong dimension");
    entry.vector = normalized(entry.vector);
    entries_.push_back(std::move(entry));
    seen_flags_.push_back(initially_seen);
    return entries_.size() - 1;
}

std::optional<std::size_t> ClassRegistry::index_of(ClassId id) const {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].class_id == id) return i;
    }
    return std::nullopt;
}

std::vector<double> ClassRegistry::similarities(std::span<const double> feature) const {
    std::vector<double> sims(entries_.size());
    for (std::size_t i = 0; i < entries_.size(); ++i) sims[i] = dot(feature, entries_[i].vector);
    return sims;
}

Classification classify(std::span<const double> global, const ClassRegistry& registry,
                        double logit_scale) {
    if (registry.empty()) throw EmptyRegistryError("cannot classify against an empty registry");
    Classification out;
    out.probabilities = softmax_scaled(registry.similarities(global), logit_scale);
    out.predicted_index = argmax(out.probabilities);
    out.predicted = registry.entry(out.predicted_index).class_id;
    return out;
}

std::vector<std::size_t> topk_indices(std::span<const double> probs, std::size_t k) {
    if (k == 0) throw DegenerateInputError("k must be positive");
    std::vector<std::size_t> idx(probs.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    const std::size_t n = std::min(k, idx.size());
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n), idx.end(),
                      [&](std::size_t a, std::size_t b) {
                          return probs[a] > probs[b] || (probs[a] == probs[b] && a < b);
                      });
    idx.resize(n);
    return idx;
}

std::vector<ClassId> topk_classes(std::span<const double> probs, const ClassRegistry& registry,
                                  std::size_t k) {
    if (probs.size() != registry.size()) throw DimensionError("probabilities do not match the registry");
    std::vector<ClassId> out;
    for (std::size_t i : topk_indices(probs, k)) out.push_back(registry.entry(i).class_id);
    return out;
}

}  // namespace itta
