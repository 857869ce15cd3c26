#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "itta/errors.hpp"

namespace itta {

using ClassId = std::uint32_t;

/// Label used for the reserved "background" class. Never a valid registry id.
inline constexpr ClassId kBackgroundId = std::numeric_limits<ClassId>::max();

/// Default CLIP temperature applied to cosine similarities.
inline constexpr double kDefaultLogitScale = 100.0;

/// Stored embeddings must be unit-norm to within this tolerance.
inline constexpr double kUnitNormTolerance = 1e-4;

using FeatureVector = std::vector<double>;
using Probabilities = std::vector<double>;

struct TextEmbedding {
    ClassId class_id = 0;
    std::string name;
    FeatureVector vector;

    friend bool operator==(const TextEmbedding&, const TextEmbedding&) = default;
};

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> v);
bool is_unit_norm(std::span<const double> v, double tolerance = kUnitNormTolerance);

/// Returns v / ||v||. Throws DegenerateInputError for a zero or non-finite norm.
FeatureVector normalized(std::span<const double> v);

double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Softmax of `scale * s` with max subtraction.
Probabilities softmax_scaled(std::span<const double> similarities, double logit_scale);

/// Softmax of already-scaled logits. softmax_scaled(s, k) == softmax_logits(k * s) bitwise.
Probabilities softmax_logits(std::span<const double> logits);

/// Index of the maximum; ties resolve to the lowest index.
std::size_t argmax(std::span<const double> values);

/// The live classifier: an append-only list of class text embeddings plus a
/// reserved background embedding that never takes part in classification.
class ClassRegistry {
public:
    ClassRegistry() = default;
    ClassRegistry(std::size_t dim, FeatureVector background);

    /// Appends a class. Throws StateError on duplicate ids and DimensionError on
    /// a dimension mismatch. The vector is normalized on insertion.
    std::size_t add(TextEmbedding entry, bool initially_seen);

    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }
    std::size_t dim() const noexcept { return dim_; }

    const TextEmbedding& entry(std::size_t index) const { return entries_.at(index); }
    const std::vector<TextEmbedding>& entries() const noexcept { return entries_; }
    bool initially_seen(std::size_t index) const { return seen_flags_.at(index); }
    const TextEmbedding& background() const noexcept { return background_; }

    std::optional<std::size_t> index_of(ClassId id) const;
    bool contains(ClassId id) const { return index_of(id).has_value(); }

    /// Similarity of a unit-norm feature against every entry, in registry order.
    std::vector<double> similarities(std::span<const double> feature) const;

private:
    std::size_t dim_ = 0;
    std::vector<TextEmbedding> entries_;
    std::vector<bool> seen_flags_;
    TextEmbedding background_{kBackgroundId, "background", {}};
};

struct Classification {
    Probabilities probabilities;
    std::size_t predicted_index = 0;
    ClassId predicted = 0;

    friend bool operator==(const Classification&, const Classification&) = default;
};

/// Zero-shot prediction over the registry. `global` must be unit-norm.
Classification classify(std::span<const double> global, const ClassRegistry& registry,
                        double logit_scale = kDefaultLogitScale);

/// Registry indices of the k most probable classes, most probable first.
std::vector<std::size_t> topk_indices(std::span<const double> probs, std::size_t k);

std::vector<ClassId> topk_classes(std::span<const double> probs, const ClassRegistry& registry,
                                  std::size_t k);

}  // namespace itta
