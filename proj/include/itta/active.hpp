#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "itta/core.hpp"
#include "itta/dataset.hpp"
#include "itta/tta.hpp"

namespace itta {

// ---------------------------------------------------------------------------
// Uncertainty scoring

enum class UncertaintyKind { msp, entropy, margin };

UncertaintyKind parse_uncertainty_kind(const std::string& name);
std::string to_string(UncertaintyKind kind);

/// msp: top probability. entropy: entropy / log|C| (0 for one class).
/// margin: top-1 minus top-2, DegenerateInputError for a single class.
double uncertainty_score(UncertaintyKind kind, std::span<const double> probs);

struct UncertaintyThresholds {
    double msp = 0.2;
    double entropy = 0.5;
    double margin = 0.1;
};

/// msp and margin flag scores strictly below their threshold, entropy strictly above.
bool base_uncertain(UncertaintyKind kind, double score, const UncertaintyThresholds& thresholds);

// ---------------------------------------------------------------------------
// Dense segmentation filter

enum class SegmentationSource { patch_level, upsampled };

std::string to_string(SegmentationSource source);
SegmentationSource parse_segmentation_source(const std::string& name);

struct SegmentationMap {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<ClassId> labels;  ///< row-major; kBackgroundId marks background
    SegmentationSource source = SegmentationSource::patch_level;
};

struct Resolution {
    std::size_t height = 0;
    std::size_t width = 0;
};

/// Labels every patch (or, with `upsample_to`, every pixel of the bilinearly
/// upsampled similarity maps) with the best of topK(probs) and background.
/// Among equal similarities a class beats background and the lower registry
/// index beats a higher one.
SegmentationMap segment_patches(const std::optional<PatchGrid>& patches, std::span<const double> probs,
                                const ClassRegistry& registry, std::size_t k,
                                std::optional<Resolution> upsample_to = std::nullopt);

/// Bilinear resize of a row-major single-channel map, half-pixel centers with
/// edge clamping (the align_corners=false convention).
std::vector<double> bilinear_resize(std::span<const double> src, std::size_t src_h, std::size_t src_w,
                                    std::size_t dst_h, std::size_t dst_w);

double background_ratio(const SegmentationMap& map);

inline bool segassist_select(double ratio, double alpha) { return ratio > alpha; }

// ---------------------------------------------------------------------------
// Budget

/// Replenishing budget: floor(rate * window) queries are granted at the first
/// sample of every window; unused queries carry over.
class BudgetState {
public:
    BudgetState(double rate, std::size_t window);

    /// Counts one arriving sample, replenishing at the start of each window.
    void tick();
    /// Takes one query if available.
    bool consume();

    std::size_t remaining() const noexcept { return total_granted_ - total_consumed_; }
    std::size_t per_window_grant() const noexcept { return per_window_; }
    double rate() const noexcept { return rate_; }
    std::size_t window() const noexcept { return window_; }
    std::size_t samples_seen() const noexcept { return samples_seen_; }
    std::size_t total_granted() const noexcept { return total_granted_; }
    std::size_t total_consumed() const noexcept { return total_consumed_; }

private:
    double rate_;
    std::size_t window_;
    std::size_t per_window_;
    std::size_t samples_seen_ = 0;
    std::size_t total_granted_ = 0;
    std::size_t total_consumed_ = 0;
};

/// floor(rate * window) with a guard against representation error.
std::size_t budget_grant(double rate, std::size_t window);

/// Seeded Bernoulli(r) draws for the random strategy.
class RandomSelector {
public:
    explicit RandomSelector(std::uint64_t seed) : rng_(seed) {}
    /// Returns the uniform draw; the sample is selected when it is below r.
    double draw() { return rng_.uniform(); }
    bool select(double r) { return draw() < r; }

private:
    Rng rng_;
};

// ---------------------------------------------------------------------------
// Selection pipeline

enum class Strategy { random, msp, entropy, margin, segassist };

Strategy parse_strategy(const std::string& name);
std::string to_string(Strategy strategy);

enum class DenialReason { not_uncertain, segassist_rejected, budget_exhausted };

std::string to_string(DenialReason reason);
DenialReason parse_denial_reason(const std::string& name);

struct SelectionDecision {
    bool uncertain = false;
    double base_score = 0.0;
    std::optional<double> background_ratio;
    bool selected = false;
    std::optional<DenialReason> denial_reason;
};

struct SelectorConfig {
    Strategy strategy = Strategy::msp;
    UncertaintyKind segassist_base = UncertaintyKind::msp;
    UncertaintyThresholds thresholds;
    double alpha = 0.95;
    std::size_t topk = 5;
    SegmentationSource segmap = SegmentationSource::patch_level;
    Resolution upsample_to{224, 224};
    double random_rate = 0.01;
};

/// Evaluates base uncertainty, the optional SegAssist filter and the budget,
/// in that order. Only a fully passing sample touches the budget.
class Selector {
public:
    Selector(SelectorConfig config, std::uint64_t seed);

    SelectionDecision decide(const EmbeddingSample& sample, const Classification& prediction,
                             const ClassRegistry& registry, BudgetState& budget);

    const SelectorConfig& config() const noexcept { return config_; }

private:
    SelectorConfig config_;
    RandomSelector random_;
};

// ---------------------------------------------------------------------------
// Oracle

struct OracleResult {
    ClassId true_class_id = 0;
    bool was_new = false;
    std::optional<std::size_t> detection_index;
};

/// Reveals the ground-truth class. An unregistered class is appended to the
/// registry (not initially seen) and announced to the engine.
OracleResult oracle_query(const EmbeddingSample& sample, const Dataset& dataset, ClassRegistry& registry,
                          std::size_t stream_index, TtaEngine& engine);

}  // namespace itta
