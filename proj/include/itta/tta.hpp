#pragma once

#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "itta/core.hpp"

namespace itta {

/// Single-sample test-time adaptation engine. `predict` must not mutate state;
/// engines only ever see their own pseudo-labels, never ground truth.
class TtaEngine {
public:
    virtual ~TtaEngine() = default;

    virtual std::string name() const = 0;

    /// Called once with the initial registry before the stream starts.
    virtual void initialize(const ClassRegistry& registry) { (void)registry; }

    virtual Classification predict(std::span<const double> global, const ClassRegistry& registry) const = 0;

    /// `prediction` is the output of `predict` for the same sample.
    virtual void observe(std::span<const double> global, const Classification& prediction) {
        (void)global;
        (void)prediction;
    }

    virtual void on_registry_expanded(ClassId new_class) { (void)new_class; }
};

class ZeroShotEngine final : public TtaEngine {
public:
    explicit ZeroShotEngine(double logit_scale = kDefaultLogitScale) : logit_scale_(logit_scale) {}

    std::string name() const override { return "zseval"; }
    Classification predict(std::span<const double> global, const ClassRegistry& registry) const override;

private:
    double logit_scale_;
};

Classification zs_predict(std::span<const double> global, const ClassRegistry& registry,
                          double logit_scale = kDefaultLogitScale);

struct TdaConfig {
    std::size_t shot_capacity = 3;
    double residual_weight = 2.0;
    double sharpness = 5.0;
    /// Inclusive gate on normalized prediction entropy.
    double entropy_lo = 0.0;
    double entropy_hi = 1.0;
};

void validate_tda_config(const TdaConfig& config);

struct TdaCacheEntry {
    FeatureVector feature;
    double entropy = 0.0;
};

/// Per-class positive cache, each list sorted by ascending entropy and bounded
/// by the shot capacity.
class TdaCache {
public:
    explicit TdaCache(TdaConfig config = {});

    const TdaConfig& config() const noexcept { return config_; }

    /// Creates an empty list. Throws StateError when the class already has one.
    void add_class(ClassId id);
    bool has_class(ClassId id) const { return lists_.contains(id); }

    const std::vector<TdaCacheEntry>& entries(ClassId id) const;
    std::size_t total_entries() const;

    /// Offers one entry. Returns true when the cache changed.
    bool insert(ClassId id, std::span<const double> feature, double entropy);

    /// Adds the affinity residual of every cached entry to `logits` (registry order).
    void apply_residual(std::span<const double> global, const ClassRegistry& registry,
                        std::span<double> logits) const;

private:
    TdaConfig config_;
    std::map<ClassId, std::vector<TdaCacheEntry>> lists_;
};

/// Entropy of `probs` divided by log(size); 0 for a single class.
double normalized_entropy(std::span<const double> probs);

Classification tda_predict(std::span<const double> global, const ClassRegistry& registry, const TdaCache& cache,
                           double logit_scale = kDefaultLogitScale);

/// Gated insertion of the sample under its predicted class. Returns true on change.
bool tda_observe(std::span<const double> global, const Classification& prediction, TdaCache& cache);

void tda_on_registry_expanded(ClassId new_class, TdaCache& cache);

class TdaEngine final : public TtaEngine {
public:
    explicit TdaEngine(TdaConfig config = {}, double logit_scale = kDefaultLogitScale);

    std::string name() const override { return "tda"; }
    void initialize(const ClassRegistry& registry) override;
    Classification predict(std::span<const double> global, const ClassRegistry& registry) const override;
    void observe(std::span<const double> global, const Classification& prediction) override;
    void on_registry_expanded(ClassId new_class) override;

    const TdaCache& cache() const noexcept { return cache_; }

private:
    TdaCache cache_;
    double logit_scale_;
};

enum class TtaKind { zseval, tda };

TtaKind parse_tta_kind(const std::string& name);
std::string to_string(TtaKind kind);

std::unique_ptr<TtaEngine> make_engine(TtaKind kind, const TdaConfig& tda, double logit_scale);

}  // namespace itta
