#include "itta/tta.hpp"

#include <algorithm>
#include <cmath>

namespace itta {

Classification ZeroShotEngine::predict(std::span<const double> global, const ClassRegistry& registry) const {
    return zs_predict(global, registry, logit_scale_);
}

Classification zs_predict(std::span<const double> global, const ClassRegistry& registry, double logit_scale) {
    return classify(global, registry, logit_scale);
}

void validate_tda_config(const TdaConfig& c) {
    if (c.shot_capacity < 1) throw ConfigError("tda: shot_capacity must be at least 1");
    if (!(c.residual_weight >= 0.0) || !std::isfinite(c.residual_weight)) {
        throw ConfigError("tda: residual_weight must be >= 0");
    }
    if (!(c.sharpness > 0.0) || !std::isfinite(c.sharpness)) throw ConfigError("tda: sharpness must be > 0");
    if (!(c.entropy_lo <= c.entropy_hi)) throw ConfigError("tda: entropy gate is empty");
}

TdaCache::TdaCache(TdaConfig config) : config_(config) { validate_tda_config(config_); }

void TdaCache::add_class(ClassId id) {
    if (!lists_.emplace(id, std::vector<TdaCacheEntry>{}).second) {
        throw StateError("tda cache already holds class " + std::to_string(id));
    }
}

const std::vector<TdaCacheEntry>& TdaCache::entries(ClassId id) const {
    auto it = lists_.find(id);
    if (it == lists_.end()) throw StateError("tda cache has no list for class " + std::to_string(id));
    return it->second;
}

std::size_t TdaCache::total_entries() const {
    std::size_t n = 0;
    for (const auto& [_, list] : lists_) n += list.size();
    return n;
}

bool TdaCache::insert(ClassId id, std::span<const double> feature, double entropy) {
    auto it = lists_.find(id);
    if (it == lists_.end()) throw StateError("tda cache has no list for class " + std::to_string(id));
    auto& list = it->second;
    if (list.size() >= config_.shot_capacity) {
        if (!(entropy < list.back().entropy)) return false;
        list.pop_back();
    }
    auto pos = std::upper_bound(list.begin(), list.end(), entropy,
                                [](double e, const TdaCacheEntry& entry) { return e < entry.entropy; });
    list.insert(pos, TdaCacheEntry{FeatureVector(feature.begin(), feature.end()), entropy});
    return true;
}

void TdaCache::apply_residual(std::span<const double> global, const ClassRegistry& registry,
                              std::span<double> logits) const {
    for (std::size_t i = 0; i < registry.size(); ++i) {
        auto it = lists_.find(registry.entry(i).class_id);
        if (it == lists_.end()) continue;
        for (const auto& e : it->second) {
            logits[i] += config_.residual_weight * std::exp(-config_.sharpness * (1.0 - dot(global, e.feature)));
        }
    }
}

double normalized_entropy(std::span<const double> probs) {
    if (probs.size() <= 1) return 0.0;
    double h = 0.0;
    for (double p : probs) {
        if (p > 0.0) h -= p * std::log(p);
    }
    return std::clamp(h / std::log(static_cast<double>(probs.size())), 0.0, 1.0);
}

Classification tda_predict(std::span<const double> global, const ClassRegistry& registry, const TdaCache& cache,
                           double logit_scale) {
    if (registry.empty()) throw EmptyRegistryError("cannot classify against an empty registry");
    const auto sims = registry.similarities(global);
    std::vector<double> logits(sims.size());
    for (std::size_t i = 0; i < sims.size(); ++i) logits[i] = logit_scale * sims[i];
    cache.apply_residual(global, registry, logits);

    Classification out;
    out.probabilities = softmax_logits(logits);
    out.predicted_index = argmax(out.probabilities);
    out.predicted = registry.entry(out.predicted_index).class_id;
    return out;
}

bool tda_observe(std::span<const double> global, const Classification& prediction, TdaCache& cache) {
    const double h = normalized_entropy(prediction.probabilities);
    if (h < cache.config().entropy_lo || h > cache.config().entropy_hi) return false;
    return cache.insert(prediction.predicted, global, h);
}

void tda_on_registry_expanded(ClassId new_class, TdaCache& cache) { cache.add_class(new_class); }

TdaEngine::TdaEngine(TdaConfig config, double logit_scale) : cache_(config), logit_scale_(logit_scale) {}

void TdaEngine::initialize(const ClassRegistry& registry) {
    cache_ = TdaCache(cache_.config());
    for (const auto& e : registry.entries()) cache_.add_class(e.class_id);
}

Classification TdaEngine::predict(std::span<const double> global, const ClassRegistry& registry) const {
    return tda_predict(global, registry, cache_, logit_scale_);
}

void TdaEngine::observe(std::span<const double> global, const Classification& prediction) {
    tda_observe(global, prediction, cache_);
}

void TdaEngine::on_registry_expanded(ClassId new_class) { tda_on_registry_expanded(new_class, cache_); }

TtaKind parse_tta_kind(const std::string& name) {
    if (name == "zseval") return TtaKind::zseval;
    if (name == "tda") return TtaKind::tda;
    throw ConfigError("unknown tta engine '" + name + "'");
}

std::string to_string(TtaKind kind) { return kind == TtaKind::zseval ? "zseval" : "tda"; }

std::unique_ptr<TtaEngine> make_engine(TtaKind kind, const TdaConfig& tda, double logit_scale) {
    if (kind == TtaKind::tda) return std::make_unique<TdaEngine>(tda, logit_scale);
    return std::make_unique<ZeroShotEngine>(logit_scale);
}

}  // namespace itta
