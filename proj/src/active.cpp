#include "itta/active.hpp"

#include <algorithm>
#include <cmath>

namespace itta {

UncertaintyKind parse_uncertainty_kind(const std::string& name) {
    if (name == "msp") return UncertaintyKind::msp;
    if (name == "entropy") return UncertaintyKind::entropy;
    if (name == "margin") return UncertaintyKind::margin;
    throw ConfigError("unknown uncertainty measure '" + name + "'");
}

std::string to_string(UncertaintyKind kind) {
    switch (kind) {
        case UncertaintyKind::msp: return "msp";
        case UncertaintyKind::entropy: return "entropy";
        case UncertaintyKind::margin: return "margin";
    }
    return "?";
}

double uncertainty_score(UncertaintyKind kind, std::span<const double> probs) {
    if (probs.empty()) throw EmptyInputError("uncertainty of an empty distribution");
    switch (kind) {
        case UncertaintyKind::msp: return *std::max_element(probs.begin(), probs.end());
        case UncertaintyKind::entropy: return normalized_entropy(probs);
        case UncertaintyKind::margin: {
            if (probs.size() < 2) throw DegenerateInputError("margin needs at least two classes");
            const auto top = topk_indices(probs, 2);
            return probs[top[0]] - probs[top[1]];
        }
    }
    return 0.0;
}

bool base_uncertain(UncertaintyKind kind, double score, const UncertaintyThresholds& t) {
    switch (kind) {
        case UncertaintyKind::msp: return score < t.msp;
        case UncertaintyKind::entropy: return score > t.entropy;
        case UncertaintyKind::margin: return score < t.margin;
    }
    return false;
}

std::string to_string(SegmentationSource source) {
    return source == SegmentationSource::patch_level ? "patch_level" : "upsampled";
}

SegmentationSource parse_segmentation_source(const std::string& name) {
    if (name == "patch_level") return SegmentationSource::patch_level;
    if (name == "upsampled") return SegmentationSource::upsampled;
    throw ConfigError("unknown segmentation mode '" + name + "'");
}

std::vector<double> bilinear_resize(std::span<const double> src, std::size_t src_h, std::size_t src_w,
                                    std::size_t dst_h, std::size_t dst_w) {
    if (src.size() != src_h * src_w || src_h == 0 || src_w == 0) throw DimensionError("bad source map shape");
    if (dst_h == 0 || dst_w == 0) throw DimensionError("empty target resolution");

    struct Tap {
        std::size_t lo, hi;
        double frac;
    };
    auto taps = [](std::size_t in, std::size_t out) {
        std::vector<Tap> t(out);
        const double scale = static_cast<double>(in) / static_cast<double>(out);
        for (std::size_t i = 0; i < out; ++i) {
            const double s = std::max(0.0, (static_cast<double>(i) + 0.5) * scale - 0.5);
            const auto lo = std::min(static_cast<std::size_t>(s), in - 1);
            t[i] = {lo, std::min(lo + 1, in - 1), s - static_cast<double>(lo)};
        }
        return t;
    };
    const auto ty = taps(src_h, dst_h);
    const auto tx = taps(src_w, dst_w);

    std::vector<double> dst(dst_h * dst_w);
    for (std::size_t y = 0; y < dst_h; ++y) {
        const auto& a = ty[y];
        for (std::size_t x = 0; x < dst_w; ++x) {
            const auto& b = tx[x];
            const double top = src[a.lo * src_w + b.lo] * (1.0 - b.frac) + src[a.lo * src_w + b.hi] * b.frac;
            const double bot = src[a.hi * src_w + b.lo] * (1.0 - b.frac) + src[a.hi * src_w + b.hi] * b.frac;
            dst[y * dst_w + x] = top * (1.0 - a.frac) + bot * a.frac;
        }
    }
    return dst;
}

SegmentationMap segment_patches(const std::optional<PatchGrid>& patches, std::span<const double> probs,
                                const ClassRegistry& registry, std::size_t k, std::optional<Resolution> upsample_to) {
    if (!patches) throw MissingPatchesError("sample has no patch features");
    if (k == 0) throw DegenerateInputError("topk must be positive");
    if (probs.size() != registry.size()) throw DimensionError("probabilities do not match the registry");
    const auto& grid = *patches;
    if (grid.dim != registry.dim()) throw DimensionError("patch dimension does not match the registry");

    // Candidates in registry order, background last: a strict '>' scan then
    // realizes both tie rules.
    auto candidate_idx = topk_indices(probs, k);
    std::sort(candidate_idx.begin(), candidate_idx.end());
    std::vector<const TextEmbedding*> candidates;
    for (std::size_t i : candidate_idx) candidates.push_back(&registry.entry(i));
    candidates.push_back(&registry.background());

    const std::size_t cells = grid.cells();
    const std::size_t nc = candidates.size();
    std::vector<std::vector<double>> sim(nc, std::vector<double>(cells));
    for (std::size_t r = 0; r < grid.height; ++r) {
        for (std::size_t c = 0; c < grid.width; ++c) {
            const auto f = grid.feature(r, c);
            for (std::size_t j = 0; j < nc; ++j) sim[j][r * grid.width + c] = dot(f, candidates[j]->vector);
        }
    }

    SegmentationMap map;
    if (upsample_to) {
        map.height = upsample_to->height;
        map.width = upsample_to->width;
        map.source = SegmentationSource::upsampled;
        for (auto& s : sim) s = bilinear_resize(s, grid.height, grid.width, map.height, map.width);
    } else {
        map.height = grid.height;
        map.width = grid.width;
        map.source = SegmentationSource::patch_level;
    }

    const std::size_t n = map.height * map.width;
    map.labels.resize(n);
    for (std::size_t p = 0; p < n; ++p) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < nc; ++j) {
            if (sim[j][p] > sim[best][p]) best = j;
        }
        map.labels[p] = candidates[best]->class_id;
    }
    return map;
}

double background_ratio(const SegmentationMap& map) {
    if (map.labels.empty()) throw EmptyInputError("empty segmentation map");
    const auto bg = std::count(map.labels.begin(), map.labels.end(), kBackgroundId);
    return static_cast<double>(bg) / static_cast<double>(map.labels.size());
}

// ---------------------------------------------------------------------------

std::size_t budget_grant(double rate, std::size_t window) {
    return static_cast<std::size_t>(std::floor(rate * static_cast<double>(window) + 1e-9));
}

BudgetState::BudgetState(double rate, std::size_t window) : rate_(rate), window_(window) {
    if (!(rate > 0.0 && rate < 1.0)) throw ConfigError("budget rate must lie in (0, 1)");
    if (window < 1) throw ConfigError("budget window must be at least 1");
    per_window_ = budget_grant(rate, window);
    if (per_window_ < 1) throw ConfigError("budget rate * window grants no queries");
}

void BudgetState::tick() {
    ++samples_seen_;
    if (samples_seen_ % window_ == 1 % window_) total_granted_ += per_window_;
}

bool BudgetState::consume() {
    if (remaining() == 0) return false;
    ++total_consumed_;
    return true;
}

// ---------------------------------------------------------------------------

Strategy parse_strategy(const std::string& name) {
    if (name == "random") return Strategy::random;
    if (name == "msp") return Strategy::msp;
    if (name == "entropy") return Strategy::entropy;
    if (name == "margin") return Strategy::margin;
    if (name == "segassist") return Strategy::segassist;
    throw ConfigError("unknown strategy '" + name + "'");
}

std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::random: return "random";
        case Strategy::msp: return "msp";
        case Strategy::entropy: return "entropy";
        case Strategy::margin: return "margin";
        case Strategy::segassist: return "segassist";
    }
    return "?";
}

std::string to_string(DenialReason r) {
    switch (r) {
        case DenialReason::not_uncertain: return "not_uncertain";
        case DenialReason::segassist_rejected: return "segassist_rejected";
        case DenialReason::budget_exhausted: return "budget_exhausted";
    }
    return "?";
}

DenialReason parse_denial_reason(const std::string& name) {
    if (name == "not_uncertain") return DenialReason::not_uncertain;
    if (name == "segassist_rejected") return DenialReason::segassist_rejected;
    if (name == "budget_exhausted") return DenialReason::budget_exhausted;
    throw FormatError("unknown denial reason '" + name + "'");
}

Selector::Selector(SelectorConfig config, std::uint64_t seed) : config_(config), random_(seed ^ 0xA5A5A5A5ULL) {
    if (config_.topk < 1) throw ConfigError("topk must be at least 1");
    if (config_.strategy == Strategy::segassist && config_.segmap == SegmentationSource::upsampled &&
        (config_.upsample_to.height == 0 || config_.upsample_to.width == 0)) {
        throw ConfigError("upsample resolution must be positive");
    }
}

SelectionDecision Selector::decide(const EmbeddingSample& sample, const Classification& prediction,
                                   const ClassRegistry& registry, BudgetState& budget) {
    SelectionDecision d;
    const auto& probs = prediction.probabilities;
    switch (config_.strategy) {
        case Strategy::random:
            d.base_score = random_.draw();
            d.uncertain = d.base_score < config_.random_rate;
            break;
        case Strategy::msp:
        case Strategy::entropy:
        case Strategy::margin: {
            const auto kind = config_.strategy == Strategy::msp       ? UncertaintyKind::msp
                              : config_.strategy == Strategy::entropy ? UncertaintyKind::entropy
                                                                      : UncertaintyKind::margin;
            d.base_score = uncertainty_score(kind, probs);
            d.uncertain = base_uncertain(kind, d.base_score, config_.thresholds);
            break;
        }
        case Strategy::segassist:
            d.base_score = uncertainty_score(config_.segassist_base, probs);
            d.uncertain = base_uncertain(config_.segassist_base, d.base_score, config_.thresholds);
            break;
    }
    if (!d.uncertain) {
        d.denial_reason = DenialReason::not_uncertain;
        return d;
    }
    if (config_.strategy == Strategy::segassist) {
        std::optional<Resolution> target;
        if (config_.segmap == SegmentationSource::upsampled) target = config_.upsample_to;
        const auto map = segment_patches(sample.patches, probs, registry, config_.topk, target);
        d.background_ratio = background_ratio(map);
        if (!segassist_select(*d.background_ratio, config_.alpha)) {
            d.denial_reason = DenialReason::segassist_rejected;
            return d;
        }
    }
    if (!budget.consume()) {
        d.denial_reason = DenialReason::budget_exhausted;
        return d;
    }
    d.selected = true;
    return d;
}

OracleResult oracle_query(const EmbeddingSample& sample, const Dataset& dataset, ClassRegistry& registry,
                          std::size_t stream_index, TtaEngine& engine) {
    OracleResult result;
    result.true_class_id = sample.class_id;
    if (registry.contains(sample.class_id)) return result;
    const auto* entry = dataset.find_class(sample.class_id);
    if (!entry) throw DataError("class " + std::to_string(sample.class_id) + " missing from the class table");
    registry.add(*entry, false);
    engine.on_registry_expanded(sample.class_id);
    result.was_new = true;
    result.detection_index = stream_index;
    return result;
}

}  // namespace itta
