#include <cmath>
#include <algorithm>
#include <cstdio>

#include "itta/dataset.hpp"

namespace itta {

namespace {

FeatureVector gaussian(Rng& rng, std::size_t d, double sigma) {
    FeatureVector v(d);
    for (double& x : v) x = sigma * rng.normal();
    return v;
}

FeatureVector random_unit(Rng& rng, std::size_t d) {
    for (;;) {
        auto v = gaussian(rng, d, 1.0);
        if (l2_norm(v) > 1e-12) return normalized(v);
    }
}

// Rounds to the on-disk precision so that a written and re-read dataset is identical.
FeatureVector to_f32(FeatureVector v) {
    for (double& x : v) x = static_cast<double>(static_cast<float>(x));
    return v;
}

FeatureVector noisy_unit(const FeatureVector& center, Rng& rng, double sigma) {
    FeatureVector v = center;
    if (sigma > 0.0) {
        for (double& x : v) x += sigma * rng.normal();
    }
    return to_f32(normalized(v));
}

}  // namespace

void validate_synth_config(const SynthConfig& c) {
    if (c.dim < 2) throw ConfigError("synth: dim must be at least 2");
    if (c.num_seen < 1 || c.num_unseen < 1 || c.samples_per_class < 1 || c.patch_h < 1 || c.patch_w < 1) {
        throw ConfigError("synth: all counts must be at least 1");
    }
    if (!(c.fg_fraction > 0.0 && c.fg_fraction <= 1.0)) throw ConfigError("synth: fg_fraction must lie in (0, 1]");
    if (!(c.text_align > 0.0 && c.text_align <= 1.0)) throw ConfigError("synth: text_align must lie in (0, 1]");
    if (!(c.unseen_bg_pull >= 0.0 && c.unseen_bg_pull <= 1.0) || !(c.seen_bg_pull >= 0.0 && c.seen_bg_pull <= 1.0)) {
        throw ConfigError("synth: background pulls must lie in [0, 1]");
    }
    if (!(c.unseen_bg_pull > c.seen_bg_pull)) {
        throw ConfigError("synth: unseen_bg_pull must exceed seen_bg_pull");
    }
    if (!(c.class_similarity >= 0.0 && c.class_similarity < 1.0)) {
        throw ConfigError("synth: class_similarity must lie in [0, 1)");
    }
    if (!(c.noise_sigma >= 0.0) || !std::isfinite(c.noise_sigma)) throw ConfigError("synth: noise_sigma must be >= 0");
}

SynthDataset synth_generate(const SynthConfig& cfg) {
    validate_synth_config(cfg);
    Rng rng(cfg.seed);
    const std::size_t d = cfg.dim;
    const std::size_t num_classes = cfg.num_seen + cfg.num_unseen;

    // Image prototypes share one common direction, so distinct classes have
    // cosine close to class_similarity.
    const FeatureVector common = random_unit(rng, d);
    std::vector<FeatureVector> prototypes;
    for (std::size_t c = 0; c < num_classes; ++c) {
        const FeatureVector own = random_unit(rng, d);
        FeatureVector mu(d);
        for (std::size_t i = 0; i < d; ++i) {
            mu[i] = std::sqrt(cfg.class_similarity) * common[i] + std::sqrt(1.0 - cfg.class_similarity) * own[i];
        }
        prototypes.push_back(normalized(mu));
    }

    Dataset ds;
    ds.header.dim = static_cast<std::uint32_t>(d);
    ds.header.num_classes = static_cast<std::uint32_t>(num_classes);
    ds.header.patch_h = static_cast<std::uint32_t>(cfg.patch_h);
    ds.header.patch_w = static_cast<std::uint32_t>(cfg.patch_w);
    ds.header.flags = kFlagPatches;

    const FeatureVector bg = random_unit(rng, d);

    // Every text embedding shares one off-axis direction, orthogonal to the
    // background and to all prototypes where the dimension allows. It lowers
    // the effective logit scale to logit_scale * text_align without biasing
    // any class, so a noise-free sample is always classified correctly.
    FeatureVector offset = random_unit(rng, d);
    {
        std::vector<FeatureVector> basis;
        auto project_out = [&](FeatureVector& v) {
            for (const auto& q : basis) {
                const double along = dot(v, q);
                for (std::size_t i = 0; i < d; ++i) v[i] -= along * q[i];
            }
        };
        std::vector<const FeatureVector*> span{&bg};
        for (const auto& mu : prototypes) span.push_back(&mu);
        for (const auto* v : span) {
            FeatureVector q = *v;
            project_out(q);
            if (l2_norm(q) < 1e-9) continue;
            FeatureVector trial = offset;
            basis.push_back(normalized(q));
            project_out(trial);
            if (l2_norm(trial) < 1e-6) {
                basis.pop_back();
                break;
            }
        }
        project_out(offset);
        offset = normalized(offset);
    }
    const double off_axis = std::sqrt(std::max(0.0, 1.0 - cfg.text_align * cfg.text_align));
    auto text_for = [&](const FeatureVector& mu) {
        FeatureVector text(d);
        for (std::size_t i = 0; i < d; ++i) text[i] = cfg.text_align * mu[i] + off_axis * offset[i];
        return to_f32(normalized(text));
    };
    for (std::size_t c = 0; c < num_classes; ++c) {
        char name[32];
        std::snprintf(name, sizeof name, "%s_%03zu", c < cfg.num_seen ? "seen" : "unseen", c);
        ds.classes.push_back({static_cast<ClassId>(c), name, text_for(prototypes[c])});
    }

    ds.background = text_for(bg);

    const std::size_t cells = cfg.patch_h * cfg.patch_w;
    const auto fg_cells = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(cfg.fg_fraction * static_cast<double>(cells) + 0.5)));

    std::vector<EmbeddingSample> generated;
    for (std::size_t c = 0; c < num_classes; ++c) {
        const auto& mu = prototypes[c];
        const double pull = c < cfg.num_seen ? cfg.seen_bg_pull : cfg.unseen_bg_pull;
        FeatureVector fg_center(d);
        for (std::size_t i = 0; i < d; ++i) fg_center[i] = (1.0 - pull) * mu[i] + pull * bg[i];

        for (std::size_t s = 0; s < cfg.samples_per_class; ++s) {
            EmbeddingSample sample;
            sample.class_id = static_cast<ClassId>(c);
            sample.global = noisy_unit(mu, rng, cfg.noise_sigma);

            std::vector<std::size_t> cell_order(cells);
            for (std::size_t i = 0; i < cells; ++i) cell_order[i] = i;
            rng.shuffle(cell_order);
            std::vector<bool> is_fg(cells, false);
            for (std::size_t i = 0; i < fg_cells; ++i) is_fg[cell_order[i]] = true;

            PatchGrid grid(cfg.patch_h, cfg.patch_w, d);
            for (std::size_t cell = 0; cell < cells; ++cell) {
                const auto v = noisy_unit(is_fg[cell] ? fg_center : bg, rng, cfg.noise_sigma);
                std::copy(v.begin(), v.end(), grid.values.begin() + static_cast<std::ptrdiff_t>(cell * d));
            }
            sample.patches = std::move(grid);
            generated.push_back(std::move(sample));
        }
    }

    SynthDataset out;
    out.stream.seed = cfg.seed;
    for (std::size_t c = 0; c < num_classes; ++c) {
        (c < cfg.num_seen ? out.stream.seen_class_ids : out.stream.unseen_class_ids).push_back(static_cast<ClassId>(c));
    }

    // Store samples in stream order; the sidecar order is then the identity.
    ds.samples = std::move(generated);
    const auto shuffled = build_order(ds, out.stream.unseen_class_ids, cfg.seed, {});
    std::vector<EmbeddingSample> ordered;
    ordered.reserve(shuffled.size());
    for (std::size_t idx : shuffled) ordered.push_back(std::move(ds.samples[idx]));
    ds.samples = std::move(ordered);
    ds.header.num_samples = static_cast<std::uint32_t>(ds.samples.size());

    out.stream.order.resize(ds.samples.size());
    for (std::size_t i = 0; i < out.stream.order.size(); ++i) out.stream.order[i] = i;
    out.dataset = std::move(ds);
    return out;
}

void to_json(nlohmann::json& j, const SynthConfig& c) {
    j = nlohmann::json{{"d", c.dim},
                       {"num_seen", c.num_seen},
                       {"num_unseen", c.num_unseen},
                       {"samples_per_class", c.samples_per_class},
                       {"patch_h", c.patch_h},
                       {"patch_w", c.patch_w},
                       {"fg_fraction", c.fg_fraction},
                       {"text_align", c.text_align},
                       {"unseen_bg_pull", c.unseen_bg_pull},
                       {"seen_bg_pull", c.seen_bg_pull},
                       {"class_similarity", c.class_similarity},
                       {"noise_sigma", c.noise_sigma},
                       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SynthConfig& c) {
    static const char* known[] = {"d", "num_seen", "num_unseen", "samples_per_class", "patch_h", "patch_w",
                                  "fg_fraction", "text_align", "unseen_bg_pull", "seen_bg_pull",
                                  "class_similarity", "noise_sigma", "seed"};
    for (const auto& [key, _] : j.items()) {
        if (std::find(std::begin(known), std::end(known), key) == std::end(known)) {
            throw ConfigError("synth: unknown key '" + key + "'");
        }
    }
    c = SynthConfig{};
    if (j.contains("d")) j.at("d").get_to(c.dim);
    if (j.contains("num_seen")) j.at("num_seen").get_to(c.num_seen);
    if (j.contains("num_unseen")) j.at("num_unseen").get_to(c.num_unseen);
    if (j.contains("samples_per_class")) j.at("samples_per_class").get_to(c.samples_per_class);
    if (j.contains("patch_h")) j.at("patch_h").get_to(c.patch_h);
    if (j.contains("patch_w")) j.at("patch_w").get_to(c.patch_w);
    if (j.contains("fg_fraction")) j.at("fg_fraction").get_to(c.fg_fraction);
    if (j.contains("text_align")) j.at("text_align").get_to(c.text_align);
    if (j.contains("unseen_bg_pull")) j.at("unseen_bg_pull").get_to(c.unseen_bg_pull);
    if (j.contains("seen_bg_pull")) j.at("seen_bg_pull").get_to(c.seen_bg_pull);
    if (j.contains("class_similarity")) j.at("class_similarity").get_to(c.class_similarity);
    if (j.contains("noise_sigma")) j.at("noise_sigma").get_to(c.noise_sigma);
    if (j.contains("seed")) j.at("seed").get_to(c.seed);
}

}  // namespace itta
