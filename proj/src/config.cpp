#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "itta/runner.hpp"

namespace itta {

namespace {

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) j.at(key).get_to(out);
}

}  // namespace

void validate_run_config(const RunConfig& c) {
    if (!(c.budget_rate > 0.0 && c.budget_rate < 1.0)) throw ConfigError("budget_rate must lie in (0, 1)");
    if (c.budget_window < 1) throw ConfigError("budget_window must be at least 1");
    if (budget_grant(c.budget_rate, c.budget_window) < 1) {
        throw ConfigError("budget_rate * budget_window must be at least 1");
    }
    if (c.topk < 1) throw ConfigError("topk must be at least 1");
    if (!(c.alpha >= 0.0 && c.alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
    if (!(c.logit_scale >= 0.0) || !std::isfinite(c.logit_scale)) throw ConfigError("logit_scale must be >= 0");
    if (!(c.unseen_ratio > 0.0) || !std::isfinite(c.unseen_ratio)) throw ConfigError("unseen_ratio must be > 0");
    for (double t : {c.tau_msp, c.tau_entropy, c.tau_margin}) {
        if (!std::isfinite(t)) throw ConfigError("thresholds must be finite");
    }
    if (c.segmap_mode == SegmentationSource::upsampled && (c.upsample_hw.height == 0 || c.upsample_hw.width == 0)) {
        throw ConfigError("upsample_hw must be positive");
    }
    if (c.curve_stride < 1) throw ConfigError("curve_stride must be at least 1");
    validate_tda_config(c.tda);
}

void from_json(const nlohmann::json& j, RunConfig& c) {
    static const std::set<std::string> known = {
        "datasets", "dataset", "stream", "unseen_ratio", "stream_policy", "staged_start", "strategy",
        "base_uncertainty", "tta", "tau_msp", "tau_entropy", "tau_margin", "alpha", "topk", "budget_rate",
        "budget_window", "logit_scale", "seed", "segmap_mode", "upsample_hw", "tda", "out", "events", "curves",
        "curve_stride"};
    if (!j.is_object()) throw ConfigError("run config must be a JSON object");
    for (const auto& [key, _] : j.items()) {
        if (!known.contains(key)) throw ConfigError("unknown config key '" + key + "'");
    }
    try {
        c = RunConfig{};
        for (const char* key : {"datasets", "dataset"}) {
            if (!j.contains(key)) continue;
            const auto& v = j.at(key);
            c.datasets = v.is_string() ? split_list(v.get<std::string>()) : v.get<std::vector<std::string>>();
        }
        if (j.contains("stream") && !j.at("stream").is_null()) c.stream_file = j.at("stream").get<std::string>();
        maybe(j, "unseen_ratio", c.unseen_ratio);
        if (j.contains("stream_policy")) c.stream_policy = parse_stream_policy(j.at("stream_policy").get<std::string>());
        maybe(j, "staged_start", c.staged_start);
        if (j.contains("strategy")) c.strategy = parse_strategy(j.at("strategy").get<std::string>());
        if (j.contains("base_uncertainty")) {
            c.base_uncertainty = parse_uncertainty_kind(j.at("base_uncertainty").get<std::string>());
        }
        if (j.contains("tta")) c.tta = parse_tta_kind(j.at("tta").get<std::string>());
        maybe(j, "tau_msp", c.tau_msp);
        maybe(j, "tau_entropy", c.tau_entropy);
        maybe(j, "tau_margin", c.tau_margin);
        maybe(j, "alpha", c.alpha);
        maybe(j, "topk", c.topk);
        maybe(j, "budget_rate", c.budget_rate);
        maybe(j, "budget_window", c.budget_window);
        maybe(j, "logit_scale", c.logit_scale);
        maybe(j, "seed", c.seed);
        if (j.contains("segmap_mode")) c.segmap_mode = parse_segmentation_source(j.at("segmap_mode").get<std::string>());
        if (j.contains("upsample_hw")) {
            const auto hw = j.at("upsample_hw").get<std::vector<std::size_t>>();
            if (hw.size() != 2) throw ConfigError("upsample_hw must be [height, width]");
            c.upsample_hw = {hw[0], hw[1]};
        }
        if (j.contains("tda")) {
            static const std::set<std::string> tda_keys = {"shot_capacity", "residual_weight", "sharpness",
                                                           "entropy_gate"};
            const auto& t = j.at("tda");
            for (const auto& [key, _] : t.items()) {
                if (!tda_keys.contains(key)) throw ConfigError("unknown tda key '" + key + "'");
            }
            maybe(t, "shot_capacity", c.tda.shot_capacity);
            maybe(t, "residual_weight", c.tda.residual_weight);
            maybe(t, "sharpness", c.tda.sharpness);
            if (t.contains("entropy_gate")) {
                const auto gate = t.at("entropy_gate").get<std::vector<double>>();
                if (gate.size() != 2) throw ConfigError("tda.entropy_gate must be [lo, hi]");
                c.tda.entropy_lo = gate[0];
                c.tda.entropy_hi = gate[1];
            }
        }
        if (j.contains("out")) c.out_report = j.at("out").get<std::string>();
        if (j.contains("events")) c.out_events = j.at("events").get<std::string>();
        if (j.contains("curves")) c.out_curves = j.at("curves").get<std::string>();
        maybe(j, "curve_stride", c.curve_stride);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid run config: ") + e.what());
    }
}

void to_json(nlohmann::json& j, const RunConfig& c) {
    j = nlohmann::json{{"datasets", c.datasets},
                       {"stream", c.stream_file ? nlohmann::json(*c.stream_file) : nlohmann::json(nullptr)},
                       {"unseen_ratio", c.unseen_ratio},
                       {"stream_policy", to_string(c.stream_policy)},
                       {"staged_start", c.staged_start},
                       {"strategy", to_string(c.strategy)},
                       {"base_uncertainty", to_string(c.base_uncertainty)},
                       {"tta", to_string(c.tta)},
                       {"tau_msp", c.tau_msp},
                       {"tau_entropy", c.tau_entropy},
                       {"tau_margin", c.tau_margin},
                       {"alpha", c.alpha},
                       {"topk", c.topk},
                       {"budget_rate", c.budget_rate},
                       {"budget_window", c.budget_window},
                       {"logit_scale", c.logit_scale},
                       {"seed", c.seed},
                       {"segmap_mode", to_string(c.segmap_mode)},
                       {"upsample_hw", {c.upsample_hw.height, c.upsample_hw.width}},
                       {"tda",
                        {{"shot_capacity", c.tda.shot_capacity},
                         {"residual_weight", c.tda.residual_weight},
                         {"sharpness", c.tda.sharpness},
                         {"entropy_gate", {c.tda.entropy_lo, c.tda.entropy_hi}}}}};
}

RunConfig read_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("cannot parse " + path.string() + ": " + e.what());
    }
    return j.get<RunConfig>();
}

}  // namespace itta
