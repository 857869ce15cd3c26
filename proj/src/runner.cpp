#include "itta/runner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

namespace itta {

std::pair<Dataset, StreamSpec> load_stream(const RunConfig& config) {
    if (config.datasets.empty()) throw ConfigError("no dataset given");
    std::vector<Dataset> parts;
    for (const auto& path : config.datasets) parts.push_back(read_dataset(std::filesystem::path(path)));
    Dataset ds = concat_datasets(parts);
    StreamSpec stream = config.stream_file
                            ? read_stream_spec(*config.stream_file)
                            : build_stream(ds, config.unseen_ratio, config.seed,
                                           {config.stream_policy, config.staged_start});
    validate_stream(stream, ds);
    return {std::move(ds), std::move(stream)};
}

RunResult run_stream(const RunConfig& config) {
    validate_run_config(config);
    const auto [ds, stream] = load_stream(config);
    return run_stream(config, ds, stream);
}

RunResult run_stream(const RunConfig& config, const Dataset& ds, const StreamSpec& stream) {
    validate_run_config(config);
    if (stream.order.empty()) throw EmptyStreamError("the stream has no samples");
    validate_stream(stream, ds);

    ClassRegistry registry(ds.header.dim, ds.background);
    for (ClassId id : stream.seen_class_ids) registry.add(*ds.find_class(id), true);

    const bool needs_margin = config.strategy == Strategy::margin ||
                              (config.strategy == Strategy::segassist && config.base_uncertainty == UncertaintyKind::margin);
    if (needs_margin && registry.size() < 2) throw ConfigError("margin scoring needs at least two seen classes");
    if (config.strategy == Strategy::segassist && !ds.header.has_patches()) {
        throw ConfigError("segassist needs patch features, the dataset has none");
    }

    auto engine = make_engine(config.tta, config.tda, config.logit_scale);
    engine->initialize(registry);
    BudgetState budget(config.budget_rate, config.budget_window);

    SelectorConfig sel;
    sel.strategy = config.strategy;
    sel.segassist_base = config.base_uncertainty;
    sel.thresholds = {config.tau_msp, config.tau_entropy, config.tau_margin};
    sel.alpha = config.alpha;
    sel.topk = config.topk;
    sel.segmap = config.segmap_mode;
    sel.upsample_to = config.upsample_hw;
    sel.random_rate = config.budget_rate;
    Selector selector(sel, config.seed);

    RunResult result;
    AccuracyState accuracy;
    auto& timeline = result.timeline;
    timeline.stream_length = stream.order.size();
    {
        std::set<ClassId> present;
        for (std::size_t idx : stream.order) {
            const ClassId c = ds.samples[idx].class_id;
            if (!stream.is_seen(c)) present.insert(c);
        }
        timeline.total_unseen = present.size();
    }

    std::size_t on_unseen = 0;
    result.events.reserve(stream.order.size());
    for (std::size_t pos = 0; pos < stream.order.size(); ++pos) {
        const std::size_t index = pos + 1;
        const EmbeddingSample& sample = ds.samples[stream.order[pos]];
        const bool seen = stream.is_seen(sample.class_id);

        budget.tick();
        const Classification prediction = engine->predict(sample.global, registry);
        if (!seen) timeline.introductions.emplace(sample.class_id, index);
        accuracy.record({index, sample.class_id, prediction.predicted, seen});

        RunEvent event;
        event.stream_index = index;
        event.true_class_id = sample.class_id;
        event.predicted_class_id = prediction.predicted;
        event.registry_size = registry.size();
        for (std::size_t i : topk_indices(prediction.probabilities, 5)) {
            event.top.push_back({registry.entry(i).class_id, prediction.probabilities[i]});
        }
        event.decision = selector.decide(sample, prediction, registry, budget);
        if (event.decision.selected) {
            event.oracle = oracle_query(sample, ds, registry, index, *engine);
            if (event.oracle->was_new) timeline.detections.emplace(sample.class_id, index);
            if (!seen) ++on_unseen;
        }
        // Adaptation uses the pre-query pseudo-label, never the oracle answer.
        engine->observe(sample.global, prediction);
        result.events.push_back(std::move(event));
    }

    auto& report = result.report;
    std::tie(report.acc_seen, report.acc_unseen) = final_accuracies(accuracy);
    report.hm = std::isnan(report.acc_seen) || std::isnan(report.acc_unseen)
                    ? std::numeric_limits<double>::quiet_NaN()
                    : harmonic_mean(report.acc_seen, report.acc_unseen);
    result.curves = build_curves(timeline);
    report.icdd = icdd(timeline);
    report.icdd_warning = result.curves.no_unseen;
    report.queries_granted = budget.total_granted();
    report.queries_used = budget.total_consumed();
    report.queries_on_unseen = on_unseen;
    report.stream_length = stream.order.size();
    report.registry_size = registry.size();

    std::vector<std::pair<std::size_t, ClassId>> by_detection;
    for (const auto& [cls, at] : timeline.detections) by_detection.emplace_back(at, cls);
    std::sort(by_detection.begin(), by_detection.end());
    for (const auto& [at, cls] : by_detection) {
        report.detections.push_back({ds.find_class(cls)->name, timeline.introductions.at(cls), at});
    }
    for (const auto& [cls, tally] : accuracy.per_class()) {
        report.per_class_accuracy[ds.find_class(cls)->name] =
            100.0 * static_cast<double>(tally.correct) / static_cast<double>(tally.total);
    }
    report.config_echo = config;
    return result;
}

nlohmann::json event_to_json(const RunEvent& e, Strategy strategy) {
    nlohmann::json top = nlohmann::json::array();
    for (const auto& t : e.top) top.push_back({t.class_id, t.probability});
    const auto& d = e.decision;
    nlohmann::json oracle = nullptr;
    if (e.oracle) {
        oracle = {{"class", e.oracle->true_class_id},
                  {"was_new", e.oracle->was_new},
                  {"detection_index", e.oracle->detection_index ? nlohmann::json(*e.oracle->detection_index)
                                                                : nlohmann::json(nullptr)}};
    }
    return {{"index", e.stream_index},
            {"true_class", e.true_class_id},
            {"predicted", e.predicted_class_id},
            {"registry_size", e.registry_size},
            {"top5", top},
            {"strategy", to_string(strategy)},
            {"uncertain", d.uncertain},
            {"base_score", d.base_score},
            {"background_ratio", d.background_ratio ? nlohmann::json(*d.background_ratio) : nlohmann::json(nullptr)},
            {"selected", d.selected},
            {"denial_reason", d.denial_reason ? nlohmann::json(to_string(*d.denial_reason)) : nlohmann::json(nullptr)},
            {"oracle", oracle}};
}

void write_events_jsonl(const std::vector<RunEvent>& events, Strategy strategy, std::ostream& out) {
    for (const auto& e : events) out << event_to_json(e, strategy).dump() << '\n';
}

namespace {

template <typename Fn>
void write_file(const std::string& path, Fn&& fn) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    fn(out);
    out.flush();
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace

void emit_report(const RunResult& result, const RunConfig& config) {
    if (config.out_report) {
        write_file(*config.out_report, [&](std::ostream& out) { out << nlohmann::json(result.report).dump(2) << '\n'; });
    }
    if (config.out_events) {
        write_file(*config.out_events, [&](std::ostream& out) { write_events_jsonl(result.events, config.strategy, out); });
    }
    if (config.out_curves) {
        write_file(*config.out_curves, [&](std::ostream& out) { write_curves_csv(result.curves, config.curve_stride, out); });
    }
}

RunReport read_report(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return nlohmann::json::parse(in).get<RunReport>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("invalid report " + path.string() + ": " + e.what());
    }
}

}  // namespace itta
