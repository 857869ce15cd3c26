#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "itta/itta.hpp"

namespace {

using namespace itta;

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("invalid JSON in " + path + ": " + e.what());
    }
}

struct RunFlags {
    std::string config;
    std::optional<std::string> dataset, stream, strategy, base, tta, segmap, out, events, curves;
    std::optional<double> tau, entropy_thresh, margin_thresh, alpha, budget_rate, unseen_ratio, logit_scale;
    std::optional<std::size_t> topk, budget_window, curve_stride;
    std::optional<std::uint64_t> seed;
};

template <typename T>
void apply(const std::optional<T>& flag, T& target) {
    if (flag) target = *flag;
}

int cmd_run(const RunFlags& f) {
    RunConfig c;
    if (!f.config.empty()) c = read_json_file(f.config).get<RunConfig>();
    if (f.dataset) {
        c.datasets.clear();
        std::stringstream list(*f.dataset);
        for (std::string part; std::getline(list, part, ',');) {
            if (!part.empty()) c.datasets.push_back(part);
        }
    }
    if (f.stream) c.stream_file = *f.stream;
    if (f.strategy) c.strategy = parse_strategy(*f.strategy);
    if (f.base) c.base_uncertainty = parse_uncertainty_kind(*f.base);
    if (f.tta) c.tta = parse_tta_kind(*f.tta);
    if (f.segmap) c.segmap_mode = parse_segmentation_source(*f.segmap);
    apply(f.tau, c.tau_msp);
    apply(f.entropy_thresh, c.tau_entropy);
    apply(f.margin_thresh, c.tau_margin);
    apply(f.alpha, c.alpha);
    apply(f.budget_rate, c.budget_rate);
    apply(f.unseen_ratio, c.unseen_ratio);
    apply(f.logit_scale, c.logit_scale);
    apply(f.topk, c.topk);
    apply(f.budget_window, c.budget_window);
    apply(f.curve_stride, c.curve_stride);
    apply(f.seed, c.seed);
    if (f.out) c.out_report = *f.out;
    if (f.events) c.out_events = *f.events;
    if (f.curves) c.out_curves = *f.curves;

    const auto start = std::chrono::steady_clock::now();
    const auto result = run_stream(c);
    emit_report(result, c);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const auto& r = result.report;
    std::cerr << "itta: " << r.stream_length << " samples in " << secs << " s, acc_seen " << format_double(r.acc_seen)
              << ", acc_unseen " << format_double(r.acc_unseen) << ", hm " << format_double(r.hm) << ", icdd "
              << format_double(r.icdd) << ", queries " << r.queries_used << "/" << r.queries_granted << '\n';
    if (!c.out_report) std::cout << nlohmann::json(r).dump(2) << '\n';
    return 0;
}

int cmd_synth(const std::string& config, const std::string& out, const std::optional<std::string>& stream) {
    SynthConfig c;
    if (!config.empty()) c = read_json_file(config).get<SynthConfig>();
    const auto syn = synth_generate(c);
    const auto bytes = write_dataset(syn.dataset, out);
    if (stream) write_stream_spec(syn.stream, *stream);
    std::cerr << "itta: wrote " << syn.dataset.samples.size() << " samples (" << bytes << " bytes) to " << out << '\n';
    return 0;
}

int cmd_split(const std::string& dataset, double ratio, std::uint64_t seed, const std::string& out,
              const std::string& policy, double staged_start) {
    const auto ds = read_dataset(std::filesystem::path(dataset));
    const auto spec = build_stream(ds, ratio, seed, {parse_stream_policy(policy), staged_start});
    write_stream_spec(spec, out);
    std::cerr << "itta: " << spec.seen_class_ids.size() << " seen / " << spec.unseen_class_ids.size()
              << " unseen classes, " << spec.order.size() << " samples\n";
    return 0;
}

int cmd_compare(const std::vector<std::string>& paths, const std::vector<std::string>& labels, bool csv) {
    std::vector<RunReport> reports;
    for (const auto& p : paths) reports.push_back(read_report(p));
    const auto cmp = compare_runs(reports, labels);
    for (const auto& w : cmp.warnings) std::cerr << "itta: warning: " << w << '\n';
    std::cout << format_comparison(cmp, csv);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Interactive test-time adaptation benchmark harness"};
    app.require_subcommand(1);

    RunFlags rf;
    auto* run = app.add_subcommand("run", "Run one stream and write the report, event log and curves");
    run->add_option("--config", rf.config, "Run configuration (JSON)")->check(CLI::ExistingFile);
    run->add_option("--dataset", rf.dataset, "Dataset file(s), comma separated, concatenated in order");
    run->add_option("--stream", rf.stream, "Stream sidecar (JSON) fixing split and order");
    run->add_option("--strategy", rf.strategy, "random|msp|entropy|margin|segassist");
    run->add_option("--base", rf.base, "Base uncertainty for segassist: msp|entropy|margin");
    run->add_option("--tta", rf.tta, "zseval|tda");
    run->add_option("--segmap", rf.segmap, "patch_level|upsampled");
    run->add_option("--tau", rf.tau, "MSP threshold");
    run->add_option("--entropy-thresh", rf.entropy_thresh, "Normalized entropy threshold");
    run->add_option("--margin-thresh", rf.margin_thresh, "Margin threshold");
    run->add_option("--alpha", rf.alpha, "Background ratio threshold");
    run->add_option("--topk", rf.topk, "Candidate classes for segmentation");
    run->add_option("--budget-rate", rf.budget_rate, "Queries per sample");
    run->add_option("--budget-window", rf.budget_window, "Replenishment window in samples");
    run->add_option("--unseen-ratio", rf.unseen_ratio, "Unseen class fraction when no stream file is given");
    run->add_option("--logit-scale", rf.logit_scale, "Softmax scale on cosine similarities");
    run->add_option("--seed", rf.seed, "Seed for the stream and random selection");
    run->add_option("--out", rf.out, "Report JSON path (stdout when omitted)");
    run->add_option("--events", rf.events, "Event log path (JSON lines)");
    run->add_option("--curves", rf.curves, "Detection curve CSV path");
    run->add_option("--curve-stride", rf.curve_stride, "Keep every n-th curve row");

    std::string synth_config, synth_out;
    std::optional<std::string> synth_stream;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic embedding dataset");
    synth->add_option("--config", synth_config, "Generator configuration (JSON)")->check(CLI::ExistingFile);
    synth->add_option("--out", synth_out, "Output dataset path")->required();
    synth->add_option("--stream", synth_stream, "Also write the default stream sidecar here");

    std::string split_dataset, split_out, split_policy = "shuffle";
    double split_ratio = 0.25, split_staged = 0.2;
    std::uint64_t split_seed = 0;
    auto* split = app.add_subcommand("split", "Build a seen/unseen split and stream order");
    split->add_option("--dataset", split_dataset, "Dataset file")->required()->check(CLI::ExistingFile);
    split->add_option("--unseen-ratio", split_ratio, "Unseen class fraction");
    split->add_option("--seed", split_seed, "Seed");
    split->add_option("--policy", split_policy, "shuffle|staged|file_order");
    split->add_option("--staged-start", split_staged, "Stream fraction before the first unseen class");
    split->add_option("--out", split_out, "Output stream sidecar")->required();

    std::vector<std::string> cmp_paths, cmp_labels;
    bool cmp_csv = false;
    auto* compare = app.add_subcommand("compare", "Tabulate HM and ICDD over several reports");
    compare->add_option("reports", cmp_paths, "Report files")->required()->check(CLI::ExistingFile);
    compare->add_option("--label", cmp_labels, "One label per report");
    compare->add_flag("--csv", cmp_csv, "CSV output");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) return cmd_run(rf);
        if (*synth) return cmd_synth(synth_config, synth_out, synth_stream);
        if (*split) return cmd_split(split_dataset, split_ratio, split_seed, split_out, split_policy, split_staged);
        if (*compare) return cmd_compare(cmp_paths, cmp_labels, cmp_csv);
    } catch (const itta::ConfigError& e) {
        std::cerr << "itta: configuration error: " << e.what() << '\n';
        return 2;
    } catch (const itta::UsageError& e) {
        std::cerr << "itta: " << e.what() << '\n';
        return 2;
    } catch (const itta::Error& e) {
        std::cerr << "itta: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "itta: unexpected error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
