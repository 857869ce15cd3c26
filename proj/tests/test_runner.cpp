#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "itta/runner.hpp"

using namespace itta;
namespace fs = std::filesystem;

namespace {

SynthConfig small_synth(std::uint64_t seed) {
    SynthConfig c;
    c.dim = 32;
    c.num_seen = 12;
    c.num_unseen = 4;
    c.samples_per_class = 25;
    c.patch_h = c.patch_w = 4;
    c.seed = seed;
    return c;
}

RunConfig small_run() {
    RunConfig c;
    c.budget_rate = 0.05;
    c.budget_window = 100;
    return c;
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("itta_test_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

void check_event_invariants(const RunResult& r, const Dataset& ds) {
    REQUIRE(r.events.size() == r.report.stream_length);
    std::size_t oracle_events = 0, last_size = 0;
    for (std::size_t i = 0; i < r.events.size(); ++i) {
        const auto& e = r.events[i];
        CHECK(e.stream_index == i + 1);
        CHECK(e.registry_size >= last_size);
        CHECK(e.registry_size <= ds.classes.size());
        last_size = e.registry_size;
        if (e.oracle) {
            ++oracle_events;
            CHECK(e.decision.selected);
            // A class found by this very query was not part of the prediction.
            if (e.oracle->was_new) {
                for (const auto& t : e.top) CHECK(t.class_id != e.oracle->true_class_id);
                if (i + 1 < r.events.size()) CHECK(r.events[i + 1].registry_size == e.registry_size + 1);
            }
        } else {
            CHECK_FALSE(e.decision.selected);
        }
    }
    CHECK(oracle_events == r.report.queries_used);
    CHECK(r.report.queries_used <= r.report.queries_granted);
    CHECK(r.report.queries_on_unseen <= r.report.queries_used);
    CHECK(r.report.detections.size() == r.timeline.detections.size());
}

}  // namespace

TEST_CASE("all-seen stream with a perfect classifier") {
    auto cfg = small_synth(4);
    cfg.noise_sigma = 0.0;
    cfg.text_align = 1.0;
    const auto syn = synth_generate(cfg);
    StreamSpec stream = syn.stream;
    stream.seen_class_ids.clear();
    for (const auto& c : syn.dataset.classes) stream.seen_class_ids.push_back(c.class_id);
    stream.unseen_class_ids.clear();

    const auto r = run_stream(small_run(), syn.dataset, stream);
    CHECK(r.report.acc_seen == 100.0);
    CHECK(std::isnan(r.report.acc_unseen));
    CHECK(std::isnan(r.report.hm));
    CHECK(r.report.detections.empty());
    CHECK(r.report.icdd == 0.0);
    CHECK(r.report.icdd_warning);
}

TEST_CASE("run config errors") {
    const auto syn = synth_generate(small_synth(1));
    auto bad = [&](auto&& mutate) {
        RunConfig c = small_run();
        mutate(c);
        CHECK_THROWS_AS(run_stream(c, syn.dataset, syn.stream), ConfigError);
    };
    bad([](RunConfig& c) { c.budget_rate = 0.0005; c.budget_window = 1000; });
    bad([](RunConfig& c) { c.budget_rate = 0.0; });
    bad([](RunConfig& c) { c.budget_rate = 1.0; });
    bad([](RunConfig& c) { c.topk = 0; });
    bad([](RunConfig& c) { c.alpha = 1.5; });
    bad([](RunConfig& c) { c.curve_stride = 0; });
    bad([](RunConfig& c) { c.tda.shot_capacity = 0; });

    auto no_patches = syn.dataset;
    no_patches.header.flags = 0;
    no_patches.header.patch_h = no_patches.header.patch_w = 0;
    for (auto& s : no_patches.samples) s.patches.reset();
    RunConfig seg = small_run();
    seg.strategy = Strategy::segassist;
    CHECK_THROWS_AS(run_stream(seg, no_patches, syn.stream), ConfigError);

    StreamSpec one_seen = syn.stream;
    const ClassId keep = one_seen.seen_class_ids.front();
    for (std::size_t i = 1; i < one_seen.seen_class_ids.size(); ++i) {
        one_seen.unseen_class_ids.push_back(one_seen.seen_class_ids[i]);
    }
    std::sort(one_seen.unseen_class_ids.begin(), one_seen.unseen_class_ids.end());
    one_seen.seen_class_ids = {keep};
    RunConfig margin = small_run();
    margin.strategy = Strategy::margin;
    CHECK_THROWS_AS(run_stream(margin, syn.dataset, one_seen), ConfigError);

    StreamSpec empty = syn.stream;
    empty.order.clear();
    CHECK_THROWS_AS(run_stream(small_run(), syn.dataset, empty), EmptyStreamError);

    CHECK_THROWS_AS(run_stream(RunConfig{}), ConfigError);
}

TEST_CASE("config json") {
    const auto j = nlohmann::json::parse(R"({
        "datasets": "a.bin,b.bin", "strategy": "segassist", "tta": "tda", "tau_msp": 0.3,
        "upsample_hw": [8, 16], "segmap_mode": "upsampled", "tda": {"shot_capacity": 4},
        "out": "r.json", "curve_stride": 10})");
    const auto c = j.get<RunConfig>();
    CHECK(c.datasets == std::vector<std::string>{"a.bin", "b.bin"});
    CHECK(c.strategy == Strategy::segassist);
    CHECK(c.tta == TtaKind::tda);
    CHECK(c.tau_msp == 0.3);
    CHECK(c.upsample_hw.height == 8);
    CHECK(c.upsample_hw.width == 16);
    CHECK(c.tda.shot_capacity == 4);
    CHECK(c.out_report == "r.json");
    CHECK(c.curve_stride == 10);

    const nlohmann::json echo = c;
    CHECK_FALSE(echo.contains("out"));
    const auto back = echo.get<RunConfig>();
    CHECK(nlohmann::json(back) == echo);

    CHECK_THROWS_AS(nlohmann::json::parse(R"({"stratgy": "msp"})").get<RunConfig>(), ConfigError);
    CHECK_THROWS_AS(nlohmann::json::parse(R"({"strategy": "oracle"})").get<RunConfig>(), ConfigError);
    CHECK_THROWS_AS(nlohmann::json::parse(R"({"topk": "five"})").get<RunConfig>(), ConfigError);
}

TEST_CASE("runs are deterministic and satisfy event invariants") {
    const auto syn = synth_generate(small_synth(2));
    for (Strategy s : {Strategy::random, Strategy::msp, Strategy::entropy, Strategy::margin, Strategy::segassist}) {
        for (TtaKind t : {TtaKind::zseval, TtaKind::tda}) {
            CAPTURE(to_string(s));
            RunConfig c = small_run();
            c.strategy = s;
            c.tta = t;
            c.seed = 11;
            const auto a = run_stream(c, syn.dataset, syn.stream);
            const auto b = run_stream(c, syn.dataset, syn.stream);
            CHECK(same_report(a.report, b.report));
            CHECK(nlohmann::json(a.report).dump() == nlohmann::json(b.report).dump());
            std::ostringstream ea, eb;
            write_events_jsonl(a.events, s, ea);
            write_events_jsonl(b.events, s, eb);
            CHECK(ea.str() == eb.str());
            check_event_invariants(a, syn.dataset);
        }
    }
}

TEST_CASE("prediction precedes the query it triggers") {
    auto cfg = small_synth(3);
    const auto syn = synth_generate(cfg);
    RunConfig c = small_run();
    c.strategy = Strategy::random;
    c.budget_rate = 0.5;
    c.budget_window = 2;
    const auto r = run_stream(c, syn.dataset, syn.stream);
    std::size_t found = 0;
    for (const auto& e : r.events) {
        if (e.oracle && e.oracle->was_new) {
            ++found;
            CHECK(e.predicted_class_id != e.true_class_id);
            CHECK(e.oracle->detection_index == e.stream_index);
        }
    }
    CHECK(found == cfg.num_unseen);
    CHECK(r.report.registry_size == syn.dataset.classes.size());
    for (const auto& d : r.report.detections) CHECK(d.detected_at >= d.introduced_at);
}

TEST_CASE("file based run over two concatenated datasets") {
    TempDir tmp;
    auto a_cfg = small_synth(5);
    auto b_cfg = a_cfg;
    b_cfg.seed = 5;
    b_cfg.noise_sigma = 0.2;
    const auto a = synth_generate(a_cfg);
    const auto b = synth_generate(b_cfg);
    write_dataset(a.dataset, tmp.path / "a.bin");
    write_dataset(b.dataset, tmp.path / "b.bin");

    RunConfig c = small_run();
    c.datasets = {(tmp.path / "a.bin").string(), (tmp.path / "b.bin").string()};
    c.strategy = Strategy::segassist;
    c.out_report = (tmp.path / "report.json").string();
    c.out_events = (tmp.path / "events.jsonl").string();
    c.out_curves = (tmp.path / "curves.csv").string();
    c.curve_stride = 10;
    const auto r = run_stream(c);
    CHECK(r.report.stream_length == a.dataset.samples.size() + b.dataset.samples.size());
    emit_report(r, c);

    const auto back = read_report(*c.out_report);
    CHECK(same_report(back, r.report));
    CHECK(back.config_echo.at("datasets").size() == 2);

    std::ifstream events(*c.out_events);
    std::string line;
    std::size_t n = 0;
    while (std::getline(events, line)) {
        const auto j = nlohmann::json::parse(line);
        CHECK(j.at("index") == ++n);
        CHECK(j.at("strategy") == "segassist");
    }
    CHECK(n == r.report.stream_length);

    const auto csv = slurp(*c.out_curves);
    CHECK(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')) == 1 + r.report.stream_length / 10);

    RunConfig missing = c;
    missing.datasets = {(tmp.path / "nope.bin").string()};
    CHECK_THROWS_AS(run_stream(missing), IoError);

    RunConfig unwritable = c;
    unwritable.out_report = (tmp.path / "no_dir" / "r.json").string();
    CHECK_THROWS_AS(emit_report(r, unwritable), IoError);
}

TEST_CASE("explicit stream sidecar") {
    TempDir tmp;
    const auto syn = synth_generate(small_synth(6));
    write_dataset(syn.dataset, tmp.path / "d.bin");
    write_stream_spec(syn.stream, tmp.path / "d.stream.json");
    RunConfig c = small_run();
    c.datasets = {(tmp.path / "d.bin").string()};
    c.stream_file = (tmp.path / "d.stream.json").string();
    const auto from_file = run_stream(c);
    const auto direct = run_stream(c, syn.dataset, syn.stream);
    CHECK(same_report(from_file.report, direct.report));
}
