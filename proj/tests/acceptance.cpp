// Acceptance suite: one line per criterion, nonzero exit if any fails.
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "itta/itta.hpp"
#include "oracles.hpp"

using namespace itta;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    enum Kind { pass, fail, skip } kind = pass;
    std::string detail;
};

Outcome pass(std::string d) { return {Outcome::pass, std::move(d)}; }
Outcome fail(std::string d) { return {Outcome::fail, std::move(d)}; }

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

// 1 ---------------------------------------------------------------------------
Outcome hm_formula() {
    const double a = harmonic_mean(76.99, 54.83);
    const double b = harmonic_mean(80.53, 62.66);
    const std::string d = "hm(76.99, 54.83) = " + fmt("%.4f", a) + ", hm(80.53, 62.66) = " + fmt("%.4f", b);
    return std::abs(a - 64.05) <= 0.01 && std::abs(b - 70.48) <= 0.01 ? pass(d) : fail(d);
}

// 2 ---------------------------------------------------------------------------
Outcome icdd_oracle() {
    std::mt19937_64 gen(2024);
    double worst = 0.0;
    for (int i = 0; i < 2000; ++i) {
        const auto t = oracle::random_timeline(gen, 500, 20);
        worst = std::max(worst, std::abs(icdd(t) - oracle::icdd(t)));
    }
    bool immediate_ok = true, never_ok = true;
    for (int i = 0; i < 200; ++i) {
        auto t = oracle::random_timeline(gen, 500, 20);
        t.detections = t.introductions;
        immediate_ok = immediate_ok && icdd(t) == 0.0;
        DetectionTimeline never;
        never.stream_length = t.stream_length;
        never.total_unseen = 1;
        never.introductions[0] = 1;
        never_ok = never_ok && icdd(never) == 1.0;
    }
    const std::string d = "2000 timelines, max |diff| = " + fmt("%.3g", worst) + ", immediate -> 0: " +
                          (immediate_ok ? "yes" : "no") + ", never detected -> 1: " + (never_ok ? "yes" : "no");
    return worst <= 1e-12 && immediate_ok && never_ok ? pass(d) : fail(d);
}

// 3 ---------------------------------------------------------------------------
Outcome budget_exactness() {
    BudgetState b(0.01, 1000);
    std::vector<std::size_t> grants;
    for (std::size_t i = 1; i <= 10000; ++i) {
        const auto before = b.total_granted();
        b.tick();
        if (b.total_granted() != before) {
            if (b.total_granted() - before != 10) return fail("grant of size " + std::to_string(b.total_granted() - before));
            grants.push_back(i);
        }
    }
    const std::vector<std::size_t> expected{1, 1001, 2001, 3001, 4001, 5001, 6001, 7001, 8001, 9001};
    if (grants != expected || b.total_granted() != 100) return fail("grant schedule differs");

    // Carry-over: use 3 of the first window, then 12 at sample 1001 (7 + 10 available).
    BudgetState c(0.01, 1000);
    std::size_t used = 0;
    for (std::size_t i = 1; i <= 2000; ++i) {
        c.tick();
        if (i == 1) for (int k = 0; k < 3; ++k) used += c.consume();
        if (i == 1000 && c.remaining() != 7) return fail("carry-over before second grant");
        if (i == 1001) {
            if (c.remaining() != 17) return fail("carry-over after second grant");
            for (int k = 0; k < 20; ++k) used += c.consume();
        }
    }
    if (used != 20 || c.remaining() != 0) return fail("carry-over consumption");

    SynthConfig sc;
    sc.dim = 16;
    sc.samples_per_class = 200;
    sc.patch_h = sc.patch_w = 2;
    sc.seed = 3;
    const auto syn = synth_generate(sc);
    std::string d = "T=" + std::to_string(syn.stream.order.size()) + ", grants at 1,1001,...,9001; consumed:";
    for (Strategy s : {Strategy::random, Strategy::msp, Strategy::entropy, Strategy::margin, Strategy::segassist}) {
        RunConfig rc;
        rc.strategy = s;
        rc.seed = 3;
        const auto r = run_stream(rc, syn.dataset, syn.stream);
        std::size_t running = 0;
        for (const auto& e : r.events) {
            running += e.oracle ? 1 : 0;
            if (running > 10 * ((e.stream_index + 999) / 1000)) return fail(to_string(s) + " overspent");
        }
        if (r.report.queries_granted != 100 || r.report.queries_used > 100) return fail(to_string(s) + " budget totals");
        d += " " + to_string(s) + "=" + std::to_string(r.report.queries_used);
    }
    return pass(d);
}

// 4 ---------------------------------------------------------------------------
Outcome segassist_trend() {
    double frac[2] = {0, 0}, icdd_sum[2] = {0, 0}, hm_sum[2] = {0, 0};
    const int seeds = 10;
    for (int seed = 0; seed < seeds; ++seed) {
        SynthConfig sc;
        sc.seed = static_cast<std::uint64_t>(seed);
        const auto syn = synth_generate(sc);
        for (int k = 0; k < 2; ++k) {
            RunConfig rc;
            rc.strategy = k == 0 ? Strategy::msp : Strategy::segassist;
            rc.seed = sc.seed;
            const auto r = run_stream(rc, syn.dataset, syn.stream);
            frac[k] += r.report.unseen_query_fraction();
            icdd_sum[k] += r.report.icdd;
            hm_sum[k] += r.report.hm;
        }
    }
    for (int k = 0; k < 2; ++k) {
        frac[k] /= seeds;
        icdd_sum[k] /= seeds;
        hm_sum[k] /= seeds;
    }
    const std::string d = "unseen query fraction " + fmt("%.3f", frac[0]) + " -> " + fmt("%.3f", frac[1]) + ", ICDD " +
                          fmt("%.4f", icdd_sum[0]) + " -> " + fmt("%.4f", icdd_sum[1]) + ", HM " +
                          fmt("%.2f", hm_sum[0]) + " -> " + fmt("%.2f", hm_sum[1]) + " (MSP -> SegAssist, 10 seeds)";
    const bool ok = frac[1] > frac[0] && icdd_sum[1] <= icdd_sum[0] && hm_sum[1] >= hm_sum[0] - 0.5;
    return ok ? pass(d) : fail(d);
}

// 5 ---------------------------------------------------------------------------
Outcome segmentation_equivalence() {
    std::mt19937_64 gen(55);
    auto random_grid = [&](std::size_t h, std::size_t w, std::size_t d) {
        PatchGrid g(h, w, d);
        for (std::size_t i = 0; i < g.cells(); ++i) {
            const auto v = oracle::random_unit(gen, d);
            std::copy(v.begin(), v.end(), g.feature(i / w, i % w).begin());
        }
        return g;
    };
    std::size_t patch_mismatch = 0;
    for (int i = 0; i < 1000; ++i) {
        const std::size_t d = 4 + gen() % 29;
        const auto reg = oracle::random_registry(gen, 1 + gen() % 12, d);
        const auto grid = random_grid(1 + gen() % 7, 1 + gen() % 7, d);
        const auto probs = classify(oracle::random_unit(gen, d), reg).probabilities;
        const std::size_t k = 1 + gen() % 6;
        patch_mismatch += segment_patches(grid, probs, reg, k).labels != oracle::segment_patch_level(grid, probs, reg, k);
    }
    std::size_t up_mismatch = 0;
    for (int i = 0; i < 200; ++i) {
        const auto reg = oracle::random_registry(gen, 6, 8);
        const auto grid = random_grid(2, 2, 8);
        const auto probs = classify(oracle::random_unit(gen, 8), reg).probabilities;
        up_mismatch += segment_patches(grid, probs, reg, 5, Resolution{4, 4}).labels !=
                       oracle::segment_upsampled(grid, probs, reg, 5, 4, 4);
    }

    const auto syn = synth_generate(SynthConfig{});
    ClassRegistry reg(syn.dataset.header.dim, syn.dataset.background);
    for (ClassId id : syn.stream.seen_class_ids) reg.add(*syn.dataset.find_class(id), true);
    std::size_t agree = 0;
    for (const auto& s : syn.dataset.samples) {
        const auto probs = classify(s.global, reg).probabilities;
        const bool a = segassist_select(background_ratio(segment_patches(s.patches, probs, reg, 5)), 0.95);
        const bool b =
            segassist_select(background_ratio(segment_patches(s.patches, probs, reg, 5, Resolution{224, 224})), 0.95);
        agree += a == b;
    }
    const double agreement = static_cast<double>(agree) / static_cast<double>(syn.dataset.samples.size());
    const std::string d = "patch-level mismatches " + std::to_string(patch_mismatch) + "/1000, 2x2->4x4 mismatches " +
                          std::to_string(up_mismatch) + "/200, patch-level vs 224x224 agreement " +
                          fmt("%.1f%%", 100.0 * agreement);
    return patch_mismatch == 0 && up_mismatch == 0 && agreement >= 0.95 ? pass(d) : fail(d);
}

// 6 ---------------------------------------------------------------------------
Outcome tda_degeneracies() {
    SynthConfig sc;
    sc.seed = 6;
    const auto syn = synth_generate(sc);
    ClassRegistry reg(syn.dataset.header.dim, syn.dataset.background);
    for (ClassId id : syn.stream.seen_class_ids) reg.add(*syn.dataset.find_class(id), true);

    const TdaCache empty;
    TdaEngine engine;
    engine.initialize(reg);
    for (std::size_t idx : syn.stream.order) {
        const auto& s = syn.dataset.samples[idx];
        const auto zs = classify(s.global, reg);
        if (tda_predict(s.global, reg, empty) != zs) return fail("empty cache differs from zero-shot");
        engine.observe(s.global, engine.predict(s.global, reg));
        for (const auto& c : reg.entries()) {
            if (engine.cache().entries(c.class_id).size() > engine.cache().config().shot_capacity) {
                return fail("cache capacity exceeded");
            }
        }
    }

    RunConfig zs_cfg;
    zs_cfg.strategy = Strategy::segassist;
    RunConfig tda_cfg = zs_cfg;
    tda_cfg.tta = TtaKind::tda;
    tda_cfg.tda.residual_weight = 0.0;
    const auto a = run_stream(zs_cfg, syn.dataset, syn.stream);
    const auto b = run_stream(tda_cfg, syn.dataset, syn.stream);
    for (std::size_t i = 0; i < a.events.size(); ++i) {
        const auto& x = a.events[i];
        const auto& y = b.events[i];
        if (x.predicted_class_id != y.predicted_class_id || x.top.size() != y.top.size()) return fail("rw=0 run differs");
        for (std::size_t k = 0; k < x.top.size(); ++k) {
            if (x.top[k].class_id != y.top[k].class_id || x.top[k].probability != y.top[k].probability) {
                return fail("rw=0 probabilities differ");
            }
        }
    }
    if (!same_report(a.report, b.report) && a.report.hm != b.report.hm) return fail("rw=0 report differs");

    std::mt19937_64 gen(66);
    for (int seq = 0; seq < 10000; ++seq) {
        TdaConfig cfg;
        cfg.shot_capacity = 1 + gen() % 4;
        TdaCache cache(cfg);
        const std::size_t classes = 1 + gen() % 4;
        ClassRegistry small(3, {0, 0, 1});
        for (ClassId c = 0; c < classes; ++c) {
            cache.add_class(c);
            small.add({c, "c" + std::to_string(c), {1, 0, 0}}, true);
        }
        std::vector<std::pair<ClassId, double>> offers;
        const std::size_t len = gen() % 40;
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (std::size_t i = 0; i < len; ++i) {
            std::vector<double> p(classes);
            double sum = 0.0;
            for (double& x : p) sum += x = u(gen);
            for (double& x : p) x /= sum;
            const std::size_t top = argmax(p);
            const Classification pred{p, top, small.entry(top).class_id};
            offers.emplace_back(pred.predicted, normalized_entropy(p));
            tda_observe(std::vector<double>{1.0, 0.0, 0.0}, pred, cache);
        }
        const auto expected = oracle::tda_replay(offers, cfg.shot_capacity);
        for (ClassId c = 0; c < classes; ++c) {
            std::vector<double> got;
            for (const auto& e : cache.entries(c)) got.push_back(e.entropy);
            const auto it = expected.find(c);
            if (got != (it == expected.end() ? std::vector<double>{} : it->second)) return fail("replay oracle mismatch");
        }
    }
    return pass("empty cache and rw=0 match zero-shot over " + std::to_string(syn.stream.order.size()) +
                " samples, capacity held, 10000 replay sequences agree");
}

// 7 ---------------------------------------------------------------------------
Outcome registry_expansion() {
    SynthConfig sc;
    sc.noise_sigma = 0.0;
    sc.seed = 7;
    const auto syn = synth_generate(sc);
    RunConfig rc;
    rc.strategy = Strategy::segassist;
    rc.budget_rate = 0.05;
    rc.seed = 7;
    const auto r = run_stream(rc, syn.dataset, syn.stream);
    std::size_t post_total = 0, post_correct = 0;
    for (const auto& e : r.events) {
        const auto it = r.timeline.detections.find(e.true_class_id);
        if (it == r.timeline.detections.end() || e.stream_index <= it->second) continue;
        ++post_total;
        post_correct += e.predicted_class_id == e.true_class_id;
    }
    if (r.timeline.detections.empty()) return fail("no detections in the noise-free run");

    std::mt19937_64 gen(77);
    for (int i = 0; i < 500; ++i) {
        const std::size_t d = 4 + gen() % 60;
        auto reg = oracle::random_registry(gen, 1 + gen() % 30, d);
        const auto x = oracle::random_unit(gen, d);
        const auto before = reg.similarities(x);
        reg.add({100000, "new", oracle::random_unit(gen, d)}, false);
        const auto after = reg.similarities(x);
        if (!std::equal(before.begin(), before.end(), after.begin())) return fail("expansion changed old logits");
    }
    const std::string d = std::to_string(r.timeline.detections.size()) + " detections, post-detection accuracy " +
                          std::to_string(post_correct) + "/" + std::to_string(post_total) +
                          ", old logits bitwise unchanged over 500 expansions";
    return post_total > 0 && post_correct == post_total ? pass(d) : fail(d);
}

// 8 ---------------------------------------------------------------------------
std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

Outcome determinism(const std::string& cli) {
    if (cli.empty()) return fail("path to the itta executable not given");
    const fs::path dir = fs::temp_directory_path() / ("itta_accept_" + std::to_string(std::random_device{}()));
    fs::create_directories(dir);
    const std::string q = "\"";
    auto sh = [&](const std::string& cmd) { return std::system((cmd + " 2>/dev/null").c_str()); };
    SynthConfig sc;
    sc.seed = 8;
    std::ofstream(dir / "synth.json") << nlohmann::json(sc).dump();
    if (sh(q + cli + q + " synth --config " + q + (dir / "synth.json").string() + q + " --out " + q +
           (dir / "d.bin").string() + q + " --stream " + q + (dir / "d.json").string() + q) != 0) {
        fs::remove_all(dir);
        return fail("synth command failed");
    }
    bool same = true;
    for (const std::string tta : {"zseval", "tda"}) {
        for (const std::string strategy : {"segassist", "random"}) {
            for (const std::string run : {"a", "b"}) {
                const auto p = [&](const std::string& name) { return q + (dir / (run + name)).string() + q; };
                const std::string cmd = q + cli + q + " run --dataset " + q + (dir / "d.bin").string() + q + " --stream " +
                                        q + (dir / "d.json").string() + q + " --tta " + tta + " --strategy " + strategy +
                                        " --seed 8 --out " + p(".report.json") + " --events " + p(".events.jsonl") +
                                        " --curves " + p(".curves.csv");
                if (sh(cmd) != 0) {
                    fs::remove_all(dir);
                    return fail("run command failed: " + tta + "/" + strategy);
                }
            }
            for (const std::string name : {".report.json", ".events.jsonl", ".curves.csv"}) {
                const auto a = slurp(dir / ("a" + name));
                same = same && !a.empty() && a == slurp(dir / ("b" + name));
            }
        }
    }
    fs::remove_all(dir);
    return same ? pass("report, events and curves identical byte for byte across repeated CLI runs")
                : fail("outputs differ between repeated runs");
}

// 9 ---------------------------------------------------------------------------
Outcome real_features() {
    const char* path = std::getenv("ITTA_IMAGENET_R");
    if (path == nullptr || !fs::exists(path)) {
        return {Outcome::skip, "set ITTA_IMAGENET_R to an exported ImageNet-R feature file to enable"};
    }
    RunConfig rc;
    rc.datasets = {path};
    if (const char* stream = std::getenv("ITTA_IMAGENET_R_STREAM")) rc.stream_file = stream;
    rc.strategy = Strategy::msp;
    const auto msp = run_stream(rc);
    rc.strategy = Strategy::segassist;
    const auto seg = run_stream(rc);
    const std::string d = "HM MSP " + fmt("%.2f", msp.report.hm) + " (target 62.92 +- 2.0), SegAssist " +
                          fmt("%.2f", seg.report.hm);
    return std::abs(msp.report.hm - 62.92) <= 2.0 && seg.report.hm >= msp.report.hm ? pass(d) : fail(d);
}

}  // namespace

int main(int argc, char** argv) {
    const std::string cli = argc > 1 ? argv[1] : "";
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"harmonic mean reference values", hm_formula},
        {"ICDD equals the brute-force integrator", icdd_oracle},
        {"budget grants and consumption are exact", budget_exactness},
        {"SegAssist beats MSP on synthetic streams", segassist_trend},
        {"segmentation matches brute-force and interpolation oracles", segmentation_equivalence},
        {"TDA degenerates to zero-shot and keeps the minimal-entropy cache", tda_degeneracies},
        {"registry expansion enables correct post-detection predictions", registry_expansion},
        {"repeated CLI runs are bitwise identical", [&] { return determinism(cli); }},
        {"real ImageNet-R features reach the reference HM", real_features},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = fail(std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const char* tag = o.kind == Outcome::pass ? "[PASS]" : o.kind == Outcome::fail ? "[FAIL]" : "[SKIP]";
        failures += o.kind == Outcome::fail;
        std::cout << tag << " criterion " << i + 1 << ": " << criteria[i].first << " -- " << o.detail << " ("
                  << fmt("%.2f", secs) << " s)" << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
