#include "itta/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <limits>
#include <ostream>
#include <sstream>

namespace itta {

void AccuracyState::record(const PredictionRecord& r) {
    if (last_index_ && r.stream_index <= *last_index_) {
        throw StateError("prediction for stream index " + std::to_string(r.stream_index) + " arrived out of order");
    }
    last_index_ = r.stream_index;
    const bool correct = r.predicted_class_id == r.true_class_id;
    auto& tally = per_class_[r.true_class_id];
    tally.initially_seen = r.true_is_initially_seen;
    ++tally.total;
    if (correct) ++tally.correct;
    if (r.true_is_initially_seen) {
        ++seen_total_;
        if (correct) ++seen_correct_;
    } else {
        ++unseen_total_;
        if (correct) ++unseen_correct_;
    }
}

std::pair<double, double> final_accuracies(const AccuracyState& s) {
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();
    auto pct = [](std::size_t num, std::size_t den) {
        return den == 0 ? nan : 100.0 * static_cast<double>(num) / static_cast<double>(den);
    };
    return {pct(s.seen_correct(), s.seen_total()), pct(s.unseen_correct(), s.unseen_total())};
}

double harmonic_mean(double a, double b) {
    if (a + b == 0.0) return 0.0;
    return 2.0 * a * b / (a + b);
}

void DetectionTimeline::validate() const {
    for (const auto& [cls, intro] : introductions) {
        if (intro < 1 || intro > stream_length) {
            throw InvariantError("introduction index of class " + std::to_string(cls) + " outside 1..T");
        }
    }
    for (const auto& [cls, det] : detections) {
        auto it = introductions.find(cls);
        if (it == introductions.end()) {
            throw InvariantError("class " + std::to_string(cls) + " detected but never introduced");
        }
        if (det < it->second || det > stream_length) {
            throw InvariantError("class " + std::to_string(cls) + " detected outside [introduction, T]");
        }
    }
    if (introductions.size() > total_unseen) throw InvariantError("more introductions than unseen classes");
}

DetectionCurves build_curves(const DetectionTimeline& t) {
    if (t.stream_length < 1) throw InvariantError("stream length must be at least 1");
    t.validate();
    DetectionCurves out;
    out.n_gt.assign(t.stream_length, 0.0);
    out.n_det.assign(t.stream_length, 0.0);
    if (t.total_unseen == 0) {
        out.no_unseen = true;
        return out;
    }
    std::vector<std::size_t> gt_events(t.stream_length + 1, 0), det_events(t.stream_length + 1, 0);
    for (const auto& [_, i] : t.introductions) ++gt_events[i];
    for (const auto& [_, i] : t.detections) ++det_events[i];
    const double u = static_cast<double>(t.total_unseen);
    std::size_t gt = 0, det = 0;
    for (std::size_t i = 1; i <= t.stream_length; ++i) {
        gt += gt_events[i];
        det += det_events[i];
        out.n_gt[i - 1] = static_cast<double>(gt) / u;
        out.n_det[i - 1] = static_cast<double>(det) / u;
    }
    return out;
}

double auc_step(std::span<const double> curve) {
    if (curve.empty()) throw InvariantError("curve has no samples");
    double sum = 0.0;
    double prev = 0.0;
    for (double v : curve) {
        if (!(v >= 0.0 && v <= 1.0)) throw InvariantError("curve value outside [0, 1]");
        if (v < prev) throw InvariantError("curve is decreasing");
        prev = v;
        sum += v;
    }
    return sum / static_cast<double>(curve.size());
}

double icdd(const DetectionTimeline& timeline) {
    const auto curves = build_curves(timeline);
    if (curves.no_unseen) return 0.0;
    return auc_step(curves.n_gt) - auc_step(curves.n_det);
}

double RunReport::unseen_query_fraction() const {
    return queries_used == 0 ? 0.0 : static_cast<double>(queries_on_unseen) / static_cast<double>(queries_used);
}

namespace {

bool same_double(double a, double b) {
    return (std::isnan(a) && std::isnan(b)) || a == b;
}

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

double number_or_nan(const nlohmann::json& j, const char* key) {
    const auto& v = j.at(key);
    return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
}

}  // namespace

bool same_report(const RunReport& a, const RunReport& b) {
    if (!same_double(a.acc_seen, b.acc_seen) || !same_double(a.acc_unseen, b.acc_unseen) ||
        !same_double(a.hm, b.hm) || !same_double(a.icdd, b.icdd)) {
        return false;
    }
    if (a.per_class_accuracy.size() != b.per_class_accuracy.size()) return false;
    for (const auto& [k, v] : a.per_class_accuracy) {
        auto it = b.per_class_accuracy.find(k);
        if (it == b.per_class_accuracy.end() || !same_double(v, it->second)) return false;
    }
    return a.icdd_warning == b.icdd_warning && a.queries_granted == b.queries_granted &&
           a.queries_used == b.queries_used && a.queries_on_unseen == b.queries_on_unseen &&
           a.stream_length == b.stream_length && a.registry_size == b.registry_size &&
           a.detections == b.detections && a.config_echo == b.config_echo;
}

void to_json(nlohmann::json& j, const RunReport& r) {
    nlohmann::json detections = nlohmann::json::array();
    for (const auto& d : r.detections) {
        detections.push_back({{"class", d.class_name}, {"introduced_at", d.introduced_at}, {"detected_at", d.detected_at}});
    }
    nlohmann::json per_class = nlohmann::json::object();
    for (const auto& [name, acc] : r.per_class_accuracy) per_class[name] = number_or_null(acc);
    j = nlohmann::json{{"acc_seen", number_or_null(r.acc_seen)},
                       {"acc_unseen", number_or_null(r.acc_unseen)},
                       {"hm", number_or_null(r.hm)},
                       {"icdd", r.icdd},
                       {"icdd_pct", r.icdd_pct()},
                       {"icdd_warning", r.icdd_warning},
                       {"queries_granted", r.queries_granted},
                       {"queries_used", r.queries_used},
                       {"queries_on_unseen", r.queries_on_unseen},
                       {"stream_length", r.stream_length},
                       {"registry_size", r.registry_size},
                       {"detections", detections},
                       {"per_class_accuracy", per_class},
                       {"config_echo", r.config_echo}};
}

void from_json(const nlohmann::json& j, RunReport& r) {
    r = RunReport{};
    r.acc_seen = number_or_nan(j, "acc_seen");
    r.acc_unseen = number_or_nan(j, "acc_unseen");
    r.hm = number_or_nan(j, "hm");
    r.icdd = j.at("icdd").get<double>();
    r.icdd_warning = j.value("icdd_warning", false);
    r.queries_granted = j.at("queries_granted").get<std::size_t>();
    r.queries_used = j.at("queries_used").get<std::size_t>();
    r.queries_on_unseen = j.value("queries_on_unseen", std::size_t{0});
    r.stream_length = j.value("stream_length", std::size_t{0});
    r.registry_size = j.value("registry_size", std::size_t{0});
    for (const auto& d : j.at("detections")) {
        r.detections.push_back({d.at("class").get<std::string>(), d.at("introduced_at").get<std::size_t>(),
                                d.at("detected_at").get<std::size_t>()});
    }
    for (const auto& [name, v] : j.at("per_class_accuracy").items()) {
        r.per_class_accuracy[name] = v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
    }
    if (j.contains("config_echo")) r.config_echo = j.at("config_echo");
}

std::string format_double(double value) {
    if (std::isnan(value)) return "nan";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, res.ptr);
}

void write_curves_csv(const DetectionCurves& curves, std::size_t stride, std::ostream& out) {
    if (stride < 1) throw ConfigError("curve stride must be at least 1");
    const std::size_t n = curves.n_gt.size();
    out << "index,t_norm,n_gt,n_det\n";
    for (std::size_t i = 1; i <= n; ++i) {
        if (i % stride != 0 && i != n) continue;
        out << i << ',' << format_double(static_cast<double>(i) / static_cast<double>(n)) << ','
            << format_double(curves.n_gt[i - 1]) << ',' << format_double(curves.n_det[i - 1]) << '\n';
    }
}

Comparison compare_runs(const std::vector<RunReport>& reports, const std::vector<std::string>& labels) {
    if (reports.empty()) throw UsageError("compare needs at least one report");
    if (!labels.empty() && labels.size() != reports.size()) throw UsageError("one label per report required");
    Comparison out;
    if (reports.size() < 2) out.warnings.push_back("only one report given; nothing to compare against");

    const auto dataset_of = [](const RunReport& r) {
        return r.config_echo.contains("datasets") ? r.config_echo.at("datasets").dump() : std::string("?");
    };
    const std::string first_dataset = dataset_of(reports.front());
    for (std::size_t i = 0; i < reports.size(); ++i) {
        const auto& r = reports[i];
        if (dataset_of(r) != first_dataset) {
            out.warnings.push_back("report " + std::to_string(i) + " was produced on a different dataset");
        }
        ComparisonRow row;
        if (!labels.empty()) {
            row.label = labels[i];
        } else {
            row.label = r.config_echo.value("tta", std::string("?")) + "/" + r.config_echo.value("strategy", std::string("?"));
        }
        row.hm = r.hm;
        row.icdd = r.icdd;
        out.rows.push_back(std::move(row));
    }

    double best_hm = -std::numeric_limits<double>::infinity();
    double best_icdd = std::numeric_limits<double>::infinity();
    for (const auto& row : out.rows) {
        if (!std::isnan(row.hm)) best_hm = std::max(best_hm, row.hm);
        best_icdd = std::min(best_icdd, row.icdd);
    }
    for (auto& row : out.rows) {
        row.best_hm = row.hm == best_hm;
        row.best_icdd = row.icdd == best_icdd;
    }
    std::stable_sort(out.rows.begin(), out.rows.end(), [](const ComparisonRow& a, const ComparisonRow& b) {
        if (std::isnan(a.hm)) return false;
        if (std::isnan(b.hm)) return true;
        return a.hm > b.hm;
    });
    return out;
}

std::string format_comparison(const Comparison& c, bool csv) {
    std::ostringstream out;
    auto fixed = [](double v, int digits) {
        if (std::isnan(v)) return std::string("n/a");
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.*f", digits, v);
        return std::string(buf);
    };
    if (csv) {
        out << "label,hm,icdd,best_hm,best_icdd\n";
        for (const auto& r : c.rows) {
            out << r.label << ',' << format_double(r.hm) << ',' << format_double(r.icdd) << ',' << (r.best_hm ? 1 : 0)
                << ',' << (r.best_icdd ? 1 : 0) << '\n';
        }
        return out.str();
    }
    std::size_t width = 5;
    for (const auto& r : c.rows) width = std::max(width, r.label.size());
    char line[256];
    std::snprintf(line, sizeof line, "%-*s  %9s  %9s\n", static_cast<int>(width), "run", "HM", "ICDD");
    out << line;
    for (const auto& r : c.rows) {
        const std::string hm = fixed(r.hm, 2) + (r.best_hm ? "*" : " ");
        const std::string icdd = fixed(r.icdd, 4) + (r.best_icdd ? "*" : " ");
        std::snprintf(line, sizeof line, "%-*s  %9s  %9s\n", static_cast<int>(width), r.label.c_str(), hm.c_str(),
                      icdd.c_str());
        out << line;
    }
    return out.str();
}

}  // namespace itta
