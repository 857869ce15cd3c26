#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "itta/core.hpp"

namespace itta {

struct PredictionRecord {
    std::size_t stream_index = 0;
    ClassId true_class_id = 0;
    ClassId predicted_class_id = 0;
    bool true_is_initially_seen = true;
};

struct ClassTally {
    std::size_t correct = 0;
    std::size_t total = 0;
    bool initially_seen = true;
};

/// Seen/unseen accuracy accumulator. Membership is the true class's status at
/// stream construction, not whether it has been detected yet.
class AccuracyState {
public:
    /// Throws StateError unless indices strictly increase.
    void record(const PredictionRecord& record);

    std::size_t seen_total() const noexcept { return seen_total_; }
    std::size_t unseen_total() const noexcept { return unseen_total_; }
    std::size_t seen_correct() const noexcept { return seen_correct_; }
    std::size_t unseen_correct() const noexcept { return unseen_correct_; }
    const std::map<ClassId, ClassTally>& per_class() const noexcept { return per_class_; }

private:
    std::optional<std::size_t> last_index_;
    std::size_t seen_total_ = 0, seen_correct_ = 0;
    std::size_t unseen_total_ = 0, unseen_correct_ = 0;
    std::map<ClassId, ClassTally> per_class_;
};

/// Percentages; a side with no samples is NaN.
std::pair<double, double> final_accuracies(const AccuracyState& state);

/// 2ab/(a+b), 0 when both are 0.
double harmonic_mean(double a, double b);

struct DetectionTimeline {
    std::map<ClassId, std::size_t> introductions;  ///< first stream index (1-based)
    std::map<ClassId, std::size_t> detections;
    std::size_t stream_length = 0;
    std::size_t total_unseen = 0;

    /// Throws InvariantError on detection without introduction, detection
    /// before introduction or indices outside 1..T.
    void validate() const;
};

struct DetectionCurves {
    std::vector<double> n_gt;   ///< value after sample i is at [i - 1]
    std::vector<double> n_det;
    bool no_unseen = false;     ///< U = 0: both curves are identically 0
};

DetectionCurves build_curves(const DetectionTimeline& timeline);

/// Right-rectangle area under a nondecreasing step curve on the grid i/T.
double auc_step(std::span<const double> curve);

/// AUC(n_gt) - AUC(n_det); 0 when no unseen class occurs.
double icdd(const DetectionTimeline& timeline);

struct DetectionRecord {
    std::string class_name;
    std::size_t introduced_at = 0;
    std::size_t detected_at = 0;

    friend bool operator==(const DetectionRecord&, const DetectionRecord&) = default;
};

struct RunReport {
    double acc_seen = 0.0;   ///< NaN when undefined
    double acc_unseen = 0.0;
    double hm = 0.0;
    double icdd = 0.0;
    bool icdd_warning = false;
    std::size_t queries_granted = 0;
    std::size_t queries_used = 0;
    std::size_t queries_on_unseen = 0;
    std::size_t stream_length = 0;
    std::size_t registry_size = 0;
    std::vector<DetectionRecord> detections;
    std::map<std::string, double> per_class_accuracy;
    nlohmann::json config_echo = nlohmann::json::object();

    double icdd_pct() const { return icdd * 100.0; }
    /// Fraction of consumed queries that landed on initially unseen classes.
    double unseen_query_fraction() const;
};

bool same_report(const RunReport& a, const RunReport& b);

void to_json(nlohmann::json& j, const RunReport& r);
void from_json(const nlohmann::json& j, RunReport& r);

/// CSV with columns index,t_norm,n_gt,n_det. Rows at multiples of `stride`
/// plus the final sample.
void write_curves_csv(const DetectionCurves& curves, std::size_t stride, std::ostream& out);

struct ComparisonRow {
    std::string label;
    double hm = 0.0;
    double icdd = 0.0;
    bool best_hm = false;
    bool best_icdd = false;
};

struct Comparison {
    std::vector<ComparisonRow> rows;  ///< sorted by descending HM
    std::vector<std::string> warnings;
};

/// Aligns HM/ICDD per (tta, strategy) label and flags the best entries; ties
/// flag every tied row. Throws UsageError on an empty list.
Comparison compare_runs(const std::vector<RunReport>& reports, const std::vector<std::string>& labels = {});

std::string format_comparison(const Comparison& comparison, bool csv);

std::string format_double(double value);

}  // namespace itta
