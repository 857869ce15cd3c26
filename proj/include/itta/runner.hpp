#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "itta/active.hpp"
#include "itta/dataset.hpp"
#include "itta/metrics.hpp"
#include "itta/tta.hpp"

namespace itta {

struct RunConfig {
    std::vector<std::string> datasets;
    /// Optional sidecar holding the class split and order; otherwise built from
    /// `unseen_ratio`, `stream_policy` and `seed`.
    std::optional<std::string> stream_file;
    double unseen_ratio = 0.25;
    StreamPolicy stream_policy = StreamPolicy::shuffle;
    double staged_start = 0.2;

    Strategy strategy = Strategy::msp;
    UncertaintyKind base_uncertainty = UncertaintyKind::msp;
    TtaKind tta = TtaKind::zseval;
    double tau_msp = 0.2;
    double tau_entropy = 0.5;
    double tau_margin = 0.1;
    double alpha = 0.95;
    std::size_t topk = 5;
    double budget_rate = 0.01;
    std::size_t budget_window = 1000;
    double logit_scale = kDefaultLogitScale;
    std::uint64_t seed = 0;
    SegmentationSource segmap_mode = SegmentationSource::patch_level;
    Resolution upsample_hw{224, 224};
    TdaConfig tda;

    std::optional<std::string> out_report;
    std::optional<std::string> out_events;
    std::optional<std::string> out_curves;
    std::size_t curve_stride = 1;
};

/// Throws ConfigError on any violated constraint.
void validate_run_config(const RunConfig& config);

/// Unknown keys are rejected. Output paths are accepted under "out",
/// "events" and "curves".
void from_json(const nlohmann::json& j, RunConfig& c);
/// Every protocol-relevant field; used as the report's config echo.
void to_json(nlohmann::json& j, const RunConfig& c);
RunConfig read_run_config(const std::filesystem::path& path);

struct TopEntry {
    ClassId class_id = 0;
    double probability = 0.0;
};

struct RunEvent {
    std::size_t stream_index = 0;  ///< 1-based
    ClassId true_class_id = 0;
    ClassId predicted_class_id = 0;
    std::vector<TopEntry> top;     ///< top-5 of the prediction
    std::size_t registry_size = 0; ///< at prediction time
    SelectionDecision decision;
    std::optional<OracleResult> oracle;
};

struct RunResult {
    RunReport report;
    std::vector<RunEvent> events;
    DetectionCurves curves;
    DetectionTimeline timeline;
};

/// Loads (and concatenates) the configured datasets and their stream.
std::pair<Dataset, StreamSpec> load_stream(const RunConfig& config);

/// One full pass over the stream: predict, record, select, query, adapt.
RunResult run_stream(const RunConfig& config, const Dataset& dataset, const StreamSpec& stream);
RunResult run_stream(const RunConfig& config);

nlohmann::json event_to_json(const RunEvent& event, Strategy strategy);

void write_events_jsonl(const std::vector<RunEvent>& events, Strategy strategy, std::ostream& out);

/// Writes whichever of report/events/curves have a path configured.
void emit_report(const RunResult& result, const RunConfig& config);

RunReport read_report(const std::filesystem::path& path);

}  // namespace itta
