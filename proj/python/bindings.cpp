#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "itta/itta.hpp"

namespace py = pybind11;
using namespace itta;

namespace {

nlohmann::json parse(const std::string& text) {
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(e.what());
    }
}

std::string run_json(const std::string& config_json) {
    const RunConfig config = parse(config_json).get<RunConfig>();
    const RunResult result = run_stream(config);
    emit_report(result, config);
    return nlohmann::json(result.report).dump();
}

std::string synth_json(const std::string& config_json, const std::filesystem::path& out,
                       const std::optional<std::filesystem::path>& stream_out) {
    const auto syn = synth_generate(parse(config_json).get<SynthConfig>());
    write_dataset(syn.dataset, out);
    if (stream_out) write_stream_spec(syn.stream, *stream_out);
    return nlohmann::json(syn.stream).dump();
}

std::string split_json(const std::filesystem::path& dataset, double unseen_ratio, std::uint64_t seed,
                       const std::string& policy) {
    const auto ds = read_dataset(dataset);
    return nlohmann::json(build_stream(ds, unseen_ratio, seed, {parse_stream_policy(policy)})).dump();
}

py::dict dataset_info(const std::filesystem::path& path) {
    const auto ds = read_dataset(path);
    py::dict out;
    out["dim"] = ds.header.dim;
    out["num_classes"] = ds.header.num_classes;
    out["num_samples"] = ds.header.num_samples;
    out["patch_h"] = ds.header.patch_h;
    out["patch_w"] = ds.header.patch_w;
    out["has_patches"] = ds.header.has_patches();
    std::vector<std::string> names;
    for (const auto& c : ds.classes) names.push_back(c.name);
    out["class_names"] = names;
    std::vector<ClassId> labels;
    for (const auto& s : ds.samples) labels.push_back(s.class_id);
    out["labels"] = labels;
    return out;
}

double icdd_from(const std::map<ClassId, std::size_t>& introductions, const std::map<ClassId, std::size_t>& detections,
                 std::size_t stream_length, std::optional<std::size_t> total_unseen) {
    DetectionTimeline t;
    t.introductions = introductions;
    t.detections = detections;
    t.stream_length = stream_length;
    t.total_unseen = total_unseen.value_or(introductions.size());
    return icdd(t);
}

}  // namespace

PYBIND11_MODULE(_itta, m) {
    m.doc() = "Native core of the itta benchmark harness";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<UsageError>(m, "UsageError", base.ptr());
    py::register_exception<FormatError>(m, "FormatError", base.ptr());
    py::register_exception<IoError>(m, "IoError", base.ptr());
    py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
    py::register_exception<DegenerateInputError>(m, "DegenerateInputError", base.ptr());
    py::register_exception<EmptyRegistryError>(m, "EmptyRegistryError", base.ptr());
    py::register_exception<InvariantError>(m, "InvariantError", base.ptr());
    py::register_exception<StateError>(m, "StateError", base.ptr());
    py::register_exception<DataError>(m, "DataError", base.ptr());
    py::register_exception<EmptyStreamError>(m, "EmptyStreamError", base.ptr());

    m.attr("BACKGROUND_ID") = kBackgroundId;

    m.def("cosine_similarity", [](const std::vector<double>& a, const std::vector<double>& b) {
        return cosine_similarity(a, b);
    });
    m.def("softmax_scaled", [](const std::vector<double>& s, double scale) { return softmax_scaled(s, scale); },
          py::arg("similarities"), py::arg("logit_scale") = kDefaultLogitScale);

    py::class_<ClassRegistry>(m, "ClassRegistry")
        .def(py::init<std::size_t, FeatureVector>(), py::arg("dim"), py::arg("background"))
        .def(
            "add",
            [](ClassRegistry& r, ClassId id, const std::string& name, FeatureVector v, bool seen) {
                return r.add({id, name, std::move(v)}, seen);
            },
            py::arg("class_id"), py::arg("name"), py::arg("vector"), py::arg("initially_seen") = true)
        .def("__len__", &ClassRegistry::size)
        .def_property_readonly("dim", &ClassRegistry::dim)
        .def_property_readonly("class_ids",
                               [](const ClassRegistry& r) {
                                   std::vector<ClassId> ids;
                                   for (const auto& e : r.entries()) ids.push_back(e.class_id);
                                   return ids;
                               })
        .def("similarities", [](const ClassRegistry& r, const FeatureVector& f) { return r.similarities(f); });

    m.def(
        "classify",
        [](const FeatureVector& global, const ClassRegistry& registry, double scale) {
            const auto c = classify(global, registry, scale);
            return py::make_tuple(c.predicted, c.probabilities);
        },
        py::arg("global_feature"), py::arg("registry"), py::arg("logit_scale") = kDefaultLogitScale,
        "Returns (predicted class id, probabilities in registry order).");

    m.def(
        "uncertainty_score",
        [](const std::string& kind, const std::vector<double>& probs) {
            return uncertainty_score(parse_uncertainty_kind(kind), probs);
        },
        py::arg("kind"), py::arg("probabilities"));

    py::class_<BudgetState>(m, "BudgetState")
        .def(py::init<double, std::size_t>(), py::arg("rate"), py::arg("window"))
        .def("tick", &BudgetState::tick)
        .def("consume", &BudgetState::consume)
        .def_property_readonly("remaining", &BudgetState::remaining)
        .def_property_readonly("total_granted", &BudgetState::total_granted)
        .def_property_readonly("total_consumed", &BudgetState::total_consumed);

    m.def("harmonic_mean", &harmonic_mean);
    m.def("auc_step", [](const std::vector<double>& curve) { return auc_step(curve); });
    m.def("icdd", &icdd_from, py::arg("introductions"), py::arg("detections"), py::arg("stream_length"),
          py::arg("total_unseen") = py::none());

    m.def("dataset_info", &dataset_info, py::arg("path"));
    m.def("_synth", &synth_json, py::arg("config_json"), py::arg("out"), py::arg("stream_out") = py::none());
    m.def("_split", &split_json);
    m.def("_run", &run_json, py::call_guard<py::gil_scoped_release>());
}
