#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "itta/core.hpp"
#include "itta/rng.hpp"

namespace itta {

inline constexpr char kDatasetMagic[4] = {'I', 'T', 'T', 'B'};
inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr std::uint32_t kFlagPatches = 1u << 0;

struct DatasetHeader {
    std::uint32_t version = kDatasetVersion;
    std::uint32_t dim = 0;
    std::uint32_t num_classes = 0;
    std::uint32_t num_samples = 0;
    std::uint32_t patch_h = 0;
    std::uint32_t patch_w = 0;
    std::uint32_t flags = 0;

    bool has_patches() const noexcept { return (flags & kFlagPatches) != 0; }
    friend bool operator==(const DatasetHeader&, const DatasetHeader&) = default;
};

/// Row-major grid of patch features, `height * width` vectors of `dim` values.
struct PatchGrid {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t dim = 0;
    std::vector<double> values;

    PatchGrid() = default;
    PatchGrid(std::size_t h, std::size_t w, std::size_t d) : height(h), width(w), dim(d), values(h * w * d) {}

    std::size_t cells() const noexcept { return height * width; }
    std::span<const double> feature(std::size_t row, std::size_t col) const {
        return {values.data() + (row * width + col) * dim, dim};
    }
    std::span<double> feature(std::size_t row, std::size_t col) {
        return {values.data() + (row * width + col) * dim, dim};
    }

    friend bool operator==(const PatchGrid&, const PatchGrid&) = default;
};

struct EmbeddingSample {
    ClassId class_id = 0;
    FeatureVector global;
    std::optional<PatchGrid> patches;

    friend bool operator==(const EmbeddingSample&, const EmbeddingSample&) = default;
};

struct Dataset {
    DatasetHeader header;
    std::vector<TextEmbedding> classes;
    FeatureVector background;
    std::vector<EmbeddingSample> samples;
    /// Sample counts of the source files when several files were concatenated.
    /// Shuffling never crosses a segment boundary. Empty means one segment.
    std::vector<std::size_t> segments;

    const TextEmbedding* find_class(ClassId id) const;

    friend bool operator==(const Dataset& a, const Dataset& b) {
        return a.header == b.header && a.classes == b.classes && a.background == b.background &&
               a.samples == b.samples;
    }
};

/// Checks header/payload consistency, unit norms and finiteness. Throws FormatError.
void validate_dataset(const Dataset& dataset);

/// Writes the binary format. Values are stored as little-endian f32.
std::size_t write_dataset(const Dataset& dataset, std::ostream& out);
std::size_t write_dataset(const Dataset& dataset, const std::filesystem::path& path);

/// Reads and fully validates the binary format. Every f32 is widened exactly to
/// double, so write(read(bytes)) reproduces the input bytes.
Dataset read_dataset(std::istream& in);
Dataset read_dataset(const std::filesystem::path& path);

/// Joins datasets whose class names overlap. Classes are matched by name and
/// must carry the same text embedding within `tolerance`; ids follow the first
/// file, unseen names receive fresh ids. Throws DataError on disagreement.
Dataset concat_datasets(const std::vector<Dataset>& parts, double tolerance = kUnitNormTolerance);

enum class StreamPolicy { shuffle, staged, file_order };

struct StreamOptions {
    StreamPolicy policy = StreamPolicy::shuffle;
    /// For `staged`: stream fraction at which the first unseen class appears.
    /// Remaining unseen classes are introduced at evenly spaced fractions after it.
    double staged_start = 0.2;
};

struct StreamSpec {
    std::uint64_t seed = 0;
    std::vector<ClassId> seen_class_ids;
    std::vector<ClassId> unseen_class_ids;
    std::vector<std::size_t> order;

    bool is_seen(ClassId id) const;
    friend bool operator==(const StreamSpec&, const StreamSpec&) = default;
};

/// Number of unseen classes for an unseen:seen ratio `r`: round-half-up of
/// total * r / (1 + r), at least one.
std::size_t unseen_class_count(std::size_t total_classes, double unseen_ratio);

StreamSpec build_stream(const Dataset& dataset, double unseen_ratio, std::uint64_t seed,
                        const StreamOptions& options = {});

/// Re-orders samples for a fixed class split.
std::vector<std::size_t> build_order(const Dataset& dataset, const std::vector<ClassId>& unseen,
                                     std::uint64_t seed, const StreamOptions& options);

/// Throws ConfigError if the spec does not describe a valid stream over `dataset`.
void validate_stream(const StreamSpec& stream, const Dataset& dataset);

void to_json(nlohmann::json& j, const StreamSpec& s);
void from_json(const nlohmann::json& j, StreamSpec& s);
void write_stream_spec(const StreamSpec& stream, const std::filesystem::path& path);
StreamSpec read_stream_spec(const std::filesystem::path& path);

StreamPolicy parse_stream_policy(const std::string& name);
std::string to_string(StreamPolicy policy);

struct SynthConfig {
    std::size_t dim = 64;
    std::size_t num_seen = 40;
    std::size_t num_unseen = 10;
    std::size_t samples_per_class = 50;
    std::size_t patch_h = 7;
    std::size_t patch_w = 7;
    double fg_fraction = 0.5;
    double text_align = 0.25;
    double unseen_bg_pull = 0.9;
    double seen_bg_pull = 0.2;
    double class_similarity = 0.85;
    double noise_sigma = 0.1;
    std::uint64_t seed = 0;
};

void to_json(nlohmann::json& j, const SynthConfig& c);
void from_json(const nlohmann::json& j, SynthConfig& c);

struct SynthDataset {
    Dataset dataset;
    StreamSpec stream;
};

/// Generates a dataset whose unseen classes have foreground patches pulled
/// toward the background prototype. Class ids [0, num_seen) are seen, the
/// rest unseen. Values are rounded to f32 so the in-memory dataset equals its
/// on-disk form.
SynthDataset synth_generate(const SynthConfig& config);
void validate_synth_config(const SynthConfig& config);

}  // namespace itta
