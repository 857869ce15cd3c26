#include "itta/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <numbers>
#include <numeric>
#include <ostream>
#include <set>

namespace itta {

namespace {

class ByteWriter {
public:
    explicit ByteWriter(std::ostream& out) : out_(out) {}

    void u16(std::uint16_t v) {
        const unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
        put(b, 2);
    }
    void u32(std::uint32_t v) {
        unsigned char b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        put(b, 4);
    }
    void f32(double v) { u32(std::bit_cast<std::uint32_t>(static_cast<float>(v))); }
    void vec(std::span<const double> v) {
        for (double x : v) f32(x);
    }
    void raw(const void* data, std::size_t n) { put(data, n); }

    std::size_t written() const noexcept { return written_; }

private:
    void put(const void* data, std::size_t n) {
        out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
        if (!out_) throw IoError("write failed");
        written_ += n;
    }

    std::ostream& out_;
    std::size_t written_ = 0;
};

class ByteReader {
public:
    explicit ByteReader(std::istream& in) : in_(in) {}

    void raw(void* data, std::size_t n) {
        in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(in_.gcount()) != n) throw FormatError("truncated payload");
    }
    std::uint16_t u16() {
        unsigned char b[2];
        raw(b, 2);
        return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
    }
    std::uint32_t u32() {
        unsigned char b[4];
        raw(b, 4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
        return v;
    }
    void vec(std::vector<double>& out, std::size_t n) {
        out.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const float f = std::bit_cast<float>(u32());
            if (!std::isfinite(f)) throw FormatError("nan/inf value in payload");
            out[i] = static_cast<double>(f);
        }
    }
    bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

private:
    std::istream& in_;
};

void require_unit(std::span<const double> v, const std::string& what) {
    for (double x : v) {
        if (!std::isfinite(x)) throw FormatError("nan/inf value in " + what);
    }
    if (!is_unit_norm(v)) throw FormatError(what + " is not unit-norm");
}

}  // namespace

const TextEmbedding* Dataset::find_class(ClassId id) const {
    for (const auto& c : classes) {
        if (c.class_id == id) return &c;
    }
    return nullptr;
}

void validate_dataset(const Dataset& ds) {
    const auto& h = ds.header;
    if (h.version != kDatasetVersion) throw FormatError("unsupported version " + std::to_string(h.version));
    if (h.dim < 2) throw FormatError("dimension must be at least 2");
    if (h.has_patches() && h.patch_h * h.patch_w == 0) throw FormatError("empty patch grid");
    if (h.num_classes != ds.classes.size()) throw FormatError("num_classes does not match the class table");
    if (h.num_samples != ds.samples.size()) throw FormatError("num_samples does not match the payload");
    if (ds.background.size() != h.dim) throw FormatError("background dimension mismatch");
    require_unit(ds.background, "background embedding");

    std::set<ClassId> ids;
    for (const auto& c : ds.classes) {
        if (c.class_id >= h.num_classes) throw FormatError("class id out of range: " + std::to_string(c.class_id));
        if (!ids.insert(c.class_id).second) throw FormatError("duplicate class id " + std::to_string(c.class_id));
        if (c.name.size() > 0xFFFF) throw FormatError("class name too long");
        if (c.vector.size() != h.dim) throw FormatError("text embedding dimension mismatch");
        require_unit(c.vector, "text embedding of '" + c.name + "'");
    }
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const auto& s = ds.samples[i];
        const std::string where = "sample " + std::to_string(i);
        if (!ids.contains(s.class_id)) throw FormatError(where + ": unknown class id " + std::to_string(s.class_id));
        if (s.global.size() != h.dim) throw FormatError(where + ": global dimension mismatch");
        require_unit(s.global, where + " global feature");
        if (h.has_patches() != s.patches.has_value()) throw FormatError(where + ": patch presence disagrees with flags");
        if (s.patches) {
            const auto& p = *s.patches;
            if (p.height != h.patch_h || p.width != h.patch_w || p.dim != h.dim ||
                p.values.size() != p.cells() * p.dim) {
                throw FormatError(where + ": patch grid shape mismatch");
            }
            for (std::size_t r = 0; r < p.height; ++r) {
                for (std::size_t c = 0; c < p.width; ++c) require_unit(p.feature(r, c), where + " patch");
            }
        }
    }
}

std::size_t write_dataset(const Dataset& ds, std::ostream& out) {
    validate_dataset(ds);
    const auto& h = ds.header;
    ByteWriter w(out);
    w.raw(kDatasetMagic, 4);
    w.u32(h.version);
    w.u32(h.dim);
    w.u32(h.num_classes);
    w.u32(h.num_samples);
    w.u32(h.patch_h);
    w.u32(h.patch_w);
    w.u32(h.flags);
    for (const auto& c : ds.classes) {
        w.u32(c.class_id);
        w.u16(static_cast<std::uint16_t>(c.name.size()));
        w.raw(c.name.data(), c.name.size());
        w.vec(c.vector);
    }
    w.vec(ds.background);
    for (const auto& s : ds.samples) {
        w.u32(s.class_id);
        w.vec(s.global);
        if (s.patches) w.vec(s.patches->values);
    }
    return w.written();
}

std::size_t write_dataset(const Dataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    const auto n = write_dataset(ds, out);
    out.flush();
    if (!out) throw IoError("write failed: " + path.string());
    return n;
}

Dataset read_dataset(std::istream& in) {
    ByteReader r(in);
    char magic[4];
    r.raw(magic, 4);
    if (std::memcmp(magic, kDatasetMagic, 4) != 0) throw FormatError("bad magic");

    Dataset ds;
    auto& h = ds.header;
    h.version = r.u32();
    if (h.version != kDatasetVersion) throw FormatError("unsupported version " + std::to_string(h.version));
    h.dim = r.u32();
    h.num_classes = r.u32();
    h.num_samples = r.u32();
    h.patch_h = r.u32();
    h.patch_w = r.u32();
    h.flags = r.u32();
    if (h.dim < 2) throw FormatError("dimension must be at least 2");
    if (h.has_patches() && static_cast<std::uint64_t>(h.patch_h) * h.patch_w == 0) {
        throw FormatError("empty patch grid");
    }

    // Sizes come from an untrusted header, so grow containers as records arrive.
    for (std::uint32_t i = 0; i < h.num_classes; ++i) {
        TextEmbedding c;
        c.class_id = r.u32();
        c.name.resize(r.u16());
        r.raw(c.name.data(), c.name.size());
        r.vec(c.vector, h.dim);
        ds.classes.push_back(std::move(c));
    }
    r.vec(ds.background, h.dim);
    for (std::uint32_t i = 0; i < h.num_samples; ++i) {
        EmbeddingSample s;
        s.class_id = r.u32();
        r.vec(s.global, h.dim);
        if (h.has_patches()) {
            PatchGrid grid;
            grid.height = h.patch_h;
            grid.width = h.patch_w;
            grid.dim = h.dim;
            r.vec(grid.values, grid.cells() * grid.dim);
            s.patches = std::move(grid);
        }
        ds.samples.push_back(std::move(s));
    }
    if (!r.at_end()) throw FormatError("trailing bytes after the last sample");
    validate_dataset(ds);
    return ds;
}

Dataset read_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return read_dataset(in);
}

Dataset concat_datasets(const std::vector<Dataset>& parts, double tolerance) {
    if (parts.empty()) throw DataError("no datasets to concatenate");
    if (parts.size() == 1) return parts.front();

    auto close = [tolerance](const FeatureVector& a, const FeatureVector& b) {
        if (a.size() != b.size()) return false;
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (std::abs(a[i] - b[i]) > tolerance) return false;
        }
        return true;
    };

    Dataset out;
    out.header = parts.front().header;
    out.background = parts.front().background;
    std::map<std::string, ClassId> by_name;
    ClassId next_id = 0;
    for (const auto& c : parts.front().classes) next_id = std::max(next_id, c.class_id + 1);

    for (std::size_t p = 0; p < parts.size(); ++p) {
        const auto& part = parts[p];
        const auto& h = part.header;
        if (h.dim != out.header.dim || h.flags != out.header.flags || h.patch_h != out.header.patch_h ||
            h.patch_w != out.header.patch_w) {
            throw DataError("dataset " + std::to_string(p) + " has an incompatible header");
        }
        if (!close(part.background, out.background)) {
            throw DataError("dataset " + std::to_string(p) + " disagrees on the background embedding");
        }
        std::map<ClassId, ClassId> remap;
        for (const auto& c : part.classes) {
            auto it = by_name.find(c.name);
            if (it == by_name.end()) {
                const ClassId id = p == 0 ? c.class_id : next_id++;
                by_name.emplace(c.name, id);
                out.classes.push_back({id, c.name, c.vector});
                remap[c.class_id] = id;
            } else {
                const auto* existing = out.find_class(it->second);
                if (!close(existing->vector, c.vector)) {
                    throw DataError("class '" + c.name + "' has different text embeddings across datasets");
                }
                remap[c.class_id] = it->second;
            }
        }
        for (const auto& s : part.samples) {
            EmbeddingSample copy = s;
            copy.class_id = remap.at(s.class_id);
            out.samples.push_back(std::move(copy));
        }
        out.segments.push_back(part.samples.size());
    }
    out.header.num_classes = static_cast<std::uint32_t>(out.classes.size());
    out.header.num_samples = static_cast<std::uint32_t>(out.samples.size());
    return out;
}

// ---------------------------------------------------------------------------
// Streams

bool StreamSpec::is_seen(ClassId id) const {
    return std::binary_search(seen_class_ids.begin(), seen_class_ids.end(), id);
}

std::size_t unseen_class_count(std::size_t total, double ratio) {
    const double exact = static_cast<double>(total) * ratio / (1.0 + ratio);
    // Round half up; the epsilon absorbs representation error (e.g. 2.4999999).
    const auto rounded = static_cast<std::size_t>(std::floor(exact + 0.5 + 1e-9));
    return std::max<std::size_t>(rounded, 1);
}

std::vector<std::size_t> build_order(const Dataset& ds, const std::vector<ClassId>& unseen,
                                     std::uint64_t seed, const StreamOptions& options) {
    const std::size_t n = ds.samples.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (options.policy == StreamPolicy::file_order) return order;
    if (options.policy == StreamPolicy::staged && !(options.staged_start >= 0.0 && options.staged_start < 1.0)) {
        throw ConfigError("staged_start must lie in [0, 1)");
    }

    std::vector<std::size_t> segments = ds.segments;
    if (segments.empty()) segments.push_back(n);
    if (std::accumulate(segments.begin(), segments.end(), std::size_t{0}) != n) {
        throw DataError("segment sizes do not cover the dataset");
    }

    Rng rng(seed ^ 0x9E3779B97F4A7C15ULL);
    std::size_t begin = 0;
    for (std::size_t len : segments) {
        std::vector<std::size_t> part(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                      order.begin() + static_cast<std::ptrdiff_t>(begin + len));
        if (options.policy == StreamPolicy::shuffle) {
            rng.shuffle(part);
        } else {
            // Staged: a seen-only prefix covers staged_start of the segment. The rest
            // is keyed in [0, 1); unseen class j is pinned at j / m and its other
            // samples are keyed after that point.
            std::vector<ClassId> present;
            std::vector<std::size_t> seen_idx;
            for (std::size_t idx : part) {
                const ClassId c = ds.samples[idx].class_id;
                if (std::find(unseen.begin(), unseen.end(), c) == unseen.end()) {
                    seen_idx.push_back(idx);
                } else if (std::find(present.begin(), present.end(), c) == present.end()) {
                    present.push_back(c);
                }
            }
            std::sort(present.begin(), present.end());
            rng.shuffle(present);
            rng.shuffle(seen_idx);
            const auto prefix = std::min(
                seen_idx.size(), static_cast<std::size_t>(std::llround(options.staged_start * static_cast<double>(len))));
            std::map<ClassId, double> intro;
            for (std::size_t j = 0; j < present.size(); ++j) {
                intro[present[j]] = static_cast<double>(j) / static_cast<double>(present.size());
            }
            std::map<ClassId, std::vector<std::size_t>> members;
            std::vector<std::pair<double, std::size_t>> keyed;
            for (std::size_t i = prefix; i < seen_idx.size(); ++i) keyed.emplace_back(rng.uniform(), seen_idx[i]);
            for (std::size_t idx : part) {
                const ClassId c = ds.samples[idx].class_id;
                auto it = intro.find(c);
                if (it == intro.end()) continue;
                keyed.emplace_back(it->second + (1.0 - it->second) * rng.uniform(), idx);
                members[c].push_back(keyed.size() - 1);
            }
            for (ClassId c : present) {
                const auto& m = members[c];
                keyed[m[static_cast<std::size_t>(rng.below(m.size()))]].first = intro[c];
            }
            std::sort(keyed.begin(), keyed.end());
            std::copy(seen_idx.begin(), seen_idx.begin() + static_cast<std::ptrdiff_t>(prefix), part.begin());
            for (std::size_t i = 0; i < keyed.size(); ++i) part[prefix + i] = keyed[i].second;
        }
        std::copy(part.begin(), part.end(), order.begin() + static_cast<std::ptrdiff_t>(begin));
        begin += len;
    }
    return order;
}

StreamSpec build_stream(const Dataset& ds, double unseen_ratio, std::uint64_t seed,
                        const StreamOptions& options) {
    if (ds.classes.size() < 2) throw ConfigError("a stream needs at least two classes");
    if (!(unseen_ratio > 0.0) || !std::isfinite(unseen_ratio)) {
        throw ConfigError("unseen ratio must be positive");
    }
    const std::size_t total = ds.classes.size();
    const std::size_t unseen_n = unseen_class_count(total, unseen_ratio);
    if (unseen_n >= total) throw ConfigError("unseen ratio leaves no seen classes");

    std::vector<ClassId> ids;
    for (const auto& c : ds.classes) ids.push_back(c.class_id);
    std::sort(ids.begin(), ids.end());
    Rng rng(seed);
    rng.shuffle(ids);

    StreamSpec spec;
    spec.seed = seed;
    spec.unseen_class_ids.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(unseen_n));
    spec.seen_class_ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(unseen_n), ids.end());
    std::sort(spec.unseen_class_ids.begin(), spec.unseen_class_ids.end());
    std::sort(spec.seen_class_ids.begin(), spec.seen_class_ids.end());
    spec.order = build_order(ds, spec.unseen_class_ids, seed, options);
    return spec;
}

void validate_stream(const StreamSpec& s, const Dataset& ds) {
    std::set<ClassId> seen(s.seen_class_ids.begin(), s.seen_class_ids.end());
    std::set<ClassId> unseen(s.unseen_class_ids.begin(), s.unseen_class_ids.end());
    if (seen.size() != s.seen_class_ids.size() || unseen.size() != s.unseen_class_ids.size()) {
        throw ConfigError("stream class lists contain duplicates");
    }
    if (!std::is_sorted(s.seen_class_ids.begin(), s.seen_class_ids.end()) ||
        !std::is_sorted(s.unseen_class_ids.begin(), s.unseen_class_ids.end())) {
        throw ConfigError("stream class lists must be sorted");
    }
    for (ClassId c : seen) {
        if (unseen.contains(c)) throw ConfigError("class " + std::to_string(c) + " is both seen and unseen");
        if (!ds.find_class(c)) throw ConfigError("seen class " + std::to_string(c) + " not in the dataset");
    }
    for (ClassId c : unseen) {
        if (!ds.find_class(c)) throw ConfigError("unseen class " + std::to_string(c) + " not in the dataset");
    }
    if (seen.empty()) throw ConfigError("stream has no seen classes");
    if (s.order.size() != ds.samples.size()) throw ConfigError("stream order length differs from the sample count");
    std::vector<bool> hit(ds.samples.size(), false);
    for (std::size_t idx : s.order) {
        if (idx >= hit.size() || hit[idx]) throw ConfigError("stream order is not a permutation");
        hit[idx] = true;
        const ClassId c = ds.samples[idx].class_id;
        if (!seen.contains(c) && !unseen.contains(c)) {
            throw ConfigError("sample class " + std::to_string(c) + " is neither seen nor unseen");
        }
    }
}

void to_json(nlohmann::json& j, const StreamSpec& s) {
    j = nlohmann::json{{"seed", s.seed},
                       {"seen_class_ids", s.seen_class_ids},
                       {"unseen_class_ids", s.unseen_class_ids},
                       {"order", s.order}};
}

void from_json(const nlohmann::json& j, StreamSpec& s) {
    j.at("seed").get_to(s.seed);
    j.at("seen_class_ids").get_to(s.seen_class_ids);
    j.at("unseen_class_ids").get_to(s.unseen_class_ids);
    j.at("order").get_to(s.order);
}

void write_stream_spec(const StreamSpec& stream, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << nlohmann::json(stream).dump() << '\n';
    if (!out) throw IoError("write failed: " + path.string());
}

StreamSpec read_stream_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    try {
        return nlohmann::json::parse(in).get<StreamSpec>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("invalid stream file " + path.string() + ": " + e.what());
    }
}

StreamPolicy parse_stream_policy(const std::string& name) {
    if (name == "shuffle") return StreamPolicy::shuffle;
    if (name == "staged") return StreamPolicy::staged;
    if (name == "file_order") return StreamPolicy::file_order;
    throw ConfigError("unknown stream policy '" + name + "'");
}

std::string to_string(StreamPolicy policy) {
    switch (policy) {
        case StreamPolicy::shuffle: return "shuffle";
        case StreamPolicy::staged: return "staged";
        case StreamPolicy::file_order: return "file_order";
    }
    return "?";
}

}  // namespace itta
