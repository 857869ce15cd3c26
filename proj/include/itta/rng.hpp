#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <utility>
#include <vector>

namespace itta {

/// Portable sampling helpers on top of mt19937_64 (the standard distributions
/// are implementation-defined, which would break replay across toolchains).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform();                      ///< [0, 1)
    std::uint64_t below(std::uint64_t n);  ///< [0, n)
    double normal();

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[static_cast<std::size_t>(below(i))]);
        }
    }

private:
    std::mt19937_64 engine_;
    std::optional<double> spare_;
};

}  // namespace itta
