#include "itta/rng.hpp"

#include <cmath>
#include <numbers>

#include "itta/errors.hpp"

namespace itta {

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::below(std::uint64_t n) {
    if (n == 0) throw DegenerateInputError("Rng::below(0)");
    const std::uint64_t threshold = (0 - n) % n;
    for (;;) {
        const std::uint64_t r = engine_();
        if (r >= threshold) return r % n;
    }
}

double Rng::normal() {
    if (spare_) {
        const double v = *spare_;
        spare_.reset();
        return v;
    }
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    return radius * std::cos(angle);
}

}  // namespace itta
