#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

#include <boost/math/constants/constants.hpp>
#include <boost/math/special_functions/erf.hpp>

namespace omlab {

/// Deterministic random stream. Streams for parallel blocks are derived from
/// (master seed, block index) so results do not depend on the worker count.
/// All samplers are hand-rolled on top of the raw 64-bit stream; nothing is
/// delegated to implementation-defined std distributions, so a seed pins the
/// byte-exact output across builds of this library.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : eng_(seed) {}

    static std::uint64_t mix(std::uint64_t z) {
        // splitmix64 finalizer
        z += 0x9E3779B97F4A7C15ull;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    static RngStream derive(std::uint64_t master, std::uint64_t index) {
        return RngStream(mix(master ^ mix(index + 1)));
    }

    std::uint64_t next_u64() { return eng_(); }

    /// Uniform on the open interval (0, 1).
    double uniform01() {
        const std::uint64_t x = eng_() >> 12; // 52 bits
        return (static_cast<double>(x) + 0.5) * 0x1p-52;
    }

    double uniform(double a, double b) { return a + (b - a) * uniform01(); }

    /// Standard normal via the inverse error function (one uniform per draw).
    double normal() { return boost::math::double_constants::root_two * erf_inv_u(); }

    /// Gamma(shape, 1). Marsaglia-Tsang for shape >= 1, boosted for shape < 1.
    double gamma(double shape) {
        if (!(shape > 0.0)) throw std::invalid_argument("gamma: shape must be positive");
        if (shape < 1.0) {
            const double u = uniform01();
            return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        while (true) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform01();
            if (u < 1.0 - 0.0331 * (x * x) * (x * x)) return d * v;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

private:
    double erf_inv_u() { return boost::math::erf_inv(2.0 * uniform01() - 1.0); }

    std::mt19937_64 eng_;
};

} // namespace omlab
