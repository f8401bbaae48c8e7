#ifndef COOPSHAP_RNG_HPP
#define COOPSHAP_RNG_HPP

#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <random>

namespace coopshap {

// Deterministic random source. All draws go through explicit helpers so the
// byte stream is reproducible across standard-library implementations
// (std::*_distribution is not portable; mt19937_64's raw output is).
class Rng {
public:
    Rng() : engine_(0) {}
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, bound), bound >= 1. Rejection-free modulo is fine
    // for the bounds used here (bound << 2^64).
    std::uint64_t uniform_index(std::uint64_t bound) { return engine_() % bound; }

    // Standard normal via Box-Muller; stateless (no cached spare value).
    double normal() {
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    void save(std::ostream& os) const { os << engine_; }
    void load(std::istream& is) { is >> engine_; }

    bool operator==(const Rng& other) const { return engine_ == other.engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace coopshap

#endif
