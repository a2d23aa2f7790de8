#pragma once

#include <cstdint>
#include <random>

namespace headshare {

// Seeded generator for all randomness in the toolkit. Only mt19937_64 output
// is used directly (never std::*_distribution, whose results are
// implementation-defined), so identical seeds give identical streams on any
// conforming standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next() { return gen_(); }

    // uniform in [0, 1) with 53 random bits
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    std::size_t index(std::size_t n) { return static_cast<std::size_t>(next() % n); }

private:
    std::mt19937_64 gen_;
};

}  // namespace headshare
