#pragma once

#include <cstdint>

namespace ltv {

// Deterministic xoshiro256++ generator seeded via splitmix64. We roll our own
// distributions (uniform, normal, Poisson) so that streams are reproducible
// across platforms and standard-library versions.
class Rng {
public:
    explicit Rng(uint64_t seed) { reseed(seed); }

    void reseed(uint64_t seed);

    uint64_t next_u64();

    // Uniform in [0, 1).
    double uniform();

    // Uniform in [lo, hi).
    double uniform(double lo, double hi);

    // Integer in [0, n).
    uint64_t below(uint64_t n);

    // Standard normal via Box-Muller (one cached value).
    double normal();

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Poisson sample: sequential inversion for mean < 30, PTRS-style
    // transformed rejection above. Mean must be finite and >= 0.
    int64_t poisson(double mean);

private:
    uint64_t s_[4] = {};
    bool have_cached_normal_ = false;
    double cached_normal_ = 0.0;

    int64_t poisson_inversion(double mean);
    int64_t poisson_ptrs(double mean);
};

// log(k!) with an exact cumulative table for small k and a Stirling series
// beyond it; deterministic (no libm lgamma).
double log_factorial(int64_t k);

}  // namespace ltv
