#include "ltv/rng.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace ltv {

namespace {

inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

void Rng::reseed(uint64_t seed) {
    uint64_t sm = seed;
    for (auto& s : s_) s = splitmix64(sm);
    have_cached_normal_ = false;
}

uint64_t Rng::next_u64() {
    const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double Rng::uniform() {
    // 53 random bits -> [0, 1)
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

uint64_t Rng::below(uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::below(0)");
    // Rejection to avoid modulo bias.
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
        x = next_u64();
    } while (x >= limit);
    return x % n;
}

double Rng::normal() {
    if (have_cached_normal_) {
        have_cached_normal_ = false;
        return cached_normal_;
    }
    double u1 = 0.0;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cached_normal_ = r * std::sin(a);
    have_cached_normal_ = true;
    return r * std::cos(a);
}

int64_t Rng::poisson(double mean) {
    if (!(mean >= 0.0) || !std::isfinite(mean))
        throw std::invalid_argument("Rng::poisson: mean must be finite and >= 0");
    if (mean == 0.0) return 0;
    if (mean < 30.0) return poisson_inversion(mean);
    return poisson_ptrs(mean);
}

int64_t Rng::poisson_inversion(double mean) {
    // Sequential search on the CDF.
    const double p0 = std::exp(-mean);
    double p = p0;
    double cdf = p0;
    const double u = uniform();
    int64_t k = 0;
    while (u > cdf) {
        ++k;
        p *= mean / static_cast<double>(k);
        cdf += p;
        if (k > 2000) break;  // unreachable for mean < 30
    }
    return k;
}

int64_t Rng::poisson_ptrs(double mean) {
    // Hoermann's transformed rejection (PTRS), valid for mean >= 10.
    const double b = 0.931 + 2.53 * std::sqrt(mean);
    const double a = -0.059 + 0.02483 * b;
    const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    const double v_r = 0.9277 - 3.6224 / (b - 2.0);
    const double log_mean = std::log(mean);

    for (;;) {
        double u = uniform() - 0.5;
        double v = uniform();
        const double us = 0.5 - std::fabs(u);
        const double k = std::floor((2.0 * a / us + b) * u + mean + 0.43);
        if (us >= 0.07 && v <= v_r) return static_cast<int64_t>(k);
        if (k < 0.0 || (us < 0.013 && v > us)) continue;
        const double ik = k;
        if (std::log(v * inv_alpha / (a / (us * us) + b)) <=
            ik * log_mean - mean - log_factorial(static_cast<int64_t>(ik)))
            return static_cast<int64_t>(k);
    }
}

double log_factorial(int64_t k) {
    if (k < 0) throw std::invalid_argument("log_factorial: negative argument");
    constexpr int64_t kTable = 4096;
    static const std::vector<double> table = [] {
        std::vector<double> t(static_cast<size_t>(kTable));
        t[0] = 0.0;
        for (int64_t i = 1; i < kTable; ++i)
            t[static_cast<size_t>(i)] =
                t[static_cast<size_t>(i - 1)] + std::log(static_cast<double>(i));
        return t;
    }();
    if (k < kTable) return table[static_cast<size_t>(k)];
    // Stirling series; error < 1e-12 for k >= 4096.
    const double x = static_cast<double>(k) + 1.0;
    const double inv = 1.0 / x;
    const double inv2 = inv * inv;
    return (x - 0.5) * std::log(x) - x + 0.91893853320467274178032973640562 +
           inv * (1.0 / 12.0 + inv2 * (-1.0 / 360.0 + inv2 * (1.0 / 1260.0)));
}

}  // namespace ltv
