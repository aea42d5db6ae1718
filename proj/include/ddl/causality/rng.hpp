#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace ddl::rng {

// 64-bit FNV-1a. Also the config hash required by the tape header.
constexpr std::uint64_t kFnvOffset = 1469598103934665603ull;
constexpr std::uint64_t kFnvPrime = 1099511628211ull;

constexpr std::uint64_t fnv1a(std::string_view s, std::uint64_t h = kFnvOffset) {
    for (char c : s) {
        h ^= static_cast<std::uint8_t>(c);
        h *= kFnvPrime;
    }
    return h;
}

constexpr std::uint64_t fnv1a_u64(std::uint64_t v, std::uint64_t h = kFnvOffset) {
    for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xffu;
        h *= kFnvPrime;
    }
    return h;
}

// splitmix64 finalizer. Full-avalanche mix of a 64-bit key.
constexpr std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// A named, counter-based random stream. Draw order within a stream is the
// only state, so replay never consumes another stream's draws and snapshots
// can rebuild streams from (seed, purpose, worker, epoch) alone.
class Stream {
  public:
    Stream() : key_(0), counter_(0) {}
    Stream(std::uint64_t seed, std::string_view purpose, std::uint64_t worker = 0,
           std::uint64_t epoch = 0) {
        std::uint64_t h = fnv1a(purpose);
        h = fnv1a_u64(worker, h);
        h = fnv1a_u64(epoch, h);
        key_ = mix(seed ^ h);
        counter_ = 0;
    }

    std::uint64_t next_u64() { return mix(key_ + 0x632be59bd9b4e019ull * ++counter_); }

    // Uniform in [0, 1), 53-bit resolution.
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double next_range(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

    // Uniform integer in [0, n).
    std::uint64_t next_below(std::uint64_t n) { return n ? next_u64() % n : 0; }

    double next_normal() {
        double u1 = next_unit();
        double u2 = next_unit();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    double next_exponential(double mean) {
        double u = next_unit();
        if (u >= 1.0) u = 1.0 - 0x1.0p-53;
        return -mean * std::log1p(-u);
    }

    // Knuth's method; fine for the per-step rates used here (lambda << 30).
    std::uint64_t next_poisson(double lambda) {
        if (lambda <= 0.0) return 0;
        double limit = std::exp(-lambda);
        std::uint64_t k = 0;
        double p = 1.0;
        do {
            ++k;
            p *= next_unit();
        } while (p > limit);
        return k - 1;
    }

    // Exponentiated Weibull via inverse CDF: F(x) = (1 - exp(-(x/scale)^k))^alpha.
    double next_exp_weibull(double alpha, double k, double scale) {
        double u = next_unit();
        if (u >= 1.0) u = 1.0 - 0x1.0p-53;
        double inner = -std::log1p(-std::pow(u, 1.0 / alpha));
        return scale * std::pow(inner, 1.0 / k);
    }

    std::uint64_t counter() const { return counter_; }

  private:
    std::uint64_t key_;
    std::uint64_t counter_;
};

// One-shot draw for fully stateless choices keyed by position.
inline double unit_at(std::uint64_t seed, std::string_view purpose, std::uint64_t worker,
                      std::uint64_t index) {
    Stream s(seed, purpose, worker, index);
    return s.next_unit();
}

}  // namespace ddl::rng
