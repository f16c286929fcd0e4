#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace nlbb {

// Counter-based generator: output_i = mix(key + i * golden gamma), so a stream
// is fully determined by (master seed, stream id) and the draw counter. Streams
// keyed by replicate index give reproducible parallel Monte Carlo regardless of
// scheduling.
class Rng {
public:
    Rng(std::uint64_t master_seed, std::uint64_t stream_id)
        : key_(derive_key(master_seed, stream_id)) {}

    std::uint64_t next_u64() {
        counter_ += 0x9e3779b97f4a7c15ULL;
        return mix(key_ ^ counter_);
    }

    // Uniform on the open interval (0,1); safe as a log() argument.
    double uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        // Marsaglia polar method.
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double r = std::sqrt(-2.0 * std::log(s) / s);
        cached_ = v * r;
        have_cached_ = true;
        return u * r;
    }

    double exponential(double rate) {
        if (!(rate > 0.0)) throw std::invalid_argument("exponential: rate must be positive");
        return -std::log(uniform()) / rate;
    }

    // Knuth's product method, chunked so large means stay exact.
    std::uint64_t poisson(double mean) {
        if (!(mean >= 0.0)) throw std::invalid_argument("poisson: mean must be non-negative");
        std::uint64_t total = 0;
        while (mean > 30.0) {
            total += poisson_knuth(30.0);
            mean -= 30.0;
        }
        return total + poisson_knuth(mean);
    }

    // Marsaglia-Tsang; shape >= 1 is all this project needs.
    double gamma(double shape, double rate) {
        if (!(shape >= 1.0)) throw std::invalid_argument("gamma: shape must be >= 1");
        if (!(rate > 0.0)) throw std::invalid_argument("gamma: rate must be positive");
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v / rate;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v / rate;
        }
    }

    // Index into a cumulative weight table; returns the first i with u < cum[i].
    template <typename Vec>
    std::size_t pick_cumulative(const Vec& cum) {
        const double u = uniform() * cum.back();
        std::size_t lo = 0, hi = cum.size() - 1;
        while (lo < hi) {
            const std::size_t mid = (lo + hi) / 2;
            if (u < cum[mid]) hi = mid; else lo = mid + 1;
        }
        return lo;
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z ^= z >> 30; z *= 0xbf58476d1ce4e5b9ULL;
        z ^= z >> 27; z *= 0x94d049bb133111ebULL;
        z ^= z >> 31;
        return z;
    }

    static std::uint64_t derive_key(std::uint64_t seed, std::uint64_t stream) {
        return mix(mix(seed + 0x9e3779b97f4a7c15ULL) ^ mix(stream + 0xbf58476d1ce4e5b9ULL));
    }

    std::uint64_t poisson_knuth(double mean) {
        const double limit = std::exp(-mean);
        double prod = uniform();
        std::uint64_t n = 0;
        while (prod > limit) {
            ++n;
            prod *= uniform();
        }
        return n;
    }

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

}  // namespace nlbb
