#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace declust {

/// Deterministic random source. All randomness in the framework flows
/// through this wrapper so that (seed -> stream) is reproducible: it draws
/// raw 64-bit words from std::mt19937_64 (whose output sequence is fixed by
/// the standard) and derives doubles itself rather than going through the
/// implementation-defined std distributions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller; draws two words per call.
    double normal();

    double normal(double mean, double sd) { return mean + sd * normal(); }

    /// Uniform integer in [0, n). n must be > 0.
    std::uint64_t below(std::uint64_t n);

    /// Bernoulli with success probability p.
    bool bernoulli(double p) { return uniform() < p; }

    /// In-place Fisher-Yates shuffle (stable across platforms).
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

/// Mixes a base seed with up to three stream indices (splitmix64 finalizer),
/// giving independent per-sample / per-step substreams whose layout does not
/// depend on evaluation order.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0,
                          std::uint64_t c = 0);

}  // namespace declust
