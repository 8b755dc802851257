#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

#include <Eigen/Core>

namespace gridstab {

/// SplitMix64 finalizer; used to derive substream seeds from (root, words...).
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/// Stream tags. Every stochastic consumer owns a channel so that draws on
/// one channel never disturb another (e.g. freezing the damping-noise seed
/// while varying the system-noise seed, or running samples in parallel).
namespace channel {
inline constexpr std::uint64_t move = 0x6d6f7665;        // SA neighbour moves
inline constexpr std::uint64_t accept = 0x61636370;      // Metropolis uniforms
inline constexpr std::uint64_t objective = 0x6f626a73;   // noisy-objective samples
inline constexpr std::uint64_t beta_noise = 0x62657461;  // damping perturbations
inline constexpr std::uint64_t system = 0x73797374;      // raw-parameter perturbations
inline constexpr std::uint64_t calibrate = 0x63616c69;   // temperature calibration
inline constexpr std::uint64_t confirm = 0x636f6e66;     // final confirmation pass
inline constexpr std::uint64_t restart = 0x72737472;     // independent restarts
inline constexpr std::uint64_t generic = 0x67656e72;     // tests, ad-hoc draws
}  // namespace channel

/// Deterministic random stream. The normal transform is pinned here (polar
/// Box-Muller without caching) instead of std::normal_distribution so draw
/// sequences do not depend on the standard-library implementation.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed),
                          static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(mix64(seed)),
                          static_cast<std::uint32_t>(mix64(seed) >> 32)};
        engine_.seed(seq);
    }

    /// Uniform on [0, 1).
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Marsaglia polar rejection.
    double normal() {
        while (true) {
            const double u = 2.0 * uniform() - 1.0;
            const double v = 2.0 * uniform() - 1.0;
            const double s = u * u + v * v;
            if (s > 0.0 && s < 1.0) {
                return u * std::sqrt(-2.0 * std::log(s) / s);
            }
        }
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

    Eigen::VectorXd normal_vector(int n, double sd = 1.0) {
        Eigen::VectorXd v(n);
        for (int i = 0; i < n; ++i) v[i] = sd * normal();
        return v;
    }

    std::uint64_t next_u64() { return engine_(); }

  private:
    std::mt19937_64 engine_;
};

/// Counter-based sampler: stream(tag, j) is computable without drawing
/// 0..j-1, so Monte Carlo draws parallelise with sequential-identical
/// results. Identical (root, tag, index) always yields identical draws.
class SeededSampler {
  public:
    explicit SeededSampler(std::uint64_t root_seed) : root_(root_seed) {}

    std::uint64_t root_seed() const { return root_; }

    Rng stream(std::uint64_t tag, std::uint64_t index = 0) const {
        return Rng(mix64(mix64(root_ ^ mix64(tag)) ^ mix64(index)));
    }

    Rng stream(std::uint64_t tag, std::uint64_t i, std::uint64_t j) const {
        return derive(tag).stream(i, j);
    }

    /// Child sampler for nested scopes (restart r, pipeline stage, ...).
    SeededSampler derive(std::uint64_t word) const {
        return SeededSampler(mix64(root_ ^ mix64(word)));
    }

  private:
    std::uint64_t root_;
};

}  // namespace gridstab
