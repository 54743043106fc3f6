#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include <Eigen/Dense>

namespace dyncausal {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derives an independent stream seed from a master seed and a path of
/// stream identifiers (unit, role, time, lane, ...).
inline std::uint64_t derive_seed(std::initializer_list<std::uint64_t> path) {
    std::uint64_t h = 0x243f6a8885a308d3ULL;
    for (auto part : path) h = splitmix64(h ^ splitmix64(part));
    return h;
}

inline Rng make_rng(std::initializer_list<std::uint64_t> path) { return Rng(derive_seed(path)); }

/// Standard-normal vector of length n.
inline Eigen::VectorXd standard_normal_vector(Eigen::Index n, Rng& rng) {
    std::normal_distribution<double> z(0.0, 1.0);
    Eigen::VectorXd out(n);
    for (Eigen::Index i = 0; i < n; ++i) out[i] = z(rng);
    return out;
}

/// Stream tags shared between modules.
enum class StreamRole : std::uint64_t {
    EffectSampling = 1,
    MleStarts = 2,
    ProfileProbe = 3,
    BayesImputation = 4,
    CausalImpact = 5,
    SimGlobal = 10,
    SimUnit = 11,
    SimAssignment = 12,
    SimCovariates = 13,
    SimNewUnit = 14,
    Replication = 20,
};

inline std::uint64_t tag(StreamRole r) { return static_cast<std::uint64_t>(r); }

}  // namespace dyncausal
