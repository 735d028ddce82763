#pragma once

// Training-time timestep distributions and the unbalanced pair sampler.
//
// Both f(t) and g(t) push a standard normal z through
//     t = 1 - sigmoid(z) * s / (1 + (s - 1) * sigmoid(z)),
// with s = 3.1582 for f and s = 0.25 for g. f concentrates near t = 0
// (noisy), g near t = 1 (clean). Pairs are drawn shared-from-f half the
// time, otherwise one branch from f and the other from g with the order
// decided by a fair coin.

#include <cmath>
#include <utility>

#include "jointflow/flow.hpp"
#include "jointflow/rng.hpp"

namespace jointflow::timesteps {

inline constexpr double kShiftF = 3.1582;
inline constexpr double kShiftG = 0.25;

enum class PairSampleKind { Shared, FxGy, GxFy };

// Deterministic monotone-decreasing map from z to t, shared by f and g.
inline double shift_from_z(double z, double s) {
    const double sig = 1.0 / (1.0 + std::exp(-z));
    return 1.0 - sig * s / (1.0 + (s - 1.0) * sig);
}

inline double sample_f(Rng& rng) { return shift_from_z(rng.normal(), kShiftF); }
inline double sample_g(Rng& rng) { return shift_from_z(rng.normal(), kShiftG); }

inline std::pair<TimestepPair, PairSampleKind> sample_pair(Rng& rng) {
    const double u = rng.uniform01();
    if (u < 0.5) {
        const double t = sample_f(rng);
        return {TimestepPair{t, t}, PairSampleKind::Shared};
    }
    if (u < 0.75) {
        const double tx = sample_f(rng);
        const double ty = sample_g(rng);
        return {TimestepPair{tx, ty}, PairSampleKind::FxGy};
    }
    const double tx = sample_g(rng);
    const double ty = sample_f(rng);
    return {TimestepPair{tx, ty}, PairSampleKind::GxFy};
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Analytic CDF of the z -> t transform: P(T <= t) = 1 - Phi(z*(t)) with
// sigmoid(z*) = (1 - t) / (s t + 1 - t).
inline double cdf_shift(double t, double s) {
    if (t <= 0.0) return 0.0;
    if (t >= 1.0) return 1.0;
    const double sig = (1.0 - t) / (s * t + 1.0 - t);
    const double z = std::log(sig / (1.0 - sig));
    return 1.0 - normal_cdf(z);
}

inline double cdf_f(double t) { return cdf_shift(t, kShiftF); }
inline double cdf_g(double t) { return cdf_shift(t, kShiftG); }

}  // namespace jointflow::timesteps
