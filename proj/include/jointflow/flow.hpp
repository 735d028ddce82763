#pragma once

// Flow-matching core: the linear (rectified) probability path, its constant
// conditional velocity, the joint flow-matching loss over two branches, and
// an Euler integrator that advances each branch along its own timestep
// coordinate. t = 0 is pure noise, t = 1 is clean data.

#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "jointflow/grid.hpp"

namespace jointflow {

// Two independent diffusion times, one per branch.
struct TimestepPair {
    double t_x = 0.0;  // image branch
    double t_y = 0.0;  // depth branch
};

template <typename T = float>
struct VelocityPair {
    Grid<T> x;
    Grid<T> y;
};

namespace flow {

// x_t = (1 - t) * x0 + t * x1.
template <typename T>
Grid<T> interpolate(const Grid<T>& x0, const Grid<T>& x1, double t) {
    detail::require(x0.same_shape(x1), "interpolate: shape mismatch");
    detail::require(t >= 0.0 && t <= 1.0, "interpolate: t outside [0,1]");
    Grid<T> out(x0.h, x0.w, x0.c);
    const T a = static_cast<T>(1.0 - t);
    const T b = static_cast<T>(t);
    for (std::size_t i = 0; i < out.size(); ++i) out.v[i] = a * x0.v[i] + b * x1.v[i];
    return out;
}

// Conditional velocity of the linear path; constant in t.
template <typename T>
Grid<T> target_velocity(const Grid<T>& x0, const Grid<T>& x1) {
    detail::require(x0.same_shape(x1), "target_velocity: shape mismatch");
    Grid<T> out(x0.h, x0.w, x0.c);
    for (std::size_t i = 0; i < out.size(); ++i) out.v[i] = x1.v[i] - x0.v[i];
    return out;
}

template <typename T>
T mse(const Grid<T>& a, const Grid<T>& b) {
    detail::require(a.same_shape(b), "mse: shape mismatch");
    T acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const T d = a.v[i] - b.v[i];
        acc += d * d;
    }
    return acc / static_cast<T>(a.size());
}

// Equal-weight joint loss: 1/2 MSE(v_x) + 1/2 MSE(v_y).
template <typename T>
T jcfm_loss(const VelocityPair<T>& pred, const VelocityPair<T>& target) {
    return T(0.5) * mse(pred.x, target.x) + T(0.5) * mse(pred.y, target.y);
}

// v = v_uncond + scale * (v_cond - v_uncond), per branch.
template <typename T>
VelocityPair<T> cfg_combine(const VelocityPair<T>& v_uncond, const VelocityPair<T>& v_cond,
                            double scale) {
    detail::require(v_uncond.x.same_shape(v_cond.x) && v_uncond.y.same_shape(v_cond.y),
                    "cfg_combine: shape mismatch");
    if (scale == 1.0) return v_cond;
    if (scale == 0.0) return v_uncond;
    VelocityPair<T> out{Grid<T>(v_uncond.x.h, v_uncond.x.w, v_uncond.x.c),
                        Grid<T>(v_uncond.y.h, v_uncond.y.w, v_uncond.y.c)};
    const T s = static_cast<T>(scale);
    for (std::size_t i = 0; i < out.x.size(); ++i)
        out.x.v[i] = v_uncond.x.v[i] + s * (v_cond.x.v[i] - v_uncond.x.v[i]);
    for (std::size_t i = 0; i < out.y.size(); ++i)
        out.y.v[i] = v_uncond.y.v[i] + s * (v_cond.y.v[i] - v_uncond.y.v[i]);
    return out;
}

// Model callable: velocities for the pair (x_t, y_t) at a timestep pair.
// condition == nullopt means the null class.
template <typename T>
using VelocityFn = std::function<VelocityPair<T>(const Grid<T>& x, const Grid<T>& y,
                                                 TimestepPair t, std::optional<int> condition)>;

inline void check_trajectory(const std::vector<TimestepPair>& traj) {
    detail::require(traj.size() >= 2, "euler_sample: trajectory needs at least two pairs");
    for (const auto& p : traj)
        detail::require(p.t_x >= 0.0 && p.t_x <= 1.0 && p.t_y >= 0.0 && p.t_y <= 1.0,
                        "euler_sample: timestep outside [0,1]");
    for (std::size_t k = 1; k < traj.size(); ++k)
        detail::require(traj[k].t_x >= traj[k - 1].t_x && traj[k].t_y >= traj[k - 1].t_y,
                        "euler_sample: trajectory must be monotone nondecreasing");
    detail::require(traj.back().t_x == 1.0 && traj.back().t_y == 1.0,
                    "euler_sample: trajectory must end at (1,1)");
}

// Explicit Euler over the joint field. A branch with a zero increment on a
// step is left untouched, so a branch clamped at t = 1 is returned
// bit-identical to its input.
template <typename T>
std::pair<Grid<T>, Grid<T>> euler_sample(const VelocityFn<T>& model, Grid<T> x, Grid<T> y,
                                         const std::vector<TimestepPair>& trajectory,
                                         std::optional<int> condition, double guidance = 1.0) {
    check_trajectory(trajectory);
    for (std::size_t k = 0; k + 1 < trajectory.size(); ++k) {
        const TimestepPair cur = trajectory[k];
        const TimestepPair nxt = trajectory[k + 1];
        const T dx = static_cast<T>(nxt.t_x - cur.t_x);
        const T dy = static_cast<T>(nxt.t_y - cur.t_y);
        if (dx == T(0) && dy == T(0)) continue;
        VelocityPair<T> v = model(x, y, cur, condition);
        if (condition.has_value() && guidance != 1.0) {
            VelocityPair<T> vu = model(x, y, cur, std::nullopt);
            v = cfg_combine(vu, v, guidance);
        }
        detail::require(v.x.same_shape(x) && v.y.same_shape(y),
                        "euler_sample: model velocity shape mismatch");
        if (dx != T(0))
            for (std::size_t i = 0; i < x.size(); ++i) x.v[i] += dx * v.x.v[i];
        if (dy != T(0))
            for (std::size_t i = 0; i < y.size(); ++i) y.v[i] += dy * v.y.v[i];
    }
    return {std::move(x), std::move(y)};
}

}  // namespace flow
}  // namespace jointflow
