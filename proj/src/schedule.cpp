// Copyright (C) 2026 emaglab contributors
// SPDX-License-Identifier: Apache-2.0
#include "emaglab/schedule.hpp"

#include <cmath>

#include "emaglab/errors.hpp"

namespace emaglab {

std::string schedule_kind_name(ScheduleKind k) {
    return k == ScheduleKind::VpDiscrete ? "vp" : "flow";
}

ScheduleKind schedule_kind_from_name(const std::string& name) {
    if (name == "vp") return ScheduleKind::VpDiscrete;
    if (name == "flow") return ScheduleKind::RectifiedFlow;
    throw ConfigError("unknown schedule kind '" + name + "' (expected 'vp' or 'flow')");
}

NoiseSchedule::NoiseSchedule(ScheduleKind kind, int steps) : kind_(kind), steps_(steps) {
    if (steps < 1) throw ConfigError("schedule needs at least 1 step");
}

NoiseSchedule NoiseSchedule::vp_linear(int steps) {
    NoiseSchedule s(ScheduleKind::VpDiscrete, steps);
    // Continuous limit of the 1000-step linear beta range [1e-4, 0.02]:
    // log alpha_bar(u) = -1000 * (b0*u + (b1-b0)*u^2/2), subsampled at u = t/T.
    // Deriving beta_t from the alpha_bar ratio keeps every beta in (0, 1) for
    // any step count.
    constexpr double b0 = 1e-4;
    constexpr double b1 = 0.02;
    auto log_alpha_bar = [](double u) { return -1000.0 * (b0 * u + 0.5 * (b1 - b0) * u * u); };
    s.betas_.resize(static_cast<size_t>(steps));
    s.alpha_bars_.resize(static_cast<size_t>(steps) + 1);
    s.alpha_bars_[0] = 1.0;
    for (int t = 1; t <= steps; ++t) {
        const double u = static_cast<double>(t) / steps;
        const double ab = std::exp(log_alpha_bar(u));
        s.alpha_bars_[static_cast<size_t>(t)] = ab;
        s.betas_[static_cast<size_t>(t - 1)] = 1.0 - ab / s.alpha_bars_[static_cast<size_t>(t - 1)];
    }
    return s;
}

NoiseSchedule NoiseSchedule::rectified_flow(int steps) {
    return NoiseSchedule(ScheduleKind::RectifiedFlow, steps);
}

NoiseSchedule NoiseSchedule::make(ScheduleKind kind, int steps) {
    return kind == ScheduleKind::VpDiscrete ? vp_linear(steps) : rectified_flow(steps);
}

double NoiseSchedule::alpha_bar(int t) const {
    if (kind_ != ScheduleKind::VpDiscrete) throw ConfigError("alpha_bar on a flow schedule");
    if (t < 0 || t > steps_)
        throw ConfigError("alpha_bar: step " + std::to_string(t) + " out of range");
    return alpha_bars_[static_cast<size_t>(t)];
}

double NoiseSchedule::beta(int t) const {
    if (kind_ != ScheduleKind::VpDiscrete) throw ConfigError("beta on a flow schedule");
    if (t < 1 || t > steps_) throw ConfigError("beta: step out of range");
    return betas_[static_cast<size_t>(t - 1)];
}

double NoiseSchedule::sigma(int t) const {
    if (kind_ != ScheduleKind::RectifiedFlow) throw ConfigError("sigma on a vp schedule");
    if (t < 0 || t > steps_)
        throw ConfigError("sigma: step " + std::to_string(t) + " out of range");
    return static_cast<double>(t) / static_cast<double>(steps_);
}

Tensor forward_corrupt(const Tensor& x0, int t, const Tensor& noise,
                       const NoiseSchedule& schedule) {
    if (!x0.same_shape(noise)) throw DimensionError("forward_corrupt: x0/noise shape mismatch");
    if (t < 0 || t > schedule.steps())
        throw ConfigError("forward_corrupt: step " + std::to_string(t) + " out of range");
    if (schedule.kind() == ScheduleKind::VpDiscrete) {
        const double ab = schedule.alpha_bar(t);
        return add(scale(x0, std::sqrt(ab)), scale(noise, std::sqrt(1.0 - ab)));
    }
    return lerp(x0, noise, schedule.sigma(t));
}

Tensor ddim_step(const Tensor& x_t, const Tensor& eps_hat, int t, int t_prev,
                 const NoiseSchedule& schedule) {
    if (!x_t.same_shape(eps_hat)) throw DimensionError("ddim_step: shape mismatch");
    if (!(t > t_prev && t_prev >= 0)) throw ConfigError("ddim_step requires t > t_prev >= 0");
    const double ab_t = schedule.alpha_bar(t);
    const double ab_p = schedule.alpha_bar(t_prev);
    if (ab_t == 0.0) throw DivergenceError("ddim_step: singular schedule, alpha_bar(t) == 0");
    const double sq_ab_t = std::sqrt(ab_t);
    const double sq_1m_t = std::sqrt(1.0 - ab_t);
    const double sq_ab_p = std::sqrt(ab_p);
    const double sq_1m_p = std::sqrt(1.0 - ab_p);
    Tensor out = x_t;
    for (size_t i = 0; i < out.data.size(); ++i) {
        const double x0_hat = (x_t.data[i] - sq_1m_t * eps_hat.data[i]) / sq_ab_t;
        out.data[i] = sq_ab_p * x0_hat + sq_1m_p * eps_hat.data[i];
    }
    return out;
}

Tensor flow_euler_step(const Tensor& x, const Tensor& v_hat, double dt) {
    if (!x.same_shape(v_hat)) throw DimensionError("flow_euler_step: shape mismatch");
    Tensor out = x;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += dt * v_hat.data[i];
    return out;
}

}  // namespace emaglab
