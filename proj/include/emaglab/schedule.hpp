// Copyright (C) 2026 emaglab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "emaglab/tensor.hpp"

namespace emaglab {

enum class ScheduleKind { VpDiscrete, RectifiedFlow };

std::string schedule_kind_name(ScheduleKind k);
ScheduleKind schedule_kind_from_name(const std::string& name);

/// Discrete noise schedule over sampler steps t = T .. 1.
///
/// VpDiscrete: linear-beta variance preserving chain; alpha_bar(0) == 1 and
/// alpha_bar decreases monotonically. The beta range is the usual 1000-step
/// linear schedule rescaled to the configured step count.
///
/// RectifiedFlow: sigma(t) = t / T, so the time grid {0, 1/T, ..., 1} is
/// strictly increasing on [0, 1] and the last Euler step lands exactly on 0.
class NoiseSchedule {
  public:
    static NoiseSchedule vp_linear(int steps);
    static NoiseSchedule rectified_flow(int steps);
    static NoiseSchedule make(ScheduleKind kind, int steps);

    ScheduleKind kind() const { return kind_; }
    int steps() const { return steps_; }

    double alpha_bar(int t) const;  // VP only, t in [0, steps]
    double beta(int t) const;       // VP only, t in [1, steps]
    double sigma(int t) const;      // flow only, t in [0, steps]

  private:
    NoiseSchedule(ScheduleKind kind, int steps);
    ScheduleKind kind_;
    int steps_;
    std::vector<double> betas_;       // VP, index t-1
    std::vector<double> alpha_bars_;  // VP, index t (alpha_bars_[0] == 1)
};

/// Forward corruption at step t.
///   VP:   sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * noise
///   flow: (1 - sigma_t) * x0 + sigma_t * noise
/// The caller draws `noise` from its own seeded stream.
Tensor forward_corrupt(const Tensor& x0, int t, const Tensor& noise, const NoiseSchedule& schedule);

/// Deterministic DDIM update (eta = 0) from step t to step t_prev < t.
Tensor ddim_step(const Tensor& x_t, const Tensor& eps_hat, int t, int t_prev,
                 const NoiseSchedule& schedule);

/// Explicit Euler update x + dt * v_hat for the flow ODE.
Tensor flow_euler_step(const Tensor& x, const Tensor& v_hat, double dt);

}  // namespace emaglab
