#pragma once

#include <utility>

#include "rnflow/tensor.hpp"

namespace rnflow {

/// One point on the linear transport path x_t = t*x_star + (1-t)*x0,
/// together with the velocity regression target x_star - x0.
struct PathPoint {
    Tensor x_star;
    Tensor x0;
    double t = 0.0;
    Tensor x_t;
    Tensor v_target;
};

/// Integration window for samplers. The score conversion divides by (1 - t),
/// so t_max stays strictly below 1; the SDE sampler covers [t_max, 1] with a
/// final deterministic sub-step.
struct TimeWindow {
    double t_min = 1e-3;
    double t_max = 1.0 - 1e-3;
};

void validate(const TimeWindow& window);

PathPoint interpolate(const Tensor& x_star, const Tensor& x0, double t);

/// Invert the path equation at (x_t, t) for a velocity v = x_star - x0:
/// returns (x_star_hat, eps_hat) = (x_t + (1-t)*v, x_t - t*v).
std::pair<Tensor, Tensor> velocity_to_endpoint(const Tensor& x_t, double t, const Tensor& v);

/// Score of the path marginal from the velocity: (t*v - x_t)/(1 - t),
/// i.e. -eps_hat/(1-t). Singular as t -> 1; refuses t >= 1 - tolerance.
Tensor velocity_to_score(const Tensor& x_t, double t, const Tensor& v,
                         double tolerance = 1e-6);

}  // namespace rnflow
