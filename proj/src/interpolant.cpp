#include "rnflow/interpolant.hpp"

#include <cmath>
#include <string>

#include "rnflow/errors.hpp"

namespace rnflow {

void validate(const TimeWindow& window) {
    if (!(0.0 <= window.t_min) || !(window.t_min < window.t_max) || !(window.t_max <= 1.0)) {
        throw ConfigError("TimeWindow requires 0 <= t_min < t_max <= 1");
    }
}

PathPoint interpolate(const Tensor& x_star, const Tensor& x0, double t) {
    require_same_shape(x_star, x0, "interpolate");
    if (!(t >= 0.0 && t <= 1.0)) {
        throw ConfigError("interpolate: t must lie in [0,1], got " + std::to_string(t));
    }
    PathPoint p;
    p.x_star = x_star;
    p.x0 = x0;
    p.t = t;
    p.x_t = add(scale(x_star, t), scale(x0, 1.0 - t));
    p.v_target = sub(x_star, x0);
    return p;
}

std::pair<Tensor, Tensor> velocity_to_endpoint(const Tensor& x_t, double t, const Tensor& v) {
    require_same_shape(x_t, v, "velocity_to_endpoint");
    Tensor x_star_hat = add(x_t, scale(v, 1.0 - t));
    Tensor eps_hat = sub(x_t, scale(v, t));
    return {std::move(x_star_hat), std::move(eps_hat)};
}

Tensor velocity_to_score(const Tensor& x_t, double t, const Tensor& v, double tolerance) {
    require_same_shape(x_t, v, "velocity_to_score");
    if (t >= 1.0 - tolerance) {
        throw SingularityError("velocity_to_score: t = " + std::to_string(t) +
                               " too close to 1 (score denominator vanishes)");
    }
    return scale(sub(scale(v, t), x_t), 1.0 / (1.0 - t));
}

}  // namespace rnflow
