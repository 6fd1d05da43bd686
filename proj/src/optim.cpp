#include "rnflow/optim.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rnflow/errors.hpp"

namespace rnflow {

AdamState AdamState::init(std::size_t n, AdamConfig config) {
    AdamState state;
    state.config = config;
    state.first_moment.assign(n, 0.0);
    state.second_moment.assign(n, 0.0);
    return state;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state) {
    const std::size_t n = params.size();
    if (grads.size() != n || state.first_moment.size() != n) {
        throw ShapeError("adam_step: parameter, gradient, and state sizes must match");
    }
    for (double g : grads) {
        if (!std::isfinite(g)) {
            throw NumericError("adam_step: non-finite gradient");
        }
    }

    const AdamConfig& c = state.config;
    state.step_count += 1;
    const double t = static_cast<double>(state.step_count);
    const double corr1 = 1.0 - std::pow(c.beta1, t);
    const double corr2 = 1.0 - std::pow(c.beta2, t);

    for (std::size_t i = 0; i < n; ++i) {
        const double g = grads[i];
        double& m = state.first_moment[i];
        double& v = state.second_moment[i];
        m = c.beta1 * m + (1.0 - c.beta1) * g;
        v = c.beta2 * v + (1.0 - c.beta2) * g * g;
        const double m_hat = m / corr1;
        const double v_hat = v / corr2;
        params[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
}

double grad_check(const std::function<double(std::span<const double>)>& loss,
                  std::span<const double> params, std::span<const double> analytic,
                  double step) {
    if (params.size() != analytic.size()) {
        throw ShapeError("grad_check: parameter and gradient sizes must match");
    }
    std::vector<double> work(params.begin(), params.end());
    double worst = 0.0;
    for (std::size_t i = 0; i < work.size(); ++i) {
        const double saved = work[i];
        work[i] = saved + step;
        const double up = loss(work);
        work[i] = saved - step;
        const double down = loss(work);
        work[i] = saved;
        const double fd = (up - down) / (2.0 * step);
        const double denom = std::max({std::abs(analytic[i]), std::abs(fd), 1e-8});
        worst = std::max(worst, std::abs(analytic[i] - fd) / denom);
    }
    return worst;
}

}  // namespace rnflow
