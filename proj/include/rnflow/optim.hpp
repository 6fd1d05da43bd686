#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "rnflow/mlp.hpp"

namespace rnflow {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction over a flat parameter vector.
struct AdamState {
    AdamConfig config;
    std::uint64_t step_count = 0;
    std::vector<double> first_moment;
    std::vector<double> second_moment;

    static AdamState init(std::size_t n, AdamConfig config = {});
};

/// One Adam update in place. Refuses non-finite gradients without touching
/// parameters or moments.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state);

/// Finite-difference check: maximum relative error between analytic gradients
/// and central differences of `loss` over all coordinates.
double grad_check(const std::function<double(std::span<const double>)>& loss,
                  std::span<const double> params, std::span<const double> analytic,
                  double step = 1e-5);

}  // namespace rnflow
