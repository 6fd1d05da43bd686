#pragma once

#include <string>
#include <vector>

#include "rnflow/tensor.hpp"

namespace rnflow {

/// Deterministic scatter plot of 2-D point sets: reference points (if any)
/// in gray underneath, generated points in blue on top. Same inputs, same
/// bytes. An empty point set yields axes only.
std::string scatter_svg(const Tensor& generated, const Tensor* reference = nullptr);

/// Line chart of per-step and cumulative injected-noise magnitudes,
/// averaged over trajectories at each step.
std::string ledger_chart_svg(const std::vector<double>& per_step_magnitude,
                             const std::vector<double>& cumulative_magnitude);

}  // namespace rnflow
