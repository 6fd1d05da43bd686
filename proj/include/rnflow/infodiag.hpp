#pragma once

#include <cstdint>
#include <functional>

#include "rnflow/data_metrics.hpp"
#include "rnflow/model.hpp"
#include "rnflow/rng.hpp"

namespace rnflow {

/// Differential entropy (nats) of the auxiliary Gaussian whose log-variance
/// is the pointwise velocity loss L: H = L/2 + ln(2*pi*e)/2. Affine in L, so
/// exp(L) is never materialized.
double aux_entropy(double L);

/// ln(2*pi*e)/2, the entropy at L = 0.
double aux_entropy_floor();

struct EntropyEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t n = 0;
};

struct EntropyReport {
    double task_entropy = 0.0;
    double conditional_entropy = 0.0;
    double mi_gain = 0.0;  // task_entropy - conditional_entropy
    std::size_t sample_count = 0;
    double std_error = 0.0;  // standard error of the per-tuple entropy difference
};

/// Velocity at a single point; abstracted so analytic fields can stand in
/// for a trained model in oracle tests.
using VelocityPointFn = std::function<Tensor(const Tensor& x_t, double t)>;

/// Noise-law parameters at a single point (the generator head's output).
using NoiseParamsPointFn = std::function<NoiseParams(const Tensor& x_t, double t)>;

/// Monte-Carlo task entropy: mean over n tuples (x_star, x0, t) of
/// aux_entropy(|v(x_t,t) - (x_star - x0)|^2). Tuples come from the fork-0
/// substream of `rng`, so estimators called with equal-state generators see
/// identical draws. `per_dim` divides L by the data dimension.
EntropyEstimate task_entropy_mc(const VelocityPointFn& velocity, const Dataset& data,
                                std::size_t n, Rng& rng, bool per_dim = false);
EntropyEstimate task_entropy_mc(const VelocityModel& model, const Dataset& data, std::size_t n,
                                Rng& rng, bool per_dim = false);

/// Conditional entropy given the generator: for each tuple, the inner mean
/// over m_noise reparameterized draws z of aux_entropy(|v + z - v_target|^2).
/// Inner and outer means are running means, so a degenerate generator
/// (z identically zero) reproduces the task entropy bit-exactly.
double conditional_entropy_mc(const VelocityPointFn& velocity, const NoiseParamsPointFn& noise,
                              const Dataset& data, std::size_t n, std::size_t m_noise, Rng& rng,
                              bool per_dim = false);
double conditional_entropy_mc(const VelocityModel& model, const NoiseGenerator& gen,
                              const Dataset& data, std::size_t n, std::size_t m_noise, Rng& rng,
                              bool per_dim = false);

/// Both entropies on one shared tuple set, and their difference.
EntropyReport mi_gain(const VelocityPointFn& velocity, const NoiseParamsPointFn& noise,
                      const Dataset& data, std::size_t n, std::size_t m_noise, Rng& rng,
                      bool per_dim = false);
EntropyReport mi_gain(const VelocityModel& model, const NoiseGenerator& gen, const Dataset& data,
                      std::size_t n, std::size_t m_noise, Rng& rng, bool per_dim = false);

/// Adapters from a trained model/generator to the point-function interfaces.
VelocityPointFn model_velocity_fn(const VelocityModel& model);
NoiseParamsPointFn generator_noise_fn(const VelocityModel& model, const NoiseGenerator& gen);

}  // namespace rnflow
