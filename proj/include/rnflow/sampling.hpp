#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "rnflow/interpolant.hpp"
#include "rnflow/model.hpp"
#include "rnflow/rng.hpp"
#include "rnflow/tensor.hpp"

namespace rnflow {

enum class SamplerKind { kOde, kSde, kDeltaRnOde, kDeltaRnSde };

const char* sampler_kind_name(SamplerKind kind);
SamplerKind sampler_kind_from_name(std::string_view name);
bool is_delta_rn(SamplerKind kind);
bool is_stochastic(SamplerKind kind);

/// Diffusion-coefficient schedule w_t >= 0. The default c*(1-t) vanishes at
/// the data end, keeping the last steps near-deterministic.
enum class WScheduleKind { kConstant, kOneMinusT, kTOneMinusT };

struct WSchedule {
    WScheduleKind kind = WScheduleKind::kOneMinusT;
    double c = 1.0;
    double value(double t) const;
};

const char* w_schedule_name(WScheduleKind kind);
WScheduleKind w_schedule_from_name(std::string_view name);

struct SamplerConfig {
    SamplerKind kind = SamplerKind::kSde;
    std::size_t steps = 100;
    TimeWindow window;
    WSchedule w;
    std::optional<double> cfg_scale;
    std::uint64_t seed = 0;
};

void validate(const SamplerConfig& config);

/// One recorded generation path. `step_noise`, present for delta_rn kinds,
/// holds the injected noise displacement z*dt for each integration step on
/// [t_min, t_max] (the final deterministic sub-step injects nothing).
struct Trajectory {
    std::vector<double> times;
    std::vector<Tensor> states;
    std::vector<Tensor> step_noise;
};

struct GenerateResult {
    Tensor samples;  // n x dim
    std::vector<Trajectory> trajectories;
};

/// Euler update of the probability-flow equation: x + v*dt.
Tensor ode_step(const Tensor& v, const Tensor& x, double dt);

/// Euler-Maruyama update in generation direction: the reverse-time equation
/// integrated from noise to data flips the score drift positive,
///   x' = x + [v + (w_t/2) s] dt + sqrt(w_t dt) xi,  xi ~ N(0, I).
Tensor sde_step(const Tensor& v, const Tensor& s, const Tensor& x, double t, double dt,
                double w_t, Rng& rng);

/// Classifier-free guidance: v_null + scale*(v_label - v_null). Scale 1
/// returns the conditional velocity itself (single evaluation, bit-exact);
/// scale 0 returns the null-token velocity.
Tensor cfg_velocity(const VelocityModel& model, const Tensor& x, double t, std::size_t label,
                    double scale);
Tensor cfg_velocity_batch(const VelocityModel& model, const Tensor& x,
                          std::span<const double> ts, std::span<const std::size_t> labels,
                          double scale);

/// Draw n samples. Integrates a uniform grid on [t_min, t_max] from
/// x ~ N(0, I), then takes one deterministic plain-velocity ODE sub-step to
/// t = 1. delta_rn kinds draw fresh noise each step from a per-trajectory
/// stream separate from the path stream, so a zero generator reproduces the
/// plain sampler bit-exactly. `labels` is empty or one entry per sample.
GenerateResult generate(const VelocityModel& model, const NoiseGenerator* gen,
                        const SamplerConfig& config, std::size_t n,
                        std::span<const std::size_t> labels = {},
                        bool record_trajectories = false);

/// Same integrator over an analytic velocity field (batched x -> v), for
/// closed-form transports. Only ode/sde kinds are meaningful.
using BatchVelocityFn = std::function<Tensor(const Tensor& x, double t)>;
GenerateResult generate_with_velocity(const BatchVelocityFn& velocity, std::size_t dim,
                                      const SamplerConfig& config, std::size_t n,
                                      bool record_trajectories = false);

/// Per-step and cumulative injected-noise displacements of one delta_rn
/// trajectory. cumulative[i] = sum of per_step[0..i].
std::pair<std::vector<Tensor>, std::vector<Tensor>> noise_ledger(const Trajectory& trajectory);

}  // namespace rnflow
