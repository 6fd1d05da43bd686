#include "rnflow/sampling.hpp"

#include <atomic>
#include <cmath>
#include <mutex>
#include <string>
#include <thread>

#include "rnflow/env.hpp"
#include "rnflow/errors.hpp"

namespace rnflow {

const char* sampler_kind_name(SamplerKind kind) {
    switch (kind) {
        case SamplerKind::kOde:
            return "ode";
        case SamplerKind::kSde:
            return "sde";
        case SamplerKind::kDeltaRnOde:
            return "delta_rn_ode";
        case SamplerKind::kDeltaRnSde:
            return "delta_rn_sde";
    }
    throw ConfigError("unknown sampler kind");
}

SamplerKind sampler_kind_from_name(std::string_view name) {
    if (name == "ode") return SamplerKind::kOde;
    if (name == "sde") return SamplerKind::kSde;
    if (name == "delta_rn_ode") return SamplerKind::kDeltaRnOde;
    if (name == "delta_rn_sde") return SamplerKind::kDeltaRnSde;
    throw ConfigError("unknown sampler kind '" + std::string(name) +
                      "' (expected ode, sde, delta_rn_ode, or delta_rn_sde)");
}

bool is_delta_rn(SamplerKind kind) {
    return kind == SamplerKind::kDeltaRnOde || kind == SamplerKind::kDeltaRnSde;
}

bool is_stochastic(SamplerKind kind) {
    return kind == SamplerKind::kSde || kind == SamplerKind::kDeltaRnSde;
}

double WSchedule::value(double t) const {
    switch (kind) {
        case WScheduleKind::kConstant:
            return c;
        case WScheduleKind::kOneMinusT:
            return c * (1.0 - t);
        case WScheduleKind::kTOneMinusT:
            return c * t * (1.0 - t);
    }
    throw ConfigError("unknown w schedule");
}

const char* w_schedule_name(WScheduleKind kind) {
    switch (kind) {
        case WScheduleKind::kConstant:
            return "constant";
        case WScheduleKind::kOneMinusT:
            return "one_minus_t";
        case WScheduleKind::kTOneMinusT:
            return "t_one_minus_t";
    }
    throw ConfigError("unknown w schedule");
}

WScheduleKind w_schedule_from_name(std::string_view name) {
    if (name == "constant") return WScheduleKind::kConstant;
    if (name == "one_minus_t") return WScheduleKind::kOneMinusT;
    if (name == "t_one_minus_t") return WScheduleKind::kTOneMinusT;
    throw ConfigError("unknown w schedule '" + std::string(name) +
                      "' (expected constant, one_minus_t, or t_one_minus_t)");
}

void validate(const SamplerConfig& config) {
    validate(config.window);
    if (config.steps < 1) throw ConfigError("SamplerConfig: steps must be >= 1");
    if (!(config.w.c >= 0.0)) {
        throw ConfigError("SamplerConfig: diffusion coefficient must be nonnegative");
    }
    if (config.cfg_scale.has_value() && !(*config.cfg_scale >= 0.0)) {
        throw ConfigError("SamplerConfig: cfg scale must be nonnegative");
    }
}

Tensor ode_step(const Tensor& v, const Tensor& x, double dt) {
    if (!(dt > 0.0)) throw ConfigError("ode_step: dt must be positive");
    require_same_shape(v, x, "ode_step");
    Tensor out = x;
    axpy_inplace(out, dt, v);
    return out;
}

Tensor sde_step(const Tensor& v, const Tensor& s, const Tensor& x, double t, double dt,
                double w_t, Rng& rng) {
    (void)t;
    if (!(dt > 0.0)) throw ConfigError("sde_step: dt must be positive");
    if (!(w_t >= 0.0)) throw ConfigError("sde_step: diffusion coefficient must be nonnegative");
    require_same_shape(v, x, "sde_step");
    require_same_shape(s, x, "sde_step");
    Tensor out = x;
    axpy_inplace(out, dt, v);
    axpy_inplace(out, 0.5 * w_t * dt, s);
    const double amp = std::sqrt(w_t * dt);
    for (double& o : out.data) o += amp * rng.normal();
    require_finite(out, "sde_step");
    return out;
}

Tensor cfg_velocity_batch(const VelocityModel& model, const Tensor& x,
                          std::span<const double> ts, std::span<const std::size_t> labels,
                          double scale) {
    if (!model.conditional()) {
        throw ContractError("cfg_velocity: model is unconditional");
    }
    if (!(scale >= 0.0)) throw ConfigError("cfg_velocity: scale must be nonnegative");
    if (scale == 1.0) {
        return velocity_eval_batch(model, x, ts, labels);
    }
    const std::vector<std::size_t> nulls(x.rows(), model.null_class_token());
    Tensor v_null = velocity_eval_batch(model, x, ts, nulls);
    if (scale == 0.0) return v_null;
    Tensor v_label = velocity_eval_batch(model, x, ts, labels);
    Tensor diff = sub(v_label, v_null);
    axpy_inplace(v_null, scale, diff);
    return v_null;
}

Tensor cfg_velocity(const VelocityModel& model, const Tensor& x, double t, std::size_t label,
                    double scale) {
    if (x.rank() != 1) throw ShapeError("cfg_velocity: expected a rank-1 sample");
    Tensor xm = x;
    xm.shape = {1, x.shape[0]};
    const double ts[1] = {t};
    const std::size_t labels[1] = {label};
    Tensor v = cfg_velocity_batch(model, xm, ts, labels, scale);
    v.shape = {v.cols()};
    return v;
}

namespace {

constexpr std::size_t kTileRows = 1024;

// Effective velocity for one tile at time t. May consume per-row noise
// streams; when it injects noise it writes the raw z rows into *injected.
using StepFn = std::function<Tensor(const Tensor& x, double t,
                                    std::span<const std::size_t> labels,
                                    std::span<Rng> noise_rngs, Tensor* injected)>;
// Noise-free velocity for the final deterministic sub-step.
using PlainFn =
    std::function<Tensor(const Tensor& x, double t, std::span<const std::size_t> labels)>;

struct Providers {
    StepFn step;
    PlainFn plain;
};

void integrate_tile(const Providers& prov, const SamplerConfig& config, std::size_t dim,
                    std::size_t lo, std::size_t hi, std::span<const std::size_t> labels,
                    bool record, Tensor& samples, std::vector<Trajectory>* trajectories) {
    const std::size_t rows = hi - lo;
    const std::size_t steps = config.steps;
    const double t_min = config.window.t_min;
    const double t_max = config.window.t_max;
    const double dt = (t_max - t_min) / static_cast<double>(steps);
    const bool stochastic = is_stochastic(config.kind);
    const bool inject = is_delta_rn(config.kind);

    std::vector<Rng> path_rngs;
    std::vector<Rng> noise_rngs;
    path_rngs.reserve(rows);
    if (inject) noise_rngs.reserve(rows);
    for (std::size_t j = 0; j < rows; ++j) {
        path_rngs.emplace_back(mix64(config.seed, lo + j, 0));
        if (inject) noise_rngs.emplace_back(mix64(config.seed, lo + j, 1));
    }

    Tensor x = Tensor::zeros({rows, dim});
    for (std::size_t j = 0; j < rows; ++j) {
        std::span<double> row = x.row(j);
        for (std::size_t c = 0; c < dim; ++c) row[c] = path_rngs[j].normal();
    }

    std::span<const std::size_t> tile_labels =
        labels.empty() ? labels : labels.subspan(lo, rows);

    const auto record_state = [&](double t) {
        if (!record) return;
        for (std::size_t j = 0; j < rows; ++j) {
            Trajectory& traj = (*trajectories)[lo + j];
            traj.times.push_back(t);
            Tensor state = Tensor::zeros({dim});
            std::span<const double> row = x.row(j);
            for (std::size_t c = 0; c < dim; ++c) state.data[c] = row[c];
            traj.states.push_back(std::move(state));
        }
    };
    record_state(t_min);

    Tensor injected;
    for (std::size_t i = 0; i < steps; ++i) {
        const double t = t_min + static_cast<double>(i) * dt;
        Tensor v = prov.step(x, t, tile_labels,
                             inject ? std::span<Rng>(noise_rngs) : std::span<Rng>(), &injected);
        if (record && inject) {
            for (std::size_t j = 0; j < rows; ++j) {
                Tensor zdt = Tensor::zeros({dim});
                std::span<const double> zrow = injected.row(j);
                for (std::size_t c = 0; c < dim; ++c) zdt.data[c] = zrow[c] * dt;
                (*trajectories)[lo + j].step_noise.push_back(std::move(zdt));
            }
        }
        if (stochastic) {
            const double w_t = config.w.value(t);
            if (!(w_t >= 0.0)) throw ConfigError("generate: negative diffusion coefficient");
            Tensor score = velocity_to_score(x, t, v);
            const double amp = std::sqrt(w_t * dt);
            for (std::size_t j = 0; j < rows; ++j) {
                std::span<double> xr = x.row(j);
                std::span<const double> vr = v.row(j);
                std::span<const double> sr = score.row(j);
                for (std::size_t c = 0; c < dim; ++c) {
                    xr[c] += (vr[c] + 0.5 * w_t * sr[c]) * dt + amp * path_rngs[j].normal();
                }
            }
        } else {
            for (std::size_t j = 0; j < rows; ++j) {
                std::span<double> xr = x.row(j);
                std::span<const double> vr = v.row(j);
                for (std::size_t c = 0; c < dim; ++c) xr[c] += vr[c] * dt;
            }
        }
        require_finite(x, "generate");
        record_state(t_min + static_cast<double>(i + 1) * dt);
    }

    // Deterministic plain-velocity sub-step from t_max to 1: no injected
    // noise, no Wiener increment, so the score singularity is never touched.
    {
        Tensor v = prov.plain(x, t_max, tile_labels);
        const double dt_final = 1.0 - t_max;
        if (dt_final > 0.0) {
            for (std::size_t j = 0; j < rows; ++j) {
                std::span<double> xr = x.row(j);
                std::span<const double> vr = v.row(j);
                for (std::size_t c = 0; c < dim; ++c) xr[c] += vr[c] * dt_final;
            }
            require_finite(x, "generate");
            record_state(1.0);
        }
    }

    for (std::size_t j = 0; j < rows; ++j) {
        std::span<double> dst = samples.row(lo + j);
        std::span<const double> src = x.row(j);
        for (std::size_t c = 0; c < dim; ++c) dst[c] = src[c];
    }
}

GenerateResult integrate(const Providers& prov, std::size_t dim, const SamplerConfig& config,
                         std::size_t n, std::span<const std::size_t> labels, bool record) {
    validate(config);
    if (n < 1) throw ConfigError("generate: n must be at least 1");
    if (!labels.empty() && labels.size() != n) {
        throw ConfigError("generate: labels must be empty or one per sample");
    }

    GenerateResult result;
    result.samples = Tensor::zeros({n, dim});
    if (record) result.trajectories.resize(n);

    std::vector<std::pair<std::size_t, std::size_t>> tiles;
    for (std::size_t lo = 0; lo < n; lo += kTileRows) {
        tiles.emplace_back(lo, std::min(lo + kTileRows, n));
    }

    const std::size_t workers = std::min(worker_count(), tiles.size());
    if (workers <= 1) {
        for (const auto& [lo, hi] : tiles) {
            integrate_tile(prov, config, dim, lo, hi, labels, record, result.samples,
                           record ? &result.trajectories : nullptr);
        }
    } else {
        std::exception_ptr first_error;
        std::vector<std::thread> pool;
        std::atomic<std::size_t> next{0};
        std::mutex error_mutex;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&]() {
                for (;;) {
                    const std::size_t k = next.fetch_add(1);
                    if (k >= tiles.size()) return;
                    try {
                        integrate_tile(prov, config, dim, tiles[k].first, tiles[k].second, labels,
                                       record, result.samples,
                                       record ? &result.trajectories : nullptr);
                    } catch (...) {
                        std::lock_guard<std::mutex> lock(error_mutex);
                        if (!first_error) first_error = std::current_exception();
                        return;
                    }
                }
            });
        }
        for (std::thread& th : pool) th.join();
        if (first_error) std::rethrow_exception(first_error);
    }
    return result;
}

}  // namespace

GenerateResult generate(const VelocityModel& model, const NoiseGenerator* gen,
                        const SamplerConfig& config, std::size_t n,
                        std::span<const std::size_t> labels, bool record_trajectories) {
    if (is_delta_rn(config.kind) && gen == nullptr) {
        throw ContractError("generate: delta_rn sampler kinds need a noise generator");
    }
    if (!is_delta_rn(config.kind) && gen != nullptr) {
        throw ContractError("generate: plain sampler kinds must not receive a noise generator");
    }
    if (config.cfg_scale.has_value() && !model.conditional()) {
        throw ContractError("generate: cfg guidance needs a conditional model");
    }
    if (gen != nullptr && gen->loc_head.input_width() != model.feature_width()) {
        throw ContractError("generate: noise generator width does not match the model");
    }

    const std::size_t dim = model.data_dim;

    const auto plain_velocity = [&model, &config](const Tensor& x, double t,
                                                  std::span<const std::size_t> tile_labels) {
        std::vector<double> ts(x.rows(), t);
        if (config.cfg_scale.has_value()) {
            return cfg_velocity_batch(model, x, ts, tile_labels, *config.cfg_scale);
        }
        return velocity_eval_batch(model, x, ts, tile_labels);
    };

    Providers prov;
    prov.plain = plain_velocity;
    if (!is_delta_rn(config.kind)) {
        prov.step = [plain_velocity](const Tensor& x, double t,
                                     std::span<const std::size_t> tile_labels, std::span<Rng>,
                                     Tensor*) { return plain_velocity(x, t, tile_labels); };
    } else {
        prov.step = [&model, gen, &config, plain_velocity](
                        const Tensor& x, double t, std::span<const std::size_t> tile_labels,
                        std::span<Rng> noise_rngs, Tensor* injected) {
            const std::size_t rows = x.rows();
            const std::size_t dim = x.cols();
            std::vector<double> ts(rows, t);

            // Features follow the guided label branch; guidance itself is a
            // velocity-space combination on top.
            Tensor features = backbone_features_batch(model, x, ts, tile_labels, nullptr);
            Tensor v = velocity_head(model, features, nullptr);
            if (config.cfg_scale.has_value() && *config.cfg_scale != 1.0) {
                v = cfg_velocity_batch(model, x, ts, tile_labels, *config.cfg_scale);
            }

            NoiseParams params = noise_head_eval(*gen, features);
            Tensor base = Tensor::zeros({rows, dim});
            for (std::size_t j = 0; j < rows; ++j) {
                Tensor row = noise_base_draw(gen->family, noise_rngs[j], {dim});
                std::span<double> dst = base.row(j);
                for (std::size_t c = 0; c < dim; ++c) dst[c] = row.data[c];
            }
            Tensor z = noise_transform(params, base);
            if (injected != nullptr) *injected = z;
            return add(v, z);
        };
    }

    return integrate(prov, dim, config, n, labels, record_trajectories);
}

GenerateResult generate_with_velocity(const BatchVelocityFn& velocity, std::size_t dim,
                                      const SamplerConfig& config, std::size_t n,
                                      bool record_trajectories) {
    if (is_delta_rn(config.kind)) {
        throw ContractError("generate_with_velocity: analytic fields support ode and sde only");
    }
    Providers prov;
    prov.plain = [&velocity](const Tensor& x, double t, std::span<const std::size_t>) {
        return velocity(x, t);
    };
    prov.step = [&velocity](const Tensor& x, double t, std::span<const std::size_t>,
                            std::span<Rng>, Tensor*) { return velocity(x, t); };
    return integrate(prov, dim, config, n, {}, record_trajectories);
}

std::pair<std::vector<Tensor>, std::vector<Tensor>> noise_ledger(const Trajectory& trajectory) {
    if (trajectory.step_noise.empty()) {
        throw ContractError("noise_ledger: trajectory has no recorded noise injections");
    }
    std::vector<Tensor> per_step = trajectory.step_noise;
    std::vector<Tensor> cumulative;
    cumulative.reserve(per_step.size());
    Tensor acc = Tensor::zeros(per_step.front().shape);
    for (const Tensor& z : per_step) {
        add_inplace(acc, z);
        cumulative.push_back(acc);
    }
    return {std::move(per_step), std::move(cumulative)};
}

}  // namespace rnflow
