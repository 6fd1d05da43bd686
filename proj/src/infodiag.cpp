#include "rnflow/infodiag.hpp"

#include <cmath>
#include <numbers>

#include "rnflow/errors.hpp"

namespace rnflow {

double aux_entropy(double L) {
    if (!std::isfinite(L)) throw NumericError("aux_entropy: non-finite loss value");
    return 0.5 * L + aux_entropy_floor();
}

double aux_entropy_floor() {
    return 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e);
}

namespace {

// Running mean/variance. The update leaves the mean bit-exactly unchanged
// when a value equal to the current mean arrives, which is what makes the
// degenerate-generator collapse exact rather than approximate.
struct RunningMean {
    double mean = 0.0;
    double m2 = 0.0;
    std::size_t n = 0;

    void add(double x) {
        n += 1;
        const double delta = x - mean;
        mean += delta / static_cast<double>(n);
        m2 += delta * (x - mean);
    }
    double variance() const { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
    double std_error() const {
        return n > 0 ? std::sqrt(variance() / static_cast<double>(n)) : 0.0;
    }
};

double residual_loss(const Tensor& v, const Tensor& v_target, bool per_dim) {
    double acc = 0.0;
    for (std::size_t c = 0; c < v.data.size(); ++c) {
        const double r = v.data[c] - v_target.data[c];
        acc += r * r;
    }
    if (per_dim) acc /= static_cast<double>(v.data.size());
    return acc;
}

struct EstimatorSums {
    RunningMean task;
    RunningMean conditional;
    RunningMean difference;  // per-tuple task aux minus inner conditional mean
};

// Shared tuple loop. Tuples always come from fork-0 of `rng` and noise base
// draws from fork-1, so the task-only and conditional estimators consume
// identical tuple streams for equal input generators.
EstimatorSums run_estimator(const VelocityPointFn& velocity, const NoiseParamsPointFn* noise,
                            const Dataset& data, std::size_t n, std::size_t m_noise, Rng& rng,
                            bool per_dim) {
    if (data.size() == 0) throw ConfigError("entropy estimator: empty dataset");
    if (n < 1) throw ConfigError("entropy estimator: n must be at least 1");
    if (noise != nullptr && m_noise < 1) {
        throw ConfigError("entropy estimator: m_noise must be at least 1");
    }

    const std::size_t d = data.dim();
    Rng tuple_rng = rng.fork(0);
    Rng noise_rng = rng.fork(1);

    EstimatorSums sums;
    Tensor x0 = Tensor::zeros({d});
    Tensor x_t = Tensor::zeros({d});
    Tensor v_target = Tensor::zeros({d});
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t idx = tuple_rng.uniform_index(data.size());
        for (std::size_t c = 0; c < d; ++c) x0.data[c] = tuple_rng.normal();
        const double t = tuple_rng.uniform();

        std::span<const double> xs = data.points.row(idx);
        for (std::size_t c = 0; c < d; ++c) {
            x_t.data[c] = t * xs[c] + (1.0 - t) * x0.data[c];
            v_target.data[c] = xs[c] - x0.data[c];
        }

        Tensor v = velocity(x_t, t);
        if (v.data.size() != d) throw ShapeError("entropy estimator: velocity shape mismatch");
        const double task_aux = aux_entropy(residual_loss(v, v_target, per_dim));
        sums.task.add(task_aux);

        if (noise == nullptr) continue;
        NoiseParams params = (*noise)(x_t, t);
        RunningMean inner;
        for (std::size_t j = 0; j < m_noise; ++j) {
            Tensor base = noise_base_draw(params.family, noise_rng, params.loc.shape);
            Tensor z = noise_transform(params, base);
            Tensor v_noisy = add(v, z);
            inner.add(aux_entropy(residual_loss(v_noisy, v_target, per_dim)));
        }
        sums.conditional.add(inner.mean);
        sums.difference.add(task_aux - inner.mean);
    }
    return sums;
}

}  // namespace

EntropyEstimate task_entropy_mc(const VelocityPointFn& velocity, const Dataset& data,
                                std::size_t n, Rng& rng, bool per_dim) {
    const EstimatorSums sums = run_estimator(velocity, nullptr, data, n, 0, rng, per_dim);
    return {sums.task.mean, sums.task.std_error(), n};
}

EntropyEstimate task_entropy_mc(const VelocityModel& model, const Dataset& data, std::size_t n,
                                Rng& rng, bool per_dim) {
    return task_entropy_mc(model_velocity_fn(model), data, n, rng, per_dim);
}

double conditional_entropy_mc(const VelocityPointFn& velocity, const NoiseParamsPointFn& noise,
                              const Dataset& data, std::size_t n, std::size_t m_noise, Rng& rng,
                              bool per_dim) {
    const EstimatorSums sums = run_estimator(velocity, &noise, data, n, m_noise, rng, per_dim);
    return sums.conditional.mean;
}

double conditional_entropy_mc(const VelocityModel& model, const NoiseGenerator& gen,
                              const Dataset& data, std::size_t n, std::size_t m_noise, Rng& rng,
                              bool per_dim) {
    return conditional_entropy_mc(model_velocity_fn(model), generator_noise_fn(model, gen), data,
                                  n, m_noise, rng, per_dim);
}

EntropyReport mi_gain(const VelocityPointFn& velocity, const NoiseParamsPointFn& noise,
                      const Dataset& data, std::size_t n, std::size_t m_noise, Rng& rng,
                      bool per_dim) {
    const EstimatorSums sums = run_estimator(velocity, &noise, data, n, m_noise, rng, per_dim);
    EntropyReport report;
    report.task_entropy = sums.task.mean;
    report.conditional_entropy = sums.conditional.mean;
    report.mi_gain = sums.task.mean - sums.conditional.mean;
    report.sample_count = n;
    report.std_error = sums.difference.std_error();
    return report;
}

EntropyReport mi_gain(const VelocityModel& model, const NoiseGenerator& gen, const Dataset& data,
                      std::size_t n, std::size_t m_noise, Rng& rng, bool per_dim) {
    return mi_gain(model_velocity_fn(model), generator_noise_fn(model, gen), data, n, m_noise,
                   rng, per_dim);
}

VelocityPointFn model_velocity_fn(const VelocityModel& model) {
    return [&model](const Tensor& x, double t) { return velocity_eval(model, x, t); };
}

NoiseParamsPointFn generator_noise_fn(const VelocityModel& model, const NoiseGenerator& gen) {
    return [&model, &gen](const Tensor& x, double t) {
        Tensor features = backbone_features(model, x, t);
        return noise_head_eval(gen, features);
    };
}

}  // namespace rnflow
