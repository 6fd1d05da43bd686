#include "rnflow/data_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "rnflow/errors.hpp"

namespace rnflow {

const char* dataset_kind_name(DatasetKind kind) {
    switch (kind) {
        case DatasetKind::kGaussianRing:
            return "gaussian_ring";
        case DatasetKind::kTwoMoons:
            return "two_moons";
        case DatasetKind::kCheckerboard:
            return "checkerboard";
    }
    throw ConfigError("unknown dataset kind");
}

DatasetKind dataset_kind_from_name(std::string_view name) {
    if (name == "gaussian_ring") return DatasetKind::kGaussianRing;
    if (name == "two_moons") return DatasetKind::kTwoMoons;
    if (name == "checkerboard") return DatasetKind::kCheckerboard;
    throw ConfigError("unknown dataset kind '" + std::string(name) +
                      "' (expected gaussian_ring, two_moons, or checkerboard)");
}

std::size_t Dataset::label_count() const {
    if (labels.empty()) return 0;
    std::size_t top = 0;
    for (std::size_t v : labels) top = std::max(top, v);
    return top + 1;
}

namespace {

// k isotropic Gaussians centered on a circle; label = component index.
Dataset ring(std::size_t n, std::uint64_t seed, const DatasetParams& p) {
    if (p.components < 1) throw ConfigError("gaussian_ring needs at least one component");
    Dataset d;
    d.points = Tensor::zeros({n, 2});
    d.labels.resize(n);
    Rng rng(mix64(seed, 0x8157));
    const double tau = 2.0 * std::numbers::pi;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = rng.uniform_index(p.components);
        const double angle = tau * static_cast<double>(c) / static_cast<double>(p.components);
        d.points.at(i, 0) = p.radius * std::cos(angle) + p.noise_std * rng.normal();
        d.points.at(i, 1) = p.radius * std::sin(angle) + p.noise_std * rng.normal();
        d.labels[i] = c;
    }
    return d;
}

// Two interleaved half-circles, centered and doubled so the data spans a
// few units around the origin:
//   branch 0: (cos a, sin a),  branch 1: (1 - cos a, 0.5 - sin a), a ~ U[0, pi]
//   point = 2 * (raw - (0.5, 0.25)) + noise_std * N(0, I); label = branch.
Dataset moons(std::size_t n, std::uint64_t seed, const DatasetParams& p) {
    Dataset d;
    d.points = Tensor::zeros({n, 2});
    d.labels.resize(n);
    Rng rng(mix64(seed, 0x3005));
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t branch = rng.uniform_index(2);
        const double a = std::numbers::pi * rng.uniform();
        double x = (branch == 0) ? std::cos(a) : 1.0 - std::cos(a);
        double y = (branch == 0) ? std::sin(a) : 0.5 - std::sin(a);
        d.points.at(i, 0) = 2.0 * (x - 0.5) + p.noise_std * rng.normal();
        d.points.at(i, 1) = 2.0 * (y - 0.25) + p.noise_std * rng.normal();
        d.labels[i] = branch;
    }
    return d;
}

// Alternating squares: x1 ~ U[-2,2); x2 = u - 2*j + (floor(x1) mod 2) with
// u ~ U[0,1), j ~ {0,1}; both coordinates scaled by extent/2. Unlabeled.
Dataset checkerboard(std::size_t n, std::uint64_t seed, const DatasetParams& p) {
    Dataset d;
    d.points = Tensor::zeros({n, 2});
    Rng rng(mix64(seed, 0xC4EC));
    const double s = p.extent / 2.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double x1 = 4.0 * rng.uniform() - 2.0;
        const double u = rng.uniform();
        const double j = static_cast<double>(rng.uniform_index(2));
        const double parity = std::fmod(std::floor(x1) + 4.0, 2.0);
        const double x2 = u - 2.0 * j + parity;
        d.points.at(i, 0) = s * x1;
        d.points.at(i, 1) = s * x2;
    }
    return d;
}

}  // namespace

Dataset make_dataset(DatasetKind kind, std::size_t n, std::uint64_t seed,
                     const DatasetParams& params) {
    if (n < 1) throw ConfigError("make_dataset: n must be at least 1");
    Dataset d;
    switch (kind) {
        case DatasetKind::kGaussianRing:
            d = ring(n, seed, params);
            break;
        case DatasetKind::kTwoMoons:
            d = moons(n, seed, params);
            break;
        case DatasetKind::kCheckerboard:
            d = checkerboard(n, seed, params);
            break;
        default:
            throw ConfigError("unknown dataset kind");
    }
    d.kind = kind;
    d.seed = seed;
    d.params = params;
    require_finite(d.points, "make_dataset");
    return d;
}

namespace {

// Exact squared 1-D W2 between projected samples via quantile matching at
// q_i = (i + 0.5) / M, M = max(n_a, n_b).
double w2_squared_1d(std::vector<double>& a, std::vector<double>& b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const std::size_t m = std::max(a.size(), b.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const double q = (static_cast<double>(i) + 0.5) / static_cast<double>(m);
        const auto pick = [&](const std::vector<double>& v) {
            std::size_t idx = static_cast<std::size_t>(q * static_cast<double>(v.size()));
            if (idx >= v.size()) idx = v.size() - 1;
            return v[idx];
        };
        const double diff = pick(a) - pick(b);
        acc += diff * diff;
    }
    return acc / static_cast<double>(m);
}

}  // namespace

MetricResult sliced_w2(const Tensor& a, const Tensor& b, std::size_t n_proj, std::uint64_t seed) {
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols()) {
        throw ShapeError("sliced_w2: inputs must be rank-2 with matching dimension");
    }
    if (a.rows() == 0 || b.rows() == 0) throw ShapeError("sliced_w2: empty sample set");
    if (n_proj < 1) throw ConfigError("sliced_w2: n_proj must be at least 1");

    const std::size_t d = a.cols();
    Rng rng(mix64(seed, 0x51CE));
    std::vector<double> dir(d), pa(a.rows()), pb(b.rows());
    double acc = 0.0;
    for (std::size_t k = 0; k < n_proj; ++k) {
        double norm2 = 0.0;
        do {
            norm2 = 0.0;
            for (double& c : dir) {
                c = rng.normal();
                norm2 += c * c;
            }
        } while (norm2 < 1e-24);
        const double inv = 1.0 / std::sqrt(norm2);
        for (double& c : dir) c *= inv;

        for (std::size_t i = 0; i < a.rows(); ++i) {
            double s = 0.0;
            for (std::size_t c = 0; c < d; ++c) s += dir[c] * a.data[i * d + c];
            pa[i] = s;
        }
        for (std::size_t i = 0; i < b.rows(); ++i) {
            double s = 0.0;
            for (std::size_t c = 0; c < d; ++c) s += dir[c] * b.data[i * d + c];
            pb[i] = s;
        }
        acc += w2_squared_1d(pa, pb);
    }
    MetricResult r;
    r.name = "sliced_w2";
    r.value = std::sqrt(acc / static_cast<double>(n_proj));
    r.n_a = a.rows();
    r.n_b = b.rows();
    r.seed = seed;
    return r;
}

MetricResult energy_distance(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols()) {
        throw ShapeError("energy_distance: inputs must be rank-2 with matching dimension");
    }
    if (a.rows() == 0 || b.rows() == 0) throw ShapeError("energy_distance: empty sample set");

    const std::size_t d = a.cols();
    const auto pair_mean = [d](const Tensor& u, const Tensor& v) {
        double acc = 0.0;
        for (std::size_t i = 0; i < u.rows(); ++i) {
            const double* ui = u.data.data() + i * d;
            for (std::size_t j = 0; j < v.rows(); ++j) {
                const double* vj = v.data.data() + j * d;
                double s = 0.0;
                for (std::size_t c = 0; c < d; ++c) {
                    const double diff = ui[c] - vj[c];
                    s += diff * diff;
                }
                acc += std::sqrt(s);
            }
        }
        return acc / (static_cast<double>(u.rows()) * static_cast<double>(v.rows()));
    };

    MetricResult r;
    r.name = "energy_distance";
    r.value = 2.0 * pair_mean(a, b) - pair_mean(a, a) - pair_mean(b, b);
    r.n_a = a.rows();
    r.n_b = b.rows();
    r.seed = 0;
    return r;
}

}  // namespace rnflow
