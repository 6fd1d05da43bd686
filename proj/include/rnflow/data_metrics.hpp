#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "rnflow/rng.hpp"
#include "rnflow/tensor.hpp"

namespace rnflow {

enum class DatasetKind { kGaussianRing, kTwoMoons, kCheckerboard };

const char* dataset_kind_name(DatasetKind kind);
DatasetKind dataset_kind_from_name(std::string_view name);

struct DatasetParams {
    std::size_t components = 8;  // gaussian_ring mixture size
    double radius = 4.0;         // gaussian_ring circle radius
    double noise_std = 0.3;      // gaussian_ring / two_moons jitter
    double extent = 4.0;         // checkerboard half-width
};

/// Synthetic 2-D dataset, bit-identical under regeneration from
/// (kind, n, seed, params). Labels cover gaussian_ring components and
/// two_moons branches; checkerboard is unlabeled.
struct Dataset {
    Tensor points;  // n x 2
    std::vector<std::size_t> labels;
    DatasetKind kind = DatasetKind::kGaussianRing;
    std::uint64_t seed = 0;
    DatasetParams params;

    std::size_t size() const { return points.rows(); }
    std::size_t dim() const { return points.cols(); }
    bool labeled() const { return !labels.empty(); }
    std::size_t label_count() const;
};

Dataset make_dataset(DatasetKind kind, std::size_t n, std::uint64_t seed,
                     const DatasetParams& params = {});

struct MetricResult {
    std::string name;
    double value = 0.0;
    std::size_t n_a = 0;
    std::size_t n_b = 0;
    std::uint64_t seed = 0;
};

/// Sliced Wasserstein-2: sqrt of the mean, over n_proj random unit
/// directions, of the exact 1-D squared W2 between the projections.
/// Unequal counts are matched at quantiles q_i = (i + 0.5) / max(n_a, n_b)
/// of both empirical CDFs, which reduces to sorted-order matching when the
/// counts agree.
MetricResult sliced_w2(const Tensor& a, const Tensor& b, std::size_t n_proj = 128,
                       std::uint64_t seed = 0);

/// Energy distance, V-statistic form: 2 E|a-b| - E|a-a'| - E|b-b'| over all
/// ordered pairs (exact O(n^2), nonnegative by construction).
MetricResult energy_distance(const Tensor& a, const Tensor& b);

}  // namespace rnflow
