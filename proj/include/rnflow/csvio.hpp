#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rnflow/data_metrics.hpp"
#include "rnflow/sampling.hpp"
#include "rnflow/tensor.hpp"
#include "rnflow/training.hpp"

namespace rnflow {

/// All writers render doubles with "%.17g" (value-exact round-trips, stable
/// bytes) and end every row with "\n". Column orders are frozen:
///   samples:      x0,..,x{d-1}[,label]
///   trajectories: traj_id,step,t,x0,..,x{d-1}
///   ledger:       traj_id,step,t,z0,..,z{d-1},cum0,..,cum{d-1}
///   metrics:      metric,value,n_a,n_b,seed
///   train log:    step,loss,eval_metric,seconds   (eval_metric may be empty)

std::string format_double(double v);

void write_samples_csv(const std::filesystem::path& path, const Tensor& samples,
                       const std::vector<std::size_t>* labels = nullptr);

struct SamplesCsv {
    Tensor points;
    std::vector<std::size_t> labels;  // empty when the file has no label column
};
SamplesCsv read_samples_csv(const std::filesystem::path& path);

void write_trajectories_csv(const std::filesystem::path& path,
                            const std::vector<Trajectory>& trajectories);

void write_ledger_csv(const std::filesystem::path& path,
                      const std::vector<Trajectory>& trajectories);

struct LedgerCsv {
    std::size_t dim = 0;
    std::vector<std::size_t> traj_ids;
    std::vector<std::size_t> steps;
    std::vector<double> times;
    std::vector<std::vector<double>> per_step;    // row-aligned z
    std::vector<std::vector<double>> cumulative;  // row-aligned running sum
};
LedgerCsv read_ledger_csv(const std::filesystem::path& path);

/// With `append`, rows are added to an existing file and no header is
/// written.
void write_metrics_csv(const std::filesystem::path& path,
                       const std::vector<MetricResult>& results, bool append = false);

/// `header_comment`, when nonempty, is written as a first line starting
/// with '#' (used for the finetune parameter-ratio report).
void write_train_log_csv(const std::filesystem::path& path, const TrainLog& log,
                         const std::string& header_comment = "");

}  // namespace rnflow
