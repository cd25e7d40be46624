#pragma once

#include "gpais/config.hpp"
#include "gpais/gp_classification.hpp"
#include "gpais/gp_regression.hpp"
#include "gpais/init.hpp"

#include <limits>

namespace gpais {

struct MalformedRow : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EmptyDataset : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct GridBeforeFirstObservation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Headerless CSV, comma-separated, last column target.  Features are
/// standardized to mean 0 / sd 1; regression targets centered;
/// classification labels mapped to +-1 (one-vs-rest against positive_class,
/// or against the modal label when positive_class is NaN).  subsample > 0
/// draws that many rows without replacement, seeded.
Dataset load_dataset(const std::string& path, TaskType task,
                     Eigen::Index subsample = 0, std::uint64_t seed = 0,
                     double positive_class =
                         std::numeric_limits<double>::quiet_NaN());

struct TracePoint {
  std::int64_t cubic_ops;
  double estimate;
};

/// (cubic-op count, running estimate of E[ ||theta|| ]) pairs, strictly
/// increasing in op count, plus the end-of-tuning marker.
struct ConvergenceTrace {
  std::vector<TracePoint> points;
  std::int64_t eot_ops = 0;
};

struct IqrPoint {
  std::int64_t cubic_ops;
  double q1, median, q3;
};
struct IqrCurve {
  std::vector<IqrPoint> points;
};

/// Type-7 (linear interpolation) quantile of an unsorted sample.
double quantile_type7(std::vector<double> values, double p);

/// n logarithmically spaced op counts in [from, to].
std::vector<std::int64_t> log_op_grid(std::int64_t from, std::int64_t to,
                                      int n);

/// Last-observation-carried-forward per trace at each grid point, then
/// Q1/median/Q3 across traces.
IqrCurve iqr_aggregate(const std::vector<ConvergenceTrace>& traces,
                       const std::vector<std::int64_t>& grid);

/// Streaming running mean of ||theta|| against op-count snapshots, with
/// optional thinning by op stride.
class RunningMeanTrace {
 public:
  explicit RunningMeanTrace(std::int64_t op_stride = 1)
      : stride_(op_stride) {}
  void add(double norm, std::int64_t ops);
  ConvergenceTrace finish(std::int64_t eot_ops) const;

 private:
  std::int64_t stride_;
  std::int64_t last_recorded_ = -1;
  double sum_ = 0.0;
  std::int64_t n_ = 0;
  TracePoint pending_{0, 0.0};
  std::vector<TracePoint> points_;
};

struct ExperimentResult {
  std::vector<ConvergenceTrace> traces;
  IqrCurve curve;
  Config manifest;
  std::vector<std::string> warnings;
};

/// Full protocol: dataset, initializer (mode / Hessian / proposal), the
/// configured sampler with its tuning phase per replicate, trace collection,
/// IQR aggregation.  Deterministic given run.seed, independent of
/// run.threads.
ExperimentResult run_experiment(const Config& config);

/// Writes trace_rNNN.csv per replicate, aggregate.csv, and manifest.txt.
void write_experiment_output(const ExperimentResult& result,
                             const std::string& out_dir,
                             const std::string& prefix = "");

}  // namespace gpais
