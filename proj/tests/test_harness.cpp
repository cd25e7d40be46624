#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "gpais/harness.hpp"

using namespace gpais;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream out(path);
  out << content;
  return path.string();
}

std::string synthetic_regression_csv(int n, unsigned seed) {
  Rng rng(seed);
  std::string text;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    const double y = std::sin(x) + 0.1 * rng.normal();
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f,%.6f\n", x, y);
    text += buf;
  }
  return text;
}

}  // namespace

TEST_CASE("dataset loading standardizes features and centers targets") {
  const std::string path = write_temp(
      "ds_reg.csv", "1.0,2.0,10.0\n3.0,2.5,20.0\n5.0,3.0,30.0\n");
  const Dataset data = load_dataset(path, TaskType::Regression);
  CHECK(data.size() == 3);
  CHECK(data.dim() == 2);
  for (Eigen::Index j = 0; j < 2; ++j) {
    CHECK(std::abs(data.X.col(j).mean()) < 1e-12);
    CHECK(data.X.col(j).squaredNorm() / 3.0 == doctest::Approx(1.0));
  }
  CHECK(std::abs(data.y.mean()) < 1e-12);
  // centered targets keep their spread
  CHECK(data.y(2) - data.y(0) == doctest::Approx(20.0));
}

TEST_CASE("classification labels map to +-1") {
  const std::string path = write_temp(
      "ds_cls.csv", "0.0,2\n1.0,7\n2.0,7\n3.0,2\n4.0,7\n");
  // modal label (7) becomes +1 when no positive class is given
  const Dataset modal = load_dataset(path, TaskType::Classification);
  CHECK(modal.y(0) == -1.0);
  CHECK(modal.y(1) == 1.0);
  CHECK(modal.y.sum() == doctest::Approx(1.0));

  const Dataset explicit_pos =
      load_dataset(path, TaskType::Classification, 0, 0, 2.0);
  CHECK(explicit_pos.y(0) == 1.0);
  CHECK(explicit_pos.y(1) == -1.0);
}

TEST_CASE("dataset errors name the offending line") {
  const std::string ragged =
      write_temp("ds_bad.csv", "1.0,2.0\n1.0\n");
  try {
    load_dataset(ragged, TaskType::Regression);
    FAIL("expected MalformedRow");
  } catch (const MalformedRow& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }

  const std::string text = write_temp("ds_nan.csv", "1.0,abc\n");
  CHECK_THROWS_AS(load_dataset(text, TaskType::Regression), MalformedRow);
  CHECK_THROWS_AS(load_dataset("/no/such/file.csv", TaskType::Regression),
                  EmptyDataset);
  const std::string empty = write_temp("ds_empty.csv", "\n\n");
  CHECK_THROWS_AS(load_dataset(empty, TaskType::Regression), EmptyDataset);
}

TEST_CASE("subsampling is seeded and without replacement") {
  std::string text;
  for (int i = 0; i < 50; ++i) {
    text += std::to_string(i) + ".0," + std::to_string(i) + "\n";
  }
  const std::string path = write_temp("ds_sub.csv", text);
  const Dataset a = load_dataset(path, TaskType::Regression, 10, 5);
  const Dataset b = load_dataset(path, TaskType::Regression, 10, 5);
  const Dataset c = load_dataset(path, TaskType::Regression, 10, 6);
  CHECK(a.size() == 10);
  CHECK((a.y - b.y).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.y - c.y).cwiseAbs().maxCoeff() > 0.0);
  // distinct rows
  for (int i = 0; i < 10; ++i) {
    for (int j = 0; j < i; ++j) CHECK(a.y(i) != a.y(j));
  }
}

TEST_CASE("type-7 quantiles") {
  // oracle: h = (n-1)p, linear interpolation between order statistics
  CHECK(quantile_type7({1.0, 2.0, 3.0, 4.0}, 0.25) == doctest::Approx(1.75));
  CHECK(quantile_type7({4.0, 1.0, 3.0, 2.0}, 0.5) == doctest::Approx(2.5));
  CHECK(quantile_type7({1.0, 2.0, 3.0, 4.0}, 0.75) == doctest::Approx(3.25));
  CHECK(quantile_type7({5.0}, 0.9) == 5.0);
  CHECK(quantile_type7({1.0, 9.0}, 0.0) == 1.0);
  CHECK(quantile_type7({1.0, 9.0}, 1.0) == 9.0);
  CHECK_THROWS_AS(quantile_type7({}, 0.5), std::invalid_argument);
}

TEST_CASE("log-spaced op grid") {
  const auto grid = log_op_grid(10, 10000, 50);
  CHECK(grid.front() == 10);
  CHECK(grid.back() == 10000);
  for (std::size_t i = 1; i < grid.size(); ++i) CHECK(grid[i] > grid[i - 1]);
  // degenerate range collapses to a single point
  const auto single = log_op_grid(500, 500, 200);
  CHECK(single.size() == 1);
  CHECK(single[0] == 500);
}

TEST_CASE("iqr aggregation carries the last observation forward") {
  ConvergenceTrace t1{{{10, 1.0}, {20, 2.0}, {40, 4.0}}, 10};
  ConvergenceTrace t2{{{10, 3.0}, {30, 5.0}}, 10};
  ConvergenceTrace t3{{{10, 2.0}, {25, 7.0}}, 10};
  const IqrCurve curve = iqr_aggregate({t1, t2, t3}, {10, 25, 40});

  // at 10: values {1, 3, 2} -> q1 1.5, median 2, q3 2.5
  CHECK(curve.points[0].q1 == doctest::Approx(1.5));
  CHECK(curve.points[0].median == doctest::Approx(2.0));
  CHECK(curve.points[0].q3 == doctest::Approx(2.5));
  // at 25: t1 holds 2 (from 20), t2 holds 3 (from 10), t3 hits 7
  CHECK(curve.points[1].median == doctest::Approx(3.0));
  // at 40: values {4, 5, 7}
  CHECK(curve.points[2].median == doctest::Approx(5.0));

  CHECK_THROWS_AS(iqr_aggregate({t1}, {5}), GridBeforeFirstObservation);
}

TEST_CASE("running-mean traces thin by stride and keep the last point") {
  RunningMeanTrace trace(10);
  trace.add(1.0, 5);    // recorded (first)
  trace.add(3.0, 8);    // thinned
  trace.add(5.0, 15);   // recorded
  trace.add(7.0, 18);   // thinned, but survives as the final point
  const ConvergenceTrace out = trace.finish(5);
  REQUIRE(out.points.size() == 3);
  CHECK(out.points[0].cubic_ops == 5);
  CHECK(out.points[0].estimate == doctest::Approx(1.0));
  CHECK(out.points[1].cubic_ops == 15);
  CHECK(out.points[1].estimate == doctest::Approx(3.0));  // mean of 1,3,5
  CHECK(out.points[2].cubic_ops == 18);
  CHECK(out.points[2].estimate == doctest::Approx(4.0));  // mean of all four
  CHECK(out.eot_ops == 5);
}

TEST_CASE("run_experiment produces files and is thread-count independent") {
  const std::string data_path =
      write_temp("exp_data.csv", synthetic_regression_csv(20, 99));
  Config cfg = Config::from_string(
      "sampler.id = amis\n"
      "is.iterations = 10\n"
      "is.n_base = 20\n"
      "is.n_slope = 0\n"
      "run.replicates = 4\n"
      "run.seed = 11\n");
  cfg.set("dataset.path", data_path);

  Config c1 = cfg;
  c1.set("run.threads", "1");
  Config c3 = cfg;
  c3.set("run.threads", "3");
  const ExperimentResult r1 = run_experiment(c1);
  const ExperimentResult r3 = run_experiment(c3);
  REQUIRE(r1.traces.size() == 4);
  REQUIRE(r3.traces.size() == 4);
  for (int k = 0; k < 4; ++k) {
    REQUIRE(r1.traces[k].points.size() == r3.traces[k].points.size());
    for (std::size_t i = 0; i < r1.traces[k].points.size(); ++i) {
      CHECK(r1.traces[k].points[i].cubic_ops ==
            r3.traces[k].points[i].cubic_ops);
      CHECK(r1.traces[k].points[i].estimate ==
            r3.traces[k].points[i].estimate);
    }
  }

  const auto out_dir = std::filesystem::temp_directory_path() / "exp_out";
  std::filesystem::remove_all(out_dir);
  write_experiment_output(r1, out_dir.string());
  CHECK(std::filesystem::exists(out_dir / "trace_r000.csv"));
  CHECK(std::filesystem::exists(out_dir / "trace_r003.csv"));
  CHECK(std::filesystem::exists(out_dir / "aggregate.csv"));
  CHECK(std::filesystem::exists(out_dir / "manifest.txt"));

  // the manifest is itself a valid config that reproduces the run
  const Config manifest =
      Config::from_file((out_dir / "manifest.txt").string());
  Config again = manifest;
  again.set("run.threads", "2");
  const ExperimentResult r2 = run_experiment(again);
  REQUIRE(r2.traces.size() == 4);
  CHECK(r2.traces[0].points.back().estimate ==
        r1.traces[0].points.back().estimate);

  // estimates settle near a common value across replicates
  std::vector<double> finals;
  for (const auto& t : r1.traces) finals.push_back(t.points.back().estimate);
  const double med = quantile_type7(finals, 0.5);
  for (double f : finals) CHECK(std::abs(f - med) / med < 0.2);
}

TEST_CASE("run_experiment validates task/sampler combinations") {
  const std::string data_path =
      write_temp("exp_data2.csv", synthetic_regression_csv(10, 1));
  Config cfg = Config::from_string("sampler.id = pm-amis\n");
  cfg.set("dataset.path", data_path);
  CHECK_THROWS_AS(run_experiment(cfg), ConfigError);

  Config cfg2 = Config::from_string(
      "sampler.id = amis\ndataset.task = classification\n");
  cfg2.set("dataset.path", data_path);
  CHECK_THROWS_AS(run_experiment(cfg2), ConfigError);

  Config cfg3 = Config::from_string("sampler.id = warp-drive\n");
  cfg3.set("dataset.path", data_path);
  CHECK_THROWS(run_experiment(cfg3));
}
