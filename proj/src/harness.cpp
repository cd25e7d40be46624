#include "gpais/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

namespace gpais {

namespace {

OpCounter& scratch_counter() {
  thread_local OpCounter c;
  return c;
}

std::vector<double> split_row(const std::string& line, int line_no) {
  std::vector<double> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    try {
      out.push_back(std::stod(cell));
    } catch (const std::exception&) {
      throw MalformedRow("line " + std::to_string(line_no) +
                         ": not a number: " + cell);
    }
  }
  return out;
}

}  // namespace

Dataset load_dataset(const std::string& path, TaskType task,
                     Eigen::Index subsample, std::uint64_t seed,
                     double positive_class) {
  std::ifstream in(path);
  if (!in) {
    throw EmptyDataset("cannot open dataset file: " + path);
  }
  std::vector<std::vector<double>> rows;
  std::string line;
  int line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    std::vector<double> row = split_row(line, line_no);
    if (width == 0) {
      width = row.size();
      if (width < 2) {
        throw MalformedRow("line " + std::to_string(line_no) +
                           ": need at least one feature and a target");
      }
    } else if (row.size() != width) {
      throw MalformedRow("line " + std::to_string(line_no) + ": expected " +
                         std::to_string(width) + " columns, got " +
                         std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.size() < 2) {
    throw EmptyDataset("dataset has fewer than 2 rows: " + path);
  }

  if (subsample > 0 && subsample < static_cast<Eigen::Index>(rows.size())) {
    // seeded draw without replacement, order-stable
    Rng rng = Rng(seed).split(0x5eed);
    std::vector<std::size_t> idx(rows.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (std::size_t i = idx.size() - 1; i > 0; --i) {
      std::swap(idx[i], idx[rng.integer(i + 1)]);
    }
    idx.resize(static_cast<std::size_t>(subsample));
    std::sort(idx.begin(), idx.end());
    std::vector<std::vector<double>> picked;
    picked.reserve(idx.size());
    for (std::size_t i : idx) picked.push_back(std::move(rows[i]));
    rows = std::move(picked);
  }

  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index d = static_cast<Eigen::Index>(width) - 1;
  Dataset data;
  data.X.resize(n, d);
  data.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) data.X(i, j) = rows[i][j];
    data.y(i) = rows[i][d];
  }

  // standardize features
  for (Eigen::Index j = 0; j < d; ++j) {
    const double mean = data.X.col(j).mean();
    data.X.col(j).array() -= mean;
    const double sd =
        std::sqrt(data.X.col(j).squaredNorm() / static_cast<double>(n));
    if (sd > 0.0) data.X.col(j) /= sd;
  }

  if (task == TaskType::Regression) {
    data.y.array() -= data.y.mean();
  } else {
    double positive = positive_class;
    if (std::isnan(positive)) {
      // modal label
      std::map<double, int> counts;
      for (Eigen::Index i = 0; i < n; ++i) ++counts[data.y(i)];
      int best = -1;
      for (const auto& [label, c] : counts) {
        if (c > best) {
          best = c;
          positive = label;
        }
      }
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      data.y(i) = data.y(i) == positive ? 1.0 : -1.0;
    }
  }
  return data;
}

double quantile_type7(std::vector<double> values, double p) {
  if (values.empty()) {
    throw std::invalid_argument("quantile_type7: empty sample");
  }
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - std::floor(h)) * (values[hi] - values[lo]);
}

std::vector<std::int64_t> log_op_grid(std::int64_t from, std::int64_t to,
                                      int n) {
  from = std::max<std::int64_t>(from, 1);
  to = std::max(to, from);
  std::vector<std::int64_t> grid;
  grid.reserve(n);
  const double lf = std::log(static_cast<double>(from));
  const double lt = std::log(static_cast<double>(to));
  for (int i = 0; i < n; ++i) {
    const double frac = n == 1 ? 1.0 : static_cast<double>(i) / (n - 1);
    const auto v = static_cast<std::int64_t>(
        std::llround(std::exp(lf + frac * (lt - lf))));
    if (grid.empty() || v > grid.back()) grid.push_back(v);
  }
  return grid;
}

IqrCurve iqr_aggregate(const std::vector<ConvergenceTrace>& traces,
                       const std::vector<std::int64_t>& grid) {
  if (traces.empty()) {
    throw std::invalid_argument("iqr_aggregate: no traces");
  }
  IqrCurve curve;
  std::vector<std::size_t> cursor(traces.size(), 0);
  for (const std::int64_t g : grid) {
    std::vector<double> values;
    values.reserve(traces.size());
    for (std::size_t k = 0; k < traces.size(); ++k) {
      const auto& pts = traces[k].points;
      if (pts.empty() || pts.front().cubic_ops > g) {
        throw GridBeforeFirstObservation(
            "grid point " + std::to_string(g) +
            " precedes the first observation of a trace");
      }
      std::size_t& c = cursor[k];
      while (c + 1 < pts.size() && pts[c + 1].cubic_ops <= g) ++c;
      values.push_back(pts[c].estimate);
    }
    curve.points.push_back({g, quantile_type7(values, 0.25),
                            quantile_type7(values, 0.5),
                            quantile_type7(values, 0.75)});
  }
  return curve;
}

void RunningMeanTrace::add(double norm, std::int64_t ops) {
  sum_ += norm;
  ++n_;
  const double mean = sum_ / static_cast<double>(n_);
  if (last_recorded_ < 0 || ops >= last_recorded_ + stride_) {
    if (!points_.empty() && points_.back().cubic_ops == ops) {
      points_.back().estimate = mean;
    } else {
      points_.push_back({ops, mean});
      last_recorded_ = ops;
    }
  } else if (!points_.empty() && points_.back().cubic_ops == ops) {
    points_.back().estimate = mean;
  }
  pending_ = {ops, mean};
}

ConvergenceTrace RunningMeanTrace::finish(std::int64_t eot_ops) const {
  ConvergenceTrace trace;
  trace.points = points_;
  trace.eot_ops = eot_ops;
  if (n_ > 0 &&
      (trace.points.empty() ||
       trace.points.back().cubic_ops < pending_.cubic_ops)) {
    trace.points.push_back(pending_);
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Experiment driver
// ---------------------------------------------------------------------------

namespace {

struct Problem {
  KernelSpec spec;
  Dataset data;
  LogSpacePrior prior;
};

struct ResolvedRun {
  Problem problem;
  std::string sampler;
  int replicates;
  std::uint64_t seed;
  int threads;
  std::int64_t budget_ops;
  std::int64_t max_steps;
  int grid_points;
};

TargetDensity exact_regression_target(const Problem& p) {
  return TargetDensity{
      [&p](const Vector& theta, Rng&, OpCounter& counter) {
        ParamVector pv{theta};
        try {
          return log_marginal_regression(p.spec, pv, p.data, counter) +
                 p.prior.log_density(pv);
        } catch (const NotPositiveDefinite&) {
          return -std::numeric_limits<double>::infinity();
        }
      },
      /*is_noisy=*/false};
}

GradTarget regression_grad_target(const Problem& p) {
  return GradTarget{[&p](const Vector& theta, OpCounter& counter) {
    ParamVector pv{theta};
    try {
      ValueAndGrad vg =
          log_marginal_regression_with_grad(p.spec, pv, p.data, counter);
      return GradTargetResult{vg.value + p.prior.log_density(pv),
                              vg.grad + p.prior.grad_log_density(pv)};
    } catch (const NotPositiveDefinite&) {
      return GradTargetResult{-std::numeric_limits<double>::infinity(),
                              Vector::Zero(theta.size())};
    }
  }};
}

GaussianApprox build_latent_approx(const Problem& p, const ParamVector& pv,
                                   const std::string& kind,
                                   OpCounter& counter) {
  if (kind == "ep") return ep_approx(p.spec, pv, p.data, counter);
  return laplace_approx(p.spec, pv, p.data, counter);
}

TargetDensity noisy_classification_target(const Problem& p,
                                          const std::string& approx_kind,
                                          int n_imp) {
  return TargetDensity{
      [&p, approx_kind, n_imp](const Vector& theta, Rng& rng,
                               OpCounter& counter) {
        ParamVector pv{theta};
        try {
          const GaussianApprox approx =
              build_latent_approx(p, pv, approx_kind, counter);
          return pseudo_marginal_estimate(p.data, approx, n_imp, rng) +
                 p.prior.log_density(pv);
        } catch (const std::runtime_error&) {
          return -std::numeric_limits<double>::infinity();
        }
      },
      /*is_noisy=*/true};
}

// Deterministic approximate evidence for classification mode finding.
std::function<double(const Vector&, OpCounter&)> classification_objective(
    const Problem& p, const std::string& approx_kind) {
  return [&p, approx_kind](const Vector& theta, OpCounter& counter) {
    ParamVector pv{theta};
    try {
      const GaussianApprox approx =
          build_latent_approx(p, pv, approx_kind, counter);
      return approx.log_evidence + p.prior.log_density(pv);
    } catch (const std::runtime_error&) {
      return -std::numeric_limits<double>::infinity();
    }
  };
}

bool is_classification_sampler(const std::string& id) {
  return id == "pm-amis" || id == "pm-mh";
}

struct Initializer {
  ModeResult mode;
  std::int64_t op_cost;
};

Initializer run_initializer(const Problem& p, const Config& cfg) {
  OpCounter counter;
  const Vector theta0 =
      Vector::Zero(static_cast<Eigen::Index>(p.spec.n_params()));
  const double tol = cfg.get_double("init.tol", 1e-5);
  const int max_iter = static_cast<int>(cfg.get_int("init.max_iter", 200));
  ModeResult mode;
  if (p.spec.task == TaskType::Regression) {
    mode = find_mode(regression_grad_target(p), theta0, counter, tol, max_iter);
  } else {
    const std::string approx_kind = cfg.get_string("pm.approx", "ep");
    GradTarget fd = finite_difference_gradient(
        classification_objective(p, approx_kind),
        cfg.get_double("init.fd_step", 1e-4));
    mode = find_mode(fd, theta0, counter, tol, max_iter);
  }
  return {std::move(mode), counter.count()};
}

Schedule schedule_from_config(const Config& cfg, const std::string& prefix,
                              int def_T, int def_base, int def_slope) {
  const int T = static_cast<int>(cfg.get_int(prefix + ".iterations", def_T));
  const int base = static_cast<int>(cfg.get_int(prefix + ".n_base", def_base));
  const int slope =
      static_cast<int>(cfg.get_int(prefix + ".n_slope", def_slope));
  // N_t = base + slope*(t+1): t is 0-based internally, the schedule's t
  // starts at 1
  return Schedule{T, [base, slope](int t) { return base + slope * (t + 1); }};
}

ConvergenceTrace run_is_replicate(const Problem& p, const Config& cfg,
                                  const std::string& id,
                                  const Initializer& init, Rng rng) {
  OpCounter counter;
  counter.add(init.op_cost);

  const bool rbf = p.spec.family == KernelFamily::RBF;
  const bool diag = id == "amis-d" || id == "mamis-d";
  const ProposalParams gamma0 = build_proposal(
      ProposalVariant::InverseNegHessian, init.mode.mode, init.mode.hessian,
      cfg.get_double("is.init_alpha", 1.0));

  TargetDensity target =
      is_classification_sampler(id)
          ? noisy_classification_target(
                p, cfg.get_string("pm.approx", "ep"),
                static_cast<int>(cfg.get_int("pm.nimp", 64)))
          : exact_regression_target(p);

  ConvergenceTrace trace;
  IsRunOptions opts;
  opts.adapt_mode = diag ? AdaptMode::DiagCov : AdaptMode::FullCov;
  opts.on_iteration = [&trace, &counter](const WeightedSampleStore& store,
                                         int) {
    try {
      const double est = self_normalized_expectation(
          store, [](const Vector& th) { return th.norm(); });
      const std::int64_t ops = counter.count();
      if (trace.points.empty() || ops > trace.points.back().cubic_ops) {
        trace.points.push_back({ops, est});
      } else {
        trace.points.back().estimate = est;
      }
    } catch (const ZeroTotalWeight&) {
      // no usable weights yet; skip the point
    }
  };

  if (id == "amis" || id == "amis-d" || id == "pm-amis") {
    Schedule sched =
        is_classification_sampler(id)
            ? schedule_from_config(cfg, "is", 60, 400, 0)
            : schedule_from_config(cfg, "is", rbf ? 1120 : 280, rbf ? 25 : 100,
                                   0);
    amis_run(target, gamma0, sched, rng, counter, opts);
    trace.eot_ops = init.op_cost;
  } else if (id == "mamis" || id == "mamis-d") {
    Schedule sched = schedule_from_config(cfg, "is", rbf ? 46 : 5,
                                          rbf ? 0 : 3000, rbf ? 26 : 1000);
    mamis_run(target, gamma0, sched, rng, counter, opts);
    trace.eot_ops = init.op_cost;
  } else if (id == "mamis-p") {
    Schedule sched = schedule_from_config(cfg, "is", rbf ? 46 : 5,
                                          rbf ? 0 : 3000, rbf ? 26 : 1000);
    opts.regularizing_prior = gamma0;
    opts.prior_strength = cfg.get_double("is.prior_strength", 10.0);
    mamis_run(target, gamma0, sched, rng, counter, opts);
    trace.eot_ops = init.op_cost;
  } else if (id == "amis-mamis") {
    Schedule amis_sched = schedule_from_config(cfg, "is.amis", 13, 1000, 0);
    Schedule mamis_sched = schedule_from_config(cfg, "is", 5, 0, 1000);
    const AmisMamisResult r = amis_mamis_run(target, gamma0, amis_sched,
                                             mamis_sched, rng, counter, opts);
    trace.eot_ops = init.op_cost + r.tuning_ops;
    // drop points recorded during the tuning phase
    std::erase_if(trace.points, [&trace](const TracePoint& pt) {
      return pt.cubic_ops < trace.eot_ops;
    });
  } else {
    throw ConfigError("unknown IS sampler id: " + id);
  }
  return trace;
}

ConvergenceTrace run_mcmc_replicate(const Problem& p, const Config& cfg,
                                    const std::string& id,
                                    const Initializer& init, Rng rng,
                                    std::int64_t budget,
                                    std::int64_t max_steps) {
  OpCounter counter;
  counter.add(init.op_cost);
  const Vector& m = init.mode.mode;
  const Matrix& h = init.mode.hessian;
  const Eigen::Index d = m.size();

  const ProposalParams init_density =
      build_proposal(ProposalVariant::InverseNegHessian, m, h, 1.0);
  const Matrix approx_cov = repaired_neg_hessian_inverse(h);

  const auto variant_of = [&]() -> char {
    return id.back();  // 'i', 'd', 'h'  (pm-mh handled as 'h')
  };

  const std::int64_t stride =
      budget > 0 ? std::max<std::int64_t>(1, budget / 1000) : 1;
  RunningMeanTrace trace(stride);

  const auto keep_going = [&](std::int64_t steps) {
    return (budget <= 0 || counter.count() < budget) &&
           (max_steps <= 0 || steps < max_steps);
  };

  if (id == "mh-i" || id == "mh-d" || id == "mh-h" || id == "pm-mh") {
    TargetDensity target =
        id == "pm-mh" ? noisy_classification_target(
                            p, cfg.get_string("pm.approx", "ep"),
                            static_cast<int>(cfg.get_int("pm.nimp", 64)))
                      : exact_regression_target(p);
    Matrix base_cov;
    switch (id == "pm-mh" ? 'h' : variant_of()) {
      case 'i':
        base_cov = Matrix::Identity(d, d);
        break;
      case 'd':
        base_cov = Matrix::Zero(d, d);
        base_cov.diagonal() = approx_cov.diagonal();
        break;
      default:
        base_cov = approx_cov;
    }
    Vector th0 = init_density.sample(rng);
    ChainState state{th0, target.log_eval(th0, rng, counter)};

    const double alpha0 =
        cfg.get_double("mcmc.alpha0", 5.6644 / static_cast<double>(d));
    auto run_batch = [&](double alpha, int n) {
      const CholeskyFactor prop =
          cholesky(Matrix(alpha * base_cov), scratch_counter());
      int accepted = 0;
      for (int s = 0; s < n; ++s) {
        MhResult r = mh_step(state, prop, target, rng, counter);
        state = r.state;
        if (r.accepted) ++accepted;
      }
      return static_cast<double>(accepted) / n;
    };
    const TuneResult tuned = tune_scale(
        run_batch, alpha0, cfg.get_double("mcmc.target_rate", 0.25),
        cfg.get_double("mcmc.tune_tol", 0.05),
        static_cast<int>(cfg.get_int("mcmc.tune_batch", 200)),
        static_cast<int>(cfg.get_int("mcmc.tune_max_batches", 20)));
    const std::int64_t eot = counter.count();
    trace.add(state.theta.norm(), eot);
    const CholeskyFactor prop =
        cholesky(Matrix(tuned.alpha * base_cov), scratch_counter());
    std::int64_t steps = 0;
    while (keep_going(steps)) {
      MhResult r = mh_step(state, prop, target, rng, counter);
      state = r.state;
      trace.add(state.theta.norm(), counter.count());
      ++steps;
    }
    return trace.finish(eot);
  }

  if (id == "ss") {
    TargetDensity target = exact_regression_target(p);
    Vector th0 = init_density.sample(rng);
    ChainState state{th0, target.log_eval(th0, rng, counter)};
    const double w = cfg.get_double("slice.width", 1.5);
    const std::int64_t eot = counter.count();
    trace.add(state.theta.norm(), eot);
    std::int64_t steps = 0;
    while (keep_going(steps)) {
      state = slice_step(state, w, target, rng, counter);
      trace.add(state.theta.norm(), counter.count());
      ++steps;
    }
    return trace.finish(eot);
  }

  // HMC family
  GradTarget target = regression_grad_target(p);
  MassVariant mv;
  switch (variant_of()) {
    case 'i':
      mv = MassVariant::Identity;
      break;
    case 'd':
      mv = MassVariant::DiagInverseApproxCov;
      break;
    default:
      mv = MassVariant::InverseApproxCov;
  }
  const MassMatrix mass = make_mass_matrix(mv, approx_cov);
  Vector th0 = init_density.sample(rng);
  GradTargetResult g0 = target.eval(th0, counter);
  HmcState state{th0, g0.value, g0.grad};

  const bool is_hmc = id.rfind("hmc", 0) == 0;
  const bool is_nutsda = id.rfind("nutsda", 0) == 0;

  if (is_hmc) {
    const int l_max = static_cast<int>(cfg.get_int("hmc.max_leapfrog", 10));
    const bool jitter = cfg.get_bool("hmc.jitter_leapfrog", true);
    auto run_batch = [&](double eps, int n) {
      int accepted = 0;
      for (int s = 0; s < n; ++s) {
        HmcResult r =
            hmc_step(state, mass, eps, l_max, jitter, target, rng, counter);
        state = r.state;
        if (r.accepted) ++accepted;
      }
      return static_cast<double>(accepted) / n;
    };
    const TuneResult tuned = tune_scale(
        run_batch, cfg.get_double("hmc.epsilon0", 0.1),
        cfg.get_double("hmc.target_rate", 0.65),
        cfg.get_double("mcmc.tune_tol", 0.05),
        static_cast<int>(cfg.get_int("mcmc.tune_batch", 200)),
        static_cast<int>(cfg.get_int("mcmc.tune_max_batches", 20)));
    const std::int64_t eot = counter.count();
    trace.add(state.theta.norm(), eot);
    std::int64_t steps = 0;
    while (keep_going(steps)) {
      HmcResult r = hmc_step(state, mass, tuned.alpha, l_max, jitter, target,
                             rng, counter);
      state = r.state;
      trace.add(state.theta.norm(), counter.count());
      ++steps;
    }
    return trace.finish(eot);
  }

  double eps = cfg.get_double("nuts.epsilon", 0.1);
  std::int64_t eot = counter.count();
  if (is_nutsda) {
    DualAveragingParams da;
    da.gamma = cfg.get_double("nutsda.gamma", 0.05);
    da.t0 = cfg.get_double("nutsda.t0", 30.0);
    da.kappa = cfg.get_double("nutsda.kappa", 0.75);
    da.target_accept = cfg.get_double("nutsda.target_accept", 0.65);
    const int n_adapt =
        static_cast<int>(cfg.get_int("nutsda.adapt_steps", 500));
    NutsdaResult r =
        nutsda_run(state, mass, da, n_adapt, 0, target, rng, counter);
    eps = r.epsilon;
    eot = r.eot_ops;
    state = r.final_state;
  }
  trace.add(state.theta.norm(), eot);
  std::int64_t steps = 0;
  while (keep_going(steps)) {
    NutsResult r = nuts_step(state, mass, eps, target, rng, counter);
    state = r.state;
    trace.add(state.theta.norm(), counter.count());
    ++steps;
  }
  return trace.finish(eot);
}

bool is_is_sampler(const std::string& id) {
  return id == "amis" || id == "amis-d" || id == "mamis" || id == "mamis-d" ||
         id == "mamis-p" || id == "amis-mamis" || id == "pm-amis";
}

}  // namespace

ExperimentResult run_experiment(const Config& config) {
  Config cfg = config;
  // resolve defaults into the manifest
  cfg.set_default("dataset.task", "regression");
  cfg.set_default("dataset.subsample", "0");
  cfg.set_default("kernel.family", "rbf");
  cfg.set_default("prior.stddev", "3");
  cfg.set_default("run.replicates", "1");
  cfg.set_default("run.seed", "0");
  cfg.set_default("run.threads",
                  std::to_string(std::thread::hardware_concurrency()));
  cfg.set_default("run.budget_ops", "0");
  cfg.set_default("run.max_steps", "10000");
  cfg.set_default("run.grid_points", "200");
  cfg.set_default("sampler.id", "amis");

  const std::string task_name = cfg.get_string("dataset.task");
  const TaskType task = task_name == "classification"
                            ? TaskType::Classification
                            : TaskType::Regression;
  if (task_name != "classification" && task_name != "regression") {
    throw ConfigError("dataset.task must be regression or classification");
  }
  const std::uint64_t seed =
      static_cast<std::uint64_t>(cfg.get_int("run.seed", 0));

  Problem problem;
  problem.data = load_dataset(
      cfg.get_string("dataset.path"), task,
      static_cast<Eigen::Index>(cfg.get_int("dataset.subsample", 0)), seed,
      cfg.get_double("dataset.positive_class",
                     std::numeric_limits<double>::quiet_NaN()));
  problem.spec.family = cfg.get_string("kernel.family") == "ard"
                            ? KernelFamily::ARD
                            : KernelFamily::RBF;
  problem.spec.input_dim = static_cast<int>(problem.data.dim());
  problem.spec.task = task;
  problem.prior.stddev = cfg.get_double("prior.stddev", 3.0);

  const std::string sampler = cfg.get_string("sampler.id");
  static const std::set<std::string> known_samplers = {
      "amis", "amis-d", "mamis", "mamis-d", "mamis-p", "amis-mamis",
      "pm-amis", "mh-i",  "mh-d",  "mh-h",   "pm-mh",   "hmc-i",
      "hmc-d", "hmc-h",  "nuts-i", "nuts-d", "nuts-h",  "nutsda-i",
      "nutsda-d", "nutsda-h", "ss"};
  if (!known_samplers.count(sampler)) {
    throw ConfigError("unknown sampler.id: " + sampler);
  }
  if (task == TaskType::Classification && !is_classification_sampler(sampler)) {
    throw ConfigError("sampler " + sampler +
                      " requires an exact likelihood (regression task)");
  }
  if (task == TaskType::Regression && is_classification_sampler(sampler)) {
    throw ConfigError("sampler " + sampler + " requires classification data");
  }

  const Initializer init = run_initializer(problem, cfg);
  const int replicates =
      static_cast<int>(cfg.get_int("run.replicates", 1));
  const int threads = std::max(1, static_cast<int>(cfg.get_int(
                                      "run.threads", 1)));
  const std::int64_t budget = cfg.get_int("run.budget_ops", 0);
  const std::int64_t max_steps = cfg.get_int("run.max_steps", 10000);
  const Rng root(seed);

  std::vector<std::optional<ConvergenceTrace>> slots(replicates);
  std::vector<std::string> warnings(replicates);
  std::atomic<int> next{0};
  auto worker = [&]() {
    for (;;) {
      const int r = next.fetch_add(1);
      if (r >= replicates) return;
      try {
        Rng rng = root.split(static_cast<std::uint64_t>(r) + 1);
        if (is_is_sampler(sampler)) {
          slots[r] = run_is_replicate(problem, cfg, sampler, init, rng);
        } else {
          slots[r] = run_mcmc_replicate(problem, cfg, sampler, init, rng,
                                        budget, max_steps);
        }
      } catch (const std::exception& e) {
        warnings[r] = "replicate " + std::to_string(r) + " failed: " + e.what();
      }
    }
  };
  if (threads == 1 || replicates == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < std::min(threads, replicates); ++t) {
      pool.emplace_back(worker);
    }
    for (auto& th : pool) th.join();
  }

  ExperimentResult result;
  result.manifest = cfg;
  for (int r = 0; r < replicates; ++r) {
    if (slots[r]) {
      result.traces.push_back(std::move(*slots[r]));
    } else {
      result.warnings.push_back(warnings[r]);
    }
  }
  if (result.traces.empty()) {
    throw std::runtime_error("run_experiment: every replicate failed" +
                             (result.warnings.empty()
                                  ? std::string()
                                  : "; first: " + result.warnings.front()));
  }

  std::int64_t grid_from = 1, grid_to = 1;
  for (const auto& t : result.traces) {
    if (!t.points.empty()) {
      grid_from = std::max(grid_from, t.points.front().cubic_ops);
      grid_to = std::max(grid_to, t.points.back().cubic_ops);
    }
  }
  for (const auto& t : result.traces) {
    if (!t.points.empty()) {
      grid_to = std::min(grid_to, t.points.back().cubic_ops);
    }
  }
  grid_to = std::max(grid_to, grid_from);
  result.curve = iqr_aggregate(
      result.traces,
      log_op_grid(grid_from, grid_to,
                  static_cast<int>(cfg.get_int("run.grid_points", 200))));
  return result;
}

void write_experiment_output(const ExperimentResult& result,
                             const std::string& out_dir,
                             const std::string& prefix) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  char buf[64];
  for (std::size_t r = 0; r < result.traces.size(); ++r) {
    std::snprintf(buf, sizeof buf, "%strace_r%03zu.csv", prefix.c_str(), r);
    std::ofstream out(fs::path(out_dir) / buf);
    out << "cubic_ops,estimate\n";
    for (const auto& pt : result.traces[r].points) {
      std::snprintf(buf, sizeof buf, "%lld,%.12g",
                    static_cast<long long>(pt.cubic_ops), pt.estimate);
      out << buf << "\n";
    }
  }
  {
    std::ofstream out(fs::path(out_dir) / (prefix + "aggregate.csv"));
    out << "cubic_ops,q1,median,q3\n";
    for (const auto& pt : result.curve.points) {
      std::snprintf(buf, sizeof buf, "%lld,%.12g,%.12g,%.12g",
                    static_cast<long long>(pt.cubic_ops), pt.q1, pt.median,
                    pt.q3);
      out << buf << "\n";
    }
  }
  {
    std::ofstream out(fs::path(out_dir) / (prefix + "manifest.txt"));
    out << result.manifest.serialize();
    for (std::size_t r = 0; r < result.traces.size(); ++r) {
      out << "# eot_ops.r" << r << " = " << result.traces[r].eot_ops << "\n";
    }
    for (const auto& w : result.warnings) {
      out << "# warning: " << w << "\n";
    }
  }
}

}  // namespace gpais
