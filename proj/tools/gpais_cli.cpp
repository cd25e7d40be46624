// gpais: Gaussian-process covariance-parameter posterior benchmarks.
//
// Subcommands:
//   run      one experiment from a config file
//   sweep    several sampler variants over the same problem, plus a
//            combined comparison CSV
//   check    desk-scale oracle checks (quadrature, finite differences,
//            from-scratch mixture recomputation, op accounting)
//   inspect  dataset summary

#include <CLI11.hpp>

#include <Eigen/Eigenvalues>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "gpais/harness.hpp"
#include "gpais/is_samplers.hpp"

namespace {

using namespace gpais;

Config load_config(const std::string& path,
                   const std::vector<std::string>& overrides,
                   std::optional<long long> seed) {
  Config cfg = Config::from_file(path);
  for (const auto& o : overrides) cfg.apply_override(o);
  if (seed) cfg.set("run.seed", std::to_string(*seed));
  return cfg;
}

std::string resolve_out_dir(const std::string& flag_value) {
  // GPAIS_OUT overrides the output directory only; all other settings come
  // from the config file and flags.
  if (const char* env = std::getenv("GPAIS_OUT")) return env;
  return flag_value;
}

int cmd_run(const std::string& config_path,
            const std::vector<std::string>& overrides,
            std::optional<long long> seed, const std::string& out_dir) {
  const Config cfg = load_config(config_path, overrides, seed);
  const ExperimentResult result = run_experiment(cfg);
  write_experiment_output(result, resolve_out_dir(out_dir));
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "wrote " << result.traces.size() << " trace(s) to "
            << resolve_out_dir(out_dir) << "\n";
  return 0;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto a = item.find_first_not_of(" \t");
    const auto b = item.find_last_not_of(" \t");
    if (a != std::string::npos) out.push_back(item.substr(a, b - a + 1));
  }
  return out;
}

int cmd_sweep(const std::string& config_path,
              const std::vector<std::string>& overrides,
              std::optional<long long> seed, const std::string& out_dir) {
  const Config base = load_config(config_path, overrides, seed);
  const std::vector<std::string> variants =
      split_list(base.get_string("sweep.samplers"));
  if (variants.empty()) {
    throw ConfigError("sweep.samplers: empty variant list");
  }
  const std::string dir = resolve_out_dir(out_dir);

  std::vector<std::string> done;
  std::vector<IqrCurve> curves;
  for (const auto& v : variants) {
    Config cfg = base;
    cfg.set("sampler.id", v);
    try {
      const ExperimentResult result = run_experiment(cfg);
      write_experiment_output(result, dir, v + "_");
      for (const auto& w : result.warnings) {
        std::cerr << "warning [" << v << "]: " << w << "\n";
      }
      done.push_back(v);
      curves.push_back(result.curve);
    } catch (const std::exception& e) {
      std::cerr << "variant " << v << " failed: " << e.what() << "\n";
    }
  }
  if (done.empty()) {
    std::cerr << "error: every sweep variant failed\n";
    return 1;
  }

  // Combined comparison: per-variant median, carried forward onto a common
  // log-spaced grid spanning the intersection of the variant curves.
  std::int64_t from = 1, to = 1;
  for (const auto& c : curves) {
    from = std::max(from, c.points.front().cubic_ops);
    to = std::max(to, c.points.back().cubic_ops);
  }
  for (const auto& c : curves) to = std::min(to, c.points.back().cubic_ops);
  to = std::max(to, from);
  const std::vector<std::int64_t> grid = log_op_grid(from, to, 200);

  std::ofstream out(std::filesystem::path(dir) / "comparison.csv");
  out << "cubic_ops";
  for (const auto& v : done) out << "," << v;
  out << "\n";
  std::vector<std::size_t> cursor(curves.size(), 0);
  for (const std::int64_t g : grid) {
    out << g;
    for (std::size_t k = 0; k < curves.size(); ++k) {
      const auto& pts = curves[k].points;
      std::size_t& c = cursor[k];
      while (c + 1 < pts.size() && pts[c + 1].cubic_ops <= g) ++c;
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.12g", pts[c].median);
      out << "," << buf;
    }
    out << "\n";
  }
  std::cout << "wrote " << done.size() << " variant(s) + comparison.csv to "
            << dir << "\n";
  return 0;
}

int cmd_inspect(const std::string& config_path,
                const std::vector<std::string>& overrides) {
  const Config cfg = load_config(config_path, overrides, std::nullopt);
  const std::string task_name = cfg.get_string("dataset.task", "regression");
  const TaskType task = task_name == "classification"
                            ? TaskType::Classification
                            : TaskType::Regression;
  const Dataset data = load_dataset(
      cfg.get_string("dataset.path"), task,
      static_cast<Eigen::Index>(cfg.get_int("dataset.subsample", 0)),
      static_cast<std::uint64_t>(cfg.get_int("run.seed", 0)),
      cfg.get_double("dataset.positive_class",
                     std::numeric_limits<double>::quiet_NaN()));
  std::cout << "path     = " << cfg.get_string("dataset.path") << "\n"
            << "task     = " << task_name << "\n"
            << "rows     = " << data.size() << "\n"
            << "features = " << data.dim() << "\n";
  if (task == TaskType::Classification) {
    Eigen::Index pos = 0;
    for (Eigen::Index i = 0; i < data.size(); ++i) {
      if (data.y(i) > 0) ++pos;
    }
    std::cout << "labels   = " << pos << " positive, " << data.size() - pos
              << " negative\n";
  } else {
    std::cout << "target   = mean " << data.y.mean() << ", sd "
              << std::sqrt(data.y.squaredNorm() /
                           static_cast<double>(data.size()))
              << "\n";
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Oracle checks
// ---------------------------------------------------------------------------

struct GaussHermite {
  Vector nodes;    // of exp(-x^2)
  Vector weights;
};

GaussHermite gauss_hermite(int n) {
  Matrix jacobi = Matrix::Zero(n, n);
  for (int i = 1; i < n; ++i) {
    const double b = std::sqrt(i / 2.0);
    jacobi(i, i - 1) = jacobi(i - 1, i) = b;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(jacobi);
  GaussHermite gh;
  gh.nodes = es.eigenvalues();
  gh.weights.resize(n);
  const double sqrt_pi = std::sqrt(M_PI);
  for (int i = 0; i < n; ++i) {
    const double v0 = es.eigenvectors()(0, i);
    gh.weights(i) = sqrt_pi * v0 * v0;
  }
  return gh;
}

// Exact (to quadrature accuracy) probit evidence for n = 2:
// integral of Phi(y1 f1) Phi(y2 f2) under N(0, K).
double quadrature_evidence_2d(const Matrix& k, const Vector& y, int nodes) {
  OpCounter scratch;
  const CholeskyFactor chol = cholesky(k, scratch);
  const Matrix& l = chol.matrix();
  const GaussHermite gh = gauss_hermite(nodes);
  const double s2 = std::sqrt(2.0);
  double total = 0.0;
  for (int i = 0; i < nodes; ++i) {
    for (int j = 0; j < nodes; ++j) {
      const double f1 = s2 * l(0, 0) * gh.nodes(i);
      const double f2 =
          s2 * (l(1, 0) * gh.nodes(i) + l(1, 1) * gh.nodes(j));
      total += gh.weights(i) * gh.weights(j) *
               std::exp(probit_log_likelihood(y(0), f1) +
                        probit_log_likelihood(y(1), f2));
    }
  }
  return std::log(total / M_PI);
}

Dataset random_regression_instance(Rng& rng, Eigen::Index n, Eigen::Index d) {
  Dataset data;
  data.X.resize(n, d);
  data.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) data.X(i, j) = rng.normal();
    data.y(i) = rng.normal();
  }
  return data;
}

bool check_grad_fd(std::string& detail) {
  Rng rng(41);
  double worst = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    const Eigen::Index n = 3 + static_cast<Eigen::Index>(rng.integer(8));
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng.integer(3));
    KernelSpec spec;
    spec.family = rep % 2 == 0 ? KernelFamily::RBF : KernelFamily::ARD;
    spec.input_dim = static_cast<int>(d);
    spec.task = TaskType::Regression;
    const Dataset data = random_regression_instance(rng, n, d);
    ParamVector theta;
    theta.log_values.resize(spec.n_params());
    for (Eigen::Index j = 0; j < theta.log_values.size(); ++j) {
      theta.log_values(j) = 0.5 * rng.normal();
    }
    OpCounter counter;
    const ValueAndGrad vg =
        log_marginal_regression_with_grad(spec, theta, data, counter);
    const double h = 1e-6;
    for (Eigen::Index j = 0; j < theta.log_values.size(); ++j) {
      ParamVector tp = theta, tm = theta;
      tp.log_values(j) += h;
      tm.log_values(j) -= h;
      const double fd = (log_marginal_regression(spec, tp, data, counter) -
                         log_marginal_regression(spec, tm, data, counter)) /
                        (2.0 * h);
      const double rel =
          std::abs(vg.grad(j) - fd) / std::max(1.0, std::abs(fd));
      worst = std::max(worst, rel);
    }
  }
  detail = "max rel err " + std::to_string(worst);
  return worst < 1e-5;
}

bool check_pm_unbiasedness(std::string& detail) {
  // One probit observation, prior variance 1: the marginal is exactly 1/2
  // by symmetry.  The importance-sampling estimate must be unbiased.
  KernelSpec spec;
  spec.input_dim = 1;
  spec.task = TaskType::Classification;
  Dataset data;
  data.X = Matrix::Zero(1, 1);
  data.y = Vector::Ones(1);
  ParamVector theta;
  theta.log_values = Vector::Zero(2);  // sigma = 1

  bool ok = true;
  detail.clear();
  for (const bool use_ep : {false, true}) {
    OpCounter counter;
    const GaussianApprox approx =
        use_ep ? ep_approx(spec, theta, data, counter)
               : laplace_approx(spec, theta, data, counter);
    Rng rng(use_ep ? 1301 : 1302);
    const int reps = 100000;
    double sum = 0.0, sum_sq = 0.0;
    for (int r = 0; r < reps; ++r) {
      const double v =
          std::exp(pseudo_marginal_estimate(data, approx, 64, rng));
      sum += v;
      sum_sq += v * v;
    }
    const double mean = sum / reps;
    const double var = sum_sq / reps - mean * mean;
    const double se = std::sqrt(var / reps);
    const double z = std::abs(mean - 0.5) / se;
    detail += std::string(use_ep ? " ep" : "la") + ": mean " +
              std::to_string(mean) + " (|z| " + std::to_string(z) + ")";
    ok = ok && z < 3.0;
  }
  return ok;
}

bool check_quadrature(std::string& detail) {
  Rng rng(77);
  double worst_la = 0.0, worst_ep = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    KernelSpec spec;
    spec.input_dim = 1;
    spec.task = TaskType::Classification;
    Dataset data;
    data.X.resize(2, 1);
    data.X << rng.normal(), rng.normal();
    data.y.resize(2);
    data.y << (rng.uniform() < 0.5 ? 1.0 : -1.0),
        (rng.uniform() < 0.5 ? 1.0 : -1.0);
    ParamVector theta;
    theta.log_values.resize(2);
    theta.log_values << 0.4 * rng.normal(), 0.4 * rng.normal();

    const Matrix k = covariance_matrix(spec, theta, data.X, false);
    const double truth = quadrature_evidence_2d(k, data.y, 64);
    OpCounter counter;
    const double la =
        laplace_approx(spec, theta, data, counter).log_evidence;
    const double ep = ep_approx(spec, theta, data, counter).log_evidence;
    worst_la = std::max(worst_la, std::abs(la - truth));
    worst_ep = std::max(worst_ep, std::abs(ep - truth));
  }
  detail = "max |LA err| " + std::to_string(worst_la) + ", max |EP err| " +
           std::to_string(worst_ep);
  return worst_la < 0.05 && worst_ep < 0.01;
}

bool check_mixture_delta(std::string& detail) {
  // Toy 2-D Gaussian target; recompute every delta from scratch against the
  // incrementally maintained values, and confirm the T=1 degenerate case
  // reduces to classical importance weights.
  const Vector mu = (Vector(2) << 0.7, -0.3).finished();
  Matrix cov(2, 2);
  cov << 1.0, 0.3, 0.3, 0.8;
  OpCounter scratch;
  const CholeskyFactor target_chol = cholesky(cov, scratch);
  TargetDensity target{[&](const Vector& th, Rng&, OpCounter& counter) {
                         counter.add(1);
                         return mvn_log_density(th, mu, target_chol);
                       },
                       false};
  const ProposalParams gamma0{
      Vector::Zero(2), cholesky(Matrix(4.0 * Matrix::Identity(2, 2)), scratch)};

  Rng rng(11);
  OpCounter counter;
  const WeightedSampleStore store =
      amis_run(target, gamma0, Schedule::constant(4, 50), rng, counter);

  double worst = 0.0;
  for (std::size_t i = 0; i < store.samples.size(); ++i) {
    std::vector<double> terms;
    for (std::size_t t = 0; t < store.proposals.size(); ++t) {
      terms.push_back(std::log(static_cast<double>(store.sample_sizes[t])) +
                      store.proposals[t].log_density(store.samples[i]));
    }
    const double fresh = log_sum_exp(terms);
    worst = std::max(worst, std::abs(fresh - store.log_delta[i]) /
                                std::max(1.0, std::abs(fresh)));
  }

  Rng rng1(12);
  OpCounter c1;
  const WeightedSampleStore one =
      amis_run(target, gamma0, Schedule::constant(1, 50), rng1, c1);
  double worst1 = 0.0;
  for (std::size_t i = 0; i < one.samples.size(); ++i) {
    const double classical =
        one.log_target[i] - gamma0.log_density(one.samples[i]);
    worst1 = std::max(worst1, std::abs(one.log_weight(i) - classical));
  }
  detail = "delta rel err " + std::to_string(worst) + ", T=1 weight err " +
           std::to_string(worst1);
  return worst < 1e-10 && worst1 < 1e-12;
}

bool check_op_audit(std::string& detail) {
  Rng rng(5);
  KernelSpec spec;
  spec.input_dim = 2;
  spec.task = TaskType::Regression;
  const Dataset data = random_regression_instance(rng, 8, 2);
  ParamVector theta;
  theta.log_values = Vector::Zero(4);

  OpCounter c1;
  log_marginal_regression(spec, theta, data, c1);
  OpCounter c3;
  log_marginal_regression_with_grad(spec, theta, data, c3);

  KernelSpec cspec;
  cspec.input_dim = 1;
  cspec.task = TaskType::Classification;
  Dataset cdata = random_regression_instance(rng, 6, 1);
  for (Eigen::Index i = 0; i < cdata.size(); ++i) {
    cdata.y(i) = cdata.y(i) > 0 ? 1.0 : -1.0;
  }
  ParamVector ctheta;
  ctheta.log_values = Vector::Zero(2);
  OpCounter cla;
  laplace_approx(cspec, ctheta, cdata, cla);
  OpCounter cep;
  ep_approx(cspec, ctheta, cdata, cep);

  const bool la_ok = cla.count() >= 5;                       // 2 + iters + 2
  const bool ep_ok = cep.count() >= 5 && (cep.count() - 2) % 3 == 0;
  detail = "eval " + std::to_string(c1.count()) + ", eval+grad " +
           std::to_string(c3.count()) + ", LA " + std::to_string(cla.count()) +
           ", EP " + std::to_string(cep.count());
  return c1.count() == 1 && c3.count() == 3 && la_ok && ep_ok;
}

int cmd_check(const std::string& only) {
  struct Check {
    std::string name;
    bool (*fn)(std::string&);
  };
  const std::vector<Check> checks = {
      {"grad-fd", check_grad_fd},
      {"pm-unbiasedness", check_pm_unbiasedness},
      {"quadrature", check_quadrature},
      {"mixture-delta", check_mixture_delta},
      {"op-audit", check_op_audit},
  };
  bool any = false, all_ok = true;
  for (const auto& c : checks) {
    if (!only.empty() && c.name != only) continue;
    any = true;
    std::string detail;
    bool ok;
    try {
      ok = c.fn(detail);
    } catch (const std::exception& e) {
      ok = false;
      detail = std::string("exception: ") + e.what();
    }
    std::printf("%-18s %s  (%s)\n", c.name.c_str(), ok ? "pass" : "FAIL",
                detail.c_str());
    all_ok = all_ok && ok;
  }
  if (!any) {
    std::cerr << "error: no check named " << only << "\n";
    return 2;
  }
  return all_ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian-process posterior sampling benchmarks"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", only;
  std::vector<std::string> overrides;
  std::optional<long long> seed;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* c = sub->add_option("-c,--config", config_path, "config file");
    if (needs_config) c->required();
    sub->add_option("overrides", overrides,
                    "key=value config overrides (win over file values)");
    sub->add_option("--seed", seed, "run.seed override");
    sub->add_option("-o,--out", out_dir,
                    "output directory (env GPAIS_OUT overrides)");
  };
  add_common(app.add_subcommand("run", "run one experiment"), true);
  add_common(app.add_subcommand("sweep", "run several sampler variants"),
             true);
  add_common(app.add_subcommand("inspect", "summarize a dataset"), true);
  auto* check = app.add_subcommand("check", "run oracle checks");
  check->add_option("--only", only, "run a single named check");

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("run")) {
      return cmd_run(config_path, overrides, seed, out_dir);
    }
    if (app.got_subcommand("sweep")) {
      return cmd_sweep(config_path, overrides, seed, out_dir);
    }
    if (app.got_subcommand("inspect")) {
      return cmd_inspect(config_path, overrides);
    }
    return cmd_check(only);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
