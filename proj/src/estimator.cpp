#include "iclv/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "iclv/bfgs.hpp"
#include "iclv/error.hpp"
#include "iclv/text.hpp"

namespace iclv {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Maps a bounded parameter to an unconstrained coordinate.
struct Transform {
  enum Kind { none, lower, upper, both } kind = none;
  double lo = 0.0;
  double hi = 0.0;

  static Transform of(const Parameter& p) {
    Transform t;
    if (p.lower && p.upper) {
      t.kind = both;
      t.lo = *p.lower;
      t.hi = *p.upper;
    } else if (p.lower) {
      t.kind = lower;
      t.lo = *p.lower;
    } else if (p.upper) {
      t.kind = upper;
      t.hi = *p.upper;
    }
    return t;
  }

  double to_theta(double z) const {
    switch (kind) {
      case lower: return lo + std::exp(z);
      case upper: return hi - std::exp(z);
      case both: return lo + (hi - lo) / (1.0 + std::exp(-z));
      default: return z;
    }
  }

  double dtheta(double z) const {
    switch (kind) {
      case lower: return std::exp(z);
      case upper: return -std::exp(z);
      case both: {
        const double s = 1.0 / (1.0 + std::exp(-z));
        return (hi - lo) * s * (1.0 - s);
      }
      default: return 1.0;
    }
  }

  double to_z(double theta) const {
    switch (kind) {
      case lower: return std::log(std::max(theta - lo, 1e-8 * std::max(1.0, std::abs(lo))));
      case upper: return std::log(std::max(hi - theta, 1e-8 * std::max(1.0, std::abs(hi))));
      case both: {
        const double eps = 1e-8 * (hi - lo);
        const double u = (std::clamp(theta, lo + eps, hi - eps) - lo) / (hi - lo);
        return std::log(u / (1.0 - u));
      }
      default: return theta;
    }
  }
};

class Problem {
public:
  Problem(const LikelihoodEngine& engine, const ParameterVector& base) : engine_(engine), base_(base) {
    for (auto i : base.free_indices()) transforms_.push_back(Transform::of(base[i]));
  }

  Eigen::VectorXd to_z(const ParameterVector& pv) const {
    const auto v = pv.free_values();
    Eigen::VectorXd z(static_cast<Eigen::Index>(v.size()));
    for (std::size_t k = 0; k < v.size(); ++k) z[static_cast<Eigen::Index>(k)] = transforms_[k].to_z(v[k]);
    return z;
  }

  ParameterVector to_pv(const Eigen::VectorXd& z) const {
    std::vector<double> theta(transforms_.size());
    for (std::size_t k = 0; k < theta.size(); ++k) theta[k] = transforms_[k].to_theta(z[static_cast<Eigen::Index>(k)]);
    return base_.with_free_values(theta);
  }

  double operator()(const Eigen::VectorXd& z, Eigen::VectorXd* grad) const {
    const auto pv = to_pv(z);
    const auto rep = engine_.evaluate(pv, grad ? Want::gradient : Want::value);
    if (rep.degenerate || !std::isfinite(rep.ll)) return kInf;
    if (grad) {
      grad->resize(z.size());
      for (Eigen::Index k = 0; k < z.size(); ++k)
        (*grad)[k] = -rep.gradient[static_cast<std::size_t>(k)] * transforms_[static_cast<std::size_t>(k)].dtheta(z[k]);
    }
    return -rep.ll;
  }

private:
  const LikelihoodEngine& engine_;
  const ParameterVector& base_;
  std::vector<Transform> transforms_;
};

// Latin hypercube sample on [-1, 1]^dim.
std::vector<std::vector<double>> latin_hypercube(std::size_t n, std::size_t dim, std::uint64_t seed) {
  UniformStream rng(seed);
  std::vector<std::vector<double>> out(n, std::vector<double>(dim));
  std::vector<std::size_t> perm(n);
  for (std::size_t j = 0; j < dim; ++j) {
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = n; i > 1; --i) {
      const auto k = std::min(static_cast<std::size_t>(rng.next() * static_cast<double>(i)), i - 1);
      std::swap(perm[i - 1], perm[k]);
    }
    for (std::size_t i = 0; i < n; ++i)
      out[i][j] = 2.0 * (static_cast<double>(perm[i]) + rng.next()) / static_cast<double>(n) - 1.0;
  }
  return out;
}

double clamp_into_bounds(const Parameter& p, double v) {
  if (p.lower && p.upper) {
    const double w = *p.upper - *p.lower;
    return std::clamp(v, *p.lower + 0.01 * w, *p.upper - 0.01 * w);
  }
  if (p.lower && v <= *p.lower) return *p.lower + std::max(1e-3, 0.1 * std::abs(*p.lower));
  if (p.upper && v >= *p.upper) return *p.upper - std::max(1e-3, 0.1 * std::abs(*p.upper));
  return v;
}

struct Moments {
  double mean = 0.0;
  double sd = 0.0;
  std::size_t n = 0;
};

Moments moments(const std::vector<double>& v) {
  Moments m;
  m.n = v.size();
  if (v.empty()) return m;
  m.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m.mean) * (x - m.mean);
  m.sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  return m;
}

struct Run {
  BfgsResult result;
  std::size_t candidate = 0;
};

bool better(const Run& a, const Run& b) {
  const bool fa = std::isfinite(a.result.f);
  const bool fb = std::isfinite(b.result.f);
  if (fa != fb) return fa;
  if (fa && a.result.f != b.result.f) return a.result.f < b.result.f;
  return a.candidate < b.candidate;
}

// Runs fn(i) for i in [0, n) on up to `threads` workers.
template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  const unsigned t = std::min<unsigned>(threads, static_cast<unsigned>(n));
  for (unsigned w = 0; w < t; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += t) fn(i);
    });
  for (auto& th : pool) th.join();
}

std::string fmt_num(double v, int width, int prec) {
  if (std::isnan(v)) return fmt::format("{:>{}}", "nan", width);
  return fmt::format("{:>{}.{}f}", v, width, prec);
}

}  // namespace

FitMetrics fit_metrics(double ll0, double ll_final, std::size_t k, std::size_t n_obs) {
  const double kk = static_cast<double>(k);
  FitMetrics m;
  m.aic = 2.0 * kk - 2.0 * ll_final;
  m.bic = kk * std::log(static_cast<double>(n_obs)) - 2.0 * ll_final;
  m.adj_rho2 = 1.0 - (ll_final - kk) / ll0;
  return m;
}

std::string_view significance_stars(double t) {
  const double a = std::abs(t);
  if (!(a >= 1.645)) return "";
  if (a >= 2.576) return "***";
  if (a >= 1.960) return "**";
  return "*";
}

ParameterVector heuristic_start(const PanelDataset& ds, const ModelSpec& spec) {
  ParameterVector pv = spec.parameters;
  const auto set = [&](const std::string& name, double v) {
    const auto i = *pv.index_of(name);
    if (!pv[i].fixed && std::isfinite(v)) pv[i].value = clamp_into_bounds(pv[i], v);
  };
  const auto reset_free = [&](const EquationSpec& eq) {
    for (const auto& t : eq.terms) set(t.parameter, 0.0);
  };
  for (const auto& eq : spec.latents) reset_free(eq);

  std::array<double, kNumActions> counts{};
  for (const auto& row : ds.rows())
    if (row.action) counts[action_index(*row.action)] += 1.0;
  const double n = std::accumulate(counts.begin(), counts.end(), 0.0);
  const int ref = action_index(Action::maintain);
  for (int i = 0; i < kNumActions; ++i) {
    if (i == ref) continue;
    reset_free(spec.utilities[i]);
    const double share = (counts[i] + 0.5) / (n + 2.5);
    const double base = (counts[ref] + 0.5) / (n + 2.5);
    for (const auto& t : spec.utilities[i].terms)
      if (t.is_intercept()) set(t.parameter, std::log(share / base));
  }

  for (const auto& eq : spec.measurements) {
    const auto ind = *parse_indicator(eq.target);
    std::vector<double> v;
    for (const auto& row : ds.rows())
      if (auto x = row.indicators.get(ind)) v.push_back(*x);
    const auto m = moments(v);
    const double sd = m.sd > 0.0 ? m.sd : 1.0;
    for (const auto& t : eq.terms) {
      if (t.latent)
        set(t.parameter, 0.5 * sd);
      else if (t.is_intercept())
        set(t.parameter, m.mean);
      else
        set(t.parameter, 0.0);
    }
    set(eq.sigma_parameter, sd);
  }

  for (const auto& eq : spec.continuous) {
    const auto action = *parse_action(eq.target);
    std::vector<const Term*> cov;
    for (const auto& t : eq.terms) {
      if (t.latent)
        set(t.parameter, 0.0);
      else
        cov.push_back(&t);
    }
    std::vector<const ObservationRow*> rows;
    for (const auto& row : ds.rows())
      if (row.action == action && row.action_magnitude) rows.push_back(&row);
    if (rows.size() <= cov.size()) continue;
    Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cov.size()));
    Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      y[static_cast<Eigen::Index>(r)] = *rows[r]->action_magnitude;
      for (std::size_t c = 0; c < cov.size(); ++c)
        X(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = spec.term_value(*cov[c], *rows[r]);
    }
    Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cov.size()));
    if (!cov.empty()) b = X.colPivHouseholderQr().solve(y);
    const Eigen::VectorXd res = y - X * b;
    const double sd = std::sqrt(res.squaredNorm() / static_cast<double>(rows.size()));
    for (std::size_t c = 0; c < cov.size(); ++c) set(cov[c]->parameter, b[static_cast<Eigen::Index>(c)]);
    set(eq.sigma_parameter, sd > 0.0 ? sd : 1.0);
  }
  return pv;
}

double null_loglik(const LikelihoodEngine& engine) {
  const auto& spec = engine.spec();
  ParameterVector pv = spec.parameters;
  for (auto i : pv.free_indices()) pv[i].value = 0.0;
  bool zero_utilities = true;
  for (const auto& eq : spec.utilities)
    for (const auto& t : eq.terms)
      if (pv.value(t.parameter) != 0.0) zero_utilities = false;
  if (zero_utilities) return static_cast<double>(engine.n_obs()) * std::log(1.0 / kNumActions);
  return engine.evaluate(pv, Want::value, Components{true, false, false}).ll;
}

CovarianceResult robust_covariance(const LikelihoodEngine& engine, const ParameterVector& pv_hat) {
  const auto free = pv_hat.free_indices();
  const auto k = static_cast<Eigen::Index>(free.size());
  const auto theta = pv_hat.free_values();
  CovarianceResult out;
  out.hessian.resize(k, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const double h = 1e-5 * std::max(1.0, std::abs(theta[static_cast<std::size_t>(j)]));
    auto plus = theta;
    auto minus = theta;
    plus[static_cast<std::size_t>(j)] += h;
    minus[static_cast<std::size_t>(j)] -= h;
    const auto gp = engine.evaluate(pv_hat.with_free_values(plus), Want::gradient);
    const auto gm = engine.evaluate(pv_hat.with_free_values(minus), Want::gradient);
    if (gp.degenerate || gm.degenerate)
      throw NumericError("Hessian step for '" + pv_hat[free[static_cast<std::size_t>(j)]].name +
                         "' leaves the likelihood domain");
    for (Eigen::Index i = 0; i < k; ++i)
      out.hessian(i, j) = (gp.gradient[static_cast<std::size_t>(i)] - gm.gradient[static_cast<std::size_t>(i)]) / (2.0 * h);
  }
  out.hessian = 0.5 * (out.hessian + out.hessian.transpose()).eval();
  if (!out.hessian.allFinite()) throw NumericError("Hessian is not finite");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(-out.hessian);
  const auto& lambda = eig.eigenvalues();
  if (k > 0 && !(lambda.minCoeff() > 1e-12 * std::max(1.0, lambda.maxCoeff())))
    throw NumericError("Hessian is singular or not negative definite at the estimate");
  const Eigen::MatrixXd V = eig.eigenvectors();
  out.classical = V * lambda.cwiseInverse().asDiagonal() * V.transpose();

  const auto rep = engine.evaluate(pv_hat, Want::scores);
  const auto n_ind = static_cast<Eigen::Index>(engine.n_individuals());
  Eigen::MatrixXd S = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      rep.scores.data(), n_ind, k);
  const Eigen::MatrixXd B = S.transpose() * S;
  out.robust = out.classical * B * out.classical;
  out.robust = 0.5 * (out.robust + out.robust.transpose()).eval();
  return out;
}

CovarianceResult robust_covariance(const PanelDataset& ds, const ParameterVector& pv_hat, const ModelSpec& spec,
                                   std::shared_ptr<const SimulationDraws> draws) {
  const LikelihoodEngine engine(ds, spec, std::move(draws));
  return robust_covariance(engine, pv_hat);
}

FitResult estimate(const PanelDataset& ds, const ModelSpec& spec, const EstimationConfig& cfg) {
  if (ds.empty()) throw DataError("dataset has no observations");
  const auto& sc = cfg.search;
  if (sc.n_candidates == 0) throw UsageError("n_candidates must be at least 1");
  if (sc.top_k == 0) throw UsageError("top_k must be at least 1");
  const std::size_t top_k = std::min(sc.top_k, sc.n_candidates);

  EngineOptions eo;
  eo.threads = std::max(1u, cfg.threads);
  const LikelihoodEngine engine(ds, spec, cfg.draws, eo);

  const ParameterVector start = cfg.start == StartMode::heuristic ? heuristic_start(ds, spec) : spec.parameters;
  const Problem problem(engine, start);
  const Objective objective = [&](const Eigen::VectorXd& z, Eigen::VectorXd* g) { return problem(z, g); };
  const Eigen::VectorXd z0 = problem.to_z(start);
  const auto dim = static_cast<std::size_t>(z0.size());

  FitResult fit;
  fit.n_obs = engine.n_obs();
  fit.n_individuals = engine.n_individuals();
  for (auto i : start.free_indices()) fit.free_names.push_back(start[i].name);

  // Candidate 0 is the unperturbed start.
  std::vector<Eigen::VectorXd> candidates{z0};
  if (sc.n_candidates > 1) {
    const auto box = latin_hypercube(sc.n_candidates - 1, dim, sc.seed);
    for (const auto& c : box) {
      Eigen::VectorXd z = z0;
      for (std::size_t j = 0; j < dim; ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        z[jj] += sc.perturbation * std::max(1.0, std::abs(z0[jj])) * c[j];
      }
      candidates.push_back(std::move(z));
    }
  }

  BfgsOptions full;
  full.max_iterations = cfg.max_iterations;
  full.gtol = cfg.gtol;

  if (cfg.max_iterations <= 0) {
    Eigen::VectorXd g;
    const double f = objective(z0, &g);
    if (!std::isfinite(f)) throw NumericError("likelihood is not finite at the starting point");
    fit.pv_hat = problem.to_pv(z0);
    fit.gradient_norm = scaled_gradient_norm(z0, g);
    fit.message = "iteration budget is zero";
  } else {
    std::vector<Run> refined;
    const auto safe_run = [&](const Eigen::VectorXd& z, const BfgsOptions& o, std::size_t idx) {
      Run r;
      r.candidate = idx;
      try {
        r.result = minimize_bfgs(objective, z, o);
      } catch (const NumericError& e) {
        r.result.x = z;
        r.result.f = kInf;
        r.result.message = e.what();
      }
      return r;
    };

    std::vector<std::size_t> to_refine;
    std::vector<Eigen::VectorXd> refine_from;
    if (candidates.size() <= top_k) {
      for (std::size_t i = 0; i < candidates.size(); ++i) {
        to_refine.push_back(i);
        refine_from.push_back(candidates[i]);
      }
    } else {
      BfgsOptions pre = full;
      pre.max_iterations = sc.pre_iterations;
      std::vector<Run> pre_runs(candidates.size());
      parallel_for(candidates.size(), cfg.threads, [&](std::size_t i) { pre_runs[i] = safe_run(candidates[i], pre, i); });
      std::sort(pre_runs.begin(), pre_runs.end(), better);
      for (std::size_t r = 0; r < top_k && r < pre_runs.size(); ++r) {
        if (!std::isfinite(pre_runs[r].result.f)) break;
        to_refine.push_back(pre_runs[r].candidate);
        refine_from.push_back(pre_runs[r].result.x);
      }
    }
    for (std::size_t r = 0; r < to_refine.size(); ++r) refined.push_back(safe_run(refine_from[r], full, to_refine[r]));
    if (refined.empty()) throw NumericError("all starting points have a non-finite likelihood");
    const auto best = *std::min_element(refined.begin(), refined.end(), better);
    if (!std::isfinite(best.result.f)) throw NumericError("all starts diverged: " + best.result.message);

    const auto& res = best.result;
    fit.pv_hat = problem.to_pv(res.x);
    fit.iterations = res.iterations;
    fit.gradient_norm = scaled_gradient_norm(res.x, res.g);
    fit.converged = res.converged;
    fit.message = res.message;
    if (!res.converged && res.stalled && fit.gradient_norm <= cfg.gtol * std::max(1.0, std::abs(res.f))) {
      fit.converged = true;
      fit.message = "line search stalled within the relative gradient tolerance";
    }
  }

  const auto rep = engine.evaluate(fit.pv_hat, Want::value);
  fit.ll_final = rep.ll;
  fit.ll_choice = engine.evaluate(fit.pv_hat, Want::value, Components{true, false, false}).ll;
  fit.ll0 = null_loglik(engine);
  const auto m = fit_metrics(fit.ll0, fit.ll_final, fit.free_names.size(), fit.n_obs);
  fit.aic = m.aic;
  fit.bic = m.bic;
  fit.adj_rho2 = m.adj_rho2;

  fit.se_robust.assign(fit.free_names.size(), kNaN);
  fit.t_robust.assign(fit.free_names.size(), kNaN);
  if (cfg.compute_covariance) {
    try {
      const auto cov = robust_covariance(engine, fit.pv_hat);
      fit.cov_robust = cov.robust;
      fit.cov_classical = cov.classical;
      fit.has_covariance = true;
      const auto theta = fit.pv_hat.free_values();
      for (std::size_t k = 0; k < theta.size(); ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        const double var = cov.robust(kk, kk);
        fit.se_robust[k] = var >= 0.0 ? std::sqrt(var) : kNaN;
        fit.t_robust[k] = theta[k] / fit.se_robust[k];
      }
    } catch (const NumericError& e) {
      fit.covariance_message = e.what();
    }
  } else {
    fit.covariance_message = "not computed";
  }
  return fit;
}

std::string report(const FitResult& fit, const ModelSpec& spec) {
  std::ostringstream os;
  const auto& pv = fit.pv_hat;
  os << "Model: " << spec.name << '\n';
  os << fmt::format("Observations: {}  Individuals: {}  Free parameters: {}\n", fit.n_obs, fit.n_individuals,
                    fit.free_names.size());
  os << fmt::format("LL(0): {:.2f}  LL(final): {:.2f}  LL(choice): {:.2f}\n", fit.ll0, fit.ll_final, fit.ll_choice);
  os << fmt::format("AIC: {:.1f}  BIC: {:.1f}  Adj. rho2: {:.4f}\n", fit.aic, fit.bic, fit.adj_rho2);
  os << "Converged: " << (fit.converged ? "yes" : "no") << " (" << fit.message << "), iterations " << fit.iterations
     << '\n';
  if (!fit.has_covariance) os << "Covariance unavailable: " << fit.covariance_message << '\n';

  const auto block = [&](std::string_view title, const EquationSpec& eq) {
    os << '\n' << '[' << title << ' ' << eq.target << "]\n";
    os << fmt::format("  {:<34}{:>12}{:>12}{:>10}\n", "parameter", "estimate", "rob.s.e.", "rob.t");
    std::vector<std::string> names;
    for (const auto& t : eq.terms) names.push_back(t.parameter);
    if (!eq.sigma_parameter.empty()) names.push_back(eq.sigma_parameter);
    for (const auto& name : names) {
      const auto i = *pv.index_of(name);
      const auto it = std::find(fit.free_names.begin(), fit.free_names.end(), name);
      if (pv[i].fixed || it == fit.free_names.end()) {
        os << fmt::format("  {:<34}{}{:>12}{:>10}\n", name, fmt_num(pv[i].value, 12, 4), "-", "-");
        continue;
      }
      const auto k = static_cast<std::size_t>(it - fit.free_names.begin());
      const double t = fit.t_robust[k];
      const auto stars = significance_stars(t);
      os << fmt::format("  {:<34}{}{}{}{}{}\n", name, fmt_num(pv[i].value, 12, 4), fmt_num(fit.se_robust[k], 12, 4),
                        fmt_num(t, 10, 2), stars.empty() ? "" : " ", stars);
    }
  };
  for (const auto& eq : spec.latents) block("latent", eq);
  for (int i = 0; i < kNumActions; ++i)
    if (!spec.utilities[i].terms.empty()) block("utility", spec.utilities[i]);
  for (const auto& eq : spec.measurements) block("measurement", eq);
  for (const auto& eq : spec.continuous) block("continuous", eq);
  os << "\nSignificance (two-sided, robust t): * 90%, ** 95%, *** 99%\n";
  return os.str();
}

std::string format_results(const FitResult& fit, const ModelSpec& spec) {
  std::ostringstream os;
  const auto d = [](double v) { return text::format_double(v); };
  os << "[metrics]\n";
  os << "model = " << spec.name << '\n';
  os << "n_obs = " << fit.n_obs << '\n';
  os << "n_individuals = " << fit.n_individuals << '\n';
  os << "k = " << fit.free_names.size() << '\n';
  os << "ll0 = " << d(fit.ll0) << '\n';
  os << "ll_final = " << d(fit.ll_final) << '\n';
  os << "ll_choice = " << d(fit.ll_choice) << '\n';
  os << "aic = " << d(fit.aic) << '\n';
  os << "bic = " << d(fit.bic) << '\n';
  os << "adj_rho2 = " << d(fit.adj_rho2) << '\n';
  os << "converged = " << (fit.converged ? "true" : "false") << '\n';
  os << "iterations = " << fit.iterations << '\n';
  os << "gradient_norm = " << d(fit.gradient_norm) << '\n';
  os << "\n[estimates]\n";
  for (const auto& p : fit.pv_hat.entries()) os << p.name << " = " << d(p.value) << '\n';
  os << "\n[robust_se]\n";
  for (std::size_t k = 0; k < fit.free_names.size(); ++k) os << fit.free_names[k] << " = " << d(fit.se_robust[k]) << '\n';
  return os.str();
}

std::string format_covariance(const FitResult& fit) {
  std::ostringstream os;
  std::vector<std::string> header{"parameter"};
  header.insert(header.end(), fit.free_names.begin(), fit.free_names.end());
  text::write_csv_row(os, header);
  if (!fit.has_covariance) return os.str();
  for (std::size_t i = 0; i < fit.free_names.size(); ++i) {
    std::vector<std::string> row{fit.free_names[i]};
    for (std::size_t j = 0; j < fit.free_names.size(); ++j)
      row.push_back(text::format_double(fit.cov_robust(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))));
    text::write_csv_row(os, row);
  }
  return os.str();
}

}  // namespace iclv
