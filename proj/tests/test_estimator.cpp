#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "iclv/bfgs.hpp"
#include "iclv/error.hpp"
#include "iclv/estimator.hpp"
#include "support.hpp"

using namespace iclv;
using namespace iclv::testing;

namespace {

const std::string kIntercepts = R"(
[utility accelerate]
1 -> b_acc
[utility brake]
1 -> b_brk
[utility decelerate]
1 -> b_dec
[utility wait]
1 -> b_wait
[utility maintain]
)";

PanelDataset mnl_panel(std::size_t n_ind, std::size_t t_per, std::uint64_t seed) {
  const auto spec = load_spec(spec_path("mnl.spec"));
  auto cfg = GeneratorConfig::load(data_path("mnl.gen"));
  cfg.n_individuals = n_ind;
  cfg.t_per_individual = t_per;
  cfg.seed = seed;
  return simulate_dataset(spec, with_values(spec, "mnl_truth.txt"), cfg);
}

bool is_psd(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  return es.eigenvalues().minCoeff() >= -1e-10 * std::max(1.0, es.eigenvalues().maxCoeff());
}

}  // namespace

TEST(FitMetrics, TableOneMnlRow) {
  const auto m = fit_metrics(-12584.2, -10745.71, 35, 7819);
  EXPECT_NEAR(m.aic, 21561.4, 0.1);
  EXPECT_NEAR(m.adj_rho2, 0.1433, 0.0001);
}

TEST(FitMetrics, TableOneMnlIRow) {
  const auto m = fit_metrics(-12584.2, -10516.50, 47, 7819);
  EXPECT_NEAR(m.aic, 21127.0, 0.1);
  EXPECT_NEAR(m.adj_rho2, 0.1606, 0.0001);
}

TEST(FitMetrics, ImpliedSampleSizeFromBic) {
  // Invert 35 ln N - 2 LL = BIC for the printed MNL row.
  const double n = std::exp((21805.2 - 2 * 10745.71) / 35.0);
  EXPECT_NEAR(n, 7.8e3, 100.0);
  const auto m = fit_metrics(-12584.2, -10745.71, 35, static_cast<std::size_t>(std::llround(n)));
  EXPECT_NEAR(m.bic, 21805.2, 0.05);
}

TEST(Stars, CriticalValues) {
  EXPECT_EQ(significance_stars(2.00), "**");
  EXPECT_EQ(significance_stars(-2.00), "**");
  EXPECT_EQ(significance_stars(1.50), "");
  EXPECT_EQ(significance_stars(1.70), "*");
  EXPECT_EQ(significance_stars(2.60), "***");
  EXPECT_EQ(significance_stars(std::nan("")), "");
}

TEST(Estimate, InterceptOnlyReproducesLogShareRatios) {
  const auto spec = parse_spec(kIntercepts);
  const auto ds = mnl_panel(20, 100, 4);
  std::array<double, 5> count{};
  for (const auto& r : ds.rows()) count[action_index(*r.action)] += 1;
  const auto fit = estimate(ds, spec);
  ASSERT_TRUE(fit.converged) << fit.message;
  const char* names[] = {"b_acc", "b_brk", "b_dec", "b_wait"};
  for (int i = 0; i < 4; ++i)
    EXPECT_NEAR(fit.pv_hat.value(names[i]), std::log(count[i] / count[4]), 1e-4) << names[i];
}

TEST(Estimate, ZeroIterationBudgetReturnsStart) {
  const auto spec = parse_spec(kIntercepts);
  const auto ds = mnl_panel(3, 20, 4);
  EstimationConfig cfg;
  cfg.max_iterations = 0;
  const auto fit = estimate(ds, spec, cfg);
  EXPECT_FALSE(fit.converged);
  EXPECT_EQ(fit.pv_hat, heuristic_start(ds, spec));
  cfg.start = StartMode::spec;
  EXPECT_EQ(estimate(ds, spec, cfg).pv_hat, spec.parameters);
}

TEST(Estimate, SingleCandidateEqualsPlainBfgs) {
  const auto spec = load_spec(spec_path("mnl.spec"));
  const auto ds = mnl_panel(10, 60, 2);
  EstimationConfig cfg;
  cfg.compute_covariance = false;
  const auto fit = estimate(ds, spec, cfg);

  const LikelihoodEngine engine(ds, spec);
  const auto start = heuristic_start(ds, spec);
  const auto x0 = start.free_values();
  const Objective f = [&](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
    const auto pv = start.with_free_values(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
    const auto rep = engine.evaluate(pv, g ? Want::gradient : Want::value);
    if (g) *g = -Eigen::Map<const Eigen::VectorXd>(rep.gradient.data(), x.size());
    return -rep.ll;
  };
  BfgsOptions o;
  o.max_iterations = cfg.max_iterations;
  o.gtol = cfg.gtol;
  const auto plain = minimize_bfgs(f, Eigen::Map<const Eigen::VectorXd>(x0.data(), static_cast<Eigen::Index>(x0.size())), o);
  const auto xs = fit.pv_hat.free_values();
  for (std::size_t k = 0; k < xs.size(); ++k) EXPECT_EQ(xs[k], plain.x[static_cast<Eigen::Index>(k)]);
}

TEST(Estimate, ConvergedFitSatisfiesFirstOrderConditions) {
  const auto spec = load_spec(spec_path("mnl.spec"));
  const auto ds = mnl_panel(20, 100, 6);
  const auto fit = estimate(ds, spec);
  ASSERT_TRUE(fit.converged);
  const auto g = loglik_gradient(ds, fit.pv_hat, spec);
  for (double v : g) EXPECT_LT(std::abs(v), 1e-3);
  EXPECT_GE(fit.ll_final, fit.ll0);
  EXPECT_NEAR(fit.ll0, static_cast<double>(ds.size()) * std::log(0.2), 1e-9 * ds.size());
  const auto m = fit_metrics(fit.ll0, fit.ll_final, 35, ds.size());
  EXPECT_EQ(fit.aic, m.aic);
  EXPECT_EQ(fit.bic, m.bic);
  EXPECT_EQ(fit.adj_rho2, m.adj_rho2);
}

TEST(Estimate, InvariantToParameterOrder) {
  const auto text = text::read_file(spec_path("mnl.spec"));
  // Reverse the term lines inside every utility section.
  std::istringstream in(text);
  std::string line, out;
  std::vector<std::string> block;
  const auto flush = [&] {
    for (auto it = block.rbegin(); it != block.rend(); ++it) out += *it + "\n";
    block.clear();
  };
  while (std::getline(in, line)) {
    if (line.find("->") != std::string::npos) {
      block.push_back(line);
      continue;
    }
    flush();
    out += line + "\n";
  }
  flush();
  const auto a = load_spec(spec_path("mnl.spec"));
  const auto b = parse_spec(out);
  ASSERT_NE(a.parameters, b.parameters);
  const auto ds = mnl_panel(10, 80, 12);
  EstimationConfig cfg;
  cfg.compute_covariance = false;
  const auto fa = estimate(ds, a, cfg), fb = estimate(ds, b, cfg);
  EXPECT_NEAR(fa.ll_final, fb.ll_final, 1e-6);
  for (const auto& p : fa.pv_hat.entries()) EXPECT_NEAR(p.value, fb.pv_hat.value(p.name), 1e-3) << p.name;
}

TEST(Covariance, RobustCloseToClassicalUnderCorrectSpecification) {
  const auto spec = load_spec(spec_path("mnl.spec"));
  const auto ds = mnl_panel(100, 50, 8);
  const auto fit = estimate(ds, spec);
  ASSERT_TRUE(fit.has_covariance) << fit.covariance_message;
  double ratio = 0;
  for (Eigen::Index k = 0; k < fit.cov_robust.rows(); ++k)
    ratio += std::abs(std::sqrt(fit.cov_robust(k, k) / fit.cov_classical(k, k)) - 1.0);
  ratio /= static_cast<double>(fit.cov_robust.rows());
  EXPECT_LT(ratio, 0.20);
  EXPECT_TRUE(is_psd(fit.cov_robust));
  EXPECT_TRUE(is_psd(fit.cov_classical));
}

TEST(Covariance, DuplicatedIndividualKeepsPsd) {
  const auto spec = parse_spec(kIntercepts + "\n[parameters]\n");
  auto ds = mnl_panel(12, 40, 9);
  auto rows = ds.rows();
  for (const auto& r : ds.rows())
    if (r.individual_id == ds.individuals()[0].id) {
      auto c = r;
      c.individual_id = "zz_copy";
      rows.push_back(c);
    }
  const PanelDataset dup(rows);
  const auto fit = estimate(ds, spec);
  const auto a = robust_covariance(ds, fit.pv_hat, spec);
  const auto b = robust_covariance(dup, fit.pv_hat, spec);
  EXPECT_FALSE(a.robust.isApprox(b.robust));
  for (const auto* c : {&a, &b}) {
    EXPECT_TRUE(is_psd(c->robust));
    for (Eigen::Index k = 0; k < c->robust.rows(); ++k) EXPECT_GE(c->robust(k, k), 0.0);
  }
}

TEST(Covariance, NotNegativeDefiniteThrows) {
  // A parameter whose covariate is always zero leaves the Hessian singular.
  const auto spec = parse_spec(R"(
[utility accelerate]
1 -> b_acc
slope -> b_slope
[utility brake]
1 -> b_brk
[utility decelerate]
1 -> b_dec
[utility wait]
1 -> b_wait
[utility maintain]
)");
  const auto ds = mnl_panel(3, 20, 4);
  EXPECT_THROW(robust_covariance(ds, spec.parameters, spec), NumericError);
  const auto fit = estimate(ds, spec);
  EXPECT_FALSE(fit.has_covariance);
  EXPECT_FALSE(fit.covariance_message.empty());
}

TEST(Estimate, MultiStartRunsAndIsDeterministic) {
  const auto spec = load_fixture_spec("tiny_hm.spec");
  const auto ds = tiny_hm_panel(10, 20, 3);
  EstimationConfig cfg;
  cfg.search.n_candidates = 4;
  cfg.search.perturbation = 0.3;
  cfg.search.top_k = 2;
  cfg.search.pre_iterations = 5;
  cfg.compute_covariance = false;
  cfg.draws = make_draws([&] { auto s = spec; s.draws = 50; return s; }(), ds.size());
  const auto a = estimate(ds, spec, cfg);
  cfg.threads = 3;
  const auto b = estimate(ds, spec, cfg);
  EXPECT_EQ(a.pv_hat, b.pv_hat);
  EXPECT_EQ(a.ll_final, b.ll_final);
  EXPECT_TRUE(a.converged);
  EXPECT_THROW(estimate(ds, spec, [&] { auto c = cfg; c.search.top_k = 0; return c; }()), UsageError);
}

TEST(Report, BlocksStarsAndDashes) {
  const auto spec = parse_spec(kIntercepts + "\n[parameters]\nb_wait = -1 fixed\n");
  FitResult fit;
  fit.pv_hat = spec.parameters;
  fit.pv_hat.set_value("b_acc", 0.5);
  fit.pv_hat.set_value("b_brk", 0.2);
  fit.pv_hat.set_value("b_dec", 3.0);
  fit.free_names = {"b_acc", "b_brk", "b_dec"};
  fit.se_robust = {0.25, 0.2, 1.0};
  fit.t_robust = {2.0, 1.0, 3.0};
  fit.has_covariance = true;
  fit.converged = true;
  fit.ll0 = -100;
  fit.ll_final = -90;
  const auto r = report(fit, spec);
  EXPECT_NE(r.find("[utility accelerate]"), std::string::npos);
  const auto line_of = [&](const std::string& name) {
    const auto p = r.find("  " + name);
    return r.substr(p, r.find('\n', p) - p);
  };
  EXPECT_NE(line_of("b_acc").find("**"), std::string::npos);
  EXPECT_EQ(line_of("b_acc").find("***"), std::string::npos);
  EXPECT_EQ(line_of("b_brk").find('*'), std::string::npos);
  EXPECT_NE(line_of("b_dec").find("***"), std::string::npos);
  EXPECT_NE(line_of("b_wait").find(" -"), std::string::npos);
  EXPECT_NE(r.find("* 90%, ** 95%, *** 99%"), std::string::npos);
}

TEST(Bfgs, Rosenbrock) {
  const Objective f = [](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
    const double a = 1 - x[0], b = x[1] - x[0] * x[0];
    if (g) {
      g->resize(2);
      (*g)[0] = -2 * a - 400 * x[0] * b;
      (*g)[1] = 200 * b;
    }
    return a * a + 100 * b * b;
  };
  Eigen::VectorXd x0(2);
  x0 << -1.2, 1.0;
  const auto r = minimize_bfgs(f, x0, {});
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.x[0], 1.0, 1e-5);
  EXPECT_NEAR(r.x[1], 1.0, 1e-5);
}
