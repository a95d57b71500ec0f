#pragma once

// Test helpers: fixture paths and oracles that recompute library results by
// independent, deliberately plain routes.

#include <cmath>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "iclv/choice.hpp"
#include "iclv/latent.hpp"
#include "iclv/likelihood.hpp"
#include "iclv/model_spec.hpp"
#include "iclv/panel.hpp"
#include "iclv/synthetic.hpp"
#include "iclv/text.hpp"

namespace iclv::testing {

inline std::string data_path(const std::string& rel) { return std::string(ICLV_TEST_DATA) + "/" + rel; }
inline std::string spec_path(const std::string& name) { return std::string(ICLV_SPEC_DIR) + "/" + name; }

inline ModelSpec load_fixture_spec(const std::string& rel) {
  auto schema = cyclist_schema();
  return load_spec(data_path(rel), schema);
}

inline ParameterVector with_values(const ModelSpec& spec, const std::string& values_file) {
  return apply_parameter_values(spec.parameters, parse_parameter_values(text::read_file(data_path(values_file))));
}

/// Fresh scratch directory under the build tree.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("iclv_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

/// Softmax in long double with the textbook formula on shifted inputs.
inline std::array<long double, 5> softmax_oracle(const std::array<double, 5>& u) {
  long double m = u[0];
  for (double v : u) m = std::max<long double>(m, v);
  std::array<long double, 5> e{};
  long double s = 0;
  for (int i = 0; i < 5; ++i) {
    e[i] = std::exp(static_cast<long double>(u[i]) - m);
    s += e[i];
  }
  for (auto& v : e) v /= s;
  return e;
}

/// log N(x; m, s) written out directly.
inline double normal_logpdf_oracle(double x, double m, double s) {
  const long double z = (static_cast<long double>(x) - m) / s;
  return static_cast<double>(-0.5L * z * z - std::log(static_cast<long double>(s)) -
                             0.5L * std::log(2.0L * 3.14159265358979323846264338327950288L));
}

/// Linear predictor of an equation, term by term.
inline double linear_oracle(const EquationSpec& eq, const ObservationRow& row, const ModelSpec& spec,
                            const ParameterVector& pv, double fatigue, double arousal) {
  double v = 0.0;
  for (const auto& t : eq.terms) {
    double x = 1.0;
    if (t.latent) x = *t.latent == Latent::fatigue ? fatigue : arousal;
    for (const auto& f : t.factors) x *= spec.covariate(row, f);
    v += pv.value(t.parameter) * x;
  }
  return v;
}

/// Integrand of one observation at one noise pair, built from the plain
/// routes above rather than the library kernels.
inline double integrand_oracle(const ObservationRow& row, const ParameterVector& pv, const ModelSpec& spec,
                               double eps_f, double eps_a, bool with_choice = true) {
  double F = eps_f, A = eps_a;
  if (auto* e = spec.latent_equation(Latent::fatigue)) F = linear_oracle(*e, row, spec, pv, 0, 0) + eps_f;
  if (auto* e = spec.latent_equation(Latent::arousal)) A = linear_oracle(*e, row, spec, pv, 0, 0) + eps_a;
  long double logv = 0;
  if (with_choice) {
    std::array<double, 5> u{};
    for (int i = 0; i < 5; ++i) u[i] = linear_oracle(spec.utilities[i], row, spec, pv, F, A);
    logv += std::log(softmax_oracle(u)[action_index(*row.action)]);
    if (auto* c = spec.continuous_for(*row.action); c && row.action_magnitude)
      logv += normal_logpdf_oracle(*row.action_magnitude, linear_oracle(*c, row, spec, pv, F, A),
                                   pv.value(c->sigma_parameter));
  }
  for (auto ind : kAllIndicators) {
    const auto y = row.indicators.get(ind);
    const auto* m = spec.measurement_for(ind);
    if (!y || !m) continue;
    logv += normal_logpdf_oracle(*y, linear_oracle(*m, row, spec, pv, F, A), pv.value(m->sigma_parameter));
  }
  return static_cast<double>(std::exp(logv));
}

/// Straight-line simulated log-likelihood: loops over observations and
/// draws, averages the integrand in long double. No threads, no log-sum-exp.
inline double naive_loglik(const PanelDataset& ds, const ParameterVector& pv, const ModelSpec& spec,
                           const SimulationDraws* draws) {
  long double ll = 0;
  for (std::size_t n = 0; n < ds.size(); ++n) {
    long double sum = 0;
    const std::size_t R = draws ? draws->n_draws() : 1;
    for (std::size_t r = 0; r < R; ++r) {
      const double ef = draws ? draws->at(n, r, 0) : 0.0;
      const double ea = draws ? draws->at(n, r, 1) : 0.0;
      sum += integrand_oracle(ds[n], pv, spec, ef, ea);
    }
    ll += std::log(sum / static_cast<long double>(R));
  }
  return static_cast<double>(ll);
}

/// Gauss-Hermite rule for E[f(Z)], Z ~ N(0,1), by Golub-Welsch on the
/// physicists' Jacobi matrix.
struct GaussHermite {
  std::vector<double> nodes;
  std::vector<double> weights;  ///< sum to 1
};

inline GaussHermite gauss_hermite(int n) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) J(k, k - 1) = J(k - 1, k) = std::sqrt(k / 2.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  GaussHermite gh;
  for (int i = 0; i < n; ++i) {
    gh.nodes.push_back(std::sqrt(2.0) * es.eigenvalues()(i));
    const double v = es.eigenvectors()(0, i);
    gh.weights.push_back(v * v);
  }
  return gh;
}

/// Tensor-product quadrature of the observation integrand.
inline double quadrature_likelihood(const ObservationRow& row, const ParameterVector& pv, const ModelSpec& spec,
                                    const GaussHermite& gh) {
  long double s = 0;
  for (std::size_t i = 0; i < gh.nodes.size(); ++i)
    for (std::size_t j = 0; j < gh.nodes.size(); ++j)
      s += static_cast<long double>(gh.weights[i]) * gh.weights[j] *
           integrand_oracle(row, pv, spec, gh.nodes[i], gh.nodes[j]);
  return static_cast<double>(s);
}

/// Small HM panel generated from the tiny fixture spec and its true values.
inline PanelDataset tiny_hm_panel(std::size_t n_ind, std::size_t t_per, std::uint64_t seed) {
  const auto spec = load_fixture_spec("tiny_hm.spec");
  const auto pv = with_values(spec, "tiny_hm_truth.txt");
  auto cfg = GeneratorConfig::load(data_path("tiny_hm.gen"));
  cfg.n_individuals = n_ind;
  cfg.t_per_individual = t_per;
  cfg.seed = seed;
  return simulate_dataset(spec, pv, cfg);
}

/// Ten observations of the two-latent quadrature fixture at its own parameter values.
inline PanelDataset oracle_hm_panel() {
  const auto spec = load_fixture_spec("oracle_hm.spec");
  return simulate_dataset(spec, spec.parameters, GeneratorConfig::load(data_path("oracle_hm.gen")));
}

}  // namespace iclv::testing
