#pragma once

// Maximum simulated likelihood estimation: multi-start search, BFGS,
// sandwich covariance, fit metrics and reports.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "iclv/likelihood.hpp"
#include "iclv/model_spec.hpp"
#include "iclv/panel.hpp"

namespace iclv {

struct FitMetrics {
  double aic = 0.0;
  double bic = 0.0;
  double adj_rho2 = 0.0;
};

/// aic = 2k - 2 ll, bic = k ln(n) - 2 ll, adj_rho2 = 1 - (ll - k) / ll0.
FitMetrics fit_metrics(double ll0, double ll_final, std::size_t k, std::size_t n_obs);

/// "***", "**", "*" or "" for two-sided 99/95/90% normal critical values.
std::string_view significance_stars(double t);

struct StartSearchConfig {
  std::size_t n_candidates = 1;
  double perturbation = 0.0;  ///< half-width of the sampling box, in units of max(1, |start|)
  std::size_t top_k = 3;  ///< clamped to n_candidates
  std::uint64_t seed = 1;
  int pre_iterations = 20;
};

enum class StartMode { heuristic, spec };

struct EstimationConfig {
  StartSearchConfig search;
  StartMode start = StartMode::heuristic;
  int max_iterations = 1000;
  double gtol = 1e-5;
  unsigned threads = 1;
  bool compute_covariance = true;
  /// Draws to hold fixed; generated from the spec when null.
  std::shared_ptr<const SimulationDraws> draws;
};

struct CovarianceResult {
  Eigen::MatrixXd hessian;    ///< of the log-likelihood, free parameters
  Eigen::MatrixXd robust;     ///< H^-1 B H^-1
  Eigen::MatrixXd classical;  ///< -H^-1
};

struct FitResult {
  ParameterVector pv_hat;
  std::vector<std::string> free_names;
  double ll0 = 0.0;
  double ll_final = 0.0;   ///< full simulated log-likelihood
  double ll_choice = 0.0;  ///< choice factor alone at the estimate
  double aic = 0.0;
  double bic = 0.0;
  double adj_rho2 = 0.0;
  bool has_covariance = false;
  std::string covariance_message;
  Eigen::MatrixXd cov_robust;
  Eigen::MatrixXd cov_classical;
  std::vector<double> se_robust;  ///< per free parameter; NaN without covariance
  std::vector<double> t_robust;
  bool converged = false;
  double gradient_norm = 0.0;
  int iterations = 0;
  std::string message;
  std::size_t n_obs = 0;
  std::size_t n_individuals = 0;
};

/// Heuristic starting values: logit intercepts from observed shares,
/// measurement and continuous equations from moments, everything else 0.
/// Fixed parameters keep their values.
ParameterVector heuristic_start(const PanelDataset& ds, const ModelSpec& spec);

/// ll with every free parameter at 0, choice factor only.
double null_loglik(const LikelihoodEngine& engine);

/// Throws NumericError when the Hessian is not negative definite.
CovarianceResult robust_covariance(const LikelihoodEngine& engine, const ParameterVector& pv_hat);
CovarianceResult robust_covariance(const PanelDataset& ds, const ParameterVector& pv_hat, const ModelSpec& spec,
                                   std::shared_ptr<const SimulationDraws> draws = nullptr);

/// Throws NumericError when no start has a finite likelihood.
FitResult estimate(const PanelDataset& ds, const ModelSpec& spec, const EstimationConfig& cfg = {});

/// Human-readable estimation table with per-equation blocks.
std::string report(const FitResult& fit, const ModelSpec& spec);

/// Machine-readable results: [metrics], [estimates], [robust_se].
std::string format_results(const FitResult& fit, const ModelSpec& spec);
/// Robust covariance as CSV with a header of free parameter names.
std::string format_covariance(const FitResult& fit);

}  // namespace iclv
