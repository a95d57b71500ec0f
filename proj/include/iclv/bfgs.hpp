#pragma once

// Dense BFGS minimizer with a strong-Wolfe line search.

#include <functional>
#include <string>

#include <Eigen/Dense>

namespace iclv {

/// Objective to minimize. Fills `grad` when non-null. May return NaN or inf
/// for points outside the domain; the line search backs off from those.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

struct BfgsOptions {
  int max_iterations = 500;
  /// Converged when max_i |g_i| * max(1, |x_i|) <= gtol.
  double gtol = 1e-5;
  double c1 = 1e-4;
  double c2 = 0.9;
  int max_line_search = 40;
};

struct BfgsResult {
  Eigen::VectorXd x;
  double f = 0.0;
  Eigen::VectorXd g;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  bool stalled = false;  ///< line search could not make progress
  std::string message;
};

/// Scaled gradient measure used by the convergence test.
double scaled_gradient_norm(const Eigen::VectorXd& x, const Eigen::VectorXd& g);

BfgsResult minimize_bfgs(const Objective& f, const Eigen::VectorXd& x0, const BfgsOptions& options = {});

}  // namespace iclv
