#include "iclv/bfgs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "iclv/error.hpp"

namespace iclv {

namespace {

struct Point {
  double alpha = 0.0;
  double f = 0.0;
  double dg = 0.0;  // directional derivative
  Eigen::VectorXd x;
  Eigen::VectorXd g;
};

// Minimizer of the cubic through two points with slopes, or bisection when
// the cubic is unusable or lands too close to an end.
double cubic_step(const Point& a, const Point& b) {
  const double lo = std::min(a.alpha, b.alpha);
  const double hi = std::max(a.alpha, b.alpha);
  const double d1 = a.dg + b.dg - 3.0 * (a.f - b.f) / (a.alpha - b.alpha);
  const double disc = d1 * d1 - a.dg * b.dg;
  double t = 0.5 * (lo + hi);
  if (disc >= 0.0 && std::isfinite(disc)) {
    const double d2 = std::copysign(std::sqrt(disc), b.alpha - a.alpha);
    const double denom = b.dg - a.dg + 2.0 * d2;
    if (denom != 0.0) {
      const double c = b.alpha - (b.alpha - a.alpha) * (b.dg + d2 - d1) / denom;
      if (std::isfinite(c)) t = c;
    }
  }
  const double margin = 0.1 * (hi - lo);
  if (!(t > lo + margin && t < hi - margin)) t = 0.5 * (lo + hi);
  return t;
}

class LineSearch {
public:
  LineSearch(const Objective& f, const BfgsOptions& o, const Eigen::VectorXd& x, const Eigen::VectorXd& p, double f0,
             double dg0, int& evals)
      : f_(f), o_(o), x_(x), p_(p), f0_(f0), dg0_(dg0), evals_(evals) {}

  Point eval(double alpha) {
    Point pt;
    pt.alpha = alpha;
    pt.x = x_ + alpha * p_;
    pt.g.resize(x_.size());
    pt.f = f_(pt.x, &pt.g);
    ++evals_;
    pt.dg = std::isfinite(pt.f) && pt.g.allFinite() ? pt.g.dot(p_) : std::numeric_limits<double>::quiet_NaN();
    return pt;
  }

  bool finite(const Point& pt) const { return std::isfinite(pt.f) && std::isfinite(pt.dg); }

  // Strong Wolfe search; returns false if no acceptable point was found, in
  // which case `best` holds the lowest finite point seen with f < f0 (if any).
  bool run(double alpha0, Point& out) {
    Point prev;
    prev.alpha = 0.0;
    prev.f = f0_;
    prev.dg = dg0_;
    double alpha = alpha0;
    for (int i = 0; i < o_.max_line_search; ++i) {
      Point cur = eval(alpha);
      if (!finite(cur)) {
        // Outside the domain: shrink toward the last good point.
        alpha = prev.alpha + 0.5 * (alpha - prev.alpha);
        if (alpha - prev.alpha < 1e-20) break;
        continue;
      }
      remember(cur);
      if (cur.f > f0_ + o_.c1 * cur.alpha * dg0_ || (i > 0 && cur.f >= prev.f)) return zoom(prev, cur, out);
      if (std::abs(cur.dg) <= -o_.c2 * dg0_) {
        out = std::move(cur);
        return true;
      }
      if (cur.dg >= 0.0) return zoom(cur, prev, out);
      prev = std::move(cur);
      alpha = std::min(2.0 * alpha, alpha * 10.0);
    }
    return fallback(out);
  }

private:
  void remember(const Point& pt) {
    if (pt.f < f0_ && (!have_best_ || pt.f < best_.f)) {
      best_ = pt;
      have_best_ = true;
    }
  }

  bool fallback(Point& out) {
    if (!have_best_) return false;
    out = best_;
    return true;
  }

  bool zoom(Point lo, Point hi, Point& out) {
    for (int i = 0; i < o_.max_line_search; ++i) {
      if (std::abs(hi.alpha - lo.alpha) < 1e-16 * std::max(1.0, std::abs(lo.alpha))) break;
      const bool hi_ok = finite(hi);
      const double alpha = hi_ok ? cubic_step(lo, hi) : 0.5 * (lo.alpha + hi.alpha);
      Point cur = eval(alpha);
      if (!finite(cur)) {
        hi = std::move(cur);
        continue;
      }
      remember(cur);
      if (cur.f > f0_ + o_.c1 * cur.alpha * dg0_ || cur.f >= lo.f) {
        hi = std::move(cur);
        continue;
      }
      if (std::abs(cur.dg) <= -o_.c2 * dg0_) {
        out = std::move(cur);
        return true;
      }
      if (cur.dg * (hi.alpha - lo.alpha) >= 0.0) hi = lo;
      lo = std::move(cur);
    }
    return fallback(out);
  }

  const Objective& f_;
  const BfgsOptions& o_;
  const Eigen::VectorXd& x_;
  const Eigen::VectorXd& p_;
  double f0_;
  double dg0_;
  int& evals_;
  Point best_;
  bool have_best_ = false;
};

}  // namespace

double scaled_gradient_norm(const Eigen::VectorXd& x, const Eigen::VectorXd& g) {
  double m = 0.0;
  for (Eigen::Index i = 0; i < g.size(); ++i) m = std::max(m, std::abs(g[i]) * std::max(1.0, std::abs(x[i])));
  return m;
}

BfgsResult minimize_bfgs(const Objective& f, const Eigen::VectorXd& x0, const BfgsOptions& options) {
  const Eigen::Index n = x0.size();
  BfgsResult r;
  r.x = x0;
  r.g.resize(n);
  r.f = f(r.x, &r.g);
  r.evaluations = 1;
  if (!std::isfinite(r.f) || !r.g.allFinite()) throw NumericError("objective is not finite at the starting point");
  if (n == 0) {
    r.converged = true;
    r.message = "no free parameters";
    return r;
  }

  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
  bool scaled = false;
  for (;;) {
    if (scaled_gradient_norm(r.x, r.g) <= options.gtol) {
      r.converged = true;
      r.message = "gradient tolerance reached";
      return r;
    }
    if (r.iterations >= options.max_iterations) {
      r.message = "iteration limit reached";
      return r;
    }

    Eigen::VectorXd p = -H * r.g;
    double dg0 = p.dot(r.g);
    if (!(dg0 < 0.0)) {
      H.setIdentity();
      scaled = false;
      p = -r.g;
      dg0 = p.dot(r.g);
    }
    const double alpha0 = scaled ? 1.0 : std::min(1.0, 1.0 / std::max(1e-12, r.g.lpNorm<Eigen::Infinity>()));

    Point next;
    LineSearch ls(f, options, r.x, p, r.f, dg0, r.evaluations);
    if (!ls.run(alpha0, next)) {
      if (scaled) {
        // Retry once along steepest descent before giving up.
        H.setIdentity();
        scaled = false;
        ++r.iterations;
        continue;
      }
      r.stalled = true;
      r.message = "line search failed to make progress";
      return r;
    }

    const Eigen::VectorXd s = next.x - r.x;
    const Eigen::VectorXd y = next.g - r.g;
    r.x = std::move(next.x);
    r.g = std::move(next.g);
    r.f = next.f;
    ++r.iterations;

    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (!scaled) {
        H *= sy / y.squaredNorm();
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Eigen::VectorXd Hy = H * y;
      const double yHy = y.dot(Hy);
      H += (rho * rho * yHy + rho) * (s * s.transpose()) - rho * (Hy * s.transpose() + s * Hy.transpose());
    }
  }
}

}  // namespace iclv
