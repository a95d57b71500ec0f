#pragma once

// Structural latent equations and physiological measurement densities,
// evaluated directly from a ModelSpec. These are the reference routes; the
// likelihood engine compiles the same equations into a flat design.

#include "iclv/model_spec.hpp"
#include "iclv/panel.hpp"

namespace iclv {

struct LatentState {
  double fatigue = 0.0;
  double arousal = 0.0;

  double get(Latent l) const { return l == Latent::fatigue ? fatigue : arousal; }
  double& get(Latent l) { return l == Latent::fatigue ? fatigue : arousal; }
};

/// Standard-normal noise pair entering the structural equations.
struct LatentDraw {
  double eps_fatigue = 0.0;
  double eps_arousal = 0.0;
};

/// log N(x; mean, sd). Throws NumericError when sd <= 0.
double normal_logpdf(double x, double mean, double sd);

/// Latent values for one row. A latent without an equation stays at 0.
LatentState eval_structural(const ObservationRow& row, const ModelSpec& spec, const ParameterVector& pv,
                            const LatentDraw& draw);

/// Mean of one measurement equation given latent values.
double measurement_mean(const EquationSpec& eq, const LatentState& latent, const ParameterVector& pv);

/// Sum of log-densities of the present indicators; missing indicators (or
/// indicators without an equation) contribute 0.
double measurement_logdensity(const IndicatorVars& ind, const LatentState& latent, const ModelSpec& spec,
                              const ParameterVector& pv);

}  // namespace iclv
