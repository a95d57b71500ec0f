#include "iclv/latent.hpp"

#include <cmath>
#include <numbers>

#include "iclv/error.hpp"

namespace iclv {

double normal_logpdf(double x, double mean, double sd) {
  if (!(sd > 0.0)) throw NumericError("normal density needs a positive standard deviation");
  const double z = (x - mean) / sd;
  return -0.5 * std::log(2.0 * std::numbers::pi) - std::log(sd) - 0.5 * z * z;
}

LatentState eval_structural(const ObservationRow& row, const ModelSpec& spec, const ParameterVector& pv,
                            const LatentDraw& draw) {
  LatentState state;
  for (const auto& eq : spec.latents) {
    const auto which = *parse_latent(eq.target);
    double value = 0.0;
    for (const auto& term : eq.terms) value += pv.value(term.parameter) * spec.term_value(term, row);
    value += which == Latent::fatigue ? draw.eps_fatigue : draw.eps_arousal;
    state.get(which) = value;
  }
  return state;
}

double measurement_mean(const EquationSpec& eq, const LatentState& latent, const ParameterVector& pv) {
  double mean = 0.0;
  for (const auto& term : eq.terms) {
    const double x = term.latent ? latent.get(*term.latent) : 1.0;
    mean += pv.value(term.parameter) * x;
  }
  return mean;
}

double measurement_logdensity(const IndicatorVars& ind, const LatentState& latent, const ModelSpec& spec,
                              const ParameterVector& pv) {
  double total = 0.0;
  for (const auto& eq : spec.measurements) {
    const auto obs = ind.get(*parse_indicator(eq.target));
    if (!obs) continue;
    const double sigma = pv.value(eq.sigma_parameter);
    if (!(sigma > 0.0)) throw NumericError("measurement " + eq.target + ": sigma must be positive");
    total += normal_logpdf(*obs, measurement_mean(eq, latent, pv), sigma);
  }
  return total;
}

}  // namespace iclv
