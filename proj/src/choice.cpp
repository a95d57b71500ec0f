#include "iclv/choice.hpp"

#include <algorithm>
#include <cmath>

#include "iclv/error.hpp"

namespace iclv {

namespace {

double linear_predictor(const EquationSpec& eq, const ObservationRow& row, const LatentState& latent,
                        const ModelSpec& spec, const ParameterVector& pv) {
  double v = 0.0;
  for (const auto& term : eq.terms) {
    const double x = term.latent ? latent.get(*term.latent) : spec.term_value(term, row);
    v += pv.value(term.parameter) * x;
  }
  return v;
}

}  // namespace

UtilityVector eval_utilities(const ObservationRow& row, const LatentState& latent, const ModelSpec& spec,
                             const ParameterVector& pv) {
  UtilityVector u{};
  for (int i = 0; i < kNumActions; ++i) u[i] = linear_predictor(spec.utilities[i], row, latent, spec, pv);
  u[action_index(Action::maintain)] = 0.0;
  return u;
}

ChoiceProb choice_prob(const UtilityVector& u) {
  const double m = *std::max_element(u.begin(), u.end());
  ChoiceProb p{};
  double sum = 0.0;
  for (int i = 0; i < kNumActions; ++i) {
    p[i] = std::exp(u[i] - m);
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

double log_choice_prob(const UtilityVector& u, Action chosen) {
  const double m = *std::max_element(u.begin(), u.end());
  double sum = 0.0;
  for (double v : u) sum += std::exp(v - m);
  return u[action_index(chosen)] - m - std::log(sum);
}

double continuous_logdensity(Action action, double y_cont, const ObservationRow& row, const LatentState& latent,
                             const ModelSpec& spec, const ParameterVector& pv) {
  const auto* eq = spec.continuous_for(action);
  if (!eq) throw SpecError("action '" + std::string(to_string(action)) + "' has no continuous component");
  const double sigma = pv.value(eq->sigma_parameter);
  if (!(sigma > 0.0)) throw NumericError("continuous " + eq->target + ": sigma must be positive");
  return normal_logpdf(y_cont, linear_predictor(*eq, row, latent, spec, pv), sigma);
}

}  // namespace iclv
