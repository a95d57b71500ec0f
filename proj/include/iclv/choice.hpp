#pragma once

// Instant utilities, the logit choice kernel and the continuous magnitude density.

#include <array>

#include "iclv/latent.hpp"
#include "iclv/model_spec.hpp"

namespace iclv {

/// Systematic utilities indexed by action_index; maintain is identically 0.
using UtilityVector = std::array<double, kNumActions>;
using ChoiceProb = std::array<double, kNumActions>;

UtilityVector eval_utilities(const ObservationRow& row, const LatentState& latent, const ModelSpec& spec,
                             const ParameterVector& pv);

/// Softmax with max subtraction; finite input gives finite output.
ChoiceProb choice_prob(const UtilityVector& u);

/// log p_i, computed as u_i - logsumexp(u).
double log_choice_prob(const UtilityVector& u, Action chosen);

/// log N(y; mean, sigma) of the magnitude of a chosen action. The mean is the
/// action's continuous equation evaluated on the row (speed times slope for
/// the bundled models). Throws SpecError when the action has no continuous
/// component and NumericError when sigma <= 0.
double continuous_logdensity(Action action, double y_cont, const ObservationRow& row, const LatentState& latent,
                             const ModelSpec& spec, const ParameterVector& pv);

}  // namespace iclv
