#pragma once

// Simulated log-likelihood of an ICLV model and its analytic gradient.
//
// Each observation integrates the product of the logit choice probability,
// the continuous magnitude density and the measurement densities over the
// latent noise pair (eps_fatigue, eps_arousal), approximated by an average
// over R fixed draws. The average is accumulated in log space.

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "iclv/draws.hpp"
#include "iclv/model_spec.hpp"
#include "iclv/panel.hpp"

namespace iclv {

inline constexpr std::size_t kDrawDims = 2;  ///< dim 0: eps_fatigue, dim 1: eps_arousal

/// Which factors of the per-observation integrand are included.
struct Components {
  bool choice = true;
  bool continuous = true;
  bool measurement = true;
};

struct LikelihoodReport {
  double ll = 0.0;
  std::vector<double> per_individual_ll;
  std::vector<double> gradient;  ///< aligned to the free parameters; empty unless requested
  /// Row-major n_individuals x n_free per-individual score sums; empty unless requested.
  std::vector<double> scores;
  std::size_t n_obs = 0;
  bool degenerate = false;
  std::string degenerate_reason;
};

enum class Want { value, gradient, scores };

struct EngineOptions {
  unsigned threads = 1;
  Components components;
};

/// Compiles a (dataset, spec) pair into a flat design and evaluates the
/// simulated likelihood for any parameter vector sharing the spec's registry.
/// Evaluation is read-only and safe to call concurrently; results do not
/// depend on the thread count.
class LikelihoodEngine {
public:
  /// Throws DataError when a row lacks its action or a referenced covariate.
  /// When `draws` is null and the spec has latents, draws are generated from
  /// the spec's (draws, seed, scheme).
  LikelihoodEngine(const PanelDataset& ds, const ModelSpec& spec, std::shared_ptr<const SimulationDraws> draws = nullptr,
                   EngineOptions options = {});
  ~LikelihoodEngine();
  LikelihoodEngine(LikelihoodEngine&&) noexcept;
  LikelihoodEngine& operator=(LikelihoodEngine&&) noexcept;

  LikelihoodReport evaluate(const ParameterVector& pv, Want want = Want::value) const;
  /// Same with an explicit component mask.
  LikelihoodReport evaluate(const ParameterVector& pv, Want want, const Components& components) const;

  /// ln of the simulated likelihood of one observation.
  double observation_loglik(std::size_t obs, const ParameterVector& pv) const;

  std::size_t n_obs() const;
  std::size_t n_individuals() const;
  std::size_t n_draws() const;  ///< 1 when the spec has no latents
  const ModelSpec& spec() const;
  const std::shared_ptr<const SimulationDraws>& draws() const;

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Simulated likelihood (not its log) of a single observation with the given
/// draws, laid out draw-major with kDrawDims values per draw.
double obs_sim_likelihood(const ObservationRow& row, const ParameterVector& pv, const ModelSpec& spec,
                          std::span<const double> draws);

/// Throws NumericError (naming the observation) when any observation has a
/// zero or non-finite simulated likelihood.
LikelihoodReport total_loglik(const PanelDataset& ds, const ParameterVector& pv, const ModelSpec& spec,
                              std::shared_ptr<const SimulationDraws> draws = nullptr);

/// d ll / d theta for the free parameters, draws held fixed.
std::vector<double> loglik_gradient(const PanelDataset& ds, const ParameterVector& pv, const ModelSpec& spec,
                                    std::shared_ptr<const SimulationDraws> draws = nullptr);

/// Draws sized for a dataset under a spec's settings.
std::shared_ptr<const SimulationDraws> make_draws(const ModelSpec& spec, std::size_t n_obs);

}  // namespace iclv
