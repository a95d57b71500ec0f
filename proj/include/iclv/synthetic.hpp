#pragma once

// Generative simulation of panel data from a fully parameterized model, and
// parameter-recovery experiments built on it.

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "iclv/estimator.hpp"
#include "iclv/model_spec.hpp"
#include "iclv/panel.hpp"

namespace iclv {

struct Distribution {
  enum class Kind { constant, uniform, normal, categorical };
  Kind kind = Kind::constant;
  double a = 0.0;  ///< constant value, uniform low, normal mean
  double b = 0.0;  ///< uniform high, normal sd
  std::vector<std::pair<double, double>> categories;  ///< (value, share)
  bool per_individual = false;  ///< drawn once per individual instead of per row

  /// `constant v`, `uniform lo hi`, `normal mean sd` or
  /// `categorical v:p v:p ...`, optionally followed by `per_individual`.
  static Distribution parse(std::string_view text);
  void validate(const std::string& name) const;
};

struct GeneratorConfig {
  std::size_t n_individuals = 10;
  std::size_t t_per_individual = 100;
  std::uint64_t seed = 1;
  /// Share of rows replaced by a wait imposed by a red light.
  double forced_stop_share = 0.0;
  bool indicators = true;
  /// Keyed by covariate name (`speed`, `junction`, `gpt.red_light`, ...).
  /// `speed` and `dist_to_junction` default to uniform ranges; other
  /// referenced covariates must be listed.
  std::map<std::string, Distribution> covariates;

  static GeneratorConfig parse(std::string_view document);
  static GeneratorConfig load(const std::string& path);
  void validate() const;
};

/// Deterministic in (spec, pv_true, cfg). Individuals use independent
/// substreams of cfg.seed.
PanelDataset simulate_dataset(const ModelSpec& spec, const ParameterVector& pv_true, const GeneratorConfig& cfg);

struct ParameterRecovery {
  std::string name;
  double truth = 0.0;
  double mean = 0.0;
  double bias = 0.0;
  double rmse = 0.0;
  double coverage = 0.0;  ///< share of 95% robust intervals containing the truth
  std::size_t n = 0;
};

struct RecoverySummary {
  std::size_t n_replications = 0;
  std::size_t n_used = 0;
  std::size_t n_failed = 0;
  std::vector<std::string> failures;
  std::vector<ParameterRecovery> parameters;

  /// Mean of |bias| over parameters accepted by the filter (all when empty).
  double mean_abs_bias(const std::vector<std::string>& names = {}) const;
  /// Mean of |bias| / |truth| over the named parameters with non-zero truth.
  double mean_relative_bias(const std::vector<std::string>& names = {}) const;
};

/// Replication r simulates with a seed derived from (cfg.seed, r), estimates,
/// and accumulates per-parameter statistics. Non-converged replications are
/// excluded and counted.
RecoverySummary recovery_experiment(const ModelSpec& spec, const ParameterVector& pv_true, const GeneratorConfig& cfg,
                                    std::size_t n_replications, const EstimationConfig& est = {});

std::string format_recovery(const RecoverySummary& s);

}  // namespace iclv
