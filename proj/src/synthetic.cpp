#include "iclv/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "iclv/choice.hpp"
#include "iclv/draws.hpp"
#include "iclv/error.hpp"
#include "iclv/latent.hpp"
#include "iclv/text.hpp"

namespace iclv {

namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

double draw(const Distribution& d, UniformStream& rng) {
  const double u = rng.next();
  switch (d.kind) {
    case Distribution::Kind::constant: return d.a;
    case Distribution::Kind::uniform: return d.a + (d.b - d.a) * u;
    case Distribution::Kind::normal: return d.a + d.b * normal_quantile(u);
    case Distribution::Kind::categorical: {
      double acc = 0.0;
      for (const auto& [value, share] : d.categories) {
        acc += share;
        if (u < acc) return value;
      }
      return d.categories.back().first;
    }
  }
  return 0.0;
}

bool settable(std::string_view name) {
  static const std::vector<std::string_view> fields = {"speed",         "dist_to_junction", "slope",
                                                       "has_bikeway",   "n_car_lanes",      "junction",
                                                       "traffic_light", "yield_or_stop",    "positive_slope",
                                                       "knows_route"};
  if (std::find(fields.begin(), fields.end(), name) != fields.end()) return true;
  for (auto prefix : {kContextPrefix, kAudioPrefix, kGptPrefix, kDemographicPrefix})
    if (text::starts_with(name, prefix) && name.size() > prefix.size()) return true;
  return false;
}

void set_covariate(ObservationRow& row, const std::string& name, double v) {
  auto& inf = row.infrastructure;
  if (name == "speed") row.speed = std::max(0.0, v);
  else if (name == "dist_to_junction") row.dist_to_junction = std::max(0.0, v);
  else if (name == "slope") row.slope = v;
  else if (name == "has_bikeway") inf.has_bikeway = v != 0.0;
  else if (name == "n_car_lanes") inf.n_car_lanes = std::max(0, static_cast<int>(std::lround(v)));
  else if (name == "junction") inf.junction = v != 0.0;
  else if (name == "traffic_light") inf.traffic_light = v != 0.0;
  else if (name == "yield_or_stop") inf.yield_or_stop = v != 0.0;
  else if (name == "positive_slope") inf.positive_slope_flag = v != 0.0;
  else if (name == "knows_route") inf.knows_route = v != 0.0;
  else if (text::starts_with(name, kContextPrefix)) row.context[name.substr(kContextPrefix.size())] = v;
  else if (text::starts_with(name, kAudioPrefix)) row.audio[name.substr(kAudioPrefix.size())] = v;
  else if (text::starts_with(name, kGptPrefix)) row.gpt[name.substr(kGptPrefix.size())] = v;
  else if (text::starts_with(name, kDemographicPrefix)) row.demographics[name.substr(kDemographicPrefix.size())] = v;
}

double linear_mean(const EquationSpec& eq, const ObservationRow& row, const LatentState& latent, const ModelSpec& spec,
                   const ParameterVector& pv) {
  double v = 0.0;
  for (const auto& t : eq.terms) v += pv.value(t.parameter) * (t.latent ? latent.get(*t.latent) : spec.term_value(t, row));
  return v;
}

std::string individual_name(std::size_t i, std::size_t n) {
  const auto width = std::to_string(n).size();
  auto s = std::to_string(i + 1);
  return "ind" + std::string(width - s.size(), '0') + s;
}

}  // namespace

Distribution Distribution::parse(std::string_view text) {
  auto tokens = text::split(text::trim(text), ' ');
  tokens.erase(std::remove_if(tokens.begin(), tokens.end(), [](const auto& s) { return s.empty(); }), tokens.end());
  Distribution d;
  if (!tokens.empty() && text::iequals(tokens.back(), "per_individual")) {
    d.per_individual = true;
    tokens.pop_back();
  }
  if (tokens.empty()) throw DataError("empty distribution");
  const auto kind = text::to_lower(tokens[0]);
  const auto num = [&](std::size_t i) {
    if (i >= tokens.size()) throw DataError("distribution '" + std::string(text) + "' is missing a value");
    auto v = text::parse_double(tokens[i]);
    if (!v) throw DataError("distribution '" + std::string(text) + "': bad number '" + tokens[i] + "'");
    return *v;
  };
  std::size_t expected = 0;
  if (kind == "constant") {
    d.kind = Kind::constant;
    d.a = num(1);
    expected = 2;
  } else if (kind == "uniform") {
    d.kind = Kind::uniform;
    d.a = num(1);
    d.b = num(2);
    expected = 3;
  } else if (kind == "normal") {
    d.kind = Kind::normal;
    d.a = num(1);
    d.b = num(2);
    expected = 3;
  } else if (kind == "categorical") {
    d.kind = Kind::categorical;
    for (std::size_t i = 1; i < tokens.size(); ++i) {
      const auto parts = text::split(tokens[i], ':');
      const auto v = parts.size() == 2 ? text::parse_double(parts[0]) : std::nullopt;
      const auto p = parts.size() == 2 ? text::parse_double(parts[1]) : std::nullopt;
      if (!v || !p) throw DataError("categorical entry '" + tokens[i] + "' must be value:share");
      d.categories.emplace_back(*v, *p);
    }
    expected = tokens.size();
  } else {
    throw DataError("unknown distribution '" + tokens[0] + "'");
  }
  if (tokens.size() != expected) throw DataError("distribution '" + std::string(text) + "' has extra values");
  return d;
}

void Distribution::validate(const std::string& name) const {
  const auto fail = [&](const std::string& why) { throw DataError("covariate '" + name + "': " + why); };
  switch (kind) {
    case Kind::constant:
      if (!std::isfinite(a)) fail("constant must be finite");
      break;
    case Kind::uniform:
      if (!(std::isfinite(a) && std::isfinite(b) && a <= b)) fail("uniform needs finite low <= high");
      break;
    case Kind::normal:
      if (!(std::isfinite(a) && b > 0.0 && std::isfinite(b))) fail("normal needs a positive finite sd");
      break;
    case Kind::categorical: {
      if (categories.empty()) fail("categorical needs at least one category");
      double total = 0.0;
      for (const auto& [v, p] : categories) {
        if (!(p >= 0.0) || !std::isfinite(v)) fail("categorical shares must be non-negative");
        total += p;
      }
      if (std::abs(total - 1.0) > 1e-9) fail("categorical shares must sum to 1");
      break;
    }
  }
}

GeneratorConfig GeneratorConfig::parse(std::string_view document) {
  GeneratorConfig cfg;
  for (const auto& kv : text::parse_key_values(document)) {
    const auto where = "line " + std::to_string(kv.line) + ": ";
    const auto count = [&] {
      auto v = text::parse_int(kv.value);
      if (!v || *v <= 0) throw DataError(where + kv.key + " must be a positive integer");
      return static_cast<std::size_t>(*v);
    };
    if (kv.key == "n_individuals") {
      cfg.n_individuals = count();
    } else if (kv.key == "t_per_individual") {
      cfg.t_per_individual = count();
    } else if (kv.key == "seed") {
      auto v = text::parse_int(kv.value);
      if (!v || *v < 0) throw DataError(where + "seed must be a non-negative integer");
      cfg.seed = static_cast<std::uint64_t>(*v);
    } else if (kv.key == "forced_stop_share") {
      auto v = text::parse_double(kv.value);
      if (!v) throw DataError(where + "forced_stop_share must be a number");
      cfg.forced_stop_share = *v;
    } else if (kv.key == "indicators") {
      const auto v = text::to_lower(kv.value);
      if (v != "true" && v != "false") throw DataError(where + "indicators must be true or false");
      cfg.indicators = v == "true";
    } else {
      if (!settable(kv.key)) throw DataError(where + "'" + kv.key + "' is not a generated covariate");
      try {
        cfg.covariates[kv.key] = Distribution::parse(kv.value);
      } catch (const DataError& e) {
        throw DataError(where + e.what());
      }
    }
  }
  cfg.validate();
  return cfg;
}

GeneratorConfig GeneratorConfig::load(const std::string& path) { return parse(text::read_file(path)); }

void GeneratorConfig::validate() const {
  if (n_individuals == 0 || t_per_individual == 0) throw DataError("generator counts must be positive");
  if (!(forced_stop_share >= 0.0 && forced_stop_share <= 1.0)) throw DataError("forced_stop_share must lie in [0, 1]");
  for (const auto& [name, d] : covariates) {
    if (!settable(name)) throw DataError("'" + name + "' is not a generated covariate");
    d.validate(name);
  }
}

PanelDataset simulate_dataset(const ModelSpec& spec, const ParameterVector& pv_true, const GeneratorConfig& cfg) {
  cfg.validate();
  if (pv_true.size() != spec.parameters.size()) throw SpecError("parameter vector does not match the model registry");

  auto covs = cfg.covariates;
  covs.try_emplace("speed", Distribution{Distribution::Kind::uniform, 0.0, 30.0, {}, false});
  covs.try_emplace("dist_to_junction", Distribution{Distribution::Kind::uniform, 0.0, 300.0, {}, false});
  if (cfg.forced_stop_share > 0.0) covs.try_emplace("gpt.red_light", Distribution{});
  for (const auto& name : spec.referenced_covariates()) {
    if (settable(name) && !covs.count(name) && name.find('.') != std::string::npos)
      throw DataError("covariate '" + name + "' is used by the model but has no generator distribution");
  }

  std::vector<ObservationRow> rows;
  rows.reserve(cfg.n_individuals * cfg.t_per_individual);
  for (std::size_t n = 0; n < cfg.n_individuals; ++n) {
    std::uint64_t state = cfg.seed + kGolden * (n + 1);
    UniformStream rng(splitmix64(state));
    ObservationRow base;
    base.individual_id = individual_name(n, cfg.n_individuals);
    for (const auto& [name, d] : covs)
      if (d.per_individual) set_covariate(base, name, draw(d, rng));

    double distance = 0.0;
    for (std::size_t t = 1; t <= cfg.t_per_individual; ++t) {
      ObservationRow row = base;
      row.t = static_cast<long long>(t);
      for (const auto& [name, d] : covs)
        if (!d.per_individual) set_covariate(row, name, draw(d, rng));
      row.travel_time = static_cast<double>(t) * 5.0 / 60.0;
      distance += row.speed * 5.0 / 3600.0;
      row.traveled_distance = distance;

      LatentDraw eps;
      eps.eps_fatigue = normal_quantile(rng.next());
      eps.eps_arousal = normal_quantile(rng.next());
      const LatentState latent = eval_structural(row, spec, pv_true, eps);

      auto u = eval_utilities(row, latent, spec, pv_true);
      for (auto& v : u) v += -std::log(-std::log(rng.next()));
      const int chosen = static_cast<int>(std::max_element(u.begin(), u.end()) - u.begin());
      Action action = action_from_index(chosen);

      const double z_cont = normal_quantile(rng.next());
      std::array<double, 4> z_ind{};
      for (auto& z : z_ind) z = normal_quantile(rng.next());
      const bool forced = rng.next() < cfg.forced_stop_share;

      if (forced) {
        action = Action::wait;
        row.gpt["red_light"] = 1.0;
        row.infrastructure.traffic_light = true;
      }
      row.action = action;
      if (const auto* eq = spec.continuous_for(action)) {
        row.action_magnitude =
            linear_mean(*eq, row, latent, spec, pv_true) + pv_true.value(eq->sigma_parameter) * z_cont;
      }
      if (cfg.indicators) {
        for (const auto& eq : spec.measurements) {
          const auto ind = *parse_indicator(eq.target);
          row.indicators.set(ind, linear_mean(eq, row, latent, spec, pv_true) +
                                      pv_true.value(eq.sigma_parameter) * z_ind[static_cast<int>(ind)]);
        }
      }
      rows.push_back(std::move(row));
    }
  }
  return PanelDataset(std::move(rows));
}

double RecoverySummary::mean_abs_bias(const std::vector<std::string>& names) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& p : parameters) {
    if (!names.empty() && std::find(names.begin(), names.end(), p.name) == names.end()) continue;
    sum += std::abs(p.bias);
    ++n;
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

double RecoverySummary::mean_relative_bias(const std::vector<std::string>& names) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& p : parameters) {
    if (!names.empty() && std::find(names.begin(), names.end(), p.name) == names.end()) continue;
    if (p.truth == 0.0) continue;
    sum += std::abs(p.bias) / std::abs(p.truth);
    ++n;
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

RecoverySummary recovery_experiment(const ModelSpec& spec, const ParameterVector& pv_true, const GeneratorConfig& cfg,
                                    std::size_t n_replications, const EstimationConfig& est) {
  RecoverySummary s;
  s.n_replications = n_replications;
  if (n_replications == 0) return s;

  const auto free = pv_true.free_indices();
  std::vector<std::vector<double>> estimates(free.size());
  std::vector<std::size_t> covered(free.size(), 0);
  for (std::size_t r = 0; r < n_replications; ++r) {
    GeneratorConfig c = cfg;
    std::uint64_t state = cfg.seed ^ (0x5851f42d4c957f2dULL * (r + 1));
    c.seed = splitmix64(state);
    const auto ds = simulate_dataset(spec, pv_true, c);
    FitResult fit;
    try {
      fit = estimate(ds, spec, est);
    } catch (const Error& e) {
      ++s.n_failed;
      s.failures.push_back("replication " + std::to_string(r) + ": " + e.what());
      continue;
    }
    if (!fit.converged) {
      ++s.n_failed;
      s.failures.push_back("replication " + std::to_string(r) + ": " + fit.message);
      continue;
    }
    ++s.n_used;
    const auto theta = fit.pv_hat.free_values();
    for (std::size_t k = 0; k < free.size(); ++k) {
      estimates[k].push_back(theta[k]);
      const double truth = pv_true[free[k]].value;
      if (std::abs(theta[k] - truth) <= 1.959963984540054 * fit.se_robust[k]) ++covered[k];
    }
  }
  if (s.n_used == 0) return s;
  for (std::size_t k = 0; k < free.size(); ++k) {
    ParameterRecovery p;
    p.name = pv_true[free[k]].name;
    p.truth = pv_true[free[k]].value;
    p.n = estimates[k].size();
    double sum = 0.0;
    double sq = 0.0;
    for (double v : estimates[k]) {
      sum += v;
      sq += (v - p.truth) * (v - p.truth);
    }
    p.mean = sum / static_cast<double>(p.n);
    p.bias = p.mean - p.truth;
    p.rmse = std::sqrt(sq / static_cast<double>(p.n));
    p.coverage = static_cast<double>(covered[k]) / static_cast<double>(p.n);
    s.parameters.push_back(std::move(p));
  }
  return s;
}

std::string format_recovery(const RecoverySummary& s) {
  std::ostringstream os;
  os << "# replications=" << s.n_replications << " used=" << s.n_used << " failed=" << s.n_failed << '\n';
  text::write_csv_row(os, {"parameter", "truth", "mean", "bias", "rmse", "coverage", "n"});
  for (const auto& p : s.parameters)
    text::write_csv_row(os, {p.name, text::format_double(p.truth), text::format_double(p.mean),
                             text::format_double(p.bias), text::format_double(p.rmse),
                             text::format_double(p.coverage), std::to_string(p.n)});
  return os.str();
}

}  // namespace iclv
