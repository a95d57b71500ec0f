#include "iclv/likelihood.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <thread>

#include "iclv/error.hpp"

namespace iclv {

namespace {

constexpr int kMaxEq = 16;
constexpr double kHalfLog2Pi = 0.91893853320467274178;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct CompiledEq {
  EquationKind kind = EquationKind::utility;
  int target = 0;                     // latent, action or indicator index
  std::vector<int> cov_params;        // one per covariate/intercept term
  std::size_t cov_offset = 0;         // into the per-observation value row
  std::vector<std::pair<int, int>> latent_terms;  // (parameter, latent)
  int sigma = -1;
};

struct Accum {
  double m = -std::numeric_limits<double>::infinity();
  double S = 0.0;
  std::array<double, kMaxEq> d{};
  std::array<std::array<double, kNumLatents>, kMaxEq> dL{};
  std::array<double, kMaxEq> s{};

  void rescale(double c) {
    S *= c;
    for (int e = 0; e < kMaxEq; ++e) {
      d[e] *= c;
      s[e] *= c;
      dL[e][0] *= c;
      dL[e][1] *= c;
    }
  }
};

}  // namespace

struct LikelihoodEngine::Impl {
  ModelSpec spec;
  std::shared_ptr<const SimulationDraws> draws;
  EngineOptions options;
  std::size_t n_draws = 1;

  std::vector<CompiledEq> eqs;
  std::array<int, kNumLatents> latent_eq{-1, -1};
  std::array<int, kNumActions - 1> util_eq{};
  std::array<int, 4> meas_eq{-1, -1, -1, -1};
  std::array<int, kNumActions> cont_eq{-1, -1, -1, -1, -1};

  std::size_t stride = 0;  // covariate values per observation
  std::vector<double> values;
  std::vector<int> chosen;
  std::vector<double> magnitude;
  std::vector<std::array<double, 4>> indicators;
  std::vector<std::pair<std::size_t, std::size_t>> individuals;
  std::vector<std::size_t> free_of_param;  // param index -> free position or npos
  std::size_t n_free = 0;

  int compile_equation(const EquationSpec& eq, EquationKind kind, int target) {
    CompiledEq c;
    c.kind = kind;
    c.target = target;
    c.cov_offset = stride;
    const auto& reg = spec.parameters;
    for (const auto& t : eq.terms) {
      const int p = static_cast<int>(*reg.index_of(t.parameter));
      if (t.latent)
        c.latent_terms.emplace_back(p, static_cast<int>(*t.latent));
      else
        c.cov_params.push_back(p);
    }
    if (!eq.sigma_parameter.empty()) c.sigma = static_cast<int>(*reg.index_of(eq.sigma_parameter));
    stride += c.cov_params.size();
    eqs.push_back(std::move(c));
    if (eqs.size() > kMaxEq) throw SpecError("too many equations");
    return static_cast<int>(eqs.size() - 1);
  }

  // Log integrand average for one observation; fills the gradient of that
  // observation into `grad` (full parameter space) when non-null.
  double observation(std::size_t obs, const std::vector<double>& theta, const Components& comp, double* grad) const {
    std::array<double, kMaxEq> eta0{};
    const double* x = values.data() + obs * stride;
    for (std::size_t e = 0; e < eqs.size(); ++e) {
      const auto& c = eqs[e];
      double v = 0.0;
      for (std::size_t k = 0; k < c.cov_params.size(); ++k) v += theta[c.cov_params[k]] * x[c.cov_offset + k];
      eta0[e] = v;
    }

    // Density factors active for this observation.
    std::array<int, kMaxEq> active{};
    std::array<double, kMaxEq> observed{};
    int n_active = 0;
    if (comp.measurement) {
      for (int i = 0; i < 4; ++i) {
        const int e = meas_eq[i];
        if (e < 0 || std::isnan(indicators[obs][i])) continue;
        active[n_active] = e;
        observed[n_active++] = indicators[obs][i];
      }
    }
    const int y = chosen[obs];
    if (comp.continuous && cont_eq[y] >= 0 && !std::isnan(magnitude[obs])) {
      active[n_active] = cont_eq[y];
      observed[n_active++] = magnitude[obs];
    }
    for (int a = 0; a < n_active; ++a)
      if (!(theta[eqs[active[a]].sigma] > 0.0)) return kNaN;

    const bool has_latents = latent_eq[0] >= 0 || latent_eq[1] >= 0;
    const std::size_t R = has_latents ? n_draws : 1;
    const double* eps = has_latents ? draws->observation(obs).data() : nullptr;

    Accum acc;
    std::array<double, kMaxEq> d{};
    std::array<double, kMaxEq> s{};
    std::array<double, kNumActions> iu{};
    std::array<double, kNumActions> p{};
    for (std::size_t r = 0; r < R; ++r) {
      std::array<double, kNumLatents> L{0.0, 0.0};
      for (int l = 0; l < kNumLatents; ++l)
        if (latent_eq[l] >= 0) L[l] = eta0[latent_eq[l]] + eps[r * kDrawDims + l];

      double ell = 0.0;
      if (comp.choice) {
        for (int i = 0; i < kNumActions - 1; ++i) {
          const int e = util_eq[i];
          double v = eta0[e];
          for (const auto& [pi, l] : eqs[e].latent_terms) v += theta[pi] * L[l];
          iu[i] = v;
        }
        iu[kNumActions - 1] = 0.0;
        double mx = iu[0];
        for (int i = 1; i < kNumActions; ++i) mx = std::max(mx, iu[i]);
        double sum = 0.0;
        for (int i = 0; i < kNumActions; ++i) {
          p[i] = std::exp(iu[i] - mx);
          sum += p[i];
        }
        ell += iu[y] - mx - std::log(sum);
        if (grad) {
          for (int i = 0; i < kNumActions - 1; ++i) d[util_eq[i]] = (i == y ? 1.0 : 0.0) - p[i] / sum;
        }
      }
      for (int a = 0; a < n_active; ++a) {
        const int e = active[a];
        const auto& c = eqs[e];
        double mu = eta0[e];
        for (const auto& [pi, l] : c.latent_terms) mu += theta[pi] * L[l];
        const double sig = theta[c.sigma];
        const double res = observed[a] - mu;
        const double inv_var = 1.0 / (sig * sig);
        ell += -kHalfLog2Pi - std::log(sig) - 0.5 * res * res * inv_var;
        if (grad) {
          d[e] = res * inv_var;
          s[e] = -1.0 / sig + res * res * inv_var / sig;
        }
      }

      if (!grad) {
        if (ell > acc.m) {
          acc.S = acc.S * std::exp(acc.m - ell) + 1.0;
          acc.m = ell;
        } else {
          acc.S += std::exp(ell - acc.m);
        }
        continue;
      }
      if (ell > acc.m) {
        acc.rescale(std::exp(acc.m - ell));
        acc.m = ell;
      }
      const double w = std::exp(ell - acc.m);
      acc.S += w;
      const auto add = [&](int e) {
        acc.d[e] += w * d[e];
        acc.s[e] += w * s[e];
        acc.dL[e][0] += w * d[e] * L[0];
        acc.dL[e][1] += w * d[e] * L[1];
      };
      std::array<double, kNumLatents> g{0.0, 0.0};
      if (comp.choice) {
        for (int i = 0; i < kNumActions - 1; ++i) {
          const int e = util_eq[i];
          add(e);
          for (const auto& [pi, l] : eqs[e].latent_terms) g[l] += d[e] * theta[pi];
        }
      }
      for (int a = 0; a < n_active; ++a) {
        const int e = active[a];
        add(e);
        for (const auto& [pi, l] : eqs[e].latent_terms) g[l] += d[e] * theta[pi];
      }
      for (int l = 0; l < kNumLatents; ++l)
        if (latent_eq[l] >= 0) acc.d[latent_eq[l]] += w * g[l];
    }

    const double ll = acc.m + std::log(acc.S) - std::log(static_cast<double>(R));
    if (!grad || !std::isfinite(ll)) return ll;

    const double inv = 1.0 / acc.S;
    const auto emit = [&](int e, bool density) {
      const auto& c = eqs[e];
      const double de = acc.d[e] * inv;
      for (std::size_t k = 0; k < c.cov_params.size(); ++k) grad[c.cov_params[k]] += de * x[c.cov_offset + k];
      for (const auto& [pi, l] : c.latent_terms) grad[pi] += acc.dL[e][l] * inv;
      if (density) grad[c.sigma] += acc.s[e] * inv;
    };
    if (comp.choice)
      for (int i = 0; i < kNumActions - 1; ++i) emit(util_eq[i], false);
    for (int a = 0; a < n_active; ++a) emit(active[a], true);
    for (int l = 0; l < kNumLatents; ++l)
      if (latent_eq[l] >= 0) emit(latent_eq[l], false);
    return ll;
  }
};

LikelihoodEngine::LikelihoodEngine(const PanelDataset& ds, const ModelSpec& spec,
                                   std::shared_ptr<const SimulationDraws> draws, EngineOptions options)
    : impl_(std::make_unique<Impl>()) {
  auto& m = *impl_;
  m.spec = spec;
  m.options = options;

  for (const auto& eq : spec.latents) {
    const auto l = static_cast<int>(*parse_latent(eq.target));
    m.latent_eq[l] = m.compile_equation(eq, EquationKind::latent, l);
  }
  for (int i = 0; i < kNumActions - 1; ++i)
    m.util_eq[i] = m.compile_equation(spec.utilities[i], EquationKind::utility, i);
  for (const auto& eq : spec.measurements) {
    const auto ind = static_cast<int>(*parse_indicator(eq.target));
    m.meas_eq[ind] = m.compile_equation(eq, EquationKind::measurement, ind);
  }
  for (const auto& eq : spec.continuous) {
    const int a = action_index(*parse_action(eq.target));
    m.cont_eq[a] = m.compile_equation(eq, EquationKind::continuous, a);
  }

  const std::size_t n = ds.size();
  m.values.assign(n * m.stride, 0.0);
  m.chosen.resize(n);
  m.magnitude.resize(n);
  m.indicators.resize(n);
  std::vector<const EquationSpec*> in_order;
  for (const auto& eq : spec.latents) in_order.push_back(&eq);
  for (int i = 0; i < kNumActions - 1; ++i) in_order.push_back(&spec.utilities[i]);
  for (const auto& eq : spec.measurements) in_order.push_back(&eq);
  for (const auto& eq : spec.continuous) in_order.push_back(&eq);
  for (std::size_t o = 0; o < n; ++o) {
    const auto& row = ds[o];
    if (!row.action)
      throw DataError("individual '" + row.individual_id + "' t=" + std::to_string(row.t) + ": missing action");
    m.chosen[o] = action_index(*row.action);
    m.magnitude[o] = row.action_magnitude.value_or(kNaN);
    for (auto ind : kAllIndicators)
      m.indicators[o][static_cast<int>(ind)] = row.indicators.get(ind).value_or(kNaN);
    double* x = m.values.data() + o * m.stride;
    for (const auto* eq : in_order)
      for (const auto& t : eq->terms)
        if (!t.latent) *x++ = spec.term_value(t, row);
  }
  for (const auto& ind : ds.individuals()) m.individuals.emplace_back(ind.begin, ind.end);

  const auto& reg = spec.parameters;
  m.free_of_param.assign(reg.size(), static_cast<std::size_t>(-1));
  for (std::size_t i = 0; i < reg.size(); ++i)
    if (!reg[i].fixed) m.free_of_param[i] = m.n_free++;

  if (spec.has_latents()) {
    m.draws = draws ? std::move(draws) : make_draws(spec, n);
    if (m.draws->n_obs() != n || m.draws->dims() != kDrawDims)
      throw NumericError("simulation draws do not match the dataset shape");
    m.n_draws = m.draws->n_draws();
  } else {
    m.draws = std::move(draws);
  }
}

LikelihoodEngine::~LikelihoodEngine() = default;
LikelihoodEngine::LikelihoodEngine(LikelihoodEngine&&) noexcept = default;
LikelihoodEngine& LikelihoodEngine::operator=(LikelihoodEngine&&) noexcept = default;

LikelihoodReport LikelihoodEngine::evaluate(const ParameterVector& pv, Want want) const {
  return evaluate(pv, want, impl_->options.components);
}

LikelihoodReport LikelihoodEngine::evaluate(const ParameterVector& pv, Want want, const Components& comp) const {
  const auto& m = *impl_;
  if (pv.size() != m.spec.parameters.size()) throw SpecError("parameter vector does not match the model registry");
  const std::vector<double> theta = pv.values();
  const std::size_t n_ind = m.individuals.size();
  const bool need_grad = want != Want::value;
  const std::size_t P = theta.size();

  LikelihoodReport rep;
  rep.n_obs = m.chosen.size();
  rep.per_individual_ll.assign(n_ind, 0.0);
  std::vector<double> ind_scores(need_grad ? n_ind * m.n_free : 0, 0.0);
  std::vector<std::size_t> bad_obs(n_ind, static_cast<std::size_t>(-1));

  const auto work = [&](std::size_t first, std::size_t last) {
    std::vector<double> grad(need_grad ? P : 0);
    for (std::size_t n = first; n < last; ++n) {
      const auto [b, e] = m.individuals[n];
      double total = 0.0;
      if (need_grad) std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t o = b; o < e; ++o) {
        const double ll = m.observation(o, theta, comp, need_grad ? grad.data() : nullptr);
        if (!std::isfinite(ll) && bad_obs[n] == static_cast<std::size_t>(-1)) bad_obs[n] = o;
        total += ll;
      }
      rep.per_individual_ll[n] = total;
      if (need_grad)
        for (std::size_t p = 0; p < P; ++p)
          if (m.free_of_param[p] != static_cast<std::size_t>(-1)) ind_scores[n * m.n_free + m.free_of_param[p]] = grad[p];
    }
  };

  const unsigned threads = std::max(1u, std::min<unsigned>(m.options.threads, static_cast<unsigned>(n_ind)));
  if (threads <= 1) {
    work(0, n_ind);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (n_ind + threads - 1) / threads;
    for (unsigned t = 0; t < threads; ++t) {
      const std::size_t first = t * chunk;
      const std::size_t last = std::min(n_ind, first + chunk);
      if (first >= last) break;
      pool.emplace_back(work, first, last);
    }
    for (auto& th : pool) th.join();
  }

  // Fixed-order reductions keep results independent of the thread count.
  for (std::size_t n = 0; n < n_ind; ++n) {
    rep.ll += rep.per_individual_ll[n];
    if (bad_obs[n] != static_cast<std::size_t>(-1) && !rep.degenerate) {
      rep.degenerate = true;
      rep.degenerate_reason = "observation " + std::to_string(bad_obs[n]) + " has a zero or non-finite likelihood";
    }
  }
  if (need_grad) {
    rep.gradient.assign(m.n_free, 0.0);
    for (std::size_t n = 0; n < n_ind; ++n)
      for (std::size_t k = 0; k < m.n_free; ++k) rep.gradient[k] += ind_scores[n * m.n_free + k];
    if (want == Want::scores) rep.scores = std::move(ind_scores);
  }
  if (!std::isfinite(rep.ll) && !rep.degenerate) {
    rep.degenerate = true;
    rep.degenerate_reason = "non-finite log-likelihood";
  }
  return rep;
}

double LikelihoodEngine::observation_loglik(std::size_t obs, const ParameterVector& pv) const {
  return impl_->observation(obs, pv.values(), impl_->options.components, nullptr);
}

std::size_t LikelihoodEngine::n_obs() const { return impl_->chosen.size(); }
std::size_t LikelihoodEngine::n_individuals() const { return impl_->individuals.size(); }
std::size_t LikelihoodEngine::n_draws() const { return impl_->spec.has_latents() ? impl_->n_draws : 1; }
const ModelSpec& LikelihoodEngine::spec() const { return impl_->spec; }
const std::shared_ptr<const SimulationDraws>& LikelihoodEngine::draws() const { return impl_->draws; }

std::shared_ptr<const SimulationDraws> make_draws(const ModelSpec& spec, std::size_t n_obs) {
  return std::make_shared<const SimulationDraws>(SimulationDraws::generate(
      n_obs, static_cast<std::size_t>(spec.draws), kDrawDims, spec.seed, spec.scheme));
}

double obs_sim_likelihood(const ObservationRow& row, const ParameterVector& pv, const ModelSpec& spec,
                          std::span<const double> draws) {
  if (draws.empty() || draws.size() % kDrawDims != 0) throw NumericError("obs_sim_likelihood needs R >= 1 draw pairs");
  const std::size_t R = draws.size() / kDrawDims;
  auto sim = std::make_shared<const SimulationDraws>(
      SimulationDraws::from_values(1, R, kDrawDims, std::vector<double>(draws.begin(), draws.end())));
  const PanelDataset one({row});
  const LikelihoodEngine engine(one, spec, spec.has_latents() ? sim : nullptr);
  const double ll = engine.observation_loglik(0, pv);
  if (!std::isfinite(ll))
    throw NumericError("individual '" + row.individual_id + "' t=" + std::to_string(row.t) +
                       ": non-finite simulated likelihood");
  return std::exp(ll);
}

LikelihoodReport total_loglik(const PanelDataset& ds, const ParameterVector& pv, const ModelSpec& spec,
                              std::shared_ptr<const SimulationDraws> draws) {
  const LikelihoodEngine engine(ds, spec, std::move(draws));
  auto rep = engine.evaluate(pv, Want::value);
  if (rep.degenerate) {
    for (std::size_t o = 0; o < ds.size(); ++o) {
      if (!std::isfinite(engine.observation_loglik(o, pv)))
        throw NumericError("individual '" + ds[o].individual_id + "' t=" + std::to_string(ds[o].t) +
                           ": zero or non-finite simulated likelihood");
    }
    throw NumericError(rep.degenerate_reason);
  }
  return rep;
}

std::vector<double> loglik_gradient(const PanelDataset& ds, const ParameterVector& pv, const ModelSpec& spec,
                                    std::shared_ptr<const SimulationDraws> draws) {
  const LikelihoodEngine engine(ds, spec, std::move(draws));
  auto rep = engine.evaluate(pv, Want::gradient);
  if (rep.degenerate) throw NumericError(rep.degenerate_reason);
  return rep.gradient;
}

}  // namespace iclv
