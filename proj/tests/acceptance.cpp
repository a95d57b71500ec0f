// Acceptance run: one PASS/FAIL line per criterion, tolerances pinned below.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include "iclv/choice.hpp"
#include "iclv/cli.hpp"
#include "iclv/estimator.hpp"
#include "iclv/imputer.hpp"
#include "iclv/latent.hpp"
#include "iclv/lvd.hpp"
#include "iclv/lvd_client.hpp"
#include "iclv/synthetic.hpp"
#include "support.hpp"

using namespace iclv;
using namespace iclv::testing;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(int id, const std::string& name, double limit_s, const std::function<Verdict()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = secs < limit_s;
  const bool pass = v.pass && in_time;
  if (!pass) ++failures;
  std::ostringstream os;
  os << (pass ? "PASS" : "FAIL") << " [" << id << "] " << name << ": " << v.detail << " (" << std::fixed
     << std::setprecision(1) << secs << " s, limit " << limit_s << " s" << (in_time ? "" : ", OVER TIME") << ")";
  std::cout << os.str() << std::endl;
}

std::string fmt(double v, int prec = 6) {
  std::ostringstream os;
  os << std::setprecision(prec) << v;
  return os.str();
}

// 1
Verdict metric_formulas() {
  constexpr double kAicTol = 0.1, kRhoTol = 0.0001;
  const auto mnl = fit_metrics(-12584.2, -10745.71, 35, 7819);
  const auto mnli = fit_metrics(-12584.2, -10516.50, 47, 7819);
  const bool ok = std::abs(mnl.aic - 21561.4) <= kAicTol && std::abs(mnl.adj_rho2 - 0.1433) <= kRhoTol &&
                  std::abs(mnli.aic - 21127.0) <= kAicTol && std::abs(mnli.adj_rho2 - 0.1606) <= kRhoTol;
  return {ok, "MNL aic=" + fmt(mnl.aic, 7) + " adj=" + fmt(mnl.adj_rho2, 4) + "; MNL(I) aic=" + fmt(mnli.aic, 7) +
                  " adj=" + fmt(mnli.adj_rho2, 4)};
}

// 2
Verdict logit_kernel() {
  constexpr double kSumTol = 1e-12, kUniformTol = 1e-15;
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> wide(-700, 700), narrow(-5, 5);
  double worst = 0;
  for (int k = 0; k < 1000000; ++k) {
    UtilityVector u{};
    const int mode = k % 4;
    for (int i = 0; i < 4; ++i) {
      if (mode == 0) u[i] = wide(rng);
      else if (mode == 1) u[i] = narrow(rng);
      else if (mode == 2) u[i] = (rng() & 1) ? 700.0 : -700.0;
      else u[i] = narrow(rng) + (i == 0 ? 690.0 : 0.0);
    }
    const auto p = choice_prob(u);
    double s = 0;
    for (double v : p) s += v;
    worst = std::max(worst, std::abs(s - 1.0));
  }
  const auto p = choice_prob(UtilityVector{});
  double uni = 0;
  for (double v : p) uni = std::max(uni, std::abs(v - 0.2));
  return {worst <= kSumTol && uni <= kUniformTol,
          "max |sum-1|=" + fmt(worst, 3) + " over 1e6 vectors, uniform max dev=" + fmt(uni, 3)};
}

// 3
Verdict oracle_equivalence() {
  constexpr double kRelTol = 0.005;
  const auto spec = load_fixture_spec("oracle_hm.spec");
  const auto ds = oracle_hm_panel();
  const auto draws = make_draws(spec, ds.size());
  const auto gh = gauss_hermite(64);
  double worst = 0;
  for (std::size_t o = 0; o < ds.size(); ++o) {
    const double q = quadrature_likelihood(ds[o], spec.parameters, spec, gh);
    const double s = obs_sim_likelihood(ds[o], spec.parameters, spec, draws->observation(o));
    worst = std::max(worst, std::abs(s / q - 1.0));
  }
  return {ds.size() == 10 && draws->n_draws() == 100000 && worst < kRelTol,
          std::to_string(ds.size()) + " obs, R=" + std::to_string(draws->n_draws()) +
              ", max rel dev from GH-64=" + fmt(worst, 3)};
}

// 4
Verdict gradient_check() {
  constexpr double kStep = 1e-5, kRelTol = 1e-5;
  const auto spec = load_fixture_spec("tiny_hm.spec");
  const auto pv = with_values(spec, "tiny_hm_truth.txt");
  const auto ds = tiny_hm_panel(4, 10, 21);
  const LikelihoodEngine engine(ds, spec);
  const auto g = engine.evaluate(pv, Want::gradient).gradient;
  const auto free = pv.free_indices();
  double worst = 0;
  std::string worst_name;
  for (std::size_t k = 0; k < free.size(); ++k) {
    auto a = pv, b = pv;
    a[free[k]].value += kStep;
    b[free[k]].value -= kStep;
    const double fd = (engine.evaluate(a).ll - engine.evaluate(b).ll) / (2 * kStep);
    const double rel = std::abs(g[k] - fd) / std::max(1.0, std::abs(fd));
    if (rel > worst) {
      worst = rel;
      worst_name = pv[free[k]].name;
    }
  }
  return {worst < kRelTol, std::to_string(free.size()) + " parameters, R=" + std::to_string(engine.n_draws()) +
                               ", max rel err=" + fmt(worst, 3) + " (" + worst_name + ")"};
}

// 5
Verdict parameter_recovery() {
  constexpr double kCoverLo = 0.85, kCoverHi = 1.0, kMnlBias = 0.05, kHmRelBias = 0.15;
  const unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  EstimationConfig est;
  est.threads = threads;

  const auto mnl = load_spec(spec_path("mnl.spec"));
  const auto mnl_truth = with_values(mnl, "mnl_truth.txt");
  auto mcfg = GeneratorConfig::load(data_path("mnl.gen"));
  mcfg.n_individuals = 50;
  mcfg.t_per_individual = 100;
  const auto ms = recovery_experiment(mnl, mnl_truth, mcfg, 20, est);
  double cov_min = 1.0;
  std::string cov_min_name;
  for (const auto& p : ms.parameters)
    if (p.coverage < cov_min) {
      cov_min = p.coverage;
      cov_min_name = p.name;
    }
  const double mnl_bias = ms.mean_abs_bias();
  const bool mnl_ok = ms.n_used == 20 && cov_min >= kCoverLo && cov_min <= kCoverHi && mnl_bias < kMnlBias;

  const auto hm = load_fixture_spec("tiny_hm.spec");
  const auto hm_truth = with_values(hm, "tiny_hm_truth.txt");
  const auto hcfg = GeneratorConfig::load(data_path("tiny_hm.gen"));
  std::vector<std::string> targets;
  for (const auto& p : hm.parameters.entries())
    if (p.name.rfind("gamma_", 0) == 0) targets.push_back(p.name);
  for (const auto& u : hm.utilities)
    for (const auto& t : u.terms) targets.push_back(t.parameter);
  const auto hs = recovery_experiment(hm, hm_truth, hcfg, 10, est);
  const double hm_bias = hs.mean_relative_bias(targets);
  const bool hm_ok = hs.n_used == 10 && hm_bias < kHmRelBias;

  return {mnl_ok && hm_ok, "MNL 20x" + std::to_string(mcfg.n_individuals * mcfg.t_per_individual) +
                               " obs: used " + std::to_string(ms.n_used) + ", min coverage " + fmt(cov_min, 3) +
                               " (" + cov_min_name + "), mean |bias| " + fmt(mnl_bias, 3) + "; tiny HM 10 reps R=" +
                               std::to_string(hm.draws) + ": used " + std::to_string(hs.n_used) +
                               ", mean rel bias " + fmt(hm_bias, 3) + " over " + std::to_string(targets.size())};
}

// 6
Verdict imputer_properties() {
  constexpr double kConservationTol = 1e-9;
  using namespace imputer;
  std::mt19937_64 rng(6);
  std::size_t priority_violations = 0, conservation_violations = 0, monotone_violations = 0, nondeterministic = 0;
  for (int k = 0; k < 10000; ++k) {
    SpeedTrace tr{"r" + std::to_string(k), {}};
    double v = std::uniform_real_distribution<double>(0, 30)(rng);
    const int n = 1 + static_cast<int>(rng() % 80);
    for (int i = 0; i < n; ++i) {
      if (i) v = std::max(0.0, v + std::normal_distribution<double>(0, 3)(rng));
      tr.samples.push_back({static_cast<double>(i), v});
    }
    ImputerConfig raw;
    raw.corrections.clear();
    const auto labels = classify_samples(tr, raw.thresholds);
    const auto w = impute(tr, raw);
    double net = 0;
    for (const auto& x : w) {
      net += x.accel_mag - x.decel_mag - x.brake_mag;
      int best = 99;
      for (long long i = x.window_index * 5; i < std::min<long long>(n, x.window_index * 5 + 5); ++i)
        best = std::min(best, priority(labels[static_cast<std::size_t>(i)]));
      priority_violations += priority(x.action) != best;
    }
    conservation_violations += std::abs(net - (tr.samples.back().speed - tr.samples.front().speed)) > kConservationTol;

    // Raising a drop threshold never creates labels of that kind; raising the
    // wait speed never removes waits.
    Thresholds hi = raw.thresholds;
    hi.brake_drop += 1.0;
    hi.wait_speed += 0.5;
    const auto l2 = classify_samples(tr, hi);
    std::size_t b1 = 0, b2 = 0, w1 = 0, w2 = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      b1 += labels[i] == Action::brake;
      b2 += l2[i] == Action::brake;
      w1 += labels[i] == Action::wait;
      w2 += l2[i] == Action::wait;
    }
    monotone_violations += b2 > b1 || w2 < w1;
    nondeterministic += impute(tr) != impute(tr);
  }
  const bool ok = priority_violations == 0 && conservation_violations == 0 && monotone_violations == 0 &&
                  nondeterministic == 0;
  return {ok, "10000 traces: priority " + std::to_string(priority_violations) + ", conservation " +
                  std::to_string(conservation_violations) + ", monotonicity " + std::to_string(monotone_violations) +
                  ", determinism " + std::to_string(nondeterministic) + " violations"};
}

// 7
Verdict lvd_parsing() {
  using namespace lvd;
  std::size_t valid = 0, complete = 0, invalid = 0, diagnosed = 0;
  std::vector<std::string> bodies;
  for (const auto& e : std::filesystem::directory_iterator(data_path("lvd/valid"))) {
    bodies.push_back(text::read_file(e.path().string()));
    ++valid;
  }
  // Responses travel through the client on a mock transport, as in production.
  std::size_t next = 0;
  MockTransport transport([&](const std::string&) { return MockTransport::completion(bodies[next++]); });
  LvdClient client(transport, {});
  LvdRequest req;
  req.prompt = default_prompt();
  req.images = {{"image/jpeg", "AAAA"}};
  for (std::size_t i = 0; i < bodies.size(); ++i) {
    req.sequence_id = "s" + std::to_string(i);
    const auto r = parse_response(client.describe(req).text);
    complete += r.record.has_value() && r.diagnostics.empty();
  }
  for (const auto& e : std::filesystem::directory_iterator(data_path("lvd/invalid"))) {
    ++invalid;
    const auto r = parse_response(text::read_file(e.path().string()));
    bool oov = false;
    for (const auto& d : r.diagnostics) oov |= d.kind == Diagnostic::Kind::out_of_vocabulary;
    diagnosed += oov && !r.record;
  }
  std::mt19937_64 rng(7);
  std::size_t round_trip_fail = 0;
  for (int k = 0; k < 2000; ++k) {
    LvdRecord r;
    r.lane_type = static_cast<LaneType>(rng() % 3);
    r.separation = static_cast<Separation>(rng() % 3);
    r.traffic_signal = static_cast<TrafficSignal>(rng() % 4);
    for (auto& p : r.vehicle_proximity) p = static_cast<Proximity>(rng() % 4);
    for (auto& p : r.pedestrian_proximity) p = static_cast<Proximity>(rng() % 4);
    if (rng() & 1) r.signage = {"stop", "bike lane"};
    r.road_condition = static_cast<Quality>(rng() % 3);
    r.potholes = static_cast<Presence>(rng() % 2);
    r.pedestrian_activity = static_cast<Level>(rng() % 3);
    r.obstructions = static_cast<Presence>(rng() % 2);
    r.weather = static_cast<Weather>(rng() % 2);
    r.stress_level = static_cast<Level>(rng() % 3);
    r.stress_description = "Narrow lane next to parked cars.";
    r.special_events = static_cast<Presence>(rng() % 2);
    r.road_works = static_cast<Presence>(rng() % 2);
    r.other_cyclists = static_cast<Proximity>(rng() % 4);
    r.cyclist_infrastructure = static_cast<Quality>(rng() % 3);
    const auto p = parse_response(render(r));
    round_trip_fail += !p.record || !(*p.record == r);
  }
  const bool ok = valid > 0 && complete == valid && diagnosed == invalid && round_trip_fail == 0;
  return {ok, std::to_string(complete) + "/" + std::to_string(valid) + " valid fixtures complete, " +
                  std::to_string(diagnosed) + "/" + std::to_string(invalid) + " invalid diagnosed, " +
                  std::to_string(round_trip_fail) + "/2000 round-trip failures"};
}

// 8
Verdict determinism() {
  const auto dir = scratch_dir("acceptance_det");
  const auto call = [](std::vector<std::string> args) {
    args.insert(args.begin(), "iclv");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    if (code != 0) throw std::runtime_error("iclv " + args[1] + " exited " + std::to_string(code) + ": " + err.str());
  };
  const std::string threads = std::to_string(std::max(2u, std::thread::hardware_concurrency()));
  std::vector<std::string> results;
  for (const std::string& t : std::vector<std::string>{"1", "1", threads}) {
    const auto run_dir = dir / ("run" + std::to_string(results.size()));
    const auto panel = (run_dir / "panel.csv").string();
    call({"simulate", "--spec", data_path("tiny_hm.spec"), "--params", data_path("tiny_hm_truth.txt"), "--config",
          data_path("tiny_hm.gen"), "--out", panel, "--seed", "8"});
    call({"estimate", "--spec", data_path("tiny_hm.spec"), "--data", panel, "--out", (run_dir / "fit").string(),
          "--draws", "100", "--threads", t, "--candidates", "3", "--perturbation", "0.2", "--top-k", "2"});
    results.push_back(text::read_file((run_dir / "fit" / "results.txt").string()));
  }
  const bool ok = results[0] == results[1] && results[0] == results[2] && !results[0].empty();
  return {ok, std::string("serial runs ") + (results[0] == results[1] ? "identical" : "DIFFER") + ", " + threads +
                  "-thread run " + (results[0] == results[2] ? "identical" : "DIFFERS") + " (" +
                  std::to_string(results[0].size()) + " bytes, sha256 " + cli::sha256_hex(results[0]).substr(0, 12) +
                  ")"};
}

// 9
Verdict measurement_densities() {
  constexpr double kMassTol = 1e-6, kScaleTol = 1e-12;
  const auto spec = load_fixture_spec("oracle_hm.spec");
  const auto& pv = spec.parameters;
  const LatentState latent{0.7, -0.4};
  double worst_mass = 0;
  for (const auto& eq : spec.measurements) {
    const auto ind = *parse_indicator(eq.target);
    const double mu = measurement_mean(eq, latent, pv);
    const double sd = pv.value(eq.sigma_parameter);
    // Composite Simpson over mean +/- 12 sd.
    const int n = 20000;
    const double a = mu - 12 * sd, b = mu + 12 * sd, h = (b - a) / n;
    long double s = 0;
    for (int i = 0; i <= n; ++i) {
      IndicatorVars y;
      y.set(ind, a + i * h);
      const double f = std::exp(measurement_logdensity(y, latent, spec, pv));
      s += (i == 0 || i == n ? 1 : (i % 2 ? 4 : 2)) * static_cast<long double>(f);
    }
    worst_mass = std::max(worst_mass, std::abs(static_cast<double>(s * h / 3) - 1.0));
  }

  double worst_scale = 0;
  std::mt19937_64 rng(9);
  for (int k = 0; k < 1000; ++k) {
    const double c = std::uniform_real_distribution<double>(0.25, 4.0)(rng);
    const LatentState l{std::normal_distribution<double>()(rng), std::normal_distribution<double>()(rng)};
    IndicatorVars y;
    for (auto ind : kAllIndicators) y.set(ind, std::normal_distribution<double>(0, 2)(rng));
    auto scaled = pv;
    for (const auto& eq : spec.measurements)
      for (const auto& t : eq.terms)
        if (t.latent) scaled.set_value(t.parameter, c * pv.value(t.parameter));
    const double base = measurement_logdensity(y, l, spec, pv);
    const double other = measurement_logdensity(y, LatentState{l.fatigue / c, l.arousal / c}, spec, scaled);
    worst_scale = std::max(worst_scale, std::abs(base - other) / std::max(1.0, std::abs(base)));
  }
  return {worst_mass <= kMassTol && worst_scale <= kScaleTol,
          "max |mass-1|=" + fmt(worst_mass, 3) + " over " + std::to_string(spec.measurements.size()) +
              " indicators, max scale-invariance dev=" + fmt(worst_scale, 3)};
}

}  // namespace

int main() {
  criterion(1, "metric formulas reproduce the MNL and MNL(I) rows", 1, metric_formulas);
  criterion(2, "logit kernel normalization", 30, logit_kernel);
  criterion(3, "simulated likelihood vs Gauss-Hermite quadrature", 120, oracle_equivalence);
  criterion(4, "analytic gradient vs central differences", 120, gradient_check);
  criterion(5, "parameter recovery", 1800, parameter_recovery);
  criterion(6, "imputer properties", 60, imputer_properties);
  criterion(7, "descriptor parsing", 10, lvd_parsing);
  criterion(8, "simulate -> estimate determinism", 600, determinism);
  criterion(9, "measurement densities", 60, measurement_densities);
  std::cout << (failures ? std::to_string(failures) + " criteria failed" : std::string("all criteria passed"))
            << std::endl;
  return failures ? 1 : 0;
}
