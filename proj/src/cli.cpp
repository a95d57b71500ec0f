#include "iclv/cli.hpp"

#include <cctype>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include <openssl/evp.h>

#include "CLI11.hpp"
#include "json.hpp"

#include "iclv/error.hpp"
#include "iclv/estimator.hpp"
#include "iclv/imputer.hpp"
#include "iclv/lvd.hpp"
#include "iclv/lvd_client.hpp"
#include "iclv/synthetic.hpp"
#include "iclv/text.hpp"

namespace iclv::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr std::string_view kVersion = "0.1.0";

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

class Manifest {
public:
  Manifest(std::string command, int argc, const char* const* argv) {
    j_["command"] = std::move(command);
    j_["argv"] = json::array();
    for (int i = 0; i < argc; ++i) j_["argv"].push_back(argv[i]);
    j_["versions"] = {{"iclv", kVersion}, {"compiler", __VERSION__}};
    j_["started_at"] = utc_now();
    j_["settings"] = json::object();
    j_["seeds"] = json::object();
    j_["configs"] = json::array();
    j_["inputs"] = json::array();
    j_["outputs"] = json::array();
  }

  void setting(const std::string& name, const json& value, std::string_view source) {
    j_["settings"][name] = {{"value", value}, {"source", source}};
  }
  void seed(const std::string& name, std::uint64_t v) { j_["seeds"][name] = v; }
  void config(const std::string& path) {
    if (!path.empty()) j_["configs"].push_back(path);
  }
  void input(const std::string& path) {
    if (!path.empty()) j_["inputs"].push_back({{"path", path}, {"sha256", sha256_file(path)}});
  }
  void output(const std::string& path) { j_["outputs"].push_back({{"path", path}, {"sha256", sha256_file(path)}}); }
  void note(const std::string& key, const json& value) { j_[key] = value; }

  void write(const std::string& path) {
    j_["finished_at"] = utc_now();
    text::write_file(path, j_.dump(2) + '\n');
  }

private:
  json j_;
};

// Flag > config file > built-in default, with the winning source recorded.
class Settings {
public:
  Settings(Manifest& m, std::map<std::string, std::string> config) : m_(m), config_(std::move(config)) {}

  template <class T>
  T get(const std::string& name, const std::optional<T>& flag, T fallback) {
    if (flag) {
      record(name, *flag, "flag");
      return *flag;
    }
    if (const auto it = config_.find(name); it != config_.end()) {
      const T v = convert<T>(name, it->second);
      record(name, v, "config");
      return v;
    }
    record(name, fallback, "default");
    return fallback;
  }

  void check_unused(const std::vector<std::string>& known) const {
    for (const auto& [k, v] : config_)
      if (std::find(known.begin(), known.end(), k) == known.end())
        throw UsageError("config: unknown key '" + k + "'");
  }

private:
  template <class T>
  static T convert(const std::string& name, const std::string& s) {
    if constexpr (std::is_same_v<T, std::string>) {
      return s;
    } else if constexpr (std::is_same_v<T, bool>) {
      const auto v = text::to_lower(s);
      if (v == "true" || v == "1" || v == "yes") return true;
      if (v == "false" || v == "0" || v == "no") return false;
      throw UsageError("config: '" + name + "' must be true or false");
    } else if constexpr (std::is_floating_point_v<T>) {
      auto v = text::parse_double(s);
      if (!v) throw UsageError("config: '" + name + "' must be a number");
      return static_cast<T>(*v);
    } else {
      auto v = text::parse_int(s);
      if (!v || (std::is_unsigned_v<T> && *v < 0)) throw UsageError("config: '" + name + "' must be an integer");
      return static_cast<T>(*v);
    }
  }

  template <class T>
  void record(const std::string& name, const T& v, std::string_view source) {
    m_.setting(name, v, source);
  }

  Manifest& m_;
  std::map<std::string, std::string> config_;
};

std::map<std::string, std::string> read_config(const std::string& path) {
  std::map<std::string, std::string> out;
  if (path.empty()) return out;
  for (const auto& kv : text::parse_key_values(text::read_file(path))) out[kv.key] = kv.value;
  return out;
}

void require_file(const std::string& path, std::string_view what) {
  if (!fs::is_regular_file(path)) throw UsageError(std::string(what) + " '" + path + "' does not exist");
}

void write_output(Manifest& m, const std::string& path, std::string_view contents) {
  if (const auto dir = fs::path(path).parent_path(); !dir.empty()) fs::create_directories(dir);
  text::write_file(path, contents);
  m.output(path);
}

CovariateSchema schema_for(const PanelDataset& ds) {
  auto schema = cyclist_schema();
  const auto own = ds.schema();
  for (const auto& n : own.names()) schema.insert(n);
  return schema;
}

// Schema for specs read without a dataset: group covariates named in the
// document are accepted as they stand.
CovariateSchema schema_for_text(const std::string& doc) {
  auto schema = cyclist_schema();
  std::string token;
  const auto flush = [&] {
    for (auto prefix : {kContextPrefix, kAudioPrefix, kGptPrefix, kDemographicPrefix})
      if (text::starts_with(token, prefix) && token.size() > prefix.size()) schema.insert(token);
    token.clear();
  };
  for (char c : doc) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.') token += c;
    else flush();
  }
  flush();
  return schema;
}

// Splits `[section]` documents into per-section text.
std::map<std::string, std::string> sections(const std::string& doc) {
  std::map<std::string, std::string> out;
  std::string current;
  std::istringstream in(doc);
  std::string line;
  while (std::getline(in, line)) {
    const auto t = text::trim(line);
    if (t.size() >= 2 && t.front() == '[' && t.back() == ']') {
      current = std::string(t.substr(1, t.size() - 2));
      out[current];
      continue;
    }
    out[current] += line + '\n';
  }
  return out;
}

FitResult read_results(const std::string& path, const ModelSpec& spec) {
  const auto parts = sections(text::read_file(path));
  if (!parts.count("metrics") || !parts.count("estimates"))
    throw DataError("results file '" + path + "' lacks [metrics] or [estimates]");
  std::map<std::string, std::string> metrics;
  for (const auto& kv : text::parse_key_values(parts.at("metrics"))) metrics[kv.key] = kv.value;
  const auto number = [&](const std::string& k) {
    const auto it = metrics.find(k);
    if (it == metrics.end()) return std::numeric_limits<double>::quiet_NaN();
    return text::parse_double(it->second).value_or(std::numeric_limits<double>::quiet_NaN());
  };
  FitResult fit;
  fit.pv_hat = apply_parameter_values(spec.parameters, parse_parameter_values(parts.at("estimates")));
  for (auto i : fit.pv_hat.free_indices()) fit.free_names.push_back(fit.pv_hat[i].name);
  fit.ll0 = number("ll0");
  fit.ll_final = number("ll_final");
  fit.ll_choice = number("ll_choice");
  fit.aic = number("aic");
  fit.bic = number("bic");
  fit.adj_rho2 = number("adj_rho2");
  fit.n_obs = static_cast<std::size_t>(number("n_obs"));
  fit.n_individuals = static_cast<std::size_t>(number("n_individuals"));
  fit.iterations = static_cast<int>(number("iterations"));
  fit.converged = metrics["converged"] == "true";
  fit.message = fit.converged ? "as recorded" : "not converged";
  std::map<std::string, double> se;
  if (parts.count("robust_se"))
    for (const auto& kv : text::parse_key_values(parts.at("robust_se")))
      se[kv.key] = text::parse_double(kv.value).value_or(std::numeric_limits<double>::quiet_NaN());
  for (std::size_t k = 0; k < fit.free_names.size(); ++k) {
    const auto it = se.find(fit.free_names[k]);
    const double s = it == se.end() ? std::numeric_limits<double>::quiet_NaN() : it->second;
    fit.se_robust.push_back(s);
    fit.t_robust.push_back(fit.pv_hat.value(fit.free_names[k]) / s);
  }
  fit.has_covariance = !se.empty();
  if (!fit.has_covariance) fit.covariance_message = "no standard errors recorded";
  return fit;
}

std::string recovery_table(const FitResult& fit, const ParameterVector& truth) {
  std::ostringstream os;
  text::write_csv_row(os, {"parameter", "truth", "estimate", "robust_se", "z", "within_95"});
  for (std::size_t k = 0; k < fit.free_names.size(); ++k) {
    const auto& name = fit.free_names[k];
    const double t = truth.value(name);
    const double e = fit.pv_hat.value(name);
    const double z = (e - t) / fit.se_robust[k];
    text::write_csv_row(os, {name, text::format_double(t), text::format_double(e),
                             text::format_double(fit.se_robust[k]), text::format_double(z),
                             std::abs(z) <= 1.959963984540054 ? "1" : "0"});
  }
  return os.str();
}

std::shared_ptr<const SimulationDraws> draws_for(const ModelSpec& spec, std::size_t n_obs, const std::string& cache_dir) {
  if (!spec.has_latents()) return nullptr;
  const auto R = static_cast<std::size_t>(spec.draws);
  if (cache_dir.empty()) return make_draws(spec, n_obs);
  fs::create_directories(cache_dir);
  const auto file = (fs::path(cache_dir) / ("draws_" + std::to_string(n_obs) + "_" + std::to_string(R) + "_" +
                                            std::to_string(spec.seed) + "_" + std::string(to_string(spec.scheme)) +
                                            ".bin"))
                        .string();
  if (auto d = SimulationDraws::load(file, n_obs, R, kDrawDims, spec.seed, spec.scheme))
    return std::make_shared<const SimulationDraws>(std::move(*d));
  auto d = std::make_shared<const SimulationDraws>(
      SimulationDraws::generate(n_obs, R, kDrawDims, spec.seed, spec.scheme));
  d->save(file);
  return d;
}

// --- subcommands ----------------------------------------------------------

struct ImputeArgs {
  std::string speed, config, out;
};

void do_impute(const ImputeArgs& a, Manifest& m, std::ostream& out) {
  require_file(a.speed, "speed file");
  m.input(a.speed);
  imputer::ImputerConfig cfg;
  if (!a.config.empty()) {
    require_file(a.config, "imputer config");
    m.config(a.config);
    m.input(a.config);
    cfg = imputer::ImputerConfig::parse(text::read_file(a.config));
  }
  m.setting("brake_drop", cfg.thresholds.brake_drop, a.config.empty() ? "default" : "config");
  m.setting("decel_drop", cfg.thresholds.decel_drop, a.config.empty() ? "default" : "config");
  m.setting("accel_rise", cfg.thresholds.accel_rise, a.config.empty() ? "default" : "config");
  m.setting("wait_speed", cfg.thresholds.wait_speed, a.config.empty() ? "default" : "config");
  std::vector<std::pair<std::string, std::vector<imputer::WindowAction>>> all;
  std::size_t windows = 0;
  for (const auto& trace : imputer::read_speed_csv(a.speed)) {
    all.emplace_back(trace.individual_id, imputer::impute(trace, cfg));
    windows += all.back().second.size();
  }
  write_output(m, a.out, imputer::windows_to_csv(all));
  out << "imputed " << windows << " windows for " << all.size() << " individuals -> " << a.out << '\n';
}

struct DescribeArgs {
  std::string frames, individual, out, mock_dir, prompt_file, config;
  std::optional<std::size_t> frames_per_window, max_in_flight;
  std::optional<double> origin, budget, price_prompt, price_completion;
  std::optional<std::string> endpoint, model, api_key_env, fallback;
  std::optional<int> max_retries;
  bool exact_prompt = false;
};

void do_describe(const DescribeArgs& a, Manifest& m, std::ostream& out, std::ostream& err) {
  require_file(a.frames, "frame index");
  m.input(a.frames);
  m.config(a.config);
  Settings s(m, read_config(a.config));
  lvd::ClientConfig cc;
  cc.endpoint = s.get<std::string>("endpoint", a.endpoint, cc.endpoint);
  cc.model = s.get<std::string>("model", a.model, cc.model);
  cc.api_key_env = s.get<std::string>("api_key_env", a.api_key_env, cc.api_key_env);
  cc.max_in_flight = s.get<std::size_t>("max_in_flight", a.max_in_flight, cc.max_in_flight);
  cc.retry.max_retries = s.get<int>("max_retries", a.max_retries, cc.retry.max_retries);
  cc.pricing.prompt_per_1k = s.get<double>("price_prompt_per_1k", a.price_prompt, 0.0);
  cc.pricing.completion_per_1k = s.get<double>("price_completion_per_1k", a.price_completion, 0.0);
  const double budget = s.get<double>("budget", a.budget, 0.0);
  if (budget > 0.0) cc.budget = budget;
  const auto fpw = s.get<std::size_t>("frames_per_window", a.frames_per_window, 4);
  const auto fallback = s.get<std::string>("fallback", a.fallback, "reject");
  s.check_unused({"endpoint", "model", "api_key_env", "max_in_flight", "max_retries", "price_prompt_per_1k",
                  "price_completion_per_1k", "budget", "frames_per_window", "fallback"});
  lvd::ParseOptions po;
  if (fallback == "neutral") po.fallback = lvd::Fallback::neutral;
  else if (fallback != "reject") throw UsageError("--fallback must be reject or neutral");

  std::string prompt;
  if (!a.prompt_file.empty()) {
    require_file(a.prompt_file, "prompt file");
    m.input(a.prompt_file);
    prompt = text::read_file(a.prompt_file);
  } else {
    prompt = lvd::default_prompt(a.exact_prompt);
  }

  const auto extraction = lvd::extract_sequences(lvd::read_frame_index(a.frames), fpw, a.origin);
  for (auto w : extraction.empty_windows) err << "window " << w << ": no frames, skipped\n";
  m.note("empty_windows", extraction.empty_windows);

  std::vector<lvd::LvdRequest> reqs;
  std::vector<lvd::LvdRecord> meta;
  for (const auto& seq : extraction.sequences) {
    lvd::LvdRequest r;
    r.sequence_id = a.individual + "_w" + std::to_string(seq.window);
    r.prompt = prompt;
    lvd::LvdRecord rec;
    rec.sequence_id = r.sequence_id;
    rec.individual_id = a.individual;
    rec.window = seq.window;
    double lat = 0.0, lon = 0.0;
    std::size_t geo = 0;
    for (const auto& f : seq.frames) {
      r.images.push_back(lvd::encode_image_file(f.path));
      if (f.lat && f.lon) {
        lat += *f.lat;
        lon += *f.lon;
        ++geo;
      }
    }
    if (geo) {
      rec.lat = lat / static_cast<double>(geo);
      rec.lon = lon / static_cast<double>(geo);
    }
    reqs.push_back(std::move(r));
    meta.push_back(std::move(rec));
  }

  std::unique_ptr<lvd::Transport> transport;
  if (!a.mock_dir.empty()) {
    std::vector<std::string> fixtures;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(a.mock_dir))
      if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) fixtures.push_back(text::read_file(f.string()));
    if (fixtures.empty()) throw UsageError("mock directory '" + a.mock_dir + "' has no fixture files");
    m.setting("mock_dir", a.mock_dir, "flag");
    // Fixture choice depends only on the request body, so results do not
    // depend on dispatch order.
    transport = std::make_unique<lvd::MockTransport>([fixtures](const std::string& body) {
      const auto h = sha256_hex(body);
      const auto idx = std::stoull(h.substr(0, 12), nullptr, 16) % fixtures.size();
      return lvd::MockTransport::completion(fixtures[idx]);
    });
  } else {
    transport = std::make_unique<lvd::HttpTransport>();
  }
  lvd::LvdClient client(*transport, cc);
  const auto results = client.describe_batch(reqs);

  std::vector<lvd::LvdRecord> records;
  std::ostringstream diag;
  for (std::size_t i = 0; i < results.size(); ++i) {
    auto parsed = lvd::parse_response(results[i].text, po);
    for (const auto& d : parsed.diagnostics) diag << results[i].sequence_id << ": " << d.message << '\n';
    if (!parsed.record) {
      err << results[i].sequence_id << ": response rejected\n";
      continue;
    }
    auto rec = std::move(*parsed.record);
    rec.sequence_id = meta[i].sequence_id;
    rec.individual_id = meta[i].individual_id;
    rec.window = meta[i].window;
    rec.lat = meta[i].lat;
    rec.lon = meta[i].lon;
    records.push_back(std::move(rec));
  }
  for (const auto& line : client.log()) err << line << '\n';
  write_output(m, a.out, lvd::records_to_csv(records));
  write_output(m, a.out + ".diagnostics.txt", diag.str());
  m.note("cost", client.spent());
  m.note("usage", {{"prompt_tokens", client.total_usage().prompt_tokens},
                   {"completion_tokens", client.total_usage().completion_tokens}});
  out << records.size() << " of " << results.size() << " sequences described -> " << a.out << '\n';
}

struct JoinArgs {
  std::string panel, actions, covariates, rules, out;
};

void do_join(const JoinArgs& a, Manifest& m, std::ostream& out, std::ostream& err) {
  require_file(a.panel, "panel file");
  require_file(a.actions, "actions file");
  m.input(a.panel);
  m.input(a.actions);
  const auto ds = load_panel(a.panel);
  const auto table = text::read_csv(a.actions);
  const auto col = [&](std::string_view n) {
    auto c = table.column(n);
    if (!c) throw DataError("actions file lacks column '" + std::string(n) + "'");
    return *c;
  };
  struct Assigned {
    Action action;
    std::optional<double> magnitude;
  };
  std::map<std::pair<std::string, long long>, Assigned> actions;
  for (const auto& row : table.rows) {
    const auto w = text::parse_int(row[col("window_index")]);
    const auto act = parse_action(row[col("action")]);
    if (!w || !act) throw DataError("actions file: bad row for '" + row[col("individual_id")] + "'");
    Assigned as{*act, std::nullopt};
    const auto mag = [&](std::string_view c) { return text::parse_double(row[col(c)]); };
    if (*act == Action::accelerate) as.magnitude = mag("accel_mag");
    if (*act == Action::brake) as.magnitude = mag("brake_mag");
    if (*act == Action::decelerate) as.magnitude = mag("decel_mag");
    actions[{row[col("individual_id")], *w}] = as;
  }
  std::vector<ObservationRow> rows;
  std::size_t dropped = 0;
  for (auto row : ds.rows()) {
    const auto it = actions.find({row.individual_id, row.t});
    if (it == actions.end()) {
      ++dropped;
      continue;
    }
    row.action = it->second.action;
    row.action_magnitude = it->second.magnitude;
    rows.push_back(std::move(row));
  }
  if (dropped) err << dropped << " panel rows without an imputed action were dropped\n";
  PanelDataset joined(std::move(rows));
  if (!a.covariates.empty()) {
    require_file(a.covariates, "descriptor table");
    m.input(a.covariates);
    auto rules = lvd::default_rules();
    if (!a.rules.empty()) {
      require_file(a.rules, "rules file");
      m.input(a.rules);
      rules = lvd::parse_rules(text::read_file(a.rules));
    }
    lvd::JoinReport rep;
    joined = lvd::join_covariates(joined, lvd::records_from_csv(text::read_file(a.covariates)), &rep, rules);
    if (!rep.unmatched.empty()) err << rep.unmatched.size() << " rows have no descriptor record\n";
    m.note("descriptor_unmatched", rep.unmatched.size());
  }
  m.note("rows_dropped", dropped);
  write_output(m, a.out, serialize_panel(joined));
  out << joined.size() << " rows -> " << a.out << '\n';
}

struct EstimateArgs {
  std::string spec, data, out, config, truth, draws_cache;
  std::optional<int> draws, max_iterations;
  std::optional<std::uint64_t> seed, search_seed;
  std::optional<std::size_t> candidates, top_k;
  std::optional<double> perturbation, gtol;
  std::optional<unsigned> threads;
  std::optional<std::string> scheme, start;
  bool exclude_forced_stops = false;
};

void do_estimate(const EstimateArgs& a, Manifest& m, std::ostream& out) {
  require_file(a.spec, "spec file");
  require_file(a.data, "data file");
  m.input(a.spec);
  m.input(a.data);
  m.config(a.config);
  if (!a.config.empty()) m.input(a.config);
  Settings s(m, read_config(a.config));

  auto ds = load_panel(a.data);
  if (a.exclude_forced_stops) {
    auto ex = exclude_forced_stops(ds);
    m.note("forced_stops_removed", ex.removed);
    ds = std::move(ex.dataset);
  }
  auto spec = load_spec(a.spec, schema_for(ds));
  spec.draws = s.get<int>("draws", a.draws, spec.draws);
  spec.seed = s.get<std::uint64_t>("seed", a.seed, spec.seed);
  const auto scheme = s.get<std::string>("scheme", a.scheme, std::string(to_string(spec.scheme)));
  if (auto sc = parse_draw_scheme(scheme)) spec.scheme = *sc;
  else throw UsageError("unknown draw scheme '" + scheme + "'");
  if (spec.draws < 1) throw UsageError("draws must be at least 1");

  EstimationConfig cfg;
  cfg.search.n_candidates = s.get<std::size_t>("candidates", a.candidates, cfg.search.n_candidates);
  cfg.search.top_k = s.get<std::size_t>("top_k", a.top_k, cfg.search.top_k);
  cfg.search.perturbation = s.get<double>("perturbation", a.perturbation, cfg.search.perturbation);
  cfg.search.seed = s.get<std::uint64_t>("search_seed", a.search_seed, cfg.search.seed);
  cfg.max_iterations = s.get<int>("max_iterations", a.max_iterations, cfg.max_iterations);
  cfg.gtol = s.get<double>("gtol", a.gtol, cfg.gtol);
  cfg.threads = s.get<unsigned>("threads", a.threads, 1u);
  const auto start = s.get<std::string>("start", a.start, "heuristic");
  if (start == "spec") cfg.start = StartMode::spec;
  else if (start != "heuristic") throw UsageError("start must be heuristic or spec");
  s.check_unused({"draws", "seed", "scheme", "candidates", "top_k", "perturbation", "search_seed", "max_iterations",
                  "gtol", "threads", "start"});
  m.seed("draws", spec.seed);
  m.seed("search", cfg.search.seed);
  cfg.draws = draws_for(spec, ds.size(), a.draws_cache);

  const auto fit = estimate(ds, spec, cfg);
  fs::create_directories(a.out);
  const auto dir = fs::path(a.out);
  const auto rep = report(fit, spec);
  write_output(m, (dir / "report.txt").string(), rep);
  write_output(m, (dir / "results.txt").string(), format_results(fit, spec));
  write_output(m, (dir / "covariance.csv").string(), format_covariance(fit));
  if (!a.truth.empty()) {
    require_file(a.truth, "truth file");
    m.input(a.truth);
    const auto truth = apply_parameter_values(spec.parameters, parse_parameter_values(text::read_file(a.truth)));
    write_output(m, (dir / "recovery.csv").string(), recovery_table(fit, truth));
  }
  m.note("converged", fit.converged);
  m.write((dir / "manifest.json").string());
  out << rep;
}

struct SimulateArgs {
  std::string spec, params, config, out;
  std::optional<std::uint64_t> seed;
  bool exclude_forced_stops = false;
};

void do_simulate(const SimulateArgs& a, Manifest& m, std::ostream& out) {
  require_file(a.spec, "spec file");
  require_file(a.params, "parameter file");
  require_file(a.config, "generator config");
  m.input(a.spec);
  m.input(a.params);
  m.input(a.config);
  m.config(a.config);
  const auto spec = parse_spec(text::read_file(a.spec), schema_for_text(text::read_file(a.spec)));
  const auto pv = apply_parameter_values(spec.parameters, parse_parameter_values(text::read_file(a.params)));
  auto cfg = GeneratorConfig::load(a.config);
  if (a.seed) cfg.seed = *a.seed;
  m.setting("seed", cfg.seed, a.seed ? "flag" : "config");
  m.seed("generator", cfg.seed);
  auto ds = simulate_dataset(spec, pv, cfg);
  if (a.exclude_forced_stops) {
    auto ex = exclude_forced_stops(ds);
    m.note("forced_stops_removed", ex.removed);
    ds = std::move(ex.dataset);
  }
  write_output(m, a.out, serialize_panel(ds));
  out << ds.size() << " rows for " << ds.individuals().size() << " individuals -> " << a.out << '\n';
}

struct ReportArgs {
  std::string spec, results, out;
};

void do_report(const ReportArgs& a, Manifest& m, std::ostream& out) {
  require_file(a.spec, "spec file");
  require_file(a.results, "results file");
  m.input(a.spec);
  m.input(a.results);
  const auto spec = parse_spec(text::read_file(a.spec), schema_for_text(text::read_file(a.spec)));
  const auto rep = report(read_results(a.results, spec), spec);
  if (!a.out.empty()) write_output(m, a.out, rep);
  out << rep;
}

struct HeatmapArgs {
  std::string records, variable, rules, out;
  double cell_size = 50.0;
};

void do_heatmap(const HeatmapArgs& a, Manifest& m, std::ostream& out) {
  require_file(a.records, "descriptor table");
  m.input(a.records);
  auto rules = lvd::default_rules();
  if (!a.rules.empty()) {
    require_file(a.rules, "rules file");
    m.input(a.rules);
    rules = lvd::parse_rules(text::read_file(a.rules));
  }
  const auto recs = lvd::records_from_csv(text::read_file(a.records));
  const auto r = lvd::heatmap(recs, a.variable, a.cell_size, rules);
  write_output(m, a.out + ".asc", lvd::raster_to_ascii_grid(r));
  write_output(m, a.out + ".json", lvd::raster_sidecar(r, a.variable));
  out << r.flagged << " flagged records in " << r.nrows << "x" << r.ncols << " cells -> " << a.out << ".asc\n";
}

}  // namespace

std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 computation failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return os.str();
}

std::string sha256_file(const std::string& path) { return sha256_hex(text::read_file(path)); }

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Integrated choice and latent variable models for cyclist actions", "iclv"};
  app.require_subcommand(1, 1);
  app.set_version_flag("--version", std::string(kVersion));

  ImputeArgs ia;
  auto* impute = app.add_subcommand("impute", "Classify 5 s windows of speed traces into actions");
  impute->add_option("--speed", ia.speed, "CSV with individual_id,timestamp,speed")->required();
  impute->add_option("--thresholds,--config", ia.config, "Imputer thresholds and corrections");
  impute->add_option("--out", ia.out, "Output window CSV")->required();

  DescribeArgs da;
  auto* describe = app.add_subcommand("describe-video", "Describe frame sequences with a vision-language model");
  describe->add_option("--frames", da.frames, "Frame index CSV: path,timestamp[,lat,lon]")->required();
  describe->add_option("--individual", da.individual, "Individual identifier for the trace")->required();
  describe->add_option("--out", da.out, "Output descriptor table")->required();
  describe->add_option("--mock", da.mock_dir, "Answer from fixture files instead of the network");
  describe->add_option("--config", da.config, "key = value client settings");
  describe->add_option("--prompt-file", da.prompt_file, "Replace the built-in prompt");
  describe->add_flag("--exact-prompt", da.exact_prompt, "Send the instructions without the answer-format suffix");
  describe->add_option("--frames-per-window", da.frames_per_window);
  describe->add_option("--origin", da.origin, "Trace start in seconds (default: first frame)");
  describe->add_option("--endpoint", da.endpoint);
  describe->add_option("--model", da.model);
  describe->add_option("--api-key-env", da.api_key_env);
  describe->add_option("--max-in-flight", da.max_in_flight);
  describe->add_option("--max-retries", da.max_retries);
  describe->add_option("--budget", da.budget, "Abort before exceeding this cost");
  describe->add_option("--price-prompt", da.price_prompt, "Cost per 1000 prompt tokens");
  describe->add_option("--price-completion", da.price_completion, "Cost per 1000 completion tokens");
  describe->add_option("--fallback", da.fallback, "reject or neutral");

  JoinArgs ja;
  auto* join = app.add_subcommand("join", "Attach imputed actions and descriptor covariates to a panel");
  join->add_option("--panel", ja.panel)->required();
  join->add_option("--actions", ja.actions, "Window CSV from impute")->required();
  join->add_option("--covariates", ja.covariates, "Descriptor table from describe-video");
  join->add_option("--rules", ja.rules, "Covariate rules replacing the defaults");
  join->add_option("--out", ja.out)->required();

  EstimateArgs ea;
  auto* est = app.add_subcommand("estimate", "Maximum simulated likelihood estimation");
  est->add_option("--spec", ea.spec)->required();
  est->add_option("--data", ea.data)->required();
  est->add_option("--out", ea.out, "Output directory")->required();
  est->add_option("--config", ea.config, "key = value estimation settings");
  est->add_option("--draws", ea.draws, "Simulation draws per observation");
  est->add_option("--seed", ea.seed, "Seed of the simulation draws");
  est->add_option("--scheme", ea.scheme, "halton or pseudo_random");
  est->add_option("--candidates", ea.candidates, "Multi-start candidates");
  est->add_option("--top-k", ea.top_k, "Candidates refined after pre-optimization");
  est->add_option("--perturbation", ea.perturbation, "Half-width of the start box");
  est->add_option("--search-seed", ea.search_seed);
  est->add_option("--max-iterations", ea.max_iterations);
  est->add_option("--gtol", ea.gtol);
  est->add_option("--threads", ea.threads);
  est->add_option("--start", ea.start, "heuristic or spec");
  est->add_option("--truth", ea.truth, "True parameter values; writes recovery.csv");
  est->add_option("--draws-cache", ea.draws_cache, "Directory for cached draws");
  est->add_flag("--exclude-forced-stops", ea.exclude_forced_stops);

  SimulateArgs sa;
  auto* sim = app.add_subcommand("simulate", "Generate a synthetic panel from a parameterized model");
  sim->add_option("--spec", sa.spec)->required();
  sim->add_option("--params", sa.params)->required();
  sim->add_option("--config", sa.config, "Generator configuration")->required();
  sim->add_option("--out", sa.out)->required();
  sim->add_option("--seed", sa.seed);
  sim->add_flag("--exclude-forced-stops", sa.exclude_forced_stops);

  ReportArgs ra;
  auto* rep = app.add_subcommand("report", "Print an estimation table from a results file");
  rep->add_option("--spec", ra.spec)->required();
  rep->add_option("--results", ra.results)->required();
  rep->add_option("--out", ra.out);

  HeatmapArgs ha;
  auto* heat = app.add_subcommand("heatmap", "Rasterize descriptor covariates");
  heat->add_option("--records", ha.records)->required();
  heat->add_option("--variable", ha.variable)->required();
  heat->add_option("--cell-size", ha.cell_size, "Cell size in meters");
  heat->add_option("--rules", ha.rules);
  heat->add_option("--out", ha.out, "Output prefix")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    if (code != 0) err << app.help();
    return code == 0 ? 0 : 2;
  }

  const auto* sub = app.get_subcommands().front();
  Manifest m(sub->get_name(), argc, argv);
  try {
    if (sub == impute) {
      do_impute(ia, m, out);
      m.write(ia.out + ".manifest.json");
    } else if (sub == describe) {
      do_describe(da, m, out, err);
      m.write(da.out + ".manifest.json");
    } else if (sub == join) {
      do_join(ja, m, out, err);
      m.write(ja.out + ".manifest.json");
    } else if (sub == est) {
      do_estimate(ea, m, out);
    } else if (sub == sim) {
      do_simulate(sa, m, out);
      m.write(sa.out + ".manifest.json");
    } else if (sub == rep) {
      do_report(ra, m, out);
      if (!ra.out.empty()) m.write(ra.out + ".manifest.json");
    } else if (sub == heat) {
      do_heatmap(ha, m, out);
      m.write(ha.out + ".manifest.json");
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace iclv::cli
