#include "iclv/lvd.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <numbers>
#include <set>
#include <sstream>

#include "json.hpp"

#include "iclv/error.hpp"
#include "iclv/text.hpp"

namespace iclv::lvd {

namespace {

using Getter = std::function<int(const LvdRecord&)>;
using Setter = std::function<void(LvdRecord&, int)>;

struct FieldDef {
  std::string name;                 // canonical snake name
  std::string key;                  // rendered key
  std::vector<std::string> vocab;   // empty: free text or token list
  int neutral = 0;
  std::vector<std::string> aliases; // normalized key forms
  Getter get;
  Setter set;
};

const std::vector<std::string> kProximityVocab = {"High", "Medium", "Low", "Not present"};

template <class E, class M>
FieldDef categorical(std::string name, std::string key, std::vector<std::string> vocab, E neutral,
                     std::vector<std::string> aliases, M LvdRecord::*member) {
  FieldDef f;
  f.name = std::move(name);
  f.key = std::move(key);
  f.vocab = std::move(vocab);
  f.neutral = static_cast<int>(neutral);
  f.aliases = std::move(aliases);
  f.get = [member](const LvdRecord& r) { return static_cast<int>(r.*member); };
  f.set = [member](LvdRecord& r, int i) { r.*member = static_cast<M>(i); };
  return f;
}

std::string capitalize(std::string_view s) {
  std::string out(s);
  if (!out.empty()) out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
  return out;
}

std::string normalize_key(std::string_view s) {
  std::string out;
  for (char c : s)
    if (std::isalnum(static_cast<unsigned char>(c))) out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string normalize_value(std::string_view s) {
  std::string out;
  bool space = false;
  for (char c : s) {
    if (c == '_' || c == '-' || std::isspace(static_cast<unsigned char>(c))) {
      space = !out.empty();
      continue;
    }
    if (space) out += ' ';
    space = false;
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  while (!out.empty() && out.back() == '.') out.pop_back();
  return out;
}

// Strips quotes, markdown emphasis and trailing separators.
std::string clean(std::string_view s) {
  std::string v(text::trim(s));
  for (const char* mark : {"**", "__", "`"}) {
    for (auto p = v.find(mark); p != std::string::npos; p = v.find(mark)) v.erase(p, std::char_traits<char>::length(mark));
  }
  v = std::string(text::trim(v));
  while (!v.empty() && (v.back() == ',' || v.back() == ';')) v.pop_back();
  v = std::string(text::trim(v));
  if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'') && v.back() == v.front()) v = v.substr(1, v.size() - 2);
  return std::string(text::trim(v));
}

const std::vector<FieldDef>& fields() {
  static const std::vector<FieldDef> defs = [] {
    std::vector<FieldDef> d;
    d.push_back(categorical("lane_type", "LaneType", {"dedicated", "shared", "does not exist"}, LaneType::does_not_exist,
                            {"lanetype", "bicyclelanetype", "biketype", "bikelanetype"}, &LvdRecord::lane_type));
    d.push_back(categorical("separation", "Separation", {"Physical", "visual", "none"}, Separation::none,
                            {"separation", "typeofbicyclelaneseparation", "bicyclelaneseparation", "laneseparation",
                             "typeofseparation"},
                            &LvdRecord::separation));
    d.push_back(categorical("traffic_signal", "TrafficSignal", {"Green", "Red", "Not identifiable", "Not present"},
                            TrafficSignal::not_identifiable, {"trafficsignal", "trafficlight"},
                            &LvdRecord::traffic_signal));
    FieldDef signage;
    signage.name = "signage";
    signage.key = "Signage";
    signage.aliases = {"signage", "signs", "trafficsigns"};
    d.push_back(signage);
    for (std::size_t i = 0; i < kVehicles.size(); ++i) {
      FieldDef f;
      f.name = "vehicle_proximity." + std::string(kVehicles[i]);
      f.key = "VehicleProximity." + capitalize(kVehicles[i]);
      f.vocab = kProximityVocab;
      f.neutral = static_cast<int>(Proximity::not_present);
      f.aliases = {"vehicleproximity" + std::string(kVehicles[i])};
      f.get = [i](const LvdRecord& r) { return static_cast<int>(r.vehicle_proximity[i]); };
      f.set = [i](LvdRecord& r, int v) { r.vehicle_proximity[i] = static_cast<Proximity>(v); };
      d.push_back(f);
    }
    for (std::size_t i = 0; i < kPedestrians.size(); ++i) {
      FieldDef f;
      f.name = "pedestrian_proximity." + std::string(kPedestrians[i]);
      f.key = "PedestrianProximity." + capitalize(kPedestrians[i]);
      f.vocab = kProximityVocab;
      f.neutral = static_cast<int>(Proximity::not_present);
      f.aliases = {"pedestrianproximity" + std::string(kPedestrians[i])};
      f.get = [i](const LvdRecord& r) { return static_cast<int>(r.pedestrian_proximity[i]); };
      f.set = [i](LvdRecord& r, int v) { r.pedestrian_proximity[i] = static_cast<Proximity>(v); };
      d.push_back(f);
    }
    d.push_back(categorical("road_condition", "RoadCondition", {"good", "fair", "poor"}, Quality::fair,
                            {"roadcondition"}, &LvdRecord::road_condition));
    d.push_back(categorical("potholes", "Potholes", {"present", "not present"}, Presence::not_present,
                            {"potholes", "presenceofpotholes"}, &LvdRecord::potholes));
    d.push_back(categorical("pedestrian_activity", "PedestrianActivity", {"High", "Medium", "Low"}, Level::low,
                            {"pedestrianactivity"}, &LvdRecord::pedestrian_activity));
    d.push_back(categorical("obstructions", "Obstructions", {"Present", "Not present"}, Presence::not_present,
                            {"obstructions", "obstruction"}, &LvdRecord::obstructions));
    d.push_back(categorical("weather", "WeatherCondition", {"Sunny", "Cloudy"}, Weather::sunny,
                            {"weathercondition", "weather"}, &LvdRecord::weather));
    d.push_back(categorical("stress_level", "CyclistStressLevel", {"High", "Medium", "Low"}, Level::medium,
                            {"cycliststresslevel", "stresslevel"}, &LvdRecord::stress_level));
    FieldDef description;
    description.name = "stress_description";
    description.key = "StressLevelDescription";
    description.aliases = {"stressleveldescription", "stressdescription"};
    d.push_back(description);
    d.push_back(categorical("special_events", "SpecialEvents", {"Present", "Not present"}, Presence::not_present,
                            {"specialevents", "specialevent"}, &LvdRecord::special_events));
    d.push_back(categorical("road_works", "RoadWorks", {"Present", "Not present"}, Presence::not_present,
                            {"roadworks", "roadwork"}, &LvdRecord::road_works));
    d.push_back(categorical("other_cyclists", "OtherCyclists", kProximityVocab, Proximity::not_present,
                            {"othercyclists", "presenceofothercyclists"}, &LvdRecord::other_cyclists));
    d.push_back(categorical("cyclist_infrastructure", "CyclistInfrastructure", {"good", "fair", "poor"}, Quality::fair,
                            {"cyclistinfrastructure", "bikelanequality"}, &LvdRecord::cyclist_infrastructure));
    for (auto& f : d) {
      f.aliases.push_back(normalize_key(f.name));
      f.aliases.push_back(normalize_key(f.key));
    }
    return d;
  }();
  return defs;
}

const FieldDef* find_field(std::string_view name) {
  for (const auto& f : fields())
    if (f.name == name) return &f;
  return nullptr;
}

const FieldDef* field_by_key(const std::string& normalized) {
  for (const auto& f : fields())
    if (std::find(f.aliases.begin(), f.aliases.end(), normalized) != f.aliases.end()) return &f;
  return nullptr;
}

std::optional<int> vocab_index(const FieldDef& f, std::string_view value) {
  const auto v = normalize_value(value);
  for (std::size_t i = 0; i < f.vocab.size(); ++i)
    if (normalize_value(f.vocab[i]) == v) return static_cast<int>(i);
  return std::nullopt;
}

std::vector<std::string> parse_signage(std::string_view value) {
  std::vector<std::string> out;
  std::string token;
  const auto flush = [&] {
    auto t = text::to_lower(clean(token));
    if (!t.empty()) out.push_back(t);
    token.clear();
  };
  for (char c : value) {
    if (c == ',' || c == ';') flush();
    else token += c;
  }
  flush();
  if (out.size() == 1 && out[0] == "none") out.clear();
  return out;
}

std::string join_signage(const std::vector<std::string>& s) {
  if (s.empty()) return "none";
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? ", " : "") + s[i];
  return out;
}

enum class Group { none, vehicle, pedestrian };

Group header_of(const std::string& k) {
  if (k == "vehicleproximity" || k == "vehicles" || k == "proximityofvehicles" || k == "typeofnearbyvehicles" ||
      k == "typeofnearbyvehicle" || k == "nearbyvehicles")
    return Group::vehicle;
  if (k == "pedestrianproximity" || k == "typeofnearbypedestrian" || k == "typeofnearbypedestrians" ||
      k == "nearbypedestrians")
    return Group::pedestrian;
  return Group::none;
}

std::optional<std::string> nested_field(Group g, const std::string& sub) {
  const auto& names = g == Group::vehicle ? kVehicles : kPedestrians;
  for (auto n : names)
    if (sub == n) return std::string(g == Group::vehicle ? "vehicle_proximity." : "pedestrian_proximity.") + std::string(n);
  return std::nullopt;
}

std::string strip_bullet(std::string_view line) {
  std::string s(text::trim(line));
  while (!s.empty() && (s[0] == '-' || s[0] == '*' || s[0] == '+' || s[0] == '>')) {
    if (s.size() > 1 && s[0] == '*' && s[1] == '*') break;  // bold marker, not a bullet
    s = std::string(text::trim(std::string_view(s).substr(1)));
  }
  // Numbered items: "12. Field: value" or "3) Field: value".
  std::size_t d = 0;
  while (d < s.size() && std::isdigit(static_cast<unsigned char>(s[d]))) ++d;
  if (d > 0 && d < s.size() && (s[d] == '.' || s[d] == ')')) s = std::string(text::trim(std::string_view(s).substr(d + 1)));
  return s;
}

struct Collected {
  std::map<std::string, std::string> values;  // field -> raw value
  std::vector<Diagnostic> diagnostics;
};

void collect(Collected& c, const std::string& field, const std::string& value) {
  auto [it, inserted] = c.values.emplace(field, value);
  if (inserted) return;
  const auto* f = find_field(field);
  const bool same = f && !f->vocab.empty() ? normalize_value(it->second) == normalize_value(value) : it->second == value;
  if (!same)
    c.diagnostics.push_back({Diagnostic::Kind::duplicate, field, value,
                             field + ": conflicting second value '" + value + "' ignored"});
}

std::string csv_number(const std::optional<double>& v) { return v ? text::format_double(*v) : ""; }

}  // namespace

const std::vector<std::string>& field_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& f : fields()) n.push_back(f.name);
    return n;
  }();
  return names;
}

std::string field_value(const LvdRecord& r, std::string_view field) {
  const auto* f = find_field(field);
  if (!f) throw DataError("unknown descriptor field '" + std::string(field) + "'");
  if (f->name == "signage") return join_signage(r.signage);
  if (f->name == "stress_description") return r.stress_description;
  return f->vocab[static_cast<std::size_t>(f->get(r))];
}

std::vector<std::string> vocabulary(std::string_view field) {
  const auto* f = find_field(field);
  if (!f) throw DataError("unknown descriptor field '" + std::string(field) + "'");
  return f->vocab;
}

std::string_view to_string(Diagnostic::Kind k) {
  switch (k) {
    case Diagnostic::Kind::no_fields: return "no-fields";
    case Diagnostic::Kind::missing: return "missing";
    case Diagnostic::Kind::out_of_vocabulary: return "out-of-vocabulary";
    case Diagnostic::Kind::duplicate: return "duplicate";
  }
  return "";
}

ParseResult parse_response(std::string_view body, const ParseOptions& options) {
  Collected c;
  Group group = Group::none;
  std::string last_field;
  std::istringstream in{std::string(body)};
  std::string line;
  while (std::getline(in, line)) {
    const auto s = strip_bullet(line);
    const auto colon = s.find(':');
    if (colon == std::string::npos) {
      // Continuation of a free-text description.
      const auto more = clean(s);
      if (last_field == "stress_description" && !more.empty()) {
        auto& v = c.values["stress_description"];
        v += (v.empty() ? "" : " ") + more;
      }
      continue;
    }
    const auto key = normalize_key(clean(s.substr(0, colon)));
    const auto value = clean(s.substr(colon + 1));
    if (key.empty()) continue;

    if (const auto g = header_of(key); g != Group::none) {
      if (value.empty()) {
        group = g;
        last_field.clear();
        continue;
      }
      // Inline form: `VehicleProximity: Car: High, Truck: Low`.
      bool any = false;
      for (const auto& part : text::split(value, ',')) {
        const auto p = part.find(':');
        if (p == std::string::npos) continue;
        if (auto f = nested_field(g, normalize_key(part.substr(0, p)))) {
          collect(c, *f, clean(part.substr(p + 1)));
          any = true;
        }
      }
      if (any) continue;
    }
    if (group != Group::none) {
      if (auto f = nested_field(group, key)) {
        collect(c, *f, value);
        last_field = *f;
        continue;
      }
      group = Group::none;
    }
    if (const auto* f = field_by_key(key)) {
      collect(c, f->name, value);
      last_field = f->name;
    } else {
      last_field.clear();
    }
  }

  ParseResult result;
  result.diagnostics = std::move(c.diagnostics);
  if (c.values.empty()) {
    result.diagnostics.push_back({Diagnostic::Kind::no_fields, "", "", "no fields found"});
    return result;
  }

  LvdRecord r;
  for (const auto& f : fields()) {
    const auto it = c.values.find(f.name);
    if (it == c.values.end()) {
      result.diagnostics.push_back({Diagnostic::Kind::missing, f.name, "", f.name + ": missing"});
      if (!f.vocab.empty()) f.set(r, f.neutral);
      continue;
    }
    if (f.name == "signage") {
      r.signage = parse_signage(it->second);
    } else if (f.name == "stress_description") {
      r.stress_description = it->second;
    } else if (auto idx = vocab_index(f, it->second)) {
      f.set(r, *idx);
    } else {
      result.diagnostics.push_back({Diagnostic::Kind::out_of_vocabulary, f.name, it->second,
                                    f.name + ": out-of-vocabulary value '" + it->second + "'"});
      f.set(r, f.neutral);
    }
  }
  if (result.diagnostics.empty() || options.fallback == Fallback::neutral) result.record = std::move(r);
  return result;
}

std::string render(const LvdRecord& r) {
  std::string out;
  for (const auto& f : fields()) out += f.key + ": " + field_value(r, f.name) + '\n';
  return out;
}

std::string default_prompt(bool exact) {
  std::string p(base_prompt());
  if (exact) return p;
  p += "\nResponse format: answer with exactly one line per characteristic in the form `Field: value`, "
       "using these field names and only the listed values:\n";
  for (const auto& f : fields()) {
    p += f.key + ": ";
    if (f.name == "signage")
      p += "comma-separated list of observed signs, or none";
    else if (f.name == "stress_description")
      p += "one sentence";
    else
      for (std::size_t i = 0; i < f.vocab.size(); ++i) p += (i ? " | " : "") + f.vocab[i];
    p += '\n';
  }
  return p;
}

std::vector<CovariateRule> parse_rules(std::string_view document) {
  std::vector<CovariateRule> rules;
  for (const auto& kv : text::parse_key_values(document)) {
    CovariateRule rule;
    rule.name = kv.key;
    for (const auto& part : text::split(kv.value, '|')) {
      const auto p = part.find(':');
      if (p == std::string::npos)
        throw DataError("rule '" + kv.key + "' line " + std::to_string(kv.line) + ": expected field:value");
      auto field = std::string(text::trim(part.substr(0, p)));
      auto value = std::string(text::trim(part.substr(p + 1)));
      const bool wildcard = field.size() > 2 && field.ends_with(".*");
      if (wildcard) {
        const auto group = field.substr(0, field.size() - 2);
        if (group != "vehicle_proximity" && group != "pedestrian_proximity")
          throw DataError("rule '" + kv.key + "': wildcard only applies to proximity groups");
        if (!vocab_index(*find_field("vehicle_proximity.car"), value))
          throw DataError("rule '" + kv.key + "': value '" + value + "' is not a proximity level");
      } else {
        const auto* f = find_field(field);
        if (!f) throw DataError("rule '" + kv.key + "': unknown field '" + field + "'");
        if (!f->vocab.empty() && !vocab_index(*f, value))
          throw DataError("rule '" + kv.key + "': value '" + value + "' not in the vocabulary of " + field);
      }
      rule.conditions.emplace_back(std::move(field), std::move(value));
    }
    rules.push_back(std::move(rule));
  }
  return rules;
}

const std::vector<CovariateRule>& default_rules() {
  static const std::vector<CovariateRule> rules = parse_rules(
      "high_vehicular_activity = vehicle_proximity.*:High\n"
      "bad_infrastructure = cyclist_infrastructure:poor\n"
      "red_light = traffic_signal:Red\n"
      "stressful_situation = stress_level:High | special_events:Present\n"
      "cloudy = weather:Cloudy\n"
      "route_bad_condition = road_condition:poor\n"
      "high_pedestrians_activity = pedestrian_activity:High | pedestrian_proximity.*:High\n"
      "high_cyclists_activity = other_cyclists:High\n");
  return rules;
}

CovariateGroup to_covariates(const LvdRecord& r, const std::vector<CovariateRule>& rules) {
  CovariateGroup g;
  const auto holds = [&](const std::string& field, const std::string& value) {
    if (field.ends_with(".*")) {
      const auto group = field.substr(0, field.size() - 2);
      const auto& members = group == "vehicle_proximity" ? kVehicles : kPedestrians;
      for (auto m : members)
        if (normalize_value(field_value(r, group + "." + std::string(m))) == normalize_value(value)) return true;
      return false;
    }
    if (field == "signage")
      return std::find(r.signage.begin(), r.signage.end(), text::to_lower(value)) != r.signage.end();
    return normalize_value(field_value(r, field)) == normalize_value(value);
  };
  for (const auto& rule : rules) {
    bool on = false;
    for (const auto& [field, value] : rule.conditions) on = on || holds(field, value);
    g[rule.name] = on ? 1.0 : 0.0;
  }
  return g;
}

std::vector<CovariateGroup> to_covariates(const std::vector<LvdRecord>& records, const std::vector<CovariateRule>& rules) {
  std::vector<CovariateGroup> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(to_covariates(r, rules));
  return out;
}

PanelDataset join_covariates(const PanelDataset& ds, const std::vector<LvdRecord>& records, JoinReport* report,
                             const std::vector<CovariateRule>& rules) {
  std::map<std::pair<std::string, long long>, const LvdRecord*> index;
  for (const auto& r : records) index.emplace(std::make_pair(r.individual_id, r.window), &r);
  JoinReport rep;
  std::vector<ObservationRow> rows = ds.rows();
  for (auto& row : rows) {
    const auto it = index.find({row.individual_id, row.t});
    if (it == index.end()) {
      rep.unmatched.push_back(row.individual_id + " t=" + std::to_string(row.t));
      continue;
    }
    ++rep.matched;
    for (const auto& [k, v] : to_covariates(*it->second, rules)) row.gpt[k] = v;
  }
  if (report) *report = std::move(rep);
  return PanelDataset(std::move(rows));
}

std::string records_to_csv(const std::vector<LvdRecord>& records) {
  std::ostringstream os;
  std::vector<std::string> header{"sequence_id", "individual_id", "window", "lat", "lon"};
  header.insert(header.end(), field_names().begin(), field_names().end());
  text::write_csv_row(os, header);
  for (const auto& r : records) {
    std::vector<std::string> row{r.sequence_id, r.individual_id, std::to_string(r.window), csv_number(r.lat),
                                 csv_number(r.lon)};
    for (const auto& f : field_names()) row.push_back(field_value(r, f));
    text::write_csv_row(os, row);
  }
  return os.str();
}

std::vector<LvdRecord> records_from_csv(std::string_view csv) {
  const auto table = text::parse_csv(csv);
  const auto col = [&](std::string_view name) {
    auto c = table.column(name);
    if (!c) throw DataError("descriptor table lacks column '" + std::string(name) + "'");
    return *c;
  };
  std::vector<LvdRecord> out;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    const auto where = "descriptor row " + std::to_string(i + 1);
    LvdRecord r;
    r.sequence_id = row[col("sequence_id")];
    r.individual_id = row[col("individual_id")];
    const auto w = text::parse_int(row[col("window")]);
    if (!w) throw DataError(where + ": bad window index");
    r.window = *w;
    for (auto [name, target] : {std::pair{"lat", &r.lat}, std::pair{"lon", &r.lon}}) {
      const auto& cell = row[col(name)];
      if (cell.empty()) continue;
      auto v = text::parse_double(cell);
      if (!v) throw DataError(where + ": bad " + name);
      *target = *v;
    }
    for (const auto& f : fields()) {
      const auto& cell = row[col(f.name)];
      if (f.name == "signage") {
        r.signage = parse_signage(cell);
      } else if (f.name == "stress_description") {
        r.stress_description = cell;
      } else if (auto idx = vocab_index(f, cell)) {
        f.set(r, *idx);
      } else {
        throw DataError(where + ": " + f.name + " value '" + cell + "' out of vocabulary");
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

SequenceExtraction extract_sequences(std::vector<FrameFile> frames, std::size_t frames_per_window,
                                     std::optional<double> origin, double window_s) {
  if (frames_per_window == 0) throw DataError("frames_per_window must be at least 1");
  if (!(window_s > 0.0)) throw DataError("window length must be positive");
  SequenceExtraction out;
  if (frames.empty()) return out;
  std::stable_sort(frames.begin(), frames.end(),
                   [](const FrameFile& a, const FrameFile& b) { return a.timestamp < b.timestamp; });
  std::vector<double> gaps;
  for (std::size_t i = 1; i < frames.size(); ++i)
    if (frames[i].timestamp > frames[i - 1].timestamp) gaps.push_back(frames[i].timestamp - frames[i - 1].timestamp);
  double period = 0.0;
  if (!gaps.empty()) {
    std::nth_element(gaps.begin(), gaps.begin() + static_cast<std::ptrdiff_t>(gaps.size() / 2), gaps.end());
    period = gaps[gaps.size() / 2];
  }
  const double t0 = origin.value_or(frames.front().timestamp);

  std::map<long long, std::vector<FrameFile>> by_window;
  for (auto& f : frames) {
    double offset = f.timestamp - t0;
    if (period > 0.0) offset = std::round(offset / period) * period;
    const auto w = static_cast<long long>(std::floor(offset / window_s + 1e-9));
    by_window[w].push_back(std::move(f));
  }
  for (auto& [w, list] : by_window) {
    ImageSequence seq;
    seq.window = w;
    const std::size_t n = list.size();
    if (n <= frames_per_window) {
      seq.frames = std::move(list);
    } else {
      for (std::size_t i = 0; i < frames_per_window; ++i) {
        const auto idx = static_cast<std::size_t>((static_cast<double>(i) + 0.5) * static_cast<double>(n) /
                                                  static_cast<double>(frames_per_window));
        seq.frames.push_back(list[std::min(idx, n - 1)]);
      }
    }
    out.sequences.push_back(std::move(seq));
  }
  const auto first = by_window.begin()->first;
  const auto last = by_window.rbegin()->first;
  for (auto w = first; w <= last; ++w)
    if (!by_window.count(w)) out.empty_windows.push_back(w);
  return out;
}

std::vector<FrameFile> read_frame_index(const std::string& path) {
  const auto table = text::read_csv(path);
  const auto p = table.column("path");
  const auto t = table.column("timestamp");
  if (!p || !t) throw DataError("frame index '" + path + "' needs path and timestamp columns");
  const auto lat = table.column("lat");
  const auto lon = table.column("lon");
  const auto base = std::filesystem::path(path).parent_path();
  std::vector<FrameFile> out;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    FrameFile f;
    std::filesystem::path fp(row[*p]);
    f.path = fp.is_absolute() ? fp.string() : (base / fp).string();
    const auto ts = text::parse_double(row[*t]);
    if (!ts) throw DataError(path + " row " + std::to_string(i + 1) + ": bad timestamp");
    f.timestamp = *ts;
    if (lat && lon && !row[*lat].empty() && !row[*lon].empty()) {
      f.lat = text::parse_double(row[*lat]);
      f.lon = text::parse_double(row[*lon]);
    }
    out.push_back(std::move(f));
  }
  return out;
}

double Raster::total() const {
  double s = 0.0;
  for (double c : counts) s += c;
  return s;
}

Raster heatmap(const std::vector<LvdRecord>& records, std::string_view variable, double cell_size_m,
               const std::vector<CovariateRule>& rules) {
  const auto rule = std::find_if(rules.begin(), rules.end(), [&](const CovariateRule& r) { return r.name == variable; });
  if (rule == rules.end()) {
    std::string names;
    for (const auto& r : rules) names += (names.empty() ? "" : ", ") + r.name;
    throw DataError("unknown heatmap variable '" + std::string(variable) + "'; valid names: " + names);
  }
  if (!(cell_size_m > 0.0)) throw DataError("cell size must be positive");

  constexpr double kEarthRadius = 6371008.8;
  constexpr double kDeg = std::numbers::pi / 180.0;
  Raster r;
  r.cell_size_m = cell_size_m;
  double min_lat = 0, max_lat = 0, min_lon = 0, max_lon = 0;
  bool any = false;
  for (const auto& rec : records) {
    if (!rec.lat || !rec.lon) continue;
    if (!any) {
      min_lat = max_lat = *rec.lat;
      min_lon = max_lon = *rec.lon;
      any = true;
    }
    min_lat = std::min(min_lat, *rec.lat);
    max_lat = std::max(max_lat, *rec.lat);
    min_lon = std::min(min_lon, *rec.lon);
    max_lon = std::max(max_lon, *rec.lon);
  }
  if (!any) {
    r.skipped_without_coordinates = records.size();
    return r;
  }
  r.origin_lat = min_lat;
  r.origin_lon = min_lon;
  r.ref_lat = 0.5 * (min_lat + max_lat);
  const double kx = std::cos(r.ref_lat * kDeg) * kEarthRadius * kDeg;
  const double ky = kEarthRadius * kDeg;
  const auto cell = [&](double lat, double lon) {
    return std::pair{static_cast<std::size_t>(std::floor((lat - min_lat) * ky / cell_size_m)),
                     static_cast<std::size_t>(std::floor((lon - min_lon) * kx / cell_size_m))};
  };
  const auto [max_row, max_col] = cell(max_lat, max_lon);
  r.nrows = max_row + 1;
  r.ncols = max_col + 1;
  r.counts.assign(r.nrows * r.ncols, 0.0);
  const std::vector<CovariateRule> one{*rule};
  for (const auto& rec : records) {
    if (to_covariates(rec, one).begin()->second == 0.0) continue;
    if (!rec.lat || !rec.lon) {
      ++r.skipped_without_coordinates;
      continue;
    }
    const auto [row, col] = cell(*rec.lat, *rec.lon);
    r.counts[row * r.ncols + col] += 1.0;
    ++r.flagged;
  }
  return r;
}

std::string raster_to_ascii_grid(const Raster& r) {
  std::ostringstream os;
  os << "ncols " << r.ncols << '\n'
     << "nrows " << r.nrows << '\n'
     << "xllcorner 0\n"
     << "yllcorner 0\n"
     << "cellsize " << text::format_double(r.cell_size_m) << '\n'
     << "NODATA_value -9999\n";
  for (std::size_t k = 0; k < r.nrows; ++k) {
    const std::size_t row = r.nrows - 1 - k;
    for (std::size_t c = 0; c < r.ncols; ++c) os << (c ? " " : "") << text::format_double(r.at(row, c));
    os << '\n';
  }
  return os.str();
}

std::string raster_sidecar(const Raster& r, std::string_view variable) {
  nlohmann::ordered_json j;
  j["variable"] = variable;
  j["projection"] = "local equirectangular";
  j["units"] = "m";
  j["origin_lat"] = r.origin_lat;
  j["origin_lon"] = r.origin_lon;
  j["ref_lat"] = r.ref_lat;
  j["cell_size_m"] = r.cell_size_m;
  j["ncols"] = r.ncols;
  j["nrows"] = r.nrows;
  j["flagged"] = r.flagged;
  j["skipped_without_coordinates"] = r.skipped_without_coordinates;
  return j.dump(2) + '\n';
}

}  // namespace iclv::lvd
