#include "iclv/panel.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_map>

#include "iclv/error.hpp"
#include "iclv/text.hpp"

namespace iclv {

namespace {

constexpr std::array<std::string_view, kNumActions> kActionNames = {"accelerate", "brake", "decelerate", "wait",
                                                                   "maintain"};

// Canonical column order of the serialized panel.
const std::vector<std::string>& core_columns() {
  static const std::vector<std::string> cols = {
      "individual_id", "t",           "speed",         "dist_to_junction", "travel_time",
      "traveled_distance", "slope",   "has_bikeway",   "n_car_lanes",      "junction",
      "traffic_light", "yield_or_stop", "positive_slope", "knows_route",    "tc",
      "pc",            "hr",          "hrv",           "action",           "action_magnitude"};
  return cols;
}

const std::set<std::string> kMandatory = {"individual_id", "t", "speed", "dist_to_junction"};

struct GroupRef {
  std::string_view prefix;
  CovariateGroup ObservationRow::*member;
};

constexpr std::array<GroupRef, 4> kGroups = {{{kContextPrefix, &ObservationRow::context},
                                              {kAudioPrefix, &ObservationRow::audio},
                                              {kGptPrefix, &ObservationRow::gpt},
                                              {kDemographicPrefix, &ObservationRow::demographics}}};

double unit_factor(const std::string& field, const std::string& unit) {
  const std::string u = text::to_lower(unit);
  if (field == "speed") {
    if (u == "km/h" || u == "kmh" || u == "kph") return 1.0;
    if (u == "m/s") return 3.6;
    if (u == "mph") return 1.609344;
  } else if (field == "dist_to_junction") {
    if (u == "m") return 1.0;
    if (u == "km") return 1000.0;
  } else if (field == "travel_time") {
    if (u == "min") return 1.0;
    if (u == "s") return 1.0 / 60.0;
    if (u == "h") return 60.0;
  } else if (field == "traveled_distance") {
    if (u == "km") return 1.0;
    if (u == "m") return 1e-3;
  }
  throw DataError("unsupported unit '" + unit + "' for field '" + field + "'");
}

bool parse_flag(std::string_view s, bool& out) {
  const std::string v = text::to_lower(text::trim(s));
  if (v == "1" || v == "true" || v == "yes") {
    out = true;
    return true;
  }
  if (v == "0" || v == "false" || v == "no") {
    out = false;
    return true;
  }
  return false;
}

std::string fmt_opt(const std::optional<double>& v) { return v ? text::format_double(*v) : std::string(); }

}  // namespace

std::string_view to_string(Action a) { return kActionNames[action_index(a)]; }

std::optional<Action> parse_action(std::string_view s) {
  s = text::trim(s);
  for (int i = 0; i < kNumActions; ++i)
    if (text::iequals(s, kActionNames[i])) return action_from_index(i);
  if (const auto code = text::parse_int(s); code && *code >= 1 && *code <= kNumActions)
    return static_cast<Action>(*code);
  return std::nullopt;
}

std::string_view to_string(Indicator i) {
  switch (i) {
    case Indicator::tc: return "tc";
    case Indicator::pc: return "pc";
    case Indicator::hr: return "hr";
    case Indicator::hrv: return "hrv";
  }
  return "?";
}

std::optional<Indicator> parse_indicator(std::string_view s) {
  for (auto i : kAllIndicators)
    if (text::iequals(s, to_string(i))) return i;
  return std::nullopt;
}

std::optional<double> IndicatorVars::get(Indicator i) const {
  switch (i) {
    case Indicator::tc: return tc;
    case Indicator::pc: return pc;
    case Indicator::hr: return hr;
    case Indicator::hrv: return hrv;
  }
  return std::nullopt;
}

void IndicatorVars::set(Indicator i, std::optional<double> v) {
  switch (i) {
    case Indicator::tc: tc = v; break;
    case Indicator::pc: pc = v; break;
    case Indicator::hr: hr = v; break;
    case Indicator::hrv: hrv = v; break;
  }
}

DerivedLevels derive_levels(const ObservationRow& row, const LevelThresholds& th) {
  DerivedLevels lv;
  lv.dist_low = row.dist_to_junction < th.dist_low;
  lv.dist_high = row.dist_to_junction > th.dist_high;
  lv.speed_low = row.speed < th.speed_low;
  lv.speed_high = row.speed > th.speed_high;
  return lv;
}

const std::vector<std::string>& builtin_covariates() {
  static const std::vector<std::string> names = {
      "speed",         "dist_to_junction", "travel_time",    "traveled_distance", "slope",
      "has_bikeway",   "n_car_lanes",      "junction",       "traffic_light",     "yield_or_stop",
      "positive_slope", "knows_route",     "dist_low",       "dist_high",         "speed_low",
      "speed_high"};
  return names;
}

std::optional<double> covariate_value(const ObservationRow& row, std::string_view name, const LevelThresholds& th) {
  const auto flag = [](bool b) { return b ? 1.0 : 0.0; };
  const auto& inf = row.infrastructure;
  if (name == "speed") return row.speed;
  if (name == "dist_to_junction") return row.dist_to_junction;
  if (name == "travel_time") return row.travel_time;
  if (name == "traveled_distance") return row.traveled_distance;
  if (name == "slope") return row.slope;
  if (name == "has_bikeway") return flag(inf.has_bikeway);
  if (name == "n_car_lanes") return static_cast<double>(inf.n_car_lanes);
  if (name == "junction") return flag(inf.junction);
  if (name == "traffic_light") return flag(inf.traffic_light);
  if (name == "yield_or_stop") return flag(inf.yield_or_stop);
  if (name == "positive_slope") return flag(inf.positive_slope_flag);
  if (name == "knows_route") return flag(inf.knows_route);
  if (name == "dist_low" || name == "dist_high" || name == "speed_low" || name == "speed_high") {
    const auto lv = derive_levels(row, th);
    if (name == "dist_low") return flag(lv.dist_low);
    if (name == "dist_high") return flag(lv.dist_high);
    if (name == "speed_low") return flag(lv.speed_low);
    return flag(lv.speed_high);
  }
  for (const auto& g : kGroups) {
    if (text::starts_with(name, g.prefix)) {
      const auto& group = row.*(g.member);
      const auto it = group.find(std::string(name.substr(g.prefix.size())));
      if (it == group.end()) return std::nullopt;
      return it->second;
    }
  }
  return std::nullopt;
}

CovariateSchema cyclist_schema() {
  std::set<std::string> names(builtin_covariates().begin(), builtin_covariates().end());
  for (const char* n : {"anxiety", "age", "negative_affect", "positive_affect", "stress", "female", "frequency", "bmi"})
    names.insert(std::string(kDemographicPrefix) + n);
  for (const char* n : {"co2", "humidity", "temperature"}) names.insert(std::string(kContextPrefix) + n);
  for (const char* n : {"spectral_centroid", "spectral_contrast", "rms", "zcr"})
    names.insert(std::string(kAudioPrefix) + n);
  for (const char* n : {"high_vehicular_activity", "bad_infrastructure", "route_bad_condition", "stressful_situation",
                        "red_light", "high_cyclists_activity", "high_pedestrians_activity", "cloudy"})
    names.insert(std::string(kGptPrefix) + n);
  return CovariateSchema(std::move(names));
}

SchemaMapping SchemaMapping::parse(std::string_view document) {
  SchemaMapping m;
  for (const auto& kv : text::parse_key_values(document)) {
    if (text::starts_with(kv.key, "units.")) {
      const std::string field = kv.key.substr(6);
      unit_factor(field, kv.value);  // validates
      m.units[field] = kv.value;
    } else {
      m.columns[kv.key] = kv.value;
    }
  }
  return m;
}

SchemaMapping SchemaMapping::load(const std::string& path) { return parse(text::read_file(path)); }

std::string ValidationReport::to_text() const {
  std::ostringstream os;
  os << "rows_read " << rows_read << '\n' << "rows_kept " << rows_kept << '\n';
  for (const auto& m : messages) os << m << '\n';
  return os.str();
}

PanelDataset::PanelDataset(std::vector<ObservationRow> rows, ValidationReport report)
    : report_(std::move(report)) {
  // Stable grouping by id keeps the within-individual order for the check below.
  std::stable_sort(rows.begin(), rows.end(),
                   [](const ObservationRow& a, const ObservationRow& b) { return a.individual_id < b.individual_id; });
  rows_ = std::move(rows);
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    const auto& r = rows_[i];
    if (!(r.speed >= 0.0)) throw DataError("individual '" + r.individual_id + "' t=" + std::to_string(r.t) + ": negative speed");
    if (!(r.dist_to_junction >= 0.0))
      throw DataError("individual '" + r.individual_id + "' t=" + std::to_string(r.t) + ": negative dist_to_junction");
    if (r.infrastructure.n_car_lanes < 0)
      throw DataError("individual '" + r.individual_id + "' t=" + std::to_string(r.t) + ": negative n_car_lanes");
    if (individuals_.empty() || individuals_.back().id != r.individual_id) {
      individuals_.push_back({r.individual_id, i, i + 1});
      continue;
    }
    const auto& prev = rows_[i - 1];
    if (r.t <= prev.t)
      throw DataError("individual '" + r.individual_id + "': window index not strictly increasing (" +
                      std::to_string(prev.t) + " then " + std::to_string(r.t) + ")");
    if (!(r.travel_time > prev.travel_time))
      throw DataError("individual '" + r.individual_id + "': travel_time not strictly increasing at t=" +
                      std::to_string(r.t));
    individuals_.back().end = i + 1;
  }
  if (report_.rows_read == 0) report_.rows_read = rows_.size();
  report_.rows_kept = rows_.size();
}

CovariateSchema PanelDataset::schema() const {
  std::set<std::string> names(builtin_covariates().begin(), builtin_covariates().end());
  for (const auto& r : rows_)
    for (const auto& g : kGroups)
      for (const auto& [k, v] : r.*(g.member)) names.insert(std::string(g.prefix) + k);
  return CovariateSchema(std::move(names));
}

PanelDataset parse_panel(std::string_view csv, const SchemaMapping& mapping) {
  const auto table = text::parse_csv(csv);

  // canonical field -> column index
  std::unordered_map<std::string, std::size_t> field_col;
  std::set<std::size_t> mapped_cols;
  for (const auto& [field, column] : mapping.columns) {
    const auto idx = table.column(column);
    if (!idx) throw DataError("schema maps '" + field + "' to missing column '" + column + "'");
    field_col[field] = *idx;
    mapped_cols.insert(*idx);
  }
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (mapped_cols.count(c)) continue;
    const auto& h = table.header[c];
    if (!field_col.count(h)) field_col[h] = c;
  }
  for (const auto& m : kMandatory)
    if (!field_col.count(m)) throw DataError("missing mandatory column '" + m + "'");

  std::vector<ObservationRow> rows;
  rows.reserve(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& cells = table.rows[r];
    const auto where = [&](const std::string& field) {
      return "row " + std::to_string(r + 2) + ", field '" + field + "'";
    };
    const auto cell = [&](const std::string& field) -> std::optional<std::string_view> {
      const auto it = field_col.find(field);
      if (it == field_col.end()) return std::nullopt;
      const auto v = text::trim(cells[it->second]);
      if (v.empty()) return std::nullopt;
      return v;
    };
    const auto number = [&](const std::string& field) -> std::optional<double> {
      const auto c = cell(field);
      if (!c) return std::nullopt;
      const auto v = text::parse_double(*c);
      if (!v) throw DataError(where(field) + ": non-numeric value '" + std::string(*c) + "'");
      double out = *v;
      if (const auto u = mapping.units.find(field); u != mapping.units.end()) out *= unit_factor(field, u->second);
      return out;
    };
    const auto required = [&](const std::string& field) {
      const auto v = number(field);
      if (!v) throw DataError(where(field) + ": missing value");
      return *v;
    };
    const auto flag = [&](const std::string& field, bool& out) {
      const auto c = cell(field);
      if (!c) return;
      if (!parse_flag(*c, out)) throw DataError(where(field) + ": expected 0/1, got '" + std::string(*c) + "'");
    };

    ObservationRow row;
    const auto id = cell("individual_id");
    if (!id) throw DataError(where("individual_id") + ": missing value");
    row.individual_id = std::string(*id);
    const auto t = cell("t");
    const auto t_val = t ? text::parse_int(*t) : std::nullopt;
    if (!t_val) throw DataError(where("t") + ": expected integer window index");
    row.t = *t_val;
    row.speed = required("speed");
    row.dist_to_junction = required("dist_to_junction");
    row.travel_time = number("travel_time").value_or(static_cast<double>(row.t) * 5.0 / 60.0);
    row.traveled_distance = number("traveled_distance").value_or(0.0);
    row.slope = number("slope").value_or(0.0);
    auto& inf = row.infrastructure;
    flag("has_bikeway", inf.has_bikeway);
    if (const auto lanes = number("n_car_lanes")) inf.n_car_lanes = static_cast<int>(*lanes);
    flag("junction", inf.junction);
    flag("traffic_light", inf.traffic_light);
    flag("yield_or_stop", inf.yield_or_stop);
    flag("positive_slope", inf.positive_slope_flag);
    flag("knows_route", inf.knows_route);
    for (auto ind : kAllIndicators) row.indicators.set(ind, number(std::string(to_string(ind))));
    if (const auto a = cell("action")) {
      row.action = parse_action(*a);
      if (!row.action) throw DataError(where("action") + ": unknown action '" + std::string(*a) + "'");
    }
    row.action_magnitude = number("action_magnitude");
    for (const auto& [field, col] : field_col) {
      for (const auto& g : kGroups) {
        if (!text::starts_with(field, g.prefix)) continue;
        if (const auto v = number(field)) (row.*(g.member))[field.substr(g.prefix.size())] = *v;
      }
    }
    rows.push_back(std::move(row));
  }
  ValidationReport report;
  report.rows_read = rows.size();
  for (const auto& [field, col] : field_col) {
    const bool known = std::find(core_columns().begin(), core_columns().end(), field) != core_columns().end() ||
                       std::any_of(kGroups.begin(), kGroups.end(),
                                   [&](const GroupRef& g) { return text::starts_with(field, g.prefix); });
    if (!known) report.messages.push_back("ignored column '" + table.header[col] + "'");
  }
  std::sort(report.messages.begin(), report.messages.end());
  return PanelDataset(std::move(rows), std::move(report));
}

PanelDataset load_panel(const std::string& path, const SchemaMapping& mapping) {
  return parse_panel(text::read_file(path), mapping);
}

std::string serialize_panel(const PanelDataset& ds) {
  std::set<std::string> group_cols;
  for (const auto& r : ds.rows())
    for (const auto& g : kGroups)
      for (const auto& [k, v] : r.*(g.member)) group_cols.insert(std::string(g.prefix) + k);

  std::ostringstream os;
  std::vector<std::string> header = core_columns();
  header.insert(header.end(), group_cols.begin(), group_cols.end());
  text::write_csv_row(os, header);
  const auto b = [](bool v) { return std::string(v ? "1" : "0"); };
  for (const auto& r : ds.rows()) {
    const auto& inf = r.infrastructure;
    std::vector<std::string> f = {r.individual_id,
                                  std::to_string(r.t),
                                  text::format_double(r.speed),
                                  text::format_double(r.dist_to_junction),
                                  text::format_double(r.travel_time),
                                  text::format_double(r.traveled_distance),
                                  text::format_double(r.slope),
                                  b(inf.has_bikeway),
                                  std::to_string(inf.n_car_lanes),
                                  b(inf.junction),
                                  b(inf.traffic_light),
                                  b(inf.yield_or_stop),
                                  b(inf.positive_slope_flag),
                                  b(inf.knows_route),
                                  fmt_opt(r.indicators.tc),
                                  fmt_opt(r.indicators.pc),
                                  fmt_opt(r.indicators.hr),
                                  fmt_opt(r.indicators.hrv),
                                  r.action ? std::string(to_string(*r.action)) : std::string(),
                                  fmt_opt(r.action_magnitude)};
    for (const auto& col : group_cols) f.push_back(fmt_opt(covariate_value(r, col)));
    text::write_csv_row(os, f);
  }
  return os.str();
}

void write_panel(const PanelDataset& ds, const std::string& path) { text::write_file(path, serialize_panel(ds)); }

ExclusionResult exclude_forced_stops(const PanelDataset& ds) {
  std::vector<ObservationRow> kept;
  kept.reserve(ds.size());
  std::size_t removed = 0;
  for (const auto& r : ds.rows()) {
    bool forced = false;
    if (r.action == Action::wait) {
      if (const auto it = r.gpt.find("red_light"); it != r.gpt.end())
        forced = it->second != 0.0;
      else
        forced = r.infrastructure.traffic_light;
    }
    if (forced)
      ++removed;
    else
      kept.push_back(r);
  }
  ValidationReport report = ds.report();
  report.messages.push_back("excluded " + std::to_string(removed) + " forced stops");
  return {PanelDataset(std::move(kept), std::move(report)), removed};
}

}  // namespace iclv
