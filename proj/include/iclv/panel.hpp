#pragma once

// Observation-level panel data: one row per (individual, 5-second window).

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace iclv {

/// Cyclist action. Numeric values follow the utility indexing; maintain is the
/// reference alternative.
enum class Action { accelerate = 1, brake = 2, decelerate = 3, wait = 4, maintain = 5 };

inline constexpr int kNumActions = 5;
inline constexpr std::array<Action, kNumActions> kAllActions = {
    Action::accelerate, Action::brake, Action::decelerate, Action::wait, Action::maintain};

/// Zero-based position of an action in utility/probability arrays.
constexpr int action_index(Action a) { return static_cast<int>(a) - 1; }
constexpr Action action_from_index(int i) { return static_cast<Action>(i + 1); }

std::string_view to_string(Action a);
/// Accepts the action name (case-insensitive) or its code 1..5.
std::optional<Action> parse_action(std::string_view s);

struct InfraFeatures {
  bool has_bikeway = false;
  int n_car_lanes = 0;
  bool junction = false;
  bool traffic_light = false;
  bool yield_or_stop = false;
  bool positive_slope_flag = false;
  bool knows_route = false;

  bool operator==(const InfraFeatures&) const = default;
};

enum class Indicator { tc, pc, hr, hrv };
inline constexpr std::array<Indicator, 4> kAllIndicators = {Indicator::tc, Indicator::pc, Indicator::hr,
                                                            Indicator::hrv};
std::string_view to_string(Indicator i);
std::optional<Indicator> parse_indicator(std::string_view s);

struct IndicatorVars {
  std::optional<double> tc;
  std::optional<double> pc;
  std::optional<double> hr;
  std::optional<double> hrv;

  std::optional<double> get(Indicator i) const;
  void set(Indicator i, std::optional<double> v);
  bool any() const { return tc || pc || hr || hrv; }
  bool operator==(const IndicatorVars&) const = default;
};

/// Named covariates of one source group (context sensors, audio features,
/// LVD-derived flags, demographics). Keys are unqualified names.
using CovariateGroup = std::map<std::string, double>;

struct ObservationRow {
  std::string individual_id;
  long long t = 0;                 ///< window index (5 s units)
  double speed = 0.0;              ///< km/h
  double dist_to_junction = 0.0;   ///< m
  double travel_time = 0.0;        ///< minutes elapsed
  double traveled_distance = 0.0;  ///< km
  double slope = 0.0;              ///< grade
  InfraFeatures infrastructure;
  CovariateGroup context;
  CovariateGroup audio;
  CovariateGroup gpt;
  CovariateGroup demographics;
  IndicatorVars indicators;
  std::optional<Action> action;
  std::optional<double> action_magnitude;

  bool operator==(const ObservationRow&) const = default;
};

/// Thresholds that split speed and distance to junction into low/middle/high bands.
struct LevelThresholds {
  double dist_low = 9.7;     ///< m
  double dist_high = 82.8;   ///< m
  double speed_low = 4.4;    ///< km/h
  double speed_high = 17.4;  ///< km/h
  bool operator==(const LevelThresholds&) const = default;
};

struct DerivedLevels {
  bool dist_low = false;
  bool dist_high = false;
  bool speed_low = false;
  bool speed_high = false;
  bool operator==(const DerivedLevels&) const = default;
};

/// Low uses strict `<`, high strict `>`; values on a threshold fall in the middle band.
DerivedLevels derive_levels(const ObservationRow& row, const LevelThresholds& th = {});

/// Prefixes used for group columns in CSV headers and covariate names.
inline constexpr std::string_view kContextPrefix = "context.";
inline constexpr std::string_view kAudioPrefix = "audio.";
inline constexpr std::string_view kGptPrefix = "gpt.";
inline constexpr std::string_view kDemographicPrefix = "demo.";

/// Value of a named covariate for a row. Names are either built-in fields
/// (`speed`, `junction`, `dist_low`, ...) or group-qualified (`gpt.red_light`).
/// std::nullopt when the name is unknown or the group entry is missing.
std::optional<double> covariate_value(const ObservationRow& row, std::string_view name,
                                      const LevelThresholds& th = {});

/// Names accepted by covariate_value regardless of dataset content.
const std::vector<std::string>& builtin_covariates();

/// Set of covariate names a model may reference.
class CovariateSchema {
public:
  CovariateSchema() = default;
  explicit CovariateSchema(std::set<std::string> names) : names_(std::move(names)) {}

  bool contains(std::string_view name) const { return names_.count(std::string(name)) > 0; }
  void insert(std::string name) { names_.insert(std::move(name)); }
  const std::set<std::string>& names() const { return names_; }

private:
  std::set<std::string> names_;
};

/// Built-in fields plus every group covariate used by the bundled cyclist models.
CovariateSchema cyclist_schema();

/// Column mapping for load_panel: canonical field name -> source column, and
/// per-field source units converted at ingestion.
struct SchemaMapping {
  std::map<std::string, std::string> columns;
  std::map<std::string, std::string> units;

  /// Parses `field = column` and `units.field = unit` lines.
  static SchemaMapping parse(std::string_view document);
  static SchemaMapping load(const std::string& path);
};

struct ValidationReport {
  std::size_t rows_read = 0;
  std::size_t rows_kept = 0;
  std::vector<std::string> messages;

  std::string to_text() const;
};

/// Immutable, validated panel sorted by (individual_id, t).
class PanelDataset {
public:
  struct Individual {
    std::string id;
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t size() const { return end - begin; }
  };

  PanelDataset() = default;
  /// Sorts rows, groups by individual and validates invariants. Throws
  /// DataError on any violation.
  explicit PanelDataset(std::vector<ObservationRow> rows, ValidationReport report = {});

  const std::vector<ObservationRow>& rows() const { return rows_; }
  const std::vector<Individual>& individuals() const { return individuals_; }
  std::size_t size() const { return rows_.size(); }
  bool empty() const { return rows_.empty(); }
  const ObservationRow& operator[](std::size_t i) const { return rows_[i]; }
  const ValidationReport& report() const { return report_; }

  /// Built-in names plus every group column seen in the data.
  CovariateSchema schema() const;

private:
  std::vector<ObservationRow> rows_;
  std::vector<Individual> individuals_;
  ValidationReport report_;
};

/// Reads a delimited file with header. Without a mapping, columns carry the
/// canonical names; columns prefixed `context.`, `audio.`, `gpt.`, `demo.`
/// become group covariates.
PanelDataset load_panel(const std::string& path, const SchemaMapping& mapping = {});
PanelDataset parse_panel(std::string_view csv, const SchemaMapping& mapping = {});

/// Canonical CSV serialization; parse_panel(serialize_panel(ds)) == ds.
std::string serialize_panel(const PanelDataset& ds);
void write_panel(const PanelDataset& ds, const std::string& path);

struct ExclusionResult {
  PanelDataset dataset;
  std::size_t removed = 0;
};

/// Drops waits imposed by a red signal: keyed on `gpt.red_light` when the row
/// carries it, else on the infrastructure traffic-light flag.
ExclusionResult exclude_forced_stops(const PanelDataset& ds);

}  // namespace iclv
