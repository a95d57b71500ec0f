#pragma once

// Video descriptor records: the categorical street-scene description returned
// by a vision-language model for one 5 s image sequence, its text format,
// the covariate rules derived from it, frame sequencing and heatmaps.

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "iclv/panel.hpp"

namespace iclv::lvd {

enum class LaneType { dedicated, shared, does_not_exist };
enum class Separation { physical, visual, none };
enum class TrafficSignal { green, red, not_identifiable, not_present };
enum class Proximity { high, medium, low, not_present };
enum class Quality { good, fair, poor };
enum class Presence { present, not_present };
enum class Level { high, medium, low };
enum class Weather { sunny, cloudy };

inline constexpr std::array<std::string_view, 4> kVehicles = {"car", "truck", "motorcycle", "bicycle"};
inline constexpr std::array<std::string_view, 4> kPedestrians = {"adult", "child", "group", "pet"};

struct LvdRecord {
  std::string sequence_id;
  std::string individual_id;
  long long window = 0;  ///< 5 s window index, as produced by the imputer
  std::optional<double> lat;
  std::optional<double> lon;

  LaneType lane_type = LaneType::does_not_exist;
  Separation separation = Separation::none;
  TrafficSignal traffic_signal = TrafficSignal::not_present;
  std::vector<std::string> signage;  ///< lower-case tokens; empty means none observed
  std::array<Proximity, 4> vehicle_proximity{Proximity::not_present, Proximity::not_present, Proximity::not_present,
                                             Proximity::not_present};
  std::array<Proximity, 4> pedestrian_proximity{Proximity::not_present, Proximity::not_present,
                                                Proximity::not_present, Proximity::not_present};
  Quality road_condition = Quality::fair;
  Presence potholes = Presence::not_present;
  Level pedestrian_activity = Level::low;
  Presence obstructions = Presence::not_present;
  Weather weather = Weather::sunny;
  Level stress_level = Level::medium;
  std::string stress_description;
  Presence special_events = Presence::not_present;
  Presence road_works = Presence::not_present;
  Proximity other_cyclists = Proximity::not_present;
  Quality cyclist_infrastructure = Quality::fair;

  bool operator==(const LvdRecord&) const = default;
};

/// Canonical field names of the categorical description, in render order.
/// Proximity entries are `vehicle_proximity.car` etc.
const std::vector<std::string>& field_names();

/// Canonical display value of a field (e.g. "Not identifiable"); signage is
/// comma-joined. Throws DataError for an unknown field.
std::string field_value(const LvdRecord& r, std::string_view field);

/// Allowed values of a categorical field; empty for free-text fields.
std::vector<std::string> vocabulary(std::string_view field);

struct Diagnostic {
  enum class Kind { no_fields, missing, out_of_vocabulary, duplicate };
  Kind kind = Kind::missing;
  std::string field;
  std::string value;
  std::string message;
};

std::string_view to_string(Diagnostic::Kind k);

enum class Fallback {
  reject,   ///< any diagnostic rejects the record
  neutral,  ///< missing or unknown values take the field's neutral level
};

struct ParseOptions {
  Fallback fallback = Fallback::reject;
};

struct ParseResult {
  std::optional<LvdRecord> record;
  std::vector<Diagnostic> diagnostics;
};

/// Reads `Field: value` lines. Keys match case-insensitively and ignore
/// spaces and punctuation; proximity entries may be nested under a
/// `VehicleProximity:` header or written `VehicleProximity.Car: High`.
ParseResult parse_response(std::string_view text, const ParseOptions& options = {});

/// Text form accepted by parse_response; parse_response(render(r)) yields r
/// (identifiers and coordinates excepted).
std::string render(const LvdRecord& r);

/// The descriptor instructions sent with every sequence.
std::string_view base_prompt();
/// base_prompt() plus the answer-format instruction, unless `exact` is set.
std::string default_prompt(bool exact = false);

/// Binary covariate rule: 1 when any (field, value) condition holds.
/// Fields ending in `.*` match every member of a proximity group.
struct CovariateRule {
  std::string name;
  std::vector<std::pair<std::string, std::string>> conditions;
};

/// `name = field:value | field:value` lines.
std::vector<CovariateRule> parse_rules(std::string_view document);
const std::vector<CovariateRule>& default_rules();

/// 0/1 covariates of one record, keyed by rule name.
CovariateGroup to_covariates(const LvdRecord& r, const std::vector<CovariateRule>& rules = default_rules());
std::vector<CovariateGroup> to_covariates(const std::vector<LvdRecord>& records,
                                          const std::vector<CovariateRule>& rules = default_rules());

struct JoinReport {
  std::size_t matched = 0;
  std::vector<std::string> unmatched;  ///< "individual t=window" for rows without a record
};

/// Writes rule covariates into each row's gpt group, matching on
/// (individual_id, window == t). Unmatched rows keep their covariates.
PanelDataset join_covariates(const PanelDataset& ds, const std::vector<LvdRecord>& records, JoinReport* report = nullptr,
                             const std::vector<CovariateRule>& rules = default_rules());

/// CSV with individual_id, window, sequence_id, lat, lon and one column per field.
std::string records_to_csv(const std::vector<LvdRecord>& records);
std::vector<LvdRecord> records_from_csv(std::string_view csv);

struct FrameFile {
  std::string path;
  double timestamp = 0.0;  ///< seconds
  std::optional<double> lat;
  std::optional<double> lon;
};

struct ImageSequence {
  long long window = 0;
  std::vector<FrameFile> frames;
};

struct SequenceExtraction {
  std::vector<ImageSequence> sequences;
  std::vector<long long> empty_windows;
};

/// Groups frames into `window_s` windows counted from `origin` (the first
/// frame when absent). Timestamps are first snapped to the median frame
/// period so small jitter does not move frames across window edges. Each
/// sequence keeps up to `frames_per_window` evenly spaced frames.
SequenceExtraction extract_sequences(std::vector<FrameFile> frames, std::size_t frames_per_window,
                                     std::optional<double> origin = std::nullopt, double window_s = 5.0);

/// Reads `path,timestamp[,lat,lon]` index files; relative paths resolve
/// against the index file's directory.
std::vector<FrameFile> read_frame_index(const std::string& path);

struct Raster {
  std::size_t ncols = 0;
  std::size_t nrows = 0;
  double cell_size_m = 0.0;
  double origin_lat = 0.0;  ///< south-west corner
  double origin_lon = 0.0;
  double ref_lat = 0.0;     ///< latitude of the projection's scale
  std::vector<double> counts;  ///< row-major, row 0 is the southern edge
  std::size_t flagged = 0;
  std::size_t skipped_without_coordinates = 0;

  double at(std::size_t row, std::size_t col) const { return counts[row * ncols + col]; }
  double total() const;
};

/// Counts records whose covariate `variable` is 1 per square cell of a local
/// equirectangular projection. Throws DataError for an unknown variable,
/// listing the valid names.
Raster heatmap(const std::vector<LvdRecord>& records, std::string_view variable, double cell_size_m,
               const std::vector<CovariateRule>& rules = default_rules());

/// ESRI ASCII grid (north row first) and a JSON sidecar with georeferencing.
std::string raster_to_ascii_grid(const Raster& r);
std::string raster_sidecar(const Raster& r, std::string_view variable);

}  // namespace iclv::lvd
