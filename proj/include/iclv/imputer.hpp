#pragma once

// Rule-based imputation of cyclist actions from a 1 Hz speed trace.
//
// Samples are labelled from consecutive speed differences, grouped into
// 5-sample windows anchored at segment starts, and each window takes the
// highest-priority label it contains (brake > wait > accelerate > decelerate
// > maintain). A configurable list of correction passes then revisits the
// window sequence.

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "iclv/panel.hpp"

namespace iclv::imputer {

struct SpeedSample {
  double timestamp = 0.0;  ///< s
  double speed = 0.0;      ///< km/h
};

struct SpeedTrace {
  std::string individual_id;
  std::vector<SpeedSample> samples;
};

/// Classification thresholds. Defaults are engineering choices, not values
/// taken from field calibration.
struct Thresholds {
  double brake_drop = 5.0;   ///< km/h per s
  double decel_drop = 1.5;   ///< km/h per s
  double accel_rise = 1.5;   ///< km/h per s
  double wait_speed = 1.0;   ///< km/h

  /// Throws DataError unless 0 < decel_drop < brake_drop, accel_rise > 0, wait_speed >= 0.
  void validate() const;
};

inline constexpr double kMaxGap = 5.0;        ///< s; larger gaps split a trace
inline constexpr int kWindowSamples = 5;      ///< samples per window
inline constexpr double kWindowSeconds = 5.0;

/// Priority rank used for conflict resolution; lower is stronger.
int priority(Action a);

struct WindowAction {
  long long window_index = 0;
  Action action = Action::maintain;
  double accel_mag = 0.0;
  double decel_mag = 0.0;
  double brake_mag = 0.0;
  double mean_speed = 0.0;
  double start_speed = 0.0;  ///< speed before the first delta counted in this window
  double end_speed = 0.0;
  int n_samples = 0;
  std::size_t segment = 0;

  /// Net speed decrease over the window (positive for slowing down).
  double net_drop() const { return decel_mag + brake_mag - accel_mag; }
  bool operator==(const WindowAction&) const = default;
};

/// Index ranges [begin, end) of contiguous segments (gaps > kMaxGap split).
/// Throws DataError for an empty trace or non-increasing timestamps.
std::vector<std::pair<std::size_t, std::size_t>> segments(const SpeedTrace& trace);

/// Per-sample labels. The first sample of each segment is `maintain` unless
/// its speed is at or below wait_speed, which always yields `wait`.
std::vector<Action> classify_samples(const SpeedTrace& trace, const Thresholds& th);

/// Groups labels into 5 s windows. A trailing partial window needs at least
/// two samples; a lone trailing sample is folded into the previous window's
/// magnitudes so that magnitudes still telescope over the segment.
std::vector<WindowAction> aggregate_windows(const std::vector<Action>& labels, const SpeedTrace& trace,
                                            const Thresholds& th);

/// A correction pass rewrites the window sequence in place.
using CorrectionPass = std::function<void(std::vector<WindowAction>&, const Thresholds&)>;

/// An isolated wait between two adjacent moving windows, whose own mean speed
/// exceeds wait_speed, becomes decelerate.
void correct_isolated_wait(std::vector<WindowAction>& windows, const Thresholds& th);
/// A brake window whose net speed drop is below brake_drop becomes decelerate.
void correct_weak_brake(std::vector<WindowAction>& windows, const Thresholds& th);

/// Looks up a pass by name (`isolated_wait`, `weak_brake`).
CorrectionPass correction_by_name(std::string_view name);
std::vector<std::string> default_corrections();

std::vector<WindowAction> correct_assignments(std::vector<WindowAction> windows, const Thresholds& th,
                                              const std::vector<std::string>& passes = default_corrections());

struct ImputerConfig {
  Thresholds thresholds;
  std::vector<std::string> corrections = default_corrections();

  /// Parses `brake_drop = 5`, ..., `corrections = isolated_wait, weak_brake`.
  static ImputerConfig parse(std::string_view document);
};

/// Full pipeline for one trace.
std::vector<WindowAction> impute(const SpeedTrace& trace, const ImputerConfig& cfg = {});

/// Reads `individual_id,timestamp,speed` rows, grouped per individual in file order.
std::vector<SpeedTrace> read_speed_csv(const std::string& path);
std::vector<SpeedTrace> parse_speed_csv(std::string_view csv);

/// Writes `individual_id,window_index,action,accel_mag,decel_mag,brake_mag`.
std::string windows_to_csv(const std::vector<std::pair<std::string, std::vector<WindowAction>>>& per_individual);

}  // namespace iclv::imputer
