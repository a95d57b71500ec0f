#include "iclv/imputer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "iclv/error.hpp"
#include "iclv/text.hpp"

namespace iclv::imputer {

void Thresholds::validate() const {
  if (!(brake_drop > 0.0) || !(decel_drop > 0.0) || !(accel_rise > 0.0) || !(wait_speed >= 0.0))
    throw DataError("imputer thresholds must be positive (wait_speed non-negative)");
  if (!(decel_drop < brake_drop)) throw DataError("imputer thresholds: decel_drop must be below brake_drop");
}

int priority(Action a) {
  switch (a) {
    case Action::brake: return 0;
    case Action::wait: return 1;
    case Action::accelerate: return 2;
    case Action::decelerate: return 3;
    case Action::maintain: return 4;
  }
  return 5;
}

std::vector<std::pair<std::size_t, std::size_t>> segments(const SpeedTrace& trace) {
  const auto& s = trace.samples;
  if (s.empty()) throw DataError("speed trace '" + trace.individual_id + "' is empty");
  std::vector<std::pair<std::size_t, std::size_t>> out;
  std::size_t begin = 0;
  for (std::size_t i = 1; i < s.size(); ++i) {
    const double dt = s[i].timestamp - s[i - 1].timestamp;
    if (!(dt > 0.0))
      throw DataError("speed trace '" + trace.individual_id + "': timestamps not strictly increasing at sample " +
                      std::to_string(i));
    if (dt > kMaxGap) {
      out.emplace_back(begin, i);
      begin = i;
    }
  }
  out.emplace_back(begin, s.size());
  return out;
}

std::vector<Action> classify_samples(const SpeedTrace& trace, const Thresholds& th) {
  th.validate();
  const auto& s = trace.samples;
  std::vector<Action> labels(s.size(), Action::maintain);
  for (const auto& [begin, end] : segments(trace)) {
    for (std::size_t i = begin; i < end; ++i) {
      if (s[i].speed <= th.wait_speed) {
        labels[i] = Action::wait;
        continue;
      }
      if (i == begin) continue;
      const double dv = s[i].speed - s[i - 1].speed;
      if (dv <= -th.brake_drop)
        labels[i] = Action::brake;
      else if (dv <= -th.decel_drop)
        labels[i] = Action::decelerate;
      else if (dv >= th.accel_rise)
        labels[i] = Action::accelerate;
    }
  }
  return labels;
}

std::vector<WindowAction> aggregate_windows(const std::vector<Action>& labels, const SpeedTrace& trace,
                                            const Thresholds& th) {
  const auto& s = trace.samples;
  if (labels.size() != s.size()) throw DataError("aggregate_windows: labels not aligned to samples");
  std::vector<WindowAction> out;
  if (s.empty()) return out;
  const double t0 = s.front().timestamp;
  const auto segs = segments(trace);
  for (std::size_t seg = 0; seg < segs.size(); ++seg) {
    const auto [begin, end] = segs[seg];
    for (std::size_t w = begin; w < end; w += kWindowSamples) {
      const std::size_t w_end = std::min(end, w + kWindowSamples);
      WindowAction win;
      win.segment = seg;
      win.window_index = static_cast<long long>(std::floor((s[w].timestamp - t0) / kWindowSeconds + 1e-9));
      win.n_samples = static_cast<int>(w_end - w);
      win.start_speed = w == begin ? s[w].speed : s[w - 1].speed;
      win.end_speed = s[w_end - 1].speed;
      Action best = Action::maintain;
      double speed_sum = 0.0;
      for (std::size_t i = w; i < w_end; ++i) {
        if (priority(labels[i]) < priority(best)) best = labels[i];
        speed_sum += s[i].speed;
        if (i == begin) continue;
        const double dv = s[i].speed - s[i - 1].speed;
        if (dv > 0.0)
          win.accel_mag += dv;
        else if (dv <= -th.brake_drop)
          win.brake_mag -= dv;
        else
          win.decel_mag -= dv;
      }
      win.action = best;
      win.mean_speed = speed_sum / win.n_samples;
      if (win.n_samples < 2) {
        if (!out.empty() && out.back().segment == seg) {
          auto& prev = out.back();
          prev.accel_mag += win.accel_mag;
          prev.decel_mag += win.decel_mag;
          prev.brake_mag += win.brake_mag;
          prev.end_speed = win.end_speed;
        }
        continue;
      }
      out.push_back(win);
    }
  }
  return out;
}

void correct_isolated_wait(std::vector<WindowAction>& windows, const Thresholds& th) {
  if (windows.size() < 3) return;
  const auto original = windows;
  for (std::size_t i = 1; i + 1 < original.size(); ++i) {
    const auto& prev = original[i - 1];
    const auto& cur = original[i];
    const auto& next = original[i + 1];
    if (cur.action != Action::wait) continue;
    if (prev.action == Action::wait || next.action == Action::wait) continue;
    if (prev.segment != cur.segment || next.segment != cur.segment) continue;
    if (prev.window_index + 1 != cur.window_index || cur.window_index + 1 != next.window_index) continue;
    if (cur.mean_speed > th.wait_speed) windows[i].action = Action::decelerate;
  }
}

void correct_weak_brake(std::vector<WindowAction>& windows, const Thresholds& th) {
  for (auto& w : windows)
    if (w.action == Action::brake && w.net_drop() < th.brake_drop) w.action = Action::decelerate;
}

CorrectionPass correction_by_name(std::string_view name) {
  if (name == "isolated_wait") return correct_isolated_wait;
  if (name == "weak_brake") return correct_weak_brake;
  throw DataError("unknown correction pass '" + std::string(name) + "' (known: isolated_wait, weak_brake)");
}

std::vector<std::string> default_corrections() { return {"isolated_wait", "weak_brake"}; }

std::vector<WindowAction> correct_assignments(std::vector<WindowAction> windows, const Thresholds& th,
                                              const std::vector<std::string>& passes) {
  for (const auto& name : passes) correction_by_name(name)(windows, th);
  return windows;
}

ImputerConfig ImputerConfig::parse(std::string_view document) {
  ImputerConfig cfg;
  for (const auto& kv : text::parse_key_values(document)) {
    if (kv.key == "corrections") {
      cfg.corrections.clear();
      for (const auto& p : text::split(kv.value, ',')) {
        const auto name = std::string(text::trim(p));
        if (name.empty() || name == "none") continue;
        correction_by_name(name);
        cfg.corrections.push_back(name);
      }
      continue;
    }
    const auto v = text::parse_double(kv.value);
    if (!v) throw DataError("imputer config line " + std::to_string(kv.line) + ": '" + kv.key + "' is not numeric");
    if (kv.key == "brake_drop")
      cfg.thresholds.brake_drop = *v;
    else if (kv.key == "decel_drop")
      cfg.thresholds.decel_drop = *v;
    else if (kv.key == "accel_rise")
      cfg.thresholds.accel_rise = *v;
    else if (kv.key == "wait_speed")
      cfg.thresholds.wait_speed = *v;
    else
      throw DataError("imputer config: unknown key '" + kv.key + "'");
  }
  cfg.thresholds.validate();
  return cfg;
}

std::vector<WindowAction> impute(const SpeedTrace& trace, const ImputerConfig& cfg) {
  const auto labels = classify_samples(trace, cfg.thresholds);
  return correct_assignments(aggregate_windows(labels, trace, cfg.thresholds), cfg.thresholds, cfg.corrections);
}

std::vector<SpeedTrace> parse_speed_csv(std::string_view csv) {
  const auto table = text::parse_csv(csv);
  const auto id_col = table.column("individual_id");
  const auto ts_col = table.column("timestamp");
  const auto sp_col = table.column("speed");
  if (!id_col || !ts_col || !sp_col)
    throw DataError("speed csv needs columns individual_id, timestamp, speed");
  std::vector<SpeedTrace> traces;
  std::map<std::string, std::size_t> index;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const auto ts = text::parse_double(row[*ts_col]);
    const auto sp = text::parse_double(row[*sp_col]);
    if (!ts || !sp) throw DataError("speed csv row " + std::to_string(r + 2) + ": non-numeric value");
    const std::string id(text::trim(row[*id_col]));
    auto [it, inserted] = index.emplace(id, traces.size());
    if (inserted) traces.push_back({id, {}});
    traces[it->second].samples.push_back({*ts, *sp});
  }
  return traces;
}

std::vector<SpeedTrace> read_speed_csv(const std::string& path) { return parse_speed_csv(text::read_file(path)); }

std::string windows_to_csv(const std::vector<std::pair<std::string, std::vector<WindowAction>>>& per_individual) {
  std::ostringstream os;
  text::write_csv_row(os, {"individual_id", "window_index", "action", "accel_mag", "decel_mag", "brake_mag"});
  for (const auto& [id, windows] : per_individual)
    for (const auto& w : windows)
      text::write_csv_row(os, {id, std::to_string(w.window_index), std::string(to_string(w.action)),
                               text::format_double(w.accel_mag), text::format_double(w.decel_mag),
                               text::format_double(w.brake_mag)});
  return os.str();
}

}  // namespace iclv::imputer
