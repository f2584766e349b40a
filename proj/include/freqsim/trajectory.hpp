#pragma once

#include <algorithm>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "freqsim/io.hpp"

namespace freqsim {

enum class EventKind { jump_mu1, jump_mu2, jump_nu, clamp, stop_tau, cull_restart };

inline std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::jump_mu1: return "jump-mu1";
    case EventKind::jump_mu2: return "jump-mu2";
    case EventKind::jump_nu: return "jump-nu";
    case EventKind::clamp: return "clamp";
    case EventKind::stop_tau: return "stop-tau";
    case EventKind::cull_restart: return "cull-restart";
  }
  return "unknown";
}

/// payload: overshoot magnitude for clamps, total mass for stop-tau, new state otherwise.
struct Event {
  double time = 0.0;
  EventKind kind = EventKind::clamp;
  double payload = 0.0;
};

/// Time-indexed path. `values2` is empty for scalar (frequency) paths.
struct Trajectory {
  std::vector<double> times;
  std::vector<double> values;
  std::vector<double> values2;
  std::vector<Event> events;

  bool is_pair() const { return !values2.empty(); }
  bool empty() const { return times.empty(); }
  double end_time() const { return times.empty() ? 0.0 : times.back(); }

  /// Appends a point; a point at the current end time overwrites the last one.
  void push(double t, double v) {
    if (!times.empty() && t <= times.back()) {
      if (t < times.back()) throw std::logic_error("Trajectory::push: time went backwards");
      values.back() = v;
      return;
    }
    times.push_back(t);
    values.push_back(v);
  }

  void push(double t, double v1, double v2) {
    if (!times.empty() && t <= times.back()) {
      if (t < times.back()) throw std::logic_error("Trajectory::push: time went backwards");
      values.back() = v1;
      values2.back() = v2;
      return;
    }
    times.push_back(t);
    values.push_back(v1);
    values2.push_back(v2);
  }

  void log(double t, EventKind kind, double payload) { events.push_back({t, kind, payload}); }

  std::size_t count(EventKind kind) const {
    return static_cast<std::size_t>(
        std::count_if(events.begin(), events.end(), [kind](const Event& e) { return e.kind == kind; }));
  }

  double max_payload(EventKind kind) const {
    double m = 0.0;
    for (const auto& e : events)
      if (e.kind == kind) m = std::max(m, e.payload);
    return m;
  }

  /// Last recorded value at or before t.
  double value_at(double t) const {
    if (times.empty()) throw std::logic_error("Trajectory::value_at: empty path");
    auto it = std::upper_bound(times.begin(), times.end(), t);
    if (it == times.begin()) return values.front();
    return values[static_cast<std::size_t>(it - times.begin()) - 1];
  }
};

/// CSV with columns time, value[, value2], event_kind. Events are attached to the point
/// with the same time; several kinds at one time are joined with ';'.
inline std::string trajectory_csv(const Trajectory& tr) {
  std::string out = tr.is_pair() ? "time,value,value2,event_kind\n" : "time,value,event_kind\n";
  std::size_t e = 0;
  for (std::size_t i = 0; i < tr.times.size(); ++i) {
    std::string kinds;
    while (e < tr.events.size() && tr.events[e].time <= tr.times[i]) {
      if (!kinds.empty()) kinds += ';';
      kinds += to_string(tr.events[e].kind);
      ++e;
    }
    out += format_double(tr.times[i]);
    out += ',';
    out += format_double(tr.values[i]);
    if (tr.is_pair()) {
      out += ',';
      out += format_double(tr.values2[i]);
    }
    out += ',';
    out += csv_field(kinds);
    out += '\n';
  }
  return out;
}

inline nlohmann::ordered_json trajectory_json(const Trajectory& tr) {
  nlohmann::ordered_json j;
  j["times"] = tr.times;
  j["values"] = tr.values;
  if (tr.is_pair()) j["values2"] = tr.values2;
  auto ev = nlohmann::ordered_json::array();
  for (const auto& e : tr.events)
    ev.push_back({{"time", e.time}, {"kind", std::string(to_string(e.kind))}, {"payload", e.payload}});
  j["events"] = std::move(ev);
  return j;
}

}  // namespace freqsim
