#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "wobble/pnet.hpp"

namespace wobble::pnet {

namespace {

using json = nlohmann::json;

void reject_unknown_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!ok.contains(key)) throw std::invalid_argument(where + ": unknown key '" + key + "'");
  }
}

std::optional<ExerciseClass> parse_motion_class(const std::string& label) {
  if (label == "still") return std::nullopt;
  return class_from_label(label);
}

}  // namespace

Scenario parse_scenario(const json& j, const std::filesystem::path& base_dir) {
  try {
    if (!j.is_object()) throw std::invalid_argument("scenario must be a JSON object");
    reject_unknown_keys(j, {"horizon_s", "initial_mode", "initial_frequency_mhz", "events", "motion"}, "scenario");

    Scenario sc;
    sc.horizon_s = j.value("horizon_s", 60.0);
    if (!(sc.horizon_s > 0.0) || !std::isfinite(sc.horizon_s)) throw std::invalid_argument("horizon_s must be positive");
    if (j.contains("initial_mode")) sc.initial_mode = mode_from_name(j["initial_mode"].get<std::string>());
    if (j.contains("initial_frequency_mhz")) sc.initial_frequency_mhz = j["initial_frequency_mhz"].get<int>();

    if (j.contains("motion")) {
      const json& m = j["motion"];
      if (m.is_string()) {
        const auto path = base_dir / m.get<std::string>();
        std::ifstream is(path, std::ios::binary);
        if (!is) throw std::runtime_error("cannot open motion recording " + path.string());
        sc.recording = signal::read_csv(is, ExerciseClass::kOther);
      } else {
        for (const json& seg : m) {
          reject_unknown_keys(seg, {"t0", "t1", "class", "seed"}, "motion segment");
          MotionSegment s;
          s.t0_s = seg.at("t0").get<double>();
          s.t1_s = seg.at("t1").get<double>();
          s.cls = parse_motion_class(seg.at("class").get<std::string>());
          s.seed = seg.value("seed", std::uint64_t{0});
          if (!(s.t0_s >= 0.0 && s.t1_s > s.t0_s)) throw std::invalid_argument("motion segment needs 0 <= t0 < t1");
          sc.motion.push_back(s);
        }
      }
    }

    double last_t = 0.0;
    std::vector<std::pair<double, MotionSegment>> motion_events;
    for (const json& ev : j.value("events", json::array())) {
      reject_unknown_keys(ev, {"t_s", "command", "frequency_mhz", "motion"}, "event");
      const double t = ev.at("t_s").get<double>();
      if (!(t >= 0.0)) throw std::invalid_argument("event time must be non-negative");
      if (t > sc.horizon_s) throw std::invalid_argument("event at " + std::to_string(t) + " s lies beyond the horizon");
      if (t < last_t) throw std::invalid_argument("events are not ordered by time");
      last_t = t;
      if (ev.contains("command") == ev.contains("motion")) {
        throw std::invalid_argument("event needs exactly one of 'command' or 'motion'");
      }
      if (ev.contains("command")) {
        ExternalCommand cmd{mode_from_name(ev["command"].get<std::string>()), std::nullopt};
        if (ev.contains("frequency_mhz")) cmd.frequency_mhz = ev["frequency_mhz"].get<int>();
        sc.commands.push_back({t, cmd});
      } else {
        const json& mv = ev["motion"];
        reject_unknown_keys(mv, {"class", "seed"}, "motion event");
        MotionSegment s;
        s.t0_s = t;
        s.cls = parse_motion_class(mv.at("class").get<std::string>());
        s.seed = mv.value("seed", std::uint64_t{0});
        motion_events.emplace_back(t, s);
      }
    }
    for (std::size_t i = 0; i < motion_events.size(); ++i) {
      MotionSegment s = motion_events[i].second;
      s.t1_s = i + 1 < motion_events.size() ? motion_events[i + 1].first : sc.horizon_s;
      if (s.t1_s > s.t0_s) sc.motion.push_back(s);
    }
    return sc;
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed scenario: ") + e.what());
  }
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open scenario " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw std::invalid_argument("scenario " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_scenario(j, path.parent_path());
}

}  // namespace wobble::pnet
