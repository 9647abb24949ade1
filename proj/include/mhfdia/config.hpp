#pragma once

#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "mhfdia/baselines.hpp"
#include "mhfdia/trace.hpp"
#include "mhfdia/vehicle.hpp"

namespace mhfdia {

enum class ScenarioKind { grid, vehicle, synthetic };

inline ScenarioKind parse_scenario_kind(const std::string& s) {
  if (s == "grid") return ScenarioKind::grid;
  if (s == "vehicle") return ScenarioKind::vehicle;
  if (s == "synthetic") return ScenarioKind::synthetic;
  throw ConfigError("unknown scenario '" + s + "'");
}

inline std::string to_string(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::grid: return "grid";
    case ScenarioKind::vehicle: return "vehicle";
    case ScenarioKind::synthetic: return "synthetic";
  }
  return "grid";
}

enum class EstimatorKind { mhe, luenberger };

inline EstimatorKind parse_estimator_kind(const std::string& s) {
  if (s == "mhe") return EstimatorKind::mhe;
  if (s == "luenberger") return EstimatorKind::luenberger;
  throw ConfigError("unknown estimator '" + s + "'");
}

struct RunConfig {
  ScenarioKind scenario = ScenarioKind::grid;
  AttackKind attack = AttackKind::mh;
  std::uint64_t seed = 1;
  double duration = 10.0;
  double sample_period = 0.01;
  double attack_start = 1.8;

  Index window = 20;
  double epsilon_i = 0.03176;     // per-step share; epsilon = T * epsilon_i
  std::optional<double> epsilon;  // explicit override of T * epsilon_i
  double noise_bound = 0.0;       // epsilon_v used by the generator
  double step0 = 1e-4;
  int max_iterations = 2000;
  double tolerance = 1e-6;
  bool early_stop = true;
  int lookahead = 1;
  std::vector<int> support = {1, 2, 9, 11, 12, 16, 17};

  NoiseKind noise = NoiseKind::none;
  double noise_window_bound = 0.0;  // bound on the stacked window noise

  // grid
  std::string topology;  // empty: built-in IEEE 14-bus data
  double kp = 0.5;
  double kd = 0.0;
  std::vector<double> initial_state = {0.1, -0.05, 0.08, -0.02, 0.04, 0.0, 0.0, 0.0, 0.0, 0.0};
  EstimatorKind estimator = EstimatorKind::mhe;
  std::vector<double> bias;  // range / gstealth bias; empty: 0.05 per state
  bool gstealth_masked = false;

  // vehicle
  PathKind path = PathKind::line;
  double path_speed = 0.3;
  double path_radius = 1.0;
  std::vector<double> initial_pose;  // empty: per-path default
  double track_gain = 1.0;
  double offset = 0.0562;
  double wheel_radius = 0.035;
  double half_track = 0.115;
  std::vector<double> process_std = {1e-3, 1e-3, 1e-3};
  std::vector<double> measurement_std = {0.05, 0.05, 0.01, 0.01, 0.5, 0.5};

  // synthetic
  Index synthetic_states = 4;
  Index synthetic_outputs = 6;

  std::string output_dir = ".";
  ExportOptions output;

  double stealth_bound() const { return epsilon ? *epsilon : static_cast<double>(window) * epsilon_i; }

  GeneratorConfig generator() const {
    GeneratorConfig g;
    g.epsilon = stealth_bound();
    g.noise_bound = noise_bound;
    g.step0 = step0;
    g.max_iterations = max_iterations;
    g.zero_tolerance = tolerance;
    g.early_stop = early_stop;
    g.lookahead_windows = lookahead;
    return g;
  }

  void validate() const {
    require(duration > 0.0 && sample_period > 0.0, "duration and sample period must be positive");
    require(window >= 1, "window length must be at least 1");
    require(attack_start >= static_cast<double>(window) * sample_period - 1e-12,
            "attack_start must be at least T * T_s (the first full window)");
    require(duration > attack_start, "duration must exceed attack_start");
    require(epsilon_i > 0.0, "epsilon_i must be positive");
    require(noise_window_bound >= 0.0, "noise bound must be non-negative");
    require(!support.empty(), "support must not be empty");
    generator().validate();
  }

  static RunConfig defaults_for(ScenarioKind s, PathKind path = PathKind::line) {
    RunConfig c;
    c.scenario = s;
    if (s == ScenarioKind::vehicle) {
      c.path = path;
      c.attack_start = default_attack_start(path);
      c.duration = c.attack_start + 10.0;
      c.epsilon_i = 0.05;
      c.support = {3, 4};
    } else if (s == ScenarioKind::synthetic) {
      c.support = {1};
      c.window = 4;
      c.epsilon_i = 0.1;
      c.attack_start = 0.5;
      c.duration = 2.0;
      c.initial_state.clear();
    }
    return c;
  }
};

inline std::vector<double> parse_number_list(const std::string& s) {
  std::vector<double> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    std::istringstream is(item);
    double v = 0.0;
    if (!(is >> v)) throw ConfigError("bad number list '" + s + "'");
    out.push_back(v);
  }
  return out;
}

inline std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  for (double v : parse_number_list(s)) {
    if (v != static_cast<int>(v)) throw ConfigError("expected integers in '" + s + "'");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

inline bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError("bad boolean '" + s + "'");
}

namespace detail {

template <class T>
T parse_scalar(const std::string& key, const std::string& value) {
  std::istringstream is(value);
  T out{};
  if (!(is >> out) || !(is >> std::ws).eof()) throw ConfigError("bad value for " + key + ": '" + value + "'");
  return out;
}

}  // namespace detail

// Applies one "section.key = value" setting; unknown keys are errors.
inline void apply_setting(RunConfig& c, const std::string& key, const std::string& value) {
  using detail::parse_scalar;
  if (key == "run.scenario") c.scenario = parse_scenario_kind(value);
  else if (key == "run.attack") c.attack = parse_attack_kind(value);
  else if (key == "run.seed") c.seed = parse_scalar<std::uint64_t>(key, value);
  else if (key == "run.duration") c.duration = parse_scalar<double>(key, value);
  else if (key == "run.sample_period") c.sample_period = parse_scalar<double>(key, value);
  else if (key == "run.attack_start") c.attack_start = parse_scalar<double>(key, value);
  else if (key == "attack.window") c.window = parse_scalar<Index>(key, value);
  else if (key == "attack.epsilon_i") c.epsilon_i = parse_scalar<double>(key, value);
  else if (key == "attack.epsilon") c.epsilon = parse_scalar<double>(key, value);
  else if (key == "attack.noise_bound") c.noise_bound = parse_scalar<double>(key, value);
  else if (key == "attack.step0") c.step0 = parse_scalar<double>(key, value);
  else if (key == "attack.max_iterations") c.max_iterations = parse_scalar<int>(key, value);
  else if (key == "attack.tolerance") c.tolerance = parse_scalar<double>(key, value);
  else if (key == "attack.early_stop") c.early_stop = parse_bool(value);
  else if (key == "attack.lookahead") c.lookahead = parse_scalar<int>(key, value);
  else if (key == "attack.support") c.support = parse_int_list(value);
  else if (key == "attack.bias") c.bias = parse_number_list(value);
  else if (key == "attack.gstealth_masked") c.gstealth_masked = parse_bool(value);
  else if (key == "noise.kind") c.noise = parse_noise_kind(value);
  else if (key == "noise.bound") c.noise_window_bound = parse_scalar<double>(key, value);
  else if (key == "grid.topology") c.topology = value;
  else if (key == "grid.kp") c.kp = parse_scalar<double>(key, value);
  else if (key == "grid.kd") c.kd = parse_scalar<double>(key, value);
  else if (key == "grid.initial_state") c.initial_state = parse_number_list(value);
  else if (key == "grid.estimator") c.estimator = parse_estimator_kind(value);
  else if (key == "vehicle.path") c.path = parse_path_kind(value);
  else if (key == "vehicle.speed") c.path_speed = parse_scalar<double>(key, value);
  else if (key == "vehicle.radius") c.path_radius = parse_scalar<double>(key, value);
  else if (key == "vehicle.initial_pose") c.initial_pose = parse_number_list(value);
  else if (key == "vehicle.gain") c.track_gain = parse_scalar<double>(key, value);
  else if (key == "vehicle.offset") c.offset = parse_scalar<double>(key, value);
  else if (key == "vehicle.wheel_radius") c.wheel_radius = parse_scalar<double>(key, value);
  else if (key == "vehicle.half_track") c.half_track = parse_scalar<double>(key, value);
  else if (key == "vehicle.process_std") c.process_std = parse_number_list(value);
  else if (key == "vehicle.measurement_std") c.measurement_std = parse_number_list(value);
  else if (key == "synthetic.states") c.synthetic_states = parse_scalar<Index>(key, value);
  else if (key == "synthetic.outputs") c.synthetic_outputs = parse_scalar<Index>(key, value);
  else if (key == "output.dir") c.output_dir = value;
  else if (key == "output.format") c.output.format = parse_export_format(value);
  else if (key == "output.gzip") c.output.gzip = parse_bool(value);
  else throw ConfigError("unknown configuration key '" + key + "'");
}

// INI file with [run], [attack], [noise], [grid], [vehicle], [synthetic] and
// [output] sections. Scenario and path are read first so that per-scenario
// defaults apply to every key the file leaves out.
inline RunConfig parse_config(std::istream& in) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  const ScenarioKind scenario = parse_scenario_kind(tree.get<std::string>("run.scenario", "grid"));
  const PathKind path = parse_path_kind(tree.get<std::string>("vehicle.path", "line"));
  RunConfig c = RunConfig::defaults_for(scenario, path);
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) throw ConfigError("config: key '" + section + "' outside a section");
    for (const auto& [key, value] : body) apply_setting(c, section + "." + key, value.data());
  }
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  return parse_config(in);
}

}  // namespace mhfdia
