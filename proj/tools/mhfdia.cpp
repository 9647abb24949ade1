// mhfdia run / sweep. Exit codes: 0 ran, 2 configuration error, 3 numerical
// failure, 1 anything else (I/O).
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "mhfdia/mhfdia.hpp"

namespace {

using namespace mhfdia;

struct Common {
  std::string config_path;
  std::string attack;
  std::string scenario;
  std::string path;
  std::string out;
  std::string format;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<double> attack_start;
  bool gzip = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "INI configuration file");
  app->add_option("--scenario", c.scenario, "grid | vehicle | synthetic");
  app->add_option("--attack", c.attack, "mh | eig | range | gstealth | static | none");
  app->add_option("--path", c.path, "vehicle path: line | circle | figure8");
  app->add_option("--attack-start", c.attack_start, "attack start time [s]");
  app->add_option("--seed", c.seed, "random seed");
  app->add_option("--out", c.out, "output directory");
  app->add_option("--format", c.format, "csv | json");
  app->add_flag("--gzip", c.gzip, "gzip the output file");
  app->add_option("--set", c.overrides, "section.key=value override (repeatable)");
}

RunConfig resolve(const Common& c) {
  RunConfig cfg;
  if (!c.config_path.empty()) {
    cfg = load_config(c.config_path);
  } else {
    const ScenarioKind s = c.scenario.empty() ? ScenarioKind::grid : parse_scenario_kind(c.scenario);
    cfg = RunConfig::defaults_for(s, c.path.empty() ? PathKind::line : parse_path_kind(c.path));
  }
  if (!c.scenario.empty() && !c.config_path.empty()) apply_setting(cfg, "run.scenario", c.scenario);
  if (!c.path.empty()) {
    const PathKind p = parse_path_kind(c.path);
    if (cfg.scenario == ScenarioKind::vehicle && !c.config_path.empty()) {
      cfg.path = p;
    } else if (cfg.scenario == ScenarioKind::vehicle) {
      cfg = RunConfig::defaults_for(ScenarioKind::vehicle, p);
    }
  }
  if (!c.attack.empty()) cfg.attack = parse_attack_kind(c.attack);
  if (c.attack_start) cfg.attack_start = *c.attack_start;
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.output_dir = c.out;
  if (!c.format.empty()) cfg.output.format = parse_export_format(c.format);
  if (c.gzip) cfg.output.gzip = true;
  for (const std::string& kv : c.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects section.key=value, got '" + kv + "'");
    apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

std::string output_file(const RunConfig& cfg, const std::string& stem) {
  std::filesystem::create_directories(cfg.output_dir);
  const char* ext = cfg.output.format == ExportFormat::csv ? ".csv" : ".json";
  return (std::filesystem::path(cfg.output_dir) / (stem + ext)).string();
}

int do_run(const Common& c) {
  const RunConfig cfg = resolve(c);
  const SimTrace trace = run(cfg);
  const std::string path = export_trace(trace, output_file(cfg, "trace"), cfg.output);
  double max_res = 0.0, alarms = 0.0, max_alpha = 0.0;
  for (double r : trace.series("residual")) max_res = std::max(max_res, r);
  for (double a : trace.series("alarm")) alarms += a;
  for (double a : trace.series("alpha")) max_alpha = std::max(max_alpha, a);
  std::cout << "rows=" << trace.rows.size() << " alarms=" << alarms << " max_residual=" << format_number(max_res)
            << " max_alpha=" << format_number(max_alpha) << (trace.truncated ? " truncated" : "") << " -> " << path
            << "\n";
  return 0;
}

int do_sweep(const Common& c, const std::string& param, const std::string& values, int reps, int warmup) {
  const RunConfig cfg = resolve(c);
  SweepSpec spec;
  spec.param = parse_sweep_param(param);
  spec.values = parse_number_list(values);
  spec.reps = reps;
  spec.warmup_windows = warmup;
  const SimTrace table = sweep(spec, cfg);
  const std::string path = export_trace(table, output_file(cfg, "sweep_" + to_string(spec.param)), cfg.output);
  std::cout << to_csv(table) << "-> " << path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Moving-horizon false data injection attack simulator"};
  app.require_subcommand(1);
  Common run_opts, sweep_opts;
  CLI::App* run_cmd = app.add_subcommand("run", "simulate one scenario and export its trace");
  add_common(run_cmd, run_opts);
  CLI::App* sweep_cmd = app.add_subcommand("sweep", "sweep a generator parameter and export a summary table");
  add_common(sweep_cmd, sweep_opts);
  std::string param = "M", values = "100,500,2000,5000";
  int reps = 50, warmup = 100;
  sweep_cmd->add_option("--param", param, "M | support | lambda0 | T");
  sweep_cmd->add_option("--values", values, "comma-separated values");
  sweep_cmd->add_option("--reps", reps, "repetitions per value");
  sweep_cmd->add_option("--warmup", warmup, "history warm-up windows per repetition");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  try {
    if (*run_cmd) return do_run(run_opts);
    return do_sweep(sweep_opts, param, values, reps, warmup);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
