#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "test_util.hpp"

using namespace mhfdia;
namespace fs = std::filesystem;

namespace {

RunConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

RunConfig short_grid(AttackKind attack) {
  RunConfig c = RunConfig::defaults_for(ScenarioKind::grid);
  c.attack = attack;
  c.duration = 3.0;
  return c;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mhfdia_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

int cli(const std::string& args) {
  const std::string cmd = std::string("cd ") + MHFDIA_SOURCE_DIR + " && " + MHFDIA_CLI_PATH + " " + args +
                          " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, GridFileMatchesDefaults) {
  const RunConfig c = load_config(std::string(MHFDIA_SOURCE_DIR) + "/configs/grid.cfg");
  EXPECT_EQ(c.scenario, ScenarioKind::grid);
  EXPECT_EQ(c.window, 20);
  EXPECT_NEAR(c.stealth_bound(), 0.6352, 1e-12);
  EXPECT_EQ(c.support, (std::vector<int>{1, 2, 9, 11, 12, 16, 17}));
  EXPECT_EQ(c.max_iterations, 2000);
  EXPECT_EQ(c.topology, "data/ieee14.topology");
}

TEST(Config, ScenarioDefaultsApplyBeforeKeys) {
  const RunConfig v = parse("[run]\nscenario = vehicle\n[vehicle]\npath = circle\n");
  EXPECT_EQ(v.path, PathKind::circle);
  EXPECT_DOUBLE_EQ(v.attack_start, 50.0);
  EXPECT_DOUBLE_EQ(v.stealth_bound(), 1.0);
  EXPECT_EQ(v.support, (std::vector<int>{3, 4}));
  const RunConfig s = parse("[run]\nscenario = synthetic\n[attack]\nwindow = 5\n");
  EXPECT_EQ(s.window, 5);
  EXPECT_DOUBLE_EQ(s.stealth_bound(), 0.5);
  const RunConfig e = parse("[attack]\nepsilon = 0.3\n");
  EXPECT_DOUBLE_EQ(e.stealth_bound(), 0.3);
}

TEST(Config, ErrorsAreConfigErrors) {
  EXPECT_THROW(parse("[attack]\nwindwo = 20\n"), ConfigError);
  EXPECT_THROW(parse("[attack]\nwindow = twenty\n"), ConfigError);
  EXPECT_THROW(parse("[attack]\nsupport = 1,x\n"), ConfigError);
  EXPECT_THROW(parse("[attack]\nsupport = 1.5\n"), ConfigError);
  EXPECT_THROW(parse("[run]\nscenario = ocean\n"), ConfigError);
  EXPECT_THROW(parse("[attack\nwindow = 3\n"), ConfigError);
  EXPECT_THROW(parse("[attack]\nearly_stop = maybe\n"), ConfigError);
  EXPECT_THROW(load_config("/nonexistent.cfg"), ConfigError);
  RunConfig c = RunConfig::defaults_for(ScenarioKind::grid);
  c.attack_start = 0.1;  // before the first full window
  EXPECT_THROW(c.validate(), ConfigError);
  c = RunConfig::defaults_for(ScenarioKind::grid);
  c.window = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = RunConfig::defaults_for(ScenarioKind::grid);
  c.step0 = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Run, RowCountAndColumns) {
  const SimTrace t = run(short_grid(AttackKind::mh));
  EXPECT_EQ(t.rows.size(), 300u);
  EXPECT_EQ(t.columns.front(), "t");
  EXPECT_NO_THROW(t.column("alpha_window"));
  EXPECT_NO_THROW(t.column("e19"));
  EXPECT_EQ(t.metadata.at("attack"), "mh");
}

TEST(Run, GridMhIsSilentAndAlphaWindowIsReproducible) {
  const RunConfig cfg = short_grid(AttackKind::mh);
  const SimTrace t = run(cfg);
  for (double a : t.series("alarm")) EXPECT_EQ(a, 0.0);
  // recompute ||H^+ e_I|| from the exported injection columns
  const PlantModel p = build_grid_plant(default_ieee14(), 0.01).plant;
  const MheEstimator mhe(build_horizon(p, 20));
  std::vector<Vector> e;
  for (const auto& row : t.rows) {
    Vector v(19);
    for (Index c = 0; c < 19; ++c) v(c) = row[t.column("e" + std::to_string(c + 1))];
    e.push_back(v);
  }
  const auto alpha_window = t.series("alpha_window");
  const auto alpha = t.series("alpha");
  for (std::size_t k = 19; k < e.size(); ++k) {
    const std::vector<Vector> w(e.begin() + static_cast<long>(k) - 19, e.begin() + static_cast<long>(k) + 1);
    const double oracle = (mhe.pseudo_inverse() * stack_window(w, 20, 19)).norm();
    EXPECT_NEAR(alpha_window[k], oracle, 1e-9 * (1.0 + oracle));
    // on attacked windows the generator's own value agrees
    if (alpha[k] > 0.0) { EXPECT_NEAR(alpha[k], oracle, 1e-6 * (1.0 + oracle)); }
  }
}

TEST(Run, AttackFreeGridHasNoInjection) {
  const SimTrace t = run(short_grid(AttackKind::none));
  for (const auto& name : {"alpha", "alpha_window", "alarm"})
    for (double v : t.series(name)) EXPECT_EQ(v, 0.0);
}

TEST(Run, LuenbergerEstimateConverges) {
  RunConfig c = RunConfig::defaults_for(ScenarioKind::synthetic);
  c.synthetic_states = 3;
  c.synthetic_outputs = 5;
  c.attack = AttackKind::none;
  c.estimator = EstimatorKind::luenberger;
  const SimTrace t = run(c);
  EXPECT_LT(t.series("estimation_error").back(), 1e-6);
}

TEST(Run, SyntheticNoisyRunStaysStealthy) {
  const RunConfig c = load_config(std::string(MHFDIA_SOURCE_DIR) + "/configs/synthetic.cfg");
  const SimTrace t = run(c);
  for (double r : t.series("residual")) EXPECT_LE(r, c.stealth_bound());
}

TEST(Run, IdenticalConfigIdenticalCsv) {
  RunConfig c = load_config(std::string(MHFDIA_SOURCE_DIR) + "/configs/synthetic.cfg");
  EXPECT_EQ(to_csv(run(c)), to_csv(run(c)));
  RunConfig other = c;
  other.seed = 8;
  EXPECT_NE(to_csv(run(c)), to_csv(run(other)));
}

TEST(Export, CsvRoundTrip) {
  SimTrace t;
  t.columns = {"a", "b"};
  t.metadata["seed"] = "3";
  t.add_row({1.0, 1.0 / 3.0});
  t.add_row({-2.5e-17, 123456789.123});
  const SimTrace back = from_csv(to_csv(t));
  EXPECT_EQ(back.columns, t.columns);
  EXPECT_EQ(back.metadata, t.metadata);
  ASSERT_EQ(back.rows.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(back.rows[i][j], t.rows[i][j], 1e-11 * std::abs(t.rows[i][j]));
  EXPECT_THROW(t.add_row({1.0}), ConfigError);
  EXPECT_THROW(t.column("c"), ConfigError);
}

TEST(Export, JsonRoundTripAndGzip) {
  const SimTrace t = run(short_grid(AttackKind::eig));
  const SimTrace back = from_json(to_json(t));
  EXPECT_EQ(to_csv(back), to_csv(t));
  const fs::path dir = scratch("export");
  const std::string plain = export_trace(t, (dir / "t.json").string(), {ExportFormat::json, false});
  const std::string gz = export_trace(t, (dir / "t.json").string(), {ExportFormat::json, true});
  EXPECT_EQ(gz, (dir / "t.json.gz").string());
  gzFile f = gzopen(gz.c_str(), "rb");
  ASSERT_NE(f, nullptr);
  std::string inflated;
  char buf[4096];
  for (int n; (n = gzread(f, buf, sizeof(buf))) > 0;) inflated.append(buf, static_cast<std::size_t>(n));
  gzclose(f);
  EXPECT_EQ(inflated, slurp(plain));
  EXPECT_LT(fs::file_size(gz), fs::file_size(plain));
  EXPECT_THROW(export_trace(t, "/nonexistent/dir/t.csv"), std::runtime_error);
}

TEST(Sweep, SupportSizeRaisesEffectiveness) {
  SweepSpec spec;
  spec.param = SweepParam::support_size;
  spec.values = {1, 10, 19};
  spec.reps = 4;
  spec.warmup_windows = 20;
  RunConfig base = RunConfig::defaults_for(ScenarioKind::grid);
  base.max_iterations = 300;
  const SimTrace t = sweep(spec, base);
  const auto mean = t.series("mean_alpha");
  EXPECT_LT(mean[0], mean[1]);
  EXPECT_LT(mean[1], mean[2]);
  for (const auto& row : t.rows) {
    // stealth is only promised while every window stayed feasible
    if (row[t.column("infeasible_windows")] == 0.0) { EXPECT_LE(row[t.column("max_stealth")], 0.6352); }
    EXPECT_LE(row[t.column("min_alpha")], row[t.column("median_alpha")]);
    EXPECT_LE(row[t.column("median_alpha")], row[t.column("max_alpha")]);
  }
}

TEST(Sweep, ResultDoesNotDependOnThreadCount) {
  SweepSpec spec;
  spec.param = SweepParam::iterations;
  spec.values = {50, 200};
  spec.reps = 6;
  spec.warmup_windows = 10;
  RunConfig base = RunConfig::defaults_for(ScenarioKind::grid);
  setenv("MHFDIA_THREADS", "1", 1);
  const std::string one = to_csv(sweep(spec, base));
  setenv("MHFDIA_THREADS", "4", 1);
  const std::string four = to_csv(sweep(spec, base));
  unsetenv("MHFDIA_THREADS");
  EXPECT_EQ(one, four);
}

TEST(Sweep, Helpers) {
  EXPECT_EQ(parse_sweep_param("M"), SweepParam::iterations);
  EXPECT_EQ(parse_sweep_param("lambda0"), SweepParam::step0);
  EXPECT_THROW(parse_sweep_param("K"), ConfigError);
  const auto s = random_support(19, 7, 3);
  EXPECT_EQ(s.size(), 7u);
  EXPECT_TRUE(std::is_sorted(s.begin(), s.end()));
  EXPECT_EQ(s, random_support(19, 7, 3));
  EXPECT_THROW(random_support(5, 6, 1), ConfigError);
  EXPECT_DOUBLE_EQ(quantile({4.0, 1.0, 3.0, 2.0}, 0.5), 2.5);
  std::vector<int> hits(100, 0);
  parallel_for(100, [&](std::size_t i) { hits[i] += 1; });
  EXPECT_EQ(std::count(hits.begin(), hits.end(), 1), 100);
  EXPECT_THROW(parallel_for(10, [](std::size_t i) { if (i == 3) throw NumericalError("boom"); }), NumericalError);
}

TEST(Cli, ExitCodes) {
  const fs::path out = scratch("cli");
  EXPECT_EQ(cli("run --config configs/synthetic.cfg --out " + out.string()), 0);
  EXPECT_TRUE(fs::exists(out / "trace.csv"));
  EXPECT_EQ(cli("run --config configs/missing.cfg"), 2);
  EXPECT_EQ(cli("run --config configs/synthetic.cfg --set attack.window=0 --out " + out.string()), 2);
  EXPECT_EQ(cli("run --bogus-flag"), 2);
  // a coarse sample period makes the grid discretisation unstable
  EXPECT_EQ(cli("run --scenario grid --set run.sample_period=0.5 --set run.duration=30 --set run.attack_start=10 --out " +
                out.string()),
            3);
  EXPECT_EQ(cli("run --config configs/synthetic.cfg --out /proc/mhfdia_cannot_write"), 1);
}

TEST(Cli, SweepWritesSummary) {
  const fs::path out = scratch("cli_sweep");
  EXPECT_EQ(cli("sweep --scenario grid --param support --values 1,5 --reps 2 --warmup 5 --out " + out.string()), 0);
  const SimTrace t = from_csv(slurp(out / "sweep_support.csv"));
  EXPECT_EQ(t.rows.size(), 2u);
}
