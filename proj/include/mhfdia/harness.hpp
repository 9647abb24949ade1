#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <deque>
#include <mutex>
#include <random>
#include <thread>

#include "mhfdia/baselines.hpp"
#include "mhfdia/config.hpp"
#include "mhfdia/estimators.hpp"
#include "mhfdia/power_grid.hpp"
#include "mhfdia/trace.hpp"
#include "mhfdia/vehicle.hpp"

namespace mhfdia {

// Random plant with A = Q diag(lambda) Q^T, lambda in [0.6, 0.95], and
// Gaussian C.
inline PlantModel random_stable_plant(Index states, Index outputs, std::uint64_t seed) {
  require(states >= 1 && outputs >= 1, "plant dimensions must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> eig(0.6, 0.95);
  Matrix g(states, states);
  for (Index i = 0; i < g.size(); ++i) g.data()[i] = normal(rng);
  const Matrix q = Eigen::HouseholderQR<Matrix>(g).householderQ();
  Vector lambda(states);
  for (Index i = 0; i < states; ++i) lambda(i) = eig(rng);
  PlantModel p;
  p.transition = q * lambda.asDiagonal() * q.transpose();
  p.measurement = Matrix(outputs, states);
  for (Index i = 0; i < p.measurement.size(); ++i) p.measurement.data()[i] = normal(rng);
  return p;
}

// Linear scenario pieces shared by run() and sweep().
struct LinearScenario {
  PlantModel plant;
  Vector initial_state;
};

inline LinearScenario build_linear_scenario(const RunConfig& cfg) {
  LinearScenario s;
  if (cfg.scenario == ScenarioKind::grid) {
    const GridTopology topo = cfg.topology.empty() ? default_ieee14() : load_topology(cfg.topology);
    s.plant = build_grid_plant(topo, cfg.sample_period, {cfg.kp, cfg.kd}).plant;
  } else if (cfg.scenario == ScenarioKind::synthetic) {
    s.plant = random_stable_plant(cfg.synthetic_states, cfg.synthetic_outputs, cfg.seed);
    s.plant.sample_period = cfg.sample_period;
  } else {
    throw ConfigError("not a linear scenario");
  }
  s.plant.noise_bound = cfg.noise_window_bound;
  const Index n = s.plant.states();
  if (cfg.initial_state.empty()) {
    s.initial_state = Vector::Ones(n);
  } else {
    require(static_cast<Index>(cfg.initial_state.size()) == n, "initial_state must have one entry per state");
    s.initial_state = Eigen::Map<const Vector>(cfg.initial_state.data(), n);
  }
  return s;
}

inline std::vector<std::string> numbered(const std::string& prefix, Index count) {
  std::vector<std::string> out;
  for (Index i = 1; i <= count; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

// Closed loop x+ = A x, y = C x + v + e with an MHE (or Luenberger) estimate
// and a windowed residual detector with threshold epsilon.
inline SimTrace run_linear(const RunConfig& cfg) {
  cfg.validate();
  const LinearScenario sc = build_linear_scenario(cfg);
  const PlantModel& plant = sc.plant;
  const Index n = plant.states(), m = plant.outputs(), T = cfg.window;
  const AttackSupport support = AttackSupport::from_one_based(cfg.support, m);
  const GeneratorConfig gen_cfg = cfg.generator();
  const HorizonObservation horizon = build_horizon(plant, T);
  const MheEstimator mhe(horizon);
  const BddDetector bdd(mhe, gen_cfg.epsilon);
  std::optional<LuenbergerObserver> observer;
  if (cfg.estimator == EstimatorKind::luenberger) observer = LuenbergerObserver::with_default_gain(plant);
  NoiseModel noise(cfg.noise, cfg.noise_window_bound, cfg.seed);

  std::optional<MovingHorizonAttacker> attacker;
  if (cfg.attack == AttackKind::mh) attacker.emplace(horizon, support, gen_cfg);
  Vector bias = cfg.bias.empty() ? Vector(Vector::Constant(n, 0.05))
                                 : Vector(Eigen::Map<const Vector>(cfg.bias.data(), static_cast<Index>(cfg.bias.size())));
  require(bias.size() == n, "bias must have one entry per state");
  Vector fixed_injection = Vector::Zero(m);
  if (cfg.attack == AttackKind::range) fixed_injection = range_space_attack(plant.measurement, bias);
  if (cfg.attack == AttackKind::gstealth) {
    GeneralizedStealthParams gp;
    gp.bias_direction = bias;
    gp.max_bias = bias.norm();
    gp.step_budget = gen_cfg.epsilon / static_cast<double>(T);
    if (cfg.gstealth_masked) gp.support = support;
    fixed_injection = generalized_stealth_attack(plant.measurement, gp);
  }
  if (cfg.attack == AttackKind::static_t1) {
    GeneratorConfig one = gen_cfg;
    one.epsilon = gen_cfg.epsilon / static_cast<double>(T);
    one.noise_bound = gen_cfg.noise_bound / std::sqrt(static_cast<double>(T));
    fixed_injection = static_t1_attack(plant, support, one).injection;
  }

  SimTrace trace;
  trace.columns = {"t"};
  for (const auto& c : numbered("x", n)) trace.columns.push_back(c);
  for (const auto& c : numbered("x_hat", n)) trace.columns.push_back(c);
  for (const auto& c : numbered("e", m)) trace.columns.push_back(c);
  for (const char* c : {"alpha", "alpha_window", "estimation_error", "residual", "alarm", "feasible"})
    trace.columns.push_back(c);
  trace.metadata["scenario"] = to_string(cfg.scenario);
  trace.metadata["attack"] = to_string(cfg.attack);
  trace.metadata["seed"] = std::to_string(cfg.seed);
  trace.metadata["window"] = std::to_string(T);
  trace.metadata["epsilon"] = format_number(gen_cfg.epsilon);
  trace.metadata["spectral_radius"] = format_number(linalg::spectral_radius(plant.transition));

  Vector x = sc.initial_state;
  Vector x_obs = Vector::Zero(n);
  AttackHistory history(T, m);
  std::deque<Vector> window;
  const auto steps = static_cast<long>(std::ceil(cfg.duration / cfg.sample_period - 1e-9));
  for (long k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) * cfg.sample_period;
    const Vector y_clean = plant.measurement * x + noise.sample_step(m, T);
    const bool active = cfg.attack != AttackKind::none && t >= cfg.attack_start - 1e-12 && k >= T - 1;
    Vector e = Vector::Zero(m);
    double alpha = 0.0;
    bool feasible = true;
    if (active) {
      switch (cfg.attack) {
        case AttackKind::mh: {
          const AttackStepResult r = attacker->step(history);
          e = r.injection;
          alpha = r.alpha;
          feasible = r.feasible;
          break;
        }
        case AttackKind::eig: {
          const EigenvalueAttackResult r = eigenvalue_mh_attack(horizon, history.stacked(), support, gen_cfg.eps_tilde());
          e = r.injection;
          feasible = r.feasible;
          break;
        }
        default:
          e = fixed_injection;
      }
    }
    Vector e_window(T * m);
    e_window.head((T - 1) * m) = history.stacked();
    e_window.tail(m) = e;
    const double alpha_window = (mhe.pseudo_inverse() * e_window).norm();
    if (cfg.attack != AttackKind::mh) alpha = alpha_window;
    history.push(e);

    const Vector y = y_clean + e;
    window.push_back(y);
    if (static_cast<Index>(window.size()) > T) window.pop_front();
    Vector x_hat = Vector::Zero(n);
    DetectorVerdict verdict;
    if (static_cast<Index>(window.size()) == T) {
      Vector y_window(T * m);
      for (Index j = 0; j < T; ++j) y_window.segment(j * m, m) = window[static_cast<std::size_t>(j)];
      x_hat = mhe.estimate(y_window);
      verdict = bdd.check(y_window);
    }
    if (observer) {
      x_hat = x_obs;
      x_obs = observer->step(x_obs, y);
    }

    std::vector<double> row{t};
    for (Index i = 0; i < n; ++i) row.push_back(x(i));
    for (Index i = 0; i < n; ++i) row.push_back(x_hat(i));
    for (Index i = 0; i < m; ++i) row.push_back(e(i));
    row.push_back(alpha);
    row.push_back(alpha_window);
    row.push_back(static_cast<Index>(window.size()) == T || observer ? (x_hat - x).norm() : 0.0);
    row.push_back(verdict.residual);
    row.push_back(verdict.alarm ? 1.0 : 0.0);
    row.push_back(feasible ? 1.0 : 0.0);
    trace.add_row(std::move(row));
    x = plant.transition * x;
  }
  return trace;
}

inline VehicleRunConfig to_vehicle_config(const RunConfig& cfg) {
  require(cfg.attack == AttackKind::none || cfg.attack == AttackKind::mh || cfg.attack == AttackKind::eig,
          "vehicle scenario supports attacks none, mh and eig");
  VehicleRunConfig v;
  v.params.offset = cfg.offset;
  v.params.wheel_radius = cfg.wheel_radius;
  v.params.half_track = cfg.half_track;
  v.params.gain = cfg.track_gain;
  v.params.sample_period = cfg.sample_period;
  require(cfg.process_std.size() == 3 && cfg.measurement_std.size() == 6,
          "vehicle.process_std needs 3 entries and vehicle.measurement_std 6");
  v.params.process_std = Eigen::Map<const Vector>(cfg.process_std.data(), 3);
  v.params.measurement_std = Eigen::Map<const Vector>(cfg.measurement_std.data(), 6);
  v.path.kind = cfg.path;
  v.path.speed = cfg.path_speed;
  v.path.radius = cfg.path_radius;
  if (cfg.initial_pose.empty()) {
    v.initial_pose = default_initial_pose(cfg.path);
  } else {
    require(cfg.initial_pose.size() == 3, "vehicle.initial_pose needs 3 entries (theta, x, y)");
    v.initial_pose = Eigen::Map<const Vector>(cfg.initial_pose.data(), 3);
  }
  v.duration = cfg.duration;
  v.attack_start = cfg.attack_start;
  v.attack = cfg.attack;
  v.support = cfg.support;
  v.window = cfg.window;
  v.generator = cfg.generator();
  v.seed = cfg.seed;
  return v;
}

inline SimTrace run(const RunConfig& cfg) {
  cfg.validate();
  if (cfg.scenario == ScenarioKind::vehicle) return run_vehicle_scenario(to_vehicle_config(cfg));
  return run_linear(cfg);
}

enum class SweepParam { iterations, support_size, step0, window };

inline SweepParam parse_sweep_param(const std::string& s) {
  if (s == "M") return SweepParam::iterations;
  if (s == "support") return SweepParam::support_size;
  if (s == "lambda0" || s == "step0") return SweepParam::step0;
  if (s == "T") return SweepParam::window;
  throw ConfigError("unknown sweep parameter '" + s + "' (M, support, lambda0, T)");
}

inline std::string to_string(SweepParam p) {
  switch (p) {
    case SweepParam::iterations: return "M";
    case SweepParam::support_size: return "support";
    case SweepParam::step0: return "lambda0";
    case SweepParam::window: return "T";
  }
  return "M";
}

struct SweepSpec {
  SweepParam param = SweepParam::iterations;
  std::vector<double> values;
  int reps = 20;
  int warmup_windows = 100;

  void validate() const {
    require(!values.empty(), "sweep needs at least one value");
    require(reps >= 1, "repetitions must be at least 1");
    require(warmup_windows >= 0, "warm-up length must be non-negative");
  }
};

// Worker count: hardware concurrency capped by MHFDIA_THREADS.
inline unsigned worker_count() {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("MHFDIA_THREADS")) {
    const int cap = std::atoi(env);
    if (cap >= 1) n = std::min(n, static_cast<unsigned>(cap));
  }
  return n;
}

// Runs job(i) for i in [0, count) on a small pool; results are written by
// index so the outcome does not depend on scheduling.
template <class Job>
void parallel_for(std::size_t count, Job job) {
  const unsigned workers = std::min<std::size_t>(worker_count(), std::max<std::size_t>(count, 1));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_lock;
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        job(i);
      } catch (...) {
        std::lock_guard<std::mutex> g(failure_lock);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
}

inline std::vector<int> random_support(Index outputs, Index size, std::uint64_t seed) {
  require(size >= 1 && size <= outputs, "support size must lie in [1, m]");
  std::mt19937_64 rng(seed);
  std::vector<int> all(static_cast<std::size_t>(outputs));
  for (Index i = 0; i < outputs; ++i) all[static_cast<std::size_t>(i)] = static_cast<int>(i + 1);
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(static_cast<std::size_t>(size));
  std::sort(all.begin(), all.end());
  return all;
}

struct SweepSample {
  double alpha = 0.0;
  double stealth = 0.0;  // max window residual ||(I - H H^+) e_I|| seen in the rep
  int infeasible = 0;    // windows whose history admitted no stealthy injection
};

// One repetition: the history is built by `warmup` windows of the reference
// generator, then one window is generated with the evaluated configuration.
// M and lambda0 act on the evaluated window only; support and T shape both.
inline SweepSample sweep_sample(const PlantModel& plant, const RunConfig& base, const SweepSpec& spec, double value,
                                std::uint64_t rep_seed) {
  const Index m = plant.outputs();
  RunConfig ref = base;
  Index support_size = static_cast<Index>(base.support.size());
  if (spec.param == SweepParam::support_size) support_size = static_cast<Index>(value);
  if (spec.param == SweepParam::window) ref.window = static_cast<Index>(value);
  ref.support = random_support(m, support_size, rep_seed);
  RunConfig eval = ref;
  if (spec.param == SweepParam::iterations) eval.max_iterations = static_cast<int>(value);
  if (spec.param == SweepParam::step0) eval.step0 = value;

  const HorizonObservation h = build_horizon(plant, ref.window);
  const AttackSupport support = AttackSupport::from_one_based(ref.support, m);
  const auto basis = std::make_shared<const NullSpaceBasis>(nullspace_basis(h, support, ref.lookahead));
  const GeneratorConfig ref_gen = ref.generator(), eval_gen = eval.generator();
  AttackHistory history(ref.window, m);
  SweepSample out;
  auto window_residual = [&](const Vector& current) {
    Vector e(h.rows());
    e.head(h.rows() - m) = history.stacked();
    e.tail(m) = current;
    return (h.u2.transpose() * e).norm();
  };
  for (int w = 0; w < spec.warmup_windows; ++w) {
    GeneratorWorkspace ws = GeneratorWorkspace::make(h, support, basis, history.stacked());
    const AttackStepResult r = generate_attack(ws, ref_gen);
    if (!r.feasible) ++out.infeasible;
    out.stealth = std::max(out.stealth, window_residual(r.injection));
    history.push(r.injection);
  }
  GeneratorWorkspace ws = GeneratorWorkspace::make(h, support, basis, history.stacked());
  const AttackStepResult r = generate_attack(ws, eval_gen);
  if (!r.feasible) ++out.infeasible;
  out.stealth = std::max(out.stealth, window_residual(r.injection));
  out.alpha = r.alpha;
  return out;
}

inline double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

// Summary per swept value: effectiveness mean/min/quartiles/max and
// stealthiness mean/max across repetitions.
inline SimTrace sweep(const SweepSpec& spec, const RunConfig& base) {
  spec.validate();
  base.validate();
  require(base.scenario != ScenarioKind::vehicle, "sweeps run on the grid or synthetic scenario");
  const LinearScenario sc = build_linear_scenario(base);
  const std::size_t nv = spec.values.size(), nr = static_cast<std::size_t>(spec.reps);
  std::vector<SweepSample> samples(nv * nr);
  parallel_for(samples.size(), [&](std::size_t idx) {
    const std::size_t vi = idx / nr, rep = idx % nr;
    samples[idx] = sweep_sample(sc.plant, base, spec, spec.values[vi], base.seed * 1000003ULL + rep);
  });

  SimTrace out;
  out.columns = {"value", "reps", "mean_alpha", "min_alpha", "q1_alpha", "median_alpha", "q3_alpha", "max_alpha",
                 "mean_stealth", "max_stealth", "infeasible_windows"};
  out.metadata["scenario"] = to_string(base.scenario);
  out.metadata["param"] = to_string(spec.param);
  out.metadata["epsilon"] = format_number(base.stealth_bound());
  out.metadata["warmup_windows"] = std::to_string(spec.warmup_windows);
  out.metadata["seed"] = std::to_string(base.seed);
  for (std::size_t vi = 0; vi < nv; ++vi) {
    std::vector<double> a, s;
    for (std::size_t r = 0; r < nr; ++r) {
      a.push_back(samples[vi * nr + r].alpha);
      s.push_back(samples[vi * nr + r].stealth);
    }
    double mean_a = 0.0, mean_s = 0.0, infeasible = 0.0;
    for (std::size_t r = 0; r < nr; ++r) {
      mean_a += a[r] / static_cast<double>(nr);
      mean_s += s[r] / static_cast<double>(nr);
      infeasible += samples[vi * nr + r].infeasible;
    }
    out.add_row({spec.values[vi], static_cast<double>(nr), mean_a, quantile(a, 0.0), quantile(a, 0.25),
                 quantile(a, 0.5), quantile(a, 0.75), quantile(a, 1.0), mean_s, quantile(s, 1.0), infeasible});
  }
  return out;
}

}  // namespace mhfdia
