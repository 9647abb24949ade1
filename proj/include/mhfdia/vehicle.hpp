#pragma once

#include <cmath>
#include <deque>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>

#include "mhfdia/attack_engine.hpp"
#include "mhfdia/baselines.hpp"
#include "mhfdia/trace.hpp"
#include "mhfdia/ukf.hpp"

namespace mhfdia {

// x = [theta, x, y], u = [v, omega]
struct VehicleParams {
  double offset = 0.0562;      // d
  double wheel_radius = 0.035;  // r
  double half_track = 0.115;   // L
  double gain = 1.0;           // K = gain * I
  double sample_period = 0.01;
  Vector process_std = (Vector(3) << 1e-3, 1e-3, 1e-3).finished();
  Vector measurement_std = (Vector(6) << 0.05, 0.05, 0.01, 0.01, 0.5, 0.5).finished();

  void validate() const {
    require(offset > 0.0 && wheel_radius > 0.0 && half_track > 0.0, "vehicle geometry must be positive");
    require(gain > 0.0, "tracking gain must be positive");
    require(sample_period > 0.0, "sample period must be positive");
    require(process_std.size() == 3 && measurement_std.size() == 6, "vehicle noise vectors must have sizes 3 and 6");
    require((process_std.array() >= 0.0).all() && (measurement_std.array() > 0.0).all(),
            "noise standard deviations must be non-negative (measurement: positive)");
  }

  Matrix process_cov() const { return Matrix(process_std.cwiseAbs2().asDiagonal()); }
  Matrix measurement_cov() const { return Matrix(measurement_std.cwiseAbs2().asDiagonal()); }
};

inline double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * std::numbers::pi);
  return a <= -std::numbers::pi ? a + 2.0 * std::numbers::pi : a;
}

inline Vector vehicle_rates(const Vector& x, const Vector& u, double d) {
  const double c = std::cos(x(0)), s = std::sin(x(0));
  Vector out(3);
  out << u(1), c * u(0) - d * s * u(1), s * u(0) + d * c * u(1);
  return out;
}

// Forward-Euler step; `process_noise` is added after the step.
inline Vector vehicle_step(const Vector& x, const Vector& u, const VehicleParams& p,
                           const Vector& process_noise = Vector::Zero(3)) {
  require(x.size() == 3 && u.size() == 2, "vehicle state is 3-dimensional, input 2-dimensional");
  return x + p.sample_period * vehicle_rates(x, u, p.offset) + process_noise;
}

// u = [[cos, sin], [-sin/d, cos/d]] (z_d' + K (z_d - z))
inline Vector kinematic_control(const Vector& x, const Vector& z_desired, const Vector& z_desired_rate,
                                const VehicleParams& p) {
  const double c = std::cos(x(0)), s = std::sin(x(0));
  const Vector z = x.tail(2);
  const Vector target = z_desired_rate + p.gain * (z_desired - z);
  Vector u(2);
  u << c * target(0) + s * target(1), (-s * target(0) + c * target(1)) / p.offset;
  return u;
}

// 6 x 2 map applied to z.
inline Matrix vehicle_measurement_matrix(double theta, const VehicleParams& p) {
  const double k = 1.0 / (4.0 * p.wheel_radius);
  Matrix m(6, 2);
  m << std::cos(theta), 0.0, 0.0, std::sin(theta), 1.0, 0.0, 0.0, 1.0, k, p.half_track * k, k, -p.half_track * k;
  return m;
}

inline Vector vehicle_measure(const Vector& x, const VehicleParams& p, const Vector& noise = Vector::Zero(6)) {
  require(x.size() == 3, "vehicle state is 3-dimensional");
  return vehicle_measurement_matrix(x(0), p) * x.tail(2) + noise;
}

// Jacobian of vehicle_measure at x_eq.
inline Matrix vehicle_output_jacobian(const Vector& x_eq, const VehicleParams& p) {
  Matrix c = Matrix::Zero(6, 3);
  c.rightCols(2) = vehicle_measurement_matrix(x_eq(0), p);
  c(0, 0) = -x_eq(1) * std::sin(x_eq(0));
  c(1, 0) = x_eq(2) * std::cos(x_eq(0));
  return c;
}

struct AttackerModel {
  Vector x_eq;
  PlantModel plant;  // A = I, C = output Jacobian at x_eq
  std::optional<HorizonObservation> horizon;  // empty when H is rank deficient
};

// Every state is an equilibrium of the kinematics at zero input, so A = I and
// the stacked operator is T copies of C.
inline AttackerModel attacker_linearize(const Vector& x_eq, const VehicleParams& p, Index window) {
  require(x_eq.allFinite(), "attacker estimate is not finite");
  AttackerModel out;
  out.x_eq = x_eq;
  out.plant.transition = Matrix::Identity(3, 3);
  out.plant.measurement = vehicle_output_jacobian(x_eq, p);
  out.plant.sample_period = p.sample_period;
  try {
    out.horizon = build_horizon(out.plant, window);
  } catch (const NumericalError&) {
    out.horizon.reset();
  }
  return out;
}

enum class PathKind { line, circle, figure8 };

inline PathKind parse_path_kind(const std::string& s) {
  if (s == "line") return PathKind::line;
  if (s == "circle") return PathKind::circle;
  if (s == "figure8" || s == "figure-8") return PathKind::figure8;
  throw ConfigError("unknown path '" + s + "'");
}

inline std::string to_string(PathKind k) {
  switch (k) {
    case PathKind::line: return "line";
    case PathKind::circle: return "circle";
    case PathKind::figure8: return "figure8";
  }
  return "line";
}

struct PathSpec {
  PathKind kind = PathKind::line;
  double speed = 0.3;                          // m/s along the path
  double radius = 1.0;                         // circle / figure-8 lobes
  double heading = std::numbers::pi / 4.0;     // line direction
  Vector origin = Vector::Zero(2);             // line start
};

struct PathPoint {
  Vector z;
  Vector rate;
};

// line: origin + v t (cos h, sin h)
// circle: centre (0, 0), counter-clockwise from (0, -R)
// figure8: two tangent circles centred (1, 0) R and (3, 0) R, crossing at
//          (2R, 0) heading -y; clockwise lobe first
inline PathPoint path_point(const PathSpec& p, double t) {
  PathPoint out{Vector(2), Vector(2)};
  if (p.kind == PathKind::line) {
    Vector dir(2);
    dir << std::cos(p.heading), std::sin(p.heading);
    out.z = p.origin + p.speed * t * dir;
    out.rate = p.speed * dir;
    return out;
  }
  const double w = p.speed / p.radius;
  const double R = p.radius;
  if (p.kind == PathKind::circle) {
    out.z << R * std::sin(w * t), -R * std::cos(w * t);
    out.rate << R * w * std::cos(w * t), R * w * std::sin(w * t);
    return out;
  }
  const double s = std::fmod(w * t, 4.0 * std::numbers::pi);
  if (s < 2.0 * std::numbers::pi) {
    out.z << R * (1.0 + std::cos(s)), -R * std::sin(s);
    out.rate << -R * w * std::sin(s), -R * w * std::cos(s);
  } else {
    const double q = s - 2.0 * std::numbers::pi;
    out.z << R * (3.0 - std::cos(q)), -R * std::sin(q);
    out.rate << R * w * std::sin(q), -R * w * std::cos(q);
  }
  return out;
}

inline Vector default_initial_pose(PathKind k) {
  Vector x(3);
  switch (k) {
    case PathKind::line: x << std::numbers::pi / 4.0, 0.0, 0.0; break;
    case PathKind::circle: x << 0.0, 0.0, -1.0; break;
    case PathKind::figure8: x << -std::numbers::pi / 2.0, 2.0, 0.0; break;
  }
  return x;
}

inline double default_attack_start(PathKind k) { return k == PathKind::line ? 6.0 : 50.0; }

inline UnscentedKalmanFilter make_vehicle_ukf(const VehicleParams& p, UkfSpread spread = {}) {
  auto f = [p](const Vector& x, const Vector& u) { return vehicle_step(x, u, p); };
  auto g = [p](const Vector& x) { return vehicle_measure(x, p); };
  return UnscentedKalmanFilter(f, g, p.process_cov(), p.measurement_cov(), spread);
}

struct VehicleRunConfig {
  VehicleParams params;
  PathSpec path;
  Vector initial_pose = default_initial_pose(PathKind::line);
  double duration = 16.0;
  double attack_start = 6.0;
  AttackKind attack = AttackKind::mh;
  std::vector<int> support = {3, 4};  // 1-based channels
  Index window = 20;
  GeneratorConfig generator = [] {
    GeneratorConfig g;
    g.epsilon = 1.0;
    return g;
  }();
  std::uint64_t seed = 1;
};

// Windowed l2 residual of y_I against the stacked model at x_eq.
inline double vehicle_window_residual(const std::deque<Vector>& window, const Vector& x_eq, const VehicleParams& p) {
  const Index t = static_cast<Index>(window.size());
  Vector y(6 * t);
  for (Index j = 0; j < t; ++j) y.segment(6 * j, 6) = window[static_cast<std::size_t>(j)];
  const Matrix c = vehicle_output_jacobian(x_eq, p);
  Matrix h(6 * t, 3);
  for (Index j = 0; j < t; ++j) h.middleRows(6 * j, 6) = c;
  // Rank-revealing least squares: a degenerate linearization point still
  // gives a well-defined projection.
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(h);
  const Vector fit = h * cod.solve(y);
  return (y - fit).norm();
}

namespace detail {

// One closed loop. When `envelope` is given the detector statistic is the
// distance of the raw residual from that interval; otherwise it is 0.
inline SimTrace simulate_vehicle(const VehicleRunConfig& cfg, const std::pair<double, double>* envelope) {
  const VehicleParams& p = cfg.params;
  p.validate();
  cfg.generator.validate();
  require(cfg.window >= 1, "window length must be at least 1");
  require(cfg.duration > 0.0, "duration must be positive");
  const AttackSupport support = AttackSupport::from_one_based(cfg.support, 6);

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw = [&](const Vector& std_dev) {
    Vector out(std_dev.size());
    for (Index i = 0; i < std_dev.size(); ++i) out(i) = std_dev(i) * normal(rng);
    return out;
  };

  const UnscentedKalmanFilter ukf = make_vehicle_ukf(p);
  const Matrix p0 = 1e-4 * Matrix::Identity(3, 3);
  UkfState defender{cfg.initial_pose, p0};
  UkfState attacker{cfg.initial_pose, p0};
  Vector x = cfg.initial_pose;
  Vector u = Vector::Zero(2);
  AttackHistory history(cfg.window, 6);
  std::deque<Vector> window;

  SimTrace trace;
  trace.columns = {"t",        "x",     "y",  "theta", "x_hat", "y_hat",     "theta_hat", "residual",
                   "alarm",    "e3",    "e4", "alpha", "raw_residual", "deviation", "feasible"};
  trace.metadata["scenario"] = "vehicle";
  trace.metadata["path"] = to_string(cfg.path.kind);
  trace.metadata["attack"] = to_string(cfg.attack);
  trace.metadata["seed"] = std::to_string(cfg.seed);
  trace.metadata["epsilon"] = format_number(cfg.generator.epsilon);

  const auto steps = static_cast<long>(std::ceil(cfg.duration / p.sample_period - 1e-9));
  for (long k = 0; k < steps; ++k) {
    const double t = static_cast<double>(k) * p.sample_period;
    const Vector y_clean = vehicle_measure(x, p, draw(p.measurement_std));
    Vector e = Vector::Zero(6);
    double alpha = 0.0;
    bool feasible = true;
    try {
      if (k > 0) attacker = ukf.step(attacker, u, y_clean);
      const bool active = cfg.attack != AttackKind::none && t >= cfg.attack_start &&
                          k >= cfg.window;
      if (active) {
        const AttackerModel model = attacker_linearize(attacker.mean, p, cfg.window);
        if (model.horizon) {
          if (cfg.attack == AttackKind::mh) {
            MovingHorizonAttacker gen(*model.horizon, support, cfg.generator);
            const AttackStepResult r = gen.step(history);
            e = r.injection;
            alpha = r.alpha;
            feasible = r.feasible;
          } else if (cfg.attack == AttackKind::eig) {
            const auto r = eigenvalue_mh_attack(*model.horizon, history.stacked(), support, cfg.generator.eps_tilde());
            e = r.injection;
            feasible = r.feasible;
            Vector win(model.horizon->rows());
            win.head(win.size() - 6) = history.stacked();
            win.tail(6) = e;
            alpha = (model.horizon->v * (model.horizon->u1.transpose() * win).cwiseQuotient(model.horizon->sigma)).norm();
          } else {
            throw ConfigError("vehicle scenario supports attacks none, mh and eig");
          }
        } else {
          feasible = false;
        }
      }
      history.push(e);
      const Vector y = y_clean + e;
      if (k > 0) defender = ukf.step(defender, u, y);
      window.push_back(y);
      if (static_cast<Index>(window.size()) > cfg.window) window.pop_front();
    } catch (const NumericalError& err) {
      trace.truncated = true;
      trace.metadata["truncated"] = err.what();
      break;
    }

    double raw = 0.0, stat = 0.0;
    if (static_cast<Index>(window.size()) == cfg.window) {
      raw = vehicle_window_residual(window, defender.mean, p);
      if (envelope) stat = std::max({0.0, raw - envelope->second, envelope->first - raw});
    }
    const PathPoint ref = path_point(cfg.path, t);
    const double deviation = (x.tail(2) - ref.z).norm();
    trace.add_row({t, x(1), x(2), wrap_angle(x(0)), defender.mean(1), defender.mean(2), wrap_angle(defender.mean(0)),
                   stat, stat > cfg.generator.epsilon ? 1.0 : 0.0, e(2), e(3), alpha, raw, deviation,
                   feasible ? 1.0 : 0.0});

    u = kinematic_control(defender.mean, ref.z, ref.rate, p);
    x = vehicle_step(x, u, p, draw(p.process_std));
  }
  return trace;
}

}  // namespace detail

// The detector statistic is the distance of the windowed residual from the
// range [min, max] it spans in an attack-free twin run (same seed); the alarm
// fires when that distance exceeds epsilon.
inline SimTrace run_vehicle_scenario(const VehicleRunConfig& cfg) {
  VehicleRunConfig nominal = cfg;
  nominal.attack = AttackKind::none;
  const SimTrace twin = detail::simulate_vehicle(nominal, nullptr);
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  const std::size_t raw_col = twin.column("raw_residual");
  for (std::size_t i = static_cast<std::size_t>(cfg.window) - 1; i < twin.rows.size(); ++i) {
    lo = std::min(lo, twin.rows[i][raw_col]);
    hi = std::max(hi, twin.rows[i][raw_col]);
  }
  if (!std::isfinite(lo)) lo = 0.0;
  const std::pair<double, double> env{lo, hi};
  SimTrace out = detail::simulate_vehicle(cfg, &env);
  out.metadata["nominal_residual_low"] = format_number(lo);
  out.metadata["nominal_residual_high"] = format_number(hi);
  return out;
}

}  // namespace mhfdia
