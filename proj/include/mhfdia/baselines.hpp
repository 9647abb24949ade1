#pragma once

#include <optional>
#include <string>

#include "mhfdia/attack_engine.hpp"

namespace mhfdia {

enum class AttackKind { none, mh, eig, range, gstealth, static_t1 };

inline AttackKind parse_attack_kind(const std::string& s) {
  if (s == "none") return AttackKind::none;
  if (s == "mh") return AttackKind::mh;
  if (s == "eig" || s == "eigenvalue-mh") return AttackKind::eig;
  if (s == "range" || s == "range-space") return AttackKind::range;
  if (s == "gstealth" || s == "generalized-stealth") return AttackKind::gstealth;
  if (s == "static" || s == "static-T1") return AttackKind::static_t1;
  throw ConfigError("unknown attack kind '" + s + "'");
}

inline std::string to_string(AttackKind k) {
  switch (k) {
    case AttackKind::none: return "none";
    case AttackKind::mh: return "mh";
    case AttackKind::eig: return "eig";
    case AttackKind::range: return "range";
    case AttackKind::gstealth: return "gstealth";
    case AttackKind::static_t1: return "static";
  }
  return "none";
}

// e_i = C a_i: invisible to a single-sample l2 detector.
inline Vector range_space_attack(const Matrix& c, const Vector& bias) {
  require(bias.size() == c.cols(), "bias must have the state dimension");
  return c * bias;
}

// Windowed residual of a range-space attack sequence a_I against the horizon:
// ||(I - H H^+)(I_T (x) C) a_I||.
inline double range_space_window_residual(const HorizonObservation& h, const Matrix& c, std::span<const Vector> biases) {
  require(static_cast<Index>(biases.size()) == h.window, "need one bias per window sample");
  Vector e(h.rows());
  for (Index j = 0; j < h.window; ++j) e.segment(j * h.outputs, h.outputs) = c * biases[static_cast<std::size_t>(j)];
  return (e - h.u1 * (h.u1.transpose() * e)).norm();
}

struct GeneralizedStealthParams {
  Vector bias_direction;                 // a* direction (n)
  double max_bias = 1.0;                 // upper end of the scale search
  double step_budget = 0.0;              // delta / T
  std::optional<AttackSupport> support;  // restrict to compromised channels
};

// Range-space component plus an orthogonal component that spends the per-step
// residual budget. With a support restriction the range component is masked
// and its scale s in [0, max_bias] is maximised subject to
// ||(I - C C^+) e|| <= delta / T (the single-step effectiveness ||C^+ e|| is
// increasing in s, so the search is a closed-form root).
inline Vector generalized_stealth_attack(const Matrix& c, const GeneralizedStealthParams& p) {
  require(p.bias_direction.size() == c.cols(), "bias direction must have the state dimension");
  require(p.step_budget >= 0.0 && p.max_bias >= 0.0, "budgets must be non-negative");
  const double dir_norm = p.bias_direction.norm();
  const Vector dir = dir_norm > 0.0 ? Vector(p.bias_direction / dir_norm) : Vector(Vector::Zero(c.cols()));
  const Matrix pinv = linalg::pseudo_inverse(c);
  const Matrix orth = Matrix::Identity(c.rows(), c.rows()) - c * pinv;
  if (!p.support) {
    Vector e = p.max_bias * (c * dir);
    const Matrix comp = linalg::range_complement(c);
    if (comp.cols() > 0 && p.step_budget > 0.0) {
      Matrix first = comp.leftCols(1);
      linalg::fix_column_signs(first);
      e += p.step_budget * first.col(0);
    }
    return e;
  }
  const Vector masked = p.support->mask(c * dir);
  const double leak = (orth * masked).norm();
  const double scale = leak > 0.0 ? std::min(p.max_bias, p.step_budget / leak) : p.max_bias;
  return scale * masked;
}

struct EigenvalueAttackResult {
  Vector injection;
  Vector direction;  // v*
  double scale = 0.0;  // lambda*
  bool feasible = false;
};

// Moving-horizon extension of the eigenvalue design: v* is the dominant right
// singular vector of U11 Sigma (history support rows of U1 Sigma), lambda*
// the largest |lambda| with ||lambda U11 Sigma v* - e_hist|| <= eps_tilde, and
// the injection on the support is lambda* U12 Sigma v*.
inline EigenvalueAttackResult eigenvalue_mh_attack(const HorizonObservation& h, const Vector& stacked_history,
                                                   const AttackSupport& support, double eps_tilde) {
  require(h.window >= 2, "the eigenvalue design needs a history window (T >= 2)");
  require(stacked_history.size() == (h.window - 1) * h.outputs, "history must hold (T-1) m entries");
  require(eps_tilde >= 0.0, "stealthiness budget must be non-negative");
  EigenvalueAttackResult out;
  out.injection = Vector::Zero(h.outputs);
  if (support.empty()) return out;
  const Matrix scaled = h.scaled_u1();
  const std::vector<Index> hist_rows = support.window_rows(h.window - 1);
  const Matrix u11 = linalg::select_rows(scaled, hist_rows);
  const Matrix u12 = linalg::select_rows(scaled, support.current_block_rows(h.window));
  const Vector hist = linalg::select_rows(stacked_history, hist_rows);

  Eigen::JacobiSVD<Matrix> svd(u11, Eigen::ComputeThinV);
  Matrix v = svd.matrixV().leftCols(1);
  linalg::fix_column_signs(v);
  out.direction = v.col(0);
  const Vector bv = u11 * out.direction;
  const double a = bv.squaredNorm();
  if (a <= 0.0) return out;
  const double b = hist.dot(bv);
  const double c = hist.squaredNorm() - eps_tilde * eps_tilde;
  double disc = b * b - a * c;
  const double scale_ref = std::max({b * b, a * std::abs(c), 1e-300});
  if (disc < -1e-12 * scale_ref) return out;
  disc = std::max(0.0, disc);
  const double r1 = (b + std::sqrt(disc)) / a;
  const double r2 = (b - std::sqrt(disc)) / a;
  out.scale = std::abs(r1) >= std::abs(r2) ? r1 : r2;
  out.feasible = true;
  const Vector on_support = out.scale * (u12 * out.direction);
  for (std::size_t i = 0; i < support.channels().size(); ++i)
    out.injection(support.channels()[i]) = on_support(static_cast<Index>(i));
  return out;
}

// Single-sample form of the generator: maximise ||N1 v|| s.t. ||N2 v|| <= eps.
inline AttackStepResult static_t1_attack(const PlantModel& plant, const AttackSupport& support, GeneratorConfig cfg) {
  const HorizonObservation h = build_horizon(plant, 1);
  MovingHorizonAttacker attacker(h, support, cfg);
  return attacker.step(AttackHistory(1, plant.outputs()));
}

// Static design over the whole window, e_I = H a.
inline Vector static_h_window_attack(const HorizonObservation& h, const Vector& bias) {
  require(bias.size() == h.states, "bias must have the state dimension");
  return h.stacked * bias;
}

// How far the shifted design e_I = H a is from any H a' once the window moves:
// min_a' ||(H a')_{first T-1 blocks} - (H a)_{last T-1 blocks}||.
inline double static_h_continuation_gap(const HorizonObservation& h, const Vector& bias) {
  require(h.window >= 2, "continuation needs T >= 2");
  const Index rows = (h.window - 1) * h.outputs;
  const Vector shifted = (h.stacked * bias).tail(rows);
  const Matrix head = h.stacked.topRows(rows);
  const Vector best = head.colPivHouseholderQr().solve(shifted);
  return (head * best - shifted).norm();
}

}  // namespace mhfdia
