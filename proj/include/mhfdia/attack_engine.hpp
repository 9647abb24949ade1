#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "mhfdia/plant.hpp"

namespace mhfdia {

// Fixed set of compromised sensor channels (0-based internally).
class AttackSupport {
 public:
  AttackSupport() = default;

  AttackSupport(std::vector<Index> channels, Index outputs) : channels_(std::move(channels)), outputs_(outputs) {
    require(outputs > 0, "measurement dimension must be positive");
    require(static_cast<Index>(channels_.size()) <= outputs, "support larger than the measurement dimension");
    for (std::size_t i = 0; i < channels_.size(); ++i) {
      require(channels_[i] >= 0 && channels_[i] < outputs, "support channel out of range");
      require(i == 0 || channels_[i] > channels_[i - 1], "support channels must be strictly increasing");
    }
  }

  static AttackSupport from_one_based(const std::vector<int>& channels, Index outputs) {
    std::vector<Index> zero;
    zero.reserve(channels.size());
    for (int c : channels) zero.push_back(static_cast<Index>(c) - 1);
    return AttackSupport(std::move(zero), outputs);
  }

  static AttackSupport all(Index outputs) {
    std::vector<Index> c(static_cast<std::size_t>(outputs));
    for (Index i = 0; i < outputs; ++i) c[static_cast<std::size_t>(i)] = i;
    return AttackSupport(std::move(c), outputs);
  }

  const std::vector<Index>& channels() const { return channels_; }
  Index outputs() const { return outputs_; }
  Index size() const { return static_cast<Index>(channels_.size()); }
  bool empty() const { return channels_.empty(); }
  bool contains(Index c) const { return std::binary_search(channels_.begin(), channels_.end(), c); }

  std::vector<int> one_based() const {
    std::vector<int> out;
    for (Index c : channels_) out.push_back(static_cast<int>(c) + 1);
    return out;
  }

  // Rows (T-1) m + T of the current block.
  std::vector<Index> current_block_rows(Index window) const {
    std::vector<Index> rows;
    for (Index c : channels_) rows.push_back((window - 1) * outputs_ + c);
    return rows;
  }

  // Every window row outside the current-block support.
  std::vector<Index> current_block_complement(Index window) const {
    std::vector<Index> rows;
    for (Index r = 0; r < window * outputs_; ++r)
      if (r < (window - 1) * outputs_ || !contains(r - (window - 1) * outputs_)) rows.push_back(r);
    return rows;
  }

  // Support rows of every block of a window of `blocks` samples.
  std::vector<Index> window_rows(Index blocks) const {
    std::vector<Index> rows;
    for (Index j = 0; j < blocks; ++j)
      for (Index c : channels_) rows.push_back(j * outputs_ + c);
    return rows;
  }

  Vector mask(const Vector& e) const {
    Vector out = Vector::Zero(e.size());
    for (Index c : channels_) out(c) = e(c);
    return out;
  }

 private:
  std::vector<Index> channels_;
  Index outputs_ = 0;
};

// The T-1 most recent injections, oldest first, zero-padded before warm-up.
class AttackHistory {
 public:
  AttackHistory(Index window, Index outputs) : window_(window), outputs_(outputs) {
    require(window >= 1, "window length must be at least 1");
    for (Index i = 0; i + 1 < window; ++i) past_.push_back(Vector::Zero(outputs));
  }

  void push(const Vector& injection) {
    require(injection.size() == outputs_, "injection has the wrong dimension");
    if (window_ == 1) return;
    past_.pop_front();
    past_.push_back(injection);
  }

  Index window() const { return window_; }
  Index outputs() const { return outputs_; }
  const std::deque<Vector>& entries() const { return past_; }

  Vector stacked() const {
    Vector out((window_ - 1) * outputs_);
    for (std::size_t j = 0; j < past_.size(); ++j) out.segment(static_cast<Index>(j) * outputs_, outputs_) = past_[j];
    return out;
  }

  void clear() {
    for (auto& e : past_) e.setZero();
  }

 private:
  Index window_;
  Index outputs_;
  std::deque<Vector> past_;
};

struct GeneratorConfig {
  double epsilon = 0.6352;        // window stealthiness bound
  double noise_bound = 0.0;       // epsilon_v
  double step0 = 1e-4;            // lambda_0
  int max_iterations = 2000;      // M
  double zero_tolerance = 1e-6;   // tau
  bool early_stop = true;         // stop after 10 consecutive steps with ||lambda d|| < 1e-12
  double boundary_guard = 1e-10;  // iterate against eps_tilde (1 - guard) so rounding cannot cross eps
  int lookahead_windows = 1;      // future windows kept feasible under the least-residual continuation

  double eps_tilde() const { return std::sqrt(epsilon * epsilon - noise_bound * noise_bound); }

  void validate() const {
    require(noise_bound >= 0.0, "noise bound must be non-negative");
    require(epsilon > noise_bound, "stealthiness bound must exceed the noise bound");
    require(step0 > 0.0, "base step size must be positive");
    require(max_iterations >= 0, "iteration count must be non-negative");
    require(zero_tolerance > 0.0, "zero tolerance must be positive");
    require(boundary_guard >= 0.0 && boundary_guard < 1e-3, "boundary guard must lie in [0, 1e-3)");
    require(lookahead_windows >= 0, "lookahead must be non-negative");
  }
};

// e_I = U1 Sigma w1 + U2 w2; ||H^+ e_I|| = ||w1||, ||(I - H H^+) e_I|| = ||w2||.
inline Vector parameterize_attack(const HorizonObservation& h, const Vector& w1, const Vector& w2) {
  require(w1.size() == h.states && w2.size() == h.u2.cols(), "offset dimensions do not match the horizon");
  return h.u1 * h.sigma.cwiseProduct(w1) + h.u2 * w2;
}

struct HistoryOffsets {
  Vector w1;  // Sigma^-1 U1^T [e_hist; 0]
  Vector w2;  // U2^T [e_hist; 0]
};

inline HistoryOffsets history_offsets(const HorizonObservation& h, const Vector& stacked_history) {
  const Index hist_rows = (h.window - 1) * h.outputs;
  require(stacked_history.size() == hist_rows, "history must hold (T-1) m entries");
  HistoryOffsets out;
  if (hist_rows == 0) {
    out.w1 = Vector::Zero(h.states);
    out.w2 = Vector::Zero(h.u2.cols());
    return out;
  }
  out.w1 = (h.u1.topRows(hist_rows).transpose() * stacked_history).cwiseQuotient(h.sigma);
  out.w2 = h.u2.topRows(hist_rows).transpose() * stacked_history;
  return out;
}

// Orthonormal N = [N1; N2] with [U1 Sigma, U2] restricted to the rows outside
// the current-block support annihilating N, plus a factorisation of N2.
struct NullSpaceBasis {
  Matrix n1;       // n x q
  Matrix n2;       // (T m - n) x q
  Matrix n2_pinv;  // q x (T m - n)
  Matrix n2_perp;  // orthonormal complement of range(N2)
  Index n2_rank = 0;
  Matrix block_map;  // current-block rows of U1 Sigma N1 + U2 N2, zero off the support (m x q)
  // viability[j] maps the history of the next window to the smallest residual
  // reachable j windows later when every intermediate window plays its
  // least-residual injection v = -N2^+ w2^-.
  std::vector<Matrix> viability;

  Index dimension() const { return n1.cols(); }
};

inline NullSpaceBasis nullspace_basis(const HorizonObservation& h, const AttackSupport& support,
                                      Index lookahead_windows = 0) {
  if (support.empty()) throw ConfigError("support admits no stealthy injection: empty support");
  require(support.outputs() == h.outputs, "support and horizon disagree on the measurement dimension");
  const std::vector<Index> rows = support.current_block_rows(h.window);
  const Index q = support.size();
  const Index rows_total = h.rows();
  const Index n = h.states;
  // [U1 Sigma, U2] is invertible, so its preimage of vectors supported on the
  // current-block support is spanned by [Sigma^-1 U1_T^T; U2_T^T].
  Matrix basis(rows_total, q);
  basis.topRows(n) = h.sigma.cwiseInverse().asDiagonal() * linalg::select_rows(h.u1, rows).transpose();
  basis.bottomRows(rows_total - n) = linalg::select_rows(h.u2, rows).transpose();
  Eigen::JacobiSVD<Matrix> svd(basis, Eigen::ComputeThinU);
  const Index rank = linalg::numerical_rank(svd.singularValues(), basis.rows(), basis.cols());
  if (rank == 0) throw ConfigError("support admits no stealthy injection");
  Matrix n_full = svd.matrixU().leftCols(rank);
  linalg::fix_column_signs(n_full);

  NullSpaceBasis out;
  out.n1 = n_full.topRows(n);
  out.n2 = n_full.bottomRows(rows_total - n);
  const Index hist_rows = (h.window - 1) * h.outputs;
  out.block_map = (h.scaled_u1() * out.n1 + h.u2 * out.n2).bottomRows(h.outputs);
  for (Index c = 0; c < h.outputs; ++c)
    if (!support.contains(c)) out.block_map.row(c).setZero();
  if (out.n2.rows() == 0) {
    out.n2_pinv = Matrix::Zero(rank, 0);
    out.n2_perp = Matrix::Zero(0, 0);
    return out;
  }
  Eigen::JacobiSVD<Matrix> n2svd(out.n2, Eigen::ComputeFullU | Eigen::ComputeThinV);
  const Vector& s = n2svd.singularValues();
  out.n2_rank = linalg::numerical_rank(s, out.n2.rows(), out.n2.cols());
  out.n2_pinv = Matrix::Zero(rank, out.n2.rows());
  for (Index i = 0; i < out.n2_rank; ++i)
    out.n2_pinv += n2svd.matrixV().col(i) * (n2svd.matrixU().col(i).transpose() / s(i));
  out.n2_perp = n2svd.matrixU().rightCols(out.n2.rows() - out.n2_rank);
  if (hist_rows == 0 || out.n2_perp.cols() == 0) return out;
  // history -> next history under the least-residual policy:
  // M h = [h without its oldest block; B F h],  F = -N2^+ U2_hist^T
  const Index m = h.outputs;
  const Matrix u2_hist_t = h.u2.topRows(hist_rows).transpose();
  const Matrix bf = out.block_map * (-(out.n2_pinv * u2_hist_t));
  Matrix r = out.n2_perp.transpose() * u2_hist_t;
  for (Index j = 0; j < lookahead_windows; ++j) {
    out.viability.push_back(r);
    Matrix next = Matrix::Zero(r.rows(), hist_rows);
    next.rightCols(hist_rows - m) = r.leftCols(hist_rows - m);
    next += r.rightCols(m) * bf;
    r = std::move(next);
  }
  return out;
}

// Algorithm state for one window.
struct GeneratorWorkspace {
  const HorizonObservation* horizon = nullptr;
  AttackSupport support;
  std::shared_ptr<const NullSpaceBasis> basis;
  HistoryOffsets offsets;
  Vector history;  // stacked e_{I-}
  Vector v;        // current iterate

  static GeneratorWorkspace make(const HorizonObservation& h, const AttackSupport& support,
                                 std::shared_ptr<const NullSpaceBasis> basis, const Vector& stacked_history) {
    GeneratorWorkspace ws;
    ws.horizon = &h;
    ws.support = support;
    ws.basis = std::move(basis);
    ws.offsets = history_offsets(h, stacked_history);
    ws.history = stacked_history;
    ws.v = Vector::Zero(ws.basis->dimension());
    return ws;
  }

  Vector initial_iterate() const { return -(basis->n2_pinv * offsets.w2); }
  double effectiveness(const Vector& x) const { return (basis->n1 * x + offsets.w1).norm(); }
  Vector residual_vector(const Vector& x) const { return basis->n2 * x + offsets.w2; }
  // min_v ||N2 v + w2^-|| = ||N2_perp^T w2^-||
  double minimum_residual() const { return (basis->n2_perp.transpose() * offsets.w2).norm(); }
  Vector gradient(const Vector& x) const { return basis->n1.transpose() * (basis->n1 * x + offsets.w1); }
};

inline bool feasibility_check(const GeneratorWorkspace& ws, double eps_tilde) {
  return ws.minimum_residual() <= eps_tilde;
}

// d = g / ||g|| when ||g|| >= tau, g otherwise.
inline Vector step_direction(const Vector& gradient, double tau) {
  const double norm = gradient.norm();
  if (norm >= tau && norm > 0.0) return gradient / norm;
  return gradient;
}

enum class StepBranch { nominal, boundary, unconstrained, infeasible, lookahead };

struct StepSize {
  double lambda = 0.0;
  StepBranch branch = StepBranch::nominal;
};

// Scalars the step rule needs: r^T N2 d, ||r||^2 and ||N2 d||^2.
struct StepGeometry {
  double r_dot_nd = 0.0;
  double r_norm_sq = 0.0;
  double nd_norm_sq = 0.0;

  static StepGeometry from(const Vector& r, const Vector& n2d) { return {r.dot(n2d), r.squaredNorm(), n2d.squaredNorm()}; }
};

inline StepSize step_size(const StepGeometry& g, double step0, double eps_tilde) {
  if (g.nd_norm_sq <= 0.0) return {step0, StepBranch::unconstrained};
  const double trial = g.r_norm_sq + 2.0 * step0 * g.r_dot_nd + step0 * step0 * g.nd_norm_sq;
  if (trial <= eps_tilde * eps_tilde) return {step0, StepBranch::nominal};
  const double nd = std::sqrt(g.nd_norm_sq);
  const double proj = g.r_dot_nd / nd;  // r^T d_hat
  const double disc = proj * proj - g.r_norm_sq + eps_tilde * eps_tilde;
  if (disc < 0.0) return {0.0, StepBranch::infeasible};
  return {std::max(0.0, (-proj + std::sqrt(disc)) / nd), StepBranch::boundary};
}

struct IterationRecord {
  Vector v;
  double alpha = 0.0;
  double lambda = 0.0;
  StepBranch branch = StepBranch::nominal;
};

struct AttackStepResult {
  Vector injection;            // e_i (m), zero outside the support
  Vector iterate;              // final v
  double alpha = 0.0;          // ||N1 v + w1^-||
  double residual_bound = 0.0; // ||N2 v + w2^-||
  double minimum_residual = 0.0;
  bool feasible = false;
  bool infeasible_step = false;
  int lookahead_active = 0;  // future-window constraints enforced
  int iterations_used = 0;
  std::vector<double> alpha_trace;  // alpha every 100 iterations
};

inline constexpr double kLeakageTolerance = 1e-8;

// Full window attack U1 Sigma (w1^- + N1 v) + U2 (w2^- + N2 v).
inline Vector assemble_window_attack(const GeneratorWorkspace& ws, const Vector& v) {
  const HorizonObservation& h = *ws.horizon;
  Vector e = parameterize_attack(h, ws.offsets.w1 + ws.basis->n1 * v, ws.offsets.w2 + ws.basis->n2 * v);
  const Index hist_rows = (h.window - 1) * h.outputs;
  const double scale = std::max(1.0, e.cwiseAbs().maxCoeff());
  if (hist_rows > 0 && (e.head(hist_rows) - ws.history).cwiseAbs().maxCoeff() > kLeakageTolerance * scale)
    throw NumericalError("attack assembly does not reproduce the stored history");
  for (Index c = 0; c < h.outputs; ++c) {
    const Index row = hist_rows + c;
    if (ws.support.contains(c)) continue;
    if (std::abs(e(row)) > kLeakageTolerance * scale)
      throw NumericalError("attack leaks outside the support");
    e(row) = 0.0;
  }
  if (hist_rows > 0) e.head(hist_rows) = ws.history;
  return e;
}

// Current-block injection only.
inline Vector current_injection(const GeneratorWorkspace& ws, const Vector& v) {
  const HorizonObservation& h = *ws.horizon;
  const Index last = (h.window - 1) * h.outputs;
  const Vector w1 = ws.offsets.w1 + ws.basis->n1 * v;
  const Vector w2 = ws.offsets.w2 + ws.basis->n2 * v;
  Vector e = h.u1.middleRows(last, h.outputs) * h.sigma.cwiseProduct(w1) + h.u2.middleRows(last, h.outputs) * w2;
  const double scale = std::max(1.0, e.cwiseAbs().maxCoeff());
  for (Index c = 0; c < h.outputs; ++c) {
    if (ws.support.contains(c)) continue;
    if (std::abs(e(c)) > kLeakageTolerance * scale) throw NumericalError("attack leaks outside the support");
    e(c) = 0.0;
  }
  return e;
}

// Suggest-and-improve ascent on alpha(v) = ||N1 v + w1^-|| subject to
// ||N2 v + w2^-|| <= eps_tilde, starting from v1 = -N2^+ w2^-.
//
// The iteration runs in q-dimensional Gram coordinates: with u = v - v1 and
// r_perp = N2 v1 + w2^- (orthogonal to range(N2)),
//   ||r||^2 = u^T G u + ||r_perp||^2,  r^T N2 d = u^T G d,  G = N2^T N2.
inline AttackStepResult generate_attack(GeneratorWorkspace& ws, const GeneratorConfig& cfg,
                                        std::vector<IterationRecord>* trace = nullptr) {
  cfg.validate();
  const Index q = ws.basis->dimension();
  const double eps_tilde = cfg.eps_tilde();
  AttackStepResult out;
  out.minimum_residual = ws.minimum_residual();
  out.feasible = out.minimum_residual <= eps_tilde;
  if (!out.feasible) {
    out.injection = Vector::Zero(ws.horizon->outputs);
    out.iterate = Vector::Zero(q);
    ws.v = out.iterate;
    return out;
  }

  const Matrix f = ws.basis->n1.transpose() * ws.basis->n1;
  const Vector b = ws.basis->n1.transpose() * ws.offsets.w1;
  const Matrix g_mat = ws.basis->n2.transpose() * ws.basis->n2;
  const double c1 = ws.offsets.w1.squaredNorm();
  const double rho_sq = out.minimum_residual * out.minimum_residual;
  const double eps_design = eps_tilde * (1.0 - cfg.boundary_guard);

  Vector v = ws.initial_iterate();
  Vector u = Vector::Zero(q);

  // Future margins are designed slightly inside eps_design so a constraint
  // that ended on its boundary is still kept after rounding on the next window.
  const double eps_future = eps_design * (1.0 - 1e-7);
  // Future-window margins s_j(v) = s_j(v1) + G_j u, tracked through their
  // Gram form like r. A margin already violated at v1 cannot be restored by
  // ascent steps and is left out.
  struct Margin {
    Matrix gram;
    Vector cross;
    double base = 0.0;
  };
  std::vector<Margin> margins;
  {
    const HorizonObservation& hz = *ws.horizon;
    const Index m = hz.outputs, shift = (hz.window - 2) * m;
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(cfg.lookahead_windows), ws.basis->viability.size());
    for (std::size_t j = 0; j < k; ++j) {
      const Matrix& rj = ws.basis->viability[j];
      const Matrix g = rj.rightCols(m) * ws.basis->block_map;
      Vector s1 = g * v;
      if (shift > 0) s1 += rj.leftCols(shift) * ws.history.tail(shift);
      if (s1.norm() > eps_design) continue;
      margins.push_back({g.transpose() * g, g.transpose() * s1, s1.squaredNorm()});
    }
    out.lookahead_active = static_cast<int>(margins.size());
  }

  auto alpha_of = [&](const Vector& x) { return std::sqrt(std::max(0.0, x.dot(f * x) + 2.0 * b.dot(x) + c1)); };

  if (trace) trace->push_back({v, alpha_of(v), 0.0, StepBranch::nominal});
  out.alpha_trace.push_back(alpha_of(v));

  int small_steps = 0;
  int k = 0;
  for (; k < cfg.max_iterations; ++k) {
    Vector grad = f * v + b;
    Vector d;
    if (k == 0 && grad.norm() < cfg.zero_tolerance) {
      // v1 sits at (or next to) the minimiser of alpha: start along the
      // direction of largest bias gain instead of crawling along ~0 gradient.
      Eigen::SelfAdjointEigenSolver<Matrix> eig(f);
      d = eig.eigenvectors().col(q - 1);
      if (d.dot(grad) < 0.0) d = -d;
    } else {
      d = step_direction(grad, cfg.zero_tolerance);
    }
    if (d.squaredNorm() == 0.0) break;  // stationary
    const Vector gd = g_mat * d;
    StepGeometry geo{u.dot(gd), u.dot(g_mat * u) + rho_sq, d.dot(gd)};
    StepSize step = step_size(geo, cfg.step0, eps_design);
    if (step.branch == StepBranch::infeasible) out.infeasible_step = true;
    for (const Margin& mg : margins) {
      if (step.lambda <= 0.0) break;
      const Vector gd = mg.gram * d;
      const StepGeometry la{mg.cross.dot(d) + u.dot(gd), mg.base + 2.0 * mg.cross.dot(u) + u.dot(mg.gram * u), d.dot(gd)};
      const StepSize capped = step_size(la, step.lambda, eps_future);
      if (capped.lambda < step.lambda) step = {capped.lambda, StepBranch::lookahead};
    }
    v += step.lambda * d;
    u += step.lambda * d;
    if (trace) trace->push_back({v, alpha_of(v), step.lambda, step.branch});
    if ((k + 1) % 100 == 0) out.alpha_trace.push_back(alpha_of(v));
    if (cfg.early_stop) {
      small_steps = (step.lambda * d.norm() < 1e-12) ? small_steps + 1 : 0;
      if (small_steps >= 10) {
        ++k;
        break;
      }
    }
  }
  if (!v.allFinite()) throw NumericalError("attack iterate became non-finite");
  ws.v = v;
  out.iterations_used = k;
  out.iterate = v;
  out.alpha = ws.effectiveness(v);
  out.residual_bound = ws.residual_vector(v).norm();
  out.injection = current_injection(ws, v);
  return out;
}

// Structured one-line record for debugging a single window.
inline std::string format_window_dump(Index window_index, const GeneratorWorkspace& ws, const AttackStepResult& r) {
  std::ostringstream os;
  os.precision(12);
  os << "window=" << window_index << " w1_norm=" << ws.offsets.w1.norm() << " w2_norm=" << ws.offsets.w2.norm()
     << " min_residual=" << r.minimum_residual << " feasible=" << (r.feasible ? 1 : 0)
     << " iterations=" << r.iterations_used << " alpha_trace=";
  for (std::size_t i = 0; i < r.alpha_trace.size(); ++i) os << (i ? "," : "") << r.alpha_trace[i];
  return os.str();
}

// Horizon + support + null-space basis for a time-invariant plant; each call
// to step() runs one window of the generator against the given history.
class MovingHorizonAttacker {
 public:
  MovingHorizonAttacker(HorizonObservation horizon, AttackSupport support, GeneratorConfig cfg)
      : horizon_(std::move(horizon)), support_(std::move(support)), cfg_(cfg) {
    cfg_.validate();
    basis_ = std::make_shared<const NullSpaceBasis>(nullspace_basis(horizon_, support_, cfg_.lookahead_windows));
  }

  const HorizonObservation& horizon() const { return horizon_; }
  const AttackSupport& support() const { return support_; }
  const NullSpaceBasis& basis() const { return *basis_; }
  const GeneratorConfig& config() const { return cfg_; }

  GeneratorWorkspace workspace(const AttackHistory& history) const {
    return GeneratorWorkspace::make(horizon_, support_, basis_, history.stacked());
  }

  AttackStepResult step(const AttackHistory& history, std::string* dump = nullptr, Index window_index = 0) const {
    GeneratorWorkspace ws = workspace(history);
    AttackStepResult r = generate_attack(ws, cfg_);
    if (dump) *dump = format_window_dump(window_index, ws, r);
    return r;
  }

 private:
  HorizonObservation horizon_;
  AttackSupport support_;
  GeneratorConfig cfg_;
  std::shared_ptr<const NullSpaceBasis> basis_;
};

}  // namespace mhfdia
