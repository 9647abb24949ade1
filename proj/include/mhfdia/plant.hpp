#pragma once

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mhfdia/error.hpp"
#include "mhfdia/linalg.hpp"

namespace mhfdia {

// Discrete closed-loop plant x+ = A x, y = C x + v.
struct PlantModel {
  Matrix transition;   // A (n x n)
  Matrix measurement;  // C (m x n)
  double sample_period = 0.01;
  double noise_bound = 0.0;  // bound on the stacked window noise norm

  Index states() const { return transition.rows(); }
  Index outputs() const { return measurement.rows(); }

  void validate(bool require_stable = false) const {
    require(transition.rows() == transition.cols(), "A must be square");
    require(measurement.cols() == transition.rows(), "C column count must match the state dimension");
    require(sample_period > 0.0, "sample period must be positive");
    require(noise_bound >= 0.0, "noise bound must be non-negative");
    if (require_stable) {
      const double rho = linalg::spectral_radius(transition);
      if (!(rho > 0.0 && rho < 1.0))
        throw NumericalError("spectral radius of A is " + std::to_string(rho) + ", expected (0, 1)");
    }
  }
};

// Jacobians of a continuous model at an equilibrium point.
struct Linearization {
  Matrix state_jacobian;   // df/dx (n x n)
  Matrix input_jacobian;   // df/du (n x p)
  Matrix output_jacobian;  // dg/dx (m x n)
};

// Forward-Euler discretisation with the state feedback u = K x folded in:
// A = (df/dx Ts + I) + (df/du Ts) K, C = dg/dx.
inline PlantModel linearize(const Linearization& jac, const Matrix& feedback, double sample_period) {
  const Index n = jac.state_jacobian.rows();
  require(jac.state_jacobian.cols() == n, "df/dx must be square");
  require(jac.input_jacobian.rows() == n, "df/du row count must match the state dimension");
  require(feedback.rows() == jac.input_jacobian.cols() && feedback.cols() == n,
          "feedback gain must be (inputs x states)");
  require(jac.output_jacobian.cols() == n, "dg/dx column count must match the state dimension");
  require(sample_period > 0.0, "sample period must be positive");
  PlantModel plant;
  plant.transition = (jac.state_jacobian * sample_period + Matrix::Identity(n, n)) +
                     (jac.input_jacobian * sample_period) * feedback;
  plant.measurement = jac.output_jacobian;
  plant.sample_period = sample_period;
  return plant;
}

// Backward observation operator over a window of T samples together with its
// cached SVD  H = [U1 U2] [diag(sigma); 0] V^T.
struct HorizonObservation {
  Index window = 1;
  Index outputs = 0;
  Index states = 0;
  Matrix stacked;  // H ((T m) x n), oldest block first
  Matrix u1;       // (T m) x n
  Matrix u2;       // (T m) x (T m - n)
  Vector sigma;    // n, strictly positive
  Matrix v;        // n x n

  Index rows() const { return stacked.rows(); }
  // U1 * diag(sigma)
  Matrix scaled_u1() const { return u1 * sigma.asDiagonal(); }
};

inline constexpr double kMaxTransitionCondition = 1e12;

// Stacks C A^{1-T}, C A^{2-T}, ..., C and factors the result.
inline Matrix backward_observation_matrix(const PlantModel& plant, Index window) {
  require(window >= 1, "window length must be at least 1");
  plant.validate();
  const Index n = plant.states();
  const Index m = plant.outputs();
  if (window > 1 && linalg::condition_number(plant.transition) > kMaxTransitionCondition)
    throw NumericalError("backward powers undefined: A is singular or ill-conditioned");
  Matrix h(window * m, n);
  Matrix block = plant.measurement;
  Eigen::PartialPivLU<Matrix> lu_t(plant.transition.transpose());
  for (Index j = window - 1; j >= 0; --j) {
    h.middleRows(j * m, m) = block;
    if (j > 0) block = lu_t.solve(block.transpose()).transpose();  // block * A^{-1}
  }
  return h;
}

inline HorizonObservation factor_horizon(Matrix h, Index window, Index outputs) {
  HorizonObservation out;
  out.window = window;
  out.outputs = outputs;
  out.states = h.cols();
  const Index n = h.cols();
  require(h.rows() == window * outputs, "stacked operator has the wrong row count");
  require(h.rows() >= n, "window not observable: fewer stacked rows than states");
  Eigen::JacobiSVD<Matrix> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vector& s = svd.singularValues();
  if (linalg::numerical_rank(s, h.rows(), h.cols()) < n || s(n - 1) <= 1e-12 * s(0))
    throw NumericalError("window not observable: rank(H) < n");
  out.sigma = s.head(n);
  out.u1 = svd.matrixU().leftCols(n);
  out.u2 = svd.matrixU().rightCols(h.rows() - n);
  out.v = svd.matrixV();
  linalg::fix_column_signs(out.u1, &out.v);
  linalg::fix_column_signs(out.u2);
  out.stacked = std::move(h);
  return out;
}

inline HorizonObservation build_horizon(const PlantModel& plant, Index window) {
  return factor_horizon(backward_observation_matrix(plant, window), window, plant.outputs());
}

// Concatenates T samples, oldest first.
inline Vector stack_window(std::span<const Vector> samples, Index window, Index outputs) {
  require(static_cast<Index>(samples.size()) == window, "expected exactly T samples");
  Vector out(window * outputs);
  for (Index j = 0; j < window; ++j) {
    require(samples[static_cast<std::size_t>(j)].size() == outputs, "sample has the wrong dimension");
    out.segment(j * outputs, outputs) = samples[static_cast<std::size_t>(j)];
  }
  return out;
}

inline std::vector<Vector> unstack_window(const Vector& stacked, Index outputs) {
  require(outputs > 0 && stacked.size() % outputs == 0, "window length is not a multiple of m");
  std::vector<Vector> out;
  for (Index j = 0; j < stacked.size() / outputs; ++j) out.emplace_back(stacked.segment(j * outputs, outputs));
  return out;
}

enum class NoiseKind { none, uniform_ball, truncated_gaussian };

// Bounded measurement noise. Window draws are uniform on the ball of radius
// `bound`; per-step draws use radius bound / sqrt(T) so that any T consecutive
// steps stack to a vector of norm <= bound.
class NoiseModel {
 public:
  NoiseModel(NoiseKind kind, double bound, std::uint64_t seed) : kind_(kind), bound_(bound), rng_(seed) {
    require(bound >= 0.0, "noise bound must be non-negative");
  }

  NoiseKind kind() const { return kind_; }
  double bound() const { return bound_; }

  Vector sample_window(Index window, Index outputs) { return draw(window * outputs, bound_); }

  Vector sample_step(Index outputs, Index window) {
    return draw(outputs, bound_ / std::sqrt(static_cast<double>(window)));
  }

 private:
  Vector draw(Index dim, double radius) {
    Vector out = Vector::Zero(dim);
    if (kind_ == NoiseKind::none || radius == 0.0 || dim == 0) return out;
    std::normal_distribution<double> normal(0.0, 1.0);
    if (kind_ == NoiseKind::uniform_ball) {
      for (Index i = 0; i < dim; ++i) out(i) = normal(rng_);
      const double norm = out.norm();
      if (norm == 0.0) return Vector::Zero(dim);
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      const double r = radius * std::pow(unit(rng_), 1.0 / static_cast<double>(dim));
      return out * (r / norm);
    }
    // truncated Gaussian: sigma chosen so the radius sits at ~2 standard norms
    const double sigma = radius / (2.0 * std::sqrt(static_cast<double>(dim)));
    do {
      for (Index i = 0; i < dim; ++i) out(i) = sigma * normal(rng_);
    } while (out.norm() > radius);
    return out;
  }

  NoiseKind kind_;
  double bound_;
  std::mt19937_64 rng_;
};

inline NoiseKind parse_noise_kind(const std::string& s) {
  if (s == "none") return NoiseKind::none;
  if (s == "uniform-ball" || s == "uniform_ball") return NoiseKind::uniform_ball;
  if (s == "truncated-gaussian" || s == "truncated_gaussian") return NoiseKind::truncated_gaussian;
  throw ConfigError("unknown noise kind '" + s + "'");
}

// Dense matrix text format: "rows cols" followed by row-major values.
inline Matrix parse_matrix(std::istream& in) {
  Index rows = 0, cols = 0;
  if (!(in >> rows >> cols) || rows < 0 || cols < 0) throw ConfigError("matrix file: bad header");
  Matrix out(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j)
      if (!(in >> out(i, j))) throw ConfigError("matrix file: expected " + std::to_string(rows * cols) + " values");
  return out;
}

inline Matrix load_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open matrix file " + path);
  return parse_matrix(in);
}

}  // namespace mhfdia
