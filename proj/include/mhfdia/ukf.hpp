#pragma once

#include <functional>

#include "mhfdia/linalg.hpp"

namespace mhfdia {

struct UkfSpread {
  double alpha = 1.0;
  double beta = 2.0;
  double kappa = 0.0;
};

struct UkfWeights {
  double mean0 = 0.0;
  double cov0 = 0.0;
  double other = 0.0;
  double lambda = 0.0;

  static UkfWeights make(Index n, const UkfSpread& s) {
    require(s.alpha > 0.0 && s.alpha <= 1.0, "UKF alpha must lie in (0, 1]");
    require(s.kappa >= 0.0, "UKF kappa must be non-negative");
    const double dn = static_cast<double>(n);
    UkfWeights w;
    w.lambda = s.alpha * s.alpha * (dn + s.kappa) - dn;
    w.mean0 = w.lambda / (dn + w.lambda);
    w.cov0 = w.mean0 + (1.0 - s.alpha * s.alpha + s.beta);
    w.other = 1.0 / (2.0 * (dn + w.lambda));
    return w;
  }

  double sum_of_mean_weights(Index n) const { return mean0 + 2.0 * static_cast<double>(n) * other; }
};

struct UkfState {
  Vector mean;
  Matrix cov;
};

struct UkfPrediction {
  UkfState state;         // predicted mean and covariance (process noise added)
  Vector output_mean;     // predicted measurement
  Matrix output_cov;      // innovation covariance (measurement noise added)
  Matrix cross_cov;       // state/measurement cross covariance
};

// Unscented Kalman filter with 2n+1 sigma points. Sigma points are redrawn
// from the predicted distribution before the measurement transform.
class UnscentedKalmanFilter {
 public:
  using Dynamics = std::function<Vector(const Vector& x, const Vector& u)>;
  using Output = std::function<Vector(const Vector& x)>;

  UnscentedKalmanFilter(Dynamics f, Output g, Matrix process_cov, Matrix measurement_cov, UkfSpread spread = {})
      : f_(std::move(f)),
        g_(std::move(g)),
        q_(std::move(process_cov)),
        r_(std::move(measurement_cov)),
        spread_(spread),
        weights_(UkfWeights::make(q_.rows(), spread)) {
    require(q_.rows() == q_.cols(), "process covariance must be square");
    require(r_.rows() == r_.cols(), "measurement covariance must be square");
  }

  const UkfWeights& weights() const { return weights_; }
  const Matrix& process_cov() const { return q_; }
  const Matrix& measurement_cov() const { return r_; }

  Matrix sigma_points(const UkfState& s) const {
    const Index n = s.mean.size();
    const Matrix root = linalg::symmetric_sqrt((static_cast<double>(n) + weights_.lambda) * s.cov);
    Matrix pts(n, 2 * n + 1);
    pts.col(0) = s.mean;
    for (Index i = 0; i < n; ++i) {
      pts.col(1 + i) = s.mean + root.col(i);
      pts.col(1 + n + i) = s.mean - root.col(i);
    }
    return pts;
  }

  UkfPrediction predict(const UkfState& s, const Vector& input) const {
    const Index n = s.mean.size();
    require(n == q_.rows(), "state dimension does not match the process covariance");
    const Matrix pts = sigma_points(s);
    Matrix prop(n, pts.cols());
    for (Index i = 0; i < pts.cols(); ++i) prop.col(i) = f_(pts.col(i), input);
    if (!prop.allFinite()) throw NumericalError("UKF diverged: non-finite sigma point propagation");

    UkfPrediction out;
    out.state.mean = weighted_mean(prop);
    out.state.cov = weighted_cov(prop, out.state.mean, prop, out.state.mean) + q_;

    const Matrix redraw = sigma_points(out.state);
    Matrix ys(r_.rows(), redraw.cols());
    for (Index i = 0; i < redraw.cols(); ++i) {
      Vector y = g_(redraw.col(i));
      require(y.size() == r_.rows(), "measurement dimension does not match the measurement covariance");
      ys.col(i) = y;
    }
    if (!ys.allFinite()) throw NumericalError("UKF diverged: non-finite measurement prediction");
    out.output_mean = weighted_mean(ys);
    out.output_cov = weighted_cov(ys, out.output_mean, ys, out.output_mean) + r_;
    out.cross_cov = weighted_cov(redraw, out.state.mean, ys, out.output_mean);
    return out;
  }

  UkfState update(const UkfPrediction& p, const Vector& y) const {
    require(y.size() == p.output_mean.size(), "measurement has the wrong dimension");
    Eigen::LLT<Matrix> llt(0.5 * (p.output_cov + p.output_cov.transpose()));
    if (llt.info() != Eigen::Success) throw NumericalError("UKF update failed: singular innovation covariance");
    const Matrix gain = llt.solve(p.cross_cov.transpose()).transpose();
    UkfState out;
    out.mean = p.state.mean + gain * (y - p.output_mean);
    out.cov = p.state.cov - gain * p.output_cov * gain.transpose();
    out.cov = 0.5 * (out.cov + out.cov.transpose());
    if (!out.mean.allFinite() || !out.cov.allFinite()) throw NumericalError("UKF update produced non-finite values");
    return out;
  }

  UkfState step(const UkfState& s, const Vector& input, const Vector& y) const { return update(predict(s, input), y); }

 private:
  Vector weighted_mean(const Matrix& pts) const {
    const Index n = (pts.cols() - 1) / 2;
    Vector mean = weights_.mean0 * pts.col(0);
    for (Index i = 1; i <= 2 * n; ++i) mean += weights_.other * pts.col(i);
    return mean;
  }

  Matrix weighted_cov(const Matrix& a, const Vector& ma, const Matrix& b, const Vector& mb) const {
    const Index n = (a.cols() - 1) / 2;
    Matrix cov = weights_.cov0 * (a.col(0) - ma) * (b.col(0) - mb).transpose();
    for (Index i = 1; i <= 2 * n; ++i) cov += weights_.other * (a.col(i) - ma) * (b.col(i) - mb).transpose();
    return cov;
  }

  Dynamics f_;
  Output g_;
  Matrix q_;
  Matrix r_;
  UkfSpread spread_;
  UkfWeights weights_;
};

}  // namespace mhfdia
