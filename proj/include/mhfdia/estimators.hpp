#pragma once

#include "mhfdia/plant.hpp"

namespace mhfdia {

// l2 moving-horizon estimator: argmin_x ||y_I - H x|| = H^+ y_I with
// H^+ = V diag(sigma)^-1 U1^T.
class MheEstimator {
 public:
  explicit MheEstimator(HorizonObservation horizon) : horizon_(std::move(horizon)) {
    pinv_ = horizon_.v * horizon_.sigma.cwiseInverse().asDiagonal() * horizon_.u1.transpose();
  }

  const HorizonObservation& horizon() const { return horizon_; }
  const Matrix& pseudo_inverse() const { return pinv_; }

  Vector estimate(const Vector& window) const {
    require(window.size() == horizon_.rows(), "window dimension must be T*m");
    return pinv_ * window;
  }

 private:
  HorizonObservation horizon_;
  Matrix pinv_;
};

struct DetectorVerdict {
  double residual = 0.0;
  bool alarm = false;
};

// Residual-based bad-data detector ||(I - H H^+) y_I|| > delta.
class BddDetector {
 public:
  BddDetector(const MheEstimator& estimator, double threshold) : threshold_(threshold) {
    require(threshold >= 0.0, "detector threshold must be non-negative");
    const Matrix& h = estimator.horizon().stacked;
    projector_ = Matrix::Identity(h.rows(), h.rows()) - h * estimator.pseudo_inverse();
  }

  double threshold() const { return threshold_; }
  const Matrix& projector() const { return projector_; }

  double residual(const Vector& window) const {
    require(window.size() == projector_.rows(), "window dimension must be T*m");
    return (projector_ * window).norm();
  }

  // Boundary residual == threshold is not an alarm.
  DetectorVerdict check(const Vector& window) const {
    const double r = residual(window);
    return {r, r > threshold_};
  }

 private:
  double threshold_;
  Matrix projector_;
};

// x+ = A x + L (y - C x)
class LuenbergerObserver {
 public:
  LuenbergerObserver(const PlantModel& plant, Matrix gain) : plant_(plant), gain_(std::move(gain)) {
    require(gain_.rows() == plant.states() && gain_.cols() == plant.outputs(), "observer gain must be n x m");
    error_radius_ = linalg::spectral_radius(plant.transition - gain_ * plant.measurement);
    if (!(error_radius_ < 1.0))
      throw NumericalError("observer error dynamics unstable: rho(A - L C) = " + std::to_string(error_radius_));
  }

  // Default gain 0.5 * A * C^+.
  static LuenbergerObserver with_default_gain(const PlantModel& plant) {
    return LuenbergerObserver(plant, 0.5 * plant.transition * linalg::pseudo_inverse(plant.measurement));
  }

  const Matrix& gain() const { return gain_; }
  double error_spectral_radius() const { return error_radius_; }

  Vector step(const Vector& estimate, const Vector& measurement) const {
    return plant_.transition * estimate + gain_ * (measurement - plant_.measurement * estimate);
  }

 private:
  PlantModel plant_;
  Matrix gain_;
  double error_radius_ = 0.0;
};

}  // namespace mhfdia
