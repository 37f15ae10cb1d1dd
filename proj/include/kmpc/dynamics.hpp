#pragma once

#include <Eigen/Dense>

namespace kmpc {

inline constexpr int kStateDim = 4;
inline constexpr int kInputDim = 2;
inline constexpr int kAugDim = kStateDim + 1;

/// Unicycle state: planar position, heading (unwrapped) and forward speed.
struct State
{
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
  double v = 0.0;

  Eigen::Vector4d vec() const { return {x, y, theta, v}; }
  static State from(const Eigen::Vector4d & s) { return {s(0), s(1), s(2), s(3)}; }
  bool finite() const;
};

/// u1 is the turn rate, u2 the forward acceleration.
struct Input
{
  double u1 = 0.0;
  double u2 = 0.0;

  Eigen::Vector2d vec() const { return {u1, u2}; }
  static Input from(const Eigen::Vector2d & u) { return {u(0), u(1)}; }
};

/// Circular keep-out region.
struct ObstacleSpec
{
  double cx = 0.0;
  double cy = 0.0;
  double r = 1.0;

  void validate() const;
};

/// State extended with the barrier value evaluated at that state.
struct AugmentedState
{
  State state;
  double h = 0.0;

  Eigen::Matrix<double, kAugDim, 1> vec() const;
};

struct BoxBounds
{
  Eigen::Vector4d state_lo = Eigen::Vector4d::Constant(-3.0);
  Eigen::Vector4d state_hi = Eigen::Vector4d::Constant(3.0);
  Eigen::Vector2d input_lo = Eigen::Vector2d::Constant(-3.0);
  Eigen::Vector2d input_hi = Eigen::Vector2d::Constant(3.0);

  /// Throws std::invalid_argument if any lo > hi or a bound is NaN.
  void validate() const;

  bool contains(const State & s, double tol = 0.0) const;
  bool contains(const Input & u, double tol = 0.0) const;
};

/// Continuous-time unicycle vector field, returned as a State-shaped derivative.
State unicycle_deriv(const State & s, const Input & u);

/// One classical Runge-Kutta step with the input held constant over [0, dt].
State rk4_step(const State & s, const Input & u, double dt);

/// (x - cx)^2 + (y - cy)^2 - r^2. Nonnegative outside the obstacle.
double barrier(const State & s, const ObstacleSpec & obs);

AugmentedState augment(const State & s, const ObstacleSpec & obs);

/// Advances the state with rk4_step and recomputes h on the new state.
AugmentedState aug_step(const AugmentedState & a, const Input & u, double dt, const ObstacleSpec & obs);

}  // namespace kmpc
