#include "kmpc/dynamics.hpp"

#include <cmath>
#include <stdexcept>

namespace kmpc {

bool State::finite() const
{
  return std::isfinite(x) && std::isfinite(y) && std::isfinite(theta) && std::isfinite(v);
}

void ObstacleSpec::validate() const
{
  if (!(r > 0.0) || !std::isfinite(cx) || !std::isfinite(cy) || !std::isfinite(r)) {
    throw std::invalid_argument("obstacle radius must be positive and all fields finite");
  }
}

Eigen::Matrix<double, kAugDim, 1> AugmentedState::vec() const
{
  Eigen::Matrix<double, kAugDim, 1> out;
  out << state.x, state.y, state.theta, state.v, h;
  return out;
}

void BoxBounds::validate() const
{
  // NaN fails every comparison, so the negated form catches it too.
  for (int i = 0; i < kStateDim; ++i) {
    if (!(state_lo(i) <= state_hi(i))) { throw std::invalid_argument("state bounds: lo > hi"); }
  }
  for (int i = 0; i < kInputDim; ++i) {
    if (!(input_lo(i) <= input_hi(i))) { throw std::invalid_argument("input bounds: lo > hi"); }
  }
}

bool BoxBounds::contains(const State & s, double tol) const
{
  const Eigen::Vector4d v = s.vec();
  return ((v - state_lo).array() >= -tol).all() && ((state_hi - v).array() >= -tol).all();
}

bool BoxBounds::contains(const Input & u, double tol) const
{
  const Eigen::Vector2d v = u.vec();
  return ((v - input_lo).array() >= -tol).all() && ((input_hi - v).array() >= -tol).all();
}

State unicycle_deriv(const State & s, const Input & u)
{
  return {s.v * std::cos(s.theta), s.v * std::sin(s.theta), u.u1, u.u2};
}

State rk4_step(const State & s, const Input & u, double dt)
{
  if (!(dt >= 0.0) || !std::isfinite(dt)) { throw std::invalid_argument("rk4_step: dt must be finite and >= 0"); }

  const auto axpy = [](const State & a, double h, const State & d) {
    return State{a.x + h * d.x, a.y + h * d.y, a.theta + h * d.theta, a.v + h * d.v};
  };

  const State k1 = unicycle_deriv(s, u);
  const State k2 = unicycle_deriv(axpy(s, 0.5 * dt, k1), u);
  const State k3 = unicycle_deriv(axpy(s, 0.5 * dt, k2), u);
  const State k4 = unicycle_deriv(axpy(s, dt, k3), u);

  const double w = dt / 6.0;
  return {
    s.x + w * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x),
    s.y + w * (k1.y + 2.0 * k2.y + 2.0 * k3.y + k4.y),
    s.theta + w * (k1.theta + 2.0 * k2.theta + 2.0 * k3.theta + k4.theta),
    s.v + w * (k1.v + 2.0 * k2.v + 2.0 * k3.v + k4.v),
  };
}

double barrier(const State & s, const ObstacleSpec & obs)
{
  const double dx = s.x - obs.cx;
  const double dy = s.y - obs.cy;
  return dx * dx + dy * dy - obs.r * obs.r;
}

AugmentedState augment(const State & s, const ObstacleSpec & obs) { return {s, barrier(s, obs)}; }

AugmentedState aug_step(const AugmentedState & a, const Input & u, double dt, const ObstacleSpec & obs)
{
  return augment(rk4_step(a.state, u, dt), obs);
}

}  // namespace kmpc
