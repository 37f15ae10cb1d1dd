#include "kmpc/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace kmpc {

void Scenario::validate(const KoopmanModel & m) const
{
  if (T_steps < 0) { throw ConfigError("scenario: T_steps must be >= 0"); }
  if (!(dt > 0.0)) { throw ConfigError("scenario: dt must be positive"); }
  if (std::abs(dt - m.dt) > 1e-12 * std::max(1.0, m.dt)) {
    throw ConfigError(
      "scenario dt " + std::to_string(dt) + " does not match the model's identification dt " + std::to_string(m.dt));
  }
  if (obstacle.cx != m.obstacle.cx || obstacle.cy != m.obstacle.cy || obstacle.r != m.obstacle.r) {
    throw ConfigError("scenario obstacle differs from the obstacle the model was identified with");
  }
  if (!x0.finite() || !x_goal.finite()) { throw ConfigError("scenario: x0 and x_goal must be finite"); }
  effective_mpc().validate();
  solver.validate();
}

MpcConfig Scenario::effective_mpc() const
{
  MpcConfig c = mpc;
  c.x_ref = x_goal;
  c.dt = dt;
  return c;
}

SimLog run_closed_loop(const KoopmanModel & m, const Scenario & sc, const std::function<void(const MpcStep &)> & on_step)
{
  sc.validate(m);
  const MpcConfig cfg = sc.effective_mpc();
  KoopmanMpc mpc(m, cfg, sc.solver);

  SimLog log;
  log.label = sc.label;
  log.records.reserve(sc.T_steps);
  State s = sc.x0;
  for (int t = 0; t < sc.T_steps; ++t) {
    const LiftedState psi = lift(augment(s, sc.obstacle), m.basis);

    SimRecord r;
    r.t = t;
    r.state = s;
    r.h_true = barrier(s, sc.obstacle);
    r.h_lifted = lifted_barrier(m, psi);

    MpcStep step;
    try {
      step = mpc.step(psi);
    } catch (const std::exception & e) {
      log.aborted = std::string("solver error at step ") + std::to_string(t) + ": " + e.what();
      break;
    }
    if (on_step) { on_step(step); }

    r.status = step.status;
    r.iterations = step.iterations;
    r.solve_time = step.solve_time;
    r.omega_first = step.predicted_omega.front();
    const bool usable = step.status == QpStatus::optimal && cfg.bounds.contains(step.u0, 1e-6);
    if (usable) {
      r.input = step.u0;
    } else {
      r.input = Input{};
      r.fallback = true;
      mpc.reset();
    }
    log.records.push_back(r);

    s = rk4_step(s, r.input, sc.dt);
    if (!s.finite()) {
      log.aborted = "non-finite plant state after step " + std::to_string(t);
      break;
    }
  }
  log.final_state = s;
  log.final_h_true = barrier(s, sc.obstacle);
  log.final_h_lifted = s.finite() ? lifted_barrier(m, lift(augment(s, sc.obstacle), m.basis))
                                  : std::numeric_limits<double>::quiet_NaN();
  return log;
}

std::vector<PredictionRow> validate_prediction(
  const KoopmanModel & m, const State & x0, const std::vector<Input> & inputs, int T_steps, double dt)
{
  if (T_steps < 0) { throw ConfigError("validate_prediction: T_steps must be >= 0"); }
  if (std::abs(dt - m.dt) > 1e-12 * std::max(1.0, m.dt)) {
    throw ConfigError("validate_prediction: dt does not match the model's identification dt");
  }
  std::vector<PredictionRow> rows;
  rows.reserve(T_steps);
  State s = x0;
  LiftedState psi = lift(augment(x0, m.obstacle), m.basis);
  for (int k = 0; k < T_steps; ++k) {
    const Reconstruction rec = reconstruct(m, psi);
    PredictionRow r;
    r.t = k * dt;
    r.truth = s;
    r.predicted = rec.aug.state;
    r.h_true = barrier(s, m.obstacle);
    r.h_hat = barrier(rec.aug.state, m.obstacle);
    r.h_tilde = lifted_barrier(m, psi);
    r.e = prediction_error({s}, {rec.aug.state}).front();
    rows.push_back(r);

    const Input u = static_cast<std::size_t>(k) < inputs.size() ? inputs[k] : Input{};
    s = rk4_step(s, u, dt);
    psi = m.A * psi + m.B * u.vec();
  }
  return rows;
}

Summary metrics(const SimLog & log, const State & goal)
{
  if (log.records.empty()) { throw std::invalid_argument("metrics: empty log"); }
  Summary s;
  s.steps = static_cast<int>(log.records.size());
  s.min_h_true = log.final_h_true;
  s.min_h_lifted = log.final_h_lifted;
  double total = 0.0;
  for (const auto & r : log.records) {
    s.min_h_true = std::min(s.min_h_true, r.h_true);
    s.min_h_lifted = std::min(s.min_h_lifted, r.h_lifted);
    total += r.solve_time;
    s.max_solve_ms = std::max(s.max_solve_ms, 1e3 * r.solve_time);
    if (r.omega_first < kRelaxedOmega) { ++s.relaxed_steps; }
    if (r.status != QpStatus::optimal) { ++s.nonoptimal_steps; }
  }
  s.mean_solve_ms = 1e3 * total / s.steps;
  s.final_goal_distance = std::hypot(log.final_state.x - goal.x, log.final_state.y - goal.y);
  s.aborted = log.aborted.has_value();
  return s;
}

std::vector<SweepRow> sweep(
  const KoopmanModel & m, const Scenario & base, const std::vector<int> & N_list,
  const std::vector<double> & gamma_list)
{
  if (N_list.empty() || gamma_list.empty()) { throw ConfigError("sweep: N and gamma lists must be non-empty"); }
  std::vector<SweepRow> rows;
  for (int N : N_list) {
    for (double gamma : gamma_list) {
      Scenario sc = base;
      sc.mpc.N = N;
      sc.mpc.gamma = gamma;
      const SimLog log = run_closed_loop(m, sc);
      rows.push_back({N, gamma, metrics(log, sc.x_goal)});
    }
  }
  return rows;
}

}  // namespace kmpc
