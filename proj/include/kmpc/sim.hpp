#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "kmpc/controller.hpp"

namespace kmpc {

struct Scenario
{
  State x0{-2.5, -2.0, 0.2, 2.0};
  State x_goal{2.0, 2.5, 0.0, 0.3};
  ObstacleSpec obstacle;
  int T_steps = 800;
  double dt = 0.01;
  MpcConfig mpc;
  SolverSettings solver;
  std::string model_path;  // informational; the CLI resolves it
  std::uint64_t seed = 0;  // no stochastic elements yet
  std::string label = "default";

  /// Throws ConfigError if the scenario cannot run against `m` (dt or obstacle mismatch,
  /// negative horizon, invalid MPC settings).
  void validate(const KoopmanModel & m) const;

  /// The MPC configuration actually used: goal and dt taken from the scenario.
  MpcConfig effective_mpc() const;
};

struct SimRecord
{
  int t = 0;
  State state;           // measured state at step t
  Input input;           // applied input
  double h_true = 0.0;   // h(state), recomputed from the plant state
  double h_lifted = 0.0; // h~(lift(state))
  double omega_first = 0.0;
  QpStatus status = QpStatus::optimal;
  int iterations = 0;
  double solve_time = 0.0;  // seconds
  bool fallback = false;    // zero input applied after a solver failure
};

struct SimLog
{
  std::string label;
  std::vector<SimRecord> records;
  State final_state;
  double final_h_true = 0.0;
  double final_h_lifted = 0.0;
  std::optional<std::string> aborted;  // reason, when the loop stopped early
};

/// Receding-horizon loop on the true plant. `on_step` (optional) sees every MpcStep.
SimLog run_closed_loop(
  const KoopmanModel & m, const Scenario & sc, const std::function<void(const MpcStep &)> & on_step = {});

struct PredictionRow
{
  double t = 0.0;
  State truth;
  State predicted;
  double h_true = 0.0;
  double h_hat = 0.0;    // h at the reconstructed state
  double h_tilde = 0.0;  // e_h^T C psi
  double e = 0.0;
};

/// True RK4 rollout against the linear predictor from lift(augment(x0)). Rows k = 0..T-1.
/// Missing inputs are zero. Throws ConfigError when dt differs from the model's.
std::vector<PredictionRow> validate_prediction(
  const KoopmanModel & m, const State & x0, const std::vector<Input> & inputs, int T_steps, double dt);

struct Summary
{
  int steps = 0;
  double min_h_true = 0.0;
  double min_h_lifted = 0.0;
  double final_goal_distance = 0.0;
  double mean_solve_ms = 0.0;
  double max_solve_ms = 0.0;
  int relaxed_steps = 0;     // omega_first < 0.99
  int nonoptimal_steps = 0;
  bool aborted = false;
};

inline constexpr double kRelaxedOmega = 0.99;

/// Throws std::invalid_argument on an empty log.
Summary metrics(const SimLog & log, const State & goal);

struct SweepRow
{
  int N = 0;
  double gamma = 0.0;
  Summary summary;
};

/// One closed-loop run per (N, gamma), N-major order. Throws ConfigError on an empty grid.
std::vector<SweepRow> sweep(
  const KoopmanModel & m, const Scenario & base, const std::vector<int> & N_list,
  const std::vector<double> & gamma_list);

}  // namespace kmpc
