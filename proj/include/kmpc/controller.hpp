#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kmpc/dynamics.hpp"
#include "kmpc/koopman.hpp"
#include "kmpc/qp.hpp"

namespace kmpc {

/// Invalid controller or scenario configuration.
class ConfigError : public std::invalid_argument
{
public:
  using std::invalid_argument::invalid_argument;
};

/// Weighted lifted coordinates in the tracking cost: x, y, v, sin(theta), cos(theta).
inline constexpr int kTrackedDim = 5;
using TrackWeights = Eigen::Matrix<double, kTrackedDim, 1>;

/**
 * How the QP is posed to the solver.
 *
 * `sparse` keeps every predicted lifted state as a decision variable with the dynamics as
 * equality constraints. `condensed` eliminates the lifted states through the dynamics and
 * keeps only inputs and slacks. Both describe the same optimization problem.
 */
enum class Formulation { condensed, sparse };

struct MpcConfig
{
  int N = 16;
  double gamma = 0.2;
  TrackWeights q_weights = (TrackWeights() << 500, 500, 80, 80, 10).finished();
  TrackWeights p_weights = (TrackWeights() << 500, 500, 80, 80, 10).finished();
  Eigen::Vector2d r_weights{0.3, 0.5};
  double s_weight = 1000.0;
  BoxBounds bounds;
  State x_ref{2.0, 2.5, 0.0, 0.3};
  Input u_ref{0.0, 0.0};
  double omega_ref = 1.0;
  bool enable_dcbf = true;
  double epsilon_margin = 0.0;  // DCBF rows enforce h~ >= this value
  double dt = 0.01;
  Formulation formulation = Formulation::condensed;

  /// Throws ConfigError.
  void validate() const;
};

struct MpcStep
{
  Input u0;
  std::vector<LiftedState> predicted_psi;  // N + 1 states, element 0 is psi_t
  std::vector<Input> predicted_u;          // N inputs
  std::vector<double> predicted_omega;     // N slacks
  std::vector<double> predicted_h;         // h~ of predicted_psi, N + 1 entries
  QpStatus status = QpStatus::max_iters;
  int iterations = 0;
  double solve_time = 0.0;  // seconds, QP build + solve
  double h_tilde_now = 0.0;
  QpSolution qp;            // raw solver output, used for warm starts
};

/// psi_r: the lifted goal, computed once per run.
LiftedState build_reference(const KoopmanModel & m, const MpcConfig & cfg, const ObstacleSpec & obs);

/// The LMPC-DCBF program over z = [psi_{t+1..t+N}; u_{t..t+N-1}; omega_{t..t+N-1}].
///
/// Inequality rows in order: state box via E_x C (4 per step), input box (q per step),
/// omega >= 0 (one per step), then the DCBF rows when enabled (one per step).
QpProblem build_qp(const KoopmanModel & m, const MpcConfig & cfg, const LiftedState & psi_now);

/// Receding-horizon controller over an identified model. Holds the condensed prediction
/// matrices, a solver workspace and the previous solution for warm starts.
class KoopmanMpc
{
public:
  /// Throws ConfigError when the configuration is invalid, when dt differs from the
  /// model's, or when DCBF constraints are enabled and the barrier relative degree exceeds N.
  KoopmanMpc(const KoopmanModel & m, MpcConfig cfg, SolverSettings settings = {});

  /// Solves at psi_now, warm-started from the previous call's solution when available.
  MpcStep step(const LiftedState & psi_now);

  /// Solves at psi_now using `warm` (may be null for a cold start).
  MpcStep step(const LiftedState & psi_now, const MpcStep * warm);

  /// Forgets the stored warm start.
  void reset() { last_.reset(); }

  const MpcConfig & config() const { return cfg_; }
  const LiftedState & reference() const { return psi_ref_; }
  std::optional<int> relative_degree() const { return rel_deg_; }

  /// The QP in the configured formulation.
  QpProblem build(const LiftedState & psi_now) const;

  /// Condensed QP over w = [u_{t..t+N-1}; omega_{t..t+N-1}], same row order as build_qp.
  QpProblem build_condensed(const LiftedState & psi_now) const;

private:
  WarmStart warm_start_from(const MpcStep & prev) const;
  WarmStart cold_start() const;
  MpcStep unpack(const LiftedState & psi_now, const QpSolution & sol) const;
  double dcbf_constant(const LiftedState & psi_now) const;

  KoopmanModel model_;
  MpcConfig cfg_;
  SolverSettings settings_;
  LiftedState psi_ref_;
  std::optional<int> rel_deg_;

  // Condensed prediction: outputs y_k = free_[k-1] psi_t + sum_j theta_ blocks u_j, with
  // 10 output rows per step: 5 tracked, 4 state-box (E_x C), 1 barrier.
  Eigen::MatrixXd free_;   // 10N x n_psi
  Eigen::MatrixXd theta_;  // 10N x qN
  Eigen::MatrixXd H_condensed_;
  Eigen::MatrixXd g_psi_;  // gradient w.r.t. u is g_psi_ psi_t + g_ref_
  Eigen::VectorXd g_ref_;

  QpSolver solver_;
  std::optional<MpcStep> last_;
};

/// One-shot convenience wrapper around KoopmanMpc.
MpcStep solve_step(
  const KoopmanModel & m, const MpcConfig & cfg, const LiftedState & psi_now, const MpcStep * warm = nullptr);

struct BarrierCheckReport
{
  bool pass = true;
  std::optional<int> failing_row;  // first horizon index k that violates
  double worst_margin = 0.0;       // min over k of h~_{k+1} - omega_k (1-gamma)^{k+1} h_now
  double min_predicted_h = 0.0;
  double min_omega = 0.0;
};

inline constexpr double kFeasibilityEps = 1e-6;
inline constexpr double kOmegaEps = 1e-9;

/// Checks h~(psi_{t+k+1}) >= omega_k (1-gamma)^{k+1} h_now - eps >= -eps and omega_k >= -1e-9.
BarrierCheckReport barrier_check(const MpcStep & step, double gamma, double h_now, double eps_feas = kFeasibilityEps);

}  // namespace kmpc
