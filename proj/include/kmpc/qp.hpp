#pragma once

#include <iosfwd>
#include <optional>
#include <string_view>

#include <Eigen/Dense>

namespace kmpc {

/// Bounds at or beyond this magnitude are treated as absent.
inline constexpr double kQpInfinity = 1e20;
inline constexpr double kQpInfinityThreshold = 1e19;

/**
 * @brief Dense convex QP
 *
 *   min  1/2 z^T H z + g^T z
 *   s.t. Aeq z = beq
 *        lo <= Ain z <= hi
 *
 * Build with QpProblem::make, which symmetrizes H and rejects inconsistent or
 * non-PSD data.
 */
struct QpProblem
{
  Eigen::MatrixXd H;
  Eigen::VectorXd g;
  Eigen::MatrixXd Aeq;
  Eigen::VectorXd beq;
  Eigen::MatrixXd Ain;
  Eigen::VectorXd lo;
  Eigen::VectorXd hi;

  static QpProblem make(
    Eigen::MatrixXd H,
    Eigen::VectorXd g,
    Eigen::MatrixXd Aeq,
    Eigen::VectorXd beq,
    Eigen::MatrixXd Ain,
    Eigen::VectorXd lo,
    Eigen::VectorXd hi);

  Eigen::Index n() const { return g.size(); }
  Eigen::Index n_eq() const { return beq.size(); }
  Eigen::Index n_in() const { return lo.size(); }

  /// Number of finite one-sided bounds (a two-sided row counts twice).
  Eigen::Index one_sided_rows() const;

  double objective(const Eigen::VectorXd & z) const { return 0.5 * z.dot(H * z) + g.dot(z); }

  /// Dimension and ordering checks only. Throws std::invalid_argument.
  void validate_shape() const;
};

enum class QpStatus { optimal, max_iters, primal_infeasible, dual_infeasible };

std::string_view to_string(QpStatus s);

/**
 * Duals follow the convention H z + g + Aeq^T y_eq + Ain^T y_in = 0, so y_in < 0 on an
 * active lower bound and y_in > 0 on an active upper bound.
 */
struct QpSolution
{
  Eigen::VectorXd z;
  Eigen::VectorXd y_eq;
  Eigen::VectorXd y_in;
  QpStatus status = QpStatus::max_iters;
  int iterations = 0;
  double primal_res = 0.0;
  double dual_res = 0.0;
  double objective = 0.0;
  double solve_time = 0.0;  // seconds
  bool polished = false;
};

struct WarmStart
{
  Eigen::VectorXd z;
  Eigen::VectorXd y_eq;
  Eigen::VectorXd y_in;
};

struct SolverSettings
{
  double eps_abs = 1e-6;
  double eps_rel = 1e-6;
  double eps_prim_inf = 1e-4;
  double eps_dual_inf = 1e-4;
  int max_iters = 20000;
  double rho = 0.1;
  double sigma = 1e-6;
  double alpha = 1.6;
  int adapt_rho_interval = 50;
  int check_interval = 5;
  int scaling_iters = 10;
  bool polish = true;
  std::optional<WarmStart> warm_start;

  void validate() const;
};

struct KktReport
{
  double stationarity = 0.0;     // ||H z + g + Aeq^T y_eq + Ain^T y_in||_inf
  double eq_residual = 0.0;      // ||Aeq z - beq||_inf
  double bound_violation = 0.0;  // max distance of Ain z outside [lo, hi]
  double complementarity = 0.0;  // max |y_i| * slack of the bound y_i points at

  double primal() const { return std::max(eq_residual, bound_violation); }
  double max() const { return std::max({stationarity, eq_residual, bound_violation, complementarity}); }
};

KktReport kkt_residuals(const QpProblem & p, const QpSolution & sol);

/**
 * @brief Operator-splitting (ADMM) solver with Ruiz equilibration, adaptive rho and
 * active-set polishing.
 *
 * Owns its workspace. The scaled problem and the factorization are reused when
 * consecutive problems share H, Aeq and Ain; in that case the previously adapted rho is
 * kept as well.
 */
class QpSolver
{
public:
  QpSolution solve(const QpProblem & p, const SolverSettings & s = {});

  /// Number of dense Cholesky factorizations performed so far.
  int factorizations() const { return factorizations_; }

private:
  bool cache_matches(const QpProblem & p) const;
  void setup(const QpProblem & p, const SolverSettings & s);
  void factorize(const SolverSettings & s);

  // cached unscaled matrices, used to detect reuse
  Eigen::MatrixXd H_, Aeq_, Ain_;
  bool has_cache_ = false;

  // scaled data; rows stacked as [eq; in]
  Eigen::MatrixXd Hs_, As_;
  Eigen::VectorXd D_, E_;
  double c_ = 1.0;
  Eigen::VectorXd rho_vec_;
  double rho_ = 0.1;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  int factorizations_ = 0;
};

/// Convenience one-shot solve.
QpSolution solve(const QpProblem & p, const SolverSettings & s = {});

/// Flat text dump: a dimensions header followed by row-major blocks.
void write_qp(std::ostream & os, const QpProblem & p);
QpProblem read_qp(std::istream & is);

}  // namespace kmpc
