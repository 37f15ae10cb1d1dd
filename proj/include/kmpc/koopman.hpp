#pragma once

#include <cstdint>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "kmpc/dynamics.hpp"

namespace kmpc {

/// Fixed positions in the lifted vector. RBF features follow kFixed.
namespace lifted {
inline constexpr int kX = 0;
inline constexpr int kY = 1;
inline constexpr int kV = 2;
inline constexpr int kSin = 3;
inline constexpr int kCos = 4;
inline constexpr int kVCos = 5;
inline constexpr int kVSin = 6;
inline constexpr int kH = 7;
inline constexpr int kFixed = 8;
}  // namespace lifted

/// Rows of the output map C, matching AugmentedState::vec().
namespace output {
inline constexpr int kX = 0;
inline constexpr int kY = 1;
inline constexpr int kTheta = 2;
inline constexpr int kV = 3;
inline constexpr int kH = 4;
}  // namespace output

/**
 * @brief Dictionary of observables: eight analytic features followed by Gaussian RBFs.
 *
 * Centers are stored as physical states (x, y, theta, v). Distances are taken in the
 * embedded coordinates (x, y, sin theta, cos theta, v) so the features are 2*pi periodic
 * in the heading.
 */
class ObservableBasis
{
public:
  ObservableBasis() = default;

  /// @param centers n_rbf x 4 matrix of (x, y, theta, v) rows
  /// @param widths  n_rbf positive widths
  ObservableBasis(Eigen::MatrixXd centers, Eigen::VectorXd widths, std::uint64_t seed);

  /// Centers uniform over the state part of `ranges`, one shared width.
  static ObservableBasis random(int n_rbf, double width, const BoxBounds & ranges, std::uint64_t seed);

  int n_rbf() const { return static_cast<int>(centers_.rows()); }
  int dim() const { return lifted::kFixed + n_rbf(); }

  const Eigen::MatrixXd & centers() const { return centers_; }
  const Eigen::VectorXd & widths() const { return widths_; }
  std::uint64_t seed() const { return seed_; }

  /// Writes the lifted vector of `a` into `out` (size dim()).
  void lift_into(const AugmentedState & a, Eigen::Ref<Eigen::VectorXd> out) const;

private:
  Eigen::MatrixXd centers_;
  Eigen::VectorXd widths_;
  std::uint64_t seed_ = 0;

  Eigen::MatrixXd embedded_;    // n_rbf x 5
  Eigen::VectorXd inv_two_w2_;  // 1 / (2 w^2)
};

using LiftedState = Eigen::VectorXd;

LiftedState lift(const AugmentedState & a, const ObservableBasis & basis);

/// One-step transitions stored column-wise.
struct Dataset
{
  Eigen::MatrixXd psi_now;   // n_psi x N_d
  Eigen::MatrixXd psi_next;  // n_psi x N_d
  Eigen::MatrixXd inputs;    // q x N_d
  Eigen::MatrixXd aug_now;   // (n+1) x N_d
  double dt = 0.0;
  std::uint64_t seed = 0;

  Eigen::Index n_samples() const { return psi_now.cols(); }
};

/// Samples (state, input) i.i.d. uniform over `ranges` and advances each pair once.
Dataset generate_dataset(
  const BoxBounds & ranges,
  Eigen::Index n_samples,
  double dt,
  std::uint64_t seed,
  const ObstacleSpec & obs,
  const ObservableBasis & basis);

/// Raised when a regression system cannot be factorized.
class IdentificationError : public std::runtime_error
{
public:
  IdentificationError(const std::string & what, double condition_number)
      : std::runtime_error(what), condition_number_(condition_number)
  {}
  double condition_number() const { return condition_number_; }

private:
  double condition_number_;
};

struct TransitionMatrices
{
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
};

/// Ridge regression [A B] = Psi' V^T (V V^T + lambda I)^-1 with V = [Psi; U].
TransitionMatrices fit_edmd(const Dataset & d, double lambda);

/// C = Xbar Psi^T (Psi Psi^T + eps I)^-1.
Eigen::MatrixXd fit_output_map(const Dataset & d, double eps = 1e-10);

/// ||Psi' - A Psi - B U||_F^2.
double edmd_misfit(const Dataset & d, const Eigen::MatrixXd & A, const Eigen::MatrixXd & B);

/// Regularized objective: misfit + lambda ||[A B]||_F^2.
double edmd_objective(const Dataset & d, const Eigen::MatrixXd & A, const Eigen::MatrixXd & B, double lambda);

struct FitReport
{
  double train_misfit = 0.0;       // Frobenius^2 of the one-step lifted residual
  double train_rms = 0.0;          // sqrt(misfit / (n_psi * N_d))
  Eigen::VectorXd output_max_abs;  // per C row, max |C psi - xbar| on training data
  Eigen::VectorXd heldout_max_abs; // same on held-out data
  double barrier_bound = 0.0;      // bound on |h~(lift(xbar)) - h(x)|
  std::optional<int> relative_degree;
  Eigen::Index n_train = 0;
  Eigen::Index n_heldout = 0;
};

struct KoopmanModel
{
  Eigen::MatrixXd A;
  Eigen::MatrixXd B;
  Eigen::MatrixXd C;
  ObservableBasis basis;
  double lambda = 0.0;
  double dt = 0.0;
  ObstacleSpec obstacle;
  FitReport report;

  int n_psi() const { return static_cast<int>(A.rows()); }
  int n_inputs() const { return static_cast<int>(B.cols()); }

  /// e_h^T C, the linear barrier read-out.
  Eigen::RowVectorXd barrier_row() const { return C.row(output::kH); }

  /// Throws std::invalid_argument on inconsistent dimensions.
  void validate() const;
};

/// Sampling box for identification: +-3 on x, y, v and inputs; heading over [-pi, pi].
inline BoxBounds default_sampling_ranges()
{
  BoxBounds b;
  b.state_lo(2) = -std::numbers::pi;
  b.state_hi(2) = std::numbers::pi;
  return b;
}

struct IdentifyConfig
{
  BoxBounds ranges = default_sampling_ranges();
  Eigen::Index n_samples = 200000;
  Eigen::Index n_heldout = 1000;
  double dt = 0.01;
  std::uint64_t seed = 1;
  ObstacleSpec obstacle;
  int n_rbf = 100;
  double rbf_width = 1.0;
  std::uint64_t basis_seed = 7;
  double lambda = 1e-6;
  double output_eps = 1e-10;
  int relative_degree_max = 64;
};

/// Full pipeline: basis, dataset, (A, B), C, residual report.
KoopmanModel identify(const IdentifyConfig & cfg);

/// Linear rollout. Element 0 is psi0, element k+1 is A psi_k + B u_k.
std::vector<LiftedState> predict(const KoopmanModel & m, const LiftedState & psi0, const std::vector<Input> & inputs);

struct Reconstruction
{
  AugmentedState aug;
  bool heading_degenerate = false;
};

/// x, y, v and h through C; heading from atan2 of the lifted (sin, cos) pair.
Reconstruction reconstruct(const KoopmanModel & m, const LiftedState & psi);

/// h~(psi) = e_h^T C psi.
double lifted_barrier(const KoopmanModel & m, const LiftedState & psi);

inline constexpr double kRelativeDegreeTol = 1e-8;

/// Smallest m <= m_max with ||e_h^T C A^(m-1) B||_inf > tol.
std::optional<int> relative_degree(const KoopmanModel & m, int m_max, double tol = kRelativeDegreeTol);

/// Wraps an angle difference into (-pi, pi].
double wrap_angle(double a);

/// e_t = ||x_t - xhat_t||_2 with the heading difference wrapped.
std::vector<double> prediction_error(const std::vector<State> & truth, const std::vector<State> & predicted);

/// Predicts from lift(augment(truth[0])) under `inputs` and compares. Requires
/// inputs.size() + 1 == truth.size().
std::vector<double> prediction_error(
  const KoopmanModel & m, const std::vector<State> & truth, const std::vector<Input> & inputs);

}  // namespace kmpc
