#include "kmpc/koopman.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

namespace kmpc {

namespace {

Eigen::Matrix<double, 5, 1> embed(double x, double y, double theta, double v)
{
  Eigen::Matrix<double, 5, 1> e;
  e << x, y, std::sin(theta), std::cos(theta), v;
  return e;
}

// Factorizes a symmetric Gram matrix and solves G X = rhs. Throws when the
// factorization fails or the estimated condition number is beyond double precision.
Eigen::MatrixXd solve_gram(const Eigen::MatrixXd & gram, const Eigen::MatrixXd & rhs, const char * what)
{
  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  double rcond = ldlt.info() == Eigen::Success ? ldlt.rcond() : 0.0;
  // rcond() can miss exactly zero pivots; the pivot spread is a second estimate.
  const Eigen::VectorXd piv = ldlt.vectorD().cwiseAbs();
  if (piv.size() > 0) { rcond = std::min(rcond, piv.minCoeff() / std::max(piv.maxCoeff(), 1e-300)); }
  const double cond = rcond > 0.0 ? 1.0 / rcond : std::numeric_limits<double>::infinity();
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || !(rcond > std::numeric_limits<double>::epsilon())) {
    throw IdentificationError(
      std::string(what) + ": Gram matrix is numerically singular (condition estimate " + std::to_string(cond) + ")",
      cond);
  }
  return ldlt.solve(rhs);
}

}  // namespace

ObservableBasis::ObservableBasis(Eigen::MatrixXd centers, Eigen::VectorXd widths, std::uint64_t seed)
    : centers_(std::move(centers)), widths_(std::move(widths)), seed_(seed)
{
  if (centers_.rows() > 0 && centers_.cols() != kStateDim) {
    throw std::invalid_argument("ObservableBasis: centers must have 4 columns (x, y, theta, v)");
  }
  if (widths_.size() != centers_.rows()) {
    throw std::invalid_argument("ObservableBasis: need one width per center");
  }
  if (widths_.size() > 0 && !(widths_.array() > 0.0).all()) {
    throw std::invalid_argument("ObservableBasis: widths must be positive");
  }

  embedded_.resize(centers_.rows(), 5);
  for (Eigen::Index k = 0; k < centers_.rows(); ++k) {
    embedded_.row(k) = embed(centers_(k, 0), centers_(k, 1), centers_(k, 2), centers_(k, 3)).transpose();
  }
  inv_two_w2_ = (2.0 * widths_.array().square()).inverse().matrix();
}

ObservableBasis ObservableBasis::random(int n_rbf, double width, const BoxBounds & ranges, std::uint64_t seed)
{
  if (n_rbf < 0) { throw std::invalid_argument("ObservableBasis::random: n_rbf must be >= 0"); }
  ranges.validate();

  std::mt19937_64 rng(seed);
  Eigen::MatrixXd centers(n_rbf, kStateDim);
  for (int k = 0; k < n_rbf; ++k) {
    for (int i = 0; i < kStateDim; ++i) {
      std::uniform_real_distribution<double> dist(ranges.state_lo(i), ranges.state_hi(i));
      centers(k, i) = dist(rng);
    }
  }
  return ObservableBasis(std::move(centers), Eigen::VectorXd::Constant(n_rbf, width), seed);
}

void ObservableBasis::lift_into(const AugmentedState & a, Eigen::Ref<Eigen::VectorXd> out) const
{
  const State & s = a.state;
  const double sn = std::sin(s.theta);
  const double cs = std::cos(s.theta);

  out(lifted::kX) = s.x;
  out(lifted::kY) = s.y;
  out(lifted::kV) = s.v;
  out(lifted::kSin) = sn;
  out(lifted::kCos) = cs;
  out(lifted::kVCos) = s.v * cs;
  out(lifted::kVSin) = s.v * sn;
  out(lifted::kH) = a.h;

  Eigen::Matrix<double, 1, 5> e;
  e << s.x, s.y, sn, cs, s.v;
  for (Eigen::Index k = 0; k < embedded_.rows(); ++k) {
    const double d2 = (embedded_.row(k) - e).squaredNorm();
    out(lifted::kFixed + k) = std::exp(-d2 * inv_two_w2_(k));
  }
}

LiftedState lift(const AugmentedState & a, const ObservableBasis & basis)
{
  LiftedState psi(basis.dim());
  basis.lift_into(a, psi);
  return psi;
}

Dataset generate_dataset(
  const BoxBounds & ranges,
  Eigen::Index n_samples,
  double dt,
  std::uint64_t seed,
  const ObstacleSpec & obs,
  const ObservableBasis & basis)
{
  ranges.validate();
  obs.validate();
  if (!(dt > 0.0)) { throw std::invalid_argument("generate_dataset: dt must be positive"); }
  if (n_samples < 1) { throw std::invalid_argument("generate_dataset: n_samples must be positive"); }

  const int n_psi = basis.dim();
  Dataset d;
  d.dt = dt;
  d.seed = seed;
  d.psi_now.resize(n_psi, n_samples);
  d.psi_next.resize(n_psi, n_samples);
  d.inputs.resize(kInputDim, n_samples);
  d.aug_now.resize(kAugDim, n_samples);

  std::array<std::uniform_real_distribution<double>, kStateDim> state_dist;
  for (int i = 0; i < kStateDim; ++i) {
    state_dist[i] = std::uniform_real_distribution<double>(ranges.state_lo(i), ranges.state_hi(i));
  }
  std::array<std::uniform_real_distribution<double>, kInputDim> input_dist;
  for (int i = 0; i < kInputDim; ++i) {
    input_dist[i] = std::uniform_real_distribution<double>(ranges.input_lo(i), ranges.input_hi(i));
  }

  std::mt19937_64 rng(seed);
  for (Eigen::Index j = 0; j < n_samples; ++j) {
    State s;
    s.x = state_dist[0](rng);
    s.y = state_dist[1](rng);
    s.theta = state_dist[2](rng);
    s.v = state_dist[3](rng);
    Input u;
    u.u1 = input_dist[0](rng);
    u.u2 = input_dist[1](rng);

    const AugmentedState now = augment(s, obs);
    const AugmentedState next = aug_step(now, u, dt, obs);

    d.aug_now.col(j) = now.vec();
    d.inputs.col(j) = u.vec();
    basis.lift_into(now, d.psi_now.col(j));
    basis.lift_into(next, d.psi_next.col(j));
  }
  return d;
}

TransitionMatrices fit_edmd(const Dataset & d, double lambda)
{
  if (!(lambda >= 0.0)) { throw std::invalid_argument("fit_edmd: lambda must be >= 0"); }
  const Eigen::Index p = d.psi_now.rows();
  const Eigen::Index q = d.inputs.rows();
  if (d.psi_next.rows() != p || d.psi_next.cols() != d.n_samples() || d.inputs.cols() != d.n_samples()) {
    throw std::invalid_argument("fit_edmd: dataset dimensions disagree");
  }

  // Gram blocks of V = [Psi; U] without materializing V.
  Eigen::MatrixXd gram(p + q, p + q);
  gram.topLeftCorner(p, p).setZero();
  gram.topLeftCorner(p, p).selfadjointView<Eigen::Lower>().rankUpdate(d.psi_now);
  gram.topLeftCorner(p, p).triangularView<Eigen::StrictlyUpper>() =
    gram.topLeftCorner(p, p).transpose().triangularView<Eigen::StrictlyUpper>();
  gram.topRightCorner(p, q).noalias() = d.psi_now * d.inputs.transpose();
  gram.bottomLeftCorner(q, p) = gram.topRightCorner(p, q).transpose();
  gram.bottomRightCorner(q, q).noalias() = d.inputs * d.inputs.transpose();
  gram.diagonal().array() += lambda;

  Eigen::MatrixXd rhs(p + q, p);  // (Psi' V^T)^T
  rhs.topRows(p).noalias() = d.psi_now * d.psi_next.transpose();
  rhs.bottomRows(q).noalias() = d.inputs * d.psi_next.transpose();

  const Eigen::MatrixXd ab_t = solve_gram(gram, rhs, "fit_edmd");
  return {ab_t.topRows(p).transpose(), ab_t.bottomRows(q).transpose()};
}

Eigen::MatrixXd fit_output_map(const Dataset & d, double eps)
{
  const Eigen::Index p = d.psi_now.rows();
  if (d.n_samples() < p) {
    throw IdentificationError(
      "fit_output_map: " + std::to_string(d.n_samples()) + " samples cannot determine " + std::to_string(p) +
        " lifted coordinates",
      std::numeric_limits<double>::infinity());
  }
  if (d.aug_now.cols() != d.n_samples()) { throw std::invalid_argument("fit_output_map: dataset dimensions disagree"); }

  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(p, p);
  gram.selfadjointView<Eigen::Lower>().rankUpdate(d.psi_now);
  gram.triangularView<Eigen::StrictlyUpper>() = gram.transpose().triangularView<Eigen::StrictlyUpper>();
  gram.diagonal().array() += eps;

  const Eigen::MatrixXd rhs = d.psi_now * d.aug_now.transpose();
  return solve_gram(gram, rhs, "fit_output_map").transpose();
}

double edmd_misfit(const Dataset & d, const Eigen::MatrixXd & A, const Eigen::MatrixXd & B)
{
  return (d.psi_next - A * d.psi_now - B * d.inputs).squaredNorm();
}

double edmd_objective(const Dataset & d, const Eigen::MatrixXd & A, const Eigen::MatrixXd & B, double lambda)
{
  return edmd_misfit(d, A, B) + lambda * (A.squaredNorm() + B.squaredNorm());
}

void KoopmanModel::validate() const
{
  const Eigen::Index p = A.rows();
  if (A.cols() != p || B.rows() != p || C.cols() != p || C.rows() != kAugDim || B.cols() != kInputDim) {
    throw std::invalid_argument("KoopmanModel: inconsistent matrix dimensions");
  }
  if (basis.dim() != p) { throw std::invalid_argument("KoopmanModel: basis dimension does not match A"); }
}

KoopmanModel identify(const IdentifyConfig & cfg)
{
  const ObservableBasis basis = ObservableBasis::random(cfg.n_rbf, cfg.rbf_width, cfg.ranges, cfg.basis_seed);
  if (cfg.n_samples < basis.dim() + kInputDim) {
    throw std::invalid_argument("identify: n_samples must be at least n_psi + q");
  }

  KoopmanModel m;
  m.basis = basis;
  m.lambda = cfg.lambda;
  m.dt = cfg.dt;
  m.obstacle = cfg.obstacle;

  FitReport & rep = m.report;
  {
    const Dataset d = generate_dataset(cfg.ranges, cfg.n_samples, cfg.dt, cfg.seed, cfg.obstacle, basis);
    auto [A, B] = fit_edmd(d, cfg.lambda);
    m.A = std::move(A);
    m.B = std::move(B);
    m.C = fit_output_map(d, cfg.output_eps);

    rep.n_train = d.n_samples();
    rep.train_misfit = edmd_misfit(d, m.A, m.B);
    rep.train_rms = std::sqrt(rep.train_misfit / static_cast<double>(d.psi_now.size()));
    rep.output_max_abs = (m.C * d.psi_now - d.aug_now).cwiseAbs().rowwise().maxCoeff();
  }

  if (cfg.n_heldout > 0) {
    // Held-out stream uses the next seed so it never overlaps the training draws.
    const Dataset h = generate_dataset(cfg.ranges, cfg.n_heldout, cfg.dt, cfg.seed + 1, cfg.obstacle, basis);
    rep.n_heldout = h.n_samples();
    rep.heldout_max_abs = (m.C * h.psi_now - h.aug_now).cwiseAbs().rowwise().maxCoeff();
  } else {
    rep.heldout_max_abs = Eigen::VectorXd::Zero(kAugDim);
  }
  rep.barrier_bound = std::max(rep.output_max_abs(output::kH), rep.heldout_max_abs(output::kH));
  rep.relative_degree = relative_degree(m, cfg.relative_degree_max);
  return m;
}

std::vector<LiftedState> predict(const KoopmanModel & m, const LiftedState & psi0, const std::vector<Input> & inputs)
{
  if (psi0.size() != m.A.rows()) { throw std::invalid_argument("predict: psi0 has wrong dimension"); }
  std::vector<LiftedState> out;
  out.reserve(inputs.size() + 1);
  out.push_back(psi0);
  for (const Input & u : inputs) {
    LiftedState next = m.A * out.back() + m.B * u.vec();
    out.push_back(std::move(next));
  }
  return out;
}

Reconstruction reconstruct(const KoopmanModel & m, const LiftedState & psi)
{
  const Eigen::VectorXd xbar = m.C * psi;
  Reconstruction r;
  r.aug.state.x = xbar(output::kX);
  r.aug.state.y = xbar(output::kY);
  r.aug.state.v = xbar(output::kV);
  r.aug.h = xbar(output::kH);

  const double sn = psi(lifted::kSin);
  const double cs = psi(lifted::kCos);
  if (std::hypot(sn, cs) < 1e-9) {
    r.aug.state.theta = 0.0;
    r.heading_degenerate = true;
  } else {
    r.aug.state.theta = std::atan2(sn, cs);
  }
  return r;
}

double lifted_barrier(const KoopmanModel & m, const LiftedState & psi) { return m.C.row(output::kH).dot(psi); }

std::optional<int> relative_degree(const KoopmanModel & m, int m_max, double tol)
{
  if (m_max < 1) { throw std::invalid_argument("relative_degree: m_max must be >= 1"); }
  Eigen::RowVectorXd row = m.barrier_row();
  for (int k = 1; k <= m_max; ++k) {
    if ((row * m.B).cwiseAbs().maxCoeff() > tol) { return k; }
    row = row * m.A;
  }
  return std::nullopt;
}

double wrap_angle(double a)
{
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double r = std::fmod(a + std::numbers::pi, two_pi);
  if (r <= 0.0) { r += two_pi; }
  return r - std::numbers::pi;
}

std::vector<double> prediction_error(const std::vector<State> & truth, const std::vector<State> & predicted)
{
  if (truth.size() != predicted.size()) {
    throw std::invalid_argument("prediction_error: trajectories have different lengths");
  }
  std::vector<double> e(truth.size());
  for (std::size_t t = 0; t < truth.size(); ++t) {
    Eigen::Vector4d diff = truth[t].vec() - predicted[t].vec();
    diff(2) = wrap_angle(diff(2));
    e[t] = diff.norm();
  }
  return e;
}

std::vector<double> prediction_error(
  const KoopmanModel & m, const std::vector<State> & truth, const std::vector<Input> & inputs)
{
  if (truth.empty() || inputs.size() + 1 != truth.size()) {
    throw std::invalid_argument("prediction_error: need exactly one input per transition");
  }
  const auto psis = predict(m, lift(augment(truth.front(), m.obstacle), m.basis), inputs);
  std::vector<State> predicted;
  predicted.reserve(psis.size());
  for (const auto & psi : psis) { predicted.push_back(reconstruct(m, psi).aug.state); }
  return prediction_error(truth, predicted);
}

}  // namespace kmpc
