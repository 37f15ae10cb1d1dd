#include "kmpc/controller.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <string>

namespace kmpc {

namespace {

constexpr int kOutRows = 10;  // tracked (5) + state box (4) + barrier (1)
constexpr int kOutTracked = 0;
constexpr int kOutBox = 5;
constexpr int kOutBarrier = 9;

// Lifted-space read-outs stacked as described for KoopmanMpc::free_.
Eigen::MatrixXd output_matrix(const KoopmanModel & m)
{
  const int p = m.n_psi();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(kOutRows, p);
  const int tracked[kTrackedDim] = {lifted::kX, lifted::kY, lifted::kV, lifted::kSin, lifted::kCos};
  for (int i = 0; i < kTrackedDim; ++i) { out(kOutTracked + i, tracked[i]) = 1.0; }
  out.middleRows(kOutBox, kStateDim) = m.C.topRows(kStateDim);
  out.row(kOutBarrier) = m.C.row(output::kH);
  return out;
}

TrackWeights tracked_reference(const LiftedState & psi_ref)
{
  TrackWeights r;
  r << psi_ref(lifted::kX), psi_ref(lifted::kY), psi_ref(lifted::kV), psi_ref(lifted::kSin), psi_ref(lifted::kCos);
  return r;
}

// Shifts `count` consecutive blocks of `block` entries starting at `offset` one block
// forward, repeating the final block.
void shift_blocks(Eigen::VectorXd & v, Eigen::Index offset, Eigen::Index block, Eigen::Index count)
{
  if (count < 2) { return; }
  for (Eigen::Index k = 0; k + 1 < count; ++k) {
    v.segment(offset + k * block, block) = v.segment(offset + (k + 1) * block, block);
  }
}

struct RowLayout
{
  Eigen::Index box, input, omega, dcbf, total;
};

RowLayout row_layout(const MpcConfig & cfg)
{
  RowLayout r;
  r.box = 0;
  r.input = r.box + kStateDim * cfg.N;
  r.omega = r.input + kInputDim * cfg.N;
  r.dcbf = r.omega + cfg.N;
  r.total = r.dcbf + (cfg.enable_dcbf ? cfg.N : 0);
  return r;
}

// Shift of the inequality duals, shared by both formulations.
void shift_inequality_duals(Eigen::VectorXd & y, const MpcConfig & cfg)
{
  const RowLayout r = row_layout(cfg);
  shift_blocks(y, r.box, kStateDim, cfg.N);
  shift_blocks(y, r.input, kInputDim, cfg.N);
  shift_blocks(y, r.omega, 1, cfg.N);
  if (cfg.enable_dcbf) { shift_blocks(y, r.dcbf, 1, cfg.N); }
}

}  // namespace

void MpcConfig::validate() const
{
  if (N < 1) { throw ConfigError("MpcConfig: N must be >= 1"); }
  if (!(gamma > 0.0 && gamma <= 1.0)) { throw ConfigError("MpcConfig: gamma must lie in (0, 1]"); }
  if (!(q_weights.array() >= 0.0).all() || !(p_weights.array() >= 0.0).all() || !(r_weights.array() >= 0.0).all() ||
      !(s_weight >= 0.0)) {
    throw ConfigError("MpcConfig: weights must be nonnegative");
  }
  if (!(dt > 0.0)) { throw ConfigError("MpcConfig: dt must be positive"); }
  if (!std::isfinite(epsilon_margin) || !std::isfinite(omega_ref)) {
    throw ConfigError("MpcConfig: margin and slack reference must be finite");
  }
  try {
    bounds.validate();
  } catch (const std::invalid_argument & e) {
    throw ConfigError(std::string("MpcConfig: ") + e.what());
  }
}

LiftedState build_reference(const KoopmanModel & m, const MpcConfig & cfg, const ObstacleSpec & obs)
{
  return lift(augment(cfg.x_ref, obs), m.basis);
}

QpProblem build_qp(const KoopmanModel & m, const MpcConfig & cfg, const LiftedState & psi_now)
{
  cfg.validate();
  const Eigen::Index p = m.n_psi();
  const Eigen::Index q = kInputDim;
  const Eigen::Index N = cfg.N;
  if (psi_now.size() != p) { throw std::invalid_argument("build_qp: psi_now has wrong dimension"); }

  const Eigen::Index off_u = N * p;
  const Eigen::Index off_w = off_u + N * q;
  const Eigen::Index nz = off_w + N;
  const auto psi_col = [&](Eigen::Index k) { return (k - 1) * p; };  // k = 1..N
  const auto u_col = [&](Eigen::Index k) { return off_u + k * q; };  // k = 0..N-1
  const auto w_col = [&](Eigen::Index k) { return off_w + k; };      // k = 0..N-1

  const LiftedState psi_ref = build_reference(m, cfg, m.obstacle);
  const TrackWeights r5 = tracked_reference(psi_ref);
  const int tracked[kTrackedDim] = {lifted::kX, lifted::kY, lifted::kV, lifted::kSin, lifted::kCos};

  // Cost, written as 1/2 z^T H z + g^T z of sum w (s - r)^2.
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(nz, nz);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(nz);
  for (Eigen::Index k = 1; k <= N; ++k) {
    const TrackWeights & w = k == N ? cfg.p_weights : cfg.q_weights;
    for (int i = 0; i < kTrackedDim; ++i) {
      const Eigen::Index c = psi_col(k) + tracked[i];
      H(c, c) += 2.0 * w(i);
      g(c) -= 2.0 * w(i) * r5(i);
    }
  }
  for (Eigen::Index k = 0; k < N; ++k) {
    for (Eigen::Index i = 0; i < q; ++i) {
      H(u_col(k) + i, u_col(k) + i) = 2.0 * cfg.r_weights(i);
      g(u_col(k) + i) = -2.0 * cfg.r_weights(i) * cfg.u_ref.vec()(i);
    }
    H(w_col(k), w_col(k)) = 2.0 * cfg.s_weight;
    g(w_col(k)) = -2.0 * cfg.s_weight * cfg.omega_ref;
  }

  // psi_{k+1} - A psi_k - B u_k = 0, with psi_t moved to the right-hand side.
  Eigen::MatrixXd Aeq = Eigen::MatrixXd::Zero(N * p, nz);
  Eigen::VectorXd beq = Eigen::VectorXd::Zero(N * p);
  for (Eigen::Index k = 0; k < N; ++k) {
    Aeq.block(k * p, psi_col(k + 1), p, p).setIdentity();
    if (k > 0) { Aeq.block(k * p, psi_col(k), p, p) = -m.A; }
    Aeq.block(k * p, u_col(k), p, q) = -m.B;
  }
  beq.head(p) = m.A * psi_now;

  const RowLayout rows = row_layout(cfg);
  Eigen::MatrixXd Ain = Eigen::MatrixXd::Zero(rows.total, nz);
  Eigen::VectorXd lo(rows.total), hi(rows.total);
  for (Eigen::Index k = 1; k <= N; ++k) {
    const Eigen::Index r = rows.box + (k - 1) * kStateDim;
    Ain.block(r, psi_col(k), kStateDim, p) = m.C.topRows(kStateDim);
    lo.segment(r, kStateDim) = cfg.bounds.state_lo;
    hi.segment(r, kStateDim) = cfg.bounds.state_hi;
  }
  for (Eigen::Index k = 0; k < N; ++k) {
    const Eigen::Index r = rows.input + k * q;
    Ain.block(r, u_col(k), q, q).setIdentity();
    lo.segment(r, q) = cfg.bounds.input_lo;
    hi.segment(r, q) = cfg.bounds.input_hi;

    Ain(rows.omega + k, w_col(k)) = 1.0;
    lo(rows.omega + k) = 0.0;
    hi(rows.omega + k) = kQpInfinity;
  }
  if (cfg.enable_dcbf) {
    const double h_now = std::max(lifted_barrier(m, psi_now), 0.0);
    for (Eigen::Index k = 0; k < N; ++k) {
      const Eigen::Index r = rows.dcbf + k;
      Ain.block(r, psi_col(k + 1), 1, p) = m.C.row(output::kH);
      Ain(r, w_col(k)) = -std::pow(1.0 - cfg.gamma, static_cast<double>(k + 1)) * h_now;
      lo(r) = cfg.epsilon_margin;
      hi(r) = kQpInfinity;
    }
  }

  return QpProblem::make(std::move(H), std::move(g), std::move(Aeq), std::move(beq), std::move(Ain), std::move(lo),
                         std::move(hi));
}

KoopmanMpc::KoopmanMpc(const KoopmanModel & m, MpcConfig cfg, SolverSettings settings)
    : model_(m), cfg_(std::move(cfg)), settings_(std::move(settings))
{
  cfg_.validate();
  model_.validate();
  if (std::abs(cfg_.dt - model_.dt) > 1e-12 * std::max(1.0, model_.dt)) {
    throw ConfigError(
      "controller dt " + std::to_string(cfg_.dt) + " differs from the model's identification dt " +
      std::to_string(model_.dt));
  }
  rel_deg_ = kmpc::relative_degree(model_, cfg_.N);
  if (cfg_.enable_dcbf && !rel_deg_) {
    throw ConfigError(
      "barrier relative degree exceeds the horizon N = " + std::to_string(cfg_.N) + "; increase N");
  }

  psi_ref_ = build_reference(model_, cfg_, model_.obstacle);

  const Eigen::Index p = model_.n_psi();
  const Eigen::Index q = kInputDim;
  const Eigen::Index N = cfg_.N;

  // P_i = Cout A^i for i = 0..N.
  const Eigen::MatrixXd cout = output_matrix(model_);
  std::vector<Eigen::MatrixXd> powers;
  powers.reserve(N + 1);
  powers.push_back(cout);
  for (Eigen::Index i = 1; i <= N; ++i) { powers.push_back(powers.back() * model_.A); }

  free_.resize(kOutRows * N, p);
  theta_ = Eigen::MatrixXd::Zero(kOutRows * N, q * N);
  for (Eigen::Index k = 1; k <= N; ++k) {
    free_.middleRows(kOutRows * (k - 1), kOutRows) = powers[k];
    for (Eigen::Index j = 0; j < k; ++j) {
      theta_.block(kOutRows * (k - 1), q * j, kOutRows, q) = powers[k - 1 - j] * model_.B;
    }
  }

  Eigen::VectorXd wbar = Eigen::VectorXd::Zero(kOutRows * N);
  Eigen::VectorXd rbar = Eigen::VectorXd::Zero(kOutRows * N);
  const TrackWeights r5 = tracked_reference(psi_ref_);
  for (Eigen::Index k = 1; k <= N; ++k) {
    const TrackWeights & w = k == N ? cfg_.p_weights : cfg_.q_weights;
    wbar.segment(kOutRows * (k - 1) + kOutTracked, kTrackedDim) = w;
    rbar.segment(kOutRows * (k - 1) + kOutTracked, kTrackedDim) = r5;
  }
  Eigen::VectorXd rdiag(q * N), uref(q * N);
  for (Eigen::Index k = 0; k < N; ++k) {
    rdiag.segment(q * k, q) = cfg_.r_weights;
    uref.segment(q * k, q) = cfg_.u_ref.vec();
  }

  const Eigen::MatrixXd wtheta = wbar.asDiagonal() * theta_;
  H_condensed_ = Eigen::MatrixXd::Zero(q * N + N, q * N + N);
  H_condensed_.topLeftCorner(q * N, q * N) = 2.0 * theta_.transpose() * wtheta;
  H_condensed_.topLeftCorner(q * N, q * N).diagonal() += 2.0 * rdiag;
  H_condensed_.bottomRightCorner(N, N).diagonal().setConstant(2.0 * cfg_.s_weight);

  g_psi_ = 2.0 * wtheta.transpose() * free_;
  g_ref_ = -2.0 * wtheta.transpose() * rbar - 2.0 * rdiag.cwiseProduct(uref);
}

double KoopmanMpc::dcbf_constant(const LiftedState & psi_now) const
{
  return std::max(lifted_barrier(model_, psi_now), 0.0);
}

QpProblem KoopmanMpc::build_condensed(const LiftedState & psi_now) const
{
  const Eigen::Index p = model_.n_psi();
  const Eigen::Index q = kInputDim;
  const Eigen::Index N = cfg_.N;
  if (psi_now.size() != p) { throw std::invalid_argument("build_condensed: psi_now has wrong dimension"); }
  const Eigen::Index nw = q * N + N;

  Eigen::VectorXd g(nw);
  g.head(q * N) = g_psi_ * psi_now + g_ref_;
  g.tail(N).setConstant(-2.0 * cfg_.s_weight * cfg_.omega_ref);

  const Eigen::VectorXd f = free_ * psi_now;
  const RowLayout rows = row_layout(cfg_);
  Eigen::MatrixXd Ain = Eigen::MatrixXd::Zero(rows.total, nw);
  Eigen::VectorXd lo(rows.total), hi(rows.total);

  for (Eigen::Index k = 1; k <= N; ++k) {
    const Eigen::Index r = rows.box + (k - 1) * kStateDim;
    const Eigen::Index o = kOutRows * (k - 1) + kOutBox;
    Ain.block(r, 0, kStateDim, q * N) = theta_.middleRows(o, kStateDim);
    lo.segment(r, kStateDim) = cfg_.bounds.state_lo - f.segment(o, kStateDim);
    hi.segment(r, kStateDim) = cfg_.bounds.state_hi - f.segment(o, kStateDim);
  }
  for (Eigen::Index k = 0; k < N; ++k) {
    const Eigen::Index r = rows.input + k * q;
    Ain.block(r, q * k, q, q).setIdentity();
    lo.segment(r, q) = cfg_.bounds.input_lo;
    hi.segment(r, q) = cfg_.bounds.input_hi;

    Ain(rows.omega + k, q * N + k) = 1.0;
    lo(rows.omega + k) = 0.0;
    hi(rows.omega + k) = kQpInfinity;
  }
  if (cfg_.enable_dcbf) {
    const double h_now = dcbf_constant(psi_now);
    for (Eigen::Index k = 0; k < N; ++k) {
      const Eigen::Index r = rows.dcbf + k;
      const Eigen::Index o = kOutRows * k + kOutBarrier;
      Ain.block(r, 0, 1, q * N) = theta_.row(o);
      Ain(r, q * N + k) = -std::pow(1.0 - cfg_.gamma, static_cast<double>(k + 1)) * h_now;
      lo(r) = cfg_.epsilon_margin - f(o);
      hi(r) = kQpInfinity;
    }
  }

  return QpProblem::make(H_condensed_, std::move(g), Eigen::MatrixXd(0, nw), Eigen::VectorXd(0), std::move(Ain),
                         std::move(lo), std::move(hi));
}

QpProblem KoopmanMpc::build(const LiftedState & psi_now) const
{
  return cfg_.formulation == Formulation::sparse ? build_qp(model_, cfg_, psi_now) : build_condensed(psi_now);
}

WarmStart KoopmanMpc::cold_start() const
{
  const Eigen::Index p = model_.n_psi();
  const Eigen::Index q = kInputDim;
  const Eigen::Index N = cfg_.N;
  const bool sparse = cfg_.formulation == Formulation::sparse;
  const Eigen::Index off_u = sparse ? N * p : 0;

  WarmStart w;
  w.z = Eigen::VectorXd::Zero(off_u + q * N + N);
  for (Eigen::Index k = 0; k < N; ++k) {
    if (sparse) { w.z.segment(k * p, p) = psi_ref_; }
    w.z.segment(off_u + q * k, q) = cfg_.u_ref.vec();
    w.z(off_u + q * N + k) = cfg_.omega_ref;
  }
  return w;
}

WarmStart KoopmanMpc::warm_start_from(const MpcStep & prev) const
{
  const Eigen::Index p = model_.n_psi();
  const Eigen::Index q = kInputDim;
  const Eigen::Index N = cfg_.N;
  const bool sparse = cfg_.formulation == Formulation::sparse;
  const Eigen::Index off_u = sparse ? N * p : 0;

  WarmStart w{prev.qp.z, prev.qp.y_eq, prev.qp.y_in};
  if (sparse) {
    shift_blocks(w.z, 0, p, N);
    shift_blocks(w.y_eq, 0, p, N);
  }
  shift_blocks(w.z, off_u, q, N);
  shift_blocks(w.z, off_u + q * N, 1, N);
  shift_inequality_duals(w.y_in, cfg_);
  return w;
}

MpcStep KoopmanMpc::unpack(const LiftedState & psi_now, const QpSolution & sol) const
{
  const Eigen::Index p = model_.n_psi();
  const Eigen::Index q = kInputDim;
  const Eigen::Index N = cfg_.N;
  const bool sparse = cfg_.formulation == Formulation::sparse;
  const Eigen::Index off_u = sparse ? N * p : 0;
  const Eigen::Index off_w = off_u + q * N;

  MpcStep out;
  out.status = sol.status;
  out.iterations = sol.iterations;
  out.h_tilde_now = lifted_barrier(model_, psi_now);
  for (Eigen::Index k = 0; k < N; ++k) {
    out.predicted_u.push_back(Input::from(sol.z.segment<kInputDim>(off_u + q * k)));
    out.predicted_omega.push_back(sol.z(off_w + k));
  }
  out.u0 = out.predicted_u.front();

  if (sparse) {
    out.predicted_psi.push_back(psi_now);
    for (Eigen::Index k = 0; k < N; ++k) { out.predicted_psi.emplace_back(sol.z.segment(k * p, p)); }
  } else {
    out.predicted_psi = predict(model_, psi_now, out.predicted_u);
  }
  for (const auto & psi : out.predicted_psi) { out.predicted_h.push_back(lifted_barrier(model_, psi)); }
  return out;
}

MpcStep KoopmanMpc::step(const LiftedState & psi_now) { return step(psi_now, last_ ? &*last_ : nullptr); }

MpcStep KoopmanMpc::step(const LiftedState & psi_now, const MpcStep * warm)
{
  const auto t0 = std::chrono::steady_clock::now();
  const QpProblem qp = build(psi_now);

  SolverSettings s = settings_;
  const bool usable = warm != nullptr && warm->qp.z.size() == qp.n() && warm->qp.y_in.size() == qp.n_in() &&
                      warm->qp.y_eq.size() == qp.n_eq() &&
                      (warm->status == QpStatus::optimal || warm->status == QpStatus::max_iters);
  s.warm_start = usable ? warm_start_from(*warm) : cold_start();

  QpSolution sol = solver_.solve(qp, s);
  MpcStep out = unpack(psi_now, sol);
  out.qp = std::move(sol);
  out.solve_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  last_ = out;
  return out;
}

MpcStep solve_step(const KoopmanModel & m, const MpcConfig & cfg, const LiftedState & psi_now, const MpcStep * warm)
{
  KoopmanMpc mpc(m, cfg);
  return mpc.step(psi_now, warm);
}

BarrierCheckReport barrier_check(const MpcStep & step, double gamma, double h_now, double eps_feas)
{
  BarrierCheckReport r;
  const std::size_t N = step.predicted_omega.size();
  if (step.predicted_h.size() != N + 1) {
    throw std::invalid_argument("barrier_check: predicted_h must have N + 1 entries");
  }
  r.worst_margin = std::numeric_limits<double>::infinity();
  r.min_predicted_h = std::numeric_limits<double>::infinity();
  r.min_omega = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < N; ++k) {
    const double h_next = step.predicted_h[k + 1];
    const double omega = step.predicted_omega[k];
    const double rhs = omega * std::pow(1.0 - gamma, static_cast<double>(k + 1)) * h_now;
    const double margin = h_next - rhs;
    r.worst_margin = std::min(r.worst_margin, margin);
    r.min_predicted_h = std::min(r.min_predicted_h, h_next);
    r.min_omega = std::min(r.min_omega, omega);
    const bool ok = margin >= -eps_feas && h_next >= -eps_feas && omega >= -kOmegaEps;
    if (!ok && r.pass) {
      r.pass = false;
      r.failing_row = static_cast<int>(k);
    }
  }
  return r;
}

}  // namespace kmpc
