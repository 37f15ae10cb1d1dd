#include "kmpc/qp.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>

#include "kmpc/format.hpp"

namespace kmpc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kRhoMin = 1e-6;
constexpr double kRhoMax = 1e6;
constexpr double kRhoEqScale = 1e3;
constexpr double kRhoAdaptTolerance = 5.0;
constexpr double kMinScaling = 1e-4;
constexpr double kMaxScaling = 1e4;
constexpr double kPolishDelta = 1e-7;
constexpr int kPolishRefine = 3;

double inf_norm(const Eigen::VectorXd & v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

double to_internal_bound(double b)
{
  if (b >= kQpInfinityThreshold) { return kInf; }
  if (b <= -kQpInfinityThreshold) { return -kInf; }
  return b;
}

double limit_scaling(double v)
{
  if (v < kMinScaling) { return 1.0; }
  return std::min(v, kMaxScaling);
}

struct Bounds
{
  Eigen::VectorXd l, u;
};

// Stacks equality and inequality rows into l <= A z <= u with infinite sentinels.
Bounds stacked_bounds(const QpProblem & p)
{
  const Eigen::Index m = p.n_eq() + p.n_in();
  Bounds b{Eigen::VectorXd(m), Eigen::VectorXd(m)};
  b.l.head(p.n_eq()) = p.beq;
  b.u.head(p.n_eq()) = p.beq;
  for (Eigen::Index i = 0; i < p.n_in(); ++i) {
    b.l(p.n_eq() + i) = to_internal_bound(p.lo(i));
    b.u(p.n_eq() + i) = to_internal_bound(p.hi(i));
  }
  return b;
}

Eigen::MatrixXd stacked_matrix(const QpProblem & p)
{
  Eigen::MatrixXd A(p.n_eq() + p.n_in(), p.n());
  A.topRows(p.n_eq()) = p.Aeq;
  A.bottomRows(p.n_in()) = p.Ain;
  return A;
}

Eigen::VectorXd rho_vector(const Bounds & b, double rho)
{
  Eigen::VectorXd r(b.l.size());
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    if (std::isinf(b.l(i)) && std::isinf(b.u(i))) {
      r(i) = kRhoMin;
    } else if (b.u(i) - b.l(i) < 1e-8 * std::max(1.0, std::abs(b.l(i)))) {
      r(i) = kRhoEqScale * rho;
    } else {
      r(i) = rho;
    }
  }
  return r;
}

struct Tolerances
{
  double prim, dual;
};

// Residuals and termination thresholds of an unscaled point.
struct Residuals
{
  double prim = 0.0, dual = 0.0;
  Tolerances eps{0.0, 0.0};
  double scale_prim_ax = 0.0, scale_prim_z = 0.0;
  double scale_dual_px = 0.0, scale_dual_aty = 0.0, scale_dual_q = 0.0;
};

// Status test shared by the ADMM loop and the final report; complementarity is allowed
// to scale with the dual magnitude.
bool kkt_within(const KktReport & r, const QpProblem & p, const QpSolution & s, const SolverSettings & st)
{
  const Eigen::VectorXd hz = p.H * s.z;
  const Eigen::VectorXd aty = p.Aeq.transpose() * s.y_eq + p.Ain.transpose() * s.y_in;
  Eigen::VectorXd az(p.n_eq() + p.n_in());
  az.head(p.n_eq()) = p.Aeq * s.z;
  az.tail(p.n_in()) = p.Ain * s.z;
  const double eps_prim = st.eps_abs + st.eps_rel * inf_norm(az);
  const double eps_dual = st.eps_abs + st.eps_rel * std::max({inf_norm(hz), inf_norm(aty), inf_norm(p.g)});
  const double ymax = std::max(inf_norm(s.y_eq), inf_norm(s.y_in));
  return r.stationarity <= eps_dual && r.primal() <= eps_prim && r.complementarity <= eps_prim * std::max(1.0, ymax);
}

}  // namespace

QpProblem QpProblem::make(
  Eigen::MatrixXd H,
  Eigen::VectorXd g,
  Eigen::MatrixXd Aeq,
  Eigen::VectorXd beq,
  Eigen::MatrixXd Ain,
  Eigen::VectorXd lo,
  Eigen::VectorXd hi)
{
  QpProblem p;
  const Eigen::Index n = g.size();
  // Empty constraint blocks may be passed default-constructed.
  if (Aeq.size() == 0) { Aeq.resize(beq.size(), n); }
  if (Ain.size() == 0) { Ain.resize(lo.size(), n); }
  p.H = std::move(H);
  p.g = std::move(g);
  p.Aeq = std::move(Aeq);
  p.beq = std::move(beq);
  p.Ain = std::move(Ain);
  p.lo = std::move(lo);
  p.hi = std::move(hi);
  p.validate_shape();

  p.H = 0.5 * (p.H + p.H.transpose()).eval();

  const double shift = 1e-12 * std::max(1.0, p.H.diagonal().cwiseAbs().maxCoeff());
  Eigen::LLT<Eigen::MatrixXd> llt(p.H + shift * Eigen::MatrixXd::Identity(n, n));
  if (llt.info() != Eigen::Success) { throw std::invalid_argument("QpProblem: H is not positive semidefinite"); }
  return p;
}

void QpProblem::validate_shape() const
{
  const Eigen::Index n = g.size();
  if (H.rows() != n || H.cols() != n) { throw std::invalid_argument("QpProblem: H must be n x n"); }
  if (Aeq.rows() != beq.size() || (Aeq.rows() > 0 && Aeq.cols() != n)) {
    throw std::invalid_argument("QpProblem: Aeq / beq dimensions disagree");
  }
  if (Ain.rows() != lo.size() || hi.size() != lo.size() || (Ain.rows() > 0 && Ain.cols() != n)) {
    throw std::invalid_argument("QpProblem: Ain / lo / hi dimensions disagree");
  }
  if (!H.allFinite() || !g.allFinite() || !Aeq.allFinite() || !beq.allFinite() || !Ain.allFinite()) {
    throw std::invalid_argument("QpProblem: non-finite data");
  }
  for (Eigen::Index i = 0; i < lo.size(); ++i) {
    if (std::isnan(lo(i)) || std::isnan(hi(i)) || lo(i) > hi(i)) {
      throw std::invalid_argument("QpProblem: lo > hi in row " + std::to_string(i));
    }
  }
}

Eigen::Index QpProblem::one_sided_rows() const
{
  Eigen::Index count = 0;
  for (Eigen::Index i = 0; i < lo.size(); ++i) {
    count += lo(i) > -kQpInfinityThreshold;
    count += hi(i) < kQpInfinityThreshold;
  }
  return count;
}

std::string_view to_string(QpStatus s)
{
  switch (s) {
    case QpStatus::optimal: return "optimal";
    case QpStatus::max_iters: return "max_iters";
    case QpStatus::primal_infeasible: return "primal_infeasible";
    case QpStatus::dual_infeasible: return "dual_infeasible";
  }
  return "unknown";
}

void SolverSettings::validate() const
{
  if (!(eps_abs > 0.0) || !(eps_rel >= 0.0) || !(eps_prim_inf > 0.0) || !(eps_dual_inf > 0.0)) {
    throw std::invalid_argument("SolverSettings: tolerances must be positive");
  }
  if (max_iters < 1 || !(rho > 0.0) || !(sigma > 0.0) || !(alpha > 0.0 && alpha < 2.0)) {
    throw std::invalid_argument("SolverSettings: invalid iteration parameters");
  }
  if (adapt_rho_interval < 0 || check_interval < 1 || scaling_iters < 0) {
    throw std::invalid_argument("SolverSettings: invalid intervals");
  }
}

KktReport kkt_residuals(const QpProblem & p, const QpSolution & sol)
{
  if (sol.z.size() != p.n() || sol.y_eq.size() != p.n_eq() || sol.y_in.size() != p.n_in()) {
    throw std::invalid_argument("kkt_residuals: solution dimensions do not match the problem");
  }
  KktReport r;
  Eigen::VectorXd stat = p.H * sol.z + p.g;
  if (p.n_eq() > 0) { stat.noalias() += p.Aeq.transpose() * sol.y_eq; }
  if (p.n_in() > 0) { stat.noalias() += p.Ain.transpose() * sol.y_in; }
  r.stationarity = inf_norm(stat);

  if (p.n_eq() > 0) { r.eq_residual = inf_norm(p.Aeq * sol.z - p.beq); }

  if (p.n_in() > 0) {
    const Eigen::VectorXd az = p.Ain * sol.z;
    for (Eigen::Index i = 0; i < p.n_in(); ++i) {
      const double lo = to_internal_bound(p.lo(i));
      const double hi = to_internal_bound(p.hi(i));
      r.bound_violation = std::max({r.bound_violation, lo - az(i), az(i) - hi});

      const double y = sol.y_in(i);
      double comp = 0.0;
      if (y < 0.0) {
        comp = std::isinf(lo) ? -y : -y * std::abs(az(i) - lo);
      } else if (y > 0.0) {
        comp = std::isinf(hi) ? y : y * std::abs(hi - az(i));
      }
      r.complementarity = std::max(r.complementarity, comp);
    }
  }
  return r;
}

bool QpSolver::cache_matches(const QpProblem & p) const
{
  return has_cache_ && H_.rows() == p.H.rows() && Aeq_.rows() == p.Aeq.rows() && Ain_.rows() == p.Ain.rows() &&
         H_ == p.H && Aeq_ == p.Aeq && Ain_ == p.Ain;
}

void QpSolver::setup(const QpProblem & p, const SolverSettings & s)
{
  H_ = p.H;
  Aeq_ = p.Aeq;
  Ain_ = p.Ain;
  has_cache_ = true;

  const Eigen::Index n = p.n();
  const Eigen::Index m = p.n_eq() + p.n_in();
  Hs_ = p.H;
  As_ = stacked_matrix(p);
  D_ = Eigen::VectorXd::Ones(n);
  E_ = Eigen::VectorXd::Ones(m);
  c_ = 1.0;

  // Modified Ruiz equilibration of [H A^T; A 0], then a scalar cost scaling.
  Eigen::VectorXd d(n), e(m);
  for (int it = 0; it < s.scaling_iters; ++it) {
    for (Eigen::Index j = 0; j < n; ++j) {
      double nrm = Hs_.col(j).cwiseAbs().maxCoeff();
      if (m > 0) { nrm = std::max(nrm, As_.col(j).cwiseAbs().maxCoeff()); }
      d(j) = 1.0 / std::sqrt(limit_scaling(nrm));
    }
    for (Eigen::Index i = 0; i < m; ++i) { e(i) = 1.0 / std::sqrt(limit_scaling(As_.row(i).cwiseAbs().maxCoeff())); }

    Hs_ = d.asDiagonal() * Hs_ * d.asDiagonal();
    As_ = e.asDiagonal() * As_ * d.asDiagonal();
    D_.array() *= d.array();
    E_.array() *= e.array();

    double mean_col = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) { mean_col += Hs_.col(j).cwiseAbs().maxCoeff(); }
    mean_col /= static_cast<double>(std::max<Eigen::Index>(n, 1));
    const double q_norm = inf_norm((c_ * D_.array() * p.g.array()).matrix());
    const double ct = 1.0 / limit_scaling(std::max(mean_col, q_norm));
    Hs_ *= ct;
    c_ *= ct;
  }

  rho_ = s.rho;
  rho_vec_ = rho_vector(stacked_bounds(p), rho_);
  factorize(s);
}

void QpSolver::factorize(const SolverSettings & s)
{
  Eigen::MatrixXd K = Hs_;
  K.diagonal().array() += s.sigma;
  if (As_.rows() > 0) { K.noalias() += As_.transpose() * rho_vec_.asDiagonal() * As_; }
  llt_.compute(K);
  ++factorizations_;
  if (llt_.info() != Eigen::Success) { throw std::runtime_error("QpSolver: reduced KKT factorization failed"); }
}

QpSolution QpSolver::solve(const QpProblem & p, const SolverSettings & s)
{
  const auto t0 = std::chrono::steady_clock::now();
  p.validate_shape();
  s.validate();

  if (!cache_matches(p)) {
    setup(p, s);
  } else {
    const Eigen::VectorXd rv = rho_vector(stacked_bounds(p), rho_);
    if (rv != rho_vec_) {
      rho_vec_ = rv;
      factorize(s);
    }
  }

  const Eigen::Index n = p.n();
  const Eigen::Index neq = p.n_eq();
  const Eigen::Index m = neq + p.n_in();

  const Bounds ub = stacked_bounds(p);
  const Eigen::VectorXd q = c_ * D_.cwiseProduct(p.g);
  const Eigen::VectorXd l = E_.cwiseProduct(ub.l);
  const Eigen::VectorXd u = E_.cwiseProduct(ub.u);
  const Eigen::VectorXd Dinv = D_.cwiseInverse();
  const Eigen::VectorXd Einv = E_.cwiseInverse();

  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(m);
  if (s.warm_start) {
    const WarmStart & w = *s.warm_start;
    if (w.z.size() == n) { x = Dinv.cwiseProduct(w.z); }
    if (w.y_eq.size() == neq && w.y_in.size() == p.n_in()) {
      Eigen::VectorXd yu(m);
      yu << w.y_eq, w.y_in;
      y = c_ * Einv.cwiseProduct(yu);
    }
    z = (As_ * x).cwiseMax(l).cwiseMin(u);
  }

  const auto unscaled = [&](const Eigen::VectorXd & xs, const Eigen::VectorXd & ys) {
    QpSolution out;
    out.z = D_.cwiseProduct(xs);
    const Eigen::VectorXd yu = E_.cwiseProduct(ys) / c_;
    out.y_eq = yu.head(neq);
    out.y_in = yu.tail(m - neq);
    return out;
  };

  // Termination residuals evaluated on the unscaled problem.
  const auto residuals = [&](const Eigen::VectorXd & xs, const Eigen::VectorXd & zs, const Eigen::VectorXd & ys) {
    Residuals r;
    const Eigen::VectorXd ax = Einv.cwiseProduct(As_ * xs);
    const Eigen::VectorXd zu = Einv.cwiseProduct(zs);
    const Eigen::VectorXd px = Dinv.cwiseProduct(Hs_ * xs) / c_;
    const Eigen::VectorXd aty = Dinv.cwiseProduct(As_.transpose() * ys) / c_;
    r.prim = m > 0 ? inf_norm(ax - zu) : 0.0;
    r.dual = inf_norm(px + p.g + aty);
    r.scale_prim_ax = inf_norm(ax);
    r.scale_prim_z = inf_norm(zu);
    r.scale_dual_px = inf_norm(px);
    r.scale_dual_aty = inf_norm(aty);
    r.scale_dual_q = inf_norm(p.g);
    r.eps.prim = s.eps_abs + s.eps_rel * std::max(r.scale_prim_ax, r.scale_prim_z);
    r.eps.dual = s.eps_abs + s.eps_rel * std::max({r.scale_dual_px, r.scale_dual_aty, r.scale_dual_q});
    return r;
  };

  const auto primal_infeasible = [&](const Eigen::VectorXd & dy_s) {
    Eigen::VectorXd dy = E_.cwiseProduct(dy_s) / c_;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (std::isinf(ub.u(i))) { dy(i) = std::min(dy(i), 0.0); }
      if (std::isinf(ub.l(i))) { dy(i) = std::max(dy(i), 0.0); }
    }
    const double nrm = inf_norm(dy);
    if (nrm <= s.eps_prim_inf) { return false; }
    double support = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (dy(i) > 0.0) { support += ub.u(i) * dy(i); }
      if (dy(i) < 0.0) { support += ub.l(i) * dy(i); }
    }
    if (!(support < -s.eps_prim_inf * nrm)) { return false; }
    const Eigen::VectorXd aty = p.Aeq.transpose() * dy.head(neq) + p.Ain.transpose() * dy.tail(m - neq);
    return inf_norm(aty) < s.eps_prim_inf * nrm;
  };

  const auto dual_infeasible = [&](const Eigen::VectorXd & dx_s) {
    const Eigen::VectorXd dx = D_.cwiseProduct(dx_s);
    const double nrm = inf_norm(dx);
    if (nrm <= s.eps_dual_inf) { return false; }
    const double tol = s.eps_dual_inf * nrm;
    if (!(p.g.dot(dx) < -tol)) { return false; }
    if (inf_norm(p.H * dx) > tol) { return false; }
    Eigen::VectorXd adx(m);
    adx.head(neq) = p.Aeq * dx;
    adx.tail(m - neq) = p.Ain * dx;
    for (Eigen::Index i = 0; i < m; ++i) {
      const bool lo_inf = std::isinf(ub.l(i));
      const bool hi_inf = std::isinf(ub.u(i));
      if (lo_inf && hi_inf) { continue; }
      if (!hi_inf && adx(i) > tol) { return false; }
      if (!lo_inf && adx(i) < -tol) { return false; }
    }
    return true;
  };

  QpSolution sol;
  sol.status = QpStatus::max_iters;

  Eigen::VectorXd best_x = x, best_y = y;
  double best_score = std::numeric_limits<double>::infinity();

  Eigen::VectorXd xt(n), zt(m), zr(m), x_prev(n), y_prev(m), rhs(n);
  int k = 0;
  for (k = 1; k <= s.max_iters; ++k) {
    x_prev = x;
    y_prev = y;

    rhs = s.sigma * x - q;
    if (m > 0) { rhs.noalias() += As_.transpose() * (rho_vec_.cwiseProduct(z) - y); }
    xt = llt_.solve(rhs);
    zt.noalias() = As_ * xt;

    x = s.alpha * xt + (1.0 - s.alpha) * x_prev;
    zr = s.alpha * zt + (1.0 - s.alpha) * z;
    z = (zr + y.cwiseQuotient(rho_vec_)).cwiseMax(l).cwiseMin(u);
    y += rho_vec_.cwiseProduct(zr - z);

    const bool check = k % s.check_interval == 0 || k == s.max_iters;
    const bool adapt = s.adapt_rho_interval > 0 && k % s.adapt_rho_interval == 0;
    if (!check && !adapt) { continue; }

    const Residuals r = residuals(x, z, y);
    if (check) {
      const double score = std::max(r.prim / r.eps.prim, r.dual / r.eps.dual);
      if (score < best_score) {
        best_score = score;
        best_x = x;
        best_y = y;
      }
      if (r.prim <= r.eps.prim && r.dual <= r.eps.dual) {
        sol.status = QpStatus::optimal;
        break;
      }
      if (primal_infeasible(y - y_prev)) {
        sol.status = QpStatus::primal_infeasible;
        break;
      }
      if (dual_infeasible(x - x_prev)) {
        sol.status = QpStatus::dual_infeasible;
        break;
      }
    }

    if (adapt && m > 0) {
      // rho lives in the scaled space, so its estimate uses scaled residuals
      const Eigen::VectorXd ax = As_ * x;
      const Eigen::VectorXd px = Hs_ * x;
      const Eigen::VectorXd aty = As_.transpose() * y;
      const double prim_n = inf_norm(ax - z) / std::max({inf_norm(ax), inf_norm(z), 1e-30});
      const double dual_n = inf_norm(px + q + aty) / std::max({inf_norm(px), inf_norm(aty), inf_norm(q), 1e-30});
      double rho_new = rho_ * std::sqrt(prim_n / std::max(dual_n, 1e-30));
      rho_new = std::clamp(rho_new, kRhoMin, kRhoMax);
      if (rho_new > kRhoAdaptTolerance * rho_ || rho_new < rho_ / kRhoAdaptTolerance) {
        rho_ = rho_new;
        rho_vec_ = rho_vector(ub, rho_);
        factorize(s);
      }
    }
  }
  const int iterations = std::min(k, s.max_iters);

  const QpStatus admm_status = sol.status;
  if (admm_status == QpStatus::optimal) {
    sol = unscaled(x, y);
  } else if (admm_status == QpStatus::max_iters) {
    sol = unscaled(best_x, best_y);
  } else {
    // Infeasibility certificates: report the last iterate for diagnostics.
    sol = unscaled(x, y);
  }
  sol.status = admm_status;
  sol.iterations = iterations;

  if (s.polish && (admm_status == QpStatus::optimal || admm_status == QpStatus::max_iters)) {
    // Guess the active set from the ADMM pair and solve the reduced equality-constrained KKT system.
    const Eigen::VectorXd zu = Einv.cwiseProduct(admm_status == QpStatus::optimal ? z : (As_ * best_x).eval());
    const Eigen::VectorXd yu = E_.cwiseProduct(admm_status == QpStatus::optimal ? y : best_y) / c_;
    std::vector<Eigen::Index> active;
    active.reserve(m);
    Eigen::VectorXd target(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      if (i < neq) {
        active.push_back(i);
        target(i) = ub.l(i);
      } else if (!std::isinf(ub.l(i)) && zu(i) - ub.l(i) < -yu(i)) {
        active.push_back(i);
        target(i) = ub.l(i);
      } else if (!std::isinf(ub.u(i)) && ub.u(i) - zu(i) < yu(i)) {
        active.push_back(i);
        target(i) = ub.u(i);
      }
    }

    const Eigen::MatrixXd A = stacked_matrix(p);
    const auto na = static_cast<Eigen::Index>(active.size());
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + na, n + na);
    K.topLeftCorner(n, n) = p.H;
    Eigen::VectorXd b(n + na);
    b.head(n) = -p.g;
    // Active rows are normalized so the regularization stays small next to A H^-1 A^T.
    Eigen::VectorXd row_scale(na);
    for (Eigen::Index r = 0; r < na; ++r) {
      const double nr = A.row(active[r]).norm();
      row_scale(r) = nr > 0.0 ? 1.0 / nr : 1.0;
      K.block(n + r, 0, 1, n) = row_scale(r) * A.row(active[r]);
      K.block(0, n + r, n, 1) = row_scale(r) * A.row(active[r]).transpose();
      b(n + r) = row_scale(r) * target(active[r]);
    }
    Eigen::MatrixXd Kreg = K;
    Kreg.diagonal().head(n).array() += kPolishDelta;
    Kreg.diagonal().tail(na).array() -= kPolishDelta;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(Kreg);
    Eigen::VectorXd sol_vec = lu.solve(b);
    for (int it = 0; it < kPolishRefine; ++it) { sol_vec += lu.solve(b - K * sol_vec); }

    if (sol_vec.allFinite()) {
      QpSolution cand;
      cand.z = sol_vec.head(n);
      Eigen::VectorXd yall = Eigen::VectorXd::Zero(m);
      for (Eigen::Index r = 0; r < na; ++r) { yall(active[r]) = row_scale(r) * sol_vec(n + r); }
      cand.y_eq = yall.head(neq);
      cand.y_in = yall.tail(m - neq);

      const KktReport before = kkt_residuals(p, sol);
      const KktReport after = kkt_residuals(p, cand);
        if (after.max() < before.max()) {
        cand.status = sol.status;
        cand.iterations = sol.iterations;
        cand.polished = true;
        sol = std::move(cand);
      }
    }
  }

  const KktReport rep = kkt_residuals(p, sol);
  sol.primal_res = rep.primal();
  sol.dual_res = rep.stationarity;
  if (sol.status == QpStatus::optimal || sol.status == QpStatus::max_iters) {
    sol.status = kkt_within(rep, p, sol, s) ? QpStatus::optimal : QpStatus::max_iters;
  }
  sol.objective = p.objective(sol.z);
  sol.solve_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return sol;
}

QpSolution solve(const QpProblem & p, const SolverSettings & s)
{
  QpSolver solver;
  return solver.solve(p, s);
}

namespace {

void write_block(std::ostream & os, const char * name, const Eigen::MatrixXd & M)
{
  os << name << ' ' << M.rows() << ' ' << M.cols() << '\n';
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    for (Eigen::Index j = 0; j < M.cols(); ++j) {
      if (j > 0) { os << ' '; }
      os << format_double(M(i, j));
    }
    os << '\n';
  }
}

Eigen::MatrixXd read_block(std::istream & is, const char * name)
{
  std::string tag;
  Eigen::Index rows = 0, cols = 0;
  if (!(is >> tag >> rows >> cols) || tag != name || rows < 0 || cols < 0) {
    throw std::runtime_error(std::string("read_qp: expected block ") + name);
  }
  Eigen::MatrixXd M(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      std::string tok;
      if (!(is >> tok)) { throw std::runtime_error(std::string("read_qp: truncated block ") + name); }
      M(i, j) = parse_double(tok);
    }
  }
  return M;
}

}  // namespace

void write_qp(std::ostream & os, const QpProblem & p)
{
  os << "kmpc-qp 1\n";
  os << "dims " << p.n() << ' ' << p.n_eq() << ' ' << p.n_in() << '\n';
  write_block(os, "H", p.H);
  write_block(os, "g", p.g);
  write_block(os, "Aeq", p.Aeq);
  write_block(os, "beq", p.beq);
  write_block(os, "Ain", p.Ain);
  write_block(os, "lo", p.lo.cwiseMax(-kQpInfinity));
  write_block(os, "hi", p.hi.cwiseMin(kQpInfinity));
}

QpProblem read_qp(std::istream & is)
{
  std::string magic, dims;
  int version = 0;
  Eigen::Index n = 0, neq = 0, nin = 0;
  if (!(is >> magic >> version) || magic != "kmpc-qp" || version != 1) {
    throw std::runtime_error("read_qp: not a kmpc-qp v1 stream");
  }
  if (!(is >> dims >> n >> neq >> nin) || dims != "dims") { throw std::runtime_error("read_qp: missing dims"); }

  Eigen::MatrixXd H = read_block(is, "H");
  Eigen::VectorXd g = read_block(is, "g");
  Eigen::MatrixXd Aeq = read_block(is, "Aeq");
  Eigen::VectorXd beq = read_block(is, "beq");
  Eigen::MatrixXd Ain = read_block(is, "Ain");
  Eigen::VectorXd lo = read_block(is, "lo");
  Eigen::VectorXd hi = read_block(is, "hi");
  if (g.size() != n || beq.size() != neq || lo.size() != nin) {
    throw std::runtime_error("read_qp: block sizes disagree with header");
  }
  return QpProblem::make(std::move(H), std::move(g), std::move(Aeq), std::move(beq), std::move(Ain), std::move(lo),
                         std::move(hi));
}

}  // namespace kmpc
