#pragma once

// Independent reference implementations used by the tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "kmpc/dynamics.hpp"
#include "kmpc/qp.hpp"

namespace oracle {

/// Closed-form unicycle motion for constant inputs. Valid for u1 != 0 with u2 == 0, or u1 == 0.
inline kmpc::State unicycle_exact(const kmpc::State & s, const kmpc::Input & u, double t)
{
  kmpc::State r = s;
  if (u.u1 == 0.0) {
    const double d = s.v * t + 0.5 * u.u2 * t * t;
    r.x += d * std::cos(s.theta);
    r.y += d * std::sin(s.theta);
    r.v += u.u2 * t;
    return r;
  }
  const double th = s.theta + u.u1 * t;
  r.x += s.v / u.u1 * (std::sin(th) - std::sin(s.theta));
  r.y -= s.v / u.u1 * (std::cos(th) - std::cos(s.theta));
  r.theta = th;
  return r;
}

/**
 * Strictly convex QP by enumeration of the state (free / at lower / at upper) of every
 * inequality row. Each candidate is an equality-constrained QP solved from its KKT system;
 * the unique candidate that is primal feasible with correctly signed multipliers wins.
 */
inline std::optional<Eigen::VectorXd> enumerate_qp(const kmpc::QpProblem & p, double tol = 1e-9)
{
  const Eigen::Index n = p.n(), me = p.n_eq(), mi = p.n_in();
  std::vector<int> state(mi, 0);
  const auto finite = [](double b) { return std::abs(b) < kmpc::kQpInfinityThreshold; };
  while (true) {
    bool skip = false;
    std::vector<Eigen::Index> active;
    for (Eigen::Index i = 0; i < mi; ++i) {
      if (state[i] == 1 && !finite(p.lo(i))) { skip = true; }
      if (state[i] == 2 && !finite(p.hi(i))) { skip = true; }
      if (state[i] == 2 && p.lo(i) == p.hi(i)) { skip = true; }  // same row twice
      if (state[i] != 0) { active.push_back(i); }
    }
    if (!skip) {
      const Eigen::Index ma = static_cast<Eigen::Index>(active.size());
      const Eigen::Index k = n + me + ma;
      Eigen::MatrixXd K = Eigen::MatrixXd::Zero(k, k);
      Eigen::VectorXd rhs(k);
      K.topLeftCorner(n, n) = p.H;
      rhs.head(n) = -p.g;
      if (me > 0) {
        K.block(0, n, n, me) = p.Aeq.transpose();
        K.block(n, 0, me, n) = p.Aeq;
        rhs.segment(n, me) = p.beq;
      }
      for (Eigen::Index a = 0; a < ma; ++a) {
        const Eigen::Index i = active[a];
        K.block(0, n + me + a, n, 1) = p.Ain.row(i).transpose();
        K.block(n + me + a, 0, 1, n) = p.Ain.row(i);
        rhs(n + me + a) = state[i] == 1 ? p.lo(i) : p.hi(i);
      }
      Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
      if (lu.isInvertible()) {
        const Eigen::VectorXd sol = lu.solve(rhs);
        const Eigen::VectorXd z = sol.head(n);
        const Eigen::VectorXd az = p.Ain * z;
        bool ok = true;
        for (Eigen::Index i = 0; i < mi && ok; ++i) {
          if (finite(p.lo(i)) && az(i) < p.lo(i) - tol) { ok = false; }
          if (finite(p.hi(i)) && az(i) > p.hi(i) + tol) { ok = false; }
        }
        // K solves H z + g + A^T y = 0, the solver's sign convention.
        for (Eigen::Index a = 0; a < ma && ok; ++a) {
          const double y = sol(n + me + a);
          const int side = state[active[a]];
          if (side == 1 && y > tol) { ok = false; }   // lower bound: y <= 0
          if (side == 2 && y < -tol) { ok = false; }  // upper bound: y >= 0
        }
        if (ok) { return z; }
      }
    }
    Eigen::Index i = 0;
    while (i < mi && state[i] == 2) { state[i++] = 0; }
    if (i == mi) { break; }
    ++state[i];
  }
  return std::nullopt;
}

/// min 1/2 z^T H z + g^T z over lo <= z <= hi by accelerated projected gradient in long
/// double, run until the projected step stalls.
inline Eigen::VectorXd projected_gradient_box(
  const Eigen::MatrixXd & H, const Eigen::VectorXd & g, const Eigen::VectorXd & lo, const Eigen::VectorXd & hi,
  int max_iters = 200000)
{
  using Vec = Eigen::Matrix<long double, Eigen::Dynamic, 1>;
  using Mat = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
  const Mat Hl = H.cast<long double>();
  const Vec gl = g.cast<long double>();
  const Vec lol = lo.cast<long double>(), hil = hi.cast<long double>();
  const long double L = static_cast<long double>(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(H).eigenvalues().maxCoeff());
  const auto project = [&](const Vec & v) { return v.cwiseMax(lol).cwiseMin(hil).eval(); };
  Vec z = project(Vec::Zero(g.size()));
  Vec yk = z;
  long double t = 1.0L;
  for (int it = 0; it < max_iters; ++it) {
    const Vec zn = project(yk - (Hl * yk + gl) / L);
    const long double tn = (1.0L + std::sqrt(1.0L + 4.0L * t * t)) / 2.0L;
    yk = zn + ((t - 1.0L) / tn) * (zn - z);
    // Restart when the objective goes up.
    if ((zn - z).dot(Hl * zn + gl) > 0) {
      yk = zn;
      t = 1.0L;
    } else {
      t = tn;
    }
    const long double step = (zn - z).cwiseAbs().maxCoeff();
    z = zn;
    if (step < 1e-15L && it > 10) { break; }
  }
  return z.cast<double>();
}

/// Random strictly convex Hessian with eigenvalues in [lo_eig, hi_eig].
inline Eigen::MatrixXd random_spd(Eigen::Index n, std::mt19937_64 & rng, double lo_eig = 0.1, double hi_eig = 10.0)
{
  std::normal_distribution<double> nd;
  Eigen::MatrixXd M(n, n);
  for (Eigen::Index i = 0; i < M.size(); ++i) { M.data()[i] = nd(rng); }
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(M);
  const Eigen::MatrixXd Q = qr.householderQ();
  std::uniform_real_distribution<double> ud(lo_eig, hi_eig);
  Eigen::VectorXd d(n);
  for (Eigen::Index i = 0; i < n; ++i) { d(i) = ud(rng); }
  return Q * d.asDiagonal() * Q.transpose();
}

inline Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64 & rng)
{
  std::normal_distribution<double> nd;
  Eigen::MatrixXd M(r, c);
  for (Eigen::Index i = 0; i < M.size(); ++i) { M.data()[i] = nd(rng); }
  return M;
}

inline Eigen::VectorXd random_vector(Eigen::Index n, std::mt19937_64 & rng, double scale = 1.0)
{
  return scale * random_matrix(n, 1, rng);
}

/// Random QP with equality rows and two-sided boxes on a subset of variables, feasible by
/// construction (bounds and right-hand sides built around a random interior point).
inline kmpc::QpProblem random_mixed_qp(std::mt19937_64 & rng, Eigen::Index n, Eigen::Index n_eq, Eigen::Index n_box)
{
  const Eigen::MatrixXd H = random_spd(n, rng);
  const Eigen::VectorXd g = random_vector(n, rng, 5.0);
  const Eigen::VectorXd z0 = random_vector(n, rng, 0.5);
  const Eigen::MatrixXd Aeq = random_matrix(n_eq, n, rng);
  const Eigen::VectorXd beq = Aeq * z0;
  std::vector<Eigen::Index> idx(n);
  for (Eigen::Index i = 0; i < n; ++i) { idx[i] = i; }
  std::shuffle(idx.begin(), idx.end(), rng);
  Eigen::MatrixXd Ain = Eigen::MatrixXd::Zero(n_box, n);
  Eigen::VectorXd lo(n_box), hi(n_box);
  std::uniform_real_distribution<double> width(0.05, 1.0);
  for (Eigen::Index r = 0; r < n_box; ++r) {
    const Eigen::Index i = idx[r];
    Ain(r, i) = 1.0;
    lo(r) = z0(i) - width(rng);
    hi(r) = z0(i) + width(rng);
  }
  return kmpc::QpProblem::make(H, g, Aeq, beq, Ain, lo, hi);
}

}  // namespace oracle
