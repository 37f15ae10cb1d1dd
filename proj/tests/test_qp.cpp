#include <doctest.h>

#include <limits>
#include <random>
#include <sstream>

#include "kmpc/qp.hpp"
#include "oracles.hpp"

using namespace kmpc;

namespace {

QpProblem scalar_problem(double h, double g, double lo, double hi)
{
  return QpProblem::make(Eigen::MatrixXd::Constant(1, 1, h), Eigen::VectorXd::Constant(1, g), {}, {},
                         Eigen::MatrixXd::Identity(1, 1), Eigen::VectorXd::Constant(1, lo),
                         Eigen::VectorXd::Constant(1, hi));
}

}  // namespace

TEST_CASE("scalar QP with an active lower bound")
{
  // min 1/2 z^2 s.t. z >= 1
  const QpProblem p = scalar_problem(1.0, 0.0, 1.0, kQpInfinity);
  const QpSolution s = solve(p);
  REQUIRE(s.status == QpStatus::optimal);
  CHECK(s.z(0) == doctest::Approx(1.0).epsilon(1e-9));
  // multiplier magnitude 1; negative sign marks the lower side
  CHECK(s.y_in(0) == doctest::Approx(-1.0).epsilon(1e-8));
  CHECK(kkt_residuals(p, s).max() <= 1e-6);
}

TEST_CASE("unconstrained problem matches the linear solve")
{
  std::mt19937_64 rng(3);
  const Eigen::MatrixXd H = oracle::random_spd(6, rng);
  const Eigen::VectorXd g = oracle::random_vector(6, rng);
  const QpProblem p = QpProblem::make(H, g, {}, {}, {}, {}, {});
  const QpSolution s = solve(p);
  REQUIRE(s.status == QpStatus::optimal);
  const Eigen::VectorXd z = H.ldlt().solve(-g);
  CHECK((s.z - z).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("equality constrained QP matches its KKT system")
{
  std::mt19937_64 rng(4);
  const Eigen::MatrixXd H = oracle::random_spd(5, rng);
  const Eigen::VectorXd g = oracle::random_vector(5, rng);
  const Eigen::MatrixXd A = oracle::random_matrix(2, 5, rng);
  const Eigen::VectorXd b = oracle::random_vector(2, rng);
  const QpSolution s = solve(QpProblem::make(H, g, A, b, {}, {}, {}));
  REQUIRE(s.status == QpStatus::optimal);
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(7, 7);
  K.topLeftCorner(5, 5) = H;
  K.topRightCorner(5, 2) = A.transpose();
  K.bottomLeftCorner(2, 5) = A;
  Eigen::VectorXd rhs(7);
  rhs << -g, b;
  const Eigen::VectorXd ref = K.fullPivLu().solve(rhs);
  CHECK((s.z - ref.head(5)).cwiseAbs().maxCoeff() <= 1e-7);
  CHECK((s.y_eq - ref.tail(2)).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("random mixed QPs agree with active-set enumeration")
{
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> n_dist(2, 12), eq_dist(0, 3), box_dist(1, 7);
  for (int trial = 0; trial < 25; ++trial) {
    const int n = n_dist(rng);
    const int n_eq = std::min(eq_dist(rng), n - 1);
    const int n_box = std::min(box_dist(rng), n);
    const QpProblem p = oracle::random_mixed_qp(rng, n, n_eq, n_box);
    const auto ref = oracle::enumerate_qp(p);
    REQUIRE(ref.has_value());
    const QpSolution s = solve(p);
    INFO("trial " << trial);
    REQUIRE(s.status == QpStatus::optimal);
    CHECK((s.z - *ref).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK(kkt_residuals(p, s).max() <= 1e-6);
  }
}

TEST_CASE("box-constrained QPs agree with projected gradient")
{
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::Index n = 20;
    const Eigen::MatrixXd H = oracle::random_spd(n, rng, 0.5, 5.0);
    const Eigen::VectorXd g = oracle::random_vector(n, rng, 3.0);
    const Eigen::VectorXd lo = Eigen::VectorXd::Constant(n, -0.5);
    const Eigen::VectorXd hi = Eigen::VectorXd::Constant(n, 0.7);
    const QpProblem p = QpProblem::make(H, g, {}, {}, Eigen::MatrixXd::Identity(n, n), lo, hi);
    const Eigen::VectorXd ref = oracle::projected_gradient_box(H, g, lo, hi);
    const QpSolution s = solve(p);
    REQUIRE(s.status == QpStatus::optimal);
    CHECK((s.z - ref).cwiseAbs().maxCoeff() <= 1e-6);
  }
}

TEST_CASE("primal infeasibility is detected")
{
  // z >= 1 and z <= 0 as two rows
  Eigen::MatrixXd A(2, 1);
  A << 1.0, 1.0;
  const QpProblem p = QpProblem::make(Eigen::MatrixXd::Identity(1, 1), Eigen::VectorXd::Zero(1), {}, {}, A,
                                      Eigen::Vector2d(1.0, -kQpInfinity), Eigen::Vector2d(kQpInfinity, 0.0));
  CHECK(solve(p).status == QpStatus::primal_infeasible);
}

TEST_CASE("dual infeasibility is detected")
{
  // min -z with z >= 0 and H = 0
  const QpProblem p = QpProblem::make(Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Constant(1, -1.0), {}, {},
                                      Eigen::MatrixXd::Identity(1, 1), Eigen::VectorXd::Zero(1),
                                      Eigen::VectorXd::Constant(1, kQpInfinity));
  CHECK(solve(p).status == QpStatus::dual_infeasible);
}

TEST_CASE("problem construction rejects bad data")
{
  SUBCASE("indefinite Hessian")
  {
    Eigen::Matrix2d H;
    H << 1.0, 0.0, 0.0, -1.0;
    CHECK_THROWS_AS(QpProblem::make(H, Eigen::Vector2d::Zero(), {}, {}, {}, {}, {}), std::invalid_argument);
  }
  SUBCASE("lo > hi")
  {
    CHECK_THROWS_AS(scalar_problem(1.0, 0.0, 1.0, 0.0), std::invalid_argument);
  }
  SUBCASE("shape mismatch")
  {
    CHECK_THROWS_AS(QpProblem::make(Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Zero(3), {}, {}, {}, {}, {}),
                    std::invalid_argument);
  }
  SUBCASE("NaN in the gradient")
  {
    CHECK_THROWS(scalar_problem(1.0, std::numeric_limits<double>::quiet_NaN(), 0.0, 1.0));
  }
}

TEST_CASE("asymmetric Hessian is symmetrized")
{
  Eigen::Matrix2d H;
  H << 2.0, 1.0, 0.0, 2.0;
  const QpProblem p = QpProblem::make(H, Eigen::Vector2d(1.0, -1.0), {}, {}, {}, {}, {});
  CHECK(p.H(0, 1) == doctest::Approx(0.5));
  CHECK(p.H(1, 0) == doctest::Approx(0.5));
}

TEST_CASE("one-sided row count")
{
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(3, 3);
  const QpProblem p = QpProblem::make(Eigen::MatrixXd::Identity(3, 3), Eigen::VectorXd::Zero(3), {}, {}, A,
                                      Eigen::Vector3d(-1.0, 0.0, -kQpInfinity), Eigen::Vector3d(1.0, kQpInfinity, 2.0));
  CHECK(p.one_sided_rows() == 4);
}

TEST_CASE("warm start from the solution converges immediately")
{
  std::mt19937_64 rng(21);
  const QpProblem p = oracle::random_mixed_qp(rng, 10, 2, 6);
  QpSolver solver;
  const QpSolution cold = solver.solve(p);
  REQUIRE(cold.status == QpStatus::optimal);
  SolverSettings s;
  s.warm_start = WarmStart{cold.z, cold.y_eq, cold.y_in};
  const QpSolution warm = solver.solve(p, s);
  REQUIRE(warm.status == QpStatus::optimal);
  CHECK(warm.iterations <= cold.iterations);
  CHECK((warm.z - cold.z).cwiseAbs().maxCoeff() <= 1e-6);
  // same matrices: the factorization is reused
  CHECK(solver.factorizations() >= 1);
}

TEST_CASE("matrices are cached across solves with new vectors")
{
  std::mt19937_64 rng(22);
  QpProblem p = oracle::random_mixed_qp(rng, 8, 1, 4);
  QpSolver solver;
  REQUIRE(solver.solve(p).status == QpStatus::optimal);
  const int f = solver.factorizations();
  p.g = oracle::random_vector(8, rng);
  const QpSolution s = solver.solve(p);
  REQUIRE(s.status == QpStatus::optimal);
  const auto ref = oracle::enumerate_qp(p);
  REQUIRE(ref);
  CHECK((s.z - *ref).cwiseAbs().maxCoeff() <= 1e-6);
  CHECK(solver.factorizations() - f <= 2);
}

TEST_CASE("text round trip")
{
  std::mt19937_64 rng(5);
  const QpProblem p = oracle::random_mixed_qp(rng, 4, 1, 2);
  std::stringstream ss;
  write_qp(ss, p);
  const QpProblem q = read_qp(ss);
  CHECK(q.H == p.H);
  CHECK(q.g == p.g);
  CHECK(q.Aeq == p.Aeq);
  CHECK(q.beq == p.beq);
  CHECK(q.Ain == p.Ain);
  CHECK(q.lo == p.lo);
  CHECK(q.hi == p.hi);

  std::stringstream bad("kmpc-qp 2\n");
  CHECK_THROWS(read_qp(bad));
}

TEST_CASE("settings validation")
{
  SolverSettings s;
  s.alpha = 2.5;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = {};
  s.max_iters = 0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
}

TEST_CASE("badly scaled active row is polished to full accuracy")
{
  // min 1/2 |z|^2 - z1 - z2  s.t.  1e-3 (z1 + z2) <= 0; optimum z = 0 with y = 1000
  const double a = 1e-3;
  Eigen::MatrixXd Ain(1, 2);
  Ain << a, a;
  const QpProblem p = QpProblem::make(
    Eigen::MatrixXd::Identity(2, 2), Eigen::Vector2d(-1.0, -1.0), Eigen::MatrixXd(0, 2), Eigen::VectorXd(0), Ain,
    Eigen::VectorXd::Constant(1, -kQpInfinity), Eigen::VectorXd::Zero(1));
  const QpSolution sol = solve(p);
  REQUIRE(sol.status == QpStatus::optimal);
  CHECK(sol.z.cwiseAbs().maxCoeff() <= 1e-9);
  CHECK(sol.y_in(0) == doctest::Approx(1.0 / a).epsilon(1e-6));
  CHECK(kkt_residuals(p, sol).max() <= 1e-9);
}

TEST_CASE("infeasibility through a nearly vanishing row is certified quickly")
{
  // |z| <= 1 but 1e-6 z >= 1 would need z = 1e6
  Eigen::MatrixXd Ain(2, 1);
  Ain << 1.0, 1e-6;
  const QpProblem p = QpProblem::make(
    Eigen::MatrixXd::Identity(1, 1), Eigen::VectorXd::Zero(1), Eigen::MatrixXd(0, 1), Eigen::VectorXd(0), Ain,
    Eigen::Vector2d(-1.0, 1.0), Eigen::Vector2d(1.0, kQpInfinity));
  const QpSolution sol = solve(p);
  CHECK(sol.status == QpStatus::primal_infeasible);
  CHECK(sol.iterations < 1000);
}
