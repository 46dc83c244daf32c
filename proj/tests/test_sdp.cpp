#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "roaqc/sdp.hpp"

using namespace roaqc;

namespace {

using oracle::random_symmetric;

double dense_lambda_max(const MatrixXd& A) { return oracle::jacobi_lambda_max(A); }

// minimize t  s.t.  t I - A >= 0
SdpProblem lambda_max_problem(const MatrixXd& A) {
  const int d = static_cast<int>(A.rows());
  SdpProblem p;
  p.num_vars = 1;
  p.objective = VectorXd::Ones(1);
  SdpBlock b;
  b.F0 = -A;
  b.F = {MatrixXd::Identity(d, d)};
  p.blocks.push_back(b);
  return p;
}

}  // namespace

TEST(Sdp, DiagonalLambdaMax) {
  const SdpSolution s = solve(lambda_max_problem(Eigen::Vector2d(1, 2).asDiagonal()));
  ASSERT_EQ(s.status, SdpStatus::Optimal) << s.message;
  EXPECT_NEAR(s.objective, 2.0, 1e-7);
}

TEST(Sdp, RandomLambdaMax) {
  std::mt19937_64 rng(42);
  const MatrixXd A = random_symmetric(rng, 8);
  const SdpSolution s = solve(lambda_max_problem(A));
  ASSERT_EQ(s.status, SdpStatus::Optimal) << s.message;
  EXPECT_NEAR(s.objective, dense_lambda_max(A), 1e-7);
}

TEST(Sdp, ScalarBlock) {
  SdpProblem p;
  p.num_vars = 1;
  p.objective = VectorXd::Ones(1);
  SdpBlock b;
  b.F0 = MatrixXd::Zero(1, 1);
  b.F = {MatrixXd::Ones(1, 1)};
  p.blocks.push_back(b);
  const SdpSolution s = solve(p);
  ASSERT_EQ(s.status, SdpStatus::Optimal) << s.message;
  EXPECT_NEAR(s.y[0], 0.0, 1e-7);
}

TEST(Sdp, AnalyticAgreementAndCertificates) {
  std::mt19937_64 rng(2025);
  std::uniform_int_distribution<int> dim(2, 12);
  for (int trial = 0; trial < 100; ++trial) {
    const MatrixXd A = random_symmetric(rng, dim(rng));
    const SdpProblem p = lambda_max_problem(A);
    const SdpSolution s = solve(p);
    ASSERT_EQ(s.status, SdpStatus::Optimal) << s.message;
    const double lmax = dense_lambda_max(A);
    EXPECT_LE(std::abs(s.objective - lmax), 1e-6 * (1.0 + std::abs(lmax)));
    EXPECT_TRUE(verify_solution(p, s, 1e-7 * (1.0 + A.norm())).ok);
    EXPECT_GE(s.min_gap_seen, -1e-9);
    for (double l : s.block_min_eig) EXPECT_GE(l, -1e-8);
  }
}

TEST(Sdp, Determinism) {
  std::mt19937_64 rng(3);
  const SdpProblem p = lambda_max_problem(random_symmetric(rng, 6));
  const SdpSolution a = solve(p), b = solve(p);
  EXPECT_EQ(a.status, b.status);
  EXPECT_EQ(a.iterations, b.iterations);
  EXPECT_NEAR(a.objective, b.objective, 1e-12);
}

TEST(Sdp, MultiVariableWithDual) {
  // minimize y1 + y2  s.t.  [y1 1; 1 y2] >= 0 -> y1 = y2 = 1, objective 2
  SdpProblem p;
  p.num_vars = 2;
  p.objective = Eigen::Vector2d(1, 1);
  SdpBlock b;
  b.F0 = (MatrixXd(2, 2) << 0, 1, 1, 0).finished();
  b.F = {Eigen::Vector2d(1, 0).asDiagonal(), Eigen::Vector2d(0, 1).asDiagonal()};
  p.blocks.push_back(b);
  const SdpSolution s = solve(p);
  ASSERT_EQ(s.status, SdpStatus::Optimal) << s.message;
  EXPECT_NEAR(s.objective, 2.0, 1e-7);
  EXPECT_NEAR(s.dual_objective, 2.0, 1e-6);
  ASSERT_EQ(s.Z.size(), 1u);
  // dual feasibility: <F_i, Z> = c_i
  EXPECT_NEAR((b.F[0].cwiseProduct(s.Z[0])).sum(), 1.0, 1e-6);
}

TEST(Sdp, Infeasible) {
  // y >= 1 and -y >= 0
  SdpProblem p;
  p.num_vars = 1;
  p.objective = VectorXd::Ones(1);
  SdpBlock a, b;
  a.F0 = -MatrixXd::Ones(1, 1);
  a.F = {MatrixXd::Ones(1, 1)};
  b.F0 = MatrixXd::Zero(1, 1);
  b.F = {-MatrixXd::Ones(1, 1)};
  p.blocks = {a, b};
  EXPECT_EQ(solve(p).status, SdpStatus::Infeasible);
}

TEST(Sdp, Unbounded) {
  // minimize y s.t. [1] + 0*y >= 0 is unbounded; so is min y s.t. -y >= 0
  SdpProblem p;
  p.num_vars = 1;
  p.objective = VectorXd::Ones(1);
  SdpBlock b;
  b.F0 = MatrixXd::Zero(1, 1);
  b.F = {-MatrixXd::Ones(1, 1)};
  p.blocks = {b};
  EXPECT_EQ(solve(p).status, SdpStatus::Unbounded);

  SdpProblem q;
  q.num_vars = 1;
  q.objective = VectorXd::Ones(1);
  EXPECT_EQ(solve(q).status, SdpStatus::Unbounded);
}

TEST(Sdp, ZeroRowsArePresolved) {
  // the second row/column of the block is identically zero
  SdpProblem p;
  p.num_vars = 1;
  p.objective = VectorXd::Ones(1);
  SdpBlock b;
  b.F0 = MatrixXd::Zero(2, 2);
  b.F0(0, 0) = -3.0;
  MatrixXd F1 = MatrixXd::Zero(2, 2);
  F1(0, 0) = 1.0;
  b.F = {F1};
  p.blocks = {b};
  const SdpSolution s = solve(p);
  ASSERT_EQ(s.status, SdpStatus::Optimal) << s.message;
  EXPECT_NEAR(s.y[0], 3.0, 1e-7);
  ASSERT_EQ(s.Z[0].rows(), 2);
  EXPECT_EQ(s.Z[0](1, 1), 0.0);
}

TEST(VerifySolution, FlagsPerturbation) {
  std::mt19937_64 rng(5);
  const SdpProblem p = lambda_max_problem(random_symmetric(rng, 5));
  const SdpSolution s = solve(p);
  ASSERT_EQ(s.status, SdpStatus::Optimal);
  EXPECT_TRUE(verify_solution(p, s, 1e-8).ok);
  VectorXd y = s.y;
  y[0] -= 1.0;
  const SdpVerification v = verify_solution(p, y, 1e-8);
  EXPECT_FALSE(v.ok);
  EXPECT_TRUE(v.violated[0]);
  SdpProblem empty;
  empty.objective = VectorXd(0);
  EXPECT_TRUE(verify_solution(empty, VectorXd(0), 1e-8).ok);
  EXPECT_EQ(solve(empty).status, SdpStatus::Optimal);
}

TEST(SdpProblem, ValidationErrors) {
  SdpProblem p = lambda_max_problem(MatrixXd::Identity(2, 2));
  p.blocks[0].F0(0, 1) = 1.0;
  EXPECT_THROW(p.validate(), DimensionError);
  SdpProblem q = lambda_max_problem(MatrixXd::Identity(2, 2));
  q.blocks[0].F.push_back(MatrixXd::Zero(2, 2));
  EXPECT_THROW(solve(q), DimensionError);
  SdpProblem r = lambda_max_problem(MatrixXd::Identity(2, 2));
  r.objective = VectorXd::Ones(2);
  EXPECT_THROW(r.validate(), DimensionError);
}

TEST(SdpProblem, DumpHasAllBlocks) {
  const SdpProblem p = lambda_max_problem(MatrixXd::Identity(3, 3));
  const nlohmann::json j = dump_problem(p);
  EXPECT_EQ(j["num_vars"], 1);
  ASSERT_EQ(j["blocks"].size(), 1u);
  EXPECT_EQ(j["blocks"][0]["dim"], 3);
}
