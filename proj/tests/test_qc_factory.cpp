#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "roaqc/ellipsoid.hpp"
#include "roaqc/qc_factory.hpp"

using namespace roaqc;

namespace {

using oracle::random_orthonormal;
using oracle::sampled_min;

MatrixXd random_spd(std::mt19937_64& rng, int n) { return oracle::random_spd(rng, n, 0.3); }

bool same_up_to_joint_sign_and_order(const ValleyFactors& f, const VectorXd& a, const VectorXd& b, double tol) {
  auto eq = [&](const VectorXd& x, const VectorXd& y) { return (x - y).cwiseAbs().maxCoeff() <= tol; };
  for (double s : {1.0, -1.0}) {
    if (eq(f.c1, s * a) && eq(f.c2, s * b)) return true;
    if (eq(f.c1, s * b) && eq(f.c2, s * a)) return true;
  }
  return false;
}

MatrixXd x1x2_matrix() {
  MatrixXd Q(2, 2);
  Q << 0, 0.5, 0.5, 0;
  return Q;
}

}  // namespace

TEST(Classify, Examples) {
  RankSignature s = classify(x1x2_matrix());
  EXPECT_EQ(s.rank, 2);
  EXPECT_EQ(s.n_pos, 1);
  EXPECT_EQ(s.n_neg, 1);
  EXPECT_EQ(classify(MatrixXd::Zero(3, 3)).rank, 0);
  s = classify(Eigen::Vector3d(1, 1, -1).asDiagonal().toDenseMatrix());
  EXPECT_EQ(s.rank, 3);
  EXPECT_EQ(s.n_pos, 2);
  EXPECT_EQ(s.n_neg, 1);
  EXPECT_LE((s.eigvecs.transpose() * s.eigvecs - MatrixXd::Identity(3, 3)).norm(), 1e-10);
  // eigenvalues below the relative threshold count as zero
  EXPECT_EQ(classify(Eigen::Vector3d(1, 1e-12, -1).asDiagonal().toDenseMatrix()).rank, 2);
}

TEST(Rank2Decompose, Examples) {
  ValleyFactors f = rank2_decompose(x1x2_matrix());
  EXPECT_TRUE(same_up_to_joint_sign_and_order(f, Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 1), 1e-12));
  EXPECT_LE((f.reconstruct() - x1x2_matrix()).norm(), 1e-14);

  const MatrixXd D = Eigen::Vector2d(1, -1).asDiagonal();
  f = rank2_decompose(D);
  EXPECT_TRUE(same_up_to_joint_sign_and_order(f, Eigen::Vector2d(1, 1), Eigen::Vector2d(1, -1), 1e-12));
  EXPECT_THROW(rank2_decompose(MatrixXd::Identity(2, 2)), SignatureError);
  EXPECT_THROW(rank2_decompose(Eigen::Vector3d(1, 1, -1).asDiagonal().toDenseMatrix()), SignatureError);
}

TEST(Rank2Decompose, CanonicalFormIsReproducible) {
  // the same matrix with flipped-sign eigenvectors gives identical factors
  const ValleyFactors a = rank2_decompose(x1x2_matrix());
  const ValleyFactors b = rank2_decompose(x1x2_matrix() * 1.0);
  EXPECT_EQ(a.c1, b.c1);
  EXPECT_EQ(a.c2, b.c2);
}

TEST(Rank2Decompose, RandomReconstruction) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> g;
  std::uniform_int_distribution<int> dim(2, 6);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = dim(rng);
    VectorXd u(n), v(n);
    for (int i = 0; i < n; ++i) {
      u[i] = g(rng);
      v[i] = g(rng);
    }
    const MatrixXd Q = 0.5 * (u * v.transpose() + v * u.transpose());
    const ValleyFactors f = rank2_decompose(Q);
    EXPECT_LE((f.reconstruct() - Q).norm(), 1e-10 * Q.norm());
    // independent and nonzero
    MatrixXd C(n, 2);
    C << f.c1, f.c2;
    Eigen::JacobiSVD<MatrixXd> svd(C);
    EXPECT_GT(svd.singularValues()[1], 1e-8 * svd.singularValues()[0]);
  }
}

TEST(Rank3Decompose, DiagonalExample) {
  const MatrixXd Q = Eigen::Vector3d(1, 1, -1).asDiagonal();
  const auto groups = rank3_decompose(Q);
  const Eigen::Vector3d e1(1, 0, 0), e2(0, 1, 0), e3(0, 0, 1);
  bool saw_a = false, saw_b = false;
  for (const auto& f : groups) {
    ASSERT_TRUE(f.c3.has_value());
    EXPECT_FALSE(f.negated);
    EXPECT_LE((f.reconstruct() - Q).norm(), 1e-12);
    if ((f.c3->cwiseAbs() - e2).norm() < 1e-12) {
      saw_a = true;
      EXPECT_TRUE(same_up_to_joint_sign_and_order(f, e1 + e3, e1 - e3, 1e-12));
    }
    if ((f.c3->cwiseAbs() - e1).norm() < 1e-12) {
      saw_b = true;
      EXPECT_TRUE(same_up_to_joint_sign_and_order(f, e2 + e3, e2 - e3, 1e-12));
    }
  }
  EXPECT_TRUE(saw_a);
  EXPECT_TRUE(saw_b);
}

TEST(Rank3Decompose, NegatedSignature) {
  const MatrixXd Q = Eigen::Vector3d(-1, -1, 1).asDiagonal();
  for (const auto& f : rank3_decompose(Q)) {
    EXPECT_TRUE(f.negated);
    EXPECT_LE((f.reconstruct() + Q).norm(), 1e-12);
  }
  EXPECT_THROW(rank3_decompose(MatrixXd::Identity(3, 3)), SignatureError);
  EXPECT_THROW(rank3_decompose(x1x2_matrix()), SignatureError);
}

TEST(Rank3Decompose, RandomReconstructionAndOrthogonality) {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> dim(3, 6);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = dim(rng);
    const MatrixXd V = random_orthonormal(rng, n);
    const double s = trial % 2 ? 1.0 : -1.0;
    const MatrixXd Q = s * (2.0 * V.col(0) * V.col(0).transpose() + V.col(1) * V.col(1).transpose() -
                            V.col(2) * V.col(2).transpose());
    for (const auto& f : rank3_decompose(Q)) {
      EXPECT_EQ(f.negated, s < 0);
      EXPECT_LE((f.reconstruct() - s * Q).norm(), 1e-10 * Q.norm());
      EXPECT_LE(std::abs(f.c3->dot(f.c1)), 1e-10 * Q.norm());
      EXPECT_LE(std::abs(f.c3->dot(f.c2)), 1e-10 * Q.norm());
    }
  }
}

TEST(CsQc, Examples) {
  const MonomialBasis b2(2);
  const Ellipsoid unit = Ellipsoid::identity(2, 1.0);
  QcMatrix qc = cs_qc(quadform_from_matrix(x1x2_matrix(), b2), unit);
  EXPECT_LE((qc.M.topLeftCorner(2, 2) - 0.25 * MatrixXd::Identity(2, 2)).norm(), 1e-15);
  const Eigen::Vector3d b(0, 1, 0);
  EXPECT_LE((qc.M.bottomRightCorner(3, 3) + b * b.transpose()).norm(), 1e-15);
  EXPECT_TRUE(qc.M.topRightCorner(2, 3).isZero(0.0));
  EXPECT_EQ(qc.kind, QcKind::CSQC);

  qc = cs_qc(quadform_from_coeffs(VectorXd::Zero(3), b2), unit);
  EXPECT_TRUE(qc.M.isZero(0.0));

  qc = cs_qc(QuadForm::monomial(0, b2), unit);
  EXPECT_LE((qc.M.topLeftCorner(2, 2) - Eigen::Vector2d(1, 0).asDiagonal().toDenseMatrix()).norm(), 1e-15);
  EXPECT_GE(sampled_min(qc.M, MatrixXd::Identity(2, 2), 1.0, 100000, 1), -1e-9);
}

TEST(CsQc, TightAtPeaks) {
  const MonomialBasis b2(2);
  const QcMatrix qc = cs_qc(quadform_from_matrix(x1x2_matrix(), b2), Ellipsoid::identity(2, 1.0));
  const double s = 1.0 / std::sqrt(2.0);
  for (double a : {s, -s})
    for (double c : {s, -s}) EXPECT_NEAR(qc.evaluate(Eigen::Vector2d(a, c), b2), 0.0, 1e-12);
}

TEST(Rank2Valley, Examples) {
  const MonomialBasis b2(2);
  const QuadForm f = quadform_from_matrix(x1x2_matrix(), b2);
  auto qcs = rank2_valley_qcs(f, Ellipsoid::identity(2, 1.0));
  ASSERT_EQ(qcs.size(), 2u);
  std::vector<MatrixXd> want{Eigen::Vector2d(1, 0).asDiagonal(), Eigen::Vector2d(0, 1).asDiagonal()};
  auto matches = [&](const std::vector<QcMatrix>& got, double scale) {
    for (const auto& w : want) {
      bool hit = false;
      for (const auto& qc : got) hit = hit || (qc.M.topLeftCorner(2, 2) - scale * w).norm() < 1e-14;
      EXPECT_TRUE(hit);
    }
  };
  matches(qcs, 1.0);
  matches(rank2_valley_qcs(f, Ellipsoid::identity(2, 2.0)), 4.0);
  for (const auto& qc : qcs) EXPECT_LE((qc.M.bottomRightCorner(3, 3) + f.b * f.b.transpose()).norm(), 1e-15);

  const MonomialBasis b3(3);
  VectorXd b(6);
  b << 0, 1, 1, 0, 0, 0;
  const QuadForm g = quadform_from_coeffs(b, b3);
  for (const auto& qc : rank2_valley_qcs(g, Ellipsoid::identity(3, 1.0)))
    EXPECT_GE(sampled_min(qc.M, MatrixXd::Identity(3, 3), 1.0, 100000, 2), -1e-9);
  EXPECT_THROW(rank2_valley_qcs(QuadForm::monomial(0, b2), Ellipsoid::identity(2, 1.0)), SignatureError);
}

TEST(Rank2Valley, TightAlongValley) {
  const MonomialBasis b2(2);
  const QuadForm f = quadform_from_matrix(x1x2_matrix(), b2);
  for (const auto& qc : rank2_valley_qcs(f, Ellipsoid::identity(2, 1.0))) {
    if ((qc.M.topLeftCorner(2, 2) - Eigen::Vector2d(1, 0).asDiagonal().toDenseMatrix()).norm() > 1e-14) continue;
    EXPECT_NEAR(qc.evaluate(Eigen::Vector2d(0, 1), b2), 0.0, 1e-12);
    EXPECT_NEAR(qc.evaluate(Eigen::Vector2d(0, -1), b2), 0.0, 1e-12);
  }
}

TEST(Rank3Valley, DiagonalHandComputation) {
  const MonomialBasis b3(3);
  const QuadForm f = quadform_from_matrix(Eigen::Vector3d(1, 1, -1).asDiagonal(), b3);
  const auto qcs = rank3_valley_qcs(f, Ellipsoid::identity(3, 1.0));
  ASSERT_EQ(qcs.size(), 4u);
  const Eigen::Vector3d d(1, 0, -1), e2(0, 1, 0);
  const MatrixXd want = 2.0 * d * d.transpose() + 2.0 * e2 * e2.transpose();
  bool hit = false;
  for (const auto& qc : qcs) hit = hit || (qc.M.topLeftCorner(3, 3) - want).norm() < 1e-12;
  EXPECT_TRUE(hit);
  for (const auto& qc : qcs) EXPECT_GE(sampled_min(qc.M, MatrixXd::Identity(3, 3), 1.0, 100000, 3), -1e-9);
}

TEST(Rank3Valley, ZeroC3ReducesToRank2) {
  const MonomialBasis b2(2);
  const QuadForm f = quadform_from_matrix(x1x2_matrix(), b2);
  const Ellipsoid ell = Ellipsoid::identity(2, 1.7);
  ValleyFactors fac = rank2_decompose(f.Q);
  fac.c3 = VectorXd::Zero(2);
  const auto via3 = valley_qcs_from_factors(fac, f, ell, QcKind::Rank3Valley, "x");
  const auto via2 = rank2_valley_qcs(f, ell);
  ASSERT_EQ(via3.size(), via2.size());
  for (std::size_t i = 0; i < via2.size(); ++i) EXPECT_EQ(via3[i].M, via2[i].M);
}

TEST(Rank3Valley, ThreeStateFirstRow) {
  const QuadraticSystem sys = load_system_file(ROAQC_DATA_DIR "/three_state.json");
  const QuadForm row = sys.row_function(0);
  const RankSignature sig = classify(row.Q);
  EXPECT_EQ(sig.rank, 3);
  const Ellipsoid ell = Ellipsoid::identity(3, 1.0);
  const auto qcs = rank3_valley_qcs(row, ell);
  ASSERT_EQ(qcs.size(), 4u);
  for (const auto& qc : qcs) EXPECT_GE(sampled_min(qc.M, MatrixXd::Identity(3, 3), 1.0, 100000, 4), -1e-9);
}

TEST(CrossPairs, Enumeration) {
  const MonomialBasis b3(3), b2(2);
  const auto pairs = enumerate_cross_pairs(b3);
  auto has = [&](int p, int q, int i, int j, int k) {
    for (const auto& c : pairs)
      if (c.p == p && c.q == q && c.i == i && c.j == j && c.k == k) return true;
    return false;
  };
  EXPECT_TRUE(has(b3.index(0, 1), b3.index(0, 2), 0, 1, 2));
  EXPECT_TRUE(has(b3.index(0, 0), b3.index(1, 2), 0, 1, 2));
  EXPECT_EQ(pairs.size(), 12u);
  EXPECT_EQ(enumerate_same_index_pairs(b3).size(), 3u);

  // n=2: brute force over all monomial pairs
  const auto p2 = enumerate_cross_pairs(b2);
  ASSERT_EQ(p2.size(), 2u);
  EXPECT_EQ(p2[0].p, 0);  // x1^2 * x1x2 = x1^2 * x1 * x2
  EXPECT_EQ(p2[0].q, 1);
  EXPECT_EQ(p2[0].i, 0);
  EXPECT_EQ(p2[0].j, 0);
  EXPECT_EQ(p2[0].k, 1);
  EXPECT_EQ(p2[1].p, 1);  // x1x2 * x2^2 = x2^2 * x1 * x2
  EXPECT_EQ(p2[1].i, 1);
  const auto s2 = enumerate_same_index_pairs(b2);
  ASSERT_EQ(s2.size(), 1u);  // x1^2 * x2^2
}

TEST(CrossPairs, EveryPairListedOnce) {
  for (int n = 2; n <= 5; ++n) {
    const MonomialBasis b(n);
    const auto pairs = enumerate_cross_pairs(b);
    // product exponents by hand
    int expected = 0, expected_same = 0;
    for (int p = 0; p < b.size(); ++p)
      for (int q = p + 1; q < b.size(); ++q) {
        std::vector<int> e(n, 0);
        for (int t : {p, q}) {
          e[b.pair(t).first]++;
          e[b.pair(t).second]++;
        }
        for (int i = 0; i < n; ++i) {
          if (e[i] < 2) continue;
          std::vector<int> r = e;
          r[i] -= 2;
          int ones = 0, other = 0;
          for (int v : r) {
            if (v == 1) ++ones;
            else if (v > 1) ++other;
          }
          if (ones == 2 && other == 0) ++expected;
        }
        int twos = 0;
        for (int v : e) twos += v == 2;
        if (twos == 2) ++expected_same;
      }
    EXPECT_EQ(static_cast<int>(pairs.size()), expected) << n;
    EXPECT_EQ(static_cast<int>(enumerate_same_index_pairs(b).size()), expected_same) << n;
  }
}

TEST(CrossProductQc, HandExample) {
  const MonomialBasis b3(3);
  const Ellipsoid unit = Ellipsoid::identity(3, 1.0);
  const int p = b3.index(0, 1), q = b3.index(0, 2);
  const auto qcs = cross_product_qcs({p, q, 0, 1, 2}, unit, b3);
  ASSERT_EQ(qcs.size(), 4u);
  const Eigen::Vector3d d(0, 1, 1);
  EXPECT_LE((qcs[0].M.topLeftCorner(3, 3) - d * d.transpose()).norm(), 1e-15);
  MatrixXd S = MatrixXd::Zero(6, 6);
  S(p, q) = S(q, p) = 1.0;
  EXPECT_EQ(qcs[0].M.bottomRightCorner(6, 6), -S);
  EXPECT_EQ(qcs[2].M.bottomRightCorner(6, 6), S);
  for (const auto& qc : qcs) EXPECT_GE(sampled_min(qc.M, MatrixXd::Identity(3, 3), 1.0, 100000, 5), -1e-9);

  const auto scaled = cross_product_qcs({p, q, 0, 1, 2}, Ellipsoid::identity(3, 2.0), b3);
  for (int t = 0; t < 4; ++t) {
    EXPECT_LE((scaled[t].M.topLeftCorner(3, 3) - 4.0 * qcs[t].M.topLeftCorner(3, 3)).norm(), 1e-14);
    EXPECT_EQ(scaled[t].M.bottomRightCorner(6, 6), qcs[t].M.bottomRightCorner(6, 6));
  }
  EXPECT_THROW(cross_product_qcs({p, q, 0, 1, 1}, unit, b3), Error);
  EXPECT_THROW(cross_product_qcs({p, p, 0, 1, 2}, unit, b3), Error);
}

TEST(CrossProductQc, SubsumesLiftedProductBound) {
  std::mt19937_64 rng(9);
  for (int n = 2; n <= 4; ++n) {
    const MonomialBasis b(n);
    const Ellipsoid ell(random_spd(rng, n), 1.3);
    for (const auto& pair : enumerate_cross_pairs(b)) {
      const MatrixXd lifted = lifted_product_qc(pair, ell, b).M;
      bool hit = false;
      for (const auto& qc : cross_product_qcs(pair, ell, b)) hit = hit || (qc.M - lifted).cwiseAbs().maxCoeff() <= 1e-13;
      EXPECT_TRUE(hit);
    }
  }
}

TEST(SameIndexQc, Examples) {
  const MonomialBasis b3(3);
  const int p = b3.index(0, 0), q = b3.index(1, 1);
  const auto qcs = same_index_cross_qcs({p, q, 0, 1}, Ellipsoid::identity(3, 1.0), b3);
  ASSERT_EQ(qcs.size(), 2u);
  EXPECT_EQ(qcs[0].M.topLeftCorner(3, 3), Eigen::Vector3d(0, 1, 0).asDiagonal().toDenseMatrix());
  EXPECT_EQ(qcs[1].M.topLeftCorner(3, 3), Eigen::Vector3d(1, 0, 0).asDiagonal().toDenseMatrix());
  MatrixXd want = MatrixXd::Zero(6, 6);
  want(0, 3) = want(3, 0) = -0.5;
  EXPECT_EQ(qcs[0].M.bottomRightCorner(6, 6), want);
  for (const auto& qc : qcs) EXPECT_GE(sampled_min(qc.M, MatrixXd::Identity(3, 3), 1.0, 100000, 6), -1e-9);

  const int r = b3.index(0, 1);
  EXPECT_THROW(same_index_cross_qcs({r, r, 0, 1}, Ellipsoid::identity(3, 1.0), b3), Error);
  const auto nine = same_index_cross_qcs({p, q, 0, 1}, Ellipsoid::identity(3, 3.0), b3);
  EXPECT_EQ(nine[0].M.topLeftCorner(3, 3), 9.0 * qcs[0].M.topLeftCorner(3, 3));
}

TEST(BuildQcSet, TableCounts) {
  const QuadraticSystem sys = load_system_file(ROAQC_DATA_DIR "/three_state.json");
  const Ellipsoid ell = Ellipsoid::identity(3, 1.0);
  const int want[] = {9, 19, 13, 63, 23, 73, 67, 77};
  for (int s = 1; s <= 8; ++s)
    EXPECT_EQ(static_cast<int>(build_qc_set(sys, ell, QcRecipe::preset(s)).qcs.size()), want[s - 1]) << "set" << s;
}

TEST(BuildQcSet, FlagsRowsWithoutValleyFamily) {
  // row 1 is x1^2 + x2^2 (definite): CSQC only, flagged
  nlohmann::json j = {{"n", 2}, {"A", {{-1.0, 0.0}, {0.0, -1.0}}}, {"B", {{1.0, 0.0, 1.0}, {0.0, 1.0, 0.0}}}};
  const QuadraticSystem sys = load_system(j);
  const QcSet set = build_qc_set(sys, Ellipsoid::identity(2, 1.0), QcRecipe::preset(8));
  ASSERT_EQ(set.flagged.size(), 1u);
  EXPECT_NE(set.flagged[0].find("b1"), std::string::npos);
  // row 2 equals the monomial x1x2, so its QCs are duplicates
  EXPECT_GT(set.duplicates_removed, 0);
}

TEST(ValidateSampled, DetectorAndZero) {
  const MonomialBasis b2(2);
  const Ellipsoid ell = Ellipsoid::identity(2, 1.0);
  QcMatrix zero;
  zero.M = MatrixXd::Zero(5, 5);
  EXPECT_EQ(validate_qc_sampled(zero, ell, b2, 1000).min_value, 0.0);

  QcMatrix good = cs_qc(quadform_from_matrix(x1x2_matrix(), b2), ell);
  const QcValidation v = validate_qc_sampled(good, ell, b2, 100000);
  EXPECT_GE(v.min_value, -1e-9);
  EXPECT_EQ(v.samples, 100000);

  QcMatrix bad = good;
  bad.M.topLeftCorner(2, 2) *= -1.0;
  EXPECT_LT(validate_qc_sampled(bad, ell, b2, 1000).min_value, 0.0);
  QcMatrix bad2 = good;
  bad2.M.bottomRightCorner(3, 3) *= 2.0;
  EXPECT_LT(validate_qc_sampled(bad2, ell, b2, 100000).min_value, 0.0);
  // deterministic in the seed
  EXPECT_EQ(validate_qc_sampled(good, ell, b2, 5000, 3).min_value, validate_qc_sampled(good, ell, b2, 5000, 3).min_value);
}

TEST(QcJson, Roundtrip) {
  const MonomialBasis b3(3);
  const auto qcs = cross_product_qcs({b3.index(0, 1), b3.index(0, 2), 0, 1, 2}, Ellipsoid::identity(3, 1.2), b3);
  const nlohmann::json j = qc_set_to_json(qcs);
  ASSERT_EQ(j.size(), 4u);
  const QcMatrix back = qc_from_json(nlohmann::json::parse(j[1].dump()));
  EXPECT_EQ(back.M, qcs[1].M);
  EXPECT_EQ(back.kind, qcs[1].kind);
  EXPECT_EQ(back.variant, qcs[1].variant);
}

TEST(Recipe, ParseAndNames) {
  EXPECT_EQ(QcRecipe::parse("set5"), QcRecipe::preset(5));
  EXPECT_EQ(QcRecipe::parse("csqc,rank2,rank3"), QcRecipe::preset(5));
  EXPECT_EQ(QcRecipe::preset(6).name(), "set6");
  EXPECT_EQ(QcRecipe::parse("rank2").name(), "rank2");
  EXPECT_THROW(QcRecipe::parse("set9"), ParseError);
  EXPECT_THROW(QcRecipe::parse("valley"), ParseError);
  EXPECT_TRUE(QcRecipe::preset(8).includes(QcRecipe::preset(3)));
  EXPECT_FALSE(QcRecipe::preset(2).includes(QcRecipe::preset(3)));
}
