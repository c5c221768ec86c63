#include "latent_imh/linear_map.hpp"
#include "latent_imh/pcg.hpp"
#include "latent_imh/randomized_cholesky.hpp"
#include "latent_imh/reparameterization.hpp"
#include "latent_imh/rng.hpp"

#include <gtest/gtest.h>

using namespace latent_imh;

namespace {

Matrix random_matrix(Rng& rng, Index r, Index c) {
  Matrix m(r, c);
  for (Index j = 0; j < c; ++j) m.col(j) = standard_normal_vector(rng, r);
  return m;
}

Matrix random_spd(Rng& rng, Index n) {
  const Matrix g = random_matrix(rng, n, n);
  Matrix a = g * g.transpose();
  a.diagonal().array() += static_cast<double>(n);
  return a;
}

}  // namespace

TEST(LinearMap, IdentityApply) {
  const auto m = LinearMap::identity(3);
  const Vector x = (Vector(3) << 1, 2, 3).finished();
  EXPECT_EQ(m.apply(x), x);
}

TEST(LinearMap, DiagonalApply) {
  const auto m = LinearMap::diagonal((Vector(2) << 2, 3).finished());
  const Vector out = m.apply(Vector::Ones(2));
  EXPECT_DOUBLE_EQ(out[0], 2.0);
  EXPECT_DOUBLE_EQ(out[1], 3.0);
}

TEST(LinearMap, DimensionMismatchNamesLengths) {
  const auto m = LinearMap::dense(Matrix::Ones(5, 4));
  try {
    m.apply(Vector::Ones(3));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    EXPECT_EQ(e.expected(), 4);
    EXPECT_EQ(e.actual(), 3);
  }
}

TEST(LinearMap, DenseAdjointIdentityOnRandomProbes) {
  Rng rng(11);
  const Matrix a = random_matrix(rng, 5, 4);
  const auto m = LinearMap::dense(a);
  for (int probe = 0; probe < 100; ++probe) {
    const Vector x = standard_normal_vector(rng, 4);
    const Vector y = standard_normal_vector(rng, 5);
    const double lhs = m.apply_transpose(y).dot(x);
    const double rhs = y.dot(a * x);
    EXPECT_NEAR(lhs, rhs, 1e-10 * (1.0 + std::abs(rhs)));
  }
}

TEST(LinearMap, AdjointConsistencyForEveryKind) {
  Rng rng(12);
  const Index n = 6;
  const Matrix q = Eigen::HouseholderQR<Matrix>(random_matrix(rng, n, n)).householderQ();
  const std::vector<LinearMap> maps = {
      LinearMap::dense(random_matrix(rng, n, n)),
      LinearMap::diagonal(standard_normal_vector(rng, n)),
      LinearMap::svd_structured(q, Vector::LinSpaced(n, 1.0, 2.0)),
      LinearMap::composed(LinearMap::dense(random_matrix(rng, n, n)), LinearMap::diagonal(Vector::Ones(n) * 2.0)),
  };
  for (const auto& m : maps) {
    const Matrix dense = m.to_dense();
    for (int probe = 0; probe < 20; ++probe) {
      const Vector x = standard_normal_vector(rng, n);
      const Vector y = standard_normal_vector(rng, n);
      EXPECT_NEAR(m.apply_transpose(y).dot(x), y.dot(dense * x), 1e-10 * (1.0 + y.norm() * x.norm()));
    }
  }
}

TEST(LinearMap, SolveTrivialCases) {
  const Vector b = (Vector(2) << 4, 5).finished();
  EXPECT_EQ(LinearMap::identity(2).solve(b), b);
  const Vector x = LinearMap::diagonal((Vector(2) << 2, 4).finished()).solve((Vector(2) << 2, 4).finished());
  EXPECT_DOUBLE_EQ(x[0], 1.0);
  EXPECT_DOUBLE_EQ(x[1], 1.0);
}

TEST(LinearMap, SolveMatchesDenseCholeskyOracle) {
  Rng rng(13);
  const Matrix a = random_spd(rng, 20);
  const Vector b = standard_normal_vector(rng, 20);
  const Vector x = LinearMap::dense(a).solve(b, SolveSettings{1e-10, 5000});
  const Vector oracle = a.llt().solve(b);
  EXPECT_LE((x - oracle).norm() / oracle.norm(), 1e-8);
}

TEST(LinearMap, NonSquareSolveThrows) {
  EXPECT_THROW(LinearMap::dense(Matrix::Ones(3, 2)).solve(Vector::Ones(3)), std::exception);
}

TEST(LinearMap, SolverBackedIterationCapCarriesResidual) {
  Rng rng(14);
  const Matrix a = random_spd(rng, 30);
  SolverBackedOps ops;
  ops.apply = [a](const Vector& x) { return Vector(a * x); };
  ops.solve = [a](const Vector& b, const SolveSettings& s) {
    PcgSettings p{s.tolerance, s.max_iters, PreconditionerKind::none};
    return pcg_solve([a](const Vector& x) { return Vector(a * x); }, b, {}, p).x;
  };
  const auto m = LinearMap::solver_backed(30, 30, ops);
  try {
    m.solve(standard_normal_vector(rng, 30), SolveSettings{1e-14, 1});
    FAIL() << "expected SolveError";
  } catch (const SolveError& e) {
    EXPECT_GT(e.residual(), 1e-14);
  }
}

TEST(LinearMap, SvdStructuredLogDetAndSolve) {
  Rng rng(15);
  const Matrix q = Eigen::HouseholderQR<Matrix>(random_matrix(rng, 5, 5)).householderQ();
  const Vector s = (Vector(5) << 1, 0.5, 0.25, 2, 3).finished();
  const auto m = LinearMap::svd_structured(q, s);
  EXPECT_NEAR(m.log_abs_det(), s.array().log().sum(), 1e-12);
  const Vector b = standard_normal_vector(rng, 5);
  EXPECT_LE((m.apply(m.solve(b)) - b).norm(), 1e-12 * b.norm());
}

TEST(SolveCounters, IncrementByOnePerCountedCall) {
  SolveCounters c;
  EXPECT_EQ(c.total(), 0u);
  c.forward += 1;
  c.inverse += 1;
  c.forward += 1;
  EXPECT_EQ(c.forward.load(), 2u);
  EXPECT_EQ(c.inverse.load(), 1u);
  EXPECT_EQ(c.total(), 3u);
}

TEST(Pcg, IdentityConvergesInOneIteration) {
  const Vector b = (Vector(4) << 1, -2, 3, 0.5).finished();
  const auto r = pcg_solve([](const Vector& x) { return x; }, b, {}, PcgSettings{1e-12, 100, PreconditionerKind::none});
  EXPECT_EQ(r.iterations, 1);
  EXPECT_LE((r.x - b).norm(), 1e-14);
}

TEST(Pcg, PerfectPreconditionerConvergesWithinTwoIterations) {
  Rng rng(16);
  const Matrix a = random_spd(rng, 40);
  const Eigen::LLT<Matrix> llt(a);
  const auto r = pcg_solve([&a](const Vector& x) { return Vector(a * x); }, standard_normal_vector(rng, 40),
                           [&llt](const Vector& x) { return Vector(llt.solve(x)); },
                           PcgSettings{1e-10, 100, PreconditionerKind::factorization});
  EXPECT_LE(r.iterations, 2);
}

TEST(Pcg, RandomSpdMatchesDenseOracle) {
  Rng rng(17);
  const Matrix a = random_spd(rng, 100);
  const Vector b = standard_normal_vector(rng, 100);
  const double tol = 1e-8;
  const auto r = pcg_solve([&a](const Vector& x) { return Vector(a * x); }, b, {},
                           PcgSettings{tol, 1000, PreconditionerKind::none});
  const Vector oracle = a.llt().solve(b);
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(a);
  const double cond = eig.eigenvalues().maxCoeff() / eig.eigenvalues().minCoeff();
  EXPECT_LE((r.x - oracle).norm() / oracle.norm(), cond * tol);
  EXPECT_LE((a * r.x - b).norm() / b.norm(), tol);
}

TEST(Pcg, MaxItersExceededThrows) {
  Rng rng(18);
  const Matrix a = random_spd(rng, 50);
  EXPECT_THROW(pcg_solve([&a](const Vector& x) { return Vector(a * x); }, standard_normal_vector(rng, 50), {},
                         PcgSettings{1e-14, 2, PreconditionerKind::none}),
               SolveError);
}

TEST(RandomizedCholesky, PreconditionsGridLaplacian) {
  const Index side = 12;
  const Index n = side * side;
  std::vector<Eigen::Triplet<double>> t;
  for (Index i = 0; i < side; ++i) {
    for (Index j = 0; j < side; ++j) {
      const Index c = i * side + j;
      double deg = 0.0;
      auto link = [&](Index o) {
        t.emplace_back(c, o, -1.0);
        deg += 1.0;
      };
      if (i > 0) link(c - side);
      if (i + 1 < side) link(c + side);
      if (j > 0) link(c - 1);
      if (j + 1 < side) link(c + 1);
      t.emplace_back(c, c, deg + 1e-2);
    }
  }
  SparseMatrix l(n, n);
  l.setFromTriplets(t.begin(), t.end());
  const RandomizedCholesky rc(l, 3);
  Rng rng(19);
  const Vector b = standard_normal_vector(rng, n);
  const ApplyFn apply = [&l](const Vector& x) { return Vector(l * x); };
  const auto plain = pcg_solve(apply, b, {}, PcgSettings{1e-10, 10000, PreconditionerKind::none});
  const auto pre = pcg_solve(apply, b, [&rc](const Vector& r) { return rc.apply_inverse(r); },
                             PcgSettings{1e-10, 10000, PreconditionerKind::factorization});
  EXPECT_LT(pre.iterations, plain.iterations);
  EXPECT_LE((l * pre.x - b).norm() / b.norm(), 1e-10);
}

TEST(Reparameterization, CanonicalObservation) {
  Rng rng(20);
  Matrix o = Matrix::Zero(2, 4);
  o(0, 0) = 1.0;
  o(1, 1) = 1.0;
  const auto rep = build_reparameterization(LinearMap::dense(o), LinearMap::dense(random_matrix(rng, 4, 3)));
  for (Index j = 0; j < 2; ++j) {
    EXPECT_NEAR(std::abs(rep.v_y.col(j).dot(Vector::Unit(4, 0))) + std::abs(rep.v_y.col(j).dot(Vector::Unit(4, 1))),
                1.0, 1e-12);
  }
  EXPECT_LE((rep.z * rep.v_x.transpose() - o).norm(), 1e-10);
  EXPECT_LE((rep.v_x.transpose() * rep.v_x - Matrix::Identity(3, 3)).norm(), 1e-10);
  EXPECT_LE((rep.v_x.leftCols(2) - rep.v_y).norm(), 1e-14);
}

TEST(Reparameterization, SquareCaseHasNoAugmentation) {
  Rng rng(21);
  const Matrix o = random_matrix(rng, 3, 6);
  const auto rep = build_reparameterization(LinearMap::dense(o), LinearMap::dense(random_matrix(rng, 6, 3)));
  EXPECT_EQ(rep.v_x.cols(), 3);
  const Eigen::JacobiSVD<Matrix> svd(o, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Matrix us = svd.matrixU() * svd.singularValues().asDiagonal();
  EXPECT_LE((rep.z - o * rep.v_y).norm(), 1e-12);
  EXPECT_LE((rep.z * rep.z.transpose() - us * us.transpose()).norm(), 1e-10);
}

TEST(Reparameterization, EndToEndEquivalence) {
  Rng rng(22);
  const Matrix o = random_matrix(rng, 5, 50);
  const Matrix f_raw = random_matrix(rng, 50, 10);
  const auto rep = build_reparameterization(LinearMap::dense(o), LinearMap::dense(f_raw));
  EXPECT_LE((rep.z * rep.v_x.transpose() - o).norm() / o.norm(), 1e-10);
  const Matrix f = rep.v_x.transpose() * f_raw;
  for (int i = 0; i < 20; ++i) {
    const Vector x = standard_normal_vector(rng, 10);
    const Vector direct = o * (f_raw * x);
    EXPECT_LE((rep.z * (f * x) - direct).norm(), 1e-9 * (1.0 + direct.norm()));
  }
}

TEST(Reparameterization, ErrorsOnRankDeficientOrOversizedObservation) {
  Rng rng(23);
  Matrix o = random_matrix(rng, 3, 8);
  o.row(2) = o.row(1);
  EXPECT_THROW(build_reparameterization(LinearMap::dense(o), LinearMap::dense(random_matrix(rng, 8, 4))),
               SingularOperatorError);
  EXPECT_THROW(build_reparameterization(LinearMap::dense(random_matrix(rng, 5, 8)),
                                        LinearMap::dense(random_matrix(rng, 8, 4))),
               std::invalid_argument);
}

TEST(Reparameterization, DominantChoiceConditionsBetterThanRandom) {
  int wins = 0;
  for (int trial = 0; trial < 10; ++trial) {
    Rng rng(stream_seed(24, trial, "reparam-conditioning"));
    const Index du = 60, dx = 12, dy = 4;
    const Matrix o = random_matrix(rng, dy, du);
    const Matrix f_raw = random_matrix(rng, du, dx);
    const auto rep = build_reparameterization(LinearMap::dense(o), LinearMap::dense(f_raw));
    auto cond = [](const Matrix& m) {
      const Eigen::JacobiSVD<Matrix> s(m);
      return s.singularValues()[0] / s.singularValues()[s.singularValues().size() - 1];
    };
    Matrix proj = random_matrix(rng, du, dx - dy);
    proj -= rep.v_y * (rep.v_y.transpose() * proj);
    const Matrix q = Eigen::HouseholderQR<Matrix>(proj).householderQ() * Matrix::Identity(du, dx - dy);
    Matrix v_rand(du, dx);
    v_rand << rep.v_y, q;
    if (cond(rep.v_x.transpose() * f_raw) <= cond(v_rand.transpose() * f_raw)) ++wins;
  }
  EXPECT_GE(wins, 8);
}

TEST(Reparameterization, DominantChoiceCapturesMostEnergy) {
  for (int trial = 0; trial < 10; ++trial) {
    Rng rng(stream_seed(25, trial, "reparam-energy"));
    const Index du = 60, dx = 12, dy = 4;
    const Matrix o = random_matrix(rng, dy, du);
    const Matrix f_raw = random_matrix(rng, du, dx);
    const auto rep = build_reparameterization(LinearMap::dense(o), LinearMap::dense(f_raw));
    Matrix proj = random_matrix(rng, du, dx - dy);
    proj -= rep.v_y * (rep.v_y.transpose() * proj);
    const Matrix q = Eigen::HouseholderQR<Matrix>(proj).householderQ() * Matrix::Identity(du, dx - dy);
    EXPECT_GE((rep.v_x.rightCols(dx - dy).transpose() * f_raw).norm(), (q.transpose() * f_raw).norm());
  }
}
