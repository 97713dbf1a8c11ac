#include <gtest/gtest.h>

#include <polyvem/la_core.hpp>

#include <Eigen/IterativeLinearSolvers>

#include <random>

using namespace polyvem;

namespace {

// 1D Laplacian plus a diagonal shift: SPD and tridiagonal.
SparseMatrix spd_matrix(int n) {
  std::vector<Triplet> t;
  for (int i = 0; i < n; ++i) {
    t.emplace_back(i, i, 2.5);
    if (i > 0) t.emplace_back(i, i - 1, -1);
    if (i + 1 < n) t.emplace_back(i, i + 1, -1);
  }
  return assemble(n, n, t);
}

}  // namespace

TEST(LaCore, AssemblySumsDuplicates) {
  SparseMatrix A = assemble(2, 2, {{0, 0, 1.0}, {0, 0, 2.0}, {1, 0, -1.0}});
  EXPECT_DOUBLE_EQ(A.coeff(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(A.coeff(1, 0), -1.0);
  EXPECT_THROW(assemble(2, 2, {{2, 0, 1.0}}), Error);
  EXPECT_THROW(assemble(2, 2, {{0, -1, 1.0}}), Error);
}

TEST(LaCore, DirectSolveMatchesConjugateGradient) {
  const int n = 200;
  SparseMatrix A = spd_matrix(n);
  Vector b = Vector::LinSpaced(n, -1, 2);
  Vector x = solve_direct(A, b);
  Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper> cg;
  cg.setTolerance(1e-14);
  cg.compute(A);
  Vector y = cg.solve(b);
  EXPECT_LT((x - y).norm() / y.norm(), 1e-8);
  EXPECT_LT((A * x - b).norm(), 1e-12);
  SpdSolver chol(A);
  EXPECT_LT((chol.solve(b) - x).norm(), 1e-12);
}

TEST(LaCore, SingularMatrixReportsPivot) {
  SparseMatrix A = assemble(3, 3, {{0, 0, 1.0}, {1, 1, 1.0}, {2, 0, 1.0}});
  try {
    solve_direct(A, Vector::Ones(3));
    FAIL();
  } catch (const SolveError& e) {
    EXPECT_EQ(e.pivot, 2);
  }
  // Numerically singular: two equal rows.
  SparseMatrix B = assemble(2, 2, {{0, 0, 1.0}, {0, 1, 2.0}, {1, 0, 1.0}, {1, 1, 2.0}});
  try {
    solve_direct(B, Vector::Ones(2));
    FAIL();
  } catch (const SolveError& e) {
    EXPECT_GE(e.pivot, 0);
  }
}

TEST(LaCore, NewtonQuadratic) {
  auto F = [](const Vector& x) { return Vector::Constant(1, x[0] * x[0] - 4); };
  auto J = [](const Vector& x) { return assemble(1, 1, {{0, 0, 2 * x[0]}}); };
  auto r = newton_solve(F, J, Vector::Constant(1, 3.0));
  EXPECT_TRUE(r.converged);
  EXPECT_LE(r.iterations, 6);
  EXPECT_NEAR(r.x[0], 2.0, 1e-10);
}

TEST(LaCore, NewtonDampingRescuesArctan) {
  // Undamped Newton on atan(x) from x0=2 diverges.
  auto F = [](const Vector& x) { return Vector::Constant(1, std::atan(x[0])); };
  auto J = [](const Vector& x) { return assemble(1, 1, {{0, 0, 1 / (1 + x[0] * x[0])}}); };
  NewtonSettings s;
  s.tol = 1e-12;
  auto r = newton_solve(F, J, Vector::Constant(1, 2.0), s);
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.x[0], 0.0, 1e-10);
  s.max_halvings = 0;
  s.max_iter = 6;
  EXPECT_FALSE(newton_solve(F, J, Vector::Constant(1, 2.0), s).converged);
}

TEST(LaCore, ConstraintEliminationMatchesDense) {
  const int n = 12;
  SparseMatrix A = spd_matrix(n);
  Vector b = Vector::LinSpaced(n, 0, 1);
  std::vector<int> fixed = {0, 5, 11};
  Vector g = Vector::Zero(n);
  g[0] = 1.5, g[5] = -0.25, g[11] = 2;
  ConstraintMap cm(n, fixed);
  Vector x = solve_constrained(A, b, cm, g);
  // Dense oracle: replace constrained rows by identity rows.
  Matrix D = Matrix(A);
  Vector rhs = b;
  for (int c : fixed) {
    D.row(c).setZero();
    D(c, c) = 1;
    rhs[c] = g[c];
  }
  Vector y = D.lu().solve(rhs);
  EXPECT_LT((x - y).norm(), 1e-12);
  // The reduced matrix stays symmetric.
  SparseMatrix R = cm.reduce(A);
  EXPECT_LT((Matrix(R) - Matrix(R).transpose()).norm(), 1e-15);
}

TEST(LaCore, PatternAssemblerMatchesTriplets) {
  std::vector<std::vector<int>> cells = {{0, 1, 2}, {2, 3, 4, 1}, {4, 5, 0}};
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  PatternAssembler pa(6, cells);
  SparseMatrix A = pa.zero();
  std::vector<Triplet> t;
  for (size_t c = 0; c < cells.size(); ++c) {
    Matrix L(cells[c].size(), cells[c].size());
    for (int i = 0; i < L.size(); ++i) L.data()[i] = u(rng);
    pa.add(A, static_cast<int>(c), L);
    scatter(t, cells[c], L);
  }
  SparseMatrix B = assemble(6, 6, t);
  EXPECT_LT((Matrix(A) - Matrix(B)).norm(), 1e-14);
  pa.add(A, B, -1.0);
  EXPECT_LT(Matrix(A).norm(), 1e-14);
}
