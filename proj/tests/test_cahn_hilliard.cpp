#include <gtest/gtest.h>

#include <polyvem/cahn_hilliard.hpp>

#include <numbers>

using namespace polyvem;

TEST(CahnHilliard, ConstantStateIsSteady) {
  auto m = generate_voronoi(30, 3, 5);
  CahnHilliard ch(m);
  Vector full = Vector::Zero(3 * m.num_vertices());
  for (int v = 0; v < m.num_vertices(); ++v) full[3 * v] = 0.3;
  Vector u = ch.restrict(full);
  CHStepInfo info;
  Vector u1 = ch.step(u, ch.settings().dt, nullptr, &info);
  EXPECT_LT((u1 - u).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE(info.newton_iterations, 1);
}

TEST(CahnHilliard, RejectsBadSettings) {
  auto m = generate_structured_quads(2);
  CHSettings s;
  s.gamma = 0;
  EXPECT_THROW(CahnHilliard(m, s), ConfigError);
  s.gamma = 0.1;
  s.dt = -1;
  EXPECT_THROW(CahnHilliard(m, s), ConfigError);
}

TEST(CahnHilliard, GlobalJacobianMatchesFiniteDifferences) {
  auto m = generate_voronoi(10, 4, 3);
  CahnHilliard ch(m);
  Vector u = spinodal_initial(ch, 8), uo = spinodal_initial(ch, 9);
  Vector F = Vector::Zero(ch.num_free());
  const double dt = 1e-3, h = 1e-6;
  SparseMatrix J = ch.jacobian(u, dt);
  Matrix Jd = Matrix(J), Jfd(ch.num_free(), ch.num_free());
  for (int j = 0; j < ch.num_free(); ++j) {
    Vector up = u, um = u;
    up[j] += h;
    um[j] -= h;
    Jfd.col(j) = (ch.residual(up, uo, F, dt) - ch.residual(um, uo, F, dt)) / (2 * h);
  }
  EXPECT_LT((Jd - Jfd).cwiseAbs().maxCoeff(), 1e-5 * Jd.cwiseAbs().maxCoeff());
}

TEST(CahnHilliard, ManufacturedLoadMatchesFiniteDifferences) {
  // f = u_t - lap(u^3 - u) + gamma^2 lap^2 u by finite differences of u
  const double g = 0.1, t = 0.07, h = 1e-3;
  auto f = ch_manufactured_load(g);
  auto U = [&](double x, double y) { return ch_exact(t).value(Vec2(x, y)); };
  auto phi = [&](double x, double y) { double u = U(x, y); return u * u * u - u; };
  auto lap = [&](auto&& w, double x, double y) {
    return (w(x + h, y) + w(x - h, y) + w(x, y + h) + w(x, y - h) - 4 * w(x, y)) / (h * h);
  };
  for (Vec2 x : {Vec2(0.21, 0.33), Vec2(0.6, 0.85)}) {
    auto lapU = [&](double a, double b) { return lap(U, a, b); };
    double ut = std::cos(2 * std::numbers::pi * x.x()) * std::cos(2 * std::numbers::pi * x.y());
    double fd = ut - lap(phi, x.x(), x.y()) + g * g * lap(lapU, x.x(), x.y());
    EXPECT_NEAR(fd, f(x, t), 2e-3 * std::max(1.0, std::abs(f(x, t))));
  }
}

TEST(CahnHilliard, ManufacturedStepConvergesQuickly) {
  auto m = generate_structured_quads(16);
  CahnHilliard ch(m);
  auto f = ch_manufactured_load(0.1);
  Vector u = ch.restrict(interpolate_c1(m, ch_exact(0.05)));
  CHStepInfo info;
  ch.step(u, 0.05 + ch.settings().dt, f, &info);
  EXPECT_LE(info.newton_iterations, 8);
  EXPECT_FALSE(info.halved);
}

TEST(CahnHilliard, IterativeSolvePathMatchesDirect) {
  auto m = generate_structured_quads(12);
  CHSettings a, b;
  b.direct_limit = 0;
  CahnHilliard ca(m, a), cb(m, b);
  auto f = ch_manufactured_load(0.1);
  Vector ua = ca.restrict(interpolate_c1(m, ch_exact(0.02))), ub = ua;
  for (int i = 1; i <= 5; ++i) {
    CHStepInfo ia, ib;
    ua = ca.step(ua, 0.02 + i * 1e-4, f, &ia);
    ub = cb.step(ub, 0.02 + i * 1e-4, f, &ib);
    EXPECT_GT(ib.krylov_iterations, 0);
  }
  EXPECT_LT((ua - ub).cwiseAbs().maxCoeff(), 1e-9 * ua.cwiseAbs().maxCoeff());
}

TEST(CahnHilliard, SpinodalMassNewtonAndEnergy) {
  auto m = generate_voronoi(64, 1, 10);
  CahnHilliard ch(m);
  double m0 = 0, prev_d = 0, prev_n = 0, lo = 0, hi = 0;
  int max_newton = 0;
  std::vector<double> masses;
  run_spinodal(ch, 200, 42, [&](const SpinodalFrame& fr) {
    if (fr.step == 0) {
      m0 = fr.mass;
    } else {
      EXPECT_LE(std::abs(fr.mass - masses.back()), 1e-10);
      EXPECT_LE(fr.energy_delta, prev_d + 1e-8) << fr.step;
      EXPECT_LE(fr.energy_nabla, prev_n + 1e-8) << fr.step;
    }
    masses.push_back(fr.mass);
    prev_d = fr.energy_delta;
    prev_n = fr.energy_nabla;
    lo = std::min(lo, fr.umin);
    hi = std::max(hi, fr.umax);
    max_newton = std::max(max_newton, fr.newton_iterations);
  });
  EXPECT_LE(std::abs(masses.back() - m0), 1e-8);
  EXPECT_LE(max_newton, 10);
  EXPECT_GE(lo, -1.5);
  EXPECT_LE(hi, 1.5);
}

TEST(CahnHilliard, SpinodalIsDeterministic) {
  auto m = generate_voronoi(40, 2, 5);
  Vector a, b;
  for (Vector* out : {&a, &b}) {
    CahnHilliard ch(m);
    run_spinodal(ch, 10, 7, [&](const SpinodalFrame& fr) { *out = fr.u; });
  }
  EXPECT_EQ(a, b);
}

TEST(CahnHilliard, SnapshotFormat) {
  auto m = generate_structured_quads(2);
  CahnHilliard ch(m);
  Vector u = spinodal_initial(ch, 1);
  auto file = std::filesystem::temp_directory_path() / "polyvem_snapshot_test.txt";
  write_snapshot(file, ch, u);
  std::ifstream is(file);
  std::string header;
  std::getline(is, header);
  EXPECT_EQ(header, "# x y u");
  int lines = 0;
  double x, y, v;
  while (is >> x >> y >> v) ++lines;
  EXPECT_EQ(lines, m.num_vertices());
  std::filesystem::remove(file);
}

TEST(CahnHilliard, ManufacturedErrorsDecrease) {
  // Short horizon so the test stays fast; full rates are in the acceptance run.
  std::vector<double> l2, h1, h2;
  for (int n : {8, 16, 32}) {
    auto e = run_manufactured(generate_structured_quads(n), 0.1, 1e-3, 0.02);
    l2.push_back(e.l2);
    h1.push_back(e.h1);
    h2.push_back(e.h2);
  }
  for (int i = 1; i < 3; ++i) {
    EXPECT_GT(std::log2(l2[i - 1] / l2[i]), 1.8);
    EXPECT_GT(std::log2(h1[i - 1] / h1[i]), 1.8);
    EXPECT_GT(std::log2(h2[i - 1] / h2[i]), 0.9);
  }
}
