#include <gtest/gtest.h>

#include <polyvem/vem_h1.hpp>
#include <polyvem/vem_poly.hpp>

#include <array>
#include <numbers>
#include <random>

using namespace polyvem;

namespace {

std::vector<std::vector<Vec2>> test_polygons() {
  std::vector<Vec2> hex;
  for (int i = 0; i < 6; ++i)
    hex.push_back(Vec2(0.3 + 0.2 * std::cos(i * std::numbers::pi / 3 + 0.1), 0.4 + 0.25 * std::sin(i * std::numbers::pi / 3 + 0.1)));
  std::vector<Vec2> oct = {{0.5, 0}, {0.65, 0.35}, {1, 0.5}, {0.65, 0.65}, {0.5, 1}, {0.35, 0.65}, {0, 0.5}, {0.35, 0.35}};
  return {{{0, 0}, {1, 0}, {0, 1}}, {{0.1, 0.0}, {1.2, 0.1}, {1.0, 0.9}, {-0.1, 1.1}}, hex, oct};
}

std::vector<PolygonalMesh> families() {
  return {generate_structured_quads(4), generate_randomized_quads(4, 0.2, 3), generate_hexagonal(4),
          generate_nonconvex_octagons(1), generate_voronoi(16, 5, 10)};
}

template <int P>
void check_local(int r) {
  for (const auto& poly : test_polygons())
    for (bool ortho : {false, true}) {
      PolyharmonicElement<P> el(CellContext::from_polygon(poly), r, ortho);
      const int nr = basis_dim(r);
      Matrix Pi = el.pi(), D = el.D();
      EXPECT_LT((Pi * D - Matrix::Identity(nr, nr)).cwiseAbs().maxCoeff(), 1e-10) << P << r;
      Matrix DP = D * Pi;
      EXPECT_LT((DP * DP - DP).cwiseAbs().maxCoeff(), 1e-11) << P << r;
      EXPECT_LT((el.B() * D - el.G()).cwiseAbs().maxCoeff(), 1e-10 * el.G().cwiseAbs().maxCoeff());
      Matrix K = el.stiffness();
      EXPECT_LT((K - K.transpose()).cwiseAbs().maxCoeff(), 1e-12 * K.cwiseAbs().maxCoeff());
      Eigen::SelfAdjointEigenSolver<Matrix> es(K);
      const int kd = PolyharmonicElement<P>::vertex_dofs;
      EXPECT_GT(es.eigenvalues()[0], -1e-11 * K.cwiseAbs().maxCoeff());
      EXPECT_LT(std::abs(es.eigenvalues()[kd - 1]), 1e-10 * K.cwiseAbs().maxCoeff());
      EXPECT_GT(es.eigenvalues()[kd], 1e-8 * K.cwiseAbs().maxCoeff());
    }
}

// Polynomial of degree r with its derivatives; used for patch tests.
struct PatchPoly {
  ScalarField u;
  std::function<double(const Vec2&)> f;
};

PatchPoly patch_poly(int P, int r) {
  PatchPoly p;
  switch (r) {
    case 1:  // 1 + 2x - y
      p.u.value = [](const Vec2& x) { return 1 + 2 * x.x() - x.y(); };
      p.u.grad = [](const Vec2&) { return Vec2(2, -1); };
      p.u.hess = [](const Vec2&) { return Eigen::Matrix2d::Zero().eval(); };
      p.f = [](const Vec2&) { return 0.0; };
      break;
    case 2:  // x^2 + xy - y
      p.u.value = [](const Vec2& x) { return x.x() * x.x() + x.x() * x.y() - x.y(); };
      p.u.grad = [](const Vec2& x) { return Vec2(2 * x.x() + x.y(), x.x() - 1); };
      p.u.hess = [](const Vec2&) { return (Eigen::Matrix2d() << 2, 1, 1, 0).finished(); };
      p.f = [](const Vec2&) { return -2.0; };
      break;
    case 3:  // x^3 + x^2 y + y
      p.u.value = [](const Vec2& x) { return std::pow(x.x(), 3) + x.x() * x.x() * x.y() + x.y(); };
      p.u.grad = [](const Vec2& x) { return Vec2(3 * x.x() * x.x() + 2 * x.x() * x.y(), x.x() * x.x() + 1); };
      p.u.hess = [](const Vec2& x) {
        return (Eigen::Matrix2d() << 6 * x.x() + 2 * x.y(), 2 * x.x(), 2 * x.x(), 0).finished();
      };
      p.f = [](const Vec2& x) { return -(6 * x.x() + 2 * x.y()); };
      break;
    default:  // x^4 + x^2 y^2 + y
      p.u.value = [](const Vec2& x) { return std::pow(x.x(), 4) + std::pow(x.x() * x.y(), 2) + x.y(); };
      p.u.grad = [](const Vec2& x) {
        return Vec2(4 * std::pow(x.x(), 3) + 2 * x.x() * x.y() * x.y(), 2 * x.x() * x.x() * x.y() + 1);
      };
      p.u.hess = [](const Vec2& x) {
        double a = 12 * x.x() * x.x() + 2 * x.y() * x.y(), b = 4 * x.x() * x.y(), c = 2 * x.x() * x.x();
        return (Eigen::Matrix2d() << a, b, b, c).finished();
      };
      p.f = [](const Vec2& x) { return -(14 * x.x() * x.x() + 2 * x.y() * x.y()); };
      break;
  }
  if (P == 2) {
    // bilaplacian: 0 for degree <= 3, 24 + 8 for x^4 + x^2 y^2
    p.f = [r](const Vec2&) { return r == 4 ? 32.0 : 0.0; };
  }
  return p;
}

}  // namespace

TEST(VemPoly, DofCounts) {
  auto ctx = CellContext::from_polygon({{0, 0}, {1, 0}, {1, 1}, {0, 1}});
  EXPECT_EQ(PolyharmonicElement<1>(ctx, 1).ndof(), 4);
  EXPECT_EQ(PolyharmonicElement<1>(ctx, 2).ndof(), 9);
  EXPECT_EQ(PolyharmonicElement<2>(ctx, 3).ndof(), 16);
  EXPECT_EQ(PolyharmonicElement<2>(ctx, 4).ndof(), 25);
  EXPECT_THROW(PolyharmonicElement<2>(ctx, 2), ConfigError);
  EXPECT_THROW(PolyharmonicElement<1>(ctx, 3), ConfigError);
  auto m = generate_hexagonal(3);
  PolyDofMap<2> dm(m, 4);
  EXPECT_EQ(dm.ndof, 3 * m.num_vertices() + 3 * m.num_edges() + m.num_cells());
}

TEST(VemPoly, LocalProjectorAndForm) {
  check_local<1>(1);
  check_local<1>(2);
  check_local<2>(3);
  check_local<2>(4);
}

TEST(VemPoly, MatchesH1ElementForLinear) {
  for (const auto& poly : test_polygons()) {
    auto ctx = CellContext::from_polygon(poly);
    PolyharmonicElement<1> p(ctx, 1);
    H1Element h(ctx, 1);
    EXPECT_LT((p.pi() - h.pi_nabla()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((p.stiffness() - h.stiffness()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(VemPoly, ReproducesCubic) {
  // x^2 y from its dofs, r = 3
  ScalarField q;
  q.value = [](const Vec2& x) { return x.x() * x.x() * x.y(); };
  q.grad = [](const Vec2& x) { return Vec2(2 * x.x() * x.y(), x.x() * x.x()); };
  for (const auto& poly : test_polygons()) {
    PolyharmonicElement<2> el(CellContext::from_polygon(poly), 3);
    Vector c = el.pi() * el.interpolate(q);
    Vec2 x = el.context().geo.centroid + Vec2(0.05, 0.02);
    EXPECT_NEAR(el.basis().eval_poly(c, x), q(x), 1e-10);
  }
}

TEST(VemPoly, LoadTerm) {
  auto ctx = CellContext::from_polygon(test_polygons()[3]);
  PolyharmonicElement<1> e1(ctx, 1);
  EXPECT_NEAR(e1.load([](const Vec2&) { return 2.0; }).sum(), 2.0 * ctx.geo.area, 1e-13);
  EXPECT_EQ(e1.load([](const Vec2&) { return 0.0; }).norm(), 0.0);
  // f in P_{r-P}, v = q in P_r: exact int f q
  auto check = [&](auto& el, auto f) {
    const auto& q = ctx.quad(12);
    const int nr = basis_dim(el.degree());
    Vector Lf = el.load(f);
    for (int a = 0; a < nr; ++a) {
      double ex = 0;
      for (int p = 0; p < q.size(); ++p) ex += q.w[p] * f(q.pts[p]) * el.basis().eval(q.pts[p])[a];
      EXPECT_NEAR(Lf.dot(el.D().col(a)), ex, 1e-11);
    }
  };
  PolyharmonicElement<1> e2(ctx, 2);
  PolyharmonicElement<2> e3(ctx, 3), e4(ctx, 4);
  check(e2, [](const Vec2& x) { return 1 + x.x() - 2 * x.y(); });
  check(e3, [](const Vec2& x) { return 1 + x.x() - 2 * x.y(); });
  check(e4, [](const Vec2& x) { return 1 + x.x() * x.y() - x.y() * x.y(); });
}

template <int P>
void random_consistency(int r) {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> U(-1, 1);
  for (const auto& m : families()) {
    auto els = build_poly_elements<P>(m, r);
    for (int probe = 0; probe < 50; ++probe) {
      const auto& el = els[rng() % els.size()];
      Vector c(basis_dim(r)), v(el.ndof());
      for (auto& x : c) x = U(rng);
      for (auto& x : v) x = U(rng);
      double ah = (el.D() * c).dot(el.stiffness() * v), a = c.dot(el.B() * v);
      EXPECT_LE(std::abs(ah - a), 1e-10 * std::max(1.0, std::abs(a))) << P << " " << r;
    }
  }
}

TEST(VemPoly, RandomConsistencyProbes) {
  random_consistency<1>(1);
  random_consistency<1>(2);
  random_consistency<2>(3);
  random_consistency<2>(4);
}

TEST(VemPoly, C1ConformityAcrossEdges) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(-1, 1);
  for (const auto& m : families())
    for (int r : {3, 4}) {
      auto els = build_poly_elements<2>(m, r);
      PolyDofMap<2> dm(m, r);
      Vector u(dm.ndof);
      for (auto& x : u) x = U(rng);
      double worst = 0;
      for (int e = 0; e < m.num_edges(); ++e) {
        if (m.edges[e].is_boundary()) continue;
        Eigen::RowVectorXd tr[2], nt[2];
        for (int s = 0; s < 2; ++s) {
          int c = m.edges[e].cell[s];
          int le = 0;
          while (m.cell_edges[c][le].edge != e) ++le;
          Vector d = cell_values(dm, c, u);
          tr[s] = (els[c].value_trace(le) * d).transpose();
          nt[s] = (els[c].normal_trace(le) * d).transpose();
        }
        for (double t : {-0.4, -0.1, 0.2, 0.45}) {
          worst = std::max(worst, std::abs(tpow(t, r).dot(tr[0] - tr[1])));
          worst = std::max(worst, std::abs(tpow(t, r - 1).dot(nt[0] - nt[1])));
        }
      }
      EXPECT_LE(worst, 1e-10);
    }
}

TEST(VemPoly, ZeroSourceGivesZero) {
  PolyharmonicProblem pr;
  pr.exact.value = [](const Vec2&) { return 0.0; };
  pr.exact.grad = [](const Vec2&) { return Vec2(0, 0); };
  pr.source = [](const Vec2&) { return 0.0; };
  auto res = solve_polyharmonic<2>(generate_hexagonal(3), 3, pr);
  EXPECT_EQ(res.u.norm(), 0.0);
}

TEST(VemPoly, PatchTests) {
  for (const auto& m : {generate_randomized_quads(4, 0.2, 1), generate_nonconvex_octagons(1), generate_voronoi(12, 2, 5)}) {
    for (int r : {1, 2}) {
      auto pp = patch_poly(1, r);
      auto res = solve_polyharmonic<1>(m, r, {pp.u, pp.f});
      EXPECT_LT(res.err_l2, 1e-9) << r;
      EXPECT_LT(res.err_h1, 1e-9) << r;
    }
    for (int r : {3, 4}) {
      auto pp = patch_poly(2, r);
      auto res = solve_polyharmonic<2>(m, r, {pp.u, pp.f});
      EXPECT_LT(res.err_l2, 1e-9) << r;
      EXPECT_LT(res.err_h1, 1e-9) << r;
      EXPECT_LT(res.err_h2, 1e-8) << r;
    }
  }
}

TEST(VemPoly, VertexScaleInvariance) {
  auto pr = poly_manufactured(2);
  auto m = generate_randomized_quads(6, 0.2, 4);
  for (int r : {3, 4}) {
    auto a = solve_polyharmonic<2>(m, r, pr, 1.0);
    auto b = solve_polyharmonic<2>(m, r, pr, 2.5);
    PolyDofMap<2> dm(m, r);
    // Same function: vertex values and edge/interior moments agree, gradient
    // dofs scale with h_V.
    for (int v = 0; v < m.num_vertices(); ++v) {
      EXPECT_NEAR(a.u[3 * v], b.u[3 * v], 1e-9);
      EXPECT_NEAR(2.5 * a.u[3 * v + 1], b.u[3 * v + 1], 1e-9);
      EXPECT_NEAR(2.5 * a.u[3 * v + 2], b.u[3 * v + 2], 1e-9);
    }
    for (int i = 3 * m.num_vertices(); i < dm.ndof; ++i) EXPECT_NEAR(a.u[i], b.u[i], 1e-9);
    EXPECT_NEAR(a.err_h2, b.err_h2, 1e-9);
  }
}

TEST(VemPoly, ManufacturedSourceMatchesFiniteDifferences) {
  // 13-point bilaplacian stencil on the exact solution
  auto pr = poly_manufactured(2);
  const double h = 1e-2;
  for (Vec2 x : {Vec2(0.3, 0.6), Vec2(0.71, 0.22)}) {
    auto u = [&](double dx, double dy) { return pr.exact.value(x + Vec2(dx * h, dy * h)); };
    double s = 20 * u(0, 0) - 8 * (u(1, 0) + u(-1, 0) + u(0, 1) + u(0, -1)) +
               2 * (u(1, 1) + u(1, -1) + u(-1, 1) + u(-1, -1)) + u(2, 0) + u(-2, 0) + u(0, 2) + u(0, -2);
    double fd = s / std::pow(h, 4);
    EXPECT_NEAR(fd, pr.source(x), 2e-3 * std::abs(pr.source(x)) + 0.5);
  }
  auto p1 = poly_manufactured(1);
  Vec2 x(0.3, 0.45);
  double hh = 1e-4;
  double lap = (p1.exact.value(x + Vec2(hh, 0)) + p1.exact.value(x - Vec2(hh, 0)) + p1.exact.value(x + Vec2(0, hh)) +
                p1.exact.value(x - Vec2(0, hh)) - 4 * p1.exact.value(x)) / (hh * hh);
  EXPECT_NEAR(-lap, p1.source(x), 1e-4);
}

TEST(VemPoly, ConvergenceRates) {
  auto rates = [](auto tag, int r, int n) {
    constexpr int P = decltype(tag)::value;
    auto pr = poly_manufactured(P);
    auto a = solve_polyharmonic<P>(generate_structured_quads(n), r, pr);
    auto b = solve_polyharmonic<P>(generate_structured_quads(2 * n), r, pr);
    return std::array<double, 3>{std::log2(a.err_l2 / b.err_l2), std::log2(a.err_h1 / b.err_h1),
                                 std::log2(a.err_h2 / b.err_h2)};
  };
  for (int r : {1, 2}) {
    auto q = rates(std::integral_constant<int, 1>{}, r, 16);
    EXPECT_NEAR(q[1], r, 0.1) << r;
    EXPECT_NEAR(q[0], r + 1, 0.1) << r;
  }
  // Biharmonic r = 3: the energy rate is already asymptotic at this size,
  // the lower norms approach r + 1 and r from above.
  auto q = rates(std::integral_constant<int, 2>{}, 3, 16);
  EXPECT_NEAR(q[2], 2, 0.1);
  EXPECT_GT(q[1], 3 - 0.2);
  EXPECT_GT(q[0], 4 - 0.2);
}
