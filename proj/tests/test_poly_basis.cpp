#include <gtest/gtest.h>

#include <polyvem/poly_basis.hpp>

#include <cmath>
#include <numbers>

using namespace polyvem;

namespace {

double factorial(int n) { return n <= 1 ? 1.0 : n * factorial(n - 1); }

std::vector<Vec2> unit_square() { return {{0, 0}, {1, 0}, {1, 1}, {0, 1}}; }

std::vector<Vec2> regular_hexagon(double r) {
  std::vector<Vec2> p;
  for (int i = 0; i < 6; ++i) p.push_back(r * Vec2(std::cos(i * std::numbers::pi / 3), std::sin(i * std::numbers::pi / 3)));
  return p;
}

// L-shape [0,2]^2 minus [1,2]^2; its centroid fan is not valid.
std::vector<Vec2> l_shape() { return {{0, 0}, {2, 0}, {2, 1}, {1, 1}, {1, 2}, {0, 2}}; }

double integrate(const QuadRule2D& q, int a, int b) {
  double s = 0;
  for (int i = 0; i < q.size(); ++i) s += q.w[i] * std::pow(q.pts[i].x(), a) * std::pow(q.pts[i].y(), b);
  return s;
}

double rect_moment(double x0, double x1, double y0, double y1, int a, int b) {
  return (std::pow(x1, a + 1) - std::pow(x0, a + 1)) / (a + 1) * (std::pow(y1, b + 1) - std::pow(y0, b + 1)) / (b + 1);
}

}  // namespace

TEST(PolyBasis, Dimensions) {
  EXPECT_EQ(basis_dim(-1), 0);
  EXPECT_EQ(basis_dim(0), 1);
  EXPECT_EQ(basis_dim(1), 3);
  EXPECT_EQ(basis_dim(2), 6);
  EXPECT_EQ(basis_dim(6), 28);
  auto mi = multi_indices(2);
  ASSERT_EQ(mi.size(), 6u);
  int expect[6][2] = {{0, 0}, {1, 0}, {0, 1}, {2, 0}, {1, 1}, {0, 2}};
  for (int i = 0; i < 6; ++i) {
    EXPECT_EQ(mi[i].a, expect[i][0]);
    EXPECT_EQ(mi[i].b, expect[i][1]);
    EXPECT_EQ(multi_index_position(mi[i].a, mi[i].b), i);
  }
}

TEST(PolyBasis, DerivativesMatchFiniteDifferences) {
  ScaledMonomials m(Vec2(0.3, -0.2), 0.7, 5);
  Vec2 x(0.61, 0.17);
  const double s = 1e-6;
  for (int ord = 0; ord < 2; ++ord) {
    for (int dir = 0; dir < 2; ++dir) {
      int dx = ord == 1 ? 1 : 0, dy = 0;
      Vec2 e = dir == 0 ? Vec2(s, 0) : Vec2(0, s);
      Vector fd = (m.eval(x + e, dx, dy) - m.eval(x - e, dx, dy)) / (2 * s);
      Vector ex = m.eval(x, dx + (dir == 0), dy + (dir == 1));
      for (int i = 0; i < m.dim(); ++i) EXPECT_NEAR(fd[i], ex[i], 1e-6 * std::max(1.0, std::abs(ex[i])));
    }
  }
  EXPECT_THROW(m.eval_basis_derivatives({2, 1}, x), Error);
  EXPECT_NO_THROW(m.eval_basis_derivatives({1, 1}, x));
}

TEST(Quadrature, GaussLegendre) {
  for (int n = 1; n <= 12; ++n) {
    const auto& g = gauss_legendre(n);
    for (int d = 0; d <= 2 * n - 1; ++d) {
      double s = 0;
      for (int i = 0; i < n; ++i) s += g.w[i] * std::pow(g.x[i], d);
      double exact = d % 2 ? 0.0 : 2.0 / (d + 1);
      EXPECT_NEAR(s, exact, 1e-14) << n << " " << d;
    }
  }
}

TEST(Quadrature, TriangleExactness) {
  for (int deg = 0; deg <= 12; ++deg) {
    auto q = triangle_rule({0, 0}, {1, 0}, {0, 1}, deg);
    for (int a = 0; a <= deg; ++a)
      for (int b = 0; a + b <= deg; ++b)
        EXPECT_NEAR(integrate(q, a, b), factorial(a) * factorial(b) / factorial(a + b + 2), 1e-15);
  }
}

TEST(Quadrature, PolygonExactness) {
  for (int deg = 0; deg <= 10; ++deg) {
    auto q = polygon_rule(unit_square(), deg);
    auto ql = polygon_rule(l_shape(), deg);
    for (int a = 0; a <= deg; ++a)
      for (int b = 0; a + b <= deg; ++b) {
        EXPECT_NEAR(integrate(q, a, b), 1.0 / ((a + 1) * (b + 1)), 1e-14);
        double lx = rect_moment(0, 2, 0, 1, a, b) + rect_moment(0, 1, 1, 2, a, b);
        EXPECT_NEAR(integrate(ql, a, b), lx, 1e-12 * std::max(1.0, lx));
      }
  }
  EXPECT_NEAR(integrate(polygon_rule(unit_square(), 3), 2, 1), 1.0 / 6.0, 1e-15);
  EXPECT_NEAR(integrate(polygon_rule(regular_hexagon(1), 0), 0, 0), 3 * std::sqrt(3.0) / 2, 1e-14);
}

TEST(Quadrature, RejectsDegeneratePolygons) {
  EXPECT_THROW(polygon_rule({{0, 0}, {1, 0}}, 2), QuadratureError);
  EXPECT_THROW(polygon_rule({{0, 0}, {0, 1}, {1, 0}}, 2), QuadratureError);  // clockwise
}

TEST(Quadrature, SegmentExactness) {
  Vec2 a(0.2, 0.1), b(1.1, 0.7);
  for (int d = 0; d <= 9; ++d) {
    auto q = segment_rule(a, b, d);
    double s = 0;
    for (int i = 0; i < q.size(); ++i) s += q.w[i] * std::pow(((q.pts[i] - a).norm()), d);
    double L = (b - a).norm();
    EXPECT_NEAR(s, std::pow(L, d + 1) / (d + 1), 1e-13);
  }
}

TEST(PolyBasis, L2Projection) {
  ScaledMonomials m0(Vec2(0.5, 0.5), 1.0, 0);
  Vector c = l2_project([](const Vec2& x) { return std::sin(x.x()); }, unit_square(), PolyBasis(m0), 8);
  EXPECT_NEAR(c[0], 1 - std::cos(1.0), 1e-13);
  // Polynomials are reproduced.
  ScaledMonomials m2(Vec2(0.4, 0.6), 0.8, 2);
  auto f = [](const Vec2& x) { return 1 + 2 * x.x() - x.y() + 3 * x.x() * x.y(); };
  Vector c2 = l2_project(f, regular_hexagon(1), PolyBasis(m2));
  Vec2 p(0.1, -0.3);
  EXPECT_NEAR(PolyBasis(m2).eval_poly(c2, p), f(p), 1e-12);
}

TEST(PolyBasis, Orthonormalization) {
  auto hex = regular_hexagon(0.3);
  for (int l = 0; l <= 5; ++l) {
    ScaledMonomials m(polygon_centroid(hex), 0.6, l);
    PolyBasis b = orthogonalize_basis(hex, m);
    Matrix G = gram_matrix(b, polygon_rule(hex, 2 * l));
    EXPECT_LT((G - Matrix::Identity(m.dim(), m.dim())).cwiseAbs().maxCoeff(), 1e-10) << l;
    if (l == 0) EXPECT_NEAR(b.eval(Vec2(0, 0))[0], 1 / std::sqrt(polygon_signed_area(hex)), 1e-13);
  }
  PolyBasis bn = orthogonalize_basis(hex, ScaledMonomials(Vec2(0, 0), 0.6, 3), true);
  EXPECT_NEAR(bn.eval(Vec2(0.05, 0.1))[0], 1.0, 1e-13);
}

TEST(PolyBasis, EdgeLegendreOrthonormal) {
  const auto& g = gauss_legendre(10);
  Matrix G = Matrix::Zero(6, 6);
  double v[6], d[6];
  for (size_t i = 0; i < g.x.size(); ++i) {
    double t = 0.5 * g.x[i];
    edge_basis(t, 6, true, v, d);
    for (int a = 0; a < 6; ++a)
      for (int b = 0; b < 6; ++b) G(a, b) += 0.5 * g.w[i] * v[a] * v[b];
  }
  EXPECT_LT((G - Matrix::Identity(6, 6)).cwiseAbs().maxCoeff(), 1e-13);
  // derivative against finite differences
  double vp[6], vm[6];
  edge_basis(0.2 + 1e-6, 6, true, vp);
  edge_basis(0.2 - 1e-6, 6, true, vm);
  edge_basis(0.2, 6, true, v, d);
  for (int j = 0; j < 6; ++j) EXPECT_NEAR((vp[j] - vm[j]) / 2e-6, d[j], 1e-6 * std::max(1.0, std::abs(d[j])));
}
