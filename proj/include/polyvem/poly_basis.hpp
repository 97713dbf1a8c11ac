#pragma once

#include "quadrature.hpp"

#include <array>
#include <cmath>

namespace polyvem {

// dim P_l in two variables; P_{-1} = {0}.
constexpr int basis_dim(int l) { return l < 0 ? 0 : (l + 1) * (l + 2) / 2; }

struct MultiIndex {
  int a = 0, b = 0;
  int order() const { return a + b; }
};

// Graded lexicographic: 1, x, y, x^2, xy, y^2, ...
inline std::vector<MultiIndex> multi_indices(int l) {
  std::vector<MultiIndex> r;
  for (int d = 0; d <= l; ++d)
    for (int j = 0; j <= d; ++j) r.push_back({d - j, j});
  return r;
}

constexpr int multi_index_position(int a, int b) { return (a + b) * (a + b + 1) / 2 + b; }

// m_alpha(x) = ((x - c)/h)^alpha
struct ScaledMonomials {
  Vec2 center{0, 0};
  double h = 1;
  int degree = 0;

  ScaledMonomials() = default;
  ScaledMonomials(const Vec2& c, double h_, int deg) : center(c), h(h_), degree(deg) {}

  int dim() const { return basis_dim(degree); }

  // d^{dx+dy}/dx^dx dy^dy of every basis function at x.
  Vector eval(const Vec2& x, int dx = 0, int dy = 0) const {
    const int n = degree;
    std::array<double, 32> px{}, py{};
    const double xi = (x.x() - center.x()) / h, eta = (x.y() - center.y()) / h;
    px[0] = py[0] = 1;
    for (int i = 1; i <= n; ++i) {
      px[i] = px[i - 1] * xi;
      py[i] = py[i - 1] * eta;
    }
    const double scale = std::pow(h, -(dx + dy));
    Vector v(dim());
    int k = 0;
    for (int d = 0; d <= n; ++d)
      for (int j = 0; j <= d; ++j, ++k) {
        int a = d - j, b = j;
        if (a < dx || b < dy) {
          v[k] = 0;
          continue;
        }
        double f = 1;
        for (int i = 0; i < dx; ++i) f *= a - i;
        for (int i = 0; i < dy; ++i) f *= b - i;
        v[k] = f * scale * px[a - dx] * py[b - dy];
      }
    return v;
  }

  // Public derivative query limited to |alpha| <= 2.
  Vector eval_basis_derivatives(const MultiIndex& alpha, const Vec2& x) const {
    if (alpha.a < 0 || alpha.b < 0 || alpha.order() > 2)
      throw Error("derivative order above 2 is not supported");
    return eval(x, alpha.a, alpha.b);
  }
};

// A basis of P_degree written as rows of T against scaled monomials:
// b_i = sum_j T(i,j) m_j. T is lower triangular, so the leading basis_dim(l)
// functions span P_l.
struct PolyBasis {
  ScaledMonomials mono;
  Matrix T;

  PolyBasis() = default;
  explicit PolyBasis(const ScaledMonomials& m) : mono(m), T(Matrix::Identity(m.dim(), m.dim())) {}
  PolyBasis(const ScaledMonomials& m, Matrix t) : mono(m), T(std::move(t)) {}

  int degree() const { return mono.degree; }
  int dim() const { return mono.dim(); }
  Vector eval(const Vec2& x, int dx = 0, int dy = 0) const { return T * mono.eval(x, dx, dy); }

  // Rows = points, columns = basis functions.
  Matrix values(const std::vector<Vec2>& pts, int dx = 0, int dy = 0) const {
    Matrix V(pts.size(), dim());
    for (size_t i = 0; i < pts.size(); ++i) V.row(i) = eval(pts[i], dx, dy).transpose();
    return V;
  }
  double eval_poly(const Vector& coef, const Vec2& x, int dx = 0, int dy = 0) const {
    return coef.dot(eval(x, dx, dy).head(coef.size()));
  }
};

inline Matrix gram_matrix(const PolyBasis& b, const QuadRule2D& q) {
  Matrix V = b.values(q.pts);
  Eigen::Map<const Vector> w(q.w.data(), q.size());
  return V.transpose() * w.asDiagonal() * V;
}

// L2(P) projection of f onto the basis; returns coefficients.
template <class F>
Vector l2_project(const F& f, const std::vector<Vec2>& polygon, const PolyBasis& b, int extra_degree = 4) {
  QuadRule2D q = polygon_rule(polygon, 2 * b.degree() + extra_degree);
  Matrix V = b.values(q.pts);
  Vector rhs = Vector::Zero(b.dim());
  for (int i = 0; i < q.size(); ++i) rhs += q.w[i] * f(q.pts[i]) * V.row(i).transpose();
  Eigen::Map<const Vector> w(q.w.data(), q.size());
  Matrix G = V.transpose() * w.asDiagonal() * V;
  return G.ldlt().solve(rhs);
}

// Orthonormalizes monomials on P by Cholesky of the Gram matrix. With
// `normalized` the inner product is (1/|P|) int_P, so the constant is 1.
inline PolyBasis orthogonalize_basis(const std::vector<Vec2>& polygon, const ScaledMonomials& m,
                                     bool normalized = false) {
  QuadRule2D q = polygon_rule(polygon, 2 * m.degree);
  Matrix G = gram_matrix(PolyBasis(m), q);
  if (normalized) G /= polygon_signed_area(polygon);
  Eigen::LLT<Matrix> llt(G);
  if (llt.info() != Eigen::Success) throw Error("Gram matrix is not positive definite");
  Matrix L = llt.matrixL();
  Matrix T = L.triangularView<Eigen::Lower>().solve(Matrix::Identity(m.dim(), m.dim()));
  return PolyBasis(m, T);
}

// 1D basis on t in [-1/2,1/2]: t^j, or Legendre polynomials normalized so
// that int_{-1/2}^{1/2} q_i q_j dt = delta_ij.
inline void edge_basis(double t, int n, bool orthogonal, double* out, double* dout = nullptr) {
  if (n <= 0) return;
  if (!orthogonal) {
    double p = 1;
    for (int j = 0; j < n; ++j) {
      if (dout) dout[j] = j == 0 ? 0.0 : j * std::pow(t, j - 1);
      out[j] = p;
      p *= t;
    }
    return;
  }
  double s = 2 * t, p0 = 1, p1 = s, d0 = 0, d1 = 1;
  for (int j = 0; j < n; ++j) {
    double pj, dj;
    if (j == 0) {
      pj = 1, dj = 0;
    } else if (j == 1) {
      pj = s, dj = 1;
    } else {
      double p2 = ((2 * j - 1) * s * p1 - (j - 1) * p0) / j;
      double d2 = d0 + (2 * j - 1) * p1;
      p0 = p1, p1 = p2, d0 = d1, d1 = d2;
      pj = p2, dj = d2;
    }
    out[j] = std::sqrt(2.0 * j + 1) * pj;
    if (dout) dout[j] = std::sqrt(2.0 * j + 1) * dj * 2;
  }
}

}  // namespace polyvem
