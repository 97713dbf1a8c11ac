#pragma once

#include "mesh.hpp"
#include "poly_basis.hpp"

#include <map>

namespace polyvem {

// An edge seen from a cell, parametrized in its global orientation:
// x(t) = midpoint + t |e| tau, t in [-1/2, 1/2].
struct LocalEdge {
  Vec2 a, b;             // global start and end
  int va = 0, vb = 0;    // local vertex indices of a and b
  double length = 0;
  Vec2 tau, normal;      // global tangent and normal (tau rotated clockwise)
  double sign = 1;       // +1 if `normal` points out of the cell
  Vec2 point(double t) const { return 0.5 * (a + b) + t * length * tau; }
  Vec2 outward() const { return sign * normal; }
};

struct CellContext {
  CellGeometry geo;
  std::vector<LocalEdge> edges;  // edge i joins local vertices i and i+1
  std::vector<double> hV;        // vertex scaling lengths
  mutable std::map<int, QuadRule2D> quad_cache;

  int nv() const { return geo.size(); }

  const QuadRule2D& quad(int deg) const {
    auto it = quad_cache.find(deg);
    if (it == quad_cache.end()) it = quad_cache.emplace(deg, polygon_rule(geo.vertices, deg)).first;
    return it->second;
  }

  // Standalone polygon: global orientation follows the CCW traversal and
  // h_V equals the diameter.
  static CellContext from_polygon(const std::vector<Vec2>& poly) {
    CellContext c;
    c.geo = CellGeometry::from_polygon(poly);
    c.hV.assign(poly.size(), c.geo.diameter);
    std::vector<char> rev(poly.size(), 0);
    c.build_edges(rev);
    return c;
  }

  static CellContext from_mesh(const PolygonalMesh& m, int cell, double hv_scale = 1.0) {
    CellContext c;
    c.geo = CellGeometry::from_mesh(m, cell);
    for (int v : m.cells[cell]) c.hV.push_back(hv_scale * m.vertex_h[v]);
    std::vector<char> rev;
    for (auto& ce : m.cell_edges[cell]) rev.push_back(ce.reversed);
    c.build_edges(rev);
    return c;
  }

 private:
  void build_edges(const std::vector<char>& rev) {
    const int n = nv();
    edges.resize(n);
    for (int i = 0; i < n; ++i) {
      LocalEdge& e = edges[i];
      int i1 = (i + 1) % n;
      if (!rev[i]) {
        e.va = i, e.vb = i1, e.sign = 1;
      } else {
        e.va = i1, e.vb = i, e.sign = -1;
      }
      e.a = geo.vertices[e.va];
      e.b = geo.vertices[e.vb];
      e.length = (e.b - e.a).norm();
      e.tau = (e.b - e.a) / e.length;
      e.normal = Vec2(e.tau.y(), -e.tau.x());
    }
  }
};

// Reconstruction of a 1D polynomial of degree d in t from derivatives (in t)
// up to `order` at t = -1/2 and t = +1/2, followed by moments against the
// edge basis q_0..q_{nm-1}. Rows of the result map the condition vector to
// the coefficients of 1, t, ..., t^d.
inline Matrix edge_trace_map(int d, int order, int n_moments, bool orthogonal) {
  const int nc = 2 * (order + 1) + n_moments;
  if (nc != d + 1) throw Error("edge trace conditions do not match the degree");
  Matrix A = Matrix::Zero(nc, d + 1);
  int row = 0;
  for (double t0 : {-0.5, 0.5})
    for (int r = 0; r <= order; ++r, ++row)
      for (int j = r; j <= d; ++j) {
        double f = 1;
        for (int s = 0; s < r; ++s) f *= j - s;
        A(row, j) = f * std::pow(t0, j - r);
      }
  if (n_moments > 0) {
    const auto& g = gauss_legendre(d + n_moments);
    std::vector<double> q(n_moments);
    for (size_t k = 0; k < g.x.size(); ++k) {
      double t = 0.5 * g.x[k], w = 0.5 * g.w[k];
      edge_basis(t, n_moments, orthogonal, q.data());
      for (int m = 0; m < n_moments; ++m)
        for (int j = 0; j <= d; ++j) A(row + m, j) += w * q[m] * std::pow(t, j);
    }
  }
  return A.inverse();
}

// Row vector of t^j and its t-derivative.
inline Eigen::RowVectorXd tpow(double t, int d, int deriv = 0) {
  Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(d + 1);
  for (int j = deriv; j <= d; ++j) {
    double f = 1;
    for (int s = 0; s < deriv; ++s) f *= j - s;
    r[j] = f * std::pow(t, j - deriv);
  }
  return r;
}

// Builds the polynomial basis of a cell: scaled monomials about the centroid
// with h = diameter, optionally orthonormalized for (1/|P|) int_P.
inline PolyBasis make_cell_basis(const CellContext& ctx, int degree, bool orthogonal) {
  ScaledMonomials m(ctx.geo.centroid, ctx.geo.diameter, degree);
  if (!orthogonal) return PolyBasis(m);
  return orthogonalize_basis(ctx.geo.vertices, m, true);
}

// Integrals int_P b_i b_j and int_P b_i g_j for value matrices at quad points.
inline Matrix weighted_product(const Matrix& A, const QuadRule2D& q, const Matrix& B) {
  Eigen::Map<const Vector> w(q.w.data(), q.size());
  return A.transpose() * w.asDiagonal() * B;
}

}  // namespace polyvem
