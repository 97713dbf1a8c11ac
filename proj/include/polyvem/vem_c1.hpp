#pragma once

#include "cell_context.hpp"
#include "fields.hpp"
#include "la_core.hpp"

#include <optional>

namespace polyvem {

// Reduced C1 virtual element with dofs (v, h_V v_x, h_V v_y) at each vertex.
// Traces: v|e cubic Hermite, dn v|e linear. All three projectors map onto
// P_2; Pi^0 coincides with Pi^Delta on this space.
class C1Element {
 public:
  explicit C1Element(const CellContext& ctx) : ctx_(ctx) { build(); }

  int nv() const { return ctx_.nv(); }
  int ndof() const { return 3 * nv(); }
  static int dof(int v, int c) { return 3 * v + c; }

  const CellContext& context() const { return ctx_; }
  const PolyBasis& basis() const { return basis_; }
  double area() const { return ctx_.geo.area; }
  double hP() const { return ctx_.geo.diameter; }

  const Matrix& D() const { return D_; }
  const Matrix& pi_delta() const { return pi_d_; }
  const Matrix& pi_nabla() const { return pi_n_; }
  const Matrix& pi0() const { return pi_d_; }
  const Matrix& G_delta() const { return Gd_; }
  const Matrix& G_nabla() const { return Gn_; }
  const Matrix& H() const { return H_; }
  const Matrix& B_delta() const { return Bd_; }
  const Matrix& B_nabla() const { return Bn_; }
  const Matrix& value_trace(int e) const { return vtrace_[e]; }
  const Matrix& normal_trace(int e) const { return ntrace_[e]; }

  const Matrix& A_delta() const { return Ad_; }
  const Matrix& A_nabla() const { return An_; }
  const Matrix& A0() const { return A0_; }

  // Cell-averaged phi'(z) = 3 |P|^-1 a^0_h(z, z) - 1.
  double weight(const Vector& z) const { return 3.0 / area() * z.dot(A0_ * z) - 1.0; }

  // r_h(z; z, .) and its derivative in z.
  Vector semilinear(const Vector& z) const { return weight(z) * (An_ * z); }
  Matrix semilinear_jacobian(const Vector& z) const {
    Vector a = An_ * z, m = A0_ * z;
    return weight(z) * An_ + (6.0 / area()) * a * m.transpose();
  }

  Vector interpolate(const ScalarField& u) const {
    Vector d(ndof());
    for (int i = 0; i < nv(); ++i) {
      const Vec2& x = ctx_.geo.vertices[i];
      Vec2 g = u.grad(x);
      d[dof(i, 0)] = u.value(x);
      d[dof(i, 1)] = ctx_.hV[i] * g.x();
      d[dof(i, 2)] = ctx_.hV[i] * g.y();
    }
    return d;
  }

 private:
  void build() {
    const int n = nv();
    const int nd = 3 * n;
    basis_ = make_cell_basis(ctx_, 2, false);

    Matrix Rv = edge_trace_map(3, 1, 0, false), Rn = edge_trace_map(1, 0, 0, false);
    vtrace_.resize(n);
    ntrace_.resize(n);
    for (int e = 0; e < n; ++e) {
      const auto& ed = ctx_.edges[e];
      Matrix cv = Matrix::Zero(4, nd), cn = Matrix::Zero(2, nd);
      int row = 0;
      for (int v : {ed.va, ed.vb}) {
        double s = ed.length / ctx_.hV[v];
        cv(2 * row, dof(v, 0)) = 1;
        cv(2 * row + 1, dof(v, 1)) = s * ed.tau.x();
        cv(2 * row + 1, dof(v, 2)) = s * ed.tau.y();
        cn(row, dof(v, 1)) = ed.normal.x() / ctx_.hV[v];
        cn(row, dof(v, 2)) = ed.normal.y() / ctx_.hV[v];
        ++row;
      }
      vtrace_[e] = Rv * cv;
      ntrace_[e] = Rn * cn;
    }

    const auto& q = ctx_.quad(4);
    Matrix V = basis_.values(q.pts), Vx = basis_.values(q.pts, 1, 0), Vy = basis_.values(q.pts, 0, 1);
    H_ = weighted_product(V, q, V);
    Gn_ = weighted_product(Vx, q, Vx) + weighted_product(Vy, q, Vy);
    const Vec2 c = ctx_.geo.centroid;
    Vector hxx = basis_.eval(c, 2, 0), hxy = basis_.eval(c, 1, 1), hyy = basis_.eval(c, 0, 2);
    Gd_ = area() * (hxx * hxx.transpose() + 2 * hxy * hxy.transpose() + hyy * hyy.transpose());

    // a^Delta(b, v) = int_dP (D^2 b n) . grad v, since lap^2 b = 0.
    Bd_ = Matrix::Zero(6, nd);
    Matrix bnd = Matrix::Zero(6, nd);  // int_dP dn b v
    const auto& g = gauss_legendre(3);
    for (int e = 0; e < n; ++e) {
      const auto& ed = ctx_.edges[e];
      const Vec2 no = ed.outward();
      Vector hx = hxx * no.x() + hxy * no.y(), hy = hxy * no.x() + hyy * no.y();
      Vector wn = hx * ed.normal.x() + hy * ed.normal.y(), wt = hx * ed.tau.x() + hy * ed.tau.y();
      for (size_t p = 0; p < g.x.size(); ++p) {
        double t = 0.5 * g.x[p], w = 0.5 * g.w[p] * ed.length;
        Vec2 x = ed.point(t);
        Eigen::RowVectorXd tn = tpow(t, 1) * ntrace_[e];
        Eigen::RowVectorXd tt = tpow(t, 3, 1) * vtrace_[e] / ed.length;
        Bd_.noalias() += w * (wn * tn + wt * tt);
        Vector dnb = no.x() * basis_.eval(x, 1, 0) + no.y() * basis_.eval(x, 0, 1);
        bnd.noalias() += w * dnb * (tpow(t, 3) * vtrace_[e]);
      }
    }

    // Kernel of Pi^Delta: Euclidean vertex products against 1, x, y.
    Matrix Gp = Gd_, Bp = Bd_;
    Matrix Vv(n, 6);
    for (int i = 0; i < n; ++i) Vv.row(i) = basis_.eval(ctx_.geo.vertices[i]).transpose();
    for (int a = 0; a < 3; ++a) {
      Gp.row(a) = Vv.col(a).transpose() * Vv;
      Bp.row(a).setZero();
      for (int i = 0; i < n; ++i) Bp(a, dof(i, 0)) = Vv(i, a);
    }
    pi_d_ = Gp.partialPivLu().solve(Bp);

    // Pi^nabla: -int v lap b + int_dP v dn b, with int v = int Pi^Delta v.
    Eigen::RowVectorXd mean = H_.row(0) * pi_d_;  // int_P v, b_0 = 1
    Vector lap = basis_.eval(c, 2, 0) + basis_.eval(c, 0, 2);
    Bn_ = -lap * mean + bnd;
    Gp = Gn_;
    Bp = Bn_;
    Gp.row(0) = H_.row(0);
    Bp.row(0) = mean;
    pi_n_ = Gp.partialPivLu().solve(Bp);

    D_ = Matrix::Zero(nd, 6);
    for (int i = 0; i < n; ++i) {
      const Vec2& x = ctx_.geo.vertices[i];
      D_.row(dof(i, 0)) = Vv.row(i);
      D_.row(dof(i, 1)) = ctx_.hV[i] * basis_.eval(x, 1, 0).transpose();
      D_.row(dof(i, 2)) = ctx_.hV[i] * basis_.eval(x, 0, 1).transpose();
    }

    // s_P is the Euclidean product of the scaled dofs.
    const Matrix I = Matrix::Identity(nd, nd);
    Matrix Rd = I - D_ * pi_d_, Rn2 = I - D_ * pi_n_;
    const double h = hP();
    Ad_ = pi_d_.transpose() * Gd_ * pi_d_ + Rd.transpose() * Rd / (h * h);
    An_ = pi_n_.transpose() * Gn_ * pi_n_ + Rn2.transpose() * Rn2;
    A0_ = pi_d_.transpose() * H_ * pi_d_ + h * h * Rd.transpose() * Rd;
  }

  CellContext ctx_;
  PolyBasis basis_;
  std::vector<Matrix> vtrace_, ntrace_;
  Matrix D_, pi_d_, pi_n_, Gd_, Gn_, H_, Bd_, Bn_;
  Matrix Ad_, An_, A0_;
};

inline std::vector<C1Element> build_c1_elements(const PolygonalMesh& m) {
  std::vector<std::optional<C1Element>> tmp(m.num_cells());
  parallel_for(m.num_cells(), [&](int c) { tmp[c].emplace(CellContext::from_mesh(m, c)); });
  std::vector<C1Element> els;
  els.reserve(tmp.size());
  for (auto& e : tmp) els.push_back(std::move(*e));
  return els;
}

inline std::vector<std::vector<int>> c1_cell_dofs(const PolygonalMesh& m) {
  std::vector<std::vector<int>> d(m.num_cells());
  for (int c = 0; c < m.num_cells(); ++c)
    for (int v : m.cells[c])
      for (int j = 0; j < 3; ++j) d[c].push_back(3 * v + j);
  return d;
}

// Dofs removed by dn v = 0 on the boundary: at each boundary vertex the
// gradient component along every adjacent boundary normal. Only boundaries
// made of axis-aligned edges are supported.
inline std::vector<int> c1_neumann_dofs(const PolygonalMesh& m) {
  std::vector<int> r;
  for (const auto& e : m.edges) {
    if (!e.is_boundary()) continue;
    Vec2 t = (m.vertices[e.v1] - m.vertices[e.v0]).normalized();
    int comp;
    if (std::abs(t.x()) < 1e-12)
      comp = 1;
    else if (std::abs(t.y()) < 1e-12)
      comp = 2;
    else
      throw MeshError("C1 boundary condition needs axis-aligned boundary edges");
    r.push_back(3 * e.v0 + comp);
    r.push_back(3 * e.v1 + comp);
  }
  std::sort(r.begin(), r.end());
  r.erase(std::unique(r.begin(), r.end()), r.end());
  return r;
}

inline Vector interpolate_c1(const PolygonalMesh& m, const ScalarField& u) {
  Vector d(3 * m.num_vertices());
  for (int v = 0; v < m.num_vertices(); ++v) {
    const Vec2& x = m.vertices[v];
    Vec2 g = u.grad(x);
    d[3 * v] = u.value(x);
    d[3 * v + 1] = m.vertex_h[v] * g.x();
    d[3 * v + 2] = m.vertex_h[v] * g.y();
  }
  return d;
}

}  // namespace polyvem
