#pragma once

#include "cell_context.hpp"
#include "fields.hpp"
#include "la_core.hpp"

#include <optional>

namespace polyvem {

// Conforming virtual element for (-lap)^P u = f, P in {1,2}, of degree r in
// {2P-1, 2P}. Local dofs in order:
//   per vertex   h_V^|nu| D^nu v(V), |nu| <= P-1
//   per edge     h_e^-1 int_e q v,      q in P_{r-2P}(e)
//                int_e q dn v (P = 2),   q in P_{r-3}(e)
//   interior     h_P^-2 int_P q v,      q in P_{r-2P}(P)
// Edge polynomials and normals follow the global edge orientation.
template <int P>
class PolyharmonicElement {
  static_assert(P == 1 || P == 2, "only P = 1 and P = 2 are implemented");

 public:
  static constexpr int vertex_dofs = P * (P + 1) / 2;

  PolyharmonicElement(const CellContext& ctx, int r, bool orthogonal = false)
      : ctx_(ctx), r_(r), ortho_(orthogonal) {
    if (r != 2 * P - 1 && r != 2 * P) throw ConfigError("unsupported (p, r) pair");
    build();
  }

  static int count_dofs(int n, int r) {
    int ne2 = std::max(0, r - 2 * P + 1), ne3 = P == 2 ? std::max(0, r - 2) : 0;
    return vertex_dofs * n + n * (ne2 + ne3) + basis_dim(r - 2 * P);
  }

  int degree() const { return r_; }
  int ndof() const { return ndof_; }
  int nv() const { return ctx_.nv(); }
  int n_d2() const { return ne2_; }
  int n_d3() const { return ne3_; }
  int n_interior() const { return basis_dim(r_ - 2 * P); }
  int vertex_dof(int v, int c) const { return v * vertex_dofs + c; }
  int d2_dof(int e, int j) const { return nv() * vertex_dofs + e * (ne2_ + ne3_) + j; }
  int d3_dof(int e, int j) const { return nv() * vertex_dofs + e * (ne2_ + ne3_) + ne2_ + j; }
  int interior_dof(int a) const { return nv() * vertex_dofs + nv() * (ne2_ + ne3_) + a; }

  const CellContext& context() const { return ctx_; }
  const PolyBasis& basis() const { return basis_; }
  const Matrix& D() const { return D_; }
  const Matrix& pi() const { return pi_; }     // coefficients of Pi^P_r
  const Matrix& G() const { return G_; }       // a_P on the basis
  const Matrix& B() const { return B_; }       // a_P(b, phi)
  const Matrix& H() const { return H_; }
  const Matrix& value_trace(int e) const { return vtrace_[e]; }
  const Matrix& normal_trace(int e) const { return ntrace_[e]; }

  double hP() const { return ctx_.geo.diameter; }

  Matrix consistency() const { return pi_.transpose() * G_ * pi_; }
  Matrix stabilization() const {
    // Gradient residuals are measured with h_P instead of h_V, so the
    // discrete problem does not depend on the h_V convention.
    Matrix R = Matrix::Identity(ndof_, ndof_) - D_ * pi_;
    if constexpr (P == 2)
      for (int i = 0; i < nv(); ++i) R.middleRows(vertex_dof(i, 1), 2) *= hP() / ctx_.hV[i];
    return std::pow(hP(), 2.0 - 2.0 * P) * R.transpose() * R;
  }
  Matrix stiffness() const { return consistency() + stabilization(); }

  // int_P f Pi^0_{r-P} v, using the interior moments where they exist and
  // Pi^P_r v for the remaining ones.
  template <class F>
  Vector load(const F& f) const {
    const int L = r_ - P, nL = basis_dim(L), ni = n_interior();
    const auto& q = ctx_.quad(2 * r_ + 4);
    Vector bf = Vector::Zero(nL);
    for (int p = 0; p < q.size(); ++p) bf += q.w[p] * f(q.pts[p]) * basis_.eval(q.pts[p]).head(nL);
    Matrix C(nL, ndof_);
    Matrix HP = H_ * pi_;
    for (int a = 0; a < nL; ++a) {
      if (a < ni) {
        C.row(a).setZero();
        C(a, interior_dof(a)) = hP() * hP();
      } else {
        C.row(a) = HP.row(a);
      }
    }
    return C.transpose() * H_.topLeftCorner(nL, nL).ldlt().solve(bf);
  }

  // Local dofs of a smooth function.
  Vector interpolate(const ScalarField& u) const {
    Vector d = Vector::Zero(ndof_);
    for (int i = 0; i < nv(); ++i) {
      const Vec2& x = ctx_.geo.vertices[i];
      d[vertex_dof(i, 0)] = u.value(x);
      if constexpr (P == 2) {
        Vec2 g = u.grad(x);
        d[vertex_dof(i, 1)] = ctx_.hV[i] * g.x();
        d[vertex_dof(i, 2)] = ctx_.hV[i] * g.y();
      }
    }
    const auto& g = gauss_legendre(r_ + 8);
    std::vector<double> qv(std::max(1, std::max(ne2_, ne3_)));
    for (int e = 0; e < nv(); ++e) {
      const auto& ed = ctx_.edges[e];
      for (size_t p = 0; p < g.x.size(); ++p) {
        double t = 0.5 * g.x[p], w = 0.5 * g.w[p];
        Vec2 x = ed.point(t);
        if (ne2_ > 0) {
          edge_basis(t, ne2_, ortho_, qv.data());
          double uv = u.value(x);
          for (int j = 0; j < ne2_; ++j) d[d2_dof(e, j)] += w * uv * qv[j];
        }
        if (ne3_ > 0) {
          edge_basis(t, ne3_, ortho_, qv.data());
          double dn = u.grad(x).dot(ed.normal);
          for (int j = 0; j < ne3_; ++j) d[d3_dof(e, j)] += w * ed.length * dn * qv[j];
        }
      }
    }
    const int ni = n_interior();
    if (ni > 0) {
      const auto& q = ctx_.quad(2 * r_ + 4);
      for (int p = 0; p < q.size(); ++p) {
        Vector b = basis_.eval(q.pts[p]);
        double uv = u.value(q.pts[p]);
        for (int a = 0; a < ni; ++a) d[interior_dof(a)] += q.w[p] * uv * b[a] / (hP() * hP());
      }
    }
    return d;
  }

 private:
  void build() {
    const int n = nv(), r = r_;
    const int nr = basis_dim(r), ni = basis_dim(r - 2 * P);
    const double hp = hP();
    ne2_ = std::max(0, r - 2 * P + 1);
    ne3_ = P == 2 ? std::max(0, r - 2) : 0;
    ndof_ = count_dofs(n, r);
    basis_ = make_cell_basis(ctx_, r, ortho_);

    // Traces on each edge.
    Matrix Rv = edge_trace_map(r, P - 1, ne2_, ortho_);
    Matrix Rn;
    if constexpr (P == 2) Rn = edge_trace_map(r - 1, 0, ne3_, ortho_);
    vtrace_.resize(n);
    ntrace_.resize(n);
    for (int e = 0; e < n; ++e) {
      const auto& ed = ctx_.edges[e];
      Matrix cond = Matrix::Zero(r + 1, ndof_);
      int row = 0;
      for (int v : {ed.va, ed.vb}) {
        cond(row++, vertex_dof(v, 0)) = 1;
        if constexpr (P == 2) {
          double s = ed.length / ctx_.hV[v];
          cond(row, vertex_dof(v, 1)) = s * ed.tau.x();
          cond(row, vertex_dof(v, 2)) = s * ed.tau.y();
          ++row;
        }
      }
      for (int j = 0; j < ne2_; ++j) cond(row++, d2_dof(e, j)) = 1;
      vtrace_[e] = Rv * cond;
      if constexpr (P == 2) {
        Matrix nc = Matrix::Zero(r, ndof_);
        int rr = 0;
        for (int v : {ed.va, ed.vb}) {
          nc(rr, vertex_dof(v, 1)) = ed.normal.x() / ctx_.hV[v];
          nc(rr, vertex_dof(v, 2)) = ed.normal.y() / ctx_.hV[v];
          ++rr;
        }
        for (int j = 0; j < ne3_; ++j) nc(rr++, d3_dof(e, j)) = 1 / ed.length;
        ntrace_[e] = Rn * nc;
      }
    }

    const auto& q = ctx_.quad(2 * r);
    Matrix V = basis_.values(q.pts);
    H_ = weighted_product(V, q, V);
    if constexpr (P == 1) {
      Matrix Vx = basis_.values(q.pts, 1, 0), Vy = basis_.values(q.pts, 0, 1);
      G_ = weighted_product(Vx, q, Vx) + weighted_product(Vy, q, Vy);
    } else {
      Matrix Vxx = basis_.values(q.pts, 2, 0), Vxy = basis_.values(q.pts, 1, 1), Vyy = basis_.values(q.pts, 0, 2);
      G_ = weighted_product(Vxx, q, Vxx) + 2 * weighted_product(Vxy, q, Vxy) + weighted_product(Vyy, q, Vyy);
    }

    // Right-hand side of the projection from boundary and interior data.
    B_ = Matrix::Zero(nr, ndof_);
    const auto& g = gauss_legendre(r + 1);
    for (int e = 0; e < n; ++e) {
      const auto& ed = ctx_.edges[e];
      const Vec2 no = ed.outward();
      for (size_t p = 0; p < g.x.size(); ++p) {
        double t = 0.5 * g.x[p], w = 0.5 * g.w[p] * ed.length;
        Vec2 x = ed.point(t);
        Eigen::RowVectorXd tv = tpow(t, r) * vtrace_[e];
        if constexpr (P == 1) {
          Vector dn = no.x() * basis_.eval(x, 1, 0) + no.y() * basis_.eval(x, 0, 1);
          B_.noalias() += w * dn * tv;
        } else {
          // - int dn(lap b) v + int (D^2 b n) . grad v
          Vector lx = basis_.eval(x, 3, 0) + basis_.eval(x, 1, 2);
          Vector ly = basis_.eval(x, 2, 1) + basis_.eval(x, 0, 3);
          B_.noalias() -= w * (no.x() * lx + no.y() * ly) * tv;
          Vector bxx = basis_.eval(x, 2, 0), bxy = basis_.eval(x, 1, 1), byy = basis_.eval(x, 0, 2);
          Vector hx = bxx * no.x() + bxy * no.y();  // (D^2 b n)_x
          Vector hy = bxy * no.x() + byy * no.y();
          Eigen::RowVectorXd tn = tpow(t, r - 1) * ntrace_[e];
          Eigen::RowVectorXd tt = tpow(t, r, 1) * vtrace_[e] / ed.length;
          Vector wn = hx * ed.normal.x() + hy * ed.normal.y();
          Vector wt = hx * ed.tau.x() + hy * ed.tau.y();
          B_.noalias() += w * (wn * tn + wt * tt);
        }
      }
    }
    if (ni > 0) {
      // Interior term: -int lap b v (P=1) or int lap^2 b v (P=2) through the
      // moments int b_a v = h_P^2 dof_a.
      Matrix Vop;
      if constexpr (P == 1)
        Vop = -(basis_.values(q.pts, 2, 0) + basis_.values(q.pts, 0, 2));
      else
        Vop = basis_.values(q.pts, 4, 0) + 2 * basis_.values(q.pts, 2, 2) + basis_.values(q.pts, 0, 4);
      Matrix Hi = H_.topLeftCorner(ni, ni);
      Matrix mom = weighted_product(Vop, q, V.leftCols(ni));
      Matrix coef = Hi.ldlt().solve(mom.transpose()).transpose();
      for (int a = 0; a < ni; ++a) B_.col(interior_dof(a)) += hp * hp * coef.col(a);
    }

    // Kernel P_{P-1}: vertex averages of D^nu.
    Matrix Gp = G_, Bp = B_;
    for (int c = 0; c < vertex_dofs; ++c) {
      int dx = c == 1, dy = c == 2;
      Vector avg = Vector::Zero(nr);
      Bp.row(c).setZero();
      for (int i = 0; i < n; ++i) {
        avg += basis_.eval(ctx_.geo.vertices[i], dx, dy);
        Bp(c, vertex_dof(i, c)) = c == 0 ? 1.0 / n : 1.0 / (n * ctx_.hV[i]);
      }
      Gp.row(c) = avg.transpose() / n;
    }
    pi_ = Gp.partialPivLu().solve(Bp);

    // Dofs of the basis polynomials.
    D_ = Matrix::Zero(ndof_, nr);
    for (int i = 0; i < n; ++i) {
      const Vec2& x = ctx_.geo.vertices[i];
      D_.row(vertex_dof(i, 0)) = basis_.eval(x).transpose();
      if constexpr (P == 2) {
        D_.row(vertex_dof(i, 1)) = ctx_.hV[i] * basis_.eval(x, 1, 0).transpose();
        D_.row(vertex_dof(i, 2)) = ctx_.hV[i] * basis_.eval(x, 0, 1).transpose();
      }
    }
    std::vector<double> qv(std::max(1, std::max(ne2_, ne3_)));
    const auto& ge = gauss_legendre(r + 2);
    for (int e = 0; e < n; ++e) {
      const auto& ed = ctx_.edges[e];
      for (size_t p = 0; p < ge.x.size(); ++p) {
        double t = 0.5 * ge.x[p], w = 0.5 * ge.w[p];
        Vec2 x = ed.point(t);
        if (ne2_ > 0) {
          edge_basis(t, ne2_, ortho_, qv.data());
          Vector b = basis_.eval(x);
          for (int j = 0; j < ne2_; ++j) D_.row(d2_dof(e, j)) += w * qv[j] * b.transpose();
        }
        if (ne3_ > 0) {
          edge_basis(t, ne3_, ortho_, qv.data());
          Vector dn = ed.normal.x() * basis_.eval(x, 1, 0) + ed.normal.y() * basis_.eval(x, 0, 1);
          for (int j = 0; j < ne3_; ++j) D_.row(d3_dof(e, j)) += w * ed.length * qv[j] * dn.transpose();
        }
      }
    }
    for (int a = 0; a < ni; ++a) D_.row(interior_dof(a)) = H_.row(a) / (hp * hp);
  }

  CellContext ctx_;
  int r_;
  bool ortho_;
  int ndof_ = 0, ne2_ = 0, ne3_ = 0;
  PolyBasis basis_;
  std::vector<Matrix> vtrace_, ntrace_;
  Matrix D_, pi_, G_, B_, H_;
};

// ---------------------------------------------------------------------------

template <int P>
struct PolyDofMap {
  int r = 1;
  int nv = 0, ne = 0, nc = 0, per_edge = 0, per_cell = 0, ndof = 0;
  std::vector<std::vector<int>> cell_dofs;

  PolyDofMap(const PolygonalMesh& m, int r_) : r(r_), nv(m.num_vertices()), ne(m.num_edges()), nc(m.num_cells()) {
    constexpr int vd = PolyharmonicElement<P>::vertex_dofs;
    per_edge = std::max(0, r - 2 * P + 1) + (P == 2 ? std::max(0, r - 2) : 0);
    per_cell = basis_dim(r - 2 * P);
    ndof = vd * nv + per_edge * ne + per_cell * nc;
    cell_dofs.resize(nc);
    for (int c = 0; c < nc; ++c) {
      auto& d = cell_dofs[c];
      for (int v : m.cells[c])
        for (int j = 0; j < vd; ++j) d.push_back(v * vd + j);
      for (auto& ce : m.cell_edges[c])
        for (int j = 0; j < per_edge; ++j) d.push_back(vd * nv + ce.edge * per_edge + j);
      for (int a = 0; a < per_cell; ++a) d.push_back(vd * nv + per_edge * ne + c * per_cell + a);
    }
  }

  // Clamped boundary: every dof attached to a boundary vertex or edge.
  std::vector<int> boundary_dofs(const PolygonalMesh& m) const {
    constexpr int vd = PolyharmonicElement<P>::vertex_dofs;
    std::vector<int> r;
    for (int v = 0; v < nv; ++v)
      if (m.boundary_vertex[v])
        for (int j = 0; j < vd; ++j) r.push_back(v * vd + j);
    for (int e = 0; e < ne; ++e)
      if (m.edges[e].is_boundary())
        for (int j = 0; j < per_edge; ++j) r.push_back(vd * nv + e * per_edge + j);
    std::sort(r.begin(), r.end());
    return r;
  }
};

struct PolyharmonicProblem {
  ScalarField exact;                                  // also supplies boundary data
  std::function<double(const Vec2&)> source;          // (-lap)^P u
};

struct PolyharmonicResult {
  Vector u;
  int ndof = 0;
  double h = 0;
  double err_l2 = 0, err_h1 = 0, err_h2 = 0;  // u - Pi^P u_h, broken seminorms
};

template <int P>
std::vector<PolyharmonicElement<P>> build_poly_elements(const PolygonalMesh& m, int r, bool orthogonal = false,
                                                        double hv_scale = 1.0) {
  std::vector<std::optional<PolyharmonicElement<P>>> tmp(m.num_cells());
  parallel_for(m.num_cells(), [&](int c) { tmp[c].emplace(CellContext::from_mesh(m, c, hv_scale), r, orthogonal); });
  std::vector<PolyharmonicElement<P>> els;
  els.reserve(tmp.size());
  for (auto& e : tmp) els.push_back(std::move(*e));
  return els;
}

template <int P>
Vector cell_values(const PolyDofMap<P>& dm, int c, const Vector& u) {
  Vector d(dm.cell_dofs[c].size());
  for (size_t i = 0; i < d.size(); ++i) d[i] = u[dm.cell_dofs[c][i]];
  return d;
}

template <int P>
PolyharmonicResult solve_polyharmonic(const PolygonalMesh& m, int r, const PolyharmonicProblem& prob,
                                      double hv_scale = 1.0) {
  auto els = build_poly_elements<P>(m, r, false, hv_scale);
  PolyDofMap<P> dm(m, r);
  std::vector<std::vector<Triplet>> local_t(m.num_cells());
  std::vector<Vector> local_f(m.num_cells()), local_g(m.num_cells());
  parallel_for(m.num_cells(), [&](int c) {
    scatter(local_t[c], dm.cell_dofs[c], els[c].stiffness());
    local_f[c] = els[c].load(prob.source);
    local_g[c] = els[c].interpolate(prob.exact);
  });
  std::vector<Triplet> t;
  Vector b = Vector::Zero(dm.ndof), g = Vector::Zero(dm.ndof);
  for (int c = 0; c < m.num_cells(); ++c) {
    t.insert(t.end(), local_t[c].begin(), local_t[c].end());
    for (size_t i = 0; i < dm.cell_dofs[c].size(); ++i) {
      b[dm.cell_dofs[c][i]] += local_f[c][i];
      g[dm.cell_dofs[c][i]] = local_g[c][i];
    }
  }
  SparseMatrix A = assemble(dm.ndof, dm.ndof, t);
  ConstraintMap cm(dm.ndof, dm.boundary_dofs(m));
  PolyharmonicResult res;
  res.u = solve_constrained(A, b, cm, g);
  res.ndof = dm.ndof;
  res.h = m.max_diameter();
  double e0 = 0, e1 = 0, e2 = 0;
  for (int c = 0; c < m.num_cells(); ++c) {
    Vector coef = els[c].pi() * cell_values(dm, c, res.u);
    const auto& bs = els[c].basis();
    const auto& q = els[c].context().quad(2 * r + 6);
    for (int p = 0; p < q.size(); ++p) {
      const Vec2& x = q.pts[p];
      double d0 = prob.exact.value(x) - bs.eval_poly(coef, x);
      Vec2 ge = prob.exact.grad(x);
      double dx = ge.x() - bs.eval_poly(coef, x, 1, 0), dy = ge.y() - bs.eval_poly(coef, x, 0, 1);
      e0 += q.w[p] * d0 * d0;
      e1 += q.w[p] * (dx * dx + dy * dy);
      if (prob.exact.hess) {
        Eigen::Matrix2d he = prob.exact.hess(x);
        double hxx = he(0, 0) - bs.eval_poly(coef, x, 2, 0), hxy = he(0, 1) - bs.eval_poly(coef, x, 1, 1),
               hyy = he(1, 1) - bs.eval_poly(coef, x, 0, 2);
        e2 += q.w[p] * (hxx * hxx + 2 * hxy * hxy + hyy * hyy);
      }
    }
  }
  res.err_l2 = std::sqrt(e0);
  res.err_h1 = std::sqrt(e1);
  res.err_h2 = std::sqrt(e2);
  return res;
}

// Manufactured solutions on the unit square with clamped boundary values.
inline PolyharmonicProblem poly_manufactured(int P) {
  const double pi = std::numbers::pi;
  PolyharmonicProblem pr;
  if (P == 1) {
    pr.exact.value = [pi](const Vec2& x) { return std::sin(pi * x.x()) * std::sin(pi * x.y()); };
    pr.exact.grad = [pi](const Vec2& x) {
      return Vec2(pi * std::cos(pi * x.x()) * std::sin(pi * x.y()), pi * std::sin(pi * x.x()) * std::cos(pi * x.y()));
    };
    pr.exact.hess = [pi](const Vec2& x) {
      double s = std::sin(pi * x.x()) * std::sin(pi * x.y()), c = std::cos(pi * x.x()) * std::cos(pi * x.y());
      Eigen::Matrix2d h;
      h << -pi * pi * s, pi * pi * c, pi * pi * c, -pi * pi * s;
      return h;
    };
    pr.source = [pi](const Vec2& x) { return 2 * pi * pi * std::sin(pi * x.x()) * std::sin(pi * x.y()); };
    return pr;
  }
  // u = A(x) A(y), A(s) = sin^2(pi s)
  auto A = [pi](double s) { return std::pow(std::sin(pi * s), 2); };
  auto A1 = [pi](double s) { return pi * std::sin(2 * pi * s); };
  auto A2 = [pi](double s) { return 2 * pi * pi * std::cos(2 * pi * s); };
  auto A4 = [pi](double s) { return -8 * std::pow(pi, 4) * std::cos(2 * pi * s); };
  pr.exact.value = [A](const Vec2& x) { return A(x.x()) * A(x.y()); };
  pr.exact.grad = [A, A1](const Vec2& x) { return Vec2(A1(x.x()) * A(x.y()), A(x.x()) * A1(x.y())); };
  pr.exact.hess = [A, A1, A2](const Vec2& x) {
    Eigen::Matrix2d h;
    h << A2(x.x()) * A(x.y()), A1(x.x()) * A1(x.y()), A1(x.x()) * A1(x.y()), A(x.x()) * A2(x.y());
    return h;
  };
  pr.source = [A, A2, A4](const Vec2& x) {
    return A4(x.x()) * A(x.y()) + 2 * A2(x.x()) * A2(x.y()) + A(x.x()) * A4(x.y());
  };
  return pr;
}

}  // namespace polyvem
