#pragma once

#include "cell_context.hpp"
#include "la_core.hpp"

#include <optional>

namespace polyvem {

// Enhanced H^1-conforming virtual element of order k on one cell.
// Local dofs: vertex values, then per edge k-1 moments (1/|e|) int_e v q_j in
// the global edge orientation, then interior moments (1/|P|) int_P v b_a,
// |a| <= k-2.
class H1Element {
 public:
  H1Element(const CellContext& ctx, int k, bool orthogonal = false) : ctx_(ctx), k_(k), ortho_(orthogonal) {
    if (k < 1) throw Error("virtual element order must be >= 1");
    build();
  }

  int order() const { return k_; }
  int ndof() const { return ndof_; }
  int num_edge_moments() const { return k_ - 1; }
  int num_interior() const { return basis_dim(k_ - 2); }
  int edge_dof(int e, int j) const { return nv() + e * (k_ - 1) + j; }
  int interior_dof(int a) const { return nv() + nv() * (k_ - 1) + a; }
  int nv() const { return ctx_.nv(); }
  const CellContext& context() const { return ctx_; }
  const PolyBasis& basis() const { return basis_; }

  const Matrix& D() const { return D_; }                  // dofs of the basis polynomials
  const Matrix& pi_nabla() const { return pi_nabla_; }    // coefficients of Pi^nabla_k
  const Matrix& pi0() const { return pi0_; }              // coefficients of Pi^0_k
  const Matrix& pi0_grad(int c) const { return pi0_grad_[c]; }  // Pi^0_{k-1} d/dx_c
  const Matrix& G() const { return G_; }                  // int grad b . grad b
  const Matrix& B() const { return B_; }                  // int grad b . grad phi
  const Matrix& H() const { return H_; }                  // int b b
  const Matrix& moments() const { return C_; }            // int phi b_a, |a| <= k
  const Matrix& edge_trace(int e) const { return trace_[e]; }

  Matrix stiffness_consistency() const { return pi_nabla_.transpose() * G_ * pi_nabla_; }
  Matrix stiffness_stabilization() const {
    Matrix R = Matrix::Identity(ndof_, ndof_) - D_ * pi_nabla_;
    return R.transpose() * R;
  }
  template <class Rho>
  Matrix mass_consistency(const Rho& rho) const {
    const auto& q = ctx_.quad(2 * k_ + 2);
    Matrix V = basis_.values(q.pts);
    Matrix W = V;
    for (int i = 0; i < q.size(); ++i) W.row(i) *= rho(q.pts[i]);
    Matrix Hr = weighted_product(W, q, V);
    return pi0_.transpose() * Hr * pi0_;
  }
  Matrix mass_consistency() const { return pi0_.transpose() * H_ * pi0_; }
  Matrix mass_stabilization() const {
    Matrix R = Matrix::Identity(ndof_, ndof_) - D_ * pi0_;
    return R.transpose() * R;
  }

  // Stiffness with unit stabilization multiplier; mass with rho_bar |P|/ndof.
  Matrix stiffness() const { return stiffness_consistency() + stiffness_stabilization(); }
  Matrix mass(double rho = 1.0) const {
    return rho * mass_consistency() + rho * ctx_.geo.area / ndof_ * mass_stabilization();
  }

  // Local dofs of a function (values on vertices, quadrature for moments).
  template <class F>
  Vector interpolate(const F& f) const {
    Vector d = Vector::Zero(ndof_);
    for (int i = 0; i < nv(); ++i) d[i] = f(ctx_.geo.vertices[i]);
    const int nm = k_ - 1;
    if (nm > 0) {
      const auto& g = gauss_legendre(k_ + 6);
      std::vector<double> q(nm);
      for (int e = 0; e < nv(); ++e) {
        const auto& ed = ctx_.edges[e];
        for (size_t p = 0; p < g.x.size(); ++p) {
          double t = 0.5 * g.x[p], w = 0.5 * g.w[p];
          edge_basis(t, nm, ortho_, q.data());
          double fv = f(ed.point(t));
          for (int j = 0; j < nm; ++j) d[edge_dof(e, j)] += w * fv * q[j];
        }
      }
    }
    if (num_interior() > 0) {
      const auto& q = ctx_.quad(2 * k_ + 4);
      for (int p = 0; p < q.size(); ++p) {
        Vector b = basis_.eval(q.pts[p]);
        double fv = f(q.pts[p]);
        for (int a = 0; a < num_interior(); ++a) d[interior_dof(a)] += q.w[p] * fv * b[a];
      }
      d.tail(num_interior()) /= ctx_.geo.area;
    }
    return d;
  }

  // Load vector for int_P f Pi^0_L v with L = `degree` (clamped to [0,k]).
  template <class F>
  Vector load(const F& f, int degree) const {
    int L = std::clamp(degree, 0, k_);
    int nL = basis_dim(L);
    const auto& q = ctx_.quad(2 * k_ + 4);
    Vector bf = Vector::Zero(nL);
    for (int p = 0; p < q.size(); ++p) bf += q.w[p] * f(q.pts[p]) * basis_.eval(q.pts[p]).head(nL);
    Matrix HL = H_.topLeftCorner(nL, nL);
    return C_.topRows(nL).transpose() * HL.ldlt().solve(bf);
  }

  // Trace of the local function with dofs `d` on edge e at parameter t.
  double trace_value(const Vector& d, int e, double t) const { return tpow(t, k_) * trace_[e] * d; }

 private:
  void build() {
    const int n = nv(), k = k_;
    const int nk = basis_dim(k), nk1 = basis_dim(k - 1), nk2 = basis_dim(k - 2);
    const double area = ctx_.geo.area;
    ndof_ = n + n * (k - 1) + nk2;
    basis_ = make_cell_basis(ctx_, k, ortho_);

    // Edge traces: conditions (v(a), v(b), moments) -> t-coefficients.
    Matrix R = edge_trace_map(k, 0, k - 1, ortho_);
    trace_.resize(n);
    for (int e = 0; e < n; ++e) {
      Matrix cond = Matrix::Zero(k + 1, ndof_);
      cond(0, ctx_.edges[e].va) = 1;
      cond(1, ctx_.edges[e].vb) = 1;
      for (int j = 0; j < k - 1; ++j) cond(2 + j, edge_dof(e, j)) = 1;
      trace_[e] = R * cond;
    }

    const auto& q = ctx_.quad(2 * k);
    Matrix V = basis_.values(q.pts);
    Matrix Vx = basis_.values(q.pts, 1, 0), Vy = basis_.values(q.pts, 0, 1);
    H_ = weighted_product(V, q, V);
    G_ = weighted_product(Vx, q, Vx) + weighted_product(Vy, q, Vy);

    // Boundary integrals of polynomial * trace.
    const auto& g = gauss_legendre(k + 1);
    auto boundary = [&](auto&& weight_fn, int rows) {
      Matrix out = Matrix::Zero(rows, ndof_);
      for (int e = 0; e < n; ++e) {
        const auto& ed = ctx_.edges[e];
        for (size_t p = 0; p < g.x.size(); ++p) {
          double t = 0.5 * g.x[p], w = 0.5 * g.w[p] * ed.length;
          Vec2 x = ed.point(t);
          Eigen::RowVectorXd tr = tpow(t, k) * trace_[e];
          out.noalias() += (w * weight_fn(x, ed.outward())).head(rows) * tr;
        }
      }
      return out;
    };

    // Pi^nabla: int grad b . grad phi = -int lap b phi + int_dP dn b phi.
    Matrix H2 = H_.topLeftCorner(nk2, nk2);
    B_ = boundary([&](const Vec2& x, const Vec2& nn) -> Vector {
      return nn.x() * basis_.eval(x, 1, 0) + nn.y() * basis_.eval(x, 0, 1);
    }, nk);
    if (nk2 > 0) {
      Matrix Vl = basis_.values(q.pts, 2, 0) + basis_.values(q.pts, 0, 2);
      Matrix lapmom = weighted_product(Vl, q, V.leftCols(nk2));  // nk x nk2
      Matrix coef = H2.ldlt().solve(lapmom.transpose()).transpose();
      for (int a = 0; a < nk2; ++a) B_.col(interior_dof(a)) -= area * coef.col(a);
    }
    Matrix Gp = G_, Bp = B_;
    if (k == 1) {
      Vector avg = Vector::Zero(nk);
      for (int i = 0; i < n; ++i) avg += basis_.eval(ctx_.geo.vertices[i]);
      Gp.row(0) = avg.transpose() / n;
      Bp.row(0).setZero();
      for (int i = 0; i < n; ++i) Bp(0, i) = 1.0 / n;
    } else {
      Gp.row(0) = H_.row(0) / area;
      Bp.row(0).setZero();
      Bp(0, interior_dof(0)) = 1;
    }
    pi_nabla_ = Gp.partialPivLu().solve(Bp);

    // Dofs of basis polynomials.
    D_ = Matrix::Zero(ndof_, nk);
    for (int i = 0; i < n; ++i) D_.row(i) = basis_.eval(ctx_.geo.vertices[i]).transpose();
    if (k > 1) {
      const auto& ge = gauss_legendre(k + 1);
      std::vector<double> qe(k - 1);
      for (int e = 0; e < n; ++e) {
        const auto& ed = ctx_.edges[e];
        for (size_t p = 0; p < ge.x.size(); ++p) {
          double t = 0.5 * ge.x[p], w = 0.5 * ge.w[p];
          edge_basis(t, k - 1, ortho_, qe.data());
          Vector b = basis_.eval(ed.point(t));
          for (int j = 0; j < k - 1; ++j) D_.row(edge_dof(e, j)) += w * qe[j] * b.transpose();
        }
      }
    }
    for (int a = 0; a < nk2; ++a) D_.row(interior_dof(a)) = H_.row(a) / area;

    // Pi^0_k through the enhancement.
    C_ = Matrix::Zero(nk, ndof_);
    for (int a = 0; a < nk2; ++a) C_(a, interior_dof(a)) = area;
    Matrix HP = H_ * pi_nabla_;
    for (int a = nk2; a < nk; ++a) C_.row(a) = HP.row(a);
    pi0_ = H_.ldlt().solve(C_);

    // Pi^0_{k-1} of the gradient.
    Matrix H1 = H_.topLeftCorner(nk1, nk1);
    for (int c = 0; c < 2; ++c) {
      Matrix E = boundary([&](const Vec2& x, const Vec2& nn) -> Vector { return nn[c] * basis_.eval(x); }, nk1);
      if (nk2 > 0) {
        Matrix Vd = basis_.values(q.pts, c == 0, c == 1);
        Matrix dmom = weighted_product(Vd.leftCols(nk1), q, V.leftCols(nk2));  // nk1 x nk2
        Matrix coef = H2.ldlt().solve(dmom.transpose()).transpose();
        for (int a = 0; a < nk2; ++a) E.col(interior_dof(a)) -= area * coef.col(a);
      }
      pi0_grad_[c] = H1.ldlt().solve(E);
    }
  }

  CellContext ctx_;
  int k_;
  bool ortho_;
  int ndof_ = 0;
  PolyBasis basis_;
  std::vector<Matrix> trace_;
  Matrix D_, pi_nabla_, pi0_, G_, B_, H_, C_;
  Matrix pi0_grad_[2];
};

// ---------------------------------------------------------------------------
// Global numbering of the scalar space on a mesh.

struct H1DofMap {
  int k = 1;
  int nv = 0, ne = 0, nc = 0;
  int ndof = 0;
  std::vector<std::vector<int>> cell_dofs;

  H1DofMap() = default;
  H1DofMap(const PolygonalMesh& m, int k_) : k(k_), nv(m.num_vertices()), ne(m.num_edges()), nc(m.num_cells()) {
    const int nm = k - 1, ni = basis_dim(k - 2);
    ndof = nv + ne * nm + nc * ni;
    cell_dofs.resize(nc);
    for (int c = 0; c < nc; ++c) {
      auto& d = cell_dofs[c];
      for (int v : m.cells[c]) d.push_back(v);
      for (auto& ce : m.cell_edges[c])
        for (int j = 0; j < nm; ++j) d.push_back(nv + ce.edge * nm + j);
      for (int a = 0; a < ni; ++a) d.push_back(nv + ne * nm + c * ni + a);
    }
  }
  int edge_dof(int e, int j) const { return nv + e * (k - 1) + j; }

  // Dofs on Dirichlet ('D') boundary edges and their vertices.
  std::vector<int> dirichlet_dofs(const PolygonalMesh& m) const {
    std::vector<char> mark(ndof, 0);
    for (int e = 0; e < ne; ++e) {
      const auto& ed = m.edges[e];
      if (!ed.is_boundary() || ed.marker != 'D') continue;
      mark[ed.v0] = mark[ed.v1] = 1;
      for (int j = 0; j < k - 1; ++j) mark[edge_dof(e, j)] = 1;
    }
    std::vector<int> r;
    for (int i = 0; i < ndof; ++i)
      if (mark[i]) r.push_back(i);
    return r;
  }
};

inline std::vector<H1Element> build_h1_elements(const PolygonalMesh& m, int k, bool orthogonal = false) {
  std::vector<std::optional<H1Element>> tmp(m.num_cells());
  parallel_for(m.num_cells(), [&](int c) { tmp[c].emplace(CellContext::from_mesh(m, c), k, orthogonal); });
  std::vector<H1Element> r;
  r.reserve(tmp.size());
  for (auto& e : tmp) r.push_back(std::move(*e));
  return r;
}

// Global interpolant of a function.
template <class F>
Vector interpolate_h1(const std::vector<H1Element>& els, const H1DofMap& dm, const F& f) {
  Vector u = Vector::Zero(dm.ndof);
  for (int c = 0; c < dm.nc; ++c) {
    Vector d = els[c].interpolate(f);
    for (size_t i = 0; i < d.size(); ++i) u[dm.cell_dofs[c][i]] = d[i];
  }
  return u;
}

struct PoissonResult {
  Vector u;
  double err_l2 = 0, err_h1 = 0;  // against Pi^0_k u_h and grad Pi^nabla_k u_h
};

// -lap u = f with Dirichlet data from `exact`; errors use the given gradient.
template <class F, class U, class GradU>
PoissonResult solve_poisson_h1(const PolygonalMesh& m, int k, const F& f, const U& exact, const GradU& grad_exact,
                               bool orthogonal = false) {
  auto els = build_h1_elements(m, k, orthogonal);
  H1DofMap dm(m, k);
  std::vector<Triplet> t;
  Vector b = Vector::Zero(dm.ndof);
  for (int c = 0; c < m.num_cells(); ++c) {
    scatter(t, dm.cell_dofs[c], els[c].stiffness());
    Vector fl = els[c].load(f, k);
    for (size_t i = 0; i < fl.size(); ++i) b[dm.cell_dofs[c][i]] += fl[i];
  }
  SparseMatrix A = assemble(dm.ndof, dm.ndof, t);
  Vector g = interpolate_h1(els, dm, exact);
  ConstraintMap cm(dm.ndof, dm.dirichlet_dofs(m));
  PoissonResult r;
  r.u = solve_constrained(A, b, cm, g);
  double e0 = 0, e1 = 0;
  for (int c = 0; c < m.num_cells(); ++c) {
    Vector d(dm.cell_dofs[c].size());
    for (size_t i = 0; i < d.size(); ++i) d[i] = r.u[dm.cell_dofs[c][i]];
    Vector p0 = els[c].pi0() * d, pn = els[c].pi_nabla() * d;
    const auto& q = els[c].context().quad(2 * k + 4);
    const auto& bs = els[c].basis();
    for (int p = 0; p < q.size(); ++p) {
      const Vec2& x = q.pts[p];
      double du = exact(x) - bs.eval_poly(p0, x);
      Vec2 ge = grad_exact(x);
      double gx = ge.x() - bs.eval_poly(pn, x, 1, 0), gy = ge.y() - bs.eval_poly(pn, x, 0, 1);
      e0 += q.w[p] * du * du;
      e1 += q.w[p] * (gx * gx + gy * gy);
    }
  }
  r.err_l2 = std::sqrt(e0);
  r.err_h1 = std::sqrt(e1);
  return r;
}

}  // namespace polyvem
