#pragma once

#include "la_core.hpp"
#include "fields.hpp"
#include "vem_h1.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <random>

namespace polyvem {

// Isotropic material, constant or piecewise constant per cell.
struct Material {
  double rho = 1, lambda = 1, mu = 1;
  std::vector<double> cell_rho, cell_lambda, cell_mu;  // optional overrides

  double rho_at(int c) const { return cell_rho.empty() ? rho : cell_rho[c]; }
  double lambda_at(int c) const { return cell_lambda.empty() ? lambda : cell_lambda[c]; }
  double mu_at(int c) const { return cell_mu.empty() ? mu : cell_mu[c]; }

  void validate(int num_cells) const {
    auto check = [&](const std::vector<double>& v, double x, bool strict, const char* name) {
      if (!v.empty() && static_cast<int>(v.size()) != num_cells)
        throw ConfigError(std::string(name) + " needs one value per cell");
      auto ok = [&](double a) { return std::isfinite(a) && (strict ? a > 0 : a >= 0); };
      if (!ok(x)) throw ConfigError(std::string("invalid ") + name);
      for (double a : v)
        if (!ok(a)) throw ConfigError(std::string("invalid ") + name);
    };
    check(cell_rho, rho, true, "rho");
    check(cell_lambda, lambda, false, "lambda");
    check(cell_mu, mu, false, "mu");
  }
};

struct WaveSpeeds {
  double cP = 0, cS = 0;
};

inline WaveSpeeds wave_speeds(double rho, double lambda, double mu) {
  if (!(rho > 0)) throw ConfigError("rho must be positive");
  return {std::sqrt((lambda + 2 * mu) / rho), std::sqrt(mu / rho)};
}
inline WaveSpeeds wave_speeds(const Material& m) { return wave_speeds(m.rho, m.lambda, m.mu); }

using VectorLoad = std::function<Vec2(const Vec2&, double)>;

enum class LoadProjection {
  Reduced,  // Pi^0_{k-2}, with Pi^0_0 at k = 1
  Full      // Pi^0_k
};

// Vector space [V_k]^2 with all x components first, then all y components.
class ElastoSystem {
 public:
  ElastoSystem(const PolygonalMesh& m, int k, Material mat = {}, bool orthogonal = false)
      : mesh_(m), k_(k), mat_(std::move(mat)) {
    if (k < 1) throw ConfigError("order k must be at least 1");
    mat_.validate(m.num_cells());
    els_ = build_h1_elements(m, k, orthogonal);
    dm_ = H1DofMap(m, k);
    ns_ = dm_.ndof;
    for (int c = 0; c < m.num_cells(); ++c) {
      auto d = dm_.cell_dofs[c];
      for (int i : dm_.cell_dofs[c]) d.push_back(ns_ + i);
      vdofs_.push_back(std::move(d));
    }
    std::vector<Matrix> Kl(m.num_cells()), Ml(m.num_cells()), Cl(m.num_cells()), Sl(m.num_cells());
    parallel_for(m.num_cells(), [&](int c) {
      Kl[c] = local_stiffness(c);
      Ml[c] = local_mass(c);
      Cl[c] = block2(mat_.rho_at(c) * els_[c].mass_consistency());
      Sl[c] = block2(gradient_gram(c));
    });
    PatternAssembler pa(ndof(), vdofs_);
    K_ = pa.zero();
    M_ = pa.zero();
    Mc_ = pa.zero();
    S1_ = pa.zero();
    for (int c = 0; c < m.num_cells(); ++c) {
      pa.add(K_, c, Kl[c]);
      pa.add(M_, c, Ml[c]);
      pa.add(Mc_, c, Cl[c]);
      pa.add(S1_, c, Sl[c]);
    }
    std::vector<int> fixed;
    for (int i : dm_.dirichlet_dofs(m)) {
      fixed.push_back(i);
      fixed.push_back(ns_ + i);
    }
    std::sort(fixed.begin(), fixed.end());
    cm_ = ConstraintMap(ndof(), fixed);
  }

  const PolygonalMesh& mesh() const { return mesh_; }
  int order() const { return k_; }
  const Material& material() const { return mat_; }
  const std::vector<H1Element>& elements() const { return els_; }
  const H1DofMap& scalar_map() const { return dm_; }
  const ConstraintMap& constraints() const { return cm_; }
  int scalar_dofs() const { return ns_; }
  int ndof() const { return 2 * ns_; }
  const std::vector<int>& cell_dofs(int c) const { return vdofs_[c]; }

  const SparseMatrix& stiffness() const { return K_; }
  const SparseMatrix& mass() const { return M_; }

  // int_P D Pi^0_{k-1} eps(v) : Pi^0_{k-1} eps(w) plus a scaled dof stabilization.
  Matrix local_stiffness(int c) const {
    const auto& el = els_[c];
    const int nd = el.ndof(), nk1 = basis_dim(k_ - 1);
    const Matrix H1 = el.H().topLeftCorner(nk1, nk1);
    const Matrix& Ex = el.pi0_grad(0);
    const Matrix& Ey = el.pi0_grad(1);
    Matrix Axx = Ex.transpose() * H1 * Ex, Ayy = Ey.transpose() * H1 * Ey, Axy = Ex.transpose() * H1 * Ey;
    const double l = mat_.lambda_at(c), mu = mat_.mu_at(c);
    Matrix A(2 * nd, 2 * nd);
    A.topLeftCorner(nd, nd) = (2 * mu + l) * Axx + mu * Ayy;
    A.bottomRightCorner(nd, nd) = (2 * mu + l) * Ayy + mu * Axx;
    A.topRightCorner(nd, nd) = l * Axy + mu * Axy.transpose();
    A.bottomLeftCorner(nd, nd) = A.topRightCorner(nd, nd).transpose();
    A += block2(0.5 * (l + 3 * mu) * el.stiffness_stabilization());
    return A;
  }

  Matrix local_mass(int c) const { return block2(els_[c].mass(mat_.rho_at(c))); }

  // Volume part int f . Pi^0 v; edge part int_e g . v on Neumann edges.
  Vector load(const VectorLoad& f, double t, const VectorLoad& gN = nullptr,
              LoadProjection proj = LoadProjection::Full) const {
    Vector F = Vector::Zero(ndof());
    if (f) {
      const int L = proj == LoadProjection::Full ? k_ : std::max(k_ - 2, 0);
      std::vector<Vector> loc(els_.size());
      parallel_for(static_cast<int>(els_.size()), [&](int c) {
        const auto& el = els_[c];
        Vector fx = el.load([&](const Vec2& x) { return f(x, t).x(); }, L);
        Vector fy = el.load([&](const Vec2& x) { return f(x, t).y(); }, L);
        loc[c].resize(2 * fx.size());
        loc[c] << fx, fy;
      });
      for (size_t c = 0; c < els_.size(); ++c)
        for (int i = 0; i < loc[c].size(); ++i) F[vdofs_[c][i]] += loc[c][i];
    }
    if (gN) {
      const auto& g = gauss_legendre(k_ + 6);
      for (int e = 0; e < mesh_.num_edges(); ++e) {
        const auto& ed = mesh_.edges[e];
        if (!ed.is_boundary() || ed.marker != 'N') continue;
        const int c = ed.cell[0];
        int le = 0;
        while (mesh_.cell_edges[c][le].edge != e) ++le;
        const auto& el = els_[c];
        const auto& lei = el.context().edges[le];
        const int nd = el.ndof();
        Vector loc = Vector::Zero(2 * nd);
        for (size_t p = 0; p < g.x.size(); ++p) {
          double s = 0.5 * g.x[p], w = 0.5 * g.w[p] * lei.length;
          Vec2 gv = gN(lei.point(s), t);
          Eigen::RowVectorXd tr = tpow(s, k_) * el.edge_trace(le);
          loc.head(nd) += w * gv.x() * tr.transpose();
          loc.tail(nd) += w * gv.y() * tr.transpose();
        }
        for (int i = 0; i < 2 * nd; ++i) F[vdofs_[c][i]] += loc[i];
      }
    }
    return F;
  }

  Vector interpolate(const std::function<Vec2(const Vec2&)>& u) const {
    Vector r(ndof());
    r.head(ns_) = interpolate_h1(els_, dm_, [&](const Vec2& x) { return u(x).x(); });
    r.tail(ns_) = interpolate_h1(els_, dm_, [&](const Vec2& x) { return u(x).y(); });
    return r;
  }

  Vector local(const Vector& u, int c) const {
    Vector d(vdofs_[c].size());
    for (int i = 0; i < d.size(); ++i) d[i] = u[vdofs_[c][i]];
    return d;
  }

  // ||rho^1/2 v||^2 + |u|_1^2 through Pi^0_k v and Pi^0_{k-1} grad u.
  double energy_norm_sq(const Vector& u, const Vector& v) const { return v.dot(Mc_ * v) + u.dot(S1_ * u); }

  // Same with v = (u_next - u_prev) / (2 dt).
  double energy_norm_sq(const Vector& u_prev, const Vector& u, const Vector& u_next, double dt) const {
    return energy_norm_sq(u, Vector((u_next - u_prev) / (2 * dt)));
  }

 private:
  Matrix block2(const Matrix& A) const {
    Matrix B = Matrix::Zero(2 * A.rows(), 2 * A.cols());
    B.topLeftCorner(A.rows(), A.cols()) = A;
    B.bottomRightCorner(A.rows(), A.cols()) = A;
    return B;
  }
  Matrix gradient_gram(int c) const {
    const auto& el = els_[c];
    const int nk1 = basis_dim(k_ - 1);
    const Matrix H1 = el.H().topLeftCorner(nk1, nk1);
    return el.pi0_grad(0).transpose() * H1 * el.pi0_grad(0) + el.pi0_grad(1).transpose() * H1 * el.pi0_grad(1);
  }

  const PolygonalMesh& mesh_;
  int k_;
  Material mat_;
  std::vector<H1Element> els_;
  H1DofMap dm_;
  int ns_ = 0;
  std::vector<std::vector<int>> vdofs_;
  SparseMatrix K_, M_, Mc_, S1_;
  ConstraintMap cm_;
};

// ---------------------------------------------------------------------------
// Leap-frog time marching on the free dofs.

struct BlowUpError : Error {
  int step;
  BlowUpError(int step_, double norm)
      : Error("leap-frog blow-up at step " + std::to_string(step_) + " (|u| = " + std::to_string(norm) +
              "); reduce the time step"),
        step(step_) {}
};

class Leapfrog {
 public:
  // M and K are the reduced (free dof) matrices.
  Leapfrog(const SparseMatrix& M, const SparseMatrix& K, double dt) : K_(K), dt_(dt), M_(M), solver_(M) {
    if (!(dt > 0)) throw ConfigError("time step must be positive");
  }

  // First step M u1 = M u0 + dt M v0 - dt^2/2 K u0 + dt^2/2 F0.
  void start(const Vector& u0, const Vector& v0, const Vector& F0) {
    Vector r = F0 - K_ * u0;
    prev_ = u0;
    cur_ = u0 + dt_ * v0 + 0.5 * dt_ * dt_ * solver_.solve(r);
    n_ = 1;
    scale_ = std::max({u0.norm(), dt_ * v0.norm(), cur_.norm()});
    check();
  }

  // M u^{n+1} = 2 M u^n - M u^{n-1} - dt^2 K u^n + dt^2 F^n.
  void step(const Vector& F) {
    Vector r = K_ * cur_;
    if (F.size()) r = F - r;
    else r = -r;
    Vector next = 2 * cur_ - prev_ + dt_ * dt_ * solver_.solve(r);
    prev_ = std::move(cur_);
    cur_ = std::move(next);
    ++n_;
    check();
  }
  void step() { step(Vector()); }

  // Swaps the two levels so further unforced steps run backwards in time.
  void reverse() { std::swap(prev_, cur_); }

  int steps() const { return n_; }
  double dt() const { return dt_; }
  const Vector& previous() const { return prev_; }
  const Vector& current() const { return cur_; }

  // Conserved quantity of the unforced scheme between levels n-1 and n:
  // 1/2 |du|_M^2 / dt^2 + 1/2 u^n . K u^{n-1}.
  double energy() const {
    Vector du = cur_ - prev_;
    return 0.5 * du.dot(M_ * du) / (dt_ * dt_) + 0.5 * cur_.dot(K_ * prev_);
  }

 private:
  void check() {
    if (scale_ == 0) scale_ = cur_.norm();
    double nrm = cur_.norm();
    if (!std::isfinite(nrm) || (scale_ > 0 && nrm > 1e6 * scale_)) throw BlowUpError(n_, nrm);
  }

  SparseMatrix K_;
  double dt_;
  SparseMatrix M_;
  SpdSolver solver_;
  Vector prev_, cur_;
  int n_ = 0;
  double scale_ = 0;
};

// Largest eigenvalue of M^-1 K by power iteration; the unforced leap-frog
// scheme is stable for dt < 2 / sqrt(lambda_max).
inline double max_eigenvalue(const SparseMatrix& M, const SparseMatrix& K, int iters = 300, double tol = 1e-6) {
  SpdSolver s(M);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> U(-1, 1);
  Vector x(M.rows());
  for (int i = 0; i < x.size(); ++i) x[i] = U(rng);
  double lam = 0;
  for (int it = 0; it < iters; ++it) {
    Vector y = s.solve(K * x);
    double l = x.dot(K * x) / x.dot(M * x);
    x = y / y.norm();
    if (it > 10 && std::abs(l - lam) <= tol * l) return std::max(l, x.dot(K * x) / x.dot(M * x));
    lam = l;
  }
  return std::max(lam, x.dot(K * x) / x.dot(M * x));
}

inline double critical_time_step(const SparseMatrix& M, const SparseMatrix& K) {
  return 2.0 / std::sqrt(max_eigenvalue(M, K));
}

// Rule of thumb dt <= C h_min / (k^2 c_P).
inline double cfl_time_step(const PolygonalMesh& m, int k, const Material& mat, double C = 0.1) {
  double hmin = std::numeric_limits<double>::max();
  for (int c = 0; c < m.num_cells(); ++c) hmin = std::min(hmin, CellGeometry::from_mesh(m, c).diameter);
  return C * hmin / (k * k * wave_speeds(mat).cP);
}

// ---------------------------------------------------------------------------
// Manufactured benchmark u = cos(2 pi t / T) (sin^2(pi x) sin(2 pi y), sin(2 pi x) sin^2(pi y)).

struct ElastoBenchmark {
  Material mat;
  double period = 1;

  double time_factor(double t) const { return std::cos(2 * std::numbers::pi * t / period); }

  static Vec2 profile(const Vec2& x) {
    const double pi = std::numbers::pi;
    double sx = std::sin(pi * x.x()), sy = std::sin(pi * x.y());
    return {sx * sx * std::sin(2 * pi * x.y()), std::sin(2 * pi * x.x()) * sy * sy};
  }
  // Row i holds grad of component i.
  static Eigen::Matrix2d profile_grad(const Vec2& x) {
    const double pi = std::numbers::pi;
    double s1x = std::sin(pi * x.x()), s1y = std::sin(pi * x.y());
    double s2x = std::sin(2 * pi * x.x()), s2y = std::sin(2 * pi * x.y());
    double c2x = std::cos(2 * pi * x.x()), c2y = std::cos(2 * pi * x.y());
    Eigen::Matrix2d G;
    G << pi * s2x * s2y, 2 * pi * s1x * s1x * c2y, 2 * pi * c2x * s1y * s1y, pi * s2x * s2y;
    return G;
  }

  Vec2 value(const Vec2& x, double t) const { return time_factor(t) * profile(x); }
  Eigen::Matrix2d grad(const Vec2& x, double t) const { return time_factor(t) * profile_grad(x); }

  // rho u_tt - mu lap u - (lambda + mu) grad div u.
  Vec2 force(const Vec2& x, double t) const {
    const double pi = std::numbers::pi, w = 2 * pi / period;
    // a = sin^2(pi s), b = sin(2 pi s) and their derivatives
    auto a = [&](double s) { return std::pow(std::sin(pi * s), 2); };
    auto a1 = [&](double s) { return pi * std::sin(2 * pi * s); };
    auto a2 = [&](double s) { return 2 * pi * pi * std::cos(2 * pi * s); };
    auto b = [&](double s) { return std::sin(2 * pi * s); };
    auto b1 = [&](double s) { return 2 * pi * std::cos(2 * pi * s); };
    auto b2 = [&](double s) { return -4 * pi * pi * std::sin(2 * pi * s); };
    const double X = x.x(), Y = x.y();
    Vec2 u(a(X) * b(Y), b(X) * a(Y));
    Vec2 lap(a2(X) * b(Y) + a(X) * b2(Y), b2(X) * a(Y) + b(X) * a2(Y));
    Vec2 gdiv(a2(X) * b(Y) + b1(X) * a1(Y), a1(X) * b1(Y) + b(X) * a2(Y));
    return time_factor(t) * (-mat.rho * w * w * u - mat.mu * lap - (mat.lambda + mat.mu) * gdiv);
  }
};

struct ElastoErrors {
  double h = 0;
  int dofs = 0;
  double l2 = 0, h1 = 0;      // relative
  double l2_abs = 0, h1_abs = 0;
};

// Errors of Pi^0_k u_h and Pi^0_{k-1} grad u_h against the exact field.
// Relative errors divide by the norms of (ref, ref_grad), default the exact field.
inline ElastoErrors elasto_errors(const ElastoSystem& sys, const Vector& u,
                                  const std::function<Vec2(const Vec2&)>& exact,
                                  const std::function<Eigen::Matrix2d(const Vec2&)>& grad,
                                  std::function<Vec2(const Vec2&)> ref = nullptr,
                                  std::function<Eigen::Matrix2d(const Vec2&)> ref_grad = nullptr) {
  if (!ref) ref = exact;
  if (!ref_grad) ref_grad = grad;
  ElastoErrors e;
  e.h = sys.mesh().max_diameter();
  e.dofs = sys.constraints().num_free();
  const int k = sys.order(), nk1 = basis_dim(k - 1);
  double n0 = 0, n1 = 0;
  for (size_t c = 0; c < sys.elements().size(); ++c) {
    const auto& el = sys.elements()[c];
    const int nd = el.ndof();
    Vector d = sys.local(u, c);
    Vector dx = d.head(nd), dy = d.tail(nd);
    Vector px = el.pi0() * dx, py = el.pi0() * dy;
    Vector gxx = el.pi0_grad(0) * dx, gxy = el.pi0_grad(1) * dx;
    Vector gyx = el.pi0_grad(0) * dy, gyy = el.pi0_grad(1) * dy;
    const auto& bs = el.basis();
    const auto& q = el.context().quad(2 * k + 6);
    for (int p = 0; p < q.size(); ++p) {
      const Vec2& x = q.pts[p];
      Vector b = bs.eval(x);
      Vector b1 = b.head(nk1);
      Vec2 ue = exact(x);
      Eigen::Matrix2d ge = grad(x);
      Vec2 du = ue - Vec2(px.dot(b), py.dot(b));
      Eigen::Matrix2d dg = ge;
      dg(0, 0) -= gxx.dot(b1);
      dg(0, 1) -= gxy.dot(b1);
      dg(1, 0) -= gyx.dot(b1);
      dg(1, 1) -= gyy.dot(b1);
      e.l2_abs += q.w[p] * du.squaredNorm();
      e.h1_abs += q.w[p] * dg.squaredNorm();
      n0 += q.w[p] * ref(x).squaredNorm();
      n1 += q.w[p] * ref_grad(x).squaredNorm();
    }
  }
  e.l2_abs = std::sqrt(e.l2_abs);
  e.h1_abs = std::sqrt(e.h1_abs);
  e.l2 = n0 > 0 ? e.l2_abs / std::sqrt(n0) : e.l2_abs;
  e.h1 = n1 > 0 ? e.h1_abs / std::sqrt(n1) : e.h1_abs;
  return e;
}

struct ElastoRunOptions {
  int k = 1;
  double dt = 5e-4;
  double t_end = 0.25;
  double period = 0;  // 0: one period over [0, t_end]
  bool orthogonal = false;
  LoadProjection load = LoadProjection::Full;
  Material mat;
};

struct ElastoRunStats {
  int steps = 0;
  double critical_dt = 0;
  double seconds = 0;
};

// Leap-frog run of the benchmark. Relative errors are taken against the
// spatial profile, which is the exact field when t_end spans whole periods.
inline ElastoErrors run_elasto_benchmark(const PolygonalMesh& m, const ElastoRunOptions& o,
                                         ElastoRunStats* stats = nullptr, bool check_cfl = true) {
  auto t0 = std::chrono::steady_clock::now();
  ElastoSystem sys(m, o.k, o.mat, o.orthogonal);
  ElastoBenchmark bm{o.mat, o.period > 0 ? o.period : o.t_end};
  const auto& cm = sys.constraints();
  SparseMatrix M = cm.reduce(sys.mass()), K = cm.reduce(sys.stiffness());
  ElastoRunStats st;
  if (check_cfl) {
    st.critical_dt = critical_time_step(M, K);
    if (o.dt >= st.critical_dt)
      throw ConfigError("time step " + std::to_string(o.dt) + " exceeds the stability limit " +
                        std::to_string(st.critical_dt));
  }
  // The force separates as time_factor(t) times a fixed field.
  VectorLoad f = [&](const Vec2& x, double) { return bm.force(x, 0); };
  const Vector F0 = cm.restrict(sys.load(f, 0, nullptr, o.load));
  auto F = [&](double t) { return Vector(bm.time_factor(t) * F0); };
  Vector u0 = cm.restrict(sys.interpolate([&](const Vec2& x) { return bm.value(x, 0); }));
  Leapfrog lf(M, K, o.dt);
  lf.start(u0, Vector::Zero(u0.size()), F(0));
  const int N = static_cast<int>(std::llround(o.t_end / o.dt));
  for (int n = 1; n < N; ++n) lf.step(F(n * o.dt));
  st.steps = N;
  const double T = N * o.dt;
  auto e = elasto_errors(sys, cm.expand(lf.current()), [&](const Vec2& x) { return bm.value(x, T); },
                         [&](const Vec2& x) { return bm.grad(x, T); }, ElastoBenchmark::profile,
                         ElastoBenchmark::profile_grad);
  st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (stats) *stats = st;
  return e;
}

// 2-norm condition number of a symmetric positive definite matrix (dense).
inline double spd_condition(const SparseMatrix& A) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(Matrix(A), Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  return ev.maxCoeff() / ev.minCoeff();
}

struct PRefineRow {
  int k = 0;
  int dofs = 0;
  double l2 = 0, h1 = 0;
  double cond = 0;  // reduced stiffness, 2-norm
};

inline PRefineRow p_refinement_row(const PolygonalMesh& m, int k, bool orthogonal, double dt, double t_end = 0.25) {
  ElastoRunOptions o;
  o.k = k;
  o.dt = dt;
  o.t_end = t_end;
  o.orthogonal = orthogonal;
  auto e = run_elasto_benchmark(m, o);
  ElastoSystem sys(m, k, o.mat, orthogonal);
  return {k, e.dofs, e.l2, e.h1, spd_condition(sys.constraints().reduce(sys.stiffness()))};
}

// Benchmark errors for k = 1..k_max on a fixed mesh.
inline std::vector<PRefineRow> run_p_refinement(const PolygonalMesh& m, int k_max, bool orthogonal, double dt,
                                                double t_end = 0.25) {
  std::vector<PRefineRow> rows;
  for (int k = 1; k <= k_max; ++k) rows.push_back(p_refinement_row(m, k, orthogonal, dt, t_end));
  return rows;
}

}  // namespace polyvem
