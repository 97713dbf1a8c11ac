#pragma once

#include "vem_c1.hpp"

#include <Eigen/IterativeLinearSolvers>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <numbers>
#include <random>

namespace polyvem {

namespace detail {

// Preconditioner holding a factorization computed elsewhere, so one
// factorization can serve many Jacobians.
class SharedLdlt {
 public:
  using Factor = Eigen::SimplicialLDLT<SparseMatrix>;
  SharedLdlt() = default;
  template <class M>
  SharedLdlt& analyzePattern(const M&) { return *this; }
  template <class M>
  SharedLdlt& factorize(const M&) { return *this; }
  template <class M>
  SharedLdlt& compute(const M&) { return *this; }
  template <class Rhs>
  Vector solve(const Rhs& b) const { return f_ ? Vector(f_->solve(b)) : Vector(b); }
  Eigen::ComputationInfo info() const { return Eigen::Success; }
  void set(std::shared_ptr<Factor> f) { f_ = std::move(f); }

 private:
  std::shared_ptr<Factor> f_;
};

}  // namespace detail

struct CHSettings {
  double gamma = 0.1;
  double dt = 1e-4;
  NewtonSettings newton{1e-6, 0, 20, 8};
  // Problems above this size use BiCGSTAB with a lagged LDLT
  // preconditioner instead of one LU per Newton step.
  int direct_limit = 5000;
  double krylov_tol = 1e-12;
};

struct CHStepInfo {
  int newton_iterations = 0;
  int krylov_iterations = 0;
  bool halved = false;
  double mass_change = 0;  // 1^T A^0 (u^i - u^{i-1})
};

// Backward Euler + Newton for the C1 virtual element Cahn-Hilliard system
//   A^0 (u - u_old)/dt + gamma^2 A^Delta u + sum_P w_P(u) A^nabla_P u = F.
// Unknowns are the free dofs after dn u = 0 is imposed.
class CahnHilliard {
 public:
  using Load = std::function<double(const Vec2&, double)>;

  CahnHilliard(const PolygonalMesh& m, CHSettings s = {}) : mesh_(m), s_(s) {
    if (s_.gamma <= 0) throw ConfigError("gamma must be positive");
    if (s_.dt <= 0) throw ConfigError("dt must be positive");
    els_ = build_c1_elements(m);
    const int nfull = 3 * m.num_vertices();
    cm_ = ConstraintMap(nfull, c1_neumann_dofs(m));
    auto full = c1_cell_dofs(m);
    red_dofs_.resize(full.size());
    std::vector<int> to_red(nfull, -1);
    for (int i = 0, k = 0; i < nfull; ++i)
      if (cm_.is_free(i)) to_red[i] = k++;
    for (size_t c = 0; c < full.size(); ++c)
      for (int d : full[c]) red_dofs_[c].push_back(to_red[d]);
    n_ = cm_.num_free();
    pa_ = PatternAssembler(n_, red_dofs_);
    M_ = pa_.zero();
    K_ = pa_.zero();
    for (int c = 0; c < m.num_cells(); ++c) {
      pa_.add(M_, c, els_[c].A0());
      pa_.add(K_, c, els_[c].A_delta());
    }
    ones_ = Vector::Zero(n_);
    for (int v = 0; v < m.num_vertices(); ++v) ones_[to_red[3 * v]] = 1.0;
  }

  const PolygonalMesh& mesh() const { return mesh_; }
  const std::vector<C1Element>& elements() const { return els_; }
  const CHSettings& settings() const { return s_; }
  int num_free() const { return n_; }
  const SparseMatrix& mass_matrix() const { return M_; }
  const SparseMatrix& delta_matrix() const { return K_; }

  Vector restrict(const Vector& full) const { return cm_.restrict(full); }
  Vector expand(const Vector& red) const { return cm_.expand(red, Vector::Zero(3 * mesh_.num_vertices())); }

  // A^0 pairing with the constant 1.
  double mass(const Vector& u) const { return ones_.dot(M_ * u); }

  Vector load(const Load& f, double t) const {
    Vector F = Vector::Zero(n_);
    std::vector<Vector> loc(els_.size());
    parallel_for(static_cast<int>(els_.size()), [&](int c) {
      const auto& el = els_[c];
      const auto& q = el.context().quad(6);
      const Vec2 xc = el.basis().mono.center;
      const double h = el.basis().mono.h;
      Eigen::Matrix<double, 6, 1> bf = Eigen::Matrix<double, 6, 1>::Zero();
      for (int p = 0; p < q.size(); ++p) {
        // plain scaled monomials 1, X, Y, X^2, XY, Y^2
        double X = (q.pts[p].x() - xc.x()) / h, Y = (q.pts[p].y() - xc.y()) / h;
        Eigen::Matrix<double, 6, 1> b;
        b << 1, X, Y, X * X, X * Y, Y * Y;
        bf += q.w[p] * f(q.pts[p], t) * b;
      }
      loc[c] = el.pi0().transpose() * bf;
    });
    for (size_t c = 0; c < els_.size(); ++c) add_local(F, c, loc[c]);
    return F;
  }

  Vector residual(const Vector& u, const Vector& u_old, const Vector& F, double dt) const {
    Vector R = M_ * (u - u_old) / dt + s_.gamma * s_.gamma * (K_ * u) - F;
    std::vector<Vector> loc(els_.size());
    parallel_for(static_cast<int>(els_.size()), [&](int c) { loc[c] = els_[c].semilinear(local(u, c)); });
    for (size_t c = 0; c < els_.size(); ++c) add_local(R, c, loc[c]);
    return R;
  }

  SparseMatrix jacobian(const Vector& u, double dt) const {
    SparseMatrix J = pa_.zero();
    pa_.add(J, M_, 1.0 / dt);
    pa_.add(J, K_, s_.gamma * s_.gamma);
    std::vector<Matrix> loc(els_.size());
    parallel_for(static_cast<int>(els_.size()), [&](int c) { loc[c] = els_[c].semilinear_jacobian(local(u, c)); });
    for (size_t c = 0; c < els_.size(); ++c) pa_.add(J, c, loc[c]);
    return J;
  }

  // One backward Euler step; on Newton failure the step is redone as two
  // half steps.
  Vector step(const Vector& u_old, double t_new, const Load& f, CHStepInfo* info = nullptr) {
    CHStepInfo local_info;
    CHStepInfo& I = info ? *info : local_info;
    I = {};
    try {
      Vector u = solve_step(u_old, t_new, s_.dt, f, I);
      I.mass_change = mass(u) - mass(u_old);
      return u;
    } catch (const SolveError&) {
      I = {};
      I.halved = true;
      const double h = 0.5 * s_.dt;
      Vector mid = solve_step(u_old, t_new - h, h, f, I);
      Vector u = solve_step(mid, t_new, h, f, I);
      I.mass_change = mass(u) - mass(u_old);
      return u;
    }
  }

  // Discrete energies: gamma^2/2 u^T A u + sum_P int_P psi(Pi^0 u), with A
  // either A^Delta or sum_P A^nabla_P.
  double energy_delta(const Vector& u) const {
    return 0.5 * s_.gamma * s_.gamma * u.dot(K_ * u) + bulk_energy(u);
  }
  double energy_nabla(const Vector& u) const {
    double e = 0;
    for (size_t c = 0; c < els_.size(); ++c) {
      Vector d = local(u, c);
      e += d.dot(els_[c].A_nabla() * d);
    }
    return 0.5 * s_.gamma * s_.gamma * e + bulk_energy(u);
  }
  double bulk_energy(const Vector& u) const {
    double e = 0;
    for (size_t c = 0; c < els_.size(); ++c) {
      const auto& el = els_[c];
      Vector coef = el.pi0() * local(u, c);
      const auto& q = el.context().quad(8);
      for (int p = 0; p < q.size(); ++p) {
        double z = el.basis().eval_poly(coef, q.pts[p]);
        e += q.w[p] * 0.25 * (1 - z * z) * (1 - z * z);
      }
    }
    return e;
  }

  Vector local(const Vector& u, size_t c) const {
    const auto& d = red_dofs_[c];
    Vector r(d.size());
    for (size_t i = 0; i < d.size(); ++i) r[i] = d[i] >= 0 ? u[d[i]] : 0.0;
    return r;
  }

 private:
  void add_local(Vector& g, size_t c, const Vector& l) const {
    const auto& d = red_dofs_[c];
    for (size_t i = 0; i < d.size(); ++i)
      if (d[i] >= 0) g[d[i]] += l[i];
  }

  Vector solve_step(const Vector& u_old, double t, double dt, const Load& f, CHStepInfo& I) {
    Vector F = f ? load(f, t) : Vector::Zero(n_);
    NewtonSettings ns = s_.newton;
    // Round-off floor: a state that is already steady cannot reduce its
    // residual by the relative tolerance.
    ns.abs_tol = std::max(ns.abs_tol, 1e-13 * ((M_ * u_old).norm() / dt + F.norm()));
    auto Rf = [&](const Vector& u) { return residual(u, u_old, F, dt); };
    auto Jf = [&](const Vector& u) { return jacobian(u, dt); };
    LinearSolve lin = [&](const SparseMatrix& J, const Vector& b) { return linear_solve(J, b, I); };
    auto res = newton_solve(Rf, Jf, u_old, ns, lin);
    I.newton_iterations += res.iterations;
    if (!res.converged) throw SolveError("Newton did not converge", -1);
    return res.x;
  }

  Vector linear_solve(const SparseMatrix& J, const Vector& b, CHStepInfo& I) {
    if (n_ <= s_.direct_limit) {
      direct_.factorize(J);
      return direct_.solve(b);
    }
    for (int attempt = 0; attempt < 2; ++attempt) {
      if (!prec_) refresh_preconditioner(J);
      Eigen::BiCGSTAB<SparseMatrix, detail::SharedLdlt> bicg;
      bicg.compute(J);
      bicg.preconditioner().set(prec_);
      bicg.setTolerance(s_.krylov_tol);
      bicg.setMaxIterations(60);
      Vector x = bicg.solve(b);
      I.krylov_iterations += static_cast<int>(bicg.iterations());
      if (bicg.info() == Eigen::Success && bicg.iterations() <= 30) return x;
      prec_.reset();  // stale: refactor from the current Jacobian
      if (bicg.info() == Eigen::Success) return x;
    }
    direct_.factorize(J);
    return direct_.solve(b);
  }

  void refresh_preconditioner(const SparseMatrix& J) {
    SparseMatrix S = 0.5 * (J + SparseMatrix(J.transpose()));
    prec_ = std::make_shared<detail::SharedLdlt::Factor>(S);
    if (prec_->info() != Eigen::Success) throw SolveError("preconditioner factorization failed", -1);
  }

  PolygonalMesh mesh_;
  CHSettings s_;
  std::vector<C1Element> els_;
  ConstraintMap cm_;
  std::vector<std::vector<int>> red_dofs_;
  int n_ = 0;
  PatternAssembler pa_;
  SparseMatrix M_, K_;
  Vector ones_;
  DirectSolver direct_;
  std::shared_ptr<detail::SharedLdlt::Factor> prec_;
};

// ---------------------------------------------------------------------------
// Manufactured solution u = t cos(2 pi x) cos(2 pi y).

inline ScalarField ch_exact(double t) {
  const double k = 2 * std::numbers::pi;
  ScalarField u;
  u.value = [=](const Vec2& x) { return t * std::cos(k * x.x()) * std::cos(k * x.y()); };
  u.grad = [=](const Vec2& x) {
    return Vec2(-k * t * std::sin(k * x.x()) * std::cos(k * x.y()), -k * t * std::cos(k * x.x()) * std::sin(k * x.y()));
  };
  u.hess = [=](const Vec2& x) {
    double cc = std::cos(k * x.x()) * std::cos(k * x.y()), ss = std::sin(k * x.x()) * std::sin(k * x.y());
    return (Eigen::Matrix2d() << -k * k * t * cc, k * k * t * ss, k * k * t * ss, -k * k * t * cc).finished();
  };
  return u;
}

// f = u_t - lap(u^3 - u) + gamma^2 lap^2 u
inline CahnHilliard::Load ch_manufactured_load(double gamma) {
  const double k = 2 * std::numbers::pi;
  return [=](const Vec2& x, double t) {
    double cx = std::cos(k * x.x()), cy = std::cos(k * x.y()), sx = std::sin(k * x.x()), sy = std::sin(k * x.y());
    double c = cx * cy, u = t * c;
    double g2 = k * k * t * t * (sx * sx * cy * cy + cx * cx * sy * sy);
    double lap = -2 * k * k * u;
    double lap_phi = 6 * u * g2 + (3 * u * u - 1) * lap;
    return c - lap_phi + gamma * gamma * 4 * std::pow(k, 4) * u;
  };
}

struct CHErrors {
  double h = 0, h2 = 0, h1 = 0, l2 = 0;
};

// Broken seminorms of u - Pi^Delta u_h and the L2 norm of u - Pi^0 u_h.
inline CHErrors ch_errors(const CahnHilliard& ch, const Vector& u, const ScalarField& exact) {
  CHErrors e;
  e.h = ch.mesh().max_diameter();
  for (size_t c = 0; c < ch.elements().size(); ++c) {
    const auto& el = ch.elements()[c];
    Vector coef = el.pi_delta() * ch.local(u, c);
    const auto& bs = el.basis();
    const auto& q = el.context().quad(10);
    for (int p = 0; p < q.size(); ++p) {
      const Vec2& x = q.pts[p];
      double d0 = exact.value(x) - bs.eval_poly(coef, x);
      Vec2 g = exact.grad(x) - Vec2(bs.eval_poly(coef, x, 1, 0), bs.eval_poly(coef, x, 0, 1));
      Eigen::Matrix2d H = exact.hess(x);
      H(0, 0) -= bs.eval_poly(coef, x, 2, 0);
      H(1, 1) -= bs.eval_poly(coef, x, 0, 2);
      H(0, 1) -= bs.eval_poly(coef, x, 1, 1);
      H(1, 0) = H(0, 1);
      e.l2 += q.w[p] * d0 * d0;
      e.h1 += q.w[p] * g.squaredNorm();
      e.h2 += q.w[p] * H.squaredNorm();
    }
  }
  e.l2 = std::sqrt(e.l2);
  e.h1 = std::sqrt(e.h1);
  e.h2 = std::sqrt(e.h2);
  return e;
}

struct CHRunStats {
  int steps = 0;
  int max_newton = 0;
  int total_newton = 0;
  int total_krylov = 0;
  int halvings = 0;
  double max_mass_change = 0;
  double seconds = 0;
};

// Integrates the manufactured problem from u(0) = 0 to t_end.
inline CHErrors run_manufactured(const PolygonalMesh& m, double gamma, double dt, double t_end,
                                 CHRunStats* stats = nullptr) {
  auto t0 = std::chrono::steady_clock::now();
  CHSettings s;
  s.gamma = gamma;
  s.dt = dt;
  CahnHilliard ch(m, s);
  auto f = ch_manufactured_load(gamma);
  Vector u = ch.restrict(interpolate_c1(m, ch_exact(0)));
  const int N = static_cast<int>(std::llround(t_end / dt));
  CHRunStats st;
  for (int i = 1; i <= N; ++i) {
    CHStepInfo info;
    u = ch.step(u, i * dt, f, &info);
    st.max_newton = std::max(st.max_newton, info.newton_iterations);
    st.total_newton += info.newton_iterations;
    st.total_krylov += info.krylov_iterations;
    st.halvings += info.halved;
  }
  st.steps = N;
  st.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (stats) *stats = st;
  return ch_errors(ch, u, ch_exact(N * dt));
}

// ---------------------------------------------------------------------------
// Spinodal decomposition from a random state.

struct SpinodalFrame {
  int step = 0;
  double time = 0;
  double mass = 0;
  double energy_delta = 0, energy_nabla = 0;
  double umin = 0, umax = 0;
  int newton_iterations = 0;
  Vector u;  // reduced dofs
};

inline Vector spinodal_initial(const CahnHilliard& ch, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  Vector full = Vector::Zero(3 * ch.mesh().num_vertices());
  for (int v = 0; v < ch.mesh().num_vertices(); ++v) full[3 * v] = U(rng);
  return ch.restrict(full);
}

// Calls `observe` after the initial state and after every step.
inline void run_spinodal(CahnHilliard& ch, int n_steps, std::uint64_t seed,
                         const std::function<void(const SpinodalFrame&)>& observe) {
  Vector u = spinodal_initial(ch, seed);
  auto frame = [&](int i, int newton) {
    SpinodalFrame fr;
    fr.step = i;
    fr.time = i * ch.settings().dt;
    fr.mass = ch.mass(u);
    fr.energy_delta = ch.energy_delta(u);
    fr.energy_nabla = ch.energy_nabla(u);
    Vector full = ch.expand(u);
    fr.umin = fr.umax = full[0];
    for (int v = 0; v < ch.mesh().num_vertices(); ++v) {
      fr.umin = std::min(fr.umin, full[3 * v]);
      fr.umax = std::max(fr.umax, full[3 * v]);
    }
    fr.newton_iterations = newton;
    fr.u = u;
    observe(fr);
  };
  frame(0, 0);
  for (int i = 1; i <= n_steps; ++i) {
    CHStepInfo info;
    u = ch.step(u, i * ch.settings().dt, nullptr, &info);
    frame(i, info.newton_iterations);
  }
}

// Text snapshot: one "x y u" line per mesh vertex.
inline void write_snapshot(const std::filesystem::path& file, const CahnHilliard& ch, const Vector& u) {
  std::ofstream os(file);
  if (!os) throw Error("cannot write " + file.string());
  Vector full = ch.expand(u);
  os << std::setprecision(17);
  os << "# x y u\n";
  for (int v = 0; v < ch.mesh().num_vertices(); ++v)
    os << ch.mesh().vertices[v].x() << ' ' << ch.mesh().vertices[v].y() << ' ' << full[3 * v] << '\n';
}

}  // namespace polyvem
