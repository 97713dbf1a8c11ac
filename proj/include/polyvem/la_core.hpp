#pragma once

#include "core.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseLU>

#include <cmath>
#include <optional>
#include <regex>

namespace polyvem {

struct SolveError : Error {
  int pivot;  // failing row/column, -1 if unknown
  SolveError(const std::string& what, int pivot_) : Error(what), pivot(pivot_) {}
};

// Sums duplicate entries; out-of-range indices are rejected.
inline SparseMatrix assemble(int rows, int cols, const std::vector<Triplet>& trips) {
  for (const auto& t : trips)
    if (t.row() < 0 || t.row() >= rows || t.col() < 0 || t.col() >= cols)
      throw Error("triplet (" + std::to_string(t.row()) + "," + std::to_string(t.col()) + ") outside " +
                  std::to_string(rows) + "x" + std::to_string(cols));
  SparseMatrix A(rows, cols);
  A.setFromTriplets(trips.begin(), trips.end());
  A.makeCompressed();
  return A;
}

// Scatters a dense local matrix into triplets through a local-to-global map.
inline void scatter(std::vector<Triplet>& trips, const std::vector<int>& dofs, const Matrix& local) {
  for (size_t i = 0; i < dofs.size(); ++i)
    for (size_t j = 0; j < dofs.size(); ++j)
      if (local(i, j) != 0) trips.emplace_back(dofs[i], dofs[j], local(i, j));
}

namespace detail {
inline int structurally_empty_column(const SparseMatrix& A) {
  std::vector<char> row_hit(A.rows(), 0);
  for (int k = 0; k < A.outerSize(); ++k) {
    bool any = false;
    for (SparseMatrix::InnerIterator it(A, k); it; ++it)
      if (it.value() != 0) any = true, row_hit[it.row()] = 1;
    if (!any) return k;
  }
  for (int i = 0; i < A.rows(); ++i)
    if (!row_hit[i]) return i;
  return -1;
}
inline int parse_pivot(const std::string& msg) {
  std::smatch m;
  if (std::regex_search(msg, m, std::regex("([0-9]+)"))) return std::stoi(m[1]);
  return -1;
}
}  // namespace detail

// Sparse LU factorization that can be reused across right-hand sides.
class DirectSolver {
 public:
  DirectSolver() = default;
  explicit DirectSolver(const SparseMatrix& A) { factorize(A); }

  void factorize(const SparseMatrix& A) {
    if (A.rows() != A.cols()) throw SolveError("matrix is not square", -1);
    if (int p = detail::structurally_empty_column(A); p >= 0)
      throw SolveError("singular matrix: empty row/column " + std::to_string(p), p);
    if (!analyzed_ || A.nonZeros() != nnz_ || A.rows() != n_) {
      lu_.analyzePattern(A);
      analyzed_ = true;
      nnz_ = A.nonZeros();
      n_ = A.rows();
    }
    lu_.factorize(A);
    if (lu_.info() != Eigen::Success) {
      std::string msg = lu_.lastErrorMessage();
      int p = detail::parse_pivot(msg);
      throw SolveError("singular matrix at pivot " + std::to_string(p) + ": " + msg, p);
    }
  }

  Vector solve(const Vector& b) const {
    Vector x = lu_.solve(b);
    if (!x.allFinite()) throw SolveError("non-finite solution", -1);
    return x;
  }

 private:
  Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu_;
  bool analyzed_ = false;
  Eigen::Index nnz_ = -1, n_ = -1;
};

inline Vector solve_direct(const SparseMatrix& A, const Vector& b) { return DirectSolver(A).solve(b); }

// Cholesky factorization for symmetric positive definite systems.
class SpdSolver {
 public:
  SpdSolver() = default;
  explicit SpdSolver(const SparseMatrix& A) { factorize(A); }
  void factorize(const SparseMatrix& A) {
    ldlt_.compute(A);
    if (ldlt_.info() != Eigen::Success) throw SolveError("matrix is not positive definite", -1);
  }
  Vector solve(const Vector& b) const { return ldlt_.solve(b); }

 private:
  Eigen::SimplicialLDLT<SparseMatrix> ldlt_;
};

// ---------------------------------------------------------------------------
// Newton's method with step halving.

struct NewtonSettings {
  double tol = 1e-6;        // on ||F(x)|| / ||F(x0)||
  double abs_tol = 0;       // also stop once ||F(x)|| <= abs_tol
  int max_iter = 30;
  int max_halvings = 8;
};

struct NewtonResult {
  Vector x;
  int iterations = 0;
  bool converged = false;
  std::vector<double> residual_norms;  // ||F|| after each iterate, starting at x0
};

using LinearSolve = std::function<Vector(const SparseMatrix&, const Vector&)>;

template <class Residual, class Jacobian>
NewtonResult newton_solve(Residual&& F, Jacobian&& J, Vector x0, const NewtonSettings& s = {},
                          const LinearSolve& lin = nullptr) {
  NewtonResult r;
  r.x = std::move(x0);
  Vector f = F(r.x);
  double f0 = f.norm();
  r.residual_norms.push_back(f0);
  if (!std::isfinite(f0)) return r;
  auto done = [&](double fn) { return fn <= s.tol * f0 || fn <= s.abs_tol || fn == 0; };
  if (done(f0)) {
    r.converged = true;
    return r;
  }
  for (int it = 1; it <= s.max_iter; ++it) {
    SparseMatrix Jx = J(r.x);
    Vector dx = lin ? lin(Jx, -f) : solve_direct(Jx, -f);
    double fn_old = f.norm();
    double step = 1;
    Vector xn = r.x + dx;
    Vector fn = F(xn);
    for (int h = 0; h < s.max_halvings && !(fn.norm() < fn_old); ++h) {
      step *= 0.5;
      xn = r.x + step * dx;
      fn = F(xn);
    }
    r.x = xn;
    f = fn;
    r.iterations = it;
    r.residual_norms.push_back(f.norm());
    if (!std::isfinite(f.norm())) return r;
    if (done(f.norm())) {
      r.converged = true;
      return r;
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Constraint elimination. Constrained unknowns are removed from the system
// and their prescribed values moved to the right-hand side.

class ConstraintMap {
 public:
  ConstraintMap() = default;
  ConstraintMap(int n, const std::vector<int>& constrained) : n_(n), to_free_(n, 0) {
    for (int c : constrained) {
      if (c < 0 || c >= n) throw Error("constrained index out of range");
      to_free_[c] = -1;
    }
    for (int i = 0; i < n; ++i)
      if (to_free_[i] == 0) {
        to_free_[i] = static_cast<int>(free_.size());
        free_.push_back(i);
      }
  }

  int size() const { return n_; }
  int num_free() const { return static_cast<int>(free_.size()); }
  bool is_free(int i) const { return to_free_[i] >= 0; }
  int free_index(int i) const { return to_free_[i]; }
  const std::vector<int>& free_dofs() const { return free_; }

  SparseMatrix reduce(const SparseMatrix& A) const {
    std::vector<Triplet> t;
    t.reserve(A.nonZeros());
    for (int k = 0; k < A.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(A, k); it; ++it) {
        int i = to_free_[it.row()], j = to_free_[it.col()];
        if (i >= 0 && j >= 0) t.emplace_back(i, j, it.value());
      }
    SparseMatrix R(num_free(), num_free());
    R.setFromTriplets(t.begin(), t.end());
    R.makeCompressed();
    return R;
  }

  // b_f - A_fc g, where g holds the prescribed values (full length).
  Vector reduce_rhs(const SparseMatrix& A, const Vector& b, const Vector& g) const {
    Vector gc = g;
    for (int i : free_) gc[i] = 0;
    Vector full = b - A * gc;
    return restrict(full);
  }

  Vector restrict(const Vector& full) const {
    Vector r(num_free());
    for (int k = 0; k < num_free(); ++k) r[k] = full[free_[k]];
    return r;
  }

  Vector expand(const Vector& xf, const Vector& g) const {
    Vector x = g;
    for (int k = 0; k < num_free(); ++k) x[free_[k]] = xf[k];
    return x;
  }
  Vector expand(const Vector& xf) const { return expand(xf, Vector::Zero(n_)); }

 private:
  int n_ = 0;
  std::vector<int> to_free_;
  std::vector<int> free_;
};

// Solves A x = b with x[c] = g[c] on the constrained set.
inline Vector solve_constrained(const SparseMatrix& A, const Vector& b, const ConstraintMap& cm, const Vector& g) {
  SparseMatrix Af = cm.reduce(A);
  Vector bf = cm.reduce_rhs(A, b, g);
  return cm.expand(solve_direct(Af, bf), g);
}

// ---------------------------------------------------------------------------
// Repeated assembly on a fixed sparsity pattern: each cell block is mapped
// once to positions in the compressed value array.

class PatternAssembler {
 public:
  PatternAssembler() = default;
  PatternAssembler(int n, const std::vector<std::vector<int>>& cell_dofs) : cell_dofs_(cell_dofs) {
    std::vector<Triplet> t;
    for (auto& d : cell_dofs)
      for (int i : d)
        for (int j : d)
          if (i >= 0 && j >= 0) t.emplace_back(i, j, 1.0);
    pattern_ = SparseMatrix(n, n);
    pattern_.setFromTriplets(t.begin(), t.end());
    pattern_.makeCompressed();
    slots_.resize(cell_dofs.size());
    for (size_t c = 0; c < cell_dofs.size(); ++c) {
      const auto& d = cell_dofs[c];
      auto& s = slots_[c];
      s.assign(d.size() * d.size(), -1);
      for (size_t j = 0; j < d.size(); ++j) {
        if (d[j] < 0) continue;
        const int* rows = pattern_.innerIndexPtr();
        int beg = pattern_.outerIndexPtr()[d[j]], end = pattern_.outerIndexPtr()[d[j] + 1];
        for (size_t i = 0; i < d.size(); ++i) {
          if (d[i] < 0) continue;
          s[i + j * d.size()] = static_cast<int>(std::lower_bound(rows + beg, rows + end, d[i]) - rows);
        }
      }
    }
  }

  SparseMatrix zero() const {
    SparseMatrix A = pattern_;
    std::fill(A.valuePtr(), A.valuePtr() + A.nonZeros(), 0.0);
    return A;
  }

  void add(SparseMatrix& A, int cell, const Matrix& local) const {
    const auto& s = slots_[cell];
    const int n = static_cast<int>(cell_dofs_[cell].size());
    double* v = A.valuePtr();
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        int p = s[i + j * n];
        if (p >= 0) v[p] += local(i, j);
      }
  }

  // Adds a matrix whose pattern is contained in the assembler pattern.
  void add(SparseMatrix& A, const SparseMatrix& B, double scale = 1.0) const {
    for (int k = 0; k < B.outerSize(); ++k) {
      const int* rows = A.innerIndexPtr();
      int beg = A.outerIndexPtr()[k], end = A.outerIndexPtr()[k + 1];
      for (SparseMatrix::InnerIterator it(B, k); it; ++it) {
        int p = static_cast<int>(std::lower_bound(rows + beg, rows + end, static_cast<int>(it.row())) - rows);
        if (p >= end || rows[p] != it.row()) throw Error("matrix entry outside the assembly pattern");
        A.valuePtr()[p] += scale * it.value();
      }
    }
  }

 private:
  std::vector<std::vector<int>> cell_dofs_;
  std::vector<std::vector<int>> slots_;
  SparseMatrix pattern_;
};

}  // namespace polyvem
