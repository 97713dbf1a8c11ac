#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace polyvem {

using Vec2 = Eigen::Vector2d;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MeshError : Error {
  using Error::Error;
};
struct ParseError : MeshError {
  int line;
  ParseError(const std::string& what, int line_)
      : MeshError(what + " (line " + std::to_string(line_) + ")"), line(line_) {}
};
struct QuadratureError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};

// Thread count taken from POLYVEM_THREADS, else hardware concurrency.
inline int thread_count() {
  if (const char* s = std::getenv("POLYVEM_THREADS")) {
    int n = std::atoi(s);
    if (n > 0) return n;
  }
  unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

// Runs fn(i) for i in [0,n). Each index writes only its own output slot, so
// results do not depend on the number of threads.
template <class Fn>
void parallel_for(int n, Fn&& fn) {
  int nt = std::min(thread_count(), n);
  if (nt <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::exception_ptr err;
  std::mutex m;
  for (int t = 0; t < nt; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (int i = t; i < n; i += nt) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lk(m);
        if (!err) err = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

inline double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

}  // namespace polyvem
