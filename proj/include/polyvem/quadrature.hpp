#pragma once

#include "core.hpp"

#include <array>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

namespace polyvem {

struct QuadRule1D {
  std::vector<double> x;  // nodes on [-1,1]
  std::vector<double> w;
};

// Gauss-Legendre with n points on [-1,1]; Newton iteration on P_n.
inline QuadRule1D compute_gauss_legendre(int n) {
  QuadRule1D r;
  r.x.resize(n);
  r.w.resize(n);
  for (int i = 0; i < n; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1, p1 = x;
      for (int k = 2; k <= n; ++k) {
        double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1);
      double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    {
      double p0 = 1, p1 = x;
      for (int k = 2; k <= n; ++k) {
        double p2 = ((2 * k - 1) * x * p1 - (k - 1) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1);
    }
    r.x[n - 1 - i] = x;
    r.w[n - 1 - i] = 2.0 / ((1 - x * x) * dp * dp);
  }
  return r;
}

inline const QuadRule1D& gauss_legendre(int n) {
  static std::mutex m;
  static std::map<int, QuadRule1D> cache;
  std::lock_guard<std::mutex> lk(m);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, compute_gauss_legendre(n)).first;
  return it->second;
}

// Points for exact integration of degree `deg` polynomials in 1D.
inline int gauss_points_for_degree(int deg) { return std::max(1, deg / 2 + 1); }

struct QuadRule2D {
  std::vector<Vec2> pts;
  std::vector<double> w;
  int size() const { return static_cast<int>(w.size()); }
  void append(const QuadRule2D& o) {
    pts.insert(pts.end(), o.pts.begin(), o.pts.end());
    w.insert(w.end(), o.w.begin(), o.w.end());
  }
};

// Collapsed (Duffy) Gauss rule on a triangle, exact for total degree `deg`.
inline QuadRule2D triangle_rule(const Vec2& a, const Vec2& b, const Vec2& c, int deg) {
  const auto& gu = gauss_legendre(gauss_points_for_degree(deg + 1));
  const auto& gv = gauss_legendre(gauss_points_for_degree(deg));
  double area2 = cross2(b - a, c - a);
  QuadRule2D q;
  q.pts.reserve(gu.x.size() * gv.x.size());
  q.w.reserve(gu.x.size() * gv.x.size());
  for (size_t i = 0; i < gu.x.size(); ++i) {
    double u = 0.5 * (gu.x[i] + 1);
    for (size_t j = 0; j < gv.x.size(); ++j) {
      double v = 0.5 * (gv.x[j] + 1);
      q.pts.push_back(a + u * (b - a) + u * v * (c - b));
      q.w.push_back(0.25 * gu.w[i] * gv.w[j] * u * area2);
    }
  }
  return q;
}

inline double polygon_signed_area(const std::vector<Vec2>& v) {
  double s = 0;
  for (size_t i = 0; i < v.size(); ++i) s += cross2(v[i], v[(i + 1) % v.size()]);
  return 0.5 * s;
}

inline Vec2 polygon_centroid(const std::vector<Vec2>& v) {
  double a = 0;
  Vec2 c(0, 0);
  for (size_t i = 0; i < v.size(); ++i) {
    const Vec2& p = v[i];
    const Vec2& q = v[(i + 1) % v.size()];
    double cr = cross2(p, q);
    a += cr;
    c += cr * (p + q);
  }
  return c / (3 * a);
}

// Ear clipping of a simple CCW polygon into triangles (index triples).
inline std::vector<std::array<int, 3>> ear_clip(const std::vector<Vec2>& v) {
  std::vector<int> idx(v.size());
  for (size_t i = 0; i < v.size(); ++i) idx[i] = static_cast<int>(i);
  std::vector<std::array<int, 3>> tris;
  auto inside = [&](const Vec2& p, const Vec2& a, const Vec2& b, const Vec2& c) {
    return cross2(b - a, p - a) >= 0 && cross2(c - b, p - b) >= 0 && cross2(a - c, p - c) >= 0;
  };
  int guard = 0;
  while (idx.size() > 3) {
    bool clipped = false;
    int n = static_cast<int>(idx.size());
    for (int i = 0; i < n; ++i) {
      int ia = idx[(i + n - 1) % n], ib = idx[i], ic = idx[(i + 1) % n];
      const Vec2 &a = v[ia], &b = v[ib], &c = v[ic];
      if (cross2(b - a, c - b) <= 0) continue;
      bool ear = true;
      for (int j = 0; j < n && ear; ++j) {
        int k = idx[j];
        if (k == ia || k == ib || k == ic) continue;
        if (inside(v[k], a, b, c)) ear = false;
      }
      if (!ear) continue;
      tris.push_back({ia, ib, ic});
      idx.erase(idx.begin() + i);
      clipped = true;
      break;
    }
    if (!clipped || ++guard > 10000) throw QuadratureError("ear clipping failed: polygon is not simple");
  }
  tris.push_back({idx[0], idx[1], idx[2]});
  return tris;
}

// Polygon rule: fan about the centroid when every fan triangle is positive,
// otherwise ear clipping.
inline QuadRule2D polygon_rule(const std::vector<Vec2>& v, int deg) {
  if (v.size() < 3) throw QuadratureError("polygon needs at least 3 vertices");
  double area = polygon_signed_area(v);
  if (!(area > 0)) throw QuadratureError("polygon has non-positive area");
  Vec2 c = polygon_centroid(v);
  bool fan_ok = true;
  const double tol = 1e-14 * area;
  for (size_t i = 0; i < v.size(); ++i)
    if (cross2(v[i] - c, v[(i + 1) % v.size()] - c) <= tol) fan_ok = false;
  QuadRule2D q;
  if (fan_ok) {
    for (size_t i = 0; i < v.size(); ++i) q.append(triangle_rule(c, v[i], v[(i + 1) % v.size()], deg));
  } else {
    for (auto& t : ear_clip(v)) q.append(triangle_rule(v[t[0]], v[t[1]], v[t[2]], deg));
  }
  return q;
}

// Gauss rule on a segment a->b; weights include the length.
inline QuadRule2D segment_rule(const Vec2& a, const Vec2& b, int deg) {
  const auto& g = gauss_legendre(gauss_points_for_degree(deg));
  double len = (b - a).norm();
  QuadRule2D q;
  for (size_t i = 0; i < g.x.size(); ++i) {
    q.pts.push_back(a + 0.5 * (g.x[i] + 1) * (b - a));
    q.w.push_back(0.5 * g.w[i] * len);
  }
  return q;
}

}  // namespace polyvem
