#pragma once

#include "quadrature.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>
#include <unordered_map>

namespace polyvem {

struct Edge {
  int v0 = -1, v1 = -1;      // v0 < v1 fixes the global orientation
  int cell[2] = {-1, -1};    // cell[1] == -1 on the boundary
  char marker = 0;           // 'D' or 'N' on boundary edges, 0 inside
  bool is_boundary() const { return cell[1] < 0; }
};

// Local edge i of a cell runs from vertex i to vertex i+1. `reversed` means
// that direction is opposite to the global orientation v0 -> v1.
struct CellEdge {
  int edge = -1;
  bool reversed = false;
};

struct PolygonalMesh {
  std::vector<Vec2> vertices;
  std::vector<std::vector<int>> cells;  // CCW vertex lists
  std::vector<Edge> edges;
  std::vector<std::vector<CellEdge>> cell_edges;
  std::vector<double> vertex_h;     // mean diameter of the cells sharing a vertex
  std::vector<char> boundary_vertex;

  int num_vertices() const { return static_cast<int>(vertices.size()); }
  int num_cells() const { return static_cast<int>(cells.size()); }
  int num_edges() const { return static_cast<int>(edges.size()); }

  std::vector<Vec2> cell_polygon(int c) const {
    std::vector<Vec2> p;
    p.reserve(cells[c].size());
    for (int v : cells[c]) p.push_back(vertices[v]);
    return p;
  }

  double cell_diameter(int c) const {
    double d = 0;
    const auto& cv = cells[c];
    for (size_t i = 0; i < cv.size(); ++i)
      for (size_t j = i + 1; j < cv.size(); ++j) d = std::max(d, (vertices[cv[i]] - vertices[cv[j]]).norm());
    return d;
  }

  double max_diameter() const {
    double h = 0;
    for (int c = 0; c < num_cells(); ++c) h = std::max(h, cell_diameter(c));
    return h;
  }
  double min_diameter() const {
    double h = 1e300;
    for (int c = 0; c < num_cells(); ++c) h = std::min(h, cell_diameter(c));
    return h;
  }
  double total_area() const {
    double a = 0;
    for (int c = 0; c < num_cells(); ++c) a += polygon_signed_area(cell_polygon(c));
    return a;
  }

  // Derives edges, adjacency, boundary flags and h_V. Existing boundary
  // markers are kept when the edge survives; others default to 'D'.
  void build_topology() {
    std::map<std::pair<int, int>, char> old_markers;
    for (auto& e : edges)
      if (e.marker) old_markers[{e.v0, e.v1}] = e.marker;
    edges.clear();
    cell_edges.assign(cells.size(), {});
    std::unordered_map<std::uint64_t, int> lookup;
    const int nv = num_vertices();
    for (int c = 0; c < num_cells(); ++c) {
      const auto& cv = cells[c];
      if (cv.size() < 3) throw MeshError("cell " + std::to_string(c) + " has fewer than 3 vertices");
      for (size_t i = 0; i < cv.size(); ++i) {
        int a = cv[i], b = cv[(i + 1) % cv.size()];
        if (a < 0 || a >= nv || b < 0 || b >= nv)
          throw MeshError("cell " + std::to_string(c) + " references a missing vertex");
        if (a == b) throw MeshError("cell " + std::to_string(c) + " has a repeated vertex");
        int lo = std::min(a, b), hi = std::max(a, b);
        std::uint64_t key = static_cast<std::uint64_t>(lo) * nv + hi;
        auto it = lookup.find(key);
        if (it == lookup.end()) {
          Edge e;
          e.v0 = lo, e.v1 = hi;
          e.cell[0] = c;
          lookup.emplace(key, num_edges());
          cell_edges[c].push_back({num_edges(), a > b});
          edges.push_back(e);
        } else {
          Edge& e = edges[it->second];
          if (e.cell[1] >= 0) throw MeshError("edge shared by more than two cells");
          bool rev = a > b;
          for (auto& ce : cell_edges[e.cell[0]])
            if (ce.edge == it->second && ce.reversed == rev)
              throw MeshError("neighbouring cells traverse an edge in the same direction");
          e.cell[1] = c;
          cell_edges[c].push_back({it->second, rev});
        }
      }
    }
    boundary_vertex.assign(nv, 0);
    for (auto& e : edges)
      if (e.is_boundary()) {
        auto it = old_markers.find({e.v0, e.v1});
        e.marker = it == old_markers.end() ? 'D' : it->second;
        boundary_vertex[e.v0] = boundary_vertex[e.v1] = 1;
      }
    vertex_h.assign(nv, 0);
    std::vector<int> count(nv, 0);
    for (int c = 0; c < num_cells(); ++c) {
      double d = cell_diameter(c);
      for (int v : cells[c]) vertex_h[v] += d, ++count[v];
    }
    for (int v = 0; v < nv; ++v) {
      if (count[v] == 0) throw MeshError("vertex " + std::to_string(v) + " belongs to no cell");
      vertex_h[v] /= count[v];
    }
  }

  void validate() const {
    for (int c = 0; c < num_cells(); ++c)
      if (!(polygon_signed_area(cell_polygon(c)) > 0))
        throw MeshError("cell " + std::to_string(c) + " is not counter-clockwise");
  }
};

struct CellGeometry {
  std::vector<Vec2> vertices;
  Vec2 centroid{0, 0};
  double area = 0;
  double diameter = 0;
  std::vector<double> edge_length;
  std::vector<Vec2> edge_normal;   // outward unit normal of local edge i
  std::vector<Vec2> edge_tangent;  // unit tangent along the CCW traversal

  int size() const { return static_cast<int>(vertices.size()); }

  static CellGeometry from_polygon(const std::vector<Vec2>& poly) {
    CellGeometry g;
    g.vertices = poly;
    g.area = polygon_signed_area(poly);
    if (!(g.area > 0)) throw MeshError("cell has non-positive signed area");
    g.centroid = polygon_centroid(poly);
    const int n = g.size();
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) g.diameter = std::max(g.diameter, (poly[i] - poly[j]).norm());
    for (int i = 0; i < n; ++i) {
      Vec2 d = poly[(i + 1) % n] - poly[i];
      double l = d.norm();
      g.edge_length.push_back(l);
      g.edge_tangent.push_back(d / l);
      g.edge_normal.push_back(Vec2(d.y(), -d.x()) / l);
    }
    return g;
  }
  static CellGeometry from_mesh(const PolygonalMesh& m, int c) { return from_polygon(m.cell_polygon(c)); }
};

// ---------------------------------------------------------------------------
// Polygon soup -> mesh with welded vertices.

namespace detail {

inline PolygonalMesh weld_polygons(const std::vector<std::vector<Vec2>>& polys, double tol = 1e-10) {
  PolygonalMesh m;
  std::unordered_map<std::uint64_t, std::vector<int>> grid;
  auto cell_key = [&](long long ix, long long iy) {
    return (static_cast<std::uint64_t>(ix + (1LL << 31)) << 32) ^ static_cast<std::uint64_t>(iy + (1LL << 31));
  };
  auto find_or_add = [&](const Vec2& p) {
    long long ix = std::llround(p.x() / tol / 4), iy = std::llround(p.y() / tol / 4);
    for (long long dx = -1; dx <= 1; ++dx)
      for (long long dy = -1; dy <= 1; ++dy) {
        auto it = grid.find(cell_key(ix + dx, iy + dy));
        if (it == grid.end()) continue;
        for (int v : it->second)
          if ((m.vertices[v] - p).norm() <= tol) return v;
      }
    int id = m.num_vertices();
    m.vertices.push_back(p);
    grid[cell_key(ix, iy)].push_back(id);
    return id;
  };
  for (const auto& poly : polys) {
    std::vector<int> cell;
    for (const auto& p : poly) {
      int id = find_or_add(p);
      if (!cell.empty() && cell.back() == id) continue;
      cell.push_back(id);
    }
    while (cell.size() > 1 && cell.front() == cell.back()) cell.pop_back();
    if (cell.size() >= 3) m.cells.push_back(cell);
  }
  m.build_topology();
  m.validate();
  return m;
}

// Maps a 64-bit engine draw to [0,1) independently of the standard library.
inline double unit_draw(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Clip a convex CCW polygon by the half-plane n.(x - p) <= 0.
inline std::vector<Vec2> clip_halfplane(const std::vector<Vec2>& poly, const Vec2& p, const Vec2& n) {
  std::vector<Vec2> out;
  const size_t m = poly.size();
  for (size_t i = 0; i < m; ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % m];
    double da = n.dot(a - p), db = n.dot(b - p);
    if (da <= 0) out.push_back(a);
    if ((da < 0 && db > 0) || (da > 0 && db < 0)) out.push_back(a + (da / (da - db)) * (b - a));
  }
  return out;
}

// Voronoi cells of `seeds` clipped to the unit square.
inline std::vector<std::vector<Vec2>> voronoi_cells(const std::vector<Vec2>& seeds) {
  const int n = static_cast<int>(seeds.size());
  std::vector<std::vector<Vec2>> cells(n);
  parallel_for(n, [&](int i) {
    std::vector<Vec2> poly{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
    std::vector<std::pair<double, int>> order;
    order.reserve(n);
    for (int j = 0; j < n; ++j)
      if (j != i) order.push_back({(seeds[j] - seeds[i]).squaredNorm(), j});
    std::sort(order.begin(), order.end());
    for (auto [d2, j] : order) {
      double r2 = 0;
      for (auto& v : poly) r2 = std::max(r2, (v - seeds[i]).squaredNorm());
      if (d2 > 4 * r2) break;
      Vec2 mid = 0.5 * (seeds[i] + seeds[j]);
      poly = clip_halfplane(poly, mid, seeds[j] - seeds[i]);
      if (poly.size() < 3) break;
    }
    cells[i] = poly;
  });
  return cells;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Generators on the unit square.

inline PolygonalMesh generate_structured_quads(int n) {
  if (n < 1) throw MeshError("structured quads need n >= 1");
  PolygonalMesh m;
  for (int j = 0; j <= n; ++j)
    for (int i = 0; i <= n; ++i) m.vertices.push_back(Vec2(double(i) / n, double(j) / n));
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      int a = j * (n + 1) + i;
      m.cells.push_back({a, a + 1, a + n + 2, a + n + 1});
    }
  m.build_topology();
  return m;
}

inline bool cells_strictly_convex(const PolygonalMesh& m) {
  for (int c = 0; c < m.num_cells(); ++c) {
    auto p = m.cell_polygon(c);
    for (size_t i = 0; i < p.size(); ++i) {
      const Vec2& a = p[(i + p.size() - 1) % p.size()];
      const Vec2& b = p[i];
      const Vec2& d = p[(i + 1) % p.size()];
      if (cross2(b - a, d - b) <= 0) return false;
    }
  }
  return true;
}

// Interior vertices moved by at most jitter/n per coordinate.
inline PolygonalMesh generate_randomized_quads(int n, double jitter = 0.2, std::uint64_t seed = 0) {
  if (n < 1) throw MeshError("randomized quads need n >= 1");
  if (jitter < 0 || jitter >= 0.5) throw MeshError("jitter must lie in [0, 0.5)");
  for (int attempt = 0; attempt < 10; ++attempt) {
    PolygonalMesh m = generate_structured_quads(n);
    std::mt19937_64 rng(seed + attempt);
    for (int j = 1; j < n; ++j)
      for (int i = 1; i < n; ++i) {
        Vec2& v = m.vertices[j * (n + 1) + i];
        v.x() += jitter / n * (2 * detail::unit_draw(rng) - 1);
        v.y() += jitter / n * (2 * detail::unit_draw(rng) - 1);
      }
    if (cells_strictly_convex(m)) {
      m.build_topology();
      return m;
    }
  }
  throw MeshError("no valid randomized quad mesh within 10 seeds");
}

// Voronoi tessellation of an offset lattice, clipped to the square, then
// distorted by x + a sin(2 pi x) sin(2 pi y) in both coordinates.
inline PolygonalMesh generate_hexagonal(int n, double amplitude = 0.05) {
  if (n < 2) throw MeshError("hexagonal mesh needs n >= 2");
  const int rows = std::max(2, static_cast<int>(std::lround(n * 2 / std::sqrt(3.0))));
  std::vector<Vec2> seeds;
  for (int j = 0; j < rows; ++j) {
    double y = (j + 0.5) / rows;
    if (j % 2 == 0)
      for (int i = 0; i < n; ++i) seeds.push_back({(i + 0.5) / n, y});
    else
      for (int i = 0; i <= n; ++i) seeds.push_back({double(i) / n, y});
  }
  PolygonalMesh m = detail::weld_polygons(detail::voronoi_cells(seeds));
  const double tp = 2 * std::numbers::pi;
  for (auto& v : m.vertices) {
    if (v.x() == 0 || v.x() == 1 || v.y() == 0 || v.y() == 1) continue;
    double s = amplitude * std::sin(tp * v.x()) * std::sin(tp * v.y());
    v = Vec2(v.x() + s, v.y() + s);
  }
  m.build_topology();
  m.validate();
  return m;
}

// 2n x 2n square blocks; each holds a star-shaped octagon with four reflex
// vertices and four kite-shaped corner quads.
inline PolygonalMesh generate_nonconvex_octagons(int n, double inset = 0.15) {
  if (n < 1) throw MeshError("octagon mesh needs n >= 1");
  if (inset <= 0 || inset >= 0.25) throw MeshError("octagon inset must lie in (0, 0.25)");
  const int nb = 2 * n;
  const double s = 1.0 / nb;
  std::vector<std::vector<Vec2>> polys;
  for (int j = 0; j < nb; ++j)
    for (int i = 0; i < nb; ++i) {
      double x0 = i * s, x1 = (i + 1 == nb) ? 1.0 : (i + 1) * s;
      double y0 = j * s, y1 = (j + 1 == nb) ? 1.0 : (j + 1) * s;
      double cx = 0.5 * (x0 + x1), cy = 0.5 * (y0 + y1), d = inset * s;
      Vec2 mb(cx, y0), mr(x1, cy), mt(cx, y1), ml(x0, cy);
      Vec2 rbl(cx - d, cy - d), rbr(cx + d, cy - d), rtr(cx + d, cy + d), rtl(cx - d, cy + d);
      polys.push_back({mb, rbr, mr, rtr, mt, rtl, ml, rbl});
      polys.push_back({Vec2(x0, y0), mb, rbl, ml});
      polys.push_back({Vec2(x1, y0), mr, rbr, mb});
      polys.push_back({Vec2(x1, y1), mt, rtr, mr});
      polys.push_back({Vec2(x0, y1), ml, rtl, mt});
    }
  return detail::weld_polygons(polys);
}

// Per-sweep diagnostics of Lloyd relaxation: the largest centroid-to-seed
// distance and the centroidal energy sum_i int_{V_i} |x - s_i|^2, both
// measured before the seeds move.
struct LloydHistory {
  std::vector<double> max_shift;
  std::vector<double> energy;
};

inline double cvt_energy(const std::vector<std::vector<Vec2>>& cells, const std::vector<Vec2>& seeds) {
  double e = 0;
  for (size_t i = 0; i < cells.size(); ++i) {
    QuadRule2D q = polygon_rule(cells[i], 2);
    for (int k = 0; k < q.size(); ++k) e += q.w[k] * (q.pts[k] - seeds[i]).squaredNorm();
  }
  return e;
}

// Clipped Voronoi mesh from uniform seeds with optional Lloyd relaxation.
inline PolygonalMesh generate_voronoi(int n_seeds, std::uint64_t seed = 0, int lloyd_iters = 0,
                                      LloydHistory* history = nullptr) {
  if (n_seeds < 1) throw MeshError("voronoi mesh needs at least one seed");
  std::mt19937_64 rng(seed);
  std::vector<Vec2> seeds(n_seeds);
  for (auto& s : seeds) {
    double x = detail::unit_draw(rng);
    double y = detail::unit_draw(rng);
    s = Vec2(x, y);
  }
  auto cells = detail::voronoi_cells(seeds);
  for (int it = 0; it < lloyd_iters; ++it) {
    if (history) history->energy.push_back(cvt_energy(cells, seeds));
    double dmax = 0;
    for (int i = 0; i < n_seeds; ++i) {
      Vec2 c = polygon_centroid(cells[i]);
      dmax = std::max(dmax, (c - seeds[i]).norm());
      seeds[i] = c;
    }
    if (history) history->max_shift.push_back(dmax);
    cells = detail::voronoi_cells(seeds);
  }
  return detail::weld_polygons(cells);
}

// ---------------------------------------------------------------------------
// Regularity.

struct RegularityReport {
  bool m1 = true;        // star-shaped about the centroid with distance >= gamma h_P
  bool m2 = true;        // every edge length >= gamma h_P
  double gamma_m1 = 1e300;  // smallest measured ratio
  double gamma_m2 = 1e300;
  int worst_cell_m1 = -1, worst_cell_m2 = -1;
  int reflex_cells = 0;
};

inline int count_reflex_vertices(const std::vector<Vec2>& p) {
  int r = 0;
  for (size_t i = 0; i < p.size(); ++i) {
    const Vec2& a = p[(i + p.size() - 1) % p.size()];
    const Vec2& b = p[i];
    const Vec2& c = p[(i + 1) % p.size()];
    if (cross2(b - a, c - b) < -1e-14) ++r;
  }
  return r;
}

inline RegularityReport check_regularity(const PolygonalMesh& m, double gamma) {
  RegularityReport r;
  for (int c = 0; c < m.num_cells(); ++c) {
    CellGeometry g = CellGeometry::from_mesh(m, c);
    double e_min = *std::min_element(g.edge_length.begin(), g.edge_length.end());
    double q2 = e_min / g.diameter;
    if (q2 < r.gamma_m2) r.gamma_m2 = q2, r.worst_cell_m2 = c;
    // Distance from the centroid to every edge line; negative when the
    // centroid falls on the wrong side, i.e. not star-shaped about it.
    double q1 = 1e300;
    for (int i = 0; i < g.size(); ++i) q1 = std::min(q1, g.edge_normal[i].dot(g.vertices[i] - g.centroid));
    q1 /= g.diameter;
    if (q1 < r.gamma_m1) r.gamma_m1 = q1, r.worst_cell_m1 = c;
    if (count_reflex_vertices(g.vertices) > 0) ++r.reflex_cells;
  }
  r.m1 = r.gamma_m1 >= gamma;
  r.m2 = r.gamma_m2 >= gamma;
  return r;
}

// ---------------------------------------------------------------------------
// Text format:
//   POLYMESH 1
//   <nv> <nc>
//   x y            (nv lines)
//   m v1 .. vm     (nc lines)
//   BOUNDARY <ne>  (optional)
//   va vb D|N

inline void write_mesh(std::ostream& os, const PolygonalMesh& m) {
  os << "POLYMESH 1\n" << m.num_vertices() << ' ' << m.num_cells() << '\n';
  os << std::setprecision(17);
  for (auto& v : m.vertices) os << v.x() << ' ' << v.y() << '\n';
  for (auto& c : m.cells) {
    os << c.size();
    for (int v : c) os << ' ' << v;
    os << '\n';
  }
  int nb = 0;
  for (auto& e : m.edges) nb += e.is_boundary();
  os << "BOUNDARY " << nb << '\n';
  for (auto& e : m.edges)
    if (e.is_boundary()) os << e.v0 << ' ' << e.v1 << ' ' << e.marker << '\n';
}

inline std::string mesh_to_string(const PolygonalMesh& m) {
  std::ostringstream os;
  write_mesh(os, m);
  return os.str();
}

inline void save_mesh(const std::string& path, const PolygonalMesh& m) {
  std::ofstream f(path);
  if (!f) throw MeshError("cannot open " + path + " for writing");
  write_mesh(f, m);
}

inline PolygonalMesh read_mesh(std::istream& is) {
  PolygonalMesh m;
  std::string line;
  int lineno = 0;
  auto next = [&]() -> std::istringstream {
    while (std::getline(is, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") != std::string::npos) return std::istringstream(line);
    }
    throw ParseError("unexpected end of file", lineno);
  };
  {
    auto s = next();
    std::string tag;
    int ver = 0;
    if (!(s >> tag >> ver) || tag != "POLYMESH" || ver != 1) throw ParseError("expected 'POLYMESH 1'", lineno);
  }
  int nv = 0, nc = 0;
  {
    auto s = next();
    if (!(s >> nv >> nc) || nv < 3 || nc < 1) throw ParseError("bad vertex/cell counts", lineno);
  }
  m.vertices.resize(nv);
  for (int i = 0; i < nv; ++i) {
    auto s = next();
    double x, y;
    if (!(s >> x >> y)) throw ParseError("bad vertex coordinates", lineno);
    m.vertices[i] = Vec2(x, y);
  }
  m.cells.resize(nc);
  for (int c = 0; c < nc; ++c) {
    auto s = next();
    int k = 0;
    if (!(s >> k) || k < 3) throw ParseError("bad cell size", lineno);
    m.cells[c].resize(k);
    for (int i = 0; i < k; ++i) {
      if (!(s >> m.cells[c][i])) throw ParseError("bad cell vertex list", lineno);
      if (m.cells[c][i] < 0 || m.cells[c][i] >= nv) throw ParseError("vertex index out of range", lineno);
    }
  }
  std::vector<std::tuple<int, int, char>> markers;
  while (std::getline(is, line)) {
    ++lineno;
    std::istringstream s(line);
    std::string tag;
    if (!(s >> tag)) continue;
    if (tag != "BOUNDARY") throw ParseError("unexpected content '" + tag + "'", lineno);
    int ne = 0;
    if (!(s >> ne) || ne < 0) throw ParseError("bad boundary count", lineno);
    for (int i = 0; i < ne; ++i) {
      auto t = next();
      int a, b;
      char mk;
      if (!(t >> a >> b >> mk) || (mk != 'D' && mk != 'N')) throw ParseError("bad boundary entry", lineno);
      markers.emplace_back(std::min(a, b), std::max(a, b), mk);
    }
    break;
  }
  m.build_topology();
  m.validate();
  for (auto& [a, b, mk] : markers) {
    bool found = false;
    for (auto& e : m.edges)
      if (e.v0 == a && e.v1 == b && e.is_boundary()) e.marker = mk, found = true;
    if (!found) throw MeshError("boundary entry " + std::to_string(a) + " " + std::to_string(b) + " is not a boundary edge");
  }
  return m;
}

inline PolygonalMesh load_mesh(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw MeshError("cannot open mesh file " + path);
  return read_mesh(f);
}

// Marks boundary edges whose midpoint satisfies `pred` as Neumann.
template <class Pred>
void mark_neumann(PolygonalMesh& m, Pred pred) {
  for (auto& e : m.edges)
    if (e.is_boundary() && pred(0.5 * (m.vertices[e.v0] + m.vertices[e.v1]))) e.marker = 'N';
}

// Family dispatcher used by the command line tool.
struct MeshSpec {
  std::string family = "quads";
  int n = 4;
  std::uint64_t seed = 0;
  double jitter = 0.2;
  double amplitude = 0.05;
  int lloyd = 0;
};

inline PolygonalMesh generate_mesh(const MeshSpec& s) {
  if (s.family == "quads") return generate_structured_quads(s.n);
  if (s.family == "quads-random") return generate_randomized_quads(s.n, s.jitter, s.seed);
  if (s.family == "hex") return generate_hexagonal(s.n, s.amplitude);
  if (s.family == "octagons") return generate_nonconvex_octagons(s.n);
  if (s.family == "voronoi") return generate_voronoi(s.n, s.seed, s.lloyd);
  throw MeshError("unknown mesh family '" + s.family + "'");
}

}  // namespace polyvem
