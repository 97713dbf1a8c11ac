#include <gtest/gtest.h>

#include <polyvem/mesh.hpp>

#include <sstream>

using namespace polyvem;

namespace {

std::vector<PolygonalMesh> all_families() {
  return {generate_structured_quads(5), generate_randomized_quads(6, 0.2, 3), generate_hexagonal(6),
          generate_nonconvex_octagons(2), generate_voronoi(40, 11, 5)};
}

// Each interior edge has two cells, boundary edges lie on the square.
void expect_conforming(const PolygonalMesh& m) {
  for (auto& e : m.edges) {
    if (!e.is_boundary()) continue;
    Vec2 a = m.vertices[e.v0], b = m.vertices[e.v1];
    bool on_side = (std::abs(a.x()) < 1e-12 && std::abs(b.x()) < 1e-12) ||
                   (std::abs(a.x() - 1) < 1e-12 && std::abs(b.x() - 1) < 1e-12) ||
                   (std::abs(a.y()) < 1e-12 && std::abs(b.y()) < 1e-12) ||
                   (std::abs(a.y() - 1) < 1e-12 && std::abs(b.y() - 1) < 1e-12);
    EXPECT_TRUE(on_side) << a.transpose() << " / " << b.transpose();
  }
}

}  // namespace

TEST(Mesh, StructuredCounts) {
  auto m = generate_structured_quads(2);
  EXPECT_EQ(m.num_cells(), 4);
  EXPECT_EQ(m.num_vertices(), 9);
  EXPECT_EQ(m.num_edges(), 12);
  int nb = 0;
  for (auto& e : m.edges) nb += e.is_boundary();
  EXPECT_EQ(nb, 8);
  EXPECT_NEAR(m.vertex_h[4], std::sqrt(2.0) / 2, 1e-15);
}

TEST(Mesh, AreaSumsToOne) {
  for (auto& m : all_families()) {
    EXPECT_NEAR(m.total_area(), 1.0, 1e-10);
    expect_conforming(m);
  }
  EXPECT_NEAR(generate_voronoi(64, 7, 0).total_area(), 1.0, 1e-10);
}

TEST(Mesh, RandomizedIsDeterministicAndBounded) {
  auto a = generate_randomized_quads(8, 0.2, 42), b = generate_randomized_quads(8, 0.2, 42);
  EXPECT_EQ(mesh_to_string(a), mesh_to_string(b));
  EXPECT_NE(mesh_to_string(a), mesh_to_string(generate_randomized_quads(8, 0.2, 43)));
  auto s = generate_structured_quads(8);
  for (int v = 0; v < a.num_vertices(); ++v) {
    EXPECT_LE((a.vertices[v] - s.vertices[v]).cwiseAbs().maxCoeff(), 0.2 / 8 + 1e-15);
    if (s.boundary_vertex[v]) EXPECT_EQ(a.vertices[v], s.vertices[v]);
  }
  EXPECT_TRUE(cells_strictly_convex(a));
}

TEST(Mesh, HexagonalInteriorCells) {
  for (double amp : {0.0, 0.05}) {
    auto m = generate_hexagonal(4, amp);
    int interior = 0;
    for (int c = 0; c < m.num_cells(); ++c) {
      bool touches = false;
      for (auto& ce : m.cell_edges[c]) touches |= m.edges[ce.edge].is_boundary();
      if (touches) continue;
      ++interior;
      EXPECT_EQ(m.cells[c].size(), 6u);
    }
    EXPECT_GT(interior, 0);
    EXPECT_NEAR(m.total_area(), 1.0, 1e-12);
  }
  EXPECT_THROW(generate_hexagonal(1), MeshError);
}

TEST(Mesh, OctagonsHaveReflexVertices) {
  auto m = generate_nonconvex_octagons(2);
  EXPECT_EQ(m.num_cells(), 16 * 5);
  int octagons = 0;
  for (int c = 0; c < m.num_cells(); ++c)
    if (m.cells[c].size() == 8) {
      ++octagons;
      EXPECT_GE(count_reflex_vertices(m.cell_polygon(c)), 1);
    }
  EXPECT_EQ(octagons, 16);
  EXPECT_FALSE(check_regularity(m, 0.9).m2);
}

TEST(Mesh, Regularity) {
  auto r = check_regularity(generate_structured_quads(4), 0.5);
  EXPECT_TRUE(r.m2);
  EXPECT_FALSE(r.m1);
  EXPECT_NEAR(r.gamma_m1, 0.5 / std::sqrt(2.0), 1e-14);
  EXPECT_NEAR(r.gamma_m2, 1 / std::sqrt(2.0), 1e-14);
  auto o = check_regularity(generate_nonconvex_octagons(1), 0.05);
  EXPECT_TRUE(o.m1);  // star-shaped about the centroid
  EXPECT_GT(o.reflex_cells, 0);
}

TEST(Mesh, Voronoi) {
  auto one = generate_voronoi(1, 3, 0);
  EXPECT_EQ(one.num_cells(), 1);
  EXPECT_EQ(one.num_vertices(), 4);
  EXPECT_NEAR(one.total_area(), 1.0, 1e-15);
  LloydHistory hist;
  auto m = generate_voronoi(64, 7, 30, &hist);
  EXPECT_EQ(m.num_cells(), 64);
  EXPECT_NEAR(m.total_area(), 1.0, 1e-10);
  ASSERT_EQ(hist.energy.size(), 30u);
  // The centroidal energy never increases; the largest seed shift decays
  // overall but may wobble once the seeds are nearly centroidal.
  for (size_t i = 1; i < hist.energy.size(); ++i) EXPECT_LE(hist.energy[i], hist.energy[i - 1] * (1 + 1e-12)) << i;
  for (size_t i = 1; i < 10; ++i) EXPECT_LT(hist.max_shift[i], hist.max_shift[i - 1]) << i;
  EXPECT_LT(hist.max_shift.back(), 0.1 * hist.max_shift.front());
  EXPECT_EQ(mesh_to_string(m), mesh_to_string(generate_voronoi(64, 7, 30)));
}

TEST(Mesh, TextRoundTrip) {
  auto m = generate_hexagonal(5);
  mark_neumann(m, [](const Vec2& x) { return x.x() > 1 - 1e-12; });
  std::string s = mesh_to_string(m);
  std::istringstream is(s);
  auto r = read_mesh(is);
  EXPECT_EQ(mesh_to_string(r), s);
  int nn = 0;
  for (auto& e : r.edges) nn += e.marker == 'N';
  EXPECT_GT(nn, 0);
}

TEST(Mesh, ParseErrors) {
  {
    std::istringstream is("POLYMESH 1\n4 1\n0 0\n1 0\n1 1\n0 1\n4 0 1 2 x\n");
    try {
      read_mesh(is);
      FAIL();
    } catch (const ParseError& e) {
      EXPECT_EQ(e.line, 7);
    }
  }
  {
    std::istringstream is("POLYMESH 1\n4 1\n0 0\n1 0\n1 1\n0 1\n4 0 3 2 1\n");
    EXPECT_THROW(read_mesh(is), MeshError);  // clockwise
  }
  {
    std::istringstream is("MESH 2\n");
    EXPECT_THROW(read_mesh(is), ParseError);
  }
  EXPECT_THROW(load_mesh("/nonexistent/mesh.txt"), MeshError);
}
