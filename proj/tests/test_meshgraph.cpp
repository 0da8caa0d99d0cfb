#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "regunet/errors.hpp"
#include "regunet/meshgraph.hpp"
#include "regunet/rng.hpp"

using namespace rgn;

namespace {

Mesh flat_grid_mesh(std::size_t nx, std::size_t ny) {
  Mesh m;
  m.positions = Matrix(nx * ny, 3);
  for (std::size_t iy = 0; iy < ny; ++iy)
    for (std::size_t ix = 0; ix < nx; ++ix) {
      double* p = m.positions.row(iy * nx + ix);
      p[0] = static_cast<double>(ix);
      p[1] = static_cast<double>(iy);
      p[2] = 0.125 * static_cast<double>(ix + iy);
    }
  m.elements = grid_quads(nx, ny);
  m.fixed_mask.assign(nx * ny, 0);
  return m;
}

double quantize(double x) {
  return std::nearbyint(x * 67108864.0) / 67108864.0;  // 2^26
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(f)), {});
}

}  // namespace

TEST_CASE("a single quad yields all 6 pairs as 12 directed edges") {
  Mesh m;
  m.positions = Matrix(4, 3);
  m.elements = {{0, 1, 2, 3}};
  m.fixed_mask.assign(4, 0);
  Graph g = build_graph_from_mesh(m);
  CHECK(g.num_nodes == 4);
  CHECK(g.num_edges() == 12);
}

TEST_CASE("two quads sharing a side deduplicate to 22 directed edges") {
  Mesh m = flat_grid_mesh(3, 2);
  Graph g = build_graph_from_mesh(m);
  CHECK(g.num_nodes == 6);
  CHECK(g.num_edges() == 22);
}

TEST_CASE("the 33x9 grid yields 297 nodes and 2128 directed edges") {
  Mesh m = flat_grid_mesh(33, 9);
  Graph g = build_graph_from_mesh(m);
  CHECK(g.num_nodes == 297);
  CHECK(g.num_edges() == 2128);
}

TEST_CASE("graph edges are sorted directed pairs without self loops") {
  Mesh m = flat_grid_mesh(5, 4);
  Graph g = build_graph_from_mesh(m);
  std::set<std::pair<std::uint32_t, std::uint32_t>> seen;
  for (std::size_t e = 0; e < g.num_edges(); ++e) {
    CHECK(g.senders[e] != g.receivers[e]);
    seen.insert({g.senders[e], g.receivers[e]});
    if (e > 0) {
      const auto prev = std::make_pair(g.senders[e - 1], g.receivers[e - 1]);
      const auto curr = std::make_pair(g.senders[e], g.receivers[e]);
      CHECK(prev < curr);
    }
  }
  CHECK(seen.size() == g.num_edges());
  for (const auto& [s, r] : seen) CHECK(seen.count({r, s}) == 1);
}

TEST_CASE("recv index lists exactly the incoming edges of each node") {
  Mesh m = flat_grid_mesh(4, 3);
  Graph g = build_graph_from_mesh(m);
  for (std::size_t v = 0; v < g.num_nodes; ++v) {
    std::set<std::uint32_t> expected;
    for (std::uint32_t e = 0; e < g.num_edges(); ++e)
      if (g.receivers[e] == v) expected.insert(e);
    std::set<std::uint32_t> got(g.recv.edge_ids.begin() + g.recv.offsets[v],
                                g.recv.edge_ids.begin() +
                                    g.recv.offsets[v + 1]);
    CHECK(got == expected);
  }
}

TEST_CASE("mesh validation rejects bad elements and orphan nodes") {
  Mesh m;
  m.positions = Matrix(4, 3);
  m.elements = {{0, 1, 2, 9}};
  m.fixed_mask.assign(4, 0);
  CHECK_THROWS_AS(build_graph_from_mesh(m), InputError);

  Mesh orphan;
  orphan.positions = Matrix(5, 3);
  orphan.elements = {{0, 1, 2, 3}};
  orphan.fixed_mask.assign(5, 0);
  CHECK_THROWS_AS(build_graph_from_mesh(orphan), InputError);
}

TEST_CASE("coarsening the 33x9 grid gives 297/85/27/10 nodes") {
  Mesh m = flat_grid_mesh(33, 9);
  GraphHierarchy h = build_coarse_hierarchy(m, 33, 9, 3, 6);
  REQUIRE(h.levels.size() == 4);
  CHECK(h.levels[0].num_nodes == 297);
  CHECK(h.levels[1].num_nodes == 85);
  CHECK(h.levels[2].num_nodes == 27);
  CHECK(h.levels[3].num_nodes == 10);

  // Coarse nodes keep their benchmark positions (every 2^l-th grid node).
  CHECK(h.levels[1].positions(1, 0) == 2.0);
  CHECK(h.levels[3].positions(1, 0) == 8.0);

  // Coarse levels carry 4-channel rest edge features.
  for (std::size_t l = 1; l <= 3; ++l) {
    CHECK(h.levels[l].edge_features.rows() == h.levels[l].num_edges());
    CHECK(h.levels[l].edge_features.cols() == 4);
  }

  // Cross edges exist between coarse levels, never yet for level 0.
  REQUIRE(h.cross.size() == 3);
  CHECK(h.cross[0].num_edges() == 0);
  CHECK(h.cross[1].num_edges() == 85 * 6);
  CHECK(h.cross[2].num_edges() == 27 * 6);
}

TEST_CASE("a 3x3 grid coarsens to 2x2 with one level") {
  Mesh m = flat_grid_mesh(3, 3);
  GraphHierarchy h = build_coarse_hierarchy(m, 3, 3, 1, 2);
  REQUIRE(h.levels.size() == 2);
  CHECK(h.levels[0].num_nodes == 9);
  CHECK(h.levels[1].num_nodes == 4);
}

TEST_CASE("hierarchy construction is deterministic") {
  Mesh m = flat_grid_mesh(17, 9);
  GraphHierarchy a = build_coarse_hierarchy(m, 17, 9, 2, 4);
  GraphHierarchy b = build_coarse_hierarchy(m, 17, 9, 2, 4);
  for (std::size_t l = 0; l < a.levels.size(); ++l) {
    CHECK(a.levels[l].senders == b.levels[l].senders);
    CHECK(a.levels[l].receivers == b.levels[l].receivers);
    if (!a.levels[l].edge_features.empty())
      CHECK(std::memcmp(a.levels[l].edge_features.data(),
                        b.levels[l].edge_features.data(),
                        a.levels[l].edge_features.size() * sizeof(double)) ==
            0);
  }
  for (std::size_t l = 1; l < a.cross.size(); ++l) {
    CHECK(a.cross[l].senders == b.cross[l].senders);
    CHECK(a.cross[l].receivers == b.cross[l].receivers);
  }
}

TEST_CASE("ungridlike level requests are configuration errors") {
  Mesh m = flat_grid_mesh(33, 9);
  CHECK_THROWS_AS(build_coarse_hierarchy(m, 33, 9, 4, 6), ConfigError);
  Mesh m2 = flat_grid_mesh(4, 4);
  CHECK_THROWS_AS(build_coarse_hierarchy(m2, 4, 4, 1, 2), ConfigError);
}

TEST_CASE("cross edges pick the centroid for a symmetric square") {
  Matrix fine = Matrix::from_rows(4, 3, {0, 0, 0, 1, 0, 0, 0, 1, 0, 1, 1, 0});
  Matrix coarse = Matrix::from_rows(1, 3, {0.5, 0.5, 0});
  CrossGraphEdges cg = connect_cross_graph_edges(fine, coarse, 1);
  REQUIRE(cg.num_edges() == 4);
  for (std::size_t e = 0; e < 4; ++e) {
    CHECK(cg.receivers[e] == 0);
    CHECK(cg.rest_features(e, 3) ==
          doctest::Approx(std::sqrt(2.0) / 2.0).epsilon(1e-15));
  }
}

TEST_CASE("cross edges assign collinear nodes to their nearest coarse node") {
  Matrix fine = Matrix::from_rows(4, 3, {0, 0, 0, 1, 0, 0, 2, 0, 0, 3, 0, 0});
  Matrix coarse = Matrix::from_rows(2, 3, {0.5, 0, 0, 2.5, 0, 0});
  CrossGraphEdges cg = connect_cross_graph_edges(fine, coarse, 1);
  REQUIRE(cg.num_edges() == 4);
  CHECK(cg.receivers[0] == 0);
  CHECK(cg.receivers[1] == 0);
  CHECK(cg.receivers[2] == 1);
  CHECK(cg.receivers[3] == 1);
}

TEST_CASE("cross edge distance ties go to the smaller coarse index") {
  Matrix fine = Matrix::from_rows(1, 3, {1.5, 0, 0});
  Matrix coarse = Matrix::from_rows(3, 3, {2, 0, 0, 1, 0, 0, 5, 0, 0});
  CrossGraphEdges cg = connect_cross_graph_edges(fine, coarse, 2);
  REQUIRE(cg.num_edges() == 2);
  // Coarse 0 (x=2) and 1 (x=1) are equidistant; nearest-first order breaks
  // the tie toward index 0.
  CHECK(cg.receivers[0] == 0);
  CHECK(cg.receivers[1] == 1);
}

TEST_CASE("every fine node gets exactly k cross edges") {
  Mesh m = flat_grid_mesh(9, 5);
  GraphHierarchy h = build_coarse_hierarchy(m, 9, 5, 1, 3);
  CrossGraphEdges cg =
      connect_cross_graph_edges(h.levels[0].positions, h.levels[1].positions,
                                3);
  std::vector<int> degree(h.levels[0].num_nodes, 0);
  for (std::uint32_t s : cg.senders) degree[s]++;
  for (int d : degree) CHECK(d == 3);
  CHECK_THROWS_AS(
      connect_cross_graph_edges(h.levels[0].positions,
                                h.levels[1].positions, 99),
      ConfigError);
}

TEST_CASE("node features are increments and zero at the first snapshot") {
  Matrix prev = Matrix::from_rows(2, 3, {0, 0, 0, 4, 5, 6});
  Matrix curr = Matrix::from_rows(2, 3, {1, -2, 0.5, 4, 5, 6});
  Matrix f = compute_node_features(prev, curr);
  CHECK(f(0, 0) == 1.0);
  CHECK(f(0, 1) == -2.0);
  CHECK(f(0, 2) == 0.5);
  CHECK(f(1, 0) == 0.0);

  Matrix same = compute_node_features(curr, curr);
  for (std::size_t i = 0; i < same.size(); ++i) CHECK(same.data()[i] == 0.0);

  // Rigid translation between snapshots: every row equals the shift.
  Matrix moved = curr;
  for (std::size_t i = 0; i < moved.rows(); ++i) {
    moved(i, 0) += 17.0;
    moved(i, 1) += -5.0;
    moved(i, 2) += 3.0;
  }
  Matrix rows = compute_node_features(curr, moved);
  for (std::size_t i = 0; i < rows.rows(); ++i) {
    CHECK(rows(i, 0) == 17.0);
    CHECK(rows(i, 1) == -5.0);
    CHECK(rows(i, 2) == 3.0);
  }

  CHECK_THROWS_AS(compute_node_features(Matrix(3, 3), Matrix(2, 3)),
                  InputError);
}

TEST_CASE("edge features encode current and rest deltas with norms") {
  Matrix init = Matrix::from_rows(2, 3, {0, 0, 0, 1, 2, 2});
  std::vector<std::uint32_t> senders{0, 1};
  std::vector<std::uint32_t> receivers{1, 0};
  Matrix f = compute_edge_features(init, init, senders, receivers);
  REQUIRE(f.cols() == 8);
  CHECK(f(0, 0) == 1.0);
  CHECK(f(0, 1) == 2.0);
  CHECK(f(0, 2) == 2.0);
  CHECK(f(0, 3) == 3.0);  // the 1-2-2 right triple
  CHECK(f(0, 4) == 1.0);
  CHECK(f(0, 7) == 3.0);
  // Reversed edge: delta channels negate, norms stay.
  CHECK(f(1, 0) == -1.0);
  CHECK(f(1, 1) == -2.0);
  CHECK(f(1, 2) == -2.0);
  CHECK(f(1, 3) == 3.0);
  CHECK(f(1, 4) == -1.0);
  CHECK(f(1, 7) == 3.0);
}

TEST_CASE("features are bit-exact under rigid translation of snapped "
          "positions") {
  Rng rng(77);
  const std::size_t n = 40;
  Matrix init(n, 3), curr(n, 3);
  for (std::size_t i = 0; i < init.size(); ++i) {
    init.data()[i] = quantize(rng.symmetric(400.0));
    curr.data()[i] = quantize(init.data()[i] + rng.symmetric(3.0));
  }
  std::vector<std::uint32_t> senders, receivers;
  for (std::uint32_t i = 0; i + 1 < n; ++i) {
    senders.push_back(i);
    receivers.push_back(i + 1);
  }
  Matrix f0 = compute_edge_features(curr, init, senders, receivers);
  Matrix prev_f0 = compute_node_features(init, curr);

  Matrix init_t = init, curr_t = curr;
  const double shift[3] = {17.0, -5.0, 3.0};
  for (std::size_t i = 0; i < n; ++i)
    for (int d = 0; d < 3; ++d) {
      init_t(i, d) += shift[d];
      curr_t(i, d) += shift[d];
    }
  Matrix f1 = compute_edge_features(curr_t, init_t, senders, receivers);
  Matrix prev_f1 = compute_node_features(init_t, curr_t);
  CHECK(std::memcmp(f0.data(), f1.data(), f0.size() * sizeof(double)) == 0);
  CHECK(std::memcmp(prev_f0.data(), prev_f1.data(),
                    prev_f0.size() * sizeof(double)) == 0);
}

namespace {

GraphSequence small_sequence(std::size_t n, std::size_t m, std::size_t t,
                             std::uint64_t seed) {
  Rng rng(seed);
  GraphSequence s;
  s.control_point = 2;
  s.amplitude = -1.75;
  s.fixed_mask.assign(n, 0);
  s.fixed_mask[0] = 1;
  for (std::size_t e = 0; e < m; ++e) {
    s.senders.push_back(static_cast<std::uint32_t>(e % n));
    s.receivers.push_back(static_cast<std::uint32_t>((e + 1) % n));
  }
  for (std::size_t step = 0; step < t; ++step) {
    Matrix p(n, 3);
    for (std::size_t i = 0; i < p.size(); ++i)
      p.data()[i] = rng.symmetric(100.0);
    s.positions.push_back(std::move(p));
  }
  return s;
}

}  // namespace

TEST_CASE("sample files round trip byte-exactly") {
  GraphSequence s = small_sequence(5, 8, 3, 123);
  const std::string p1 = temp_path("sample_a.rgsq");
  const std::string p2 = temp_path("sample_b.rgsq");
  write_sample(p1, s);
  GraphSequence r = read_sample(p1);
  CHECK(r.control_point == s.control_point);
  CHECK(r.amplitude == s.amplitude);
  CHECK(r.fixed_mask == s.fixed_mask);
  CHECK(r.senders == s.senders);
  CHECK(r.receivers == s.receivers);
  REQUIRE(r.positions.size() == s.positions.size());
  for (std::size_t t = 0; t < s.positions.size(); ++t)
    CHECK(std::memcmp(r.positions[t].data(), s.positions[t].data(),
                      s.positions[t].size() * sizeof(double)) == 0);
  write_sample(p2, r);
  CHECK(file_bytes(p1) == file_bytes(p2));
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
}

TEST_CASE("sample file size follows the layout arithmetic") {
  // 32-byte header + N mask bytes + 2M uint32 + T*N*3 float64.
  GraphSequence s = small_sequence(4, 12, 2, 9);
  const std::string p = temp_path("size_small.rgsq");
  write_sample(p, s);
  CHECK(std::filesystem::file_size(p) == 32 + 4 + 8 * 12 + 24 * 4 * 2);
  std::filesystem::remove(p);

  GraphSequence big = small_sequence(297, 2128, 12, 10);
  const std::string pb = temp_path("size_big.rgsq");
  write_sample(pb, big);
  CHECK(std::filesystem::file_size(pb) == 102889);
  std::filesystem::remove(pb);
}

TEST_CASE("sample reader rejects malformed files") {
  GraphSequence s = small_sequence(5, 8, 3, 321);
  const std::string p = temp_path("bad.rgsq");
  write_sample(p, s);

  auto patch = [&](std::size_t offset, unsigned char value) {
    std::fstream f(p, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(static_cast<std::streamoff>(offset));
    f.put(static_cast<char>(value));
  };

  patch(0, 'X');
  try {
    read_sample(p);
    FAIL("expected magic error");
  } catch (const FormatError& e) {
    CHECK(e.offset == 0);
  }
  patch(0, 'R');

  patch(4, 3);  // version
  CHECK_THROWS_AS(read_sample(p), FormatError);
  patch(4, 1);

  patch(32, 7);  // fixed mask byte
  try {
    read_sample(p);
    FAIL("expected mask error");
  } catch (const FormatError& e) {
    CHECK(e.offset == 32);
  }
  patch(32, 1);

  patch(32 + 5, 200);  // first sender index
  CHECK_THROWS_AS(read_sample(p), FormatError);
  patch(32 + 5, 0);
  read_sample(p);  // back to valid

  std::filesystem::resize_file(p, 60);
  CHECK_THROWS_AS(read_sample(p), FormatError);
  std::filesystem::remove(p);
}
