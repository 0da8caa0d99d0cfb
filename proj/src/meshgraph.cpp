#include "regunet/meshgraph.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "regunet/binio.hpp"
#include "regunet/errors.hpp"

namespace rgn {

std::vector<std::array<std::uint32_t, 4>> grid_quads(std::size_t nx,
                                                     std::size_t ny) {
  if (nx < 2 || ny < 2) throw ConfigError("grid_quads: need at least 2x2");
  std::vector<std::array<std::uint32_t, 4>> quads;
  quads.reserve((nx - 1) * (ny - 1));
  for (std::size_t iy = 0; iy + 1 < ny; ++iy)
    for (std::size_t ix = 0; ix + 1 < nx; ++ix) {
      const std::uint32_t a = static_cast<std::uint32_t>(iy * nx + ix);
      const std::uint32_t b = a + 1;
      const std::uint32_t c = static_cast<std::uint32_t>((iy + 1) * nx + ix);
      quads.push_back({a, b, c + 1, c});
    }
  return quads;
}

RecvIndex build_recv_index(const std::vector<std::uint32_t>& receivers,
                           std::size_t num_nodes) {
  RecvIndex r;
  r.offsets.assign(num_nodes + 1, 0);
  for (std::uint32_t v : receivers) {
    if (v >= num_nodes)
      throw InputError("receiver index out of range: " + std::to_string(v));
    r.offsets[v + 1]++;
  }
  for (std::size_t i = 1; i <= num_nodes; ++i)
    r.offsets[i] += r.offsets[i - 1];
  std::vector<std::uint32_t> cursor(r.offsets.begin(), r.offsets.end() - 1);
  r.edge_ids.resize(receivers.size());
  for (std::uint32_t e = 0; e < receivers.size(); ++e)
    r.edge_ids[cursor[receivers[e]]++] = e;
  return r;
}

Graph build_graph_from_mesh(const Mesh& mesh) {
  const std::size_t n = mesh.positions.rows();
  std::vector<std::uint8_t> touched(n, 0);
  std::vector<std::uint64_t> pairs;
  pairs.reserve(mesh.elements.size() * 12);
  for (const auto& el : mesh.elements) {
    for (std::uint32_t v : el) {
      if (v >= n)
        throw InputError("element references node " + std::to_string(v) +
                         " outside mesh of " + std::to_string(n));
      touched[v] = 1;
    }
    for (int i = 0; i < 4; ++i)
      for (int j = i + 1; j < 4; ++j) {
        const std::uint32_t a = el[i], b = el[j];
        if (a == b) throw InputError("degenerate element (repeated node)");
        pairs.push_back((std::uint64_t(a) << 32) | b);
        pairs.push_back((std::uint64_t(b) << 32) | a);
      }
  }
  for (std::size_t v = 0; v < n; ++v)
    if (!touched[v])
      throw InputError("node " + std::to_string(v) +
                       " belongs to no element");
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());

  Graph g;
  g.num_nodes = n;
  g.positions = mesh.positions;
  g.senders.reserve(pairs.size());
  g.receivers.reserve(pairs.size());
  for (std::uint64_t p : pairs) {
    g.senders.push_back(static_cast<std::uint32_t>(p >> 32));
    g.receivers.push_back(static_cast<std::uint32_t>(p & 0xffffffffu));
  }
  g.recv = build_recv_index(g.receivers, n);
  return g;
}

namespace {

Matrix rest_edge_features(const Matrix& positions,
                          const std::vector<std::uint32_t>& senders,
                          const std::vector<std::uint32_t>& receivers) {
  Matrix f(senders.size(), 4);
  for (std::size_t e = 0; e < senders.size(); ++e) {
    const double* s = positions.row(senders[e]);
    const double* r = positions.row(receivers[e]);
    double norm2 = 0.0;
    for (int d = 0; d < 3; ++d) {
      const double delta = r[d] - s[d];
      f(e, d) = delta;
      norm2 += delta * delta;
    }
    f(e, 3) = std::sqrt(norm2);
  }
  return f;
}

}  // namespace

GraphHierarchy build_coarse_hierarchy(const Mesh& benchmark, std::size_t nx,
                                      std::size_t ny, std::size_t levels,
                                      std::size_t k) {
  if (benchmark.positions.rows() != nx * ny)
    throw InputError("benchmark mesh does not match the given grid");
  const std::size_t stride_top = std::size_t(1) << levels;
  if (nx < 2 || ny < 2 || (nx - 1) % stride_top != 0 ||
      (ny - 1) % stride_top != 0)
    throw ConfigError("grid " + std::to_string(nx) + "x" + std::to_string(ny) +
                      " does not support " + std::to_string(levels) +
                      " coarsening levels");

  GraphHierarchy h;
  h.levels.push_back(build_graph_from_mesh(benchmark));
  std::vector<Matrix> level_positions{benchmark.positions};

  for (std::size_t l = 1; l <= levels; ++l) {
    const std::size_t stride = std::size_t(1) << l;
    const std::size_t cx = (nx - 1) / stride + 1;
    const std::size_t cy = (ny - 1) / stride + 1;
    Matrix pos(cx * cy, 3);
    for (std::size_t iy = 0; iy < cy; ++iy)
      for (std::size_t ix = 0; ix < cx; ++ix) {
        const std::size_t src = (iy * stride) * nx + ix * stride;
        std::copy(benchmark.positions.row(src),
                  benchmark.positions.row(src) + 3, pos.row(iy * cx + ix));
      }
    Mesh coarse;
    coarse.positions = pos;
    coarse.elements = grid_quads(cx, cy);
    coarse.fixed_mask.assign(cx * cy, 0);
    Graph g = build_graph_from_mesh(coarse);
    g.edge_features = rest_edge_features(g.positions, g.senders, g.receivers);
    h.levels.push_back(std::move(g));
    level_positions.push_back(std::move(pos));
  }

  h.cross.resize(levels);
  for (std::size_t l = 1; l < levels; ++l)
    h.cross[l] = connect_cross_graph_edges(level_positions[l],
                                           level_positions[l + 1], k);
  return h;
}

CrossGraphEdges connect_cross_graph_edges(const Matrix& fine_positions,
                                          const Matrix& coarse_positions,
                                          std::size_t k) {
  const std::size_t nf = fine_positions.rows();
  const std::size_t nc = coarse_positions.rows();
  if (k == 0 || k > nc)
    throw ConfigError("cross edges: k = " + std::to_string(k) +
                      " with " + std::to_string(nc) + " coarse nodes");

  CrossGraphEdges cg;
  cg.senders.reserve(nf * k);
  cg.receivers.reserve(nf * k);
  std::vector<std::pair<double, std::uint32_t>> dist(nc);
  for (std::size_t f = 0; f < nf; ++f) {
    const double* fp = fine_positions.row(f);
    for (std::size_t c = 0; c < nc; ++c) {
      const double* cp = coarse_positions.row(c);
      const double dx = cp[0] - fp[0];
      const double dy = cp[1] - fp[1];
      const double dz = cp[2] - fp[2];
      dist[c] = {dx * dx + dy * dy + dz * dz, static_cast<std::uint32_t>(c)};
    }
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
    for (std::size_t i = 0; i < k; ++i) {
      cg.senders.push_back(static_cast<std::uint32_t>(f));
      cg.receivers.push_back(dist[i].second);
    }
  }
  cg.rest_features = Matrix(cg.senders.size(), 4);
  for (std::size_t e = 0; e < cg.senders.size(); ++e) {
    const double* fp = fine_positions.row(cg.senders[e]);
    const double* cp = coarse_positions.row(cg.receivers[e]);
    double norm2 = 0.0;
    for (int d = 0; d < 3; ++d) {
      const double delta = cp[d] - fp[d];
      cg.rest_features(e, d) = delta;
      norm2 += delta * delta;
    }
    cg.rest_features(e, 3) = std::sqrt(norm2);
  }
  cg.recv_coarse = build_recv_index(cg.receivers, nc);
  cg.recv_fine = build_recv_index(cg.senders, nf);
  return cg;
}

Matrix compute_node_features(const Matrix& positions_prev,
                             const Matrix& positions_curr) {
  if (!positions_prev.same_shape(positions_curr) ||
      positions_curr.cols() != 3)
    throw InputError("node features: position shape mismatch");
  Matrix f(positions_curr.rows(), 3);
  for (std::size_t i = 0; i < f.size(); ++i)
    f.data()[i] = positions_curr.data()[i] - positions_prev.data()[i];
  return f;
}

Matrix compute_edge_features(const Matrix& positions_curr,
                             const Matrix& positions_init,
                             const std::vector<std::uint32_t>& senders,
                             const std::vector<std::uint32_t>& receivers) {
  if (!positions_curr.same_shape(positions_init) ||
      positions_curr.cols() != 3)
    throw InputError("edge features: position shape mismatch");
  if (senders.size() != receivers.size())
    throw InputError("edge features: sender/receiver length mismatch");
  Matrix f(senders.size(), 8);
  for (std::size_t e = 0; e < senders.size(); ++e) {
    const std::uint32_t s = senders[e], r = receivers[e];
    double n_curr = 0.0, n_init = 0.0;
    for (int d = 0; d < 3; ++d) {
      const double dc = positions_curr(r, d) - positions_curr(s, d);
      const double di = positions_init(r, d) - positions_init(s, d);
      f(e, d) = dc;
      f(e, 4 + d) = di;
      n_curr += dc * dc;
      n_init += di * di;
    }
    f(e, 3) = std::sqrt(n_curr);
    f(e, 7) = std::sqrt(n_init);
  }
  return f;
}

namespace {
constexpr char kMagic[4] = {'R', 'G', 'S', 'Q'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

void write_sample(const std::string& path, const GraphSequence& sample) {
  const std::size_t n = sample.num_nodes();
  const std::size_t m = sample.senders.size();
  const std::size_t t = sample.num_steps();
  if (m != sample.receivers.size())
    throw InputError("sample: sender/receiver length mismatch");
  if (t == 0) throw InputError("sample: no snapshots");
  for (const Matrix& p : sample.positions)
    if (p.rows() != n || p.cols() != 3)
      throw InputError("sample: snapshot shape mismatch");

  BinWriter w;
  w.bytes(kMagic, 4);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(n));
  w.u32(static_cast<std::uint32_t>(m));
  w.u32(static_cast<std::uint32_t>(t));
  w.u32(sample.control_point);
  w.f64(sample.amplitude);
  w.bytes(sample.fixed_mask.data(), n);
  for (std::uint32_t s : sample.senders) w.u32(s);
  for (std::uint32_t r : sample.receivers) w.u32(r);
  for (const Matrix& p : sample.positions) w.f64_array(p.data(), p.size());
  w.commit(path);
}

GraphSequence read_sample(const std::string& path) {
  BinReader r(path);
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("bad sample magic", 0);
  const std::uint32_t version = r.u32("version");
  if (version != kVersion)
    throw FormatError("unsupported sample version " + std::to_string(version),
                      4);
  GraphSequence s;
  const std::uint32_t n = r.u32("node count");
  const std::uint32_t m = r.u32("edge count");
  const std::uint32_t t = r.u32("snapshot count");
  if (n == 0 || t == 0) throw FormatError("empty sample", 8);
  s.control_point = r.u32("control point");
  s.amplitude = r.f64("amplitude");
  s.fixed_mask.resize(n);
  const std::size_t mask_at = r.offset();
  r.bytes(s.fixed_mask.data(), n, "fixed mask");
  for (std::size_t i = 0; i < n; ++i)
    if (s.fixed_mask[i] > 1)
      throw FormatError("fixed mask byte not 0/1", mask_at + i);
  s.senders.resize(m);
  s.receivers.resize(m);
  const std::size_t edges_at = r.offset();
  for (std::uint32_t i = 0; i < m; ++i) s.senders[i] = r.u32("senders");
  for (std::uint32_t i = 0; i < m; ++i) s.receivers[i] = r.u32("receivers");
  for (std::uint32_t i = 0; i < m; ++i) {
    if (s.senders[i] >= n)
      throw FormatError("edge sender out of range", edges_at + 4 * i);
    if (s.receivers[i] >= n)
      throw FormatError("edge receiver out of range",
                        edges_at + 4 * (m + std::size_t(i)));
  }
  s.positions.reserve(t);
  for (std::uint32_t step = 0; step < t; ++step) {
    Matrix p(n, 3);
    r.f64_array(p.data(), p.size(), "positions");
    s.positions.push_back(std::move(p));
  }
  r.expect_end("positions");
  return s;
}

}  // namespace rgn
