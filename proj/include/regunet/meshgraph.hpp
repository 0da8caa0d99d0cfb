#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "regunet/autodiff.hpp"
#include "regunet/matrix.hpp"

namespace rgn {

// Quad-element surface mesh. Positions are mm.
struct Mesh {
  Matrix positions;  // N x 3
  std::vector<std::array<std::uint32_t, 4>> elements;
  std::vector<std::uint8_t> fixed_mask;  // N entries, 1 = clamped
};

// Directed graph over mesh nodes. Edges always come in (s,r)/(r,s) pairs,
// sorted by (sender, receiver); recv indexes incoming edges per node.
struct Graph {
  std::size_t num_nodes = 0;
  std::vector<std::uint32_t> senders;
  std::vector<std::uint32_t> receivers;
  Matrix positions;      // rest positions of this level's nodes (N x 3)
  Matrix edge_features;  // coarse levels: 4-channel rest geometry (M x 4)
  RecvIndex recv;

  std::size_t num_edges() const { return senders.size(); }
};

// Fine-to-coarse connections between adjacent hierarchy levels. Every fine
// node has exactly k outgoing edges; edge order is (fine node, then nearest
// first). recv_coarse indexes edges by coarse receiver (downsampling
// direction); recv_fine indexes them by fine node (reversed, upsampling).
struct CrossGraphEdges {
  std::vector<std::uint32_t> senders;    // fine-level node ids
  std::vector<std::uint32_t> receivers;  // coarse-level node ids
  Matrix rest_features;                  // M_cg x 4: dx, dy, dz, norm
  RecvIndex recv_coarse;
  RecvIndex recv_fine;

  std::size_t num_edges() const { return senders.size(); }
};

// levels[0] is the fine graph; levels[1..L] are coarsened benchmark graphs
// shared by every sample of a dataset. cross[l] connects level l to l+1;
// cross[0] depends on the sample's morphed geometry and is filled in per
// sample, the rest are fixed benchmark geometry.
struct GraphHierarchy {
  std::vector<Graph> levels;
  std::vector<CrossGraphEdges> cross;
};

// Snapshot sequence of one simulated sample plus the morph metadata needed
// to regenerate it.
struct GraphSequence {
  std::uint32_t control_point = 0;
  double amplitude = 0.0;  // mm
  std::vector<std::uint8_t> fixed_mask;
  std::vector<std::uint32_t> senders;
  std::vector<std::uint32_t> receivers;
  std::vector<Matrix> positions;  // T entries, each N x 3

  std::size_t num_nodes() const { return fixed_mask.size(); }
  std::size_t num_steps() const { return positions.size(); }
};

// Element connectivity of an nx x ny structured grid (node id = iy*nx + ix).
std::vector<std::array<std::uint32_t, 4>> grid_quads(std::size_t nx,
                                                     std::size_t ny);

RecvIndex build_recv_index(const std::vector<std::uint32_t>& receivers,
                           std::size_t num_nodes);

// Connects all 6 unordered node pairs of every quad (sides plus both
// diagonals), deduplicated across elements, as directed edge pairs.
Graph build_graph_from_mesh(const Mesh& mesh);

// Keeps every 2^l-th grid node per direction at level l; in-level edges and
// 4-channel rest-geometry edge features come from the benchmark positions.
// The returned hierarchy has empty cross[0]; levels >= 1 cross edges are
// connected from benchmark geometry with the given k.
GraphHierarchy build_coarse_hierarchy(const Mesh& benchmark, std::size_t nx,
                                      std::size_t ny, std::size_t levels,
                                      std::size_t k);

// k nearest coarse nodes per fine node (Euclidean, ties to the smaller
// coarse index); rest features are coarse minus fine positions plus norm.
CrossGraphEdges connect_cross_graph_edges(const Matrix& fine_positions,
                                          const Matrix& coarse_positions,
                                          std::size_t k);

// Per-node position increments over one interval; equal inputs (the initial
// snapshot) give exact zeros.
Matrix compute_node_features(const Matrix& positions_prev,
                             const Matrix& positions_curr);

// Per-edge (current delta xyz, its norm, initial delta xyz, its norm),
// deltas receiver minus sender.
Matrix compute_edge_features(const Matrix& positions_curr,
                             const Matrix& positions_init,
                             const std::vector<std::uint32_t>& senders,
                             const std::vector<std::uint32_t>& receivers);

// Sample file: magic "RGSQ", version uint32=1, N, M, T uint32, morph
// control-point uint32, morph amplitude float64, fixed_mask N bytes,
// edge_index as sender row then receiver row (uint32), positions T x N x 3
// float64; all little-endian. Round trips are byte-exact.
void write_sample(const std::string& path, const GraphSequence& sample);
GraphSequence read_sample(const std::string& path);

}  // namespace rgn
