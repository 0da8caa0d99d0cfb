#pragma once

#include <cstdint>
#include <vector>

#include "regunet/matrix.hpp"
#include "regunet/params.hpp"

namespace rgn {

// Incoming-edge index for a set of receiver nodes: edges_for(v) are the
// positions (into the edge array) whose receiver is v. Built once per graph
// and borrowed by tape ops; the owner must outlive the tape.
struct RecvIndex {
  std::vector<std::uint32_t> offsets;  // size n_receivers + 1
  std::vector<std::uint32_t> edge_ids;
  std::size_t receivers() const { return offsets.size() - 1; }
};

using Ref = std::uint32_t;
inline constexpr Ref kNoRef = static_cast<Ref>(-1);

// One additive input block of a fused linear layer. The block's weight rows
// live at [w_begin, w_begin + src_cols) of the layer's weight matrix. When
// `gather` is set, the source is first projected (src @ W_block) and then
// row-gathered, which is cheaper than gathering first whenever the source
// has fewer rows than the output (node features feeding per-edge layers).
struct LinPart {
  Ref src = kNoRef;
  const std::vector<std::uint32_t>* gather = nullptr;
  std::size_t w_begin = 0;
};

// Reverse-mode tape. Records eagerly-evaluated ops; backward() walks the
// record in reverse and accumulates parameter gradients into the ParamStore.
// All forward row reductions that cross graph edges run in canonical
// (ascending value) order, so outputs depend only on multisets of inputs and
// node relabelings permute them bit-exactly.
class Tape {
public:
  explicit Tape(ParamStore& params) : params_(&params) {}

  Ref leaf(Matrix value);

  // x @ W + b
  Ref linear(Ref x, std::size_t W, std::size_t b);
  // bias + sum of projected (optionally gathered) parts; rows = out_rows.
  Ref linear_parts(std::vector<LinPart> parts, std::size_t W, std::size_t b,
                   std::size_t out_rows);
  Ref relu(Ref x);
  Ref leaky_relu(Ref x, double alpha);
  Ref layer_norm(Ref x, std::size_t gamma, std::size_t beta);
  Ref add(Ref x, Ref y);
  // Per-receiver sum of incoming edge rows; out has recv->receivers() rows.
  Ref aggregate_sorted(Ref edge_values, const RecvIndex* recv);
  // Per-edge weight bank: message_e = x[senders[e]] @ W_e with
  // W_e = W.row(e) reshaped (cin x cout); output = per-receiver sorted sum.
  Ref nw_aggregate(Ref x, const std::vector<std::uint32_t>* senders,
                   const RecvIndex* recv, std::size_t W, std::size_t cin,
                   std::size_t cout);
  // Sum of squared differences over rows with mask != 0. Returns a scalar
  // (1x1) node. `target` and `mask` are borrowed.
  Ref masked_sse(Ref x, const Matrix* target,
                 const std::vector<std::uint8_t>* mask);
  // Copy of x with rows where mask != 0 forced to zero (values and grads).
  Ref zero_rows(Ref x, const std::vector<std::uint8_t>* mask);
  Ref scalar_weighted_sum(const std::vector<Ref>& scalars, double coeff);

  const Matrix& value(Ref r) const { return nodes_[r].value; }
  std::size_t size() const { return nodes_.size(); }

  // Accumulates d(root)/d(theta) into ParamStore grads and releases node
  // storage as it goes. The tape is spent afterwards; clear() to reuse.
  void backward(Ref scalar_root);
  void clear();

  // Total float64 elements ever recorded as op outputs (activation memory
  // proxy reported by parameter sweeps).
  std::uint64_t activation_elements() const { return activation_elements_; }

private:
  enum class Op : std::uint8_t {
    kLeaf,
    kLinear,
    kLinearParts,
    kRelu,
    kLeakyRelu,
    kLayerNorm,
    kAdd,
    kAggregateSorted,
    kNwAggregate,
    kMaskedSse,
    kZeroRows,
    kScalarWeightedSum,
  };

  struct Node {
    Op op = Op::kLeaf;
    Matrix value;
    Matrix grad;
    Matrix aux;   // layer_norm: normalized rows
    Matrix aux2;  // layer_norm: per-row inverse stddev
    Ref a = kNoRef;
    Ref b = kNoRef;
    std::vector<Ref> srcs;
    std::vector<LinPart> parts;
    std::size_t p0 = kNoParam;
    std::size_t p1 = kNoParam;
    double c0 = 0.0;
    const RecvIndex* recv = nullptr;
    const std::vector<std::uint32_t>* idx = nullptr;
    const Matrix* target = nullptr;
    const std::vector<std::uint8_t>* mask = nullptr;
  };

  Ref push(Node n);
  Matrix& grad_of(Ref r);
  void backward_node(Node& n);

  ParamStore* params_;
  std::vector<Node> nodes_;
  std::uint64_t activation_elements_ = 0;
};

// Sums `values` rows per receiver in ascending numeric value order per
// channel (canonical multiset sum). Exposed for reuse and direct testing.
void sorted_sum_rows(const Matrix& values, const RecvIndex& recv, Matrix& out);

}  // namespace rgn
