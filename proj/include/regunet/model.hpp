#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "regunet/autodiff.hpp"
#include "regunet/matrix.hpp"
#include "regunet/meshgraph.hpp"
#include "regunet/mlp.hpp"
#include "regunet/params.hpp"

namespace rgn {

// Channel schedule and message-passing budget of the graph U-Net. Level 0
// is the sample's fine graph; levels >= 1 are benchmark coarsenings. The
// schedule has levels+1 entries; the downsampling message-passing layer
// preserves width (C1 = C0) and every non-shareable-weight layer doubles
// it, so downstream widths are fully determined by C0.
struct GUNetConfig {
  std::vector<std::size_t> channels{32, 32, 64, 128};
  std::size_t fine_steps = 2;     // per fine Re-MP layer
  std::size_t coarse_steps = 10;  // coarse Re-MP layer
  std::size_t cross_k = 6;        // cross-graph edges per fine node
  std::size_t levels = 3;
  double leaky_slope = 0.01;

  void validate() const;  // ConfigError on violations
};

enum class VariantTag : std::uint32_t {
  kRegunet = 0,
  kBaseline1 = 1,  // encoder + 15 flat MP steps + decoder, no memory
  kBaseline2 = 2,  // baseline1 plus per-edge hidden state across time
  kBaseline3 = 3,  // the U-Net block without hidden state
};

VariantTag parse_variant_tag(const std::string& name);
std::string variant_name(VariantTag tag);

// U-Net variants consume the benchmark hierarchy; flat baselines ignore it.
bool is_unet(VariantTag tag);
// Memory variants thread per-edge hidden state across time steps.
bool has_memory(VariantTag tag);

struct ModelVariant {
  VariantTag tag = VariantTag::kRegunet;
  // Flat-graph baselines only; the U-Net variants take widths from the
  // channel schedule instead.
  std::size_t latent_channels = 128;
  std::size_t mp_steps = 15;
};

// Input/target feature statistics. Inputs get the full affine transform;
// targets are scaled only, so a zero network output stays a zero increment
// after de-normalization.
struct NormStats {
  Matrix node_mean, node_scale;  // 1 x 3
  Matrix edge_mean, edge_scale;  // 1 x 8
  Matrix target_scale;           // 1 x 3

  NormStats();  // identity transform

  Matrix normalize_nodes(const Matrix& x) const;
  Matrix normalize_edges(const Matrix& x) const;
  Matrix normalize_targets(const Matrix& x) const;      // x / scale
  Matrix denormalize_increments(const Matrix& x) const; // x * scale
};

// One message-passing step: edge update, optional hidden update, node
// update. Variants without memory drop the hidden MLP but keep the zero
// hidden columns in the edge MLP's first layer, so parameter shapes stay
// comparable across variants.
struct RempParams {
  MlpParams edge;
  MlpParams hidden;  // absent when has_hidden is false
  MlpParams node;
  bool has_hidden = true;
};

struct RegunetParams {
  MlpParams enc_node, enc_edge;            // 3 / 8 -> C0
  MlpParams enc_ds_rest, enc_us_rest;      // cross rest geometry, 4 -> C0
  MlpParams enc_coarse_edge;               // coarse rest geometry, 4 -> Ctop
  std::vector<RempParams> fine_in;         // P_f steps before downsampling
  MlpParams dsmp_msg, dsmp_node;
  std::vector<std::size_t> dsnw_W;         // per-edge banks, levels 1..L-1
  std::vector<RempParams> coarse;          // P_c steps at the top level
  std::vector<std::size_t> usnw_W;         // mirrored banks, levels L-1..1
  MlpParams usmp_msg, usmp_node;
  std::vector<RempParams> fine_out;        // P_f steps after upsampling
  MlpParams dec;                           // C0 -> 3, no output norm
};

struct BaselineParams {
  MlpParams enc_node, enc_edge;
  std::vector<RempParams> steps;
  MlpParams dec;
};

struct Model {
  ModelVariant variant;
  GUNetConfig cfg;
  NormStats norm;
  ParamStore params;
  RegunetParams net;       // regunet / baseline3
  BaselineParams flat;     // baseline1 / baseline2
};

// Registers all parameters for the variant in canonical order with
// Glorot-uniform draws from the seed. The hierarchy fixes the per-edge
// weight bank sizes (cross-edge counts must be constant across samples).
Model build_model(const ModelVariant& variant, const GUNetConfig& cfg,
                  const GraphHierarchy& hierarchy, std::uint64_t seed);

// Ties one sample to the benchmark hierarchy: fine-graph receiver index,
// sample-specific fine-to-coarse cross edges from the initial morphed
// shape, their reversed rest features, the free-node mask, and the raw
// teacher-forcing features (inputs at step j are snapshots j-2, j-1; the
// first step's node increments are zero). The binding borrows the sample
// and hierarchy and must outlive any tape built on it.
struct SampleBinding {
  const GraphHierarchy* hier = nullptr;
  const GraphSequence* sample = nullptr;
  RecvIndex fine_recv;
  CrossGraphEdges cross0;
  Matrix us0_rest;  // cross0 rest with displacement channels negated
  std::vector<std::uint8_t> free_mask;
  std::vector<Matrix> node_inputs;  // T-1 raw increment features
  std::vector<Matrix> edge_inputs;  // T-1 raw edge features
  std::vector<Matrix> raw_targets;  // T-1 true increments
};

SampleBinding bind_sample(const GraphHierarchy& hierarchy,
                          const GraphSequence& sample,
                          const GUNetConfig& cfg, VariantTag tag);

// Full-sequence teacher-forced loss: T-1 forward blocks with the hidden
// state threaded through the tape, masked squared error against normalized
// targets, averaged over free nodes, channels, and steps. `norm_targets`
// is caller-owned storage borrowed by the tape until backward() runs.
Ref teacher_forced_loss(Tape& tape, const Model& model,
                        const SampleBinding& binding,
                        std::vector<Matrix>& norm_targets);

enum class RolloutMode { kTeacherForced, kAutoregressive };

// T predicted positions; entry 0 is the given initial state. In
// teacher-forced mode step inputs come from the ground-truth snapshots, in
// autoregressive mode from the model's own running positions. Predicted
// increments at fixed nodes are exactly zero in both modes.
// `increment_oracle` (testing hook) bypasses the network and applies the
// given T-1 physical increments through the same rollout plumbing.
// `increments_out`, when given, receives the T-1 applied increments (mm).
std::vector<Matrix> rollout(const Model& model, const SampleBinding& binding,
                            RolloutMode mode,
                            const std::vector<Matrix>* increment_oracle =
                                nullptr,
                            std::vector<Matrix>* increments_out = nullptr);

// Checkpoint round trip: parameters + optimizer state + normalization
// statistics + variant/config metadata, so evaluation needs no side
// channel. Loading validates every shape against the freshly built model.
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path, const GraphHierarchy& hierarchy);

// Reads only the variant/config metadata, enough to size the hierarchy a
// full load needs.
std::pair<ModelVariant, GUNetConfig> peek_model_meta(const std::string& path);

}  // namespace rgn
