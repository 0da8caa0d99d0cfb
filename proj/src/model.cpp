#include "regunet/model.hpp"

#include <cmath>
#include <cstring>
#include <string>
#include <utility>

#include "regunet/errors.hpp"
#include "regunet/rng.hpp"

namespace rgn {

void GUNetConfig::validate() const {
  if (levels < 1) throw ConfigError("levels must be >= 1");
  if (channels.size() != levels + 1)
    throw ConfigError("channel schedule needs levels+1 entries");
  for (std::size_t c : channels)
    if (c < 1) throw ConfigError("channel widths must be >= 1");
  if (channels[1] != channels[0])
    throw ConfigError("level-1 width must equal level-0 width");
  for (std::size_t l = 1; l + 1 <= levels; ++l)
    if (channels[l + 1] != 2 * channels[l])
      throw ConfigError("weight-bank levels must double the channel width");
  if (cross_k < 1) throw ConfigError("cross_k must be >= 1");
  if (!(leaky_slope > 0.0 && leaky_slope < 1.0))
    throw ConfigError("leaky_slope must be in (0, 1)");
}

VariantTag parse_variant_tag(const std::string& name) {
  if (name == "regunet") return VariantTag::kRegunet;
  if (name == "baseline1") return VariantTag::kBaseline1;
  if (name == "baseline2") return VariantTag::kBaseline2;
  if (name == "baseline3") return VariantTag::kBaseline3;
  throw ConfigError("unknown model variant: " + name);
}

std::string variant_name(VariantTag tag) {
  switch (tag) {
    case VariantTag::kRegunet: return "regunet";
    case VariantTag::kBaseline1: return "baseline1";
    case VariantTag::kBaseline2: return "baseline2";
    case VariantTag::kBaseline3: return "baseline3";
  }
  throw ConfigError("unknown model variant tag");
}

bool is_unet(VariantTag tag) {
  return tag == VariantTag::kRegunet || tag == VariantTag::kBaseline3;
}

bool has_memory(VariantTag tag) {
  return tag == VariantTag::kRegunet || tag == VariantTag::kBaseline2;
}

NormStats::NormStats()
    : node_mean(1, 3),
      node_scale(1, 3),
      edge_mean(1, 8),
      edge_scale(1, 8),
      target_scale(1, 3) {
  for (std::size_t j = 0; j < 3; ++j) node_scale(0, j) = 1.0;
  for (std::size_t j = 0; j < 8; ++j) edge_scale(0, j) = 1.0;
  for (std::size_t j = 0; j < 3; ++j) target_scale(0, j) = 1.0;
}

namespace {

Matrix affine_rows(const Matrix& x, const Matrix& mean, const Matrix& scale) {
  if (x.cols() != mean.cols())
    throw InputError("feature width does not match normalization stats");
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const double* p = x.row(i);
    double* o = out.row(i);
    for (std::size_t j = 0; j < x.cols(); ++j)
      o[j] = (p[j] - mean(0, j)) / scale(0, j);
  }
  return out;
}

}  // namespace

Matrix NormStats::normalize_nodes(const Matrix& x) const {
  return affine_rows(x, node_mean, node_scale);
}

Matrix NormStats::normalize_edges(const Matrix& x) const {
  return affine_rows(x, edge_mean, edge_scale);
}

Matrix NormStats::normalize_targets(const Matrix& x) const {
  if (x.cols() != 3) throw InputError("targets must have 3 channels");
  Matrix out(x.rows(), 3);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < 3; ++j)
      out(i, j) = x(i, j) / target_scale(0, j);
  return out;
}

Matrix NormStats::denormalize_increments(const Matrix& x) const {
  if (x.cols() != 3) throw InputError("increments must have 3 channels");
  Matrix out(x.rows(), 3);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < 3; ++j)
      out(i, j) = x(i, j) * target_scale(0, j);
  return out;
}

namespace {

MlpSpec spec4(std::size_t in, std::size_t width, std::size_t out, bool norm) {
  MlpSpec s;
  s.in_dim = in;
  s.hidden = width;
  s.out_dim = out;
  s.layers = 4;
  s.output_layer_norm = norm;
  return s;
}

RempParams register_remp(ParamStore& store, const std::string& prefix,
                         std::size_t c, bool with_hidden, Rng& rng) {
  RempParams rp;
  rp.has_hidden = with_hidden;
  rp.edge = register_mlp(store, prefix + ".edge", spec4(4 * c, c, c, true),
                         rng);
  if (with_hidden)
    rp.hidden = register_mlp(store, prefix + ".hidden",
                             spec4(4 * c, c, c, true), rng);
  rp.node = register_mlp(store, prefix + ".node", spec4(2 * c, c, c, true),
                         rng);
  return rp;
}

// Per-edge weight bank: every edge owns a (cin x cout) matrix, stored as one
// row of the bank. Glorot limit from the per-edge fan.
std::size_t register_nw_bank(ParamStore& store, const std::string& name,
                             std::size_t edges, std::size_t cin,
                             std::size_t cout, Rng& rng) {
  Matrix bank(edges, cin * cout);
  const double limit =
      std::sqrt(6.0 / (static_cast<double>(cin) + static_cast<double>(cout)));
  for (std::size_t i = 0; i < bank.size(); ++i)
    bank.data()[i] = rng.symmetric(limit);
  return store.add(name, std::move(bank));
}

void check_hierarchy(const GUNetConfig& cfg, const GraphHierarchy& hier) {
  if (hier.levels.size() != cfg.levels + 1)
    throw ConfigError("hierarchy level count does not match the config");
  if (hier.cross.size() != cfg.levels)
    throw ConfigError("hierarchy cross-edge count does not match the config");
  for (std::size_t l = 1; l < cfg.levels; ++l)
    if (hier.cross[l].num_edges() == 0)
      throw ConfigError("hierarchy cross edges missing at level " +
                        std::to_string(l));
}

}  // namespace

Model build_model(const ModelVariant& variant, const GUNetConfig& cfg,
                  const GraphHierarchy& hierarchy, std::uint64_t seed) {
  Model m;
  m.variant = variant;
  m.cfg = cfg;
  Rng rng(seed);
  if (is_unet(variant.tag)) {
    cfg.validate();
    check_hierarchy(cfg, hierarchy);
    const bool mem = has_memory(variant.tag);
    const std::size_t c0 = cfg.channels[0];
    const std::size_t ct = cfg.channels[cfg.levels];
    RegunetParams& p = m.net;
    p.enc_node = register_mlp(m.params, "enc.node", spec4(3, c0, c0, true),
                              rng);
    p.enc_edge = register_mlp(m.params, "enc.edge", spec4(8, c0, c0, true),
                              rng);
    p.enc_ds_rest = register_mlp(m.params, "enc.ds_rest",
                                 spec4(4, c0, c0, true), rng);
    p.enc_us_rest = register_mlp(m.params, "enc.us_rest",
                                 spec4(4, c0, c0, true), rng);
    p.enc_coarse_edge = register_mlp(m.params, "enc.coarse_edge",
                                     spec4(4, ct, ct, true), rng);
    for (std::size_t s = 0; s < cfg.fine_steps; ++s)
      p.fine_in.push_back(register_remp(
          m.params, "fine_in.step" + std::to_string(s), c0, mem, rng));
    p.dsmp_msg = register_mlp(m.params, "dsmp.msg", spec4(2 * c0, c0, c0,
                                                          true), rng);
    p.dsmp_node = register_mlp(m.params, "dsmp.node", spec4(c0, c0, c0, true),
                               rng);
    for (std::size_t l = 1; l < cfg.levels; ++l)
      p.dsnw_W.push_back(register_nw_bank(
          m.params, "dsnw" + std::to_string(l) + ".W",
          hierarchy.cross[l].num_edges(), cfg.channels[l],
          cfg.channels[l + 1], rng));
    for (std::size_t s = 0; s < cfg.coarse_steps; ++s)
      p.coarse.push_back(register_remp(
          m.params, "coarse.step" + std::to_string(s), ct, mem, rng));
    for (std::size_t l = cfg.levels; l-- > 1;)
      p.usnw_W.push_back(register_nw_bank(
          m.params, "usnw" + std::to_string(l) + ".W",
          hierarchy.cross[l].num_edges(), cfg.channels[l + 1],
          cfg.channels[l], rng));
    p.usmp_msg = register_mlp(m.params, "usmp.msg", spec4(2 * c0, c0, c0,
                                                          true), rng);
    p.usmp_node = register_mlp(m.params, "usmp.node", spec4(c0, c0, c0, true),
                               rng);
    for (std::size_t s = 0; s < cfg.fine_steps; ++s)
      p.fine_out.push_back(register_remp(
          m.params, "fine_out.step" + std::to_string(s), c0, mem, rng));
    p.dec = register_mlp(m.params, "dec.node", spec4(c0, c0, 3, false), rng);
  } else {
    if (variant.latent_channels < 1)
      throw ConfigError("baseline latent width must be >= 1");
    if (variant.mp_steps < 1)
      throw ConfigError("baseline step count must be >= 1");
    const bool mem = has_memory(variant.tag);
    const std::size_t c = variant.latent_channels;
    BaselineParams& p = m.flat;
    p.enc_node = register_mlp(m.params, "enc.node", spec4(3, c, c, true),
                              rng);
    p.enc_edge = register_mlp(m.params, "enc.edge", spec4(8, c, c, true),
                              rng);
    for (std::size_t s = 0; s < variant.mp_steps; ++s)
      p.steps.push_back(register_remp(
          m.params, "mp.step" + std::to_string(s), c, mem, rng));
    p.dec = register_mlp(m.params, "dec.node", spec4(c, c, 3, false), rng);
  }
  return m;
}

SampleBinding bind_sample(const GraphHierarchy& hierarchy,
                          const GraphSequence& sample,
                          const GUNetConfig& cfg, VariantTag tag) {
  const std::size_t n = sample.num_nodes();
  const std::size_t t_count = sample.num_steps();
  if (n == 0 || t_count == 0) throw InputError("empty sample");
  SampleBinding b;
  b.hier = &hierarchy;
  b.sample = &sample;
  b.fine_recv = build_recv_index(sample.receivers, n);
  b.free_mask.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    b.free_mask[i] = sample.fixed_mask[i] ? 0 : 1;

  if (is_unet(tag)) {
    check_hierarchy(cfg, hierarchy);
    if (hierarchy.levels[0].num_nodes != n)
      throw ConfigError("sample node count does not match the hierarchy");
    b.cross0 = connect_cross_graph_edges(sample.positions[0],
                                         hierarchy.levels[1].positions,
                                         cfg.cross_k);
    b.us0_rest = b.cross0.rest_features;
    for (std::size_t e = 0; e < b.us0_rest.rows(); ++e) {
      double* r = b.us0_rest.row(e);
      r[0] = -r[0];
      r[1] = -r[1];
      r[2] = -r[2];
    }
  }

  for (std::size_t j = 1; j < t_count; ++j) {
    b.node_inputs.push_back(
        j == 1 ? Matrix(n, 3)
               : compute_node_features(sample.positions[j - 2],
                                       sample.positions[j - 1]));
    b.edge_inputs.push_back(
        compute_edge_features(sample.positions[j - 1], sample.positions[0],
                              sample.senders, sample.receivers));
    b.raw_targets.push_back(compute_node_features(sample.positions[j - 1],
                                                  sample.positions[j]));
  }
  return b;
}

namespace {

struct RempOut {
  Ref nodes;
  Ref edges;
  Ref hidden;
};

RempOut remp_step_forward(Tape& t, const RempParams& rp, Ref nodes, Ref edges,
                          Ref hidden,
                          const std::vector<std::uint32_t>* senders,
                          const std::vector<std::uint32_t>* receivers,
                          const RecvIndex* recv, std::size_t c) {
  const std::size_t m_edges = senders->size();
  const std::size_t n_nodes = recv->receivers();
  const std::vector<LinPart> parts{{nodes, senders, 0},
                                   {nodes, receivers, c},
                                   {edges, nullptr, 2 * c},
                                   {hidden, nullptr, 3 * c}};
  RempOut out;
  out.edges = t.add(mlp_forward_parts(t, rp.edge, parts, m_edges), edges);
  out.hidden =
      rp.has_hidden ? mlp_forward_parts(t, rp.hidden, parts, m_edges)
                    : hidden;
  const Ref agg = t.aggregate_sorted(out.edges, recv);
  const std::vector<LinPart> nparts{{nodes, nullptr, 0}, {agg, nullptr, c}};
  out.nodes = t.add(mlp_forward_parts(t, rp.node, nparts, n_nodes), nodes);
  return out;
}

// One fine->coarse (or reversed) message-passing layer; no residual.
Ref cross_mp_forward(Tape& t, const MlpParams& msg_mlp,
                     const MlpParams& node_mlp, Ref sender_nodes,
                     Ref encoded_rest,
                     const std::vector<std::uint32_t>* senders,
                     const RecvIndex* recv, std::size_t sender_width) {
  const std::vector<LinPart> parts{{sender_nodes, senders, 0},
                                   {encoded_rest, nullptr, sender_width}};
  const Ref msg = mlp_forward_parts(t, msg_mlp, parts, senders->size());
  return mlp_forward(t, node_mlp, t.aggregate_sorted(msg, recv));
}

// Per-sample constants of one tape: encoded rest features and the zero
// hidden leaves recurrence starts from.
struct TapeConstants {
  Ref enc_ds_rest = kNoRef;
  Ref enc_us_rest = kNoRef;
  Ref enc_coarse_edge = kNoRef;
  Ref zero_h_f = kNoRef;
  Ref zero_h_c = kNoRef;
};

TapeConstants make_constants(Tape& t, const Model& m,
                             const SampleBinding& b) {
  TapeConstants k;
  if (is_unet(m.variant.tag)) {
    const GraphHierarchy& hier = *b.hier;
    k.enc_ds_rest =
        mlp_forward(t, m.net.enc_ds_rest, t.leaf(b.cross0.rest_features));
    k.enc_us_rest = mlp_forward(t, m.net.enc_us_rest, t.leaf(b.us0_rest));
    k.enc_coarse_edge =
        mlp_forward(t, m.net.enc_coarse_edge,
                    t.leaf(hier.levels[m.cfg.levels].edge_features));
    k.zero_h_f = t.leaf(
        Matrix(b.sample->senders.size(), m.cfg.channels[0]));
    k.zero_h_c = t.leaf(Matrix(hier.levels[m.cfg.levels].num_edges(),
                               m.cfg.channels[m.cfg.levels]));
  } else {
    k.zero_h_f = t.leaf(
        Matrix(b.sample->senders.size(), m.variant.latent_channels));
  }
  return k;
}

struct BlockOut {
  Ref inc;
  Ref h_f;
  Ref h_c;
};

BlockOut unet_forward(Tape& t, const Model& m, const SampleBinding& b,
                      const TapeConstants& k, const Matrix& node_norm,
                      const Matrix& edge_norm, Ref h_f, Ref h_c) {
  const GUNetConfig& cfg = m.cfg;
  const RegunetParams& p = m.net;
  const GraphHierarchy& hier = *b.hier;
  const GraphSequence& sample = *b.sample;
  const std::size_t c0 = cfg.channels[0];

  Ref xv = mlp_forward(t, p.enc_node, t.leaf(node_norm));
  Ref xe = mlp_forward(t, p.enc_edge, t.leaf(edge_norm));

  Ref h = h_f;
  for (const RempParams& rp : p.fine_in) {
    const RempOut o = remp_step_forward(t, rp, xv, xe, h, &sample.senders,
                                        &sample.receivers, &b.fine_recv, c0);
    xv = o.nodes;
    xe = o.edges;
    h = o.hidden;
  }
  const Ref h_f_out = h;
  const Ref skip_v0 = xv;
  const Ref skip_e0 = xe;

  // Down: one message-passing hop, then weight-bank hops to the top level.
  std::vector<Ref> skips(cfg.levels + 1, kNoRef);
  Ref v = cross_mp_forward(t, p.dsmp_msg, p.dsmp_node, xv, k.enc_ds_rest,
                           &b.cross0.senders, &b.cross0.recv_coarse, c0);
  skips[1] = v;
  for (std::size_t l = 1; l < cfg.levels; ++l) {
    v = t.leaky_relu(
        t.nw_aggregate(v, &hier.cross[l].senders, &hier.cross[l].recv_coarse,
                       p.dsnw_W[l - 1], cfg.channels[l], cfg.channels[l + 1]),
        cfg.leaky_slope);
    skips[l + 1] = v;
  }

  const Graph& top = hier.levels[cfg.levels];
  Ref ce = k.enc_coarse_edge;
  Ref hc = h_c;
  for (const RempParams& rp : p.coarse) {
    const RempOut o = remp_step_forward(t, rp, v, ce, hc, &top.senders,
                                        &top.receivers, &top.recv,
                                        cfg.channels[cfg.levels]);
    v = o.nodes;
    ce = o.edges;
    hc = o.hidden;
  }
  const Ref h_c_out = hc;
  v = t.add(v, skips[cfg.levels]);

  // Up: mirrored weight-bank hops, then the message-passing hop home.
  for (std::size_t l = cfg.levels; l-- > 1;) {
    v = t.leaky_relu(
        t.nw_aggregate(v, &hier.cross[l].receivers, &hier.cross[l].recv_fine,
                       p.usnw_W[cfg.levels - 1 - l], cfg.channels[l + 1],
                       cfg.channels[l]),
        cfg.leaky_slope);
    v = t.add(v, skips[l]);
  }
  v = cross_mp_forward(t, p.usmp_msg, p.usmp_node, v, k.enc_us_rest,
                       &b.cross0.receivers, &b.cross0.recv_fine, c0);
  v = t.add(v, skip_v0);

  // Final fine layer starts from the fresh hidden state and threads it
  // through its own steps; the value after the last step is discarded.
  xv = v;
  xe = skip_e0;
  h = h_f_out;
  for (const RempParams& rp : p.fine_out) {
    const RempOut o = remp_step_forward(t, rp, xv, xe, h, &sample.senders,
                                        &sample.receivers, &b.fine_recv, c0);
    xv = o.nodes;
    xe = o.edges;
    h = o.hidden;
  }

  BlockOut out;
  out.inc = t.zero_rows(mlp_forward(t, p.dec, xv), &sample.fixed_mask);
  out.h_f = h_f_out;
  out.h_c = h_c_out;
  return out;
}

BlockOut flat_forward(Tape& t, const Model& m, const SampleBinding& b,
                      const TapeConstants& k, const Matrix& node_norm,
                      const Matrix& edge_norm, Ref h_f) {
  const BaselineParams& p = m.flat;
  const GraphSequence& sample = *b.sample;
  const std::size_t c = m.variant.latent_channels;

  Ref xv = mlp_forward(t, p.enc_node, t.leaf(node_norm));
  Ref xe = mlp_forward(t, p.enc_edge, t.leaf(edge_norm));
  Ref h = h_f;
  for (const RempParams& rp : p.steps) {
    const RempOut o = remp_step_forward(t, rp, xv, xe, h, &sample.senders,
                                        &sample.receivers, &b.fine_recv, c);
    xv = o.nodes;
    xe = o.edges;
    h = o.hidden;
  }
  BlockOut out;
  out.inc = t.zero_rows(mlp_forward(t, p.dec, xv), &sample.fixed_mask);
  out.h_f = h;
  out.h_c = kNoRef;
  (void)k;
  return out;
}

BlockOut step_forward(Tape& t, const Model& m, const SampleBinding& b,
                      const TapeConstants& k, const Matrix& node_norm,
                      const Matrix& edge_norm, Ref h_f, Ref h_c) {
  if (is_unet(m.variant.tag))
    return unet_forward(t, m, b, k, node_norm, edge_norm, h_f, h_c);
  return flat_forward(t, m, b, k, node_norm, edge_norm, h_f);
}

std::size_t count_free(const std::vector<std::uint8_t>& mask) {
  std::size_t n = 0;
  for (std::uint8_t v : mask) n += v ? 1 : 0;
  return n;
}

}  // namespace

Ref teacher_forced_loss(Tape& tape, const Model& model,
                        const SampleBinding& binding,
                        std::vector<Matrix>& norm_targets) {
  const std::size_t t_count = binding.sample->num_steps();
  if (t_count < 2)
    throw InputError("teacher forcing needs at least two snapshots");
  const std::size_t n_free = count_free(binding.free_mask);
  if (n_free == 0) throw InputError("sample has no free nodes");

  const TapeConstants k = make_constants(tape, model, binding);
  Ref h_f = k.zero_h_f;
  Ref h_c = k.zero_h_c;
  norm_targets.clear();
  norm_targets.reserve(t_count - 1);
  std::vector<Ref> step_sse;
  for (std::size_t j = 1; j < t_count; ++j) {
    const Matrix node_norm =
        model.norm.normalize_nodes(binding.node_inputs[j - 1]);
    const Matrix edge_norm =
        model.norm.normalize_edges(binding.edge_inputs[j - 1]);
    const BlockOut o =
        step_forward(tape, model, binding, k, node_norm, edge_norm, h_f, h_c);
    h_f = o.h_f;
    h_c = o.h_c;
    norm_targets.push_back(
        model.norm.normalize_targets(binding.raw_targets[j - 1]));
    step_sse.push_back(
        tape.masked_sse(o.inc, &norm_targets[j - 1], &binding.free_mask));
  }
  const double denom =
      3.0 * static_cast<double>(n_free) * static_cast<double>(t_count - 1);
  return tape.scalar_weighted_sum(step_sse, 1.0 / denom);
}

std::vector<Matrix> rollout(const Model& model, const SampleBinding& binding,
                            RolloutMode mode,
                            const std::vector<Matrix>* increment_oracle,
                            std::vector<Matrix>* increments_out) {
  const GraphSequence& sample = *binding.sample;
  const std::size_t t_count = sample.num_steps();
  const std::size_t n = sample.num_nodes();
  std::vector<Matrix> pred(t_count);
  pred[0] = sample.positions[0];
  if (increments_out != nullptr) increments_out->clear();
  if (t_count < 2) return pred;
  if (increment_oracle != nullptr && increment_oracle->size() != t_count - 1)
    throw InputError("increment oracle must cover T-1 steps");

  // Forward passes only; parameters and gradients are never touched.
  ParamStore& params = const_cast<ParamStore&>(model.params);
  Tape tape(params);

  const bool teacher = mode == RolloutMode::kTeacherForced;
  Matrix prev = sample.positions[0];       // state the inputs come from
  Matrix prev_prev = sample.positions[0];  // one interval earlier
  Matrix h_f_val;
  Matrix h_c_val;

  for (std::size_t j = 1; j < t_count; ++j) {
    Matrix inc;
    if (increment_oracle != nullptr) {
      inc = (*increment_oracle)[j - 1];
      if (inc.rows() != n || inc.cols() != 3)
        throw InputError("increment oracle shape mismatch");
    } else {
      tape.clear();
      const TapeConstants k = make_constants(tape, model, binding);
      Ref h_f = k.zero_h_f;
      Ref h_c = k.zero_h_c;
      if (!h_f_val.empty()) h_f = tape.leaf(h_f_val);
      if (!h_c_val.empty()) h_c = tape.leaf(h_c_val);

      const Matrix node_feats = j == 1 ? Matrix(n, 3)
                                       : compute_node_features(prev_prev,
                                                               prev);
      const Matrix edge_feats = compute_edge_features(
          prev, sample.positions[0], sample.senders, sample.receivers);
      const BlockOut o = step_forward(
          tape, model, binding, k, model.norm.normalize_nodes(node_feats),
          model.norm.normalize_edges(edge_feats), h_f, h_c);
      if (has_memory(model.variant.tag)) {
        h_f_val = tape.value(o.h_f);
        if (o.h_c != kNoRef) h_c_val = tape.value(o.h_c);
      }
      inc = model.norm.denormalize_increments(tape.value(o.inc));
    }
    for (std::size_t i = 0; i < n; ++i)
      if (sample.fixed_mask[i])
        std::memset(inc.row(i), 0, 3 * sizeof(double));
    if (increments_out != nullptr) increments_out->push_back(inc);

    const Matrix& base = teacher ? sample.positions[j - 1] : pred[j - 1];
    pred[j] = Matrix(n, 3);
    for (std::size_t i = 0; i < pred[j].size(); ++i)
      pred[j].data()[i] = base.data()[i] + inc.data()[i];

    if (teacher) {
      prev_prev = sample.positions[j - 1];
      prev = sample.positions[j];
    } else {
      prev_prev = std::move(prev);
      prev = pred[j];
    }
  }
  return pred;
}

void save_model(const Model& model, const std::string& path) {
  std::vector<std::pair<std::string, const Matrix*>> extras;
  extras.push_back({"norm.node_mean", &model.norm.node_mean});
  extras.push_back({"norm.node_scale", &model.norm.node_scale});
  extras.push_back({"norm.edge_mean", &model.norm.edge_mean});
  extras.push_back({"norm.edge_scale", &model.norm.edge_scale});
  extras.push_back({"norm.target_scale", &model.norm.target_scale});

  Matrix variant_tag(1, 1);
  variant_tag(0, 0) =
      static_cast<double>(static_cast<std::uint32_t>(model.variant.tag));
  extras.push_back({"meta.variant", &variant_tag});

  const GUNetConfig& cfg = model.cfg;
  Matrix config(1, 8 + cfg.channels.size());
  std::size_t at = 0;
  config(0, at++) = static_cast<double>(cfg.levels);
  config(0, at++) = static_cast<double>(cfg.fine_steps);
  config(0, at++) = static_cast<double>(cfg.coarse_steps);
  config(0, at++) = static_cast<double>(cfg.cross_k);
  config(0, at++) = cfg.leaky_slope;
  config(0, at++) = static_cast<double>(cfg.channels.size());
  for (std::size_t c : cfg.channels)
    config(0, at++) = static_cast<double>(c);
  config(0, at++) = static_cast<double>(model.variant.latent_channels);
  config(0, at++) = static_cast<double>(model.variant.mp_steps);
  extras.push_back({"meta.config", &config});

  save_checkpoint(path, model.params, extras);
}

std::pair<ModelVariant, GUNetConfig> peek_model_meta(
    const std::string& path) {
  const auto tensors = read_rgck(path);
  const Matrix* variant_tag = nullptr;
  const Matrix* config = nullptr;
  for (const auto& [name, m] : tensors) {
    if (name == "meta.variant") variant_tag = &m;
    if (name == "meta.config") config = &m;
  }
  if (variant_tag == nullptr || config == nullptr)
    throw FormatError("checkpoint is missing model metadata", 0);

  ModelVariant variant;
  const double tag_value = (*variant_tag)(0, 0);
  if (tag_value < 0 || tag_value > 3 || tag_value != std::floor(tag_value))
    throw FormatError("checkpoint has an unknown variant tag", 0);
  variant.tag = static_cast<VariantTag>(static_cast<std::uint32_t>(tag_value));

  GUNetConfig cfg;
  std::size_t at = 0;
  auto next = [&]() {
    if (at >= config->cols())
      throw FormatError("checkpoint model config is truncated", 0);
    return (*config)(0, at++);
  };
  cfg.levels = static_cast<std::size_t>(next());
  cfg.fine_steps = static_cast<std::size_t>(next());
  cfg.coarse_steps = static_cast<std::size_t>(next());
  cfg.cross_k = static_cast<std::size_t>(next());
  cfg.leaky_slope = next();
  cfg.channels.resize(static_cast<std::size_t>(next()));
  for (std::size_t& c : cfg.channels)
    c = static_cast<std::size_t>(next());
  variant.latent_channels = static_cast<std::size_t>(next());
  variant.mp_steps = static_cast<std::size_t>(next());
  return {variant, cfg};
}

Model load_model(const std::string& path, const GraphHierarchy& hierarchy) {
  const auto [variant, cfg] = peek_model_meta(path);
  Model model = build_model(variant, cfg, hierarchy, 0);
  const auto extras = load_checkpoint(path, model.params);
  for (const auto& [name, m] : extras) {
    if (name == "norm.node_mean") model.norm.node_mean = m;
    else if (name == "norm.node_scale") model.norm.node_scale = m;
    else if (name == "norm.edge_mean") model.norm.edge_mean = m;
    else if (name == "norm.edge_scale") model.norm.edge_scale = m;
    else if (name == "norm.target_scale") model.norm.target_scale = m;
  }
  return model;
}

}  // namespace rgn
