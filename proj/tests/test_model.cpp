#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "regunet/errors.hpp"
#include "regunet/gradcheck.hpp"
#include "regunet/matrix.hpp"
#include "regunet/model.hpp"
#include "regunet/rng.hpp"
#include "regunet/synthdata.hpp"

using namespace rgn;

namespace {

bool same_bits(const Matrix& a, const Matrix& b) {
  return a.same_shape(b) &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

// 5x3-grid impact scene, light enough to simulate inside every test.
ScenarioConfig tiny_config() {
  ScenarioConfig cfg;
  cfg.plate_length = 320.0;
  cfg.plate_width = 80.0;
  cfg.arch_height = 32.0;
  cfg.grid_nx = 5;
  cfg.grid_ny = 3;
  cfg.impact_x_fraction = 0.5;
  cfg.snapshot_interval = 0.1;
  cfg.snapshot_count = 4;
  return cfg;
}

GraphSequence simulate_tiny(const ScenarioConfig& cfg, std::uint32_t cp,
                            double amp) {
  MorphParams mp;
  mp.control_point = cp;
  mp.amplitude = amp;
  const Mesh morphed = morph_geometry(generate_benchmark_mesh(cfg), mp, cfg);
  GraphSequence seq = simulate_impact(morphed, cfg);
  seq.control_point = cp;
  seq.amplitude = amp;
  return seq;
}

GUNetConfig toy_cfg1(std::size_t c0 = 8) {
  GUNetConfig cfg;
  cfg.channels = {c0, c0};
  cfg.levels = 1;
  cfg.fine_steps = 1;
  cfg.coarse_steps = 2;
  cfg.cross_k = 3;
  return cfg;
}

struct UnetFixture {
  ScenarioConfig scen;
  GraphHierarchy hier;
  GraphSequence sample;
};

UnetFixture tiny_fixture(const GUNetConfig& cfg) {
  UnetFixture f;
  f.scen = tiny_config();
  f.hier = build_coarse_hierarchy(generate_benchmark_mesh(f.scen),
                                  f.scen.grid_nx, f.scen.grid_ny, cfg.levels,
                                  cfg.cross_k);
  f.sample = simulate_tiny(f.scen, 1, 1.5);
  return f;
}

void zero_params(Model& m) {
  for (std::size_t i = 0; i < m.params.count(); ++i)
    m.params.at(i).value.set_zero();
}

std::set<std::string> name_set(const Model& m) {
  const auto v = m.params.names();
  return std::set<std::string>(v.begin(), v.end());
}

Matrix translated(const Matrix& m, double dx, double dy, double dz) {
  Matrix out = m;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    out(i, 0) += dx;
    out(i, 1) += dy;
    out(i, 2) += dz;
  }
  return out;
}

double loss_of(Model& model, const SampleBinding& binding) {
  Tape tape(model.params);
  std::vector<Matrix> targets;
  const Ref loss = teacher_forced_loss(tape, model, binding, targets);
  return tape.value(loss)(0, 0);
}

}  // namespace

TEST_CASE("config validation pins the channel schedule rules") {
  GUNetConfig cfg;  // defaults are valid
  cfg.validate();

  GUNetConfig bad = cfg;
  bad.channels = {32, 32, 64};
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = cfg;
  bad.channels = {32, 48, 96, 192};  // C1 != C0
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = cfg;
  bad.channels = {32, 32, 64, 96};  // last hop not doubling
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = cfg;
  bad.levels = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = cfg;
  bad.cross_k = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  bad = cfg;
  bad.leaky_slope = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.leaky_slope = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);

  GUNetConfig one = toy_cfg1();
  one.validate();  // single level: no doubling constraint in play
  one.fine_steps = 0;
  one.coarse_steps = 0;
  one.validate();  // degenerate step counts stay legal
}

TEST_CASE("variant tags round trip through their names") {
  for (const char* name :
       {"regunet", "baseline1", "baseline2", "baseline3"}) {
    CHECK(variant_name(parse_variant_tag(name)) == name);
  }
  CHECK_THROWS_AS(parse_variant_tag("baseline4"), ConfigError);
  CHECK_THROWS_AS(parse_variant_tag(""), ConfigError);
}

TEST_CASE("normalization transforms: affine inputs, scale-only targets") {
  NormStats norm;
  // Defaults are the identity.
  Matrix x = Matrix::from_rows(2, 3, {1, -2, 3, 0, 5, -6});
  CHECK(same_bits(norm.normalize_nodes(x), x));
  CHECK(same_bits(norm.normalize_targets(x), x));
  CHECK(same_bits(norm.denormalize_increments(x), x));

  norm.node_mean = Matrix::from_rows(1, 3, {1, 2, 3});
  norm.node_scale = Matrix::from_rows(1, 3, {2, 4, 8});
  const Matrix nx = norm.normalize_nodes(x);
  CHECK(nx(0, 0) == 0.0);
  CHECK(nx(0, 1) == -1.0);
  CHECK(nx(0, 2) == 0.0);
  CHECK(nx(1, 0) == -0.5);
  CHECK(nx(1, 1) == 0.75);
  CHECK(nx(1, 2) == -1.125);

  // Targets have no shift, so zero increments survive both directions for
  // any scale.
  norm.target_scale = Matrix::from_rows(1, 3, {0.37, 11.0, 2e-4});
  Matrix zero(4, 3);
  CHECK(same_bits(norm.normalize_targets(zero), zero));
  CHECK(same_bits(norm.denormalize_increments(zero), zero));
  const Matrix t = norm.normalize_targets(x);
  CHECK(t(1, 1) == 5.0 / 11.0);
  const Matrix back = norm.denormalize_increments(t);
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(back.data()[i] == doctest::Approx(x.data()[i]).epsilon(1e-15));

  Matrix wrong(2, 5);
  CHECK_THROWS_AS(norm.normalize_nodes(wrong), InputError);
  CHECK_THROWS_AS(norm.normalize_targets(wrong), InputError);
}

TEST_CASE("memory is the only parameter difference between the flat "
          "baselines") {
  GraphHierarchy unused;
  ModelVariant v1;
  v1.tag = VariantTag::kBaseline1;
  v1.latent_channels = 8;
  v1.mp_steps = 3;
  ModelVariant v2 = v1;
  v2.tag = VariantTag::kBaseline2;

  const Model b1 = build_model(v1, GUNetConfig{}, unused, 7);
  const Model b2 = build_model(v2, GUNetConfig{}, unused, 7);
  const auto n1 = name_set(b1);
  const auto n2 = name_set(b2);

  for (const auto& n : n1) CHECK(n2.count(n) == 1);
  std::vector<std::string> extra;
  std::set_difference(n2.begin(), n2.end(), n1.begin(), n1.end(),
                      std::back_inserter(extra));
  CHECK(!extra.empty());
  for (const auto& n : extra)
    CHECK(n.find(".hidden.") != std::string::npos);
  // Shared tensors keep identical shapes, so parameter counts are directly
  // comparable across the two.
  for (const auto& n : n1) {
    const Matrix& a = b1.params.at(b1.params.find(n)).value;
    const Matrix& b = b2.params.at(b2.params.find(n)).value;
    CHECK(a.same_shape(b));
  }
}

TEST_CASE("dropping memory from the full model only removes hidden "
          "updates") {
  const GUNetConfig cfg = toy_cfg1();
  const UnetFixture f = tiny_fixture(cfg);
  ModelVariant vr;
  vr.tag = VariantTag::kRegunet;
  ModelVariant v3;
  v3.tag = VariantTag::kBaseline3;

  const Model full = build_model(vr, cfg, f.hier, 3);
  const Model gunet = build_model(v3, cfg, f.hier, 3);
  const auto nf = name_set(full);
  const auto ng = name_set(gunet);

  for (const auto& n : ng) CHECK(nf.count(n) == 1);
  CHECK(ng.size() < nf.size());
  std::vector<std::string> extra;
  std::set_difference(nf.begin(), nf.end(), ng.begin(), ng.end(),
                      std::back_inserter(extra));
  for (const auto& n : extra)
    CHECK(n.find(".hidden.") != std::string::npos);
}

TEST_CASE("registered tensor shapes follow the channel schedule") {
  GUNetConfig cfg;
  cfg.channels = {2, 2, 4};
  cfg.levels = 2;
  cfg.fine_steps = 1;
  cfg.coarse_steps = 1;
  cfg.cross_k = 2;
  ScenarioConfig scen = tiny_config();
  scen.grid_nx = 5;
  scen.grid_ny = 5;
  const GraphHierarchy hier = build_coarse_hierarchy(
      generate_benchmark_mesh(scen), 5, 5, cfg.levels, cfg.cross_k);
  ModelVariant vr;
  vr.tag = VariantTag::kRegunet;
  const Model m = build_model(vr, cfg, hier, 11);

  auto shape = [&](const std::string& name) {
    const Matrix& v = m.params.at(m.params.find(name)).value;
    return std::pair<std::size_t, std::size_t>(v.rows(), v.cols());
  };
  CHECK(shape("enc.node.W1") == std::pair<std::size_t, std::size_t>(3, 2));
  CHECK(shape("enc.edge.W1") == std::pair<std::size_t, std::size_t>(8, 2));
  CHECK(shape("enc.ds_rest.W1") ==
        std::pair<std::size_t, std::size_t>(4, 2));
  CHECK(shape("enc.coarse_edge.W1") ==
        std::pair<std::size_t, std::size_t>(4, 4));
  // Re-MP first layers consume (sender, receiver, edge, hidden).
  CHECK(shape("fine_in.step0.edge.W1") ==
        std::pair<std::size_t, std::size_t>(8, 2));
  CHECK(shape("fine_in.step0.hidden.W1") ==
        std::pair<std::size_t, std::size_t>(8, 2));
  CHECK(shape("fine_in.step0.node.W1") ==
        std::pair<std::size_t, std::size_t>(4, 2));
  CHECK(shape("coarse.step0.edge.W1") ==
        std::pair<std::size_t, std::size_t>(16, 4));
  CHECK(shape("dsmp.msg.W1") == std::pair<std::size_t, std::size_t>(4, 2));
  CHECK(shape("dsmp.node.W1") == std::pair<std::size_t, std::size_t>(2, 2));
  // One weight bank per level-1 cross edge, 2 -> 4 channels down and the
  // mirror 4 -> 2 up.
  const std::size_t m_cross1 = hier.cross[1].num_edges();
  CHECK(shape("dsnw1.W") ==
        std::pair<std::size_t, std::size_t>(m_cross1, 8));
  CHECK(shape("usnw1.W") ==
        std::pair<std::size_t, std::size_t>(m_cross1, 8));
  CHECK(shape("dec.node.W4") == std::pair<std::size_t, std::size_t>(2, 3));
  // Every trunk MLP normalizes its output; the decoder must not.
  CHECK(m.params.contains("enc.node.ln.gamma"));
  CHECK(m.params.contains("coarse.step0.node.ln.gamma"));
  CHECK(!m.params.contains("dec.node.ln.gamma"));
}

TEST_CASE("same seed builds bit-identical parameters") {
  const GUNetConfig cfg = toy_cfg1();
  const UnetFixture f = tiny_fixture(cfg);
  ModelVariant vr;
  vr.tag = VariantTag::kRegunet;
  const Model a = build_model(vr, cfg, f.hier, 99);
  const Model b = build_model(vr, cfg, f.hier, 99);
  const Model c = build_model(vr, cfg, f.hier, 100);
  REQUIRE(a.params.count() == b.params.count());
  bool any_diff = false;
  for (std::size_t i = 0; i < a.params.count(); ++i) {
    CHECK(same_bits(a.params.at(i).value, b.params.at(i).value));
    if (!same_bits(a.params.at(i).value, c.params.at(i).value))
      any_diff = true;
  }
  CHECK(any_diff);
}

TEST_CASE("zero-initialized variants predict exactly zero increments") {
  const GUNetConfig cfg = toy_cfg1();
  const UnetFixture f = tiny_fixture(cfg);
  for (VariantTag tag :
       {VariantTag::kRegunet, VariantTag::kBaseline1, VariantTag::kBaseline2,
        VariantTag::kBaseline3}) {
    CAPTURE(variant_name(tag));
    ModelVariant v;
    v.tag = tag;
    v.latent_channels = 8;
    v.mp_steps = 3;
    Model m = build_model(v, cfg, f.hier, 5);
    zero_params(m);
    const SampleBinding b = bind_sample(f.hier, f.sample, cfg, tag);

    for (RolloutMode mode :
         {RolloutMode::kTeacherForced, RolloutMode::kAutoregressive}) {
      std::vector<Matrix> incs;
      const auto pred = rollout(m, b, mode, nullptr, &incs);
      REQUIRE(incs.size() == f.sample.num_steps() - 1);
      for (const Matrix& inc : incs)
        for (std::size_t i = 0; i < inc.size(); ++i)
          CHECK(inc.data()[i] == 0.0);
      // Zero increments pin the whole trajectory.
      for (std::size_t j = 1; j < pred.size(); ++j) {
        const Matrix& base = mode == RolloutMode::kTeacherForced
                                 ? f.sample.positions[j - 1]
                                 : f.sample.positions[0];
        CHECK(same_bits(pred[j], base));
      }
    }
    // The loss reduces to the mean squared target and stays finite.
    const double l = loss_of(m, b);
    CHECK(l > 0.0);
    CHECK(std::isfinite(l));
  }
}

TEST_CASE("teacher-forced loss averages over free nodes, channels, steps") {
  GraphSequence seq;
  seq.fixed_mask = {0, 0};
  seq.senders = {0, 1};
  seq.receivers = {1, 0};
  seq.positions.push_back(Matrix::from_rows(2, 3, {0, 0, 0, 10, 0, 0}));
  seq.positions.push_back(Matrix::from_rows(2, 3, {3, 0, 0, 10, 0, 0}));
  seq.positions.push_back(Matrix::from_rows(2, 3, {3, 4, 0, 10, 0, 0}));

  GraphHierarchy unused;
  ModelVariant v;
  v.tag = VariantTag::kBaseline1;
  v.latent_channels = 4;
  v.mp_steps = 1;
  Model m = build_model(v, GUNetConfig{}, unused, 1);
  zero_params(m);

  // Zero model: the loss is the squared target sum over the free rows,
  // divided by 3 channels * 2 free nodes * 2 steps.
  SampleBinding b = bind_sample(unused, seq, GUNetConfig{}, v.tag);
  CHECK(loss_of(m, b) == doctest::Approx(25.0 / 12.0).epsilon(1e-15));

  // Clamping a node removes its rows from both the sum and the divisor.
  GraphSequence clamped = seq;
  clamped.fixed_mask = {0, 1};
  clamped.positions[1](1, 0) = 15.0;  // fixed node moves in the data; masked
  SampleBinding bc = bind_sample(unused, clamped, GUNetConfig{}, v.tag);
  CHECK(loss_of(m, bc) == doctest::Approx(25.0 / 6.0).epsilon(1e-15));

  // Degenerate sequences are rejected.
  GraphSequence one_step = seq;
  one_step.positions.resize(1);
  SampleBinding b1 = bind_sample(unused, one_step, GUNetConfig{}, v.tag);
  Tape tape(m.params);
  std::vector<Matrix> targets;
  CHECK_THROWS_AS(teacher_forced_loss(tape, m, b1, targets), InputError);

  GraphSequence all_fixed = seq;
  all_fixed.fixed_mask = {1, 1};
  SampleBinding bf = bind_sample(unused, all_fixed, GUNetConfig{}, v.tag);
  Tape tape2(m.params);
  CHECK_THROWS_AS(teacher_forced_loss(tape2, m, bf, targets), InputError);
}

TEST_CASE("rollout covers T-1 rounds from the initial state") {
  const GUNetConfig cfg = toy_cfg1(4);
  const UnetFixture f = tiny_fixture(cfg);
  ModelVariant v;
  v.tag = VariantTag::kRegunet;
  const Model m = build_model(v, cfg, f.hier, 21);
  const SampleBinding b = bind_sample(f.hier, f.sample, cfg, v.tag);
  REQUIRE(f.sample.num_steps() == 4);
  CHECK(b.node_inputs.size() == 3);
  for (std::size_t i = 0; i < b.node_inputs[0].size(); ++i)
    CHECK(b.node_inputs[0].data()[i] == 0.0);

  std::vector<Matrix> incs;
  const auto pred =
      rollout(m, b, RolloutMode::kAutoregressive, nullptr, &incs);
  CHECK(pred.size() == 4);
  CHECK(incs.size() == 3);
  CHECK(same_bits(pred[0], f.sample.positions[0]));

  Tape tape(const_cast<Model&>(m).params);
  std::vector<Matrix> targets;
  teacher_forced_loss(tape, m, b, targets);
  CHECK(targets.size() == 3);

  // Fixed rows never move in either mode.
  for (std::size_t j = 1; j < pred.size(); ++j)
    for (std::size_t i = 0; i < f.sample.num_nodes(); ++i)
      if (f.sample.fixed_mask[i])
        for (std::size_t d = 0; d < 3; ++d)
          CHECK(pred[j](i, d) == f.sample.positions[0](i, d));
}

TEST_CASE("rigid translation leaves predicted increments bit-identical") {
  const GUNetConfig cfg = toy_cfg1();
  const ScenarioConfig scen = tiny_config();
  const Mesh bench = generate_benchmark_mesh(scen);
  const GraphSequence sample = simulate_tiny(scen, 2, -1.25);

  const double dx = 17.0, dy = -5.0, dz = 3.0;
  Mesh bench_t = bench;
  bench_t.positions = translated(bench.positions, dx, dy, dz);
  GraphSequence sample_t = sample;
  for (Matrix& p : sample_t.positions) p = translated(p, dx, dy, dz);

  const GraphHierarchy hier = build_coarse_hierarchy(
      bench, scen.grid_nx, scen.grid_ny, cfg.levels, cfg.cross_k);
  const GraphHierarchy hier_t = build_coarse_hierarchy(
      bench_t, scen.grid_nx, scen.grid_ny, cfg.levels, cfg.cross_k);
  // Rest geometry is made of coordinate differences, which the snapped
  // lattice keeps exact under integer translations.
  CHECK(same_bits(hier.levels[1].edge_features, hier_t.levels[1].edge_features));

  for (VariantTag tag : {VariantTag::kRegunet, VariantTag::kBaseline1,
                         VariantTag::kBaseline2}) {
    CAPTURE(variant_name(tag));
    ModelVariant v;
    v.tag = tag;
    v.latent_channels = 8;
    v.mp_steps = 2;
    const Model m = build_model(v, cfg, hier, 17);
    Model m_t = build_model(v, cfg, hier_t, 17);
    const SampleBinding b = bind_sample(hier, sample, cfg, tag);
    const SampleBinding bt = bind_sample(hier_t, sample_t, cfg, tag);
    if (tag == VariantTag::kRegunet) {
      CHECK(b.cross0.senders == bt.cross0.senders);
      CHECK(b.cross0.receivers == bt.cross0.receivers);
      CHECK(same_bits(b.cross0.rest_features, bt.cross0.rest_features));
    }

    // Teacher forcing derives every step's inputs from the snapped
    // snapshots, where integer translations cancel exactly, so all T-1
    // increment sets must match to the bit.
    std::vector<Matrix> incs, incs_t;
    rollout(m, b, RolloutMode::kTeacherForced, nullptr, &incs);
    rollout(m_t, bt, RolloutMode::kTeacherForced, nullptr, &incs_t);
    REQUIRE(incs.size() == incs_t.size());
    for (std::size_t j = 0; j < incs.size(); ++j)
      CHECK(same_bits(incs[j], incs_t[j]));

    // Autoregressive steps past the first accumulate the model's own float
    // output into the positions, whose rounding is not translation
    // covariant; only the first step's inputs still come from the data.
    std::vector<Matrix> ar, ar_t;
    rollout(m, b, RolloutMode::kAutoregressive, nullptr, &ar);
    rollout(m_t, bt, RolloutMode::kAutoregressive, nullptr, &ar_t);
    CHECK(same_bits(ar[0], ar_t[0]));
  }
}

TEST_CASE("node relabeling permutes increments exactly") {
  const GUNetConfig cfg = toy_cfg1();
  const UnetFixture f = tiny_fixture(cfg);
  const std::size_t n = f.sample.num_nodes();

  std::vector<std::uint32_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = static_cast<std::uint32_t>(i);
  Rng rng(123);
  rng.shuffle(perm);

  GraphSequence relabeled;
  relabeled.control_point = f.sample.control_point;
  relabeled.amplitude = f.sample.amplitude;
  relabeled.fixed_mask.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    relabeled.fixed_mask[perm[i]] = f.sample.fixed_mask[i];
  relabeled.senders.resize(f.sample.senders.size());
  relabeled.receivers.resize(f.sample.receivers.size());
  for (std::size_t e = 0; e < f.sample.senders.size(); ++e) {
    relabeled.senders[e] = perm[f.sample.senders[e]];
    relabeled.receivers[e] = perm[f.sample.receivers[e]];
  }
  for (const Matrix& p : f.sample.positions) {
    Matrix q(n, 3);
    for (std::size_t i = 0; i < n; ++i)
      std::memcpy(q.row(perm[i]), p.row(i), 3 * sizeof(double));
    relabeled.positions.push_back(std::move(q));
  }

  for (VariantTag tag : {VariantTag::kRegunet, VariantTag::kBaseline2}) {
    CAPTURE(variant_name(tag));
    ModelVariant v;
    v.tag = tag;
    v.latent_channels = 8;
    v.mp_steps = 2;
    const Model m = build_model(v, cfg, f.hier, 31);
    const SampleBinding b = bind_sample(f.hier, f.sample, cfg, tag);
    const SampleBinding bp = bind_sample(f.hier, relabeled, cfg, tag);

    for (RolloutMode mode :
         {RolloutMode::kTeacherForced, RolloutMode::kAutoregressive}) {
      std::vector<Matrix> incs, incs_p;
      rollout(m, b, mode, nullptr, &incs);
      rollout(m, bp, mode, nullptr, &incs_p);
      REQUIRE(incs.size() == incs_p.size());
      for (std::size_t j = 0; j < incs.size(); ++j)
        for (std::size_t i = 0; i < n; ++i)
          CHECK(std::memcmp(incs_p[j].row(perm[i]), incs[j].row(i),
                            3 * sizeof(double)) == 0);
    }
  }
}

TEST_CASE("recurrent variants remember, memoryless variants do not") {
  // A frozen sequence feeds the block identical inputs at every step; only
  // a hidden state can make the outputs differ.
  const GUNetConfig cfg = toy_cfg1();
  const UnetFixture f = tiny_fixture(cfg);
  GraphSequence frozen = f.sample;
  for (std::size_t t = 1; t < frozen.positions.size(); ++t)
    frozen.positions[t] = frozen.positions[0];

  struct Case {
    VariantTag tag;
    bool memory;
  };
  for (const Case c : {Case{VariantTag::kBaseline1, false},
                       Case{VariantTag::kBaseline2, true},
                       Case{VariantTag::kBaseline3, false},
                       Case{VariantTag::kRegunet, true}}) {
    CAPTURE(variant_name(c.tag));
    ModelVariant v;
    v.tag = c.tag;
    v.latent_channels = 8;
    v.mp_steps = 2;
    const Model m = build_model(v, cfg, f.hier, 43);
    const SampleBinding b = bind_sample(f.hier, frozen, cfg, c.tag);
    std::vector<Matrix> incs;
    rollout(m, b, RolloutMode::kTeacherForced, nullptr, &incs);
    REQUIRE(incs.size() >= 2);
    if (c.memory)
      CHECK(!same_bits(incs[0], incs[1]));
    else
      CHECK(same_bits(incs[0], incs[1]));
  }
}

TEST_CASE("hidden state never leaks between rollouts") {
  const GUNetConfig cfg = toy_cfg1();
  const UnetFixture f = tiny_fixture(cfg);
  ModelVariant v;
  v.tag = VariantTag::kRegunet;
  const Model m = build_model(v, cfg, f.hier, 53);
  const SampleBinding b = bind_sample(f.hier, f.sample, cfg, v.tag);

  const auto first = rollout(m, b, RolloutMode::kAutoregressive);
  const auto second = rollout(m, b, RolloutMode::kAutoregressive);
  REQUIRE(first.size() == second.size());
  for (std::size_t j = 0; j < first.size(); ++j)
    CHECK(same_bits(first[j], second[j]));
}

TEST_CASE("ground-truth increments collapse both rollout modes onto the "
          "data") {
  const GUNetConfig cfg = toy_cfg1();
  const UnetFixture f = tiny_fixture(cfg);
  ModelVariant v;
  v.tag = VariantTag::kRegunet;
  Model m = build_model(v, cfg, f.hier, 61);
  const SampleBinding b = bind_sample(f.hier, f.sample, cfg, v.tag);

  std::vector<Matrix> oracle;
  for (std::size_t j = 1; j < f.sample.num_steps(); ++j)
    oracle.push_back(compute_node_features(f.sample.positions[j - 1],
                                           f.sample.positions[j]));

  const auto tf = rollout(m, b, RolloutMode::kTeacherForced, &oracle);
  const auto ar = rollout(m, b, RolloutMode::kAutoregressive, &oracle);
  REQUIRE(tf.size() == f.sample.num_steps());
  for (std::size_t j = 0; j < tf.size(); ++j) {
    CHECK(same_bits(tf[j], f.sample.positions[j]));
    CHECK(same_bits(ar[j], f.sample.positions[j]));
  }
}

TEST_CASE("zero step counts degenerate to the downsampling core") {
  GUNetConfig cfg = toy_cfg1();
  cfg.fine_steps = 0;
  cfg.coarse_steps = 0;
  const UnetFixture f = tiny_fixture(cfg);
  ModelVariant v;
  v.tag = VariantTag::kRegunet;
  Model m = build_model(v, cfg, f.hier, 71);
  for (const auto& name : m.params.names()) {
    CHECK(name.find("fine_in.") == std::string::npos);
    CHECK(name.find("coarse.step") == std::string::npos);
    CHECK(name.find("fine_out.") == std::string::npos);
  }
  const SampleBinding b = bind_sample(f.hier, f.sample, cfg, v.tag);
  const double l = loss_of(m, b);
  CHECK(std::isfinite(l));
  const auto pred = rollout(m, b, RolloutMode::kAutoregressive);
  CHECK(pred.size() == f.sample.num_steps());
}

TEST_CASE("full-loss gradients match finite differences on a one-level "
          "toy") {
  GUNetConfig cfg = toy_cfg1(4);
  ScenarioConfig scen = tiny_config();
  scen.grid_nx = 3;
  scen.grid_ny = 3;
  scen.plate_length = 100.0;
  scen.plate_width = 60.0;
  scen.snapshot_count = 3;
  const GraphHierarchy hier = build_coarse_hierarchy(
      generate_benchmark_mesh(scen), 3, 3, cfg.levels, cfg.cross_k);
  MorphParams mp;
  mp.control_point = 1;
  mp.amplitude = 1.0;
  const Mesh morphed =
      morph_geometry(generate_benchmark_mesh(scen), mp, scen);
  GraphSequence sample = simulate_impact(morphed, scen);

  ModelVariant v;
  v.tag = VariantTag::kRegunet;
  Model m = build_model(v, cfg, hier, 83);
  perturb_parameters(m.params, 17, 0.05);
  const SampleBinding b = bind_sample(hier, sample, cfg, v.tag);

  auto loss_value = [&]() { return loss_of(m, b); };
  auto grads = [&]() {
    Tape tape(m.params);
    std::vector<Matrix> targets;
    tape.backward(teacher_forced_loss(tape, m, b, targets));
  };
  const FdReport report =
      finite_difference_check(m.params, grads, loss_value, 1e-6, 1e-3, 2);
  const FdEntry& w = report.entries[report.worst];
  CAPTURE(report.checked);
  CAPTURE(w.param);
  CAPTURE(w.ad);
  CAPTURE(w.fd);
  CHECK(report.max_rel_err < 1e-5);
}

TEST_CASE("full-loss gradients cover the weight-bank path on a two-level "
          "toy") {
  GUNetConfig cfg;
  cfg.channels = {2, 2, 4};
  cfg.levels = 2;
  cfg.fine_steps = 1;
  cfg.coarse_steps = 1;
  cfg.cross_k = 2;
  ScenarioConfig scen = tiny_config();
  scen.grid_nx = 5;
  scen.grid_ny = 5;
  scen.snapshot_count = 3;
  const GraphHierarchy hier = build_coarse_hierarchy(
      generate_benchmark_mesh(scen), 5, 5, cfg.levels, cfg.cross_k);
  const GraphSequence sample = simulate_tiny(scen, 0, 2.0);

  ModelVariant v;
  v.tag = VariantTag::kRegunet;
  Model m = build_model(v, cfg, hier, 89);
  perturb_parameters(m.params, 19, 0.05);
  const SampleBinding b = bind_sample(hier, sample, cfg, v.tag);

  auto loss_value = [&]() { return loss_of(m, b); };
  auto grads = [&]() {
    Tape tape(m.params);
    std::vector<Matrix> targets;
    tape.backward(teacher_forced_loss(tape, m, b, targets));
  };
  const FdReport report =
      finite_difference_check(m.params, grads, loss_value, 1e-6, 1e-3, 3);
  const FdEntry& w = report.entries[report.worst];
  CAPTURE(w.param);
  CAPTURE(w.ad);
  CAPTURE(w.fd);
  CHECK(report.max_rel_err < 1e-5);
}

TEST_CASE("binding validates the sample against the hierarchy") {
  const GUNetConfig cfg = toy_cfg1();
  const UnetFixture f = tiny_fixture(cfg);

  ScenarioConfig other = tiny_config();
  other.grid_nx = 3;
  const GraphSequence small = simulate_tiny(other, 0, 0.0);
  CHECK_THROWS_AS(bind_sample(f.hier, small, cfg, VariantTag::kRegunet),
                  ConfigError);
  // Flat variants never touch the hierarchy, so the same sample binds.
  const SampleBinding b =
      bind_sample(f.hier, small, cfg, VariantTag::kBaseline1);
  CHECK(b.node_inputs.size() == small.num_steps() - 1);

  GraphHierarchy shallow = f.hier;
  shallow.levels.pop_back();
  CHECK_THROWS_AS(bind_sample(shallow, f.sample, cfg, VariantTag::kRegunet),
                  ConfigError);
}

TEST_CASE("model checkpoints restore parameters, stats, and wiring") {
  const GUNetConfig cfg = toy_cfg1(4);
  const UnetFixture f = tiny_fixture(cfg);
  ModelVariant v;
  v.tag = VariantTag::kRegunet;
  Model m = build_model(v, cfg, f.hier, 97);
  m.norm.node_mean = Matrix::from_rows(1, 3, {0.1, -0.2, 0.3});
  m.norm.node_scale = Matrix::from_rows(1, 3, {1.5, 2.5, 3.5});
  m.norm.target_scale = Matrix::from_rows(1, 3, {0.4, 0.5, 0.6});
  for (std::size_t j = 0; j < 8; ++j) {
    m.norm.edge_mean(0, j) = 0.01 * static_cast<double>(j);
    m.norm.edge_scale(0, j) = 1.0 + static_cast<double>(j);
  }

  namespace fs = std::filesystem;
  const fs::path dir =
      fs::temp_directory_path() / "regunet_model_roundtrip";
  fs::create_directories(dir);
  const std::string path = (dir / "model.rgck").string();
  save_model(m, path);

  const Model loaded = load_model(path, f.hier);
  CHECK(loaded.variant.tag == m.variant.tag);
  CHECK(loaded.cfg.channels == m.cfg.channels);
  CHECK(loaded.cfg.fine_steps == m.cfg.fine_steps);
  CHECK(loaded.cfg.coarse_steps == m.cfg.coarse_steps);
  CHECK(loaded.cfg.cross_k == m.cfg.cross_k);
  CHECK(loaded.cfg.levels == m.cfg.levels);
  CHECK(loaded.cfg.leaky_slope == m.cfg.leaky_slope);
  REQUIRE(loaded.params.count() == m.params.count());
  for (std::size_t i = 0; i < m.params.count(); ++i) {
    CHECK(loaded.params.at(i).name == m.params.at(i).name);
    CHECK(same_bits(loaded.params.at(i).value, m.params.at(i).value));
  }
  CHECK(same_bits(loaded.norm.node_mean, m.norm.node_mean));
  CHECK(same_bits(loaded.norm.node_scale, m.norm.node_scale));
  CHECK(same_bits(loaded.norm.edge_mean, m.norm.edge_mean));
  CHECK(same_bits(loaded.norm.edge_scale, m.norm.edge_scale));
  CHECK(same_bits(loaded.norm.target_scale, m.norm.target_scale));

  const SampleBinding b = bind_sample(f.hier, f.sample, cfg, v.tag);
  const auto p1 = rollout(m, b, RolloutMode::kAutoregressive);
  const auto p2 = rollout(loaded, b, RolloutMode::kAutoregressive);
  for (std::size_t j = 0; j < p1.size(); ++j)
    CHECK(same_bits(p1[j], p2[j]));

  // A checkpoint without model metadata is not a model checkpoint.
  const std::string bare = (dir / "bare.rgck").string();
  Matrix w(1, 1);
  write_rgck(bare, {{"some.tensor", &w}});
  CHECK_THROWS_AS(load_model(bare, f.hier), FormatError);
  fs::remove_all(dir);
}

TEST_CASE("loading rejects a hierarchy with different cross-edge counts") {
  GUNetConfig cfg;
  cfg.channels = {2, 2, 4};
  cfg.levels = 2;
  cfg.fine_steps = 1;
  cfg.coarse_steps = 1;
  cfg.cross_k = 2;
  ScenarioConfig scen = tiny_config();
  scen.grid_nx = 5;
  scen.grid_ny = 5;
  const Mesh bench = generate_benchmark_mesh(scen);
  const GraphHierarchy hier =
      build_coarse_hierarchy(bench, 5, 5, cfg.levels, 2);
  const GraphHierarchy wider =
      build_coarse_hierarchy(bench, 5, 5, cfg.levels, 3);

  ModelVariant v;
  v.tag = VariantTag::kRegunet;
  const Model m = build_model(v, cfg, hier, 101);

  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "regunet_model_mismatch";
  fs::create_directories(dir);
  const std::string path = (dir / "model.rgck").string();
  save_model(m, path);
  CHECK_THROWS_AS(load_model(path, wider), InputError);
  fs::remove_all(dir);
}
