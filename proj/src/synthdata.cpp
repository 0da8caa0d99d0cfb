#include "regunet/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "regunet/binio.hpp"
#include "regunet/errors.hpp"
#include "regunet/kvconfig.hpp"
#include "regunet/rng.hpp"

namespace rgn {

void ScenarioConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v))
      throw ConfigError(std::string(name) + " must be positive");
  };
  positive(plate_length, "plate_length");
  positive(plate_width, "plate_width");
  positive(arch_height, "arch_height");
  positive(node_mass, "node_mass");
  positive(spring_stiffness, "spring_stiffness");
  positive(damping, "damping");
  positive(contact_stiffness, "contact_stiffness");
  positive(impactor_radius, "impactor_radius");
  positive(dt, "dt");
  positive(snapshot_interval, "snapshot_interval");
  // The impactor may be massless (kinematic, constant velocity) or at rest.
  if (!(impactor_mass >= 0.0) || !std::isfinite(impactor_mass))
    throw ConfigError("impactor_mass must be >= 0");
  if (!(impact_speed >= 0.0) || !std::isfinite(impact_speed))
    throw ConfigError("impact_speed must be >= 0");
  if (!(impact_x_fraction > 0.0 && impact_x_fraction < 1.0))
    throw ConfigError("impact_x_fraction must be in (0, 1)");
  if (grid_nx < 2 || grid_ny < 2)
    throw ConfigError("grid must be at least 2x2");
  if (snapshot_count < 1) throw ConfigError("snapshot_count must be >= 1");
  const double ratio = snapshot_interval / dt;
  if (std::abs(ratio - std::round(ratio)) > 1e-9 * ratio || ratio < 0.5)
    throw ConfigError("snapshot_interval must be an integer multiple of dt");
}

std::string serialize_scenario_config(const ScenarioConfig& c) {
  std::ostringstream out;
  out << "plate_length = " << format_double(c.plate_length) << "\n";
  out << "plate_width = " << format_double(c.plate_width) << "\n";
  out << "arch_height = " << format_double(c.arch_height) << "\n";
  out << "grid_nx = " << c.grid_nx << "\n";
  out << "grid_ny = " << c.grid_ny << "\n";
  out << "node_mass = " << format_double(c.node_mass) << "\n";
  out << "spring_stiffness = " << format_double(c.spring_stiffness) << "\n";
  out << "damping = " << format_double(c.damping) << "\n";
  out << "contact_stiffness = " << format_double(c.contact_stiffness) << "\n";
  out << "impactor_radius = " << format_double(c.impactor_radius) << "\n";
  out << "impactor_mass = " << format_double(c.impactor_mass) << "\n";
  out << "impact_speed = " << format_double(c.impact_speed) << "\n";
  out << "impact_x_fraction = " << format_double(c.impact_x_fraction)
      << "\n";
  out << "dt = " << format_double(c.dt) << "\n";
  out << "snapshot_interval = " << format_double(c.snapshot_interval)
      << "\n";
  out << "snapshot_count = " << c.snapshot_count << "\n";
  return out.str();
}

ScenarioConfig parse_scenario_config(const std::string& text) {
  ScenarioConfig cfg;
  for_each_config_pair(text, [&](const std::string& key,
                                 const std::string& value) {
    auto num = [&] { return config_double(key, value); };
    auto size = [&] { return config_size(key, value); };
    if (key == "plate_length") cfg.plate_length = num();
    else if (key == "plate_width") cfg.plate_width = num();
    else if (key == "arch_height") cfg.arch_height = num();
    else if (key == "grid_nx") cfg.grid_nx = size();
    else if (key == "grid_ny") cfg.grid_ny = size();
    else if (key == "node_mass") cfg.node_mass = num();
    else if (key == "spring_stiffness") cfg.spring_stiffness = num();
    else if (key == "damping") cfg.damping = num();
    else if (key == "contact_stiffness") cfg.contact_stiffness = num();
    else if (key == "impactor_radius") cfg.impactor_radius = num();
    else if (key == "impactor_mass") cfg.impactor_mass = num();
    else if (key == "impact_speed") cfg.impact_speed = num();
    else if (key == "impact_x_fraction") cfg.impact_x_fraction = num();
    else if (key == "dt") cfg.dt = num();
    else if (key == "snapshot_interval") cfg.snapshot_interval = num();
    else if (key == "snapshot_count") cfg.snapshot_count = size();
    else
      throw ConfigError("unknown config key: " + key);
  });
  cfg.validate();
  return cfg;
}

ScenarioConfig load_scenario_config(const std::string& path) {
  return parse_scenario_config(read_text_file(path));
}

std::uint64_t config_hash(const ScenarioConfig& cfg) {
  const std::string text = serialize_scenario_config(cfg);
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

double snap_position(double x) {
  return std::nearbyint(x * 67108864.0) / 67108864.0;  // 2^26 per mm
}

Mesh generate_benchmark_mesh(const ScenarioConfig& cfg) {
  cfg.validate();
  const std::size_t nx = cfg.grid_nx, ny = cfg.grid_ny;
  Mesh mesh;
  mesh.positions = Matrix(nx * ny, 3);
  mesh.fixed_mask.assign(nx * ny, 0);
  for (std::size_t iy = 0; iy < ny; ++iy)
    for (std::size_t ix = 0; ix < nx; ++ix) {
      const std::size_t id = iy * nx + ix;
      const double x = cfg.plate_length * static_cast<double>(ix) /
                       static_cast<double>(nx - 1);
      const double y = cfg.plate_width * static_cast<double>(iy) /
                       static_cast<double>(ny - 1);
      const double z =
          cfg.arch_height * std::sin(std::numbers::pi * x / cfg.plate_length);
      double* p = mesh.positions.row(id);
      p[0] = snap_position(x);
      p[1] = snap_position(y);
      p[2] = snap_position(z);
      if (ix == 0 || ix == nx - 1) mesh.fixed_mask[id] = 1;
    }
  mesh.elements = grid_quads(nx, ny);
  return mesh;
}

Mesh morph_geometry(const Mesh& mesh, const MorphParams& params,
                    const ScenarioConfig& cfg) {
  if (params.control_point > 2)
    throw InputError("morph control point must be 0, 1, or 2");
  if (!(std::abs(params.amplitude) <= 0.08 * cfg.arch_height))
    throw InputError("morph amplitude exceeds 8% of the arch height");
  const double xc = cfg.plate_length *
                    static_cast<double>(params.control_point + 1) / 4.0;
  const double sigma = cfg.plate_length / 10.0;
  Mesh out = mesh;
  for (std::size_t i = 0; i < out.positions.rows(); ++i) {
    double* p = out.positions.row(i);
    const double dx = p[0] - xc;
    p[2] = snap_position(
        p[2] + params.amplitude * std::exp(-dx * dx / (2.0 * sigma * sigma)));
  }
  return out;
}

Matrix latin_hypercube_sample(std::size_t n, std::size_t dims,
                              std::uint64_t seed) {
  if (n < 1 || dims < 1)
    throw ConfigError("latin hypercube: need n >= 1 and dims >= 1");
  Rng rng(seed);
  Matrix samples(n, dims);
  std::vector<std::uint32_t> perm(n);
  for (std::size_t d = 0; d < dims; ++d) {
    for (std::size_t j = 0; j < n; ++j)
      perm[j] = static_cast<std::uint32_t>(j);
    rng.shuffle(perm);
    for (std::size_t j = 0; j < n; ++j) {
      const double lo = static_cast<double>(perm[j]) / n;
      const double hi = static_cast<double>(perm[j] + 1) / n;
      double u = (static_cast<double>(perm[j]) + rng.unit()) / n;
      if (u >= hi) u = std::nextafter(hi, lo);
      if (u < lo) u = lo;
      samples(j, d) = u;
    }
  }
  return samples;
}

MorphParams sample_to_morph(const double* u, const ScenarioConfig& cfg) {
  MorphParams p;
  p.control_point = static_cast<std::uint32_t>(
      std::min(2.0, std::floor(3.0 * u[0])));
  p.amplitude = (2.0 * u[1] - 1.0) * 0.08 * cfg.arch_height;
  return p;
}

GraphSequence simulate_impact(const Mesh& mesh, const ScenarioConfig& cfg,
                              SimDiagnostics* diag) {
  cfg.validate();
  const std::size_t n = mesh.positions.rows();
  Graph graph = build_graph_from_mesh(mesh);

  // Springs act on unordered node pairs.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> springs;
  springs.reserve(graph.num_edges() / 2);
  for (std::size_t e = 0; e < graph.num_edges(); ++e)
    if (graph.senders[e] < graph.receivers[e])
      springs.push_back({graph.senders[e], graph.receivers[e]});

  Matrix pos = mesh.positions;
  std::vector<double> rest(springs.size());
  // Same length expression as the force loop so forces start at exact zero.
  auto pair_length = [&pos](std::uint32_t a, std::uint32_t b) {
    const double* pa = pos.row(a);
    const double* pb = pos.row(b);
    const double dx = pb[0] - pa[0], dy = pb[1] - pa[1], dz = pb[2] - pa[2];
    return std::sqrt(dx * dx + dy * dy + dz * dz);
  };
  for (std::size_t s = 0; s < springs.size(); ++s)
    rest[s] = pair_length(springs[s].first, springs[s].second);

  const double ks = cfg.spring_stiffness * 1e-3;   // N/mm -> kN/mm
  const double kc = cfg.contact_stiffness * 1e-3;  // N/mm -> kN/mm
  const double radius = cfg.impactor_radius;
  const double imp_x = cfg.impact_x_fraction * cfg.plate_length;
  const double imp_y = cfg.plate_width / 2.0;

  // Zero-gap drop height: clear every node under the footprint by a full
  // radius (the node on the impact axis starts exactly in touch).
  double surface = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const double* p = pos.row(i);
    const double dx = p[0] - imp_x, dy = p[1] - imp_y;
    if (dx * dx + dy * dy <= radius * radius)
      surface = std::max(surface, p[2]);
  }
  if (!std::isfinite(surface)) {
    for (std::size_t i = 0; i < n; ++i)
      surface = std::max(surface, pos(i, 2));
  }
  double imp_z = surface + radius;
  double imp_v = -cfg.impact_speed;

  Matrix vel(n, 3);
  Matrix force(n, 3);
  const std::size_t steps_per_snap = static_cast<std::size_t>(
      std::llround(cfg.snapshot_interval / cfg.dt));
  const std::size_t total_steps = (cfg.snapshot_count - 1) * steps_per_snap;
  const double bound = 10.0 * cfg.plate_length;

  GraphSequence seq;
  seq.fixed_mask = mesh.fixed_mask;
  seq.senders = graph.senders;
  seq.receivers = graph.receivers;
  seq.positions.reserve(cfg.snapshot_count);

  auto snap_state = [&]() {
    Matrix snap(n, 3);
    for (std::size_t i = 0; i < snap.size(); ++i)
      snap.data()[i] = snap_position(pos.data()[i]);
    seq.positions.push_back(std::move(snap));
  };

  auto record_energy = [&]() {
    if (diag == nullptr) return;
    double e = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double* v = vel.row(i);
      e += 0.5 * cfg.node_mass * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    }
    if (cfg.impactor_mass > 0.0)
      e += 0.5 * cfg.impactor_mass * imp_v * imp_v;
    for (std::size_t s = 0; s < springs.size(); ++s) {
      const double stretch =
          pair_length(springs[s].first, springs[s].second) - rest[s];
      e += 0.5 * ks * stretch * stretch;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double* p = pos.row(i);
      const double dx = p[0] - imp_x, dy = p[1] - imp_y, dz = p[2] - imp_z;
      const double d2 = dx * dx + dy * dy + dz * dz;
      if (d2 < radius * radius) {
        const double pen = radius - std::sqrt(d2);
        e += 0.5 * kc * pen * pen;
      }
    }
    diag->snapshot_energy.push_back(e);
    diag->impactor_z.push_back(imp_z);
  };

  snap_state();
  record_energy();

  for (std::size_t step = 1; step <= total_steps; ++step) {
    force.set_zero();
    for (std::size_t s = 0; s < springs.size(); ++s) {
      const std::uint32_t a = springs[s].first, b = springs[s].second;
      const double* pa = pos.row(a);
      const double* pb = pos.row(b);
      const double dx = pb[0] - pa[0], dy = pb[1] - pa[1],
                   dz = pb[2] - pa[2];
      const double len = std::sqrt(dx * dx + dy * dy + dz * dz);
      if (len == 0.0) continue;
      const double scale = ks * (len - rest[s]) / len;
      const double fx = scale * dx, fy = scale * dy, fz = scale * dz;
      double* fa = force.row(a);
      double* fb = force.row(b);
      fa[0] += fx;
      fa[1] += fy;
      fa[2] += fz;
      fb[0] -= fx;
      fb[1] -= fy;
      fb[2] -= fz;
    }
    for (std::size_t i = 0; i < n; ++i) {
      double* f = force.row(i);
      const double* v = vel.row(i);
      f[0] -= cfg.damping * v[0];
      f[1] -= cfg.damping * v[1];
      f[2] -= cfg.damping * v[2];
    }
    double node_impulse[3] = {0, 0, 0};
    double imp_force[3] = {0, 0, 0};
    for (std::size_t i = 0; i < n; ++i) {
      const double* p = pos.row(i);
      const double dx = p[0] - imp_x, dy = p[1] - imp_y, dz = p[2] - imp_z;
      const double d2 = dx * dx + dy * dy + dz * dz;
      if (d2 >= radius * radius) continue;
      const double dist = std::sqrt(d2);
      double nx_ = 0.0, ny_ = 0.0, nz_ = -1.0;
      if (dist > 0.0) {
        nx_ = dx / dist;
        ny_ = dy / dist;
        nz_ = dz / dist;
      }
      const double mag = kc * (radius - dist);
      const double fx = mag * nx_, fy = mag * ny_, fz = mag * nz_;
      double* f = force.row(i);
      f[0] += fx;
      f[1] += fy;
      f[2] += fz;
      node_impulse[0] += fx;
      node_impulse[1] += fy;
      node_impulse[2] += fz;
      imp_force[0] -= fx;
      imp_force[1] -= fy;
      imp_force[2] -= fz;
    }
    if (diag != nullptr) {
      double num = 0.0, den = 0.0;
      for (int d = 0; d < 3; ++d) {
        num += std::abs(node_impulse[d] + imp_force[d]);
        den += std::abs(node_impulse[d]);
      }
      if (den > 0.0)
        diag->max_contact_imbalance =
            std::max(diag->max_contact_imbalance, num / den);
    }

    const double inv_m = 1.0 / cfg.node_mass;
    for (std::size_t i = 0; i < n; ++i) {
      if (mesh.fixed_mask[i]) continue;
      double* v = vel.row(i);
      const double* f = force.row(i);
      v[0] += cfg.dt * f[0] * inv_m;
      v[1] += cfg.dt * f[1] * inv_m;
      v[2] += cfg.dt * f[2] * inv_m;
      double* p = pos.row(i);
      p[0] += cfg.dt * v[0];
      p[1] += cfg.dt * v[1];
      p[2] += cfg.dt * v[2];
      if (!std::isfinite(p[0]) || !std::isfinite(p[1]) ||
          !std::isfinite(p[2]) || std::abs(p[0]) > bound ||
          std::abs(p[1]) > bound || std::abs(p[2]) > bound)
        throw NumericError("simulation diverged at step " +
                           std::to_string(step));
    }
    if (cfg.impactor_mass > 0.0)
      imp_v += cfg.dt * imp_force[2] / cfg.impactor_mass;
    imp_z += cfg.dt * imp_v;
    if (!std::isfinite(imp_z) || std::abs(imp_z) > bound)
      throw NumericError("simulation diverged at step " +
                         std::to_string(step));

    if (step % steps_per_snap == 0) {
      snap_state();
      record_energy();
    }
  }
  return seq;
}

namespace {

std::string sample_filename(const std::string& split, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "_%03zu.rgsq", index);
  return split + buf;
}

}  // namespace

void build_dataset(const ScenarioConfig& cfg, const DatasetCounts& counts,
                   const DatasetSeeds& seeds, const std::string& out_dir) {
  cfg.validate();
  if (counts.train < 1 || counts.val < 1 || counts.test < 1)
    throw ConfigError("dataset counts must be >= 1");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create dataset directory: " + out_dir);

  const Mesh benchmark = generate_benchmark_mesh(cfg);
  std::ostringstream manifest;
  char hash_hex[24];
  std::snprintf(hash_hex, sizeof(hash_hex), "%016llx",
                static_cast<unsigned long long>(config_hash(cfg)));
  manifest << "# config_hash " << hash_hex << "\n";
  manifest << "# seed train " << seeds.train << "\n";
  manifest << "# seed val " << seeds.val << "\n";
  manifest << "# seed test " << seeds.test << "\n";

  const std::pair<std::string, std::pair<std::size_t, std::uint64_t>>
      splits[3] = {{"train", {counts.train, seeds.train}},
                   {"val", {counts.val, seeds.val}},
                   {"test", {counts.test, seeds.test}}};
  for (const auto& [split, plan] : splits) {
    const auto [count, seed] = plan;
    const Matrix lhs = latin_hypercube_sample(count, 2, seed);
    for (std::size_t j = 0; j < count; ++j) {
      const MorphParams morph = sample_to_morph(lhs.row(j), cfg);
      const Mesh morphed = morph_geometry(benchmark, morph, cfg);
      GraphSequence seq = simulate_impact(morphed, cfg);
      seq.control_point = morph.control_point;
      seq.amplitude = morph.amplitude;
      const std::string name = sample_filename(split, j);
      write_sample(out_dir + "/" + name, seq);
      manifest << split << " " << name << "\n";
    }
  }
  BinWriter w;
  const std::string text = manifest.str();
  w.bytes(text.data(), text.size());
  w.commit(out_dir + "/manifest.txt");

  // The scenario rides along so consumers can rebuild the benchmark
  // hierarchy without a side channel; its hash must match the manifest.
  BinWriter sc;
  const std::string scenario = serialize_scenario_config(cfg);
  sc.bytes(scenario.data(), scenario.size());
  sc.commit(out_dir + "/scenario.cfg");
}

std::vector<std::string> Manifest::files_of(const std::string& split) const {
  std::vector<std::string> out;
  for (const auto& e : entries)
    if (e.split == split) out.push_back(e.filename);
  return out;
}

Manifest read_manifest(const std::string& dir) {
  const std::string path = dir + "/manifest.txt";
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path);
  Manifest m;
  std::string line;
  std::size_t offset = 0;
  while (std::getline(in, line)) {
    const std::size_t line_start = offset;
    offset += line.size() + 1;
    if (line.empty()) continue;
    std::istringstream ls(line);
    if (line[0] == '#') {
      std::string hash_word, key;
      ls >> hash_word >> key;
      if (key == "config_hash") {
        std::string hex;
        ls >> hex;
        m.config_hash = std::strtoull(hex.c_str(), nullptr, 16);
      } else if (key == "seed") {
        std::string which;
        std::uint64_t value = 0;
        ls >> which >> value;
        if (which == "train") m.seeds.train = value;
        else if (which == "val") m.seeds.val = value;
        else if (which == "test") m.seeds.test = value;
      }
      continue;
    }
    ManifestEntry e;
    if (!(ls >> e.split >> e.filename))
      throw FormatError("malformed manifest line", line_start);
    m.entries.push_back(std::move(e));
  }
  return m;
}

}  // namespace rgn
