#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "regunet/matrix.hpp"
#include "regunet/meshgraph.hpp"

namespace rgn {

// Impact scenario. Units: mm, ms, kg (so forces are kN and stiffnesses in
// N/mm are scaled by 1e-3 internally). Field names double as the keys of the
// flat `key = value` config file.
struct ScenarioConfig {
  double plate_length = 350.0;     // mm
  double plate_width = 90.0;       // mm
  double arch_height = 30.0;       // mm
  std::size_t grid_nx = 33;
  std::size_t grid_ny = 9;
  double node_mass = 0.01;         // kg
  double spring_stiffness = 100.0; // N/mm
  double damping = 0.05;           // kg/ms, force = -c * v
  double contact_stiffness = 1000.0;  // N/mm
  double impactor_radius = 20.0;   // mm
  double impactor_mass = 100.0;    // kg; 0 = kinematic (constant velocity)
  double impact_speed = 4.0;       // mm/ms, downward
  double impact_x_fraction = 0.3;
  double dt = 1e-3;                // ms
  double snapshot_interval = 1.5;  // ms
  std::size_t snapshot_count = 12;

  void validate() const;  // ConfigError on violations
};

// Parses the flat `key = value` text form ('#' comments allowed); unknown
// keys are configuration errors. serialize produces the canonical text that
// config_hash digests (FNV-1a), so equal configs hash equally.
ScenarioConfig parse_scenario_config(const std::string& text);
ScenarioConfig load_scenario_config(const std::string& path);
std::string serialize_scenario_config(const ScenarioConfig& cfg);
std::uint64_t config_hash(const ScenarioConfig& cfg);

struct MorphParams {
  std::uint32_t control_point = 0;  // 0, 1, 2
  double amplitude = 0.0;           // mm, |amplitude| <= 0.08 * arch_height
};

// Positions are snapped to the 2^-26 mm lattice everywhere they are emitted
// (benchmark, morph, snapshots). On this lattice, sums and differences of
// in-range coordinates are exact in float64, which the feature pipeline's
// bit-exact translation invariance relies on.
double snap_position(double x);

// Arched plate: x,y on a regular grid spanning length x width, z an arch of
// the given height; the two x-boundary node columns are clamped.
Mesh generate_benchmark_mesh(const ScenarioConfig& cfg);

// Adds a Gaussian z-bump of the given amplitude at one of three control
// stations along x (L/4, L/2, 3L/4), sigma = L/10.
Mesh morph_geometry(const Mesh& mesh, const MorphParams& params,
                    const ScenarioConfig& cfg);

// n samples in [0,1)^dims, exactly one per stratum [j/n, (j+1)/n) in every
// dimension. Row i is sample i.
Matrix latin_hypercube_sample(std::size_t n, std::size_t dims,
                              std::uint64_t seed);

MorphParams sample_to_morph(const double* u, const ScenarioConfig& cfg);

struct SimDiagnostics {
  std::vector<double> snapshot_energy;  // kinetic + spring + penetration, kJ
  std::vector<double> impactor_z;       // impactor center per snapshot, mm
  double max_contact_imbalance = 0.0;   // Newton pair residual, relative
};

// Damped mass-spring plate under a falling sphere, semi-implicit Euler.
// Springs sit on the mesh edges with rest length = initial length; contact
// is a penalty on penetrating nodes with the equal-and-opposite reaction
// integrated on the impactor (vertical motion only). Returns the snapshot
// sequence with morph metadata left for the caller to fill.
GraphSequence simulate_impact(const Mesh& mesh, const ScenarioConfig& cfg,
                              SimDiagnostics* diag = nullptr);

struct DatasetCounts {
  std::size_t train = 40;
  std::size_t val = 10;
  std::size_t test = 10;
};

struct DatasetSeeds {
  std::uint64_t train = 1;
  std::uint64_t val = 2;
  std::uint64_t test = 3;
};

// Draws one LHS design per split, simulates every sample, and writes
// `<split>_<index>.rgsq` files plus `manifest.txt` and `scenario.cfg`
// into out_dir.
void build_dataset(const ScenarioConfig& cfg, const DatasetCounts& counts,
                   const DatasetSeeds& seeds, const std::string& out_dir);

struct ManifestEntry {
  std::string split;
  std::string filename;
};

struct Manifest {
  std::uint64_t config_hash = 0;
  DatasetSeeds seeds;
  std::vector<ManifestEntry> entries;

  std::vector<std::string> files_of(const std::string& split) const;
};

Manifest read_manifest(const std::string& dir);

}  // namespace rgn
