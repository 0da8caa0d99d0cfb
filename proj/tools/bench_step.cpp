// Times the pieces of one training step at a given width schedule, on the
// real benchmark mesh. Run: bench_step [c0 c1 c2 ...]
#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#include "regunet/autodiff.hpp"
#include "regunet/model.hpp"
#include "regunet/params.hpp"
#include "regunet/synthdata.hpp"

using namespace rgn;
using Clock = std::chrono::steady_clock;

namespace {

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0)
      .count();
}

template <typename F>
double time_avg_ms(std::size_t reps, F&& f) {
  f();  // warm up
  const auto t0 = Clock::now();
  for (std::size_t i = 0; i < reps; ++i) f();
  return ms_since(t0) / static_cast<double>(reps);
}

}  // namespace

int main(int argc, char** argv) {
  GUNetConfig cfg;
  cfg.channels = {32, 32, 64, 128};
  if (argc > 1) {
    cfg.channels.clear();
    for (int i = 1; i < argc; ++i)
      cfg.channels.push_back(std::stoul(argv[i]));
  }
  cfg.levels = cfg.channels.size() - 1;
  cfg.fine_steps = 2;
  cfg.coarse_steps = 10;
  cfg.cross_k = 6;

  const ScenarioConfig scen;  // benchmark defaults
  const GraphHierarchy hier = build_coarse_hierarchy(
      generate_benchmark_mesh(scen), scen.grid_nx, scen.grid_ny, cfg.levels,
      cfg.cross_k);
  MorphParams mp;
  mp.control_point = 3;
  mp.amplitude = 5.0;
  const GraphSequence sample =
      simulate_impact(morph_geometry(generate_benchmark_mesh(scen), mp, scen),
                      scen);

  ModelVariant v;
  v.tag = VariantTag::kRegunet;
  Model m = build_model(v, cfg, hier, 1);
  const SampleBinding b = bind_sample(hier, sample, cfg, v.tag);
  std::printf("parameters: %zu\n", m.params.total_elements());

  const double fwd = time_avg_ms(3, [&]() {
    Tape tape(m.params);
    std::vector<Matrix> targets;
    (void)tape.value(teacher_forced_loss(tape, m, b, targets));
  });
  std::printf("forward (11 steps):          %8.1f ms\n", fwd);

  const double both = time_avg_ms(3, [&]() {
    Tape tape(m.params);
    std::vector<Matrix> targets;
    tape.backward(teacher_forced_loss(tape, m, b, targets));
  });
  std::printf("forward+backward (11 steps): %8.1f ms\n", both);

  const double zg = time_avg_ms(10, [&]() { m.params.zero_grads(); });
  std::printf("zero_grads:                  %8.1f ms\n", zg);

  const double adam =
      time_avg_ms(10, [&]() { adam_step(m.params, 1e-4, AdamConfig{}); });
  std::printf("adam_step:                   %8.1f ms\n", adam);

  const double epoch2 = 2.0 * both + zg + adam;
  std::printf("approx epoch (2 samples):    %8.1f ms\n", epoch2);
  return 0;
}
