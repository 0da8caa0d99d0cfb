#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "regunet/model.hpp"
#include "regunet/trainer.hpp"

namespace rgn {

// Autoregressive quality of one model over one split. Every sample in the
// split must share the step count T.
struct EvalReport {
  std::vector<double> per_step_error;  // mm, length T, entry 0 exactly 0
  double final_step_error = 0.0;       // per_step_error.back()
  std::vector<double> intrusion_true;  // mm, per sample, final step
  std::vector<double> intrusion_pred;
  std::vector<double> intrusion_rel;   // |pred - true| / |true|
  double max_intrusion_rel = 0.0;
};

// Rolls the model out on every sample. Per step, the error is the mean
// over all nodes of the Euclidean distance between predicted and true
// positions; the curve averages samples with equal weight. Intrusion is
// the largest |z-displacement| at the final step; its relative error is
// exactly zero when predicted and true intrusion agree.
EvalReport evaluate_split(const Model& model, const GraphHierarchy& hierarchy,
                          const std::vector<GraphSequence>& split);

struct ModelCurve {
  std::string label;
  std::vector<double> per_step_error;
};

// `step,<label>,...` CSV; floats print with 17 significant digits.
std::string curves_csv(const std::vector<ModelCurve>& curves);

// Minimal static line chart: axes, ticks, one polyline per curve, legend.
std::string curves_svg(const std::vector<ModelCurve>& curves,
                       const std::string& x_label,
                       const std::string& y_label);

// Hyperparameter grid around a base training config: the full cross
// product of the non-empty axes is trained with the base seed. An absent
// axis keeps the base value. `channels0` scales the whole U-Net schedule
// (C0, C0, 2*C0, ...) and maps to latent width for flat baselines.
struct SweepConfig {
  TrainConfig base;
  std::vector<std::size_t> cross_k;
  std::vector<std::size_t> coarse_steps;
  std::vector<std::size_t> fine_steps;
  std::vector<std::size_t> channels0;
};

SweepConfig parse_sweep_config(const std::string& text);
SweepConfig load_sweep_config(const std::string& path);

struct SweepRow {
  std::string variant;
  std::size_t cross_k = 0;
  std::size_t coarse_steps = 0;
  std::size_t fine_steps = 0;
  std::size_t channels0 = 0;
  double val_error = 0.0;  // final-step autoregressive mean error, mm
  std::uint64_t activation_elements = 0;  // one teacher-forced forward
  double seconds_per_epoch = 0.0;         // wall time, not deterministic
};

// Trains and evaluates one model per grid point, in row-major axis order
// (cross_k slowest). `progress`, when given, receives one line per point.
std::vector<SweepRow> run_sweep(const SweepConfig& cfg,
                                const LoadedDataset& data,
                                std::ostream* progress = nullptr);

std::string sweep_csv(const std::vector<SweepRow>& rows);

// Autoregressive z-displacement fields for one sample: per step t a
// `fields_step_NNN.csv` with node, true and predicted z-displacement since
// step 0, and their difference; plus `fields_summary.csv` with the
// per-step mean Euclidean error and the largest |z difference|.
void export_fields(const Model& model, const GraphHierarchy& hierarchy,
                   const GraphSequence& sample, const std::string& out_dir);

// `regunet` entry point; returns 0 on success, 1 on validation errors
// (bad flags, malformed configs, mismatched checkpoints), 2 on runtime
// failures (non-finite losses, a failed gradient check).
int cli_main(int argc, const char* const* argv);

}  // namespace rgn
