#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "regunet/model.hpp"
#include "regunet/synthdata.hpp"

namespace rgn {

// Training hyperparameters plus the model recipe. Field names double as
// the keys of the flat `key = value` config file; `channels` takes a
// comma-separated list. The learning rate starts at lr_phase1 and drops to
// lr_phase2 after lr_phase1_epochs; the desk preset keeps the same shape
// at a reduced budget (200 epochs, boundary at 60%).
struct TrainConfig {
  std::string variant = "regunet";
  GUNetConfig gunet;
  std::size_t latent_channels = 128;  // flat baselines only
  std::size_t mp_steps = 15;          // flat baselines only
  std::size_t batch_size = 2;
  std::size_t epochs = 800;
  double lr_phase1 = 4e-4;
  double lr_phase2 = 2e-4;
  std::size_t lr_phase1_epochs = 500;
  std::size_t checkpoint_every = 100;  // 0 = final checkpoint only
  std::uint64_t seed = 0;

  void validate() const;               // ConfigError on violations
  ModelVariant model_variant() const;  // parses `variant`
};

TrainConfig parse_train_config(const std::string& text);
TrainConfig load_train_config(const std::string& path);
std::string serialize_train_config(const TrainConfig& cfg);

// Applies one flat-config pair to the config; false for unknown keys, so
// wrappers with extra keys can fall through to their own handling.
bool apply_train_config_key(TrainConfig& cfg, const std::string& key,
                            const std::string& value);

// A dataset directory pulled into memory: the scenario that generated it,
// the manifest, and the three splits in manifest order. The name vectors
// parallel the sample vectors and feed diagnostics.
struct LoadedDataset {
  ScenarioConfig scenario;
  Manifest manifest;
  std::vector<GraphSequence> train, val, test;
  std::vector<std::string> train_names, val_names, test_names;
};

LoadedDataset load_dataset(const std::string& dir);

// Per-channel statistics of the teacher-forcing features over the training
// split only, in file-then-step-then-row order so recomputation is
// bit-identical. Inputs get mean and spread, targets spread only; spreads
// below 1e-8 are clamped to 1e-8.
NormStats compute_norm_stats(const std::vector<GraphSequence>& train_split);

struct EpochStats {
  std::size_t epoch = 0;   // 1-based
  double train_mse = 0.0;  // mean per-sample teacher-forced loss
  double val_mse = 0.0;    // NaN when the val split is empty
  double lr = 0.0;
  double seconds = 0.0;    // wall time; everything else is deterministic
};

// CSV with the `epoch,train_mse,val_mse,lr,seconds` header; floats print
// with 17 significant digits, seconds with 3 decimals.
std::string format_epoch_csv(const std::vector<EpochStats>& log);

struct TrainResult {
  Model model;
  std::vector<EpochStats> log;
};

// Teacher-forced training. Per epoch: visit the training samples in a
// seeded shuffled order, accumulate gradients over batch_size samples
// (each contributing its full-sequence loss), take one Adam step on the
// batch mean, then score the val split without touching parameters. When
// out_dir is non-empty, writes train_log.csv (flushed per epoch), periodic
// checkpoint_NNNNNN.rgck files, and the final model.rgck. Aborts with
// NumericError naming the epoch and sample on a non-finite loss.
TrainResult train_model(const TrainConfig& cfg, const LoadedDataset& data,
                        const std::string& out_dir);

}  // namespace rgn
