#include "regunet/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>

#include "regunet/errors.hpp"
#include "regunet/kvconfig.hpp"
#include "regunet/rng.hpp"

namespace rgn {

void TrainConfig::validate() const {
  const VariantTag tag = parse_variant_tag(variant);
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr_phase1 > 0.0) || !std::isfinite(lr_phase1))
    throw ConfigError("lr_phase1 must be positive");
  if (!(lr_phase2 > 0.0) || !std::isfinite(lr_phase2))
    throw ConfigError("lr_phase2 must be positive");
  if (is_unet(tag)) {
    gunet.validate();
  } else if (latent_channels < 1) {
    throw ConfigError("latent_channels must be >= 1");
  }
}

ModelVariant TrainConfig::model_variant() const {
  ModelVariant v;
  v.tag = parse_variant_tag(variant);
  v.latent_channels = latent_channels;
  v.mp_steps = mp_steps;
  return v;
}

bool apply_train_config_key(TrainConfig& cfg, const std::string& key,
                            const std::string& value) {
  auto num = [&] { return config_double(key, value); };
  auto size = [&] { return config_size(key, value); };
  if (key == "variant") cfg.variant = value;
  else if (key == "channels") {
    // The level count follows the schedule length, so the text form
    // cannot fall out of sync with itself.
    cfg.gunet.channels = config_size_list(key, value);
    cfg.gunet.levels = cfg.gunet.channels.size() - 1;
  }
  else if (key == "fine_steps") cfg.gunet.fine_steps = size();
  else if (key == "coarse_steps") cfg.gunet.coarse_steps = size();
  else if (key == "cross_k") cfg.gunet.cross_k = size();
  else if (key == "leaky_slope") cfg.gunet.leaky_slope = num();
  else if (key == "latent_channels") cfg.latent_channels = size();
  else if (key == "mp_steps") cfg.mp_steps = size();
  else if (key == "batch_size") cfg.batch_size = size();
  else if (key == "epochs") cfg.epochs = size();
  else if (key == "lr_phase1") cfg.lr_phase1 = num();
  else if (key == "lr_phase2") cfg.lr_phase2 = num();
  else if (key == "lr_phase1_epochs") cfg.lr_phase1_epochs = size();
  else if (key == "checkpoint_every") cfg.checkpoint_every = size();
  else if (key == "seed") cfg.seed = config_u64(key, value);
  else return false;
  return true;
}

TrainConfig parse_train_config(const std::string& text) {
  TrainConfig cfg;
  for_each_config_pair(text, [&](const std::string& key,
                                 const std::string& value) {
    if (!apply_train_config_key(cfg, key, value))
      throw ConfigError("unknown config key: " + key);
  });
  cfg.validate();
  return cfg;
}

TrainConfig load_train_config(const std::string& path) {
  return parse_train_config(read_text_file(path));
}

std::string serialize_train_config(const TrainConfig& cfg) {
  std::string out;
  out += "variant = " + cfg.variant + "\n";
  out += "channels = " + format_size_list(cfg.gunet.channels) + "\n";
  out += "fine_steps = " + std::to_string(cfg.gunet.fine_steps) + "\n";
  out += "coarse_steps = " + std::to_string(cfg.gunet.coarse_steps) + "\n";
  out += "cross_k = " + std::to_string(cfg.gunet.cross_k) + "\n";
  out += "leaky_slope = " + format_double(cfg.gunet.leaky_slope) + "\n";
  out += "latent_channels = " + std::to_string(cfg.latent_channels) + "\n";
  out += "mp_steps = " + std::to_string(cfg.mp_steps) + "\n";
  out += "batch_size = " + std::to_string(cfg.batch_size) + "\n";
  out += "epochs = " + std::to_string(cfg.epochs) + "\n";
  out += "lr_phase1 = " + format_double(cfg.lr_phase1) + "\n";
  out += "lr_phase2 = " + format_double(cfg.lr_phase2) + "\n";
  out += "lr_phase1_epochs = " + std::to_string(cfg.lr_phase1_epochs) + "\n";
  out += "checkpoint_every = " + std::to_string(cfg.checkpoint_every) + "\n";
  out += "seed = " + std::to_string(cfg.seed) + "\n";
  return out;
}

LoadedDataset load_dataset(const std::string& dir) {
  LoadedDataset d;
  d.scenario = load_scenario_config(dir + "/scenario.cfg");
  d.manifest = read_manifest(dir);
  if (d.manifest.config_hash != config_hash(d.scenario))
    throw FormatError("manifest config hash does not match scenario.cfg", 0);
  auto load_split = [&](const char* split, std::vector<GraphSequence>& out,
                        std::vector<std::string>& names) {
    names = d.manifest.files_of(split);
    out.reserve(names.size());
    for (const auto& f : names) out.push_back(read_sample(dir + "/" + f));
  };
  load_split("train", d.train, d.train_names);
  load_split("val", d.val, d.val_names);
  load_split("test", d.test, d.test_names);
  return d;
}

namespace {

// Replays the teacher-forcing features of a split in file-then-step-then-
// row order; both statistics passes and the model bindings see the same
// matrices, zeros at the first step included.
template <class Visit>
void scan_features(const std::vector<GraphSequence>& split, Visit&& visit) {
  for (const auto& s : split) {
    const std::size_t t_count = s.num_steps();
    for (std::size_t j = 1; j < t_count; ++j) {
      const Matrix nodes =
          j == 1 ? Matrix(s.num_nodes(), 3)
                 : compute_node_features(s.positions[j - 2],
                                         s.positions[j - 1]);
      const Matrix edges =
          compute_edge_features(s.positions[j - 1], s.positions[0],
                                s.senders, s.receivers);
      const Matrix targets = compute_node_features(s.positions[j - 1],
                                                   s.positions[j]);
      visit(nodes, edges, targets);
    }
  }
}

void accumulate(const Matrix& x, const double* mean, double* acc) {
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) {
      const double d = x(i, j) - (mean ? mean[j] : 0.0);
      acc[j] += mean ? d * d : d;
    }
}

constexpr double kScaleFloor = 1e-8;

double floored_std(double sq_sum, std::size_t count) {
  const double var = sq_sum / static_cast<double>(count);
  return std::max(std::sqrt(std::max(var, 0.0)), kScaleFloor);
}

}  // namespace

NormStats compute_norm_stats(const std::vector<GraphSequence>& train_split) {
  double node_acc[3]{}, edge_acc[8]{}, target_acc[3]{};
  std::size_t node_rows = 0, edge_rows = 0;
  scan_features(train_split, [&](const Matrix& nodes, const Matrix& edges,
                                 const Matrix& targets) {
    accumulate(nodes, nullptr, node_acc);
    accumulate(edges, nullptr, edge_acc);
    accumulate(targets, nullptr, target_acc);
    node_rows += nodes.rows();
    edge_rows += edges.rows();
  });
  if (node_rows == 0 || edge_rows == 0)
    throw InputError("norm stats need a non-empty training split");

  double node_mean[3], edge_mean[8], target_mean[3];
  for (std::size_t j = 0; j < 3; ++j)
    node_mean[j] = node_acc[j] / static_cast<double>(node_rows);
  for (std::size_t j = 0; j < 8; ++j)
    edge_mean[j] = edge_acc[j] / static_cast<double>(edge_rows);
  for (std::size_t j = 0; j < 3; ++j)
    target_mean[j] = target_acc[j] / static_cast<double>(node_rows);

  double node_sq[3]{}, edge_sq[8]{}, target_sq[3]{};
  scan_features(train_split, [&](const Matrix& nodes, const Matrix& edges,
                                 const Matrix& targets) {
    accumulate(nodes, node_mean, node_sq);
    accumulate(edges, edge_mean, edge_sq);
    accumulate(targets, target_mean, target_sq);
  });

  NormStats st;
  for (std::size_t j = 0; j < 3; ++j) {
    st.node_mean(0, j) = node_mean[j];
    st.node_scale(0, j) = floored_std(node_sq[j], node_rows);
  }
  for (std::size_t j = 0; j < 8; ++j) {
    st.edge_mean(0, j) = edge_mean[j];
    st.edge_scale(0, j) = floored_std(edge_sq[j], edge_rows);
  }
  // Targets keep a scale only: de-normalization must map zero network
  // output to a zero increment, so the spread is measured around the mean
  // but no shift is stored.
  for (std::size_t j = 0; j < 3; ++j)
    st.target_scale(0, j) = floored_std(target_sq[j], node_rows);
  return st;
}

namespace {

std::string epoch_line(const EpochStats& e) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.3f\n", e.epoch,
                e.train_mse, e.val_mse, e.lr, e.seconds);
  return buf;
}

std::string sample_label(const std::vector<std::string>& names,
                         const char* split, std::size_t index) {
  if (index < names.size()) return names[index];
  return std::string(split) + "[" + std::to_string(index) + "]";
}

}  // namespace

std::string format_epoch_csv(const std::vector<EpochStats>& log) {
  std::string out = "epoch,train_mse,val_mse,lr,seconds\n";
  for (const auto& e : log) out += epoch_line(e);
  return out;
}

TrainResult train_model(const TrainConfig& cfg, const LoadedDataset& data,
                        const std::string& out_dir) {
  cfg.validate();
  if (data.train.empty()) throw InputError("training split is empty");
  const ModelVariant variant = cfg.model_variant();

  GraphHierarchy hier;
  if (is_unet(variant.tag)) {
    const Mesh bench = generate_benchmark_mesh(data.scenario);
    hier = build_coarse_hierarchy(bench, data.scenario.grid_nx,
                                  data.scenario.grid_ny, cfg.gunet.levels,
                                  cfg.gunet.cross_k);
  }
  Model model = build_model(variant, cfg.gunet, hier, cfg.seed);
  model.norm = compute_norm_stats(data.train);

  std::vector<SampleBinding> train_b, val_b;
  train_b.reserve(data.train.size());
  for (const auto& s : data.train)
    train_b.push_back(bind_sample(hier, s, model.cfg, variant.tag));
  val_b.reserve(data.val.size());
  for (const auto& s : data.val)
    val_b.push_back(bind_sample(hier, s, model.cfg, variant.tag));

  std::ofstream log_file;
  if (!out_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory: " + out_dir);
    log_file.open(out_dir + "/train_log.csv", std::ios::trunc);
    if (!log_file)
      throw IoError("cannot write " + out_dir + "/train_log.csv");
    log_file << "epoch,train_mse,val_mse,lr,seconds" << std::endl;
  }

  Tape tape(model.params);
  std::vector<Matrix> scratch_targets;
  auto sample_loss = [&](const SampleBinding& b) {
    tape.clear();
    scratch_targets.clear();
    return teacher_forced_loss(tape, model, b, scratch_targets);
  };

  Rng order_rng(cfg.seed);
  std::vector<std::size_t> order(train_b.size());
  std::iota(order.begin(), order.end(), 0);

  TrainResult result;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr =
        epoch <= cfg.lr_phase1_epochs ? cfg.lr_phase1 : cfg.lr_phase2;
    order_rng.shuffle(order);

    double train_sum = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += cfg.batch_size) {
      const std::size_t stop =
          std::min(order.size(), start + cfg.batch_size);
      model.params.zero_grads();
      for (std::size_t b = start; b < stop; ++b) {
        const std::size_t idx = order[b];
        const Ref loss = sample_loss(train_b[idx]);
        const double value = tape.value(loss)(0, 0);
        if (!std::isfinite(value))
          throw NumericError(
              "non-finite training loss at epoch " + std::to_string(epoch) +
              " on sample " + sample_label(data.train_names, "train", idx));
        tape.backward(loss);
        train_sum += value;
      }
      // backward() accumulated raw per-sample gradients; the step is taken
      // on the batch mean.
      const double inv = 1.0 / static_cast<double>(stop - start);
      for (std::size_t p = 0; p < model.params.count(); ++p) {
        Matrix& g = model.params.at(p).grad;
        for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] *= inv;
      }
      adam_step(model.params, lr);
    }
    const double train_mse =
        train_sum / static_cast<double>(order.size());

    double val_mse = std::numeric_limits<double>::quiet_NaN();
    if (!val_b.empty()) {
      double val_sum = 0.0;
      for (std::size_t i = 0; i < val_b.size(); ++i) {
        const double value = tape.value(sample_loss(val_b[i]))(0, 0);
        if (!std::isfinite(value))
          throw NumericError(
              "non-finite validation loss at epoch " +
              std::to_string(epoch) + " on sample " +
              sample_label(data.val_names, "val", i));
        val_sum += value;
      }
      val_mse = val_sum / static_cast<double>(val_b.size());
      tape.clear();
    }

    EpochStats row;
    row.epoch = epoch;
    row.train_mse = train_mse;
    row.val_mse = val_mse;
    row.lr = lr;
    row.seconds = std::chrono::duration<double>(
                      std::chrono::steady_clock::now() - t0)
                      .count();
    result.log.push_back(row);
    if (log_file) log_file << epoch_line(row) << std::flush;

    if (!out_dir.empty() && cfg.checkpoint_every != 0 &&
        epoch % cfg.checkpoint_every == 0) {
      char name[40];
      std::snprintf(name, sizeof(name), "/checkpoint_%06zu.rgck", epoch);
      save_model(model, out_dir + name);
    }
  }

  if (!out_dir.empty()) save_model(model, out_dir + "/model.rgck");
  result.model = std::move(model);
  return result;
}

}  // namespace rgn
