#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "regunet/autodiff.hpp"
#include "regunet/errors.hpp"
#include "regunet/evalcli.hpp"
#include "regunet/gradcheck.hpp"
#include "regunet/kvconfig.hpp"
#include "regunet/model.hpp"
#include "regunet/synthdata.hpp"
#include "regunet/trainer.hpp"

namespace rgn {
namespace {

// Checkpoints carry their own variant and width metadata, so one peek is
// enough to rebuild the matching hierarchy before the full load validates
// every parameter shape.
struct LoadedCheckpoint {
  Model model;
  GraphHierarchy hier;
};

LoadedCheckpoint load_for_scenario(const std::string& path,
                                   const ScenarioConfig& scenario) {
  const auto meta = peek_model_meta(path);
  LoadedCheckpoint out;
  if (is_unet(meta.first.tag))
    out.hier = build_coarse_hierarchy(generate_benchmark_mesh(scenario),
                                      scenario.grid_nx, scenario.grid_ny,
                                      meta.second.levels, meta.second.cross_k);
  out.model = load_model(path, out.hier);
  return out;
}

const std::vector<GraphSequence>& split_of(const LoadedDataset& data,
                                           const std::string& name) {
  if (name == "train") return data.train;
  if (name == "val") return data.val;
  if (name == "test") return data.test;
  throw ConfigError("unknown split: " + name +
                    " (expected train, val, or test)");
}

const std::vector<std::string>& split_names_of(const LoadedDataset& data,
                                               const std::string& name) {
  if (name == "train") return data.train_names;
  if (name == "val") return data.val_names;
  return data.test_names;
}

DatasetCounts preset_counts(const std::string& preset) {
  DatasetCounts c;
  if (preset == "desk") {
    c.train = 40;
    c.val = 10;
    c.test = 10;
  } else if (preset == "paper") {
    c.train = 100;
    c.val = 50;
    c.test = 50;
  } else {
    throw ConfigError("unknown preset: " + preset +
                      " (expected desk or paper)");
  }
  return c;
}

int run_gradcheck(std::uint64_t seed, std::size_t stride) {
  // One-level toy on a 3x3 grid, small enough for a full-stride sweep of
  // every parameter element in well under two minutes.
  ScenarioConfig scen;
  scen.plate_length = 100.0;
  scen.plate_width = 60.0;
  scen.arch_height = 32.0;
  scen.grid_nx = 3;
  scen.grid_ny = 3;
  scen.impact_x_fraction = 0.5;
  scen.snapshot_interval = 0.1;
  scen.snapshot_count = 3;

  GUNetConfig cfg;
  cfg.channels = {4, 4};
  cfg.levels = 1;
  cfg.fine_steps = 1;
  cfg.coarse_steps = 2;
  cfg.cross_k = 3;

  const GraphHierarchy hier = build_coarse_hierarchy(
      generate_benchmark_mesh(scen), scen.grid_nx, scen.grid_ny, cfg.levels,
      cfg.cross_k);
  MorphParams mp;
  mp.control_point = 1;
  mp.amplitude = 1.0;
  const Mesh morphed = morph_geometry(generate_benchmark_mesh(scen), mp, scen);
  const GraphSequence sample = simulate_impact(morphed, scen);

  ModelVariant v;
  v.tag = VariantTag::kRegunet;
  Model m = build_model(v, cfg, hier, seed);
  // A freshly built model sits exactly on relu kinks and zero-variance
  // layer-norm rows; the check must run from a generic point.
  perturb_parameters(m.params, seed + 1, 0.05);
  const SampleBinding b = bind_sample(hier, sample, cfg, v.tag);

  auto loss_value = [&]() {
    Tape tape(m.params);
    std::vector<Matrix> targets;
    return tape.value(teacher_forced_loss(tape, m, b, targets))(0, 0);
  };
  auto grads = [&]() {
    Tape tape(m.params);
    std::vector<Matrix> targets;
    tape.backward(teacher_forced_loss(tape, m, b, targets));
  };
  const FdReport report =
      finite_difference_check(m.params, grads, loss_value, 1e-6, 1e-3, stride);

  const FdEntry& worst = report.entries[report.worst];
  std::cout << "checked " << report.checked << " of "
            << m.params.total_elements() << " parameter elements (h=1e-06)\n";
  std::cout << "max relative gradient error: " << format_double(
                   report.max_rel_err)
            << " at " << worst.param << "[" << worst.index << "]"
            << " (ad=" << format_double(worst.ad)
            << ", fd=" << format_double(worst.fd) << ")\n";
  if (report.max_rel_err < 1e-5) {
    std::cout << "PASS (threshold 1e-05)\n";
    return 0;
  }
  std::cout << "FAIL (threshold 1e-05)\n";
  return 2;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"Mesh-graph surrogate models for impact dynamics"};
  app.name("regunet");
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand(
      "gen-data", "Simulate a morphed-plate impact dataset");
  std::string gd_config, gd_out, gd_counts;
  std::string gd_preset = "desk";
  std::uint64_t gd_seed = 1;
  gen->add_option("--config", gd_config, "Scenario config file")->required();
  gen->add_option("--out", gd_out, "Dataset directory to create")->required();
  gen->add_option("--preset", gd_preset,
                  "Split sizes: desk (40/10/10) or paper (100/50/50)");
  gen->add_option("--counts", gd_counts,
                  "Override split sizes as train,val,test");
  gen->add_option("--seed", gd_seed,
                  "Train-split design seed; val and test use seed+1, seed+2");

  // train
  auto* train = app.add_subcommand("train", "Train one model on a dataset");
  std::string tr_config, tr_data, tr_out, tr_variant;
  std::size_t tr_epochs = 0;
  std::uint64_t tr_seed = 0;
  train->add_option("--config", tr_config,
                    "Training config file (defaults apply when omitted)");
  train->add_option("--data", tr_data, "Dataset directory")->required();
  train->add_option("--out", tr_out, "Directory for checkpoints and the log")
      ->required();
  train->add_option("--variant", tr_variant,
                    "Override: regunet, baseline1, baseline2, baseline3");
  train->add_option("--epochs", tr_epochs, "Override the epoch count");
  train->add_option("--seed", tr_seed, "Override the training seed");

  // eval
  auto* eval = app.add_subcommand(
      "eval", "Autoregressive rollout metrics for one checkpoint");
  std::string ev_data, ev_ckpt, ev_out;
  std::string ev_split = "test";
  eval->add_option("--data", ev_data, "Dataset directory")->required();
  eval->add_option("--checkpoint", ev_ckpt, "Model checkpoint (.rgck)")
      ->required();
  eval->add_option("--split", ev_split, "Split to score (default test)");
  eval->add_option("--out", ev_out, "Directory for the metric CSVs")
      ->required();

  // compare
  auto* compare = app.add_subcommand(
      "compare", "Error-accumulation curves for several checkpoints");
  std::string cm_data, cm_out;
  std::string cm_split = "val";
  std::vector<std::string> cm_ckpts;
  compare->add_option("--data", cm_data, "Dataset directory")->required();
  compare->add_option("--checkpoint", cm_ckpts, "Checkpoints (repeatable)")
      ->required();
  compare->add_option("--split", cm_split, "Split to score (default val)");
  compare->add_option("--out", cm_out, "Directory for compare.csv/.svg")
      ->required();

  // sweep
  auto* sweep = app.add_subcommand(
      "sweep", "Train and score a hyperparameter grid");
  std::string sw_config, sw_data, sw_out;
  std::uint64_t sw_seed = 0;
  sweep->add_option("--config", sw_config, "Sweep config file")->required();
  sweep->add_option("--data", sw_data, "Dataset directory")->required();
  sweep->add_option("--out", sw_out, "Directory for sweep.csv")->required();
  sweep->add_option("--seed", sw_seed, "Override the shared training seed");

  // gradcheck
  auto* gradcheck = app.add_subcommand(
      "gradcheck",
      "Validate reverse-mode gradients against finite differences on a toy "
      "model (parameters are jittered first; fresh initializations sit on "
      "non-differentiable relu kinks)");
  std::uint64_t gc_seed = 83;
  std::size_t gc_stride = 1;
  gradcheck->add_option("--seed", gc_seed, "Build seed; jitter uses seed+1");
  gradcheck->add_option("--stride", gc_stride,
                        "Check every stride-th element (default all)");

  // export-fields
  auto* fields = app.add_subcommand(
      "export-fields", "Per-step z-displacement fields for one sample");
  std::string xf_data, xf_ckpt, xf_out;
  std::string xf_split = "test";
  std::size_t xf_index = 0;
  fields->add_option("--data", xf_data, "Dataset directory")->required();
  fields->add_option("--checkpoint", xf_ckpt, "Model checkpoint (.rgck)")
      ->required();
  fields->add_option("--split", xf_split, "Split to read (default test)");
  fields->add_option("--index", xf_index, "Sample index within the split");
  fields->add_option("--out", xf_out, "Directory for the field CSVs")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (gen->parsed()) {
      const ScenarioConfig scen = load_scenario_config(gd_config);
      DatasetCounts counts = preset_counts(gd_preset);
      if (!gd_counts.empty()) {
        const auto v = config_size_list("counts", gd_counts);
        if (v.size() != 3)
          throw ConfigError("counts wants three values: train,val,test");
        counts.train = v[0];
        counts.val = v[1];
        counts.test = v[2];
      }
      DatasetSeeds seeds;
      seeds.train = gd_seed;
      seeds.val = gd_seed + 1;
      seeds.test = gd_seed + 2;
      build_dataset(scen, counts, seeds, gd_out);
      std::cout << "wrote " << (counts.train + counts.val + counts.test)
                << " samples to " << gd_out << "\n";
    } else if (train->parsed()) {
      TrainConfig cfg;
      if (!tr_config.empty()) cfg = load_train_config(tr_config);
      if (train->count("--variant")) cfg.variant = tr_variant;
      if (train->count("--epochs")) cfg.epochs = tr_epochs;
      if (train->count("--seed")) cfg.seed = tr_seed;
      cfg.validate();
      const LoadedDataset data = load_dataset(tr_data);
      const TrainResult result = train_model(cfg, data, tr_out);
      const EpochStats& last = result.log.back();
      std::cout << "trained " << cfg.variant << " for " << cfg.epochs
                << " epochs: train_mse=" << format_double(last.train_mse)
                << " val_mse=" << format_double(last.val_mse) << "\n";
      std::cout << "checkpoint: " << tr_out << "/model.rgck\n";
    } else if (eval->parsed()) {
      const LoadedDataset data = load_dataset(ev_data);
      const LoadedCheckpoint lc = load_for_scenario(ev_ckpt, data.scenario);
      const auto& split = split_of(data, ev_split);
      const auto& names = split_names_of(data, ev_split);
      const EvalReport report = evaluate_split(lc.model, lc.hier, split);

      std::filesystem::create_directories(ev_out);
      std::string curve = "step,error_mm\n";
      for (std::size_t j = 0; j < report.per_step_error.size(); ++j)
        curve += std::to_string(j) + "," +
                 format_double(report.per_step_error[j]) + "\n";
      write_text_file(ev_out + "/error_accumulation.csv", curve);

      std::string intr = "sample,true_mm,pred_mm,relative_error\n";
      for (std::size_t i = 0; i < split.size(); ++i) {
        intr += (i < names.size() ? names[i]
                                  : ev_split + "[" + std::to_string(i) + "]");
        intr += "," + format_double(report.intrusion_true[i]);
        intr += "," + format_double(report.intrusion_pred[i]);
        intr += "," + format_double(report.intrusion_rel[i]);
        intr += "\n";
      }
      write_text_file(ev_out + "/max_intrusion.csv", intr);

      std::cout << "split " << ev_split << " (" << split.size()
                << " samples): final-step error "
                << format_double(report.final_step_error)
                << " mm, max relative intrusion error "
                << format_double(report.max_intrusion_rel) << "\n";
    } else if (compare->parsed()) {
      const LoadedDataset data = load_dataset(cm_data);
      const auto& split = split_of(data, cm_split);
      std::vector<ModelCurve> curves;
      std::map<std::string, int> used;
      for (const std::string& path : cm_ckpts) {
        const LoadedCheckpoint lc = load_for_scenario(path, data.scenario);
        const EvalReport report = evaluate_split(lc.model, lc.hier, split);
        std::string label = variant_name(lc.model.variant.tag);
        const int seen = used[label]++;
        if (seen) label += "#" + std::to_string(seen + 1);
        curves.push_back({label, report.per_step_error});
      }
      std::filesystem::create_directories(cm_out);
      write_text_file(cm_out + "/compare.csv", curves_csv(curves));
      write_text_file(cm_out + "/compare.svg",
                      curves_svg(curves, "time step", "mean error (mm)"));
      std::cout << "wrote compare.csv and compare.svg to " << cm_out << "\n";
    } else if (sweep->parsed()) {
      SweepConfig cfg = load_sweep_config(sw_config);
      if (sweep->count("--seed")) cfg.base.seed = sw_seed;
      const LoadedDataset data = load_dataset(sw_data);
      const std::vector<SweepRow> rows = run_sweep(cfg, data, &std::cerr);
      std::filesystem::create_directories(sw_out);
      write_text_file(sw_out + "/sweep.csv", sweep_csv(rows));
      std::cout << "wrote " << rows.size() << " sweep rows to " << sw_out
                << "/sweep.csv\n";
    } else if (gradcheck->parsed()) {
      return run_gradcheck(gc_seed, gc_stride);
    } else if (fields->parsed()) {
      const LoadedDataset data = load_dataset(xf_data);
      const LoadedCheckpoint lc = load_for_scenario(xf_ckpt, data.scenario);
      const auto& split = split_of(data, xf_split);
      if (xf_index >= split.size())
        throw InputError("sample index " + std::to_string(xf_index) +
                         " out of range for split " + xf_split + " (" +
                         std::to_string(split.size()) + " samples)");
      export_fields(lc.model, lc.hier, split[xf_index], xf_out);
      std::cout << "wrote " << split[xf_index].num_steps()
                << " step files and fields_summary.csv to " << xf_out << "\n";
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

}  // namespace rgn
