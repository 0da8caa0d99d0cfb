#include "regunet/evalcli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <ostream>

#include "regunet/autodiff.hpp"
#include "regunet/errors.hpp"
#include "regunet/kvconfig.hpp"

namespace rgn {
namespace {

struct RolloutErrors {
  std::vector<Matrix> pred;        // T positions
  std::vector<double> step_error;  // mm, mean over nodes per step
};

RolloutErrors rollout_errors(const Model& model, const GraphHierarchy& hier,
                             const GraphSequence& sample) {
  const SampleBinding b =
      bind_sample(hier, sample, model.cfg, model.variant.tag);
  RolloutErrors r;
  r.pred = rollout(model, b, RolloutMode::kAutoregressive);
  r.step_error.resize(sample.num_steps(), 0.0);
  const std::size_t n = sample.num_nodes();
  for (std::size_t j = 0; j < sample.num_steps(); ++j) {
    const Matrix& p = r.pred[j];
    const Matrix& t = sample.positions[j];
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double dx = p(i, 0) - t(i, 0);
      const double dy = p(i, 1) - t(i, 1);
      const double dz = p(i, 2) - t(i, 2);
      sum += std::sqrt(dx * dx + dy * dy + dz * dz);
    }
    r.step_error[j] = sum / static_cast<double>(n);
  }
  return r;
}

double peak_z_displacement(const std::vector<Matrix>& positions) {
  const Matrix& first = positions.front();
  const Matrix& last = positions.back();
  double best = 0.0;
  for (std::size_t i = 0; i < first.rows(); ++i)
    best = std::max(best, std::abs(last(i, 2) - first(i, 2)));
  return best;
}

void validate_curves(const std::vector<ModelCurve>& curves) {
  if (curves.empty()) throw InputError("no curves to plot");
  for (const ModelCurve& c : curves) {
    if (c.label.empty()) throw InputError("curve label is empty");
    if (c.label.find_first_of(",\n") != std::string::npos)
      throw InputError("curve label contains a comma or newline: " + c.label);
    if (c.per_step_error.size() != curves.front().per_step_error.size())
      throw InputError("curves disagree on length");
  }
  if (curves.front().per_step_error.empty())
    throw InputError("curves are empty");
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&')
      out += "&amp;";
    else if (c == '<')
      out += "&lt;";
    else if (c == '>')
      out += "&gt;";
    else
      out += c;
  }
  return out;
}

std::string svg_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

std::string tick_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                                    "#9467bd", "#ff7f0e", "#8c564b"};
constexpr std::size_t kPaletteSize = sizeof(kPalette) / sizeof(kPalette[0]);

std::vector<std::size_t> axis_or(const std::vector<std::size_t>& axis,
                                 std::size_t fallback) {
  if (axis.empty()) return {fallback};
  return axis;
}

}  // namespace

EvalReport evaluate_split(const Model& model, const GraphHierarchy& hierarchy,
                          const std::vector<GraphSequence>& split) {
  if (split.empty()) throw InputError("cannot evaluate an empty split");
  const std::size_t steps = split.front().num_steps();
  for (const GraphSequence& s : split)
    if (s.num_steps() != steps)
      throw InputError("split samples disagree on step count");

  EvalReport report;
  report.per_step_error.assign(steps, 0.0);
  for (const GraphSequence& s : split) {
    const RolloutErrors r = rollout_errors(model, hierarchy, s);
    for (std::size_t j = 0; j < steps; ++j)
      report.per_step_error[j] += r.step_error[j];

    const double truth = peak_z_displacement(s.positions);
    const double pred = peak_z_displacement(r.pred);
    const double diff = std::abs(pred - truth);
    report.intrusion_true.push_back(truth);
    report.intrusion_pred.push_back(pred);
    // Exact zero when they agree, even at zero true intrusion.
    report.intrusion_rel.push_back(diff == 0.0 ? 0.0 : diff / truth);
  }
  const double inv = 1.0 / static_cast<double>(split.size());
  for (double& e : report.per_step_error) e *= inv;
  report.final_step_error = report.per_step_error.back();
  report.max_intrusion_rel =
      *std::max_element(report.intrusion_rel.begin(),
                        report.intrusion_rel.end());
  return report;
}

std::string curves_csv(const std::vector<ModelCurve>& curves) {
  validate_curves(curves);
  std::string out = "step";
  for (const ModelCurve& c : curves) out += "," + c.label;
  out += "\n";
  for (std::size_t j = 0; j < curves.front().per_step_error.size(); ++j) {
    out += std::to_string(j);
    for (const ModelCurve& c : curves)
      out += "," + format_double(c.per_step_error[j]);
    out += "\n";
  }
  return out;
}

std::string curves_svg(const std::vector<ModelCurve>& curves,
                       const std::string& x_label,
                       const std::string& y_label) {
  validate_curves(curves);
  const double width = 640.0, height = 400.0;
  const double left = 70.0, right = width - 24.0;
  const double top = 24.0, bottom = height - 56.0;

  const std::size_t steps = curves.front().per_step_error.size();
  double ymax = 0.0;
  for (const ModelCurve& c : curves)
    for (double v : c.per_step_error) ymax = std::max(ymax, v);
  ymax = ymax > 0.0 ? ymax * 1.05 : 1.0;
  const double xmax = static_cast<double>(steps > 1 ? steps - 1 : 1);

  auto xpix = [&](double t) { return left + (right - left) * t / xmax; };
  auto ypix = [&](double v) { return bottom - (bottom - top) * v / ymax; };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 640 400\" "
         "font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect x=\"0\" y=\"0\" width=\"640\" height=\"400\" "
         "fill=\"#ffffff\"/>\n";

  // Axes.
  svg += "<line x1=\"" + svg_num(left) + "\" y1=\"" + svg_num(top) +
         "\" x2=\"" + svg_num(left) + "\" y2=\"" + svg_num(bottom) +
         "\" stroke=\"#000000\"/>\n";
  svg += "<line x1=\"" + svg_num(left) + "\" y1=\"" + svg_num(bottom) +
         "\" x2=\"" + svg_num(right) + "\" y2=\"" + svg_num(bottom) +
         "\" stroke=\"#000000\"/>\n";

  // At most 13 x ticks, on integer steps.
  const std::size_t stride =
      steps > 13 ? (steps + 12) / 13 : static_cast<std::size_t>(1);
  for (std::size_t t = 0; t < steps; t += stride) {
    const double x = xpix(static_cast<double>(t));
    svg += "<line x1=\"" + svg_num(x) + "\" y1=\"" + svg_num(bottom) +
           "\" x2=\"" + svg_num(x) + "\" y2=\"" + svg_num(bottom + 4.0) +
           "\" stroke=\"#000000\"/>\n";
    svg += "<text x=\"" + svg_num(x) + "\" y=\"" + svg_num(bottom + 18.0) +
           "\" text-anchor=\"middle\">" + std::to_string(t) + "</text>\n";
  }
  for (int k = 0; k <= 5; ++k) {
    const double v = ymax * k / 5.0;
    const double y = ypix(v);
    svg += "<line x1=\"" + svg_num(left - 4.0) + "\" y1=\"" + svg_num(y) +
           "\" x2=\"" + svg_num(left) + "\" y2=\"" + svg_num(y) +
           "\" stroke=\"#000000\"/>\n";
    svg += "<text x=\"" + svg_num(left - 8.0) + "\" y=\"" + svg_num(y + 4.0) +
           "\" text-anchor=\"end\">" + tick_num(v) + "</text>\n";
  }

  // Axis titles.
  svg += "<text x=\"" + svg_num((left + right) / 2.0) + "\" y=\"" +
         svg_num(height - 12.0) + "\" text-anchor=\"middle\">" +
         xml_escape(x_label) + "</text>\n";
  svg += "<text x=\"16\" y=\"" + svg_num((top + bottom) / 2.0) +
         "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
         svg_num((top + bottom) / 2.0) + ")\">" + xml_escape(y_label) +
         "</text>\n";

  for (std::size_t c = 0; c < curves.size(); ++c) {
    const char* color = kPalette[c % kPaletteSize];
    std::string points;
    for (std::size_t j = 0; j < steps; ++j) {
      if (j) points += ' ';
      points += svg_num(xpix(static_cast<double>(j))) + "," +
                svg_num(ypix(curves[c].per_step_error[j]));
    }
    svg += "<polyline fill=\"none\" stroke=\"";
    svg += color;
    svg += "\" stroke-width=\"1.5\" points=\"" + points + "\"/>\n";
  }

  // Legend in the top-left corner; error curves grow to the right, so the
  // early steps leave that region clear.
  for (std::size_t c = 0; c < curves.size(); ++c) {
    const double y = top + 12.0 + 16.0 * static_cast<double>(c);
    svg += "<line x1=\"" + svg_num(left + 10.0) + "\" y1=\"" + svg_num(y) +
           "\" x2=\"" + svg_num(left + 34.0) + "\" y2=\"" + svg_num(y) +
           "\" stroke=\"";
    svg += kPalette[c % kPaletteSize];
    svg += "\" stroke-width=\"1.5\"/>\n";
    svg += "<text x=\"" + svg_num(left + 40.0) + "\" y=\"" +
           svg_num(y + 4.0) + "\">" + xml_escape(curves[c].label) +
           "</text>\n";
  }

  svg += "</svg>\n";
  return svg;
}

SweepConfig parse_sweep_config(const std::string& text) {
  SweepConfig cfg;
  for_each_config_pair(text, [&](const std::string& key,
                                 const std::string& value) {
    if (key == "sweep_cross_k")
      cfg.cross_k = config_size_list(key, value);
    else if (key == "sweep_coarse_steps")
      cfg.coarse_steps = config_size_list(key, value);
    else if (key == "sweep_fine_steps")
      cfg.fine_steps = config_size_list(key, value);
    else if (key == "sweep_channels0")
      cfg.channels0 = config_size_list(key, value);
    else if (!apply_train_config_key(cfg.base, key, value))
      throw ConfigError("unknown config key: " + key);
  });
  cfg.base.validate();
  return cfg;
}

SweepConfig load_sweep_config(const std::string& path) {
  return parse_sweep_config(read_text_file(path));
}

std::vector<SweepRow> run_sweep(const SweepConfig& cfg,
                                const LoadedDataset& data,
                                std::ostream* progress) {
  if (data.train.empty()) throw InputError("sweep needs a train split");
  if (data.val.empty()) throw InputError("sweep needs a val split");
  const VariantTag tag = cfg.base.model_variant().tag;
  const bool unet = is_unet(tag);
  const std::size_t base_c0 =
      unet ? cfg.base.gunet.channels.front() : cfg.base.latent_channels;

  const auto ks = axis_or(cfg.cross_k, cfg.base.gunet.cross_k);
  const auto pcs = axis_or(cfg.coarse_steps, cfg.base.gunet.coarse_steps);
  const auto pfs = axis_or(cfg.fine_steps, cfg.base.gunet.fine_steps);
  const auto c0s = axis_or(cfg.channels0, base_c0);
  const std::size_t total = ks.size() * pcs.size() * pfs.size() * c0s.size();

  std::vector<SweepRow> rows;
  std::size_t index = 0;
  for (std::size_t k : ks)
    for (std::size_t pc : pcs)
      for (std::size_t pf : pfs)
        for (std::size_t c0 : c0s) {
          ++index;
          if (progress)
            *progress << "[" << index << "/" << total
                      << "] training cross_k=" << k << " coarse_steps=" << pc
                      << " fine_steps=" << pf << " channels0=" << c0
                      << std::endl;
          TrainConfig point = cfg.base;
          point.gunet.cross_k = k;
          point.gunet.coarse_steps = pc;
          point.gunet.fine_steps = pf;
          if (unet) {
            // The width schedule is fully determined by its first entry:
            // level 1 repeats it, every later level doubles.
            point.gunet.channels.assign(point.gunet.levels + 1, c0);
            for (std::size_t l = 2; l < point.gunet.channels.size(); ++l)
              point.gunet.channels[l] = point.gunet.channels[l - 1] * 2;
          } else {
            point.latent_channels = c0;
          }

          TrainResult res = train_model(point, data, "");
          GraphHierarchy hier;
          if (unet)
            hier = build_coarse_hierarchy(
                generate_benchmark_mesh(data.scenario), data.scenario.grid_nx,
                data.scenario.grid_ny, point.gunet.levels,
                point.gunet.cross_k);
          const EvalReport report = evaluate_split(res.model, hier, data.val);

          SweepRow row;
          row.variant = cfg.base.variant;
          row.cross_k = k;
          row.coarse_steps = pc;
          row.fine_steps = pf;
          row.channels0 = c0;
          row.val_error = report.final_step_error;
          {
            // Peak live activation count of one teacher-forced pass, the
            // memory proxy that decides which configs fit on a device.
            const SampleBinding b =
                bind_sample(hier, data.train.front(), res.model.cfg, tag);
            std::vector<Matrix> scratch;
            Tape tape(res.model.params);
            (void)teacher_forced_loss(tape, res.model, b, scratch);
            row.activation_elements = tape.activation_elements();
          }
          double seconds = 0.0;
          for (const EpochStats& e : res.log) seconds += e.seconds;
          row.seconds_per_epoch =
              res.log.empty() ? 0.0
                              : seconds / static_cast<double>(res.log.size());
          rows.push_back(std::move(row));
        }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out =
      "variant,cross_k,coarse_steps,fine_steps,channels0,val_error_mm,"
      "activation_elements,seconds_per_epoch\n";
  for (const SweepRow& r : rows) {
    out += r.variant;
    out += "," + std::to_string(r.cross_k);
    out += "," + std::to_string(r.coarse_steps);
    out += "," + std::to_string(r.fine_steps);
    out += "," + std::to_string(r.channels0);
    out += "," + format_double(r.val_error);
    out += "," + std::to_string(r.activation_elements);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", r.seconds_per_epoch);
    out += ",";
    out += buf;
    out += "\n";
  }
  return out;
}

void export_fields(const Model& model, const GraphHierarchy& hierarchy,
                   const GraphSequence& sample, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const RolloutErrors r = rollout_errors(model, hierarchy, sample);
  const std::size_t n = sample.num_nodes();
  const Matrix& first = sample.positions.front();

  std::string summary = "step,mean_euclidean_error,max_abs_z_difference\n";
  for (std::size_t j = 0; j < sample.num_steps(); ++j) {
    std::string body = "node,true_z_disp,pred_z_disp,difference\n";
    double max_dz = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double truth = sample.positions[j](i, 2) - first(i, 2);
      const double pred = r.pred[j](i, 2) - first(i, 2);
      const double diff = pred - truth;
      max_dz = std::max(max_dz, std::abs(diff));
      body += std::to_string(i);
      body += "," + format_double(truth);
      body += "," + format_double(pred);
      body += "," + format_double(diff);
      body += "\n";
    }
    char name[40];
    std::snprintf(name, sizeof(name), "fields_step_%03zu.csv", j);
    write_text_file(out_dir + "/" + name, body);
    summary += std::to_string(j);
    summary += "," + format_double(r.step_error[j]);
    summary += "," + format_double(max_dz);
    summary += "\n";
  }
  write_text_file(out_dir + "/fields_summary.csv", summary);
}

}  // namespace rgn
