// papercut-cli: command-line front end for the papercut shared library.
// Talks to the engine exclusively through the public C interface.
#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "papercut/papercut.h"

namespace {

struct ApiError : std::runtime_error {
  explicit ApiError(const std::string& msg) : std::runtime_error(msg) {}
};

void check(pcut_status st) {
  if (st != PCUT_OK) throw ApiError(pcut_last_error());
}

struct ConfigDeleter {
  void operator()(pcut_config* p) const { pcut_config_destroy(p); }
};
struct CurveDeleter {
  void operator()(pcut_curve* p) const { pcut_curve_destroy(p); }
};
struct TrajectoryDeleter {
  void operator()(pcut_trajectory* p) const { pcut_trajectory_destroy(p); }
};
struct DatasetDeleter {
  void operator()(pcut_dataset* p) const { pcut_dataset_destroy(p); }
};
using ConfigPtr = std::unique_ptr<pcut_config, ConfigDeleter>;
using CurvePtr = std::unique_ptr<pcut_curve, CurveDeleter>;
using TrajectoryPtr = std::unique_ptr<pcut_trajectory, TrajectoryDeleter>;
using DatasetPtr = std::unique_ptr<pcut_dataset, DatasetDeleter>;

// Empty path loads the built-in defaults.
ConfigPtr load_config(const std::string& path) {
  pcut_config* raw = nullptr;
  check(pcut_config_load(path.c_str(), &raw));
  return ConfigPtr(raw);
}

double config_double(const pcut_config* cfg, const char* key) {
  char* text = nullptr;
  check(pcut_config_get(cfg, key, &text));
  const double value = std::strtod(text, nullptr);
  pcut_string_free(text);
  return value;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ApiError("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw ApiError("failed writing '" + path + "'");
}

void emit(const std::string& out_path, const std::string& text) {
  if (out_path.empty()) {
    std::fputs(text.c_str(), stdout);
  } else {
    write_text(out_path, text);
    std::printf("wrote %s\n", out_path.c_str());
  }
}

std::string format_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void print_trajectory_summary(const pcut_trajectory* traj) {
  const char* id = nullptr;
  const char* status = nullptr;
  double chamfer = 0.0, iou = 0.0;
  int has_iou = 0;
  size_t steps = 0, frames = 0;
  check(pcut_trajectory_id(traj, &id));
  check(pcut_trajectory_status(traj, &status));
  check(pcut_trajectory_chamfer_mm(traj, &chamfer));
  check(pcut_trajectory_iou(traj, &iou, &has_iou));
  check(pcut_trajectory_step_count(traj, &steps));
  check(pcut_trajectory_frame_count(traj, &frames));
  std::printf("episode %s: %s\n", id, status);
  std::printf("  steps: %zu  frames: %zu\n", steps, frames);
  std::printf("  chamfer: %.6g mm\n", chamfer);
  if (has_iou) std::printf("  iou: %.6g\n", iou);
}

int cmd_gen_tracks(const std::string& kind, int count, uint64_t seed, const std::string& out,
                   const std::string& config_path) {
  ConfigPtr cfg = load_config(config_path);
  std::filesystem::create_directories(out);
  for (int i = 0; i < count; ++i) {
    const uint64_t curve_seed = pcut_derive_seed(seed, 0x10000u + static_cast<uint64_t>(i));
    pcut_curve* raw = nullptr;
    check(pcut_curve_generate(cfg.get(), kind.c_str(), curve_seed, &raw));
    CurvePtr curve(raw);
    char name[64];
    std::snprintf(name, sizeof name, "curve_%04d.txt", i);
    const std::string path = out + "/" + name;
    check(pcut_curve_save(curve.get(), path.c_str()));
    std::printf("wrote %s (%s)\n", path.c_str(), kind.c_str());
  }
  return 0;
}

int cmd_run_oracle(const std::string& curve_path, uint64_t seed, const std::string& out,
                   const std::string& config_path) {
  ConfigPtr cfg = load_config(config_path);
  pcut_curve* raw_curve = nullptr;
  check(pcut_curve_load(curve_path.c_str(), &raw_curve));
  CurvePtr curve(raw_curve);
  pcut_trajectory* raw_traj = nullptr;
  check(pcut_run_episode(cfg.get(), curve.get(), seed, &raw_traj));
  TrajectoryPtr traj(raw_traj);
  check(pcut_trajectory_save(traj.get(), out.c_str()));
  print_trajectory_summary(traj.get());
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

int cmd_gen_demos(int count, bool tau_given, double tau, uint64_t seed, const std::string& out,
                  const std::string& config_path) {
  ConfigPtr cfg = load_config(config_path);
  if (tau_given) {
    check(pcut_config_set(cfg.get(), "pipeline.filter_tau", format_g(tau).c_str()));
  }
  double usage = 0.0, median = 0.0;
  int failed = 0;
  check(pcut_generate_dataset(cfg.get(), count, seed, out.c_str(), &usage, &median, &failed));
  std::printf("wrote %d episode(s) to %s\n", count, out.c_str());
  std::printf("  failed: %d\n", failed);
  std::printf("  filter usage: %.4f\n", usage);
  std::printf("  median chamfer: %.6g mm\n", median);
  return 0;
}

int cmd_eval(const std::string& dataset_dir, const std::string& report_path) {
  pcut_dataset* raw = nullptr;
  check(pcut_dataset_open(dataset_dir.c_str(), &raw));
  DatasetPtr dataset(raw);
  char* table = nullptr;
  check(pcut_dataset_report(dataset.get(), &table));
  std::string text(table);
  pcut_string_free(table);
  std::fputs(text.c_str(), stdout);
  if (!report_path.empty()) {
    write_text(report_path, text);
    std::printf("wrote %s\n", report_path.c_str());
  }
  return 0;
}

std::string render_uv_plot(const pcut_config* cfg, const pcut_trajectory* traj) {
  const double width_mm = config_double(cfg, "paper.width") * 1000.0;
  const double height_mm = config_double(cfg, "paper.height") * 1000.0;
  const double* cut = nullptr;
  size_t cut_count = 0;
  check(pcut_trajectory_cut_polyline(traj, &cut, &cut_count));
  double* target = nullptr;
  size_t target_count = 0;
  check(pcut_trajectory_target_polyline(traj, 256, &target, &target_count));

  // SVG y grows downward; flip v so the sheet appears in its natural frame.
  auto polyline = [&](const double* uv, size_t n, const char* color, const char* dash) {
    std::string s = "  <polyline fill=\"none\" stroke=\"";
    s += color;
    s += "\" stroke-width=\"0.6\"";
    if (dash[0] != '\0') {
      s += " stroke-dasharray=\"";
      s += dash;
      s += "\"";
    }
    s += " points=\"";
    char buf[80];
    for (size_t i = 0; i < n; ++i) {
      std::snprintf(buf, sizeof buf, "%s%.4f,%.4f", i ? " " : "", uv[2 * i] * 1000.0,
                    height_mm - uv[2 * i + 1] * 1000.0);
      s += buf;
    }
    s += "\"/>\n";
    return s;
  };

  std::string svg;
  char head[256];
  std::snprintf(head, sizeof head,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"%.4f %.4f %.4f %.4f\" "
                "width=\"%.0f\" height=\"%.0f\">\n",
                -5.0, -5.0, width_mm + 10.0, height_mm + 10.0, 2.0 * (width_mm + 10.0),
                2.0 * (height_mm + 10.0));
  svg += head;
  char rect[192];
  std::snprintf(rect, sizeof rect,
                "  <rect x=\"0\" y=\"0\" width=\"%.4f\" height=\"%.4f\" fill=\"#fffef8\" "
                "stroke=\"#888\" stroke-width=\"0.3\"/>\n",
                width_mm, height_mm);
  svg += rect;
  if (target_count > 0) svg += polyline(target, target_count, "#2060c0", "2,1.5");
  if (cut_count > 0) svg += polyline(cut, cut_count, "#c03020", "");
  pcut_buffer_free(target);
  svg += "</svg>\n";
  return svg;
}

std::string render_cloud(const pcut_trajectory* traj, int step) {
  size_t frames = 0;
  check(pcut_trajectory_frame_count(traj, &frames));
  if (frames == 0) throw ApiError("trajectory has no stored observation frames");
  size_t index;
  if (step < 0) {
    index = frames - 1;
  } else {
    index = static_cast<size_t>(step);
    if (index >= frames) {
      throw ApiError("frame index " + std::to_string(step) + " out of range (have " +
                     std::to_string(frames) + ")");
    }
  }
  const double* xyz = nullptr;
  const uint8_t* labels = nullptr;
  const uint8_t* on_curve = nullptr;
  size_t n = 0;
  check(pcut_trajectory_frame(traj, index, &xyz, &labels, &on_curve, &n));
  std::string text = "# x y z label on_curve\n";
  char buf[160];
  for (size_t i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g %u %u\n", xyz[3 * i], xyz[3 * i + 1],
                  xyz[3 * i + 2], static_cast<unsigned>(labels[i]),
                  static_cast<unsigned>(on_curve[i]));
    text += buf;
  }
  return text;
}

int cmd_render(const std::string& trajectory_dir, int episode, int step,
               const std::string& format, const std::string& out_path,
               const std::string& config_path) {
  pcut_dataset* raw = nullptr;
  check(pcut_dataset_open(trajectory_dir.c_str(), &raw));
  DatasetPtr dataset(raw);
  const pcut_trajectory* traj = nullptr;
  check(pcut_dataset_trajectory(dataset.get(), static_cast<size_t>(episode), &traj));

  if (format == "mesh") {
    ConfigPtr cfg = load_config(config_path);
    char* text = nullptr;
    check(pcut_trajectory_replay_mesh(cfg.get(), traj, step, &text));
    std::string mesh(text);
    pcut_string_free(text);
    emit(out_path, mesh);
  } else if (format == "cloud") {
    emit(out_path, render_cloud(traj, step));
  } else if (format == "uv-plot") {
    ConfigPtr cfg = load_config(config_path);
    emit(out_path, render_uv_plot(cfg.get(), traj));
  } else {
    throw ApiError("unknown render format '" + format + "'");
  }
  return 0;
}

int cmd_selftest(bool quiet) {
  int failures = 0;
  check(pcut_selftest(quiet ? 0 : 1, &failures));
  if (failures != 0) {
    std::fprintf(stderr, "%d selftest failure(s)\n", failures);
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"papercut: scissors-on-paper cutting simulator and demonstration pipeline"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", pcut_version());

  std::string config_path;
  app.add_option("--config", config_path, "configuration file (default: built-in values)")
      ->envname("PAPERCUT_CONFIG");

  auto* gen_tracks = app.add_subcommand("gen-tracks", "generate benchmark target curves");
  std::string gt_kind = "easy";
  int gt_count = 1;
  uint64_t gt_seed = 0;
  std::string gt_out = "tracks";
  gen_tracks->add_option("--kind", gt_kind, "curve family: easy, middle, or hard")
      ->check(CLI::IsMember({"easy", "middle", "hard"}))
      ->capture_default_str();
  gen_tracks->add_option("--count", gt_count, "number of curves")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  gen_tracks->add_option("--seed", gt_seed, "master seed")->capture_default_str();
  gen_tracks->add_option("--out", gt_out, "output directory")->capture_default_str();

  auto* run_oracle = app.add_subcommand("run-oracle", "cut one curve with the oracle policy");
  std::string ro_curve;
  uint64_t ro_seed = 0;
  std::string ro_out = "episode";
  run_oracle->add_option("--curve", ro_curve, "curve file to cut")->required();
  run_oracle->add_option("--seed", ro_seed, "episode seed")->capture_default_str();
  run_oracle->add_option("--out", ro_out, "output dataset directory")->capture_default_str();

  auto* gen_demos = app.add_subcommand("gen-demos", "generate a demonstration dataset");
  int gd_count = 10;
  double gd_tau = 0.0;
  uint64_t gd_seed = 0;
  std::string gd_out = "demos";
  gen_demos->add_option("--count", gd_count, "number of episodes")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  auto* gd_tau_opt = gen_demos->add_option(
      "--tau", gd_tau, "filter threshold in millimeters (default: config pipeline.filter_tau)");
  gen_demos->add_option("--seed", gd_seed, "master seed")->capture_default_str();
  gen_demos->add_option("--out", gd_out, "output dataset directory")->capture_default_str();

  auto* eval = app.add_subcommand("eval", "score a dataset and print the metric table");
  std::string ev_dataset;
  std::string ev_report;
  eval->add_option("--dataset", ev_dataset, "dataset directory")->required();
  eval->add_option("--report", ev_report, "also write the table to this file");

  auto* render = app.add_subcommand("render", "export a stored episode for inspection");
  std::string rd_traj;
  int rd_episode = 0;
  int rd_step = -1;
  std::string rd_format = "mesh";
  std::string rd_out;
  render->add_option("--trajectory", rd_traj, "dataset directory holding the episode")
      ->required();
  render->add_option("--episode", rd_episode, "episode index within the dataset")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  render
      ->add_option("--step", rd_step,
                   "primitive step (mesh) or frame index (cloud); -1 = final state")
      ->capture_default_str();
  render->add_option("--format", rd_format, "mesh, cloud, or uv-plot")
      ->check(CLI::IsMember({"mesh", "cloud", "uv-plot"}))
      ->capture_default_str();
  render->add_option("--out", rd_out, "output file (default: stdout)");

  auto* selftest = app.add_subcommand("selftest", "run the built-in invariant suites");
  bool st_quiet = false;
  selftest->add_flag("--quiet", st_quiet, "suppress per-check output");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen_tracks->parsed()) {
      return cmd_gen_tracks(gt_kind, gt_count, gt_seed, gt_out, config_path);
    }
    if (run_oracle->parsed()) {
      return cmd_run_oracle(ro_curve, ro_seed, ro_out, config_path);
    }
    if (gen_demos->parsed()) {
      return cmd_gen_demos(gd_count, gd_tau_opt->count() > 0, gd_tau, gd_seed, gd_out,
                           config_path);
    }
    if (eval->parsed()) return cmd_eval(ev_dataset, ev_report);
    if (render->parsed()) {
      return cmd_render(rd_traj, rd_episode, rd_step, rd_format, rd_out, config_path);
    }
    if (selftest->parsed()) return cmd_selftest(st_quiet);
  } catch (const ApiError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
