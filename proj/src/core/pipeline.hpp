#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "core/actions.hpp"
#include "core/config.hpp"
#include "core/perception.hpp"
#include "core/scissors.hpp"
#include "core/shell_sim.hpp"
#include "core/tracks.hpp"

namespace papercut {

// Everything one demonstration episode needs, loaded once from a ConfigMap.
struct PipelineConfig {
  TrackKind track = TrackKind::Easy;
  double paper_width = 0.210;
  double paper_height = 0.297;
  double edge_length = 0.005;

  double basic_length = 0.015;  // m, target segment arc length
  double filter_tau = 1.0;      // mm
  double perturb_prob = 0.3;
  double perturb_max_angle = 0.0872664625997165;  // rad
  int horizon = 4;              // observation window length per step
  int primitive_cap = 200;
  int settle_steps = 10;
  bool observations = true;
  double fracture_tolerance = 0.001;  // m: the sheet rides within the contact margin of the cutting plane
  int chamfer_samples = 512;

  // Uniform sampling ranges {lo, hi} for domain randomization.
  std::array<double, 2> randomize_size = {1.0, 1.0};
  std::array<double, 2> randomize_density = {0.075, 0.075};
  std::array<double, 2> randomize_youngs = {3e9, 3e9};

  ShellParams shell;
  ScissorGeometry scissors;
  CameraModel camera;
  int pool_size = 3;
  double noise_amp = 0.002;
  double crop_half_extent = 0.015;
  int sample_count = 1024;
  double mask_width = 0.001;

  static PipelineConfig from_config(const ConfigMap& cfg);
};

// One executed primitive: which phase ran, its parameter, the scissor pose
// around it, and the indices of the observation frames forming the step's
// trailing window (empty when observations are off).
struct PhaseRecord {
  std::string phase;  // "open" | "push" | "rotate" | "close"
  double open_target = 0;        // rad (open)
  double push = 0;               // m (push)
  Vec3 rotation = Vec3::Zero();  // axis-angle (rotate)
  double close = 0;              // m (close)
  ScissorPose pose_before, pose_after;
  std::vector<int> frame_window;
  bool perturbed = false;
  int substeps = 0;
  int non_converged = 0;
};

struct RandomizationRecord {
  double size_scale = 1.0;
  double areal_density = 0.075;
  double youngs_modulus = 3e9;
};

// Full episode record. `curve` is the curve the episode actually targeted
// (control points scaled by the sampled size factor), so the stored chamfer
// always equals a recomputation from final_cut against this curve.
struct Trajectory {
  std::string id;
  CurveSpec curve;
  std::vector<PhaseRecord> steps;
  std::vector<Vec2> final_cut;  // realized cut path in rest-plane coordinates
  TrialMetrics metrics;
  RandomizationRecord randomization;
  std::string status = "ok";  // "ok" or "failed: <reason>"
  uint64_t seed = 0;
  int non_converged = 0;
  std::vector<ObservationFrame> frames;
};

struct RandomizedParams {
  ShellParams shell;
  double size_scale = 1.0;
};

// Independent uniform draws for size scale, areal density, and Young's
// modulus (in that order); zero-width ranges reproduce the bounds exactly.
RandomizedParams randomize_params(const ShellParams& base,
                                  const std::array<double, 2>& size_range,
                                  const std::array<double, 2>& density_range,
                                  const std::array<double, 2>& youngs_range,
                                  uint64_t seed);

// Runs the oracle over one curve: discretize, settle, then the
// open-push-rotate-close cycle per segment with optional rotation
// perturbation, rendering one observation frame after settling and after
// every primitive. Failures (non-convergence, remeshing errors, the
// primitive cap) mark the trajectory failed and keep the partial record.
// Deterministic per (curve, config, seed). `step_limit` >= 0 truncates the
// episode after that many primitives (used for replay).
Trajectory run_episode(const CurveSpec& curve, const PipelineConfig& cfg,
                       uint64_t seed, int step_limit = -1);

// Re-executes a stored episode (its curve is already size-scaled) through
// `step_limit` primitives and returns the sheet's final state. Bitwise
// deterministic against the original run: the perturbation stream is keyed
// off the stored seed and the perception stream never touches the dynamics.
PaperMesh replay_episode_mesh(const Trajectory& t, const PipelineConfig& cfg,
                              int step_limit = -1);

struct FilterResult {
  std::vector<size_t> kept, dropped;  // indices into the input list
  double usage = 0;                   // kept fraction
};

// Quality filter: keep trajectories whose chamfer is at or below tau_mm.
FilterResult filter_demos(const std::vector<Trajectory>& trajectories, double tau_mm);

// Plain-text dataset layout under `directory`:
//   manifest.txt               one record per episode
//   <id>/curve.txt             target curve
//   <id>/meta.txt              seed, randomization, metrics, status
//   <id>/steps.txt             phase records
//   <id>/cut.txt               realized cut polyline
//   <id>/frames/frame_NNNN.pcfr
// Episodes with empty ids are assigned ep_NNNN by position. Returns the
// manifest path. read(write(x)) reproduces every numeric field bit-for-bit.
std::string write_dataset(std::vector<Trajectory>& trajectories,
                          const std::string& directory);
std::vector<Trajectory> read_dataset(const std::string& directory);

struct DatasetSummary {
  int episodes = 0;
  int failed = 0;
  FilterResult filter;
  MetricReport report;
  std::string directory;
};

// Generates `count` tracks and episodes from one master seed (per-curve and
// per-episode child seeds, so episode order and parallelism cannot change
// the bytes), writes the dataset plus filter and report files, and returns
// the summary.
DatasetSummary generate_dataset(const PipelineConfig& cfg, int count,
                                uint64_t master_seed, const std::string& out_dir);

// Reads a dataset and rebuilds the metric report over all its episodes.
MetricReport eval_dataset(const std::string& directory);

}  // namespace papercut
