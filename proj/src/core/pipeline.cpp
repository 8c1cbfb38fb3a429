#include "core/pipeline.hpp"

#include <cerrno>
#include <climits>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <set>
#include <sstream>
#include <utility>

#include "core/error.hpp"
#include "core/mesh_io.hpp"
#include "core/rng.hpp"

namespace papercut {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Per-purpose child streams off the episode seed, so turning observations
// on or off cannot shift the perturbation draws.
constexpr uint64_t kStreamPerturb = 1;
constexpr uint64_t kStreamPerception = 2;
constexpr uint64_t kStreamRandomize = 3;
// Child-seed bases for dataset generation.
constexpr uint64_t kStreamCurveBase = 0x10000;
constexpr uint64_t kStreamEpisodeBase = 0x20000;

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::string cur;
  for (char ch : text) {
    if (ch == '\n') {
      if (!cur.empty() && cur.back() == '\r') cur.pop_back();
      lines.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (!cur.empty()) {
    if (cur.back() == '\r') cur.pop_back();
    lines.push_back(cur);
  }
  return lines;
}

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream iss(line);
  std::vector<std::string> out;
  std::string tok;
  while (iss >> tok) out.push_back(tok);
  return out;
}

double parse_double_tok(const std::string& tok, const std::string& path) {
  if (tok.empty()) fail(ErrorCode::Parse, "empty number in " + path);
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(tok.c_str(), &end);
  if (end != tok.c_str() + tok.size()) {
    fail(ErrorCode::Parse, "bad number '" + tok + "' in " + path);
  }
  return v;
}

uint64_t parse_u64_tok(const std::string& tok, const std::string& path) {
  if (tok.empty() || tok[0] == '-') fail(ErrorCode::Parse, "bad unsigned '" + tok + "' in " + path);
  char* end = nullptr;
  errno = 0;
  const uint64_t v = std::strtoull(tok.c_str(), &end, 10);
  if (end != tok.c_str() + tok.size() || errno == ERANGE) {
    fail(ErrorCode::Parse, "bad unsigned '" + tok + "' in " + path);
  }
  return v;
}

int parse_int_tok(const std::string& tok, const std::string& path) {
  if (tok.empty()) fail(ErrorCode::Parse, "empty integer in " + path);
  char* end = nullptr;
  errno = 0;
  const long v = std::strtol(tok.c_str(), &end, 10);
  if (end != tok.c_str() + tok.size() || errno == ERANGE || v < INT_MIN || v > INT_MAX) {
    fail(ErrorCode::Parse, "bad integer '" + tok + "' in " + path);
  }
  return int(v);
}

std::string pose_to_string(const ScissorPose& p) {
  std::string s;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      s += format_double(p.rotation(r, c));
      s += ' ';
    }
  }
  for (int i = 0; i < 3; ++i) {
    s += format_double(p.translation[i]);
    s += ' ';
  }
  s += format_double(p.open_angle);
  return s;
}

ScissorPose pose_from_tokens(const std::vector<std::string>& toks, size_t offset,
                             const std::string& path) {
  if (toks.size() < offset + 13) {
    fail(ErrorCode::Parse, "truncated pose record in " + path);
  }
  ScissorPose p;
  size_t i = offset;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) p.rotation(r, c) = parse_double_tok(toks[i++], path);
  }
  for (int k = 0; k < 3; ++k) p.translation[k] = parse_double_tok(toks[i++], path);
  p.open_angle = parse_double_tok(toks[i], path);
  return p;
}

Vec2 reflect_about_line(const Vec2& p, const Vec2& a, const Vec2& unit_dir) {
  const Vec2 d = p - a;
  const Vec2 proj = a + d.dot(unit_dir) * unit_dir;
  return 2.0 * proj - p;
}

// Chamfer against the targeted curve; for closed patterns also the region
// overlap of the realized ring (cut joined with its mirror image across the
// pattern axis) against the target ring.
void compute_metrics(Trajectory& traj, const PipelineConfig& cfg) {
  const std::vector<Vec2> target = traj.curve.target_polyline(512);
  if (traj.final_cut.size() >= 2) {
    traj.metrics.chamfer_mm = chamfer_mm(traj.final_cut, target, cfg.chamfer_samples);
  } else {
    traj.metrics.chamfer_mm = kInf;
  }
  traj.metrics.has_iou = false;
  traj.metrics.iou = 0;
  if (traj.curve.kind == TrackKind::Hard && traj.final_cut.size() >= 2) {
    const Vec2 a = traj.curve.curves[0].control[0];
    const Vec2 b = traj.curve.curves[0].control[3];
    Vec2 axis = b - a;
    if (axis.norm() > 1e-12) {
      axis.normalize();
      std::vector<Vec2> ring = traj.final_cut;
      for (auto it = traj.final_cut.rbegin(); it != traj.final_cut.rend(); ++it) {
        ring.push_back(reflect_about_line(*it, a, axis));
      }
      traj.metrics.iou = polygon_iou(ring, traj.curve.pattern_ring(256));
      traj.metrics.has_iou = true;
    }
  }
}

std::string episode_id_for(size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ep_%04zu", index);
  return buf;
}

std::string frame_file_name(size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%04zu.pcfr", index);
  return buf;
}

void write_episode_files(const Trajectory& t, const std::string& ep_dir) {
  std::filesystem::create_directories(ep_dir);
  t.curve.save(ep_dir + "/curve.txt");

  std::string meta;
  meta += "papercut-episode 1\n";
  meta += "seed " + std::to_string(t.seed) + "\n";
  meta += "size_scale " + format_double(t.randomization.size_scale) + "\n";
  meta += "areal_density " + format_double(t.randomization.areal_density) + "\n";
  meta += "youngs_modulus " + format_double(t.randomization.youngs_modulus) + "\n";
  meta += "chamfer_mm " + format_double(t.metrics.chamfer_mm) + "\n";
  meta += "iou " + (t.metrics.has_iou ? format_double(t.metrics.iou) : std::string("-")) + "\n";
  meta += "non_converged " + std::to_string(t.non_converged) + "\n";
  meta += "steps " + std::to_string(t.steps.size()) + "\n";
  meta += "frames " + std::to_string(t.frames.size()) + "\n";
  meta += "status " + t.status + "\n";
  write_text_file(ep_dir + "/meta.txt", meta);

  std::string steps;
  steps += "papercut-steps 1\n";
  steps += "count " + std::to_string(t.steps.size()) + "\n";
  for (size_t i = 0; i < t.steps.size(); ++i) {
    const PhaseRecord& r = t.steps[i];
    steps += "step " + std::to_string(i) + " " + r.phase + "\n";
    if (r.phase == "open") {
      steps += "param " + format_double(r.open_target) + "\n";
    } else if (r.phase == "push") {
      steps += "param " + format_double(r.push) + "\n";
    } else if (r.phase == "rotate") {
      steps += "param " + format_double(r.rotation.x()) + " " + format_double(r.rotation.y()) +
               " " + format_double(r.rotation.z()) + "\n";
    } else if (r.phase == "close") {
      steps += "param " + format_double(r.close) + "\n";
    } else {
      fail(ErrorCode::InvalidArgument, "unknown phase '" + r.phase + "' in trajectory " + t.id);
    }
    steps += "pose_before " + pose_to_string(r.pose_before) + "\n";
    steps += "pose_after " + pose_to_string(r.pose_after) + "\n";
    steps += "window " + std::to_string(r.frame_window.size());
    for (int f : r.frame_window) steps += " " + std::to_string(f);
    steps += "\n";
    steps += "flags perturbed " + std::to_string(r.perturbed ? 1 : 0) + " substeps " +
             std::to_string(r.substeps) + " non_converged " + std::to_string(r.non_converged) +
             "\n";
  }
  write_text_file(ep_dir + "/steps.txt", steps);

  std::string cut;
  cut += "papercut-cut 1\n";
  cut += "count " + std::to_string(t.final_cut.size()) + "\n";
  for (const Vec2& p : t.final_cut) {
    cut += "p " + format_double(p.x()) + " " + format_double(p.y()) + "\n";
  }
  write_text_file(ep_dir + "/cut.txt", cut);

  if (!t.frames.empty()) {
    const std::string frames_dir = ep_dir + "/frames";
    std::filesystem::create_directories(frames_dir);
    for (size_t i = 0; i < t.frames.size(); ++i) {
      write_frame(t.frames[i], frames_dir + "/" + frame_file_name(i));
    }
  }
}

Trajectory read_episode_files(const std::string& ep_dir, const std::string& id) {
  Trajectory t;
  t.id = id;
  t.curve = CurveSpec::parse_file(ep_dir + "/curve.txt");

  const std::string meta_path = ep_dir + "/meta.txt";
  const std::vector<std::string> meta = split_lines(read_text_file(meta_path));
  size_t steps_expected = 0, frames_expected = 0;
  {
    if (meta.size() < 11 || meta[0] != "papercut-episode 1") {
      fail(ErrorCode::Parse, "bad episode header in " + meta_path);
    }
    auto field = [&](size_t line, const std::string& key) -> std::string {
      const std::string prefix = key + " ";
      if (line >= meta.size() || meta[line].rfind(prefix, 0) != 0) {
        fail(ErrorCode::Parse, "expected '" + key + "' on line " + std::to_string(line + 1) +
                                   " of " + meta_path);
      }
      return meta[line].substr(prefix.size());
    };
    t.seed = parse_u64_tok(field(1, "seed"), meta_path);
    t.randomization.size_scale = parse_double_tok(field(2, "size_scale"), meta_path);
    t.randomization.areal_density = parse_double_tok(field(3, "areal_density"), meta_path);
    t.randomization.youngs_modulus = parse_double_tok(field(4, "youngs_modulus"), meta_path);
    t.metrics.chamfer_mm = parse_double_tok(field(5, "chamfer_mm"), meta_path);
    const std::string iou = field(6, "iou");
    t.metrics.has_iou = iou != "-";
    t.metrics.iou = t.metrics.has_iou ? parse_double_tok(iou, meta_path) : 0.0;
    t.non_converged = parse_int_tok(field(7, "non_converged"), meta_path);
    steps_expected = size_t(parse_int_tok(field(8, "steps"), meta_path));
    frames_expected = size_t(parse_int_tok(field(9, "frames"), meta_path));
    t.status = field(10, "status");
    if (t.status.empty()) fail(ErrorCode::Parse, "empty status in " + meta_path);
  }
  t.metrics.id = id;

  const std::string steps_path = ep_dir + "/steps.txt";
  const std::vector<std::string> sl = split_lines(read_text_file(steps_path));
  if (sl.size() < 2 || sl[0] != "papercut-steps 1") {
    fail(ErrorCode::Parse, "bad steps header in " + steps_path);
  }
  {
    const auto toks = split_ws(sl[1]);
    if (toks.size() != 2 || toks[0] != "count") {
      fail(ErrorCode::Parse, "bad steps count line in " + steps_path);
    }
    const size_t count = size_t(parse_int_tok(toks[1], steps_path));
    if (count != steps_expected) {
      fail(ErrorCode::Parse, "step count mismatch between meta and steps in " + ep_dir);
    }
    size_t line = 2;
    auto next_line = [&]() -> const std::string& {
      if (line >= sl.size()) fail(ErrorCode::Parse, "truncated steps file " + steps_path);
      return sl[line++];
    };
    for (size_t i = 0; i < count; ++i) {
      PhaseRecord r;
      {
        const auto h = split_ws(next_line());
        if (h.size() != 3 || h[0] != "step" || size_t(parse_int_tok(h[1], steps_path)) != i) {
          fail(ErrorCode::Parse, "bad step header for step " + std::to_string(i) + " in " +
                                     steps_path);
        }
        r.phase = h[2];
      }
      {
        const auto p = split_ws(next_line());
        if (p.empty() || p[0] != "param") {
          fail(ErrorCode::Parse, "missing param line in " + steps_path);
        }
        if (r.phase == "open" && p.size() == 2) {
          r.open_target = parse_double_tok(p[1], steps_path);
        } else if (r.phase == "push" && p.size() == 2) {
          r.push = parse_double_tok(p[1], steps_path);
        } else if (r.phase == "rotate" && p.size() == 4) {
          r.rotation = Vec3(parse_double_tok(p[1], steps_path), parse_double_tok(p[2], steps_path),
                            parse_double_tok(p[3], steps_path));
        } else if (r.phase == "close" && p.size() == 2) {
          r.close = parse_double_tok(p[1], steps_path);
        } else {
          fail(ErrorCode::Parse, "bad phase/param combination '" + r.phase + "' in " + steps_path);
        }
      }
      {
        const auto pb = split_ws(next_line());
        if (pb.empty() || pb[0] != "pose_before") {
          fail(ErrorCode::Parse, "missing pose_before in " + steps_path);
        }
        r.pose_before = pose_from_tokens(pb, 1, steps_path);
        const auto pa = split_ws(next_line());
        if (pa.empty() || pa[0] != "pose_after") {
          fail(ErrorCode::Parse, "missing pose_after in " + steps_path);
        }
        r.pose_after = pose_from_tokens(pa, 1, steps_path);
      }
      {
        const auto w = split_ws(next_line());
        if (w.size() < 2 || w[0] != "window") {
          fail(ErrorCode::Parse, "missing window line in " + steps_path);
        }
        const int k = parse_int_tok(w[1], steps_path);
        if (k < 0 || w.size() != size_t(k) + 2) {
          fail(ErrorCode::Parse, "bad window length in " + steps_path);
        }
        for (int j = 0; j < k; ++j) {
          const int f = parse_int_tok(w[2 + j], steps_path);
          if (f < 0 || size_t(f) >= frames_expected) {
            fail(ErrorCode::Parse, "window references missing frame " + std::to_string(f) +
                                       " in " + steps_path);
          }
          r.frame_window.push_back(f);
        }
      }
      {
        const auto fl = split_ws(next_line());
        if (fl.size() != 7 || fl[0] != "flags" || fl[1] != "perturbed" || fl[3] != "substeps" ||
            fl[5] != "non_converged") {
          fail(ErrorCode::Parse, "bad flags line in " + steps_path);
        }
        r.perturbed = parse_int_tok(fl[2], steps_path) != 0;
        r.substeps = parse_int_tok(fl[4], steps_path);
        r.non_converged = parse_int_tok(fl[6], steps_path);
      }
      t.steps.push_back(std::move(r));
    }
    if (line != sl.size()) fail(ErrorCode::Parse, "trailing lines in " + steps_path);
  }

  const std::string cut_path = ep_dir + "/cut.txt";
  const std::vector<std::string> cl = split_lines(read_text_file(cut_path));
  if (cl.size() < 2 || cl[0] != "papercut-cut 1") {
    fail(ErrorCode::Parse, "bad cut header in " + cut_path);
  }
  {
    const auto toks = split_ws(cl[1]);
    if (toks.size() != 2 || toks[0] != "count") {
      fail(ErrorCode::Parse, "bad cut count line in " + cut_path);
    }
    const size_t count = size_t(parse_int_tok(toks[1], cut_path));
    if (cl.size() != count + 2) fail(ErrorCode::Parse, "cut point count mismatch in " + cut_path);
    for (size_t i = 0; i < count; ++i) {
      const auto p = split_ws(cl[2 + i]);
      if (p.size() != 3 || p[0] != "p") fail(ErrorCode::Parse, "bad cut point in " + cut_path);
      t.final_cut.emplace_back(parse_double_tok(p[1], cut_path), parse_double_tok(p[2], cut_path));
    }
  }

  for (size_t i = 0; i < frames_expected; ++i) {
    t.frames.push_back(read_frame(ep_dir + "/frames/" + frame_file_name(i)));
  }
  return t;
}

void check_range(const std::array<double, 2>& range, const std::string& name) {
  if (!(range[0] > 0) || !(range[1] >= range[0])) {
    fail(ErrorCode::InvalidArgument, name + " range must satisfy 0 < lo <= hi");
  }
}

}  // namespace

PipelineConfig PipelineConfig::from_config(const ConfigMap& cfg) {
  PipelineConfig pc;
  pc.track = track_kind_from_name(cfg.get_string("pipeline.track"));
  pc.paper_width = cfg.get_double("paper.width");
  pc.paper_height = cfg.get_double("paper.height");
  pc.edge_length = cfg.get_double("paper.edge_length");
  if (!(pc.paper_width > 0) || !(pc.paper_height > 0) || !(pc.edge_length > 0)) {
    fail(ErrorCode::InvalidArgument, "paper dimensions and edge length must be positive");
  }
  pc.basic_length = cfg.get_double("pipeline.basic_length");
  if (!(pc.basic_length > 0)) fail(ErrorCode::InvalidArgument, "basic_length must be positive");
  pc.filter_tau = cfg.get_double("pipeline.filter_tau");
  if (!(pc.filter_tau > 0)) fail(ErrorCode::InvalidArgument, "filter_tau must be positive");
  pc.perturb_prob = cfg.get_double("pipeline.perturb_prob");
  if (pc.perturb_prob < 0 || pc.perturb_prob > 1) {
    fail(ErrorCode::InvalidArgument, "perturb_prob must lie in [0, 1]");
  }
  pc.perturb_max_angle = cfg.get_double("pipeline.perturb_max_angle");
  if (pc.perturb_max_angle < 0) {
    fail(ErrorCode::InvalidArgument, "perturb_max_angle must be non-negative");
  }
  pc.horizon = cfg.get_int("pipeline.horizon");
  if (pc.horizon < 1) fail(ErrorCode::InvalidArgument, "horizon must be at least 1");
  pc.primitive_cap = cfg.get_int("pipeline.primitive_cap");
  if (pc.primitive_cap < 1) fail(ErrorCode::InvalidArgument, "primitive_cap must be at least 1");
  pc.settle_steps = cfg.get_int("pipeline.settle_steps");
  if (pc.settle_steps < 0) fail(ErrorCode::InvalidArgument, "settle_steps must be non-negative");
  pc.observations = cfg.get_int("pipeline.observations") != 0;
  pc.fracture_tolerance = cfg.get_double("pipeline.fracture_tolerance");
  if (!(pc.fracture_tolerance > 0)) {
    fail(ErrorCode::InvalidArgument, "fracture_tolerance must be positive");
  }
  pc.chamfer_samples = cfg.get_int("pipeline.chamfer_samples");
  if (pc.chamfer_samples < 2) fail(ErrorCode::InvalidArgument, "chamfer_samples must be at least 2");

  const auto rs = cfg.get_doubles("pipeline.randomize_size", 2);
  const auto rd = cfg.get_doubles("pipeline.randomize_density", 2);
  const auto ry = cfg.get_doubles("pipeline.randomize_youngs", 2);
  pc.randomize_size = {rs[0], rs[1]};
  pc.randomize_density = {rd[0], rd[1]};
  pc.randomize_youngs = {ry[0], ry[1]};
  check_range(pc.randomize_size, "size");
  check_range(pc.randomize_density, "density");
  check_range(pc.randomize_youngs, "youngs");

  pc.shell = ShellParams::from_config(cfg);
  pc.scissors = ScissorGeometry::from_config(cfg);
  pc.camera = CameraModel::from_config(cfg);
  pc.pool_size = cfg.get_int("perception.pool_size");
  if (pc.pool_size < 1) fail(ErrorCode::InvalidArgument, "pool_size must be at least 1");
  pc.noise_amp = cfg.get_double("perception.noise_amp");
  if (pc.noise_amp < 0) fail(ErrorCode::InvalidArgument, "noise_amp must be non-negative");
  pc.crop_half_extent = cfg.get_double("perception.crop_half_extent");
  if (!(pc.crop_half_extent > 0)) {
    fail(ErrorCode::InvalidArgument, "crop_half_extent must be positive");
  }
  pc.sample_count = cfg.get_int("perception.sample_count");
  if (pc.sample_count < 1) fail(ErrorCode::InvalidArgument, "sample_count must be at least 1");
  pc.mask_width = cfg.get_double("perception.mask_width");
  if (!(pc.mask_width > 0)) fail(ErrorCode::InvalidArgument, "mask_width must be positive");
  return pc;
}

RandomizedParams randomize_params(const ShellParams& base,
                                  const std::array<double, 2>& size_range,
                                  const std::array<double, 2>& density_range,
                                  const std::array<double, 2>& youngs_range,
                                  uint64_t seed) {
  check_range(size_range, "size");
  check_range(density_range, "density");
  check_range(youngs_range, "youngs");
  Rng rng(seed);
  RandomizedParams out;
  out.shell = base;
  out.size_scale = rng.uniform(size_range[0], size_range[1]);
  out.shell.areal_density = rng.uniform(density_range[0], density_range[1]);
  out.shell.youngs_modulus = rng.uniform(youngs_range[0], youngs_range[1]);
  return out;
}

namespace {

// Runs the primitive loop for an already-scaled curve and sampled physical
// parameters; `mesh` receives the sheet and keeps its final state.
Trajectory episode_prepared(const CurveSpec& scaled, const RandomizedParams& rp,
                            const PipelineConfig& cfg, uint64_t seed, int step_limit,
                            PaperMesh& mesh) {
  Trajectory traj;
  traj.seed = seed;
  traj.randomization = {rp.size_scale, rp.shell.areal_density, rp.shell.youngs_modulus};
  traj.curve = scaled;

  Rng rng_perturb(derive_seed(seed, kStreamPerturb));
  Rng rng_perception(derive_seed(seed, kStreamPerception));

  mesh = PaperMesh::build_rect(cfg.paper_width * rp.size_scale,
                               cfg.paper_height * rp.size_scale, cfg.edge_length);
  Scissors scissors(cfg.scissors);
  const Vec3 sheet_normal(0, 0, 1);
  const std::vector<Vec2> curve_uv = scaled.target_polyline(512);

  try {
    const std::vector<Vec2> waypoints = discretize_curve(scaled, cfg.basic_length);
    if (waypoints.size() < 2) {
      fail(ErrorCode::Degenerate, "discretized curve has fewer than two waypoints");
    }

    // The scissors arrive closed, blade tips touching the first waypoint and
    // the blades entirely off the sheet, aimed along the first chord with the
    // cutting plane flush with the sheet. The episode's first Open retreats
    // the cutting point toward the pivot and the first Push then glides the
    // open blades onto the sheet a few millimeters per step, so contact
    // builds up gradually instead of appearing fully formed.
    const Vec3 s0 = mesh.position_at_uv(waypoints[0]);
    const Vec3 s1 = mesh.position_at_uv(waypoints[1]);
    Vec3 v0 = s1 - s0;
    v0 -= v0.dot(sheet_normal) * sheet_normal;
    if (v0.norm() < 1e-12) {
      fail(ErrorCode::Degenerate, "first curve chord is perpendicular to the sheet");
    }
    v0.normalize();
    ScissorPose pose;
    pose.rotation.col(0) = v0;
    pose.rotation.col(1) = sheet_normal.cross(v0);
    pose.rotation.col(2) = sheet_normal;
    pose.open_angle = scissors.distance_to_angle(cfg.scissors.blade_length);
    pose.translation = s0 - cfg.scissors.blade_length * v0;
    scissors.set_pose(pose);

    // Settling runs with the scissors already posed so any initial contact is
    // absorbed before the first recorded primitive. Settle steps are
    // initialization, not episode steps: their convergence is not part of the
    // episode's success criteria.
    ShellSim sim(mesh, rp.shell);
    const ScissorPose rest_pose = scissors.pose();
    for (int i = 0; i < cfg.settle_steps; ++i) {
      sim.step(&scissors, &rest_pose);
    }

    auto render_observation = [&]() {
      if (!cfg.observations) return;
      const DepthImage img = render_depth(cfg.camera, mesh, &scissors);
      const LabeledCloud cloud = mimic_artifact(img, cfg.camera, sheet_normal, cfg.pool_size,
                                                cfg.noise_amp, rng_perception);
      ObservationFrame fr =
          crop_and_sample(cloud, scissors.blade_frame().cut_point, cfg.crop_half_extent,
                          cfg.sample_count, curve_uv, cfg.mask_width, rng_perception);
      fr.frame_index = uint32_t(traj.frames.size());
      traj.frames.push_back(std::move(fr));
    };

    render_observation();  // initial frame after settling

    ActionExecutor exec(mesh, scissors, &sim, cfg.fracture_tolerance);
    int prims = 0;
    bool stopped = false;

    // Records the finished phase, renders its trailing observation, and
    // reports whether the episode may continue.
    auto finish_phase = [&](PhaseRecord&& rec, const ExecStats& st) -> bool {
      rec.substeps = st.substeps;
      rec.non_converged = st.non_converged;
      traj.non_converged += st.non_converged;
      rec.pose_after = scissors.pose();
      render_observation();
      if (cfg.observations) {
        const int end = int(traj.frames.size()) - 1;
        const int start = std::max(0, end - (cfg.horizon - 1));
        for (int f = start; f <= end; ++f) rec.frame_window.push_back(f);
      }
      traj.steps.push_back(std::move(rec));
      ++prims;
      if (st.non_converged > 0) {
        traj.status = "failed: simulation step did not converge";
        return false;
      }
      if (step_limit >= 0 && prims >= step_limit) return false;
      return true;
    };

    auto cap_reached = [&]() -> bool {
      if (prims >= cfg.primitive_cap) {
        traj.status = "failed: primitive cap reached";
        return true;
      }
      return false;
    };

    for (size_t k = 0; k + 1 < waypoints.size() && !stopped; ++k) {
      if (cap_reached()) break;
      PhaseRecord rec;
      rec.phase = "open";
      rec.open_target = cfg.scissors.max_open_angle;
      rec.pose_before = scissors.pose();
      ExecStats st = exec.open_blades();
      if (!finish_phase(std::move(rec), st)) {
        stopped = true;
        break;
      }

      // Plan from the post-open state: the cutting point retreated toward the
      // pivot while opening, so the push recovers that retreat plus drift.
      const BladeFrame bf = scissors.blade_frame();
      const int tip = mesh.crack_tip();
      const Vec3 sk =
          tip >= 0 ? mesh.vertices()[tip].position : mesh.position_at_uv(waypoints[k]);
      const Vec3 sk1 = mesh.position_at_uv(waypoints[k + 1]);
      const double remaining = cfg.scissors.blade_length - scissors.cut_point_distance();
      CutAction act = oracle_next_action(bf, sk, sk1, remaining);
      const bool perturbed =
          perturb_rotation(act, rng_perturb, cfg.perturb_prob, cfg.perturb_max_angle);

      if (cap_reached()) break;
      rec = PhaseRecord{};
      rec.phase = "push";
      rec.push = act.push;
      rec.pose_before = scissors.pose();
      st = exec.push(act.push);
      if (!finish_phase(std::move(rec), st)) {
        stopped = true;
        break;
      }

      if (cap_reached()) break;
      rec = PhaseRecord{};
      rec.phase = "rotate";
      rec.rotation = act.rotation;
      rec.perturbed = perturbed;
      rec.pose_before = scissors.pose();
      st = exec.rotate(act.rotation);
      if (!finish_phase(std::move(rec), st)) {
        stopped = true;
        break;
      }

      if (cap_reached()) break;
      rec = PhaseRecord{};
      rec.phase = "close";
      rec.close = act.close;
      rec.pose_before = scissors.pose();
      st = exec.close(act.close);
      if (!finish_phase(std::move(rec), st)) {
        stopped = true;
        break;
      }
    }
  } catch (const Error& e) {
    traj.status = std::string("failed: ") + e.what();
  }

  traj.final_cut = mesh.cut_polyline();
  compute_metrics(traj, cfg);
  return traj;
}

}  // namespace

Trajectory run_episode(const CurveSpec& curve, const PipelineConfig& cfg,
                       uint64_t seed, int step_limit) {
  const RandomizedParams rp =
      randomize_params(cfg.shell, cfg.randomize_size, cfg.randomize_density,
                       cfg.randomize_youngs, derive_seed(seed, kStreamRandomize));
  CurveSpec scaled = curve;
  for (auto& c : scaled.curves) {
    for (auto& p : c.control) p *= rp.size_scale;
  }
  PaperMesh mesh;
  return episode_prepared(scaled, rp, cfg, seed, step_limit, mesh);
}

PaperMesh replay_episode_mesh(const Trajectory& t, const PipelineConfig& cfg, int step_limit) {
  // The stored curve is already scaled; observations are skipped because the
  // perception stream is independent of the dynamics.
  PipelineConfig c = cfg;
  c.observations = false;
  RandomizedParams rp;
  rp.shell = cfg.shell;
  rp.shell.areal_density = t.randomization.areal_density;
  rp.shell.youngs_modulus = t.randomization.youngs_modulus;
  rp.size_scale = t.randomization.size_scale;
  PaperMesh mesh;
  episode_prepared(t.curve, rp, c, t.seed, step_limit, mesh);
  return mesh;
}

FilterResult filter_demos(const std::vector<Trajectory>& trajectories, double tau_mm) {
  FilterResult r;
  for (size_t i = 0; i < trajectories.size(); ++i) {
    if (trajectories[i].metrics.chamfer_mm <= tau_mm) {
      r.kept.push_back(i);
    } else {
      r.dropped.push_back(i);
    }
  }
  r.usage = trajectories.empty() ? 0.0 : double(r.kept.size()) / double(trajectories.size());
  return r;
}

std::string write_dataset(std::vector<Trajectory>& trajectories, const std::string& directory) {
  std::filesystem::create_directories(directory);
  std::set<std::string> ids;
  for (size_t i = 0; i < trajectories.size(); ++i) {
    if (trajectories[i].id.empty()) trajectories[i].id = episode_id_for(i);
    if (!ids.insert(trajectories[i].id).second) {
      fail(ErrorCode::InvalidArgument, "duplicate trajectory id '" + trajectories[i].id + "'");
    }
  }

  std::string manifest;
  manifest += "papercut-dataset 1\n";
  manifest += "count " + std::to_string(trajectories.size()) + "\n";
  for (const Trajectory& t : trajectories) {
    write_episode_files(t, directory + "/" + t.id);
    manifest += "episode " + t.id + " curve " + t.id + "/curve.txt";
    manifest += " steps " + std::to_string(t.steps.size());
    manifest += " frames " + std::to_string(t.frames.size());
    manifest += " chamfer " + format_double(t.metrics.chamfer_mm);
    manifest += " iou " + (t.metrics.has_iou ? format_double(t.metrics.iou) : std::string("-"));
    manifest += " status " + t.status + "\n";
  }
  const std::string manifest_path = directory + "/manifest.txt";
  write_text_file(manifest_path, manifest);
  return manifest_path;
}

std::vector<Trajectory> read_dataset(const std::string& directory) {
  const std::string manifest_path = directory + "/manifest.txt";
  const std::vector<std::string> lines = split_lines(read_text_file(manifest_path));
  if (lines.size() < 2 || lines[0] != "papercut-dataset 1") {
    fail(ErrorCode::Parse, "bad dataset header in " + manifest_path);
  }
  const auto count_toks = split_ws(lines[1]);
  if (count_toks.size() != 2 || count_toks[0] != "count") {
    fail(ErrorCode::Parse, "bad dataset count line in " + manifest_path);
  }
  const size_t count = size_t(parse_int_tok(count_toks[1], manifest_path));
  if (lines.size() != count + 2) {
    fail(ErrorCode::Parse, "episode record count mismatch in " + manifest_path);
  }

  std::vector<Trajectory> out;
  out.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    const std::string& line = lines[2 + i];
    const auto toks = split_ws(line);
    // episode <id> curve <rel> steps <n> frames <m> chamfer <c> iou <v|-> status <rest>
    if (toks.size() < 13 || toks[0] != "episode" || toks[2] != "curve" || toks[4] != "steps" ||
        toks[6] != "frames" || toks[8] != "chamfer" || toks[10] != "iou" || toks[12] != "status") {
      fail(ErrorCode::Parse, "bad episode record on line " + std::to_string(3 + i) + " of " +
                                 manifest_path);
    }
    const std::string& id = toks[1];
    const size_t steps = size_t(parse_int_tok(toks[5], manifest_path));
    const size_t frames = size_t(parse_int_tok(toks[7], manifest_path));
    const double chamfer = parse_double_tok(toks[9], manifest_path);

    Trajectory t = read_episode_files(directory + "/" + id, id);
    if (t.steps.size() != steps || t.frames.size() != frames) {
      fail(ErrorCode::Parse, "manifest counts disagree with episode files for " + id);
    }
    const bool both_nan = std::isnan(chamfer) && std::isnan(t.metrics.chamfer_mm);
    if (!both_nan && chamfer != t.metrics.chamfer_mm) {
      fail(ErrorCode::Parse, "manifest chamfer disagrees with episode metadata for " + id);
    }
    out.push_back(std::move(t));
  }
  return out;
}

DatasetSummary generate_dataset(const PipelineConfig& cfg, int count, uint64_t master_seed,
                                const std::string& out_dir) {
  if (count < 0) fail(ErrorCode::InvalidArgument, "episode count must be non-negative");
  std::vector<Trajectory> trajs;
  trajs.reserve(size_t(count));
  for (int i = 0; i < count; ++i) {
    const CurveSpec curve = gen_track(cfg.track, cfg.paper_width, cfg.paper_height,
                                      derive_seed(master_seed, kStreamCurveBase + uint64_t(i)));
    Trajectory t = run_episode(curve, cfg, derive_seed(master_seed, kStreamEpisodeBase + uint64_t(i)));
    t.id = episode_id_for(size_t(i));
    t.metrics.id = t.id;
    trajs.push_back(std::move(t));
  }

  DatasetSummary sum;
  sum.episodes = count;
  sum.directory = out_dir;
  for (const Trajectory& t : trajs) {
    if (t.status != "ok") ++sum.failed;
  }
  write_dataset(trajs, out_dir);

  sum.filter = filter_demos(trajs, cfg.filter_tau);
  std::string filter_text;
  filter_text += "papercut-filter 1\n";
  filter_text += "tau_mm " + format_double(cfg.filter_tau) + "\n";
  filter_text += "usage " + format_double(sum.filter.usage) + "\n";
  filter_text += "kept " + std::to_string(sum.filter.kept.size()) + "\n";
  for (size_t i : sum.filter.kept) filter_text += "k " + trajs[i].id + "\n";
  filter_text += "dropped " + std::to_string(sum.filter.dropped.size()) + "\n";
  for (size_t i : sum.filter.dropped) filter_text += "d " + trajs[i].id + "\n";
  write_text_file(out_dir + "/filter.txt", filter_text);

  std::vector<TrialMetrics> trials;
  trials.reserve(trajs.size());
  for (const Trajectory& t : trajs) trials.push_back(t.metrics);
  sum.report = MetricReport::from_trials(std::move(trials));
  write_text_file(out_dir + "/report.txt", sum.report.to_table());
  return sum;
}

MetricReport eval_dataset(const std::string& directory) {
  const std::vector<Trajectory> trajs = read_dataset(directory);
  std::vector<TrialMetrics> trials;
  trials.reserve(trajs.size());
  for (const Trajectory& t : trajs) trials.push_back(t.metrics);
  return MetricReport::from_trials(std::move(trials));
}

}  // namespace papercut
