#include "papercut/papercut.h"

#include <cstring>
#include <new>
#include <string>
#include <vector>

#include "core/config.hpp"
#include "core/error.hpp"
#include "core/mesh_io.hpp"
#include "core/pipeline.hpp"
#include "core/rng.hpp"
#include "core/selftest.hpp"
#include "core/tracks.hpp"

using namespace papercut;

// Handle bodies. The typedef names in the public header refer to these
// definitions, so handles stay type-safe inside the library.
struct pcut_config {
  ConfigMap map;
};
struct pcut_curve {
  CurveSpec spec;
};
struct pcut_trajectory {
  Trajectory traj;
};
struct pcut_dataset {
  std::vector<pcut_trajectory> episodes;
};

namespace {

thread_local std::string g_last_error;

pcut_status code_to_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::Ok: return PCUT_OK;
    case ErrorCode::InvalidArgument: return PCUT_ERR_INVALID_ARGUMENT;
    case ErrorCode::Domain: return PCUT_ERR_DOMAIN;
    case ErrorCode::Parse: return PCUT_ERR_PARSE;
    case ErrorCode::Io: return PCUT_ERR_IO;
    case ErrorCode::Topology: return PCUT_ERR_TOPOLOGY;
    case ErrorCode::Degenerate: return PCUT_ERR_DEGENERATE;
    case ErrorCode::EmptyCrop: return PCUT_ERR_EMPTY_CROP;
    case ErrorCode::Generation: return PCUT_ERR_GENERATION;
    case ErrorCode::Internal: return PCUT_ERR_INTERNAL;
  }
  return PCUT_ERR_INTERNAL;
}

// Runs `body`, translating exceptions into status codes + the thread-local
// message.
template <typename Fn>
pcut_status guarded(Fn&& body) {
  try {
    body();
    g_last_error.clear();
    return PCUT_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return code_to_status(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return PCUT_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return PCUT_ERR_INTERNAL;
  }
}

pcut_status require(bool cond, const char* message) {
  if (cond) return PCUT_OK;
  g_last_error = message;
  return PCUT_ERR_INVALID_ARGUMENT;
}

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* pcut_version(void) { return "1.0.0"; }

const char* pcut_last_error(void) { return g_last_error.c_str(); }

uint64_t pcut_derive_seed(uint64_t master, uint64_t stream) {
  return derive_seed(master, stream);
}

void pcut_string_free(char* s) { delete[] s; }

void pcut_buffer_free(double* p) { delete[] p; }

pcut_status pcut_config_create(pcut_config** out) {
  if (pcut_status st = require(out != nullptr, "out pointer is null")) return st;
  return guarded([&] { *out = new pcut_config{ConfigMap::defaults()}; });
}

pcut_status pcut_config_load(const char* path, pcut_config** out) {
  if (pcut_status st = require(out && path, "path or out pointer is null")) return st;
  return guarded([&] { *out = new pcut_config{ConfigMap::load(path)}; });
}

pcut_status pcut_config_set(pcut_config* cfg, const char* key, const char* value) {
  if (pcut_status st = require(cfg && key && value, "config, key, or value is null")) return st;
  return guarded([&] { cfg->map.set(key, value); });
}

pcut_status pcut_config_get(const pcut_config* cfg, const char* key, char** out_value) {
  if (pcut_status st = require(cfg && key && out_value, "config, key, or out pointer is null")) {
    return st;
  }
  return guarded([&] { *out_value = dup_string(cfg->map.get_string(key)); });
}

void pcut_config_destroy(pcut_config* cfg) { delete cfg; }

pcut_status pcut_curve_generate(const pcut_config* cfg, const char* kind, uint64_t seed,
                                pcut_curve** out) {
  if (pcut_status st = require(cfg && kind && out, "config, kind, or out pointer is null")) {
    return st;
  }
  return guarded([&] {
    const TrackKind tk = track_kind_from_name(kind);
    const double w = cfg->map.get_double("paper.width");
    const double h = cfg->map.get_double("paper.height");
    *out = new pcut_curve{gen_track(tk, w, h, seed)};
  });
}

pcut_status pcut_curve_load(const char* path, pcut_curve** out) {
  if (pcut_status st = require(path && out, "path or out pointer is null")) return st;
  return guarded([&] { *out = new pcut_curve{CurveSpec::parse_file(path)}; });
}

pcut_status pcut_curve_save(const pcut_curve* curve, const char* path) {
  if (pcut_status st = require(curve && path, "curve or path is null")) return st;
  return guarded([&] { curve->spec.save(path); });
}

pcut_status pcut_curve_kind(const pcut_curve* curve, const char** out_kind) {
  if (pcut_status st = require(curve && out_kind, "curve or out pointer is null")) return st;
  *out_kind = track_kind_name(curve->spec.kind);
  return PCUT_OK;
}

void pcut_curve_destroy(pcut_curve* curve) { delete curve; }

pcut_status pcut_run_episode(const pcut_config* cfg, const pcut_curve* curve, uint64_t seed,
                             pcut_trajectory** out) {
  if (pcut_status st = require(cfg && curve && out, "config, curve, or out pointer is null")) {
    return st;
  }
  return guarded([&] {
    const PipelineConfig pc = PipelineConfig::from_config(cfg->map);
    *out = new pcut_trajectory{run_episode(curve->spec, pc, seed)};
  });
}

pcut_status pcut_trajectory_save(pcut_trajectory* t, const char* directory) {
  if (pcut_status st = require(t && directory, "trajectory or directory is null")) return st;
  return guarded([&] {
    std::vector<Trajectory> one;
    one.push_back(t->traj);
    write_dataset(one, directory);
    t->traj.id = one[0].id;  // keep any assigned id
  });
}

pcut_status pcut_trajectory_id(const pcut_trajectory* t, const char** out_id) {
  if (pcut_status st = require(t && out_id, "trajectory or out pointer is null")) return st;
  *out_id = t->traj.id.c_str();
  return PCUT_OK;
}

pcut_status pcut_trajectory_status(const pcut_trajectory* t, const char** out_status) {
  if (pcut_status st = require(t && out_status, "trajectory or out pointer is null")) return st;
  *out_status = t->traj.status.c_str();
  return PCUT_OK;
}

pcut_status pcut_trajectory_chamfer_mm(const pcut_trajectory* t, double* out) {
  if (pcut_status st = require(t && out, "trajectory or out pointer is null")) return st;
  *out = t->traj.metrics.chamfer_mm;
  return PCUT_OK;
}

pcut_status pcut_trajectory_iou(const pcut_trajectory* t, double* out, int* out_has) {
  if (pcut_status st = require(t && out && out_has, "trajectory or out pointer is null")) {
    return st;
  }
  *out = t->traj.metrics.iou;
  *out_has = t->traj.metrics.has_iou ? 1 : 0;
  return PCUT_OK;
}

pcut_status pcut_trajectory_step_count(const pcut_trajectory* t, size_t* out) {
  if (pcut_status st = require(t && out, "trajectory or out pointer is null")) return st;
  *out = t->traj.steps.size();
  return PCUT_OK;
}

pcut_status pcut_trajectory_frame_count(const pcut_trajectory* t, size_t* out) {
  if (pcut_status st = require(t && out, "trajectory or out pointer is null")) return st;
  *out = t->traj.frames.size();
  return PCUT_OK;
}

pcut_status pcut_trajectory_cut_polyline(const pcut_trajectory* t, const double** out_uv,
                                         size_t* out_count) {
  if (pcut_status st = require(t && out_uv && out_count, "trajectory or out pointer is null")) {
    return st;
  }
  *out_uv = t->traj.final_cut.empty()
                ? nullptr
                : reinterpret_cast<const double*>(t->traj.final_cut.data());
  *out_count = t->traj.final_cut.size();
  return PCUT_OK;
}

pcut_status pcut_trajectory_target_polyline(const pcut_trajectory* t, int samples,
                                            double** out_uv, size_t* out_count) {
  if (pcut_status st = require(t && out_uv && out_count, "trajectory or out pointer is null")) {
    return st;
  }
  if (pcut_status st = require(samples >= 1, "samples must be at least 1")) return st;
  return guarded([&] {
    const std::vector<Vec2> poly = t->traj.curve.target_polyline(samples);
    double* buf = new double[2 * poly.size()];
    for (size_t i = 0; i < poly.size(); ++i) {
      buf[2 * i] = poly[i].x();
      buf[2 * i + 1] = poly[i].y();
    }
    *out_uv = buf;
    *out_count = poly.size();
  });
}

pcut_status pcut_trajectory_frame(const pcut_trajectory* t, size_t index,
                                  const double** out_xyz, const uint8_t** out_labels,
                                  const uint8_t** out_on_curve, size_t* out_count) {
  if (pcut_status st = require(t && out_xyz && out_labels && out_on_curve && out_count,
                               "trajectory or out pointer is null")) {
    return st;
  }
  if (index >= t->traj.frames.size()) {
    g_last_error = "frame index out of range";
    return PCUT_ERR_INVALID_ARGUMENT;
  }
  const ObservationFrame& fr = t->traj.frames[index];
  *out_xyz = fr.points.empty() ? nullptr : reinterpret_cast<const double*>(fr.points.data());
  *out_labels = fr.labels.empty() ? nullptr : fr.labels.data();
  *out_on_curve = fr.on_curve.empty() ? nullptr : fr.on_curve.data();
  *out_count = fr.points.size();
  return PCUT_OK;
}

pcut_status pcut_trajectory_replay_mesh(const pcut_config* cfg, const pcut_trajectory* t,
                                        int step, char** out_mesh_text) {
  if (pcut_status st = require(cfg && t && out_mesh_text,
                               "config, trajectory, or out pointer is null")) {
    return st;
  }
  return guarded([&] {
    const PipelineConfig pc = PipelineConfig::from_config(cfg->map);
    const int limit = step < 0 ? -1 : step + 1;
    const PaperMesh mesh = replay_episode_mesh(t->traj, pc, limit);
    *out_mesh_text = dup_string(serialize_mesh(mesh));
  });
}

void pcut_trajectory_destroy(pcut_trajectory* t) { delete t; }

pcut_status pcut_generate_dataset(const pcut_config* cfg, int count, uint64_t seed,
                                  const char* out_dir, double* out_usage,
                                  double* out_median_chamfer_mm, int* out_failed) {
  if (pcut_status st = require(cfg && out_dir, "config or out_dir is null")) return st;
  return guarded([&] {
    const PipelineConfig pc = PipelineConfig::from_config(cfg->map);
    const DatasetSummary sum = generate_dataset(pc, count, seed, out_dir);
    if (out_usage) *out_usage = sum.filter.usage;
    if (out_median_chamfer_mm) *out_median_chamfer_mm = sum.report.chamfer_mm_median;
    if (out_failed) *out_failed = sum.failed;
  });
}

pcut_status pcut_dataset_open(const char* directory, pcut_dataset** out) {
  if (pcut_status st = require(directory && out, "directory or out pointer is null")) return st;
  return guarded([&] {
    std::vector<Trajectory> trajs = read_dataset(directory);
    auto* d = new pcut_dataset;
    d->episodes.reserve(trajs.size());
    for (Trajectory& t : trajs) d->episodes.push_back(pcut_trajectory{std::move(t)});
    *out = d;
  });
}

pcut_status pcut_dataset_size(const pcut_dataset* d, size_t* out) {
  if (pcut_status st = require(d && out, "dataset or out pointer is null")) return st;
  *out = d->episodes.size();
  return PCUT_OK;
}

pcut_status pcut_dataset_trajectory(const pcut_dataset* d, size_t index,
                                    const pcut_trajectory** out) {
  if (pcut_status st = require(d && out, "dataset or out pointer is null")) return st;
  if (index >= d->episodes.size()) {
    g_last_error = "episode index out of range";
    return PCUT_ERR_INVALID_ARGUMENT;
  }
  *out = &d->episodes[index];
  return PCUT_OK;
}

pcut_status pcut_dataset_filter_usage(const pcut_dataset* d, double tau_mm, double* out_usage) {
  if (pcut_status st = require(d && out_usage, "dataset or out pointer is null")) return st;
  return guarded([&] {
    std::vector<Trajectory> view;
    view.reserve(d->episodes.size());
    for (const pcut_trajectory& t : d->episodes) view.push_back(t.traj);
    *out_usage = filter_demos(view, tau_mm).usage;
  });
}

pcut_status pcut_dataset_report(const pcut_dataset* d, char** out_table) {
  if (pcut_status st = require(d && out_table, "dataset or out pointer is null")) return st;
  return guarded([&] {
    std::vector<TrialMetrics> trials;
    trials.reserve(d->episodes.size());
    for (const pcut_trajectory& t : d->episodes) trials.push_back(t.traj.metrics);
    *out_table = dup_string(MetricReport::from_trials(std::move(trials)).to_table());
  });
}

void pcut_dataset_destroy(pcut_dataset* d) { delete d; }

pcut_status pcut_selftest(int verbose, int* out_failures) {
  if (pcut_status st = require(out_failures != nullptr, "out pointer is null")) return st;
  return guarded([&] { *out_failures = run_selftest(verbose != 0); });
}

}  // extern "C"
