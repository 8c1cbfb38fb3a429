/* Paper-cutting simulation engine: C interface to the papercut shared
 * library. All functions returning pcut_status set the thread-local message
 * readable via pcut_last_error() on failure. Handles are opaque; destroy
 * owned handles with their matching *_destroy function. */
#ifndef PAPERCUT_H
#define PAPERCUT_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define PCUT_API __declspec(dllexport)
#else
#define PCUT_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pcut_status {
  PCUT_OK = 0,
  PCUT_ERR_INVALID_ARGUMENT = 1,
  PCUT_ERR_DOMAIN = 2,
  PCUT_ERR_PARSE = 3,
  PCUT_ERR_IO = 4,
  PCUT_ERR_TOPOLOGY = 5,
  PCUT_ERR_DEGENERATE = 6,
  PCUT_ERR_EMPTY_CROP = 7,
  PCUT_ERR_GENERATION = 8,
  PCUT_ERR_INTERNAL = 9
} pcut_status;

typedef struct pcut_config pcut_config;         /* key-value configuration */
typedef struct pcut_curve pcut_curve;           /* target curve pattern */
typedef struct pcut_trajectory pcut_trajectory; /* one executed episode */
typedef struct pcut_dataset pcut_dataset;       /* episodes read from disk */

PCUT_API const char* pcut_version(void);

/* Message for the most recent failure on the calling thread ("" if none). */
PCUT_API const char* pcut_last_error(void);

/* Stable child-seed derivation for keying independent streams. */
PCUT_API uint64_t pcut_derive_seed(uint64_t master, uint64_t stream);

/* Frees strings returned through char** out parameters. */
PCUT_API void pcut_string_free(char* s);
/* Frees numeric buffers returned through double** out parameters. */
PCUT_API void pcut_buffer_free(double* p);

/* ---- configuration ---- */
PCUT_API pcut_status pcut_config_create(pcut_config** out);
PCUT_API pcut_status pcut_config_load(const char* path, pcut_config** out);
PCUT_API pcut_status pcut_config_set(pcut_config* cfg, const char* key, const char* value);
PCUT_API pcut_status pcut_config_get(const pcut_config* cfg, const char* key, char** out_value);
PCUT_API void pcut_config_destroy(pcut_config* cfg);

/* ---- curves ---- */
/* kind: "easy" | "middle" | "hard"; paper size comes from the config. */
PCUT_API pcut_status pcut_curve_generate(const pcut_config* cfg, const char* kind,
                                         uint64_t seed, pcut_curve** out);
PCUT_API pcut_status pcut_curve_load(const char* path, pcut_curve** out);
PCUT_API pcut_status pcut_curve_save(const pcut_curve* curve, const char* path);
PCUT_API pcut_status pcut_curve_kind(const pcut_curve* curve, const char** out_kind);
PCUT_API void pcut_curve_destroy(pcut_curve* curve);

/* ---- episodes ---- */
PCUT_API pcut_status pcut_run_episode(const pcut_config* cfg, const pcut_curve* curve,
                                      uint64_t seed, pcut_trajectory** out);
/* Writes the trajectory as a single-episode dataset under `directory`. */
PCUT_API pcut_status pcut_trajectory_save(pcut_trajectory* t, const char* directory);
PCUT_API pcut_status pcut_trajectory_id(const pcut_trajectory* t, const char** out_id);
PCUT_API pcut_status pcut_trajectory_status(const pcut_trajectory* t, const char** out_status);
PCUT_API pcut_status pcut_trajectory_chamfer_mm(const pcut_trajectory* t, double* out);
/* out_has is 0 when the episode's pattern has no region-overlap metric. */
PCUT_API pcut_status pcut_trajectory_iou(const pcut_trajectory* t, double* out, int* out_has);
PCUT_API pcut_status pcut_trajectory_step_count(const pcut_trajectory* t, size_t* out);
PCUT_API pcut_status pcut_trajectory_frame_count(const pcut_trajectory* t, size_t* out);
/* Realized cut polyline; borrowed view, 2 doubles (u, v) per point. */
PCUT_API pcut_status pcut_trajectory_cut_polyline(const pcut_trajectory* t,
                                                  const double** out_uv, size_t* out_count);
/* Target curve resampled to `samples` segments; caller frees with
 * pcut_buffer_free. 2 doubles per point, samples + 1 points. */
PCUT_API pcut_status pcut_trajectory_target_polyline(const pcut_trajectory* t, int samples,
                                                     double** out_uv, size_t* out_count);
/* Stored observation frame `index`; borrowed views, 3 doubles per point. */
PCUT_API pcut_status pcut_trajectory_frame(const pcut_trajectory* t, size_t index,
                                           const double** out_xyz, const uint8_t** out_labels,
                                           const uint8_t** out_on_curve, size_t* out_count);
/* Re-executes the episode through primitive `step` (inclusive; -1 for the
 * whole episode) and returns the final sheet mesh in the plain-text mesh
 * format. Caller frees with pcut_string_free. */
PCUT_API pcut_status pcut_trajectory_replay_mesh(const pcut_config* cfg,
                                                 const pcut_trajectory* t, int step,
                                                 char** out_mesh_text);
PCUT_API void pcut_trajectory_destroy(pcut_trajectory* t);

/* ---- datasets ---- */
/* Generates `count` episodes under out_dir. Optional outputs (pass NULL to
 * skip): kept fraction at the configured filter threshold, median chamfer
 * in millimeters, failed-episode count. */
PCUT_API pcut_status pcut_generate_dataset(const pcut_config* cfg, int count, uint64_t seed,
                                           const char* out_dir, double* out_usage,
                                           double* out_median_chamfer_mm, int* out_failed);
PCUT_API pcut_status pcut_dataset_open(const char* directory, pcut_dataset** out);
PCUT_API pcut_status pcut_dataset_size(const pcut_dataset* d, size_t* out);
/* Borrowed handle, valid while the dataset lives; do not destroy it. */
PCUT_API pcut_status pcut_dataset_trajectory(const pcut_dataset* d, size_t index,
                                             const pcut_trajectory** out);
/* Kept fraction of episodes with chamfer at or below tau_mm. */
PCUT_API pcut_status pcut_dataset_filter_usage(const pcut_dataset* d, double tau_mm,
                                               double* out_usage);
/* Metric summary table; caller frees with pcut_string_free. */
PCUT_API pcut_status pcut_dataset_report(const pcut_dataset* d, char** out_table);
PCUT_API void pcut_dataset_destroy(pcut_dataset* d);

/* ---- diagnostics ---- */
/* Runs the built-in invariant suites; failure count through out_failures. */
PCUT_API pcut_status pcut_selftest(int verbose, int* out_failures);

#ifdef __cplusplus
}
#endif

#endif /* PAPERCUT_H */
