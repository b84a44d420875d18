/* C interface to the metric relative pose library. */
#ifndef MRP_MRP_H
#define MRP_MRP_H

#include <stddef.h>
#include <stdint.h>

#if defined(MRP_BUILDING_LIBRARY)
#define MRP_API __attribute__((visibility("default")))
#else
#define MRP_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes double as process exit codes. */
typedef enum mrp_status {
  MRP_OK = 0,
  MRP_ERR_INTERNAL = 1,
  MRP_ERR_VALIDATION = 2,
  MRP_ERR_IO = 3,
  MRP_ERR_NUMERICAL = 4
} mrp_status;

typedef struct mrp_config mrp_config;
typedef struct mrp_scene mrp_scene;
typedef struct mrp_text mrp_text;

MRP_API const char* mrp_version(void);
/* Message of the last failing call on this thread; "" when none. */
MRP_API const char* mrp_last_error(void);

/* Text handles carry command output (tables, summaries, JSON). */
MRP_API const char* mrp_text_data(const mrp_text* text);
MRP_API void mrp_text_destroy(mrp_text* text);

/* Defaults, then the JSON file at `path` (NULL for none), then "key=value"
 * overrides. `default_seed` (may be NULL) replaces the built-in seed before
 * the file and overrides are applied. */
MRP_API mrp_status mrp_config_create(const char* path, const char* const* overrides, size_t override_count,
                                     const uint64_t* default_seed, mrp_config** out);
MRP_API void mrp_config_destroy(mrp_config* cfg);
MRP_API mrp_status mrp_config_json(const mrp_config* cfg, mrp_text** out);
MRP_API uint64_t mrp_config_seed(const mrp_config* cfg);

/* Scene `index` of the run described by `cfg`. */
MRP_API mrp_status mrp_scene_generate(const mrp_config* cfg, int index, mrp_scene** out);
MRP_API mrp_status mrp_scene_load(const char* path, mrp_scene** out);
MRP_API mrp_status mrp_scene_save(const mrp_scene* scene, const char* path);
MRP_API void mrp_scene_destroy(mrp_scene* scene);
MRP_API size_t mrp_scene_point_count(const mrp_scene* scene);
/* Row-major rotation then translation. */
MRP_API void mrp_scene_gt_relative(const mrp_scene* scene, double pose[12]);
/* Test-time estimate. *has_estimate is 0 when no hypothesis survived. */
MRP_API mrp_status mrp_scene_solve(const mrp_config* cfg, const mrp_scene* scene, double pose[12],
                                   double* confidence, int* has_estimate);

/* Weighted rigid alignment of n >= 3 point pairs (xyz interleaved).
 * `weights` may be NULL for uniform weights. */
MRP_API mrp_status mrp_kabsch(const double* source, const double* target, const double* weights, size_t n,
                              double pose[12]);
/* VCRE in pixels of `estimate` against `truth` on the default virtual grid. */
MRP_API mrp_status mrp_vcre(const double estimate[12], const double truth[12], const double intrinsics[4],
                            double* value);

/* Command-line workflows. `summary` may be NULL. */
MRP_API mrp_status mrp_generate(const mrp_config* cfg, const char* out_dir, mrp_text** summary);
MRP_API mrp_status mrp_solve(const mrp_config* cfg, const char* manifest, const char* out_estimates,
                             mrp_text** summary);
/* `resume` is a checkpoint path or NULL. */
MRP_API mrp_status mrp_train(const mrp_config* cfg, const char* out_dir, const char* resume, mrp_text** summary);
MRP_API mrp_status mrp_eval(const mrp_config* cfg, const char* estimates, const char* ground_truth,
                            const char* out_report, const char* out_curve, mrp_text** summary);
/* Returns MRP_ERR_NUMERICAL when any suite fails; the table is filled either way. */
MRP_API mrp_status mrp_gradcheck(const mrp_config* cfg, mrp_text** table);

#ifdef __cplusplus
}
#endif

#endif
