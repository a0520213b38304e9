/* fenceflow C API: dockless bike-sharing congestion analytics. */

#ifndef FENCEFLOW_H
#define FENCEFLOW_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes mirroring the CLI exit codes.
typedef enum FfStatus {
  FF_STATUS_OK = 0,
  FF_STATUS_INVALID_ARGUMENT = 1,
  FF_STATUS_CONFIG_ERROR = 2,
  FF_STATUS_INPUT_ERROR = 3,
  FF_STATUS_INTERNAL_ERROR = 4,
} FfStatus;

// Pipeline stage selector for `ff_pipeline_run`.
typedef enum FfCommand {
  FF_COMMAND_VALIDATE = 0,
  FF_COMMAND_TRIPS = 1,
  FF_COMMAND_CONGESTION = 2,
  FF_COMMAND_CLASSIFY = 3,
} FfCommand;

// Opaque pipeline handle.
typedef struct FfPipeline FfPipeline;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Version of the underlying library, as a static NUL-terminated string.
const char *ff_version(void);

// Great-circle distance in metres between two (lon, lat) positions.
double ff_haversine_m(double lon_a, double lat_a, double lon_b, double lat_b);

// Congestion density of one cell: (inflow - outflow) / capacity.
double ff_congestion_density(uint64_t inflow, uint64_t outflow, uint32_t capacity_pc);

// Polygon area in m² of a ring given as `n_vertices` (lon, lat) pairs in a
// flat array. The ring may omit the closing vertex.
//
// # Safety
// `coords` must point to `2 * n_vertices` readable doubles and `out_area`
// to a writable double.
enum FfStatus ff_polygon_area_m2(const double *coords, size_t n_vertices, double *out_area);

// Even-odd containment test (boundary counts as inside). Writes 1 or 0.
//
// # Safety
// `coords` must point to `2 * n_vertices` readable doubles and `out_inside`
// to a writable int.
enum FfStatus ff_point_in_polygon(double lon,
                                  double lat,
                                  const double *coords,
                                  size_t n_vertices,
                                  int32_t *out_inside);

// Parking capacity from fence area at `slot_area_m2` per slot.
uint32_t ff_capacity_from_area(double area_m2, double slot_area_m2);

// Creates a pipeline from a config JSON string (same schema as the CLI's
// `--config` file). On success writes the handle to `out_pipeline`.
//
// # Safety
// `config_json` must be a NUL-terminated string and `out_pipeline` a
// writable pointer slot. Free the handle with `ff_pipeline_free`.
enum FfStatus ff_pipeline_new(const char *config_json, struct FfPipeline **out_pipeline);

// Runs one pipeline command. Outputs land in the config's `out_dir`; the
// run manifest is written on success and failure alike.
//
// # Safety
// `pipeline` must be a live handle from `ff_pipeline_new`.
enum FfStatus ff_pipeline_run(struct FfPipeline *pipeline, enum FfCommand cmd);

// Last error message of this handle, or null when the last call succeeded.
// Valid until the next call on the handle.
//
// # Safety
// `pipeline` must be a live handle from `ff_pipeline_new`.
const char *ff_pipeline_last_error(const struct FfPipeline *pipeline);

// Frees a pipeline handle. Passing null is a no-op.
//
// # Safety
// `pipeline` must be null or a handle from `ff_pipeline_new`, not yet freed.
void ff_pipeline_free(struct FfPipeline *pipeline);

// Writes a seeded synthetic dataset (events, fences, POIs, transit, config,
// ground truth) into `out_dir`.
//
// # Safety
// `out_dir` must be a NUL-terminated path string.
enum FfStatus ff_synth(const char *out_dir,
                       uint64_t seed,
                       size_t fences,
                       size_t bikes,
                       size_t trips);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FENCEFLOW_H */
