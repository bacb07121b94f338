/*
 * C interface for the gcnlab graph-learning library.
 *
 * All functions returning GcnStatus report failure details through
 * gcnlab_last_error_message(). Pointers handed out by this library must be
 * released with the matching gcnlab_*_free function.
 */

#ifndef GCNLAB_H
#define GCNLAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Status code returned by every fallible API call.
//
// The non-success codes mirror the `gcnlab` CLI exit codes (configuration,
// data/IO, shape) plus ABI-specific conditions.
typedef enum GcnStatus {
  // The call succeeded.
  GCN_STATUS_OK = 0,
  // Invalid configuration (bad hyperparameters, malformed config JSON).
  GCN_STATUS_CONFIG_ERROR = 1,
  // Missing or malformed data, or an I/O failure.
  GCN_STATUS_DATA_ERROR = 2,
  // Dimension mismatch or an operation on invalid values.
  GCN_STATUS_SHAPE_ERROR = 3,
  // A required pointer argument was null.
  GCN_STATUS_NULL_POINTER = 4,
  // A string argument was not valid UTF-8.
  GCN_STATUS_INVALID_UTF8 = 5,
  // An internal panic was caught at the ABI boundary.
  GCN_STATUS_PANIC = 6,
} GcnStatus;

// Opaque handle to a loaded or generated dataset.
typedef struct GcnDataset GcnDataset;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string. Never null; do not
// free.
const char *gcnlab_version(void);

// Description of the most recent failure on the calling thread.
//
// The pointer is valid until the next gcnlab call on the same thread; the
// content is only meaningful immediately after a call returned a
// non-success status. Never null; do not free.
const char *gcnlab_last_error_message(void);

// Load a dataset bundle directory into a new handle.
//
// On success writes the handle to `out`; release it with
// [`gcnlab_dataset_free`].
//
// # Safety
// `dir` must be null or a valid NUL-terminated string; `out` must be null
// or a valid pointer.
enum GcnStatus gcnlab_dataset_load(const char *dir, struct GcnDataset **out);

// Generate a stochastic block model dataset, matching the CLI's
// `gen-sbm --seed` behavior for the same parameters and seed.
//
// # Safety
// `out` must be null or a valid pointer.
enum GcnStatus gcnlab_dataset_generate_sbm(uintptr_t blocks,
                                           uintptr_t nodes_per_block,
                                           double p_in,
                                           double p_out,
                                           uintptr_t feature_dim,
                                           double feature_noise,
                                           uint64_t seed,
                                           struct GcnDataset **out);

// Write a dataset handle to a bundle directory (created if needed).
//
// # Safety
// `ds` must be null or a handle obtained from this library; `dir` must be
// null or a valid NUL-terminated string.
enum GcnStatus gcnlab_dataset_save(const struct GcnDataset *ds, const char *dir);

// Basic shape information for a dataset handle. Out-pointers may be null
// to skip a field.
//
// # Safety
// `ds` must be null or a handle obtained from this library; out-pointers
// must each be null or valid.
enum GcnStatus gcnlab_dataset_info(const struct GcnDataset *ds,
                                   uintptr_t *num_nodes,
                                   uintptr_t *feature_dim,
                                   uintptr_t *num_classes,
                                   uintptr_t *num_edges);

// Release a dataset handle. Null is ignored.
//
// # Safety
// `ds` must be null or a handle obtained from this library, not yet freed.
void gcnlab_dataset_free(struct GcnDataset *ds);

// Run one training job described by a JSON run configuration (the same
// schema the CLI accepts) and return the resulting run record as JSON.
//
// On success `*out_record_json` holds a NUL-terminated JSON document owned
// by the caller; release it with [`gcnlab_string_free`].
//
// # Safety
// `config_json` must be null or a valid NUL-terminated string;
// `out_record_json` must be null or a valid pointer.
enum GcnStatus gcnlab_train_json(const char *config_json, char **out_record_json);

// Release a string returned by this library. Null is ignored.
//
// # Safety
// `s` must be null or a string obtained from this library, not yet freed.
void gcnlab_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GCNLAB_H */
