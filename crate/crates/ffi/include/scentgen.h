#ifndef SCENTGEN_H
#define SCENTGEN_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum {
  SCENTGEN_STATUS_OK = 0,
  SCENTGEN_STATUS_NULL_POINTER = 1,
  SCENTGEN_STATUS_INVALID_UTF8 = 2,
  SCENTGEN_STATUS_BAD_INPUT = 3,
  SCENTGEN_STATUS_DIVERGED = 4,
  SCENTGEN_STATUS_VALIDATION_FAILED = 5,
  SCENTGEN_STATUS_INTERNAL = 6,
} ScentgenStatus;

/**
 * A loaded model ready for sampling.
 */
typedef struct ScentgenGenerator ScentgenGenerator;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static string owned by the library.
 */
const char *scentgen_version(void);

/**
 * Copy of the calling thread's last error message, or null if the last call
 * succeeded. Free with [`scentgen_string_free`].
 */
char *scentgen_last_error(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` is null or a pointer previously returned by this library and not yet freed.
 */
void scentgen_string_free(char *s);

/**
 * Canonical SMILES of `smiles_in`.
 *
 * # Safety
 * `smiles_in` is a NUL-terminated string; `out` is valid for writes.
 */
ScentgenStatus scentgen_canonicalize(const char *smiles_in, char **out);

/**
 * Runs the validation pipeline on one SMILES string. `report_json` receives
 * the per-stage report; `passed` is set to 1 or 0. A molecule that fails
 * validation is not an error.
 *
 * # Safety
 * `smiles_in` is a NUL-terminated string; `passed` and `report_json` are valid for writes.
 */
ScentgenStatus scentgen_validate_smiles(const char *smiles_in, int32_t *passed, char **report_json);

/**
 * Trains on a `smiles,descriptors` CSV and writes a checkpoint and, if
 * `metrics_path` is non-null, the per-epoch metrics CSV. `config_json` may be
 * null for defaults.
 *
 * # Safety
 * String arguments are null (where allowed) or NUL-terminated.
 */
ScentgenStatus scentgen_train(const char *dataset_path,
                              const char *config_json,
                              const char *checkpoint_path,
                              const char *metrics_path);

/**
 * Loads a checkpoint. Sampling settings default to the checkpoint's training
 * config and can be replaced with [`scentgen_generator_configure`].
 *
 * # Safety
 * `checkpoint_path` is NUL-terminated; `out` is valid for writes.
 */
ScentgenStatus scentgen_generator_load(const char *checkpoint_path, ScentgenGenerator **out);

/**
 * Replaces the sampling settings with a JSON generation config.
 *
 * # Safety
 * `generator` is a live handle; `config_json` is NUL-terminated.
 */
ScentgenStatus scentgen_generator_configure(ScentgenGenerator *generator, const char *config_json);

/**
 * Samples for a query `{"descriptors": [...], "count": n}` and returns the
 * reports as JSONL (empty for `count` 0).
 *
 * # Safety
 * `generator` is a live handle; `query_json` is NUL-terminated; `out_jsonl` is valid for writes.
 */
ScentgenStatus scentgen_generate(const ScentgenGenerator *generator,
                                 const char *query_json,
                                 char **out_jsonl);

/**
 * Releases a generator. Null is ignored.
 *
 * # Safety
 * `generator` is null or a handle from [`scentgen_generator_load`] not yet freed.
 */
void scentgen_generator_free(ScentgenGenerator *generator);

/**
 * Chooses sensors for a scenario JSON and returns the selection as JSON.
 * `mode` is a [`ScentgenSelectMode`] value.
 *
 * # Safety
 * `scenario_json` is NUL-terminated; `out_json` is valid for writes.
 */
ScentgenStatus scentgen_select_sensors(const char *scenario_json, int32_t mode, char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SCENTGEN_H */
