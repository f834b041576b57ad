#ifndef SPATIALQA_H
#define SPATIALQA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SqaStatus {
  SQA_STATUS_OK = 0,
  SQA_STATUS_NULL_ARGUMENT = 1,
  SQA_STATUS_INVALID_UTF8 = 2,
  SQA_STATUS_INVALID_INPUT = 3,
  SQA_STATUS_INVALID_GEOMETRY = 4,
  SQA_STATUS_EVALUATION = 5,
  SQA_STATUS_DUPLICATE_QID = 6,
  SQA_STATUS_PANIC = 7,
} SqaStatus;

// Opaque scene handle: metadata, scene graph, and optional point cloud.
typedef struct SqaScene SqaScene;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or NULL. Valid until the
// next call into this library on the same thread.
const char *sqa_last_error_message(void);

// Library version as a static nul-terminated string.
const char *sqa_version(void);

// Releases a string returned by this library. NULL is ignored.
//
// # Safety
// `s` must come from this library and not be freed twice.
void sqa_string_free(char *s);

// Loads a scene directory (`scene_metadata.json`, `frame_metadata.json`,
// optional `cloud.ply`).
//
// # Safety
// `dir` must be a nul-terminated string; `out` must be writable.
enum SqaStatus sqa_scene_load(const char *dir, struct SqaScene **out);

// Releases a scene. NULL is ignored.
//
// # Safety
// `scene` must come from [`sqa_scene_load`] and not be freed twice.
void sqa_scene_free(struct SqaScene *scene);

// Number of objects in the scene, or 0 for NULL.
//
// # Safety
// `scene` must be NULL or a live handle.
uintptr_t sqa_scene_object_count(const struct SqaScene *scene);

// Number of frames in the scene, or 0 for NULL.
//
// # Safety
// `scene` must be NULL or a live handle.
uintptr_t sqa_scene_frame_count(const struct SqaScene *scene);

// Generates every task family for the scene with default thresholds and
// writes record JSONL (no header line) to `out_jsonl`.
//
// # Safety
// `scene` must be a live handle; `out_jsonl` must be writable.
enum SqaStatus sqa_scene_generate_jsonl(const struct SqaScene *scene,
                                        uint64_t seed,
                                        uintptr_t max_per_task,
                                        char **out_jsonl);

// Mean relative accuracy of `pred` against a positive `truth`.
//
// # Safety
// `out` must be writable.
enum SqaStatus sqa_mra(double pred, double truth, double *out);

// Minimum distance between two solid oriented boxes, each given as 10
// doubles: center xyz, size xyz, unit quaternion wxyz.
//
// # Safety
// `a` and `b` must point to 10 doubles; `out` must be writable.
enum SqaStatus sqa_box_box_distance(const double *a, const double *b, double *out);

// Scores prediction JSONL (`{"qid", "raw_text"}` per line) against record
// JSONL and writes the JSON report to `out_report`. Overall is the mean of
// per-task scores unless `per_question` is nonzero.
//
// # Safety
// Both inputs must be nul-terminated strings; `out_report` must be writable.
enum SqaStatus sqa_evaluate_jsonl(const char *records_jsonl,
                                  const char *predictions_jsonl,
                                  int32_t per_question,
                                  char **out_report);

// Per-task record counts of record JSONL as a JSON object.
//
// # Safety
// `records_jsonl` must be a nul-terminated string; `out_json` must be writable.
enum SqaStatus sqa_task_counts_json(const char *records_jsonl, char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPATIALQA_H */
