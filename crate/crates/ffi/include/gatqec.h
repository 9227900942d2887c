#ifndef GATQEC_H
#define GATQEC_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum GqStatus {
  GQ_STATUS_OK = 0,
  GQ_STATUS_NULL_POINTER = 1,
  GQ_STATUS_INVALID_ARGUMENT = 2,
  GQ_STATUS_PARSE = 3,
  GQ_STATUS_VALIDATION = 4,
  GQ_STATUS_DIMENSION = 5,
  GQ_STATUS_CAPACITY = 6,
  GQ_STATUS_UNSUPPORTED = 7,
  GQ_STATUS_IO = 8,
  GQ_STATUS_CHECKPOINT = 9,
  GQ_STATUS_INTERNAL = 10,
} GqStatus;

// A matching decoder built from a detector error model.
typedef struct GqDecoder GqDecoder;

// A parsed detector error model with its time-flattened layout.
typedef struct GqDem GqDem;

// A trained network bound to the layout it predicts on.
typedef struct GqModel GqModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null if none.
// The pointer stays valid until the next failing call on the same thread.
const char *gq_last_error_message(void);

// Forgets the stored error message of this thread.
void gq_clear_error(void);

// Library version as a static NUL-terminated string.
const char *gq_version(void);

// Parses detector error model text. Layout extraction may fail without
// failing the parse; layout queries then report the reason.
enum GqStatus gq_dem_parse(const char *text, struct GqDem **out);

void gq_dem_free(struct GqDem *dem);

// Detector, observable and mechanism counts; any output may be null.
enum GqStatus gq_dem_counts(const struct GqDem *dem,
                            size_t *n_detectors,
                            size_t *n_observables,
                            size_t *n_mechanisms);

// Spatial node count, round count and complete-graph edge count.
enum GqStatus gq_dem_layout(const struct GqDem *dem,
                            size_t *n_nodes,
                            size_t *n_rounds,
                            size_t *n_edges);

// Writes the endpoints (`2 * n_edges` values, `i < j`) and teacher
// probabilities (`n_edges` values) of the layout edges. `len` is `n_edges`.
enum GqStatus gq_dem_teacher_probs(const struct GqDem *dem,
                                   size_t *endpoints,
                                   double *probs,
                                   size_t len);

// Samples `n_shots` shots into `detections` (`n_shots * n_detectors`
// bytes) and `observables` (`n_shots * n_observables` bytes).
enum GqStatus gq_sample(const struct GqDem *dem,
                        size_t n_shots,
                        uint64_t seed,
                        uint8_t *detections,
                        size_t detections_len,
                        uint8_t *observables,
                        size_t observables_len);

// Unpacks b8 data (`len` bytes, `n_bits` per shot) into `out`, which holds
// `capacity` bytes. The shot count is written to `n_shots`.
enum GqStatus gq_b8_unpack(const uint8_t *data,
                           size_t len,
                           size_t n_bits,
                           uint8_t *out,
                           size_t capacity,
                           size_t *n_shots);

// Builds the matching decoder of a model.
enum GqStatus gq_mwpm_new(const struct GqDem *dem, struct GqDecoder **out);

void gq_mwpm_free(struct GqDecoder *decoder);

// Decodes one syndrome (`len` = detector count) into an observable bitmask.
enum GqStatus gq_mwpm_decode(const struct GqDecoder *decoder,
                             const uint8_t *syndrome,
                             size_t len,
                             uint64_t *observables);

// Loads a checkpoint and binds it to the layout of `dem`.
enum GqStatus gq_model_load(const char *path, const struct GqDem *dem, struct GqModel **out);

void gq_model_free(struct GqModel *model);

// Graph logit of one syndrome (`len` = detector count); positive predicts
// a flip. `edge_logits` may be null, otherwise it receives `n_edges` values.
enum GqStatus gq_model_predict(const struct GqModel *model,
                               const uint8_t *syndrome,
                               size_t len,
                               double *logit,
                               double *edge_logits,
                               size_t n_edges);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GATQEC_H */
