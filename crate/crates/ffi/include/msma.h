#ifndef MSMA_H
#define MSMA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Agents scored by [`msma_evaluate`].
 */
typedef enum MsmaCohort {
  MSMA_COHORT_ALL = 0,
  /**
   * Inside the sensing range.
   */
  MSMA_COHORT_SENSING = 1,
  /**
   * Broadcasting their own trajectories.
   */
  MSMA_COHORT_CONNECTED = 2,
} MsmaCohort;

/**
 * Fusion applied to agents seen by both sensors and broadcasts.
 */
typedef enum MsmaFusion {
  MSMA_FUSION_FULL = 0,
  MSMA_FUSION_SENSOR_ONLY = 1,
  MSMA_FUSION_COMM_ONLY = 2,
} MsmaFusion;

/**
 * Result of every fallible call.
 */
typedef enum MsmaStatus {
  MSMA_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  MSMA_STATUS_NULL_POINTER = 1,
  /**
   * An argument was out of range or not valid UTF-8.
   */
  MSMA_STATUS_INVALID_ARGUMENT = 2,
  /**
   * A file could not be read or written.
   */
  MSMA_STATUS_IO = 3,
  /**
   * A file was malformed.
   */
  MSMA_STATUS_PARSE = 4,
  /**
   * A checkpoint does not fit the model or the data.
   */
  MSMA_STATUS_INCOMPATIBLE = 5,
  /**
   * A computation produced non-finite values.
   */
  MSMA_STATUS_NUMERICAL = 6,
  /**
   * Any other failure, including internal panics.
   */
  MSMA_STATUS_INTERNAL = 7,
} MsmaStatus;

/**
 * Scenes with their model inputs.
 */
typedef struct MsmaDataset MsmaDataset;

/**
 * A trained predictor.
 */
typedef struct MsmaModel MsmaModel;

/**
 * Multimodal predictions for one scene.
 */
typedef struct MsmaPrediction MsmaPrediction;

/**
 * Dataset generation settings; start from [`msma_generate_config_default`].
 */
typedef struct MsmaGenerateConfig {
  size_t scenes;
  uint64_t seed;
  /**
   * Market penetration rate in [0, 1].
   */
  double mpr;
  size_t latency_frames;
  /**
   * Sensor noise variance in m², within [0, 0.5].
   */
  double noise_variance;
  /**
   * Vehicles per scene.
   */
  size_t agents;
} MsmaGenerateConfig;

/**
 * Best-mode errors over a cohort; `agents == 0` means the cohort was empty
 * and the other fields are NaN.
 */
typedef struct MsmaMetrics {
  size_t agents;
  /**
   * Average displacement error, m.
   */
  double ade;
  /**
   * Final displacement error, m.
   */
  double fde;
  /**
   * Fraction of agents with final error above 2 m.
   */
  double miss_rate;
} MsmaMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null if none. The
 * string stays valid until the next failing call on the same thread.
 */
const char *msma_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *msma_version(void);

/**
 * Default generation settings.
 */
struct MsmaGenerateConfig msma_generate_config_default(void);

/**
 * Generates scenes on the built-in town layout.
 *
 * # Safety
 * `config` must point to a valid config and `out` to writable storage.
 */
enum MsmaStatus msma_dataset_generate(const struct MsmaGenerateConfig *config,
                                      struct MsmaDataset **out);

/**
 * Reads a JSON-lines dataset.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum MsmaStatus msma_dataset_load(const char *path, struct MsmaDataset **out);

/**
 * Writes a dataset as JSON lines.
 *
 * # Safety
 * `dataset` must be a live handle and `path` a NUL-terminated string.
 */
enum MsmaStatus msma_dataset_save(const struct MsmaDataset *dataset, const char *path);

/**
 * Number of scenes; 0 for a null handle.
 *
 * # Safety
 * `dataset` must be null or a live handle.
 */
size_t msma_dataset_len(const struct MsmaDataset *dataset);

/**
 * Identifier of the scene at `index`.
 *
 * # Safety
 * `dataset` must be a live handle and `out` writable.
 */
enum MsmaStatus msma_dataset_scene_id(const struct MsmaDataset *dataset,
                                      size_t index,
                                      uint64_t *out);

/**
 * # Safety
 * `dataset` must be null or a handle not yet freed.
 */
void msma_dataset_free(struct MsmaDataset *dataset);

/**
 * Loads a checkpoint written by `msma train`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum MsmaStatus msma_model_load(const char *path, struct MsmaModel **out);

/**
 * Predicted modes per agent; 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t msma_model_modes(const struct MsmaModel *model);

/**
 * Predicted frames per mode; 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t msma_model_horizon(const struct MsmaModel *model);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void msma_model_free(struct MsmaModel *model);

/**
 * Eval-mode predictions for the scene at `index`, in that scene's frame
 * (metres, centred on the connected vehicle).
 *
 * # Safety
 * `model` and `dataset` must be live handles and `out` writable.
 */
enum MsmaStatus msma_predict(const struct MsmaModel *model,
                             const struct MsmaDataset *dataset,
                             size_t index,
                             enum MsmaFusion fusion,
                             struct MsmaPrediction **out);

/**
 * Number of predicted agents; 0 for a null handle.
 *
 * # Safety
 * `prediction` must be null or a live handle.
 */
size_t msma_prediction_agents(const struct MsmaPrediction *prediction);

/**
 * Identifier of the agent at `agent`.
 *
 * # Safety
 * `prediction` must be a live handle and `out` writable.
 */
enum MsmaStatus msma_prediction_agent_id(const struct MsmaPrediction *prediction,
                                         size_t agent,
                                         uint32_t *out);

/**
 * Copies all mode means as `x, y` pairs, indexed
 * `((agent·modes + mode)·horizon + step)·2`. `len` is the buffer length in
 * doubles and must be at least `agents·modes·horizon·2`.
 *
 * # Safety
 * `buf` must point to `len` writable doubles.
 */
enum MsmaStatus msma_prediction_means(const struct MsmaPrediction *prediction,
                                      double *buf,
                                      size_t len);

/**
 * Copies the mode probabilities, indexed `agent·modes + mode`. `len` must be
 * at least `agents·modes`.
 *
 * # Safety
 * `buf` must point to `len` writable doubles.
 */
enum MsmaStatus msma_prediction_scores(const struct MsmaPrediction *prediction,
                                       double *buf,
                                       size_t len);

/**
 * # Safety
 * `prediction` must be null or a handle not yet freed.
 */
void msma_prediction_free(struct MsmaPrediction *prediction);

/**
 * Best-mode ADE, FDE and miss rate of `model` over every scene of `dataset`.
 *
 * # Safety
 * `model` and `dataset` must be live handles and `out` writable.
 */
enum MsmaStatus msma_evaluate(const struct MsmaModel *model,
                              const struct MsmaDataset *dataset,
                              enum MsmaCohort cohort,
                              enum MsmaFusion fusion,
                              struct MsmaMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MSMA_H */
