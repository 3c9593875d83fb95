#ifndef REID_RERANK_H
#define REID_RERANK_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RrDirection {
  RR_DIRECTION_VISIBLE_TO_INFRARED = 0,
  RR_DIRECTION_INFRARED_TO_VISIBLE = 1,
} RrDirection;

typedef enum RrMode {
  RR_MODE_NONE = 0,
  RR_MODE_K_RECIPROCAL = 1,
  RR_MODE_TEMPORAL = 2,
} RrMode;

typedef enum RrSchedule {
  RR_SCHEDULE_FIXED = 0,
  RR_SCHEDULE_EXPONENTIAL = 1,
  RR_SCHEDULE_COSINE = 2,
} RrSchedule;

typedef enum RrStatus {
  RR_STATUS_OK = 0,
  RR_STATUS_INVALID_ARGUMENT = 1,
  RR_STATUS_CONFIG = 2,
  RR_STATUS_DATA = 3,
  RR_STATUS_INTERNAL = 4,
  RR_STATUS_PANIC = 5,
} RrStatus;

// A query-by-gallery distance matrix together with the setup that produced it.
typedef struct RrDistance RrDistance;

// CMC/mAP scores of one distance matrix.
typedef struct RrReport RrReport;

// A query/gallery split.
typedef struct RrSplit RrSplit;

typedef struct RrSynthConfig {
  uint64_t seed;
  size_t num_ids;
  size_t cams_per_id;
  size_t frames_per_tracklet;
  size_t dim;
  double identity_spread;
  double modality_offset_scale;
  double camera_offset_scale;
  double frame_noise;
  size_t latent_rank;
  enum RrDirection direction;
} RrSynthConfig;

typedef struct RrRerankConfig {
  size_t k1;
  size_t k2;
  double lambda1;
  double lambda2;
  // Temporal groups per tracklet.
  size_t groups;
  bool expanded_sets;
  bool normalize_base;
} RrRerankConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null after a success.
//
// The pointer stays valid until the next call into this library on the same thread.
const char *rr_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *rr_version(void);

struct RrSynthConfig rr_synth_config_default(void);

struct RrRerankConfig rr_rerank_config_default(void);

// Generates a synthetic split.
//
// # Safety
// `config` must be null or point to a valid config; `out` must be a valid pointer.
enum RrStatus rr_split_generate(const struct RrSynthConfig *config, struct RrSplit **out);

// Loads a split from its directory or manifest path.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be a valid pointer.
enum RrStatus rr_split_load(const char *path, struct RrSplit **out);

// Writes a split to directory `path`.
//
// # Safety
// `split` must be a live handle; `path` must be a NUL-terminated string.
enum RrStatus rr_split_save(const struct RrSplit *split, const char *path);

// The same records with query and gallery roles swapped.
//
// # Safety
// `split` must be a live handle; `out` must be a valid pointer.
enum RrStatus rr_split_reversed(const struct RrSplit *split, struct RrSplit **out);

// # Safety
// `split` must be null or a live handle.
size_t rr_split_num_queries(const struct RrSplit *split);

// # Safety
// `split` must be null or a live handle.
size_t rr_split_num_gallery(const struct RrSplit *split);

// # Safety
// `split` must be null or a live handle.
size_t rr_split_dim(const struct RrSplit *split);

// # Safety
// `split` must be null or a live handle; `out` must be a valid pointer.
enum RrStatus rr_split_direction(const struct RrSplit *split, enum RrDirection *out);

// # Safety
// `split` must be null or a handle not yet freed.
void rr_split_free(struct RrSplit *split);

// Final query-gallery distances for `mode`. A null `config` uses the defaults.
//
// # Safety
// `split` must be a live handle, `config` null or valid, `out` a valid pointer.
enum RrStatus rr_distance_compute(const struct RrSplit *split,
                                  enum RrMode mode,
                                  const struct RrRerankConfig *config,
                                  struct RrDistance **out);

// # Safety
// `dist` must be null or a live handle.
size_t rr_distance_rows(const struct RrDistance *dist);

// # Safety
// `dist` must be null or a live handle.
size_t rr_distance_cols(const struct RrDistance *dist);

// Copies the row-major values into `buf`, which must hold exactly `rows * cols` doubles.
//
// # Safety
// `dist` must be a live handle and `buf` must be writable for `len` doubles.
enum RrStatus rr_distance_copy(const struct RrDistance *dist, double *buf, size_t len);

// # Safety
// `dist` must be null or a handle not yet freed.
void rr_distance_free(struct RrDistance *dist);

// Scores `dist` against the labels of `split`.
//
// # Safety
// `dist` and `split` must be live handles; `out` must be a valid pointer.
enum RrStatus rr_evaluate(const struct RrDistance *dist,
                          const struct RrSplit *split,
                          bool exclude_same_camera,
                          struct RrReport **out);

// Mean average precision, or NaN for a null handle.
//
// # Safety
// `report` must be null or a live handle.
double rr_report_map(const struct RrReport *report);

// CMC at 1-based `rank`, saturating at the gallery size; NaN for a null handle.
//
// # Safety
// `report` must be null or a live handle.
double rr_report_cmc(const struct RrReport *report, size_t rank);

// # Safety
// `report` must be null or a live handle.
size_t rr_report_num_queries(const struct RrReport *report);

// # Safety
// `report` must be null or a live handle.
size_t rr_report_skipped_queries(const struct RrReport *report);

// The report in the CLI's JSON format. Release the string with [`rr_string_free`].
//
// # Safety
// `report` must be a live handle; `out` must be a valid pointer.
enum RrStatus rr_report_to_json(const struct RrReport *report, char **out);

// # Safety
// `report` must be null or a handle not yet freed.
void rr_report_free(struct RrReport *report);

// # Safety
// `s` must be null or a string returned by this library and not yet freed.
void rr_string_free(char *s);

// Curriculum factor at normalized progress `progress`. `param` is alpha, tau or phi.
//
// # Safety
// `out` must be a valid pointer.
enum RrStatus rr_curriculum_alpha(enum RrSchedule strategy,
                                  double param,
                                  double progress,
                                  double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REID_RERANK_H */
