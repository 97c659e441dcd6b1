#ifndef BPG_BPG_H
#define BPG_BPG_H

/*
 * C interface to the body pose graph library: synthetic motion, training,
 * evaluation, online inference and gradient checks.
 *
 * Every fallible call returns a bpg_status. On failure a description of the
 * error is available from bpg_last_error() on the same thread until the next
 * failing call. Handles are opaque and must be released with the matching
 * *_free function. A model handle may be used by several threads for
 * inference; training requires exclusive access.
 */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(BPG_BUILDING_LIBRARY)
#    define BPG_API __declspec(dllexport)
#  else
#    define BPG_API __declspec(dllimport)
#  endif
#else
#  define BPG_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum bpg_status {
  BPG_OK = 0,
  BPG_ERR_INVALID_ARGUMENT = 1, /* bad argument value, unknown name */
  BPG_ERR_CONFIG = 2,           /* missing, unknown or invalid config key */
  BPG_ERR_IO = 3,               /* file could not be opened, read or written */
  BPG_ERR_PARSE = 4,            /* malformed motion, sensor or skeleton data */
  BPG_ERR_VERSION = 5,          /* unsupported checkpoint version */
  BPG_ERR_DATA = 6,             /* data unusable, e.g. too short or shape mismatch */
  BPG_ERR_NUMERIC = 7,          /* non-finite loss during training */
  BPG_ERR_GRADCHECK = 8,        /* a gradient check failed */
  BPG_ERR_INTERNAL = 9
} bpg_status;

#define BPG_NUM_JOINTS 22
#define BPG_SENSOR_LINE_VALUES 36

typedef struct bpg_config bpg_config;
typedef struct bpg_model bpg_model;
typedef struct bpg_stream bpg_stream;

/* Receives one line of text without the trailing newline. */
typedef void (*bpg_line_fn)(const char* line, void* user);

typedef struct bpg_loss {
  int64_t step;
  double l_rot;
  double l_pos;
  double l_bone;
  double l_total;
} bpg_loss;

typedef void (*bpg_step_fn)(const bpg_loss* loss, void* user);

typedef struct bpg_metrics {
  double mpjre_deg;
  double mpjpe_cm;
  double mpjve_cm_s;
  double per_joint_mpjpe_cm[BPG_NUM_JOINTS];
  uint64_t frames;
} bpg_metrics;

BPG_API const char* bpg_version(void);
BPG_API const char* bpg_last_error(void);
BPG_API const char* bpg_status_name(bpg_status status);
/* Releases strings returned through char** out-parameters. */
BPG_API void bpg_string_free(char* s);

/* ---- configuration ---------------------------------------------------- */

/* A configuration holding every key at its default value. */
BPG_API bpg_status bpg_config_create(bpg_config** out);
BPG_API void bpg_config_free(bpg_config* cfg);
/* Merges a `key = value` file; all model keys must be present. */
BPG_API bpg_status bpg_config_merge_file(bpg_config* cfg, const char* path);
/* Sets one key as a command-line override. */
BPG_API bpg_status bpg_config_set(bpg_config* cfg, const char* key, const char* value);
/* Validates every key. */
BPG_API bpg_status bpg_config_validate(const bpg_config* cfg);
/* Sorted `key = value` lines; with_source appends the origin of each value. */
BPG_API bpg_status bpg_config_echo(const bpg_config* cfg, int with_source, char** out);

/* ---- data ------------------------------------------------------------- */

/* kind: "walk", "kick" or "idle". Writes a motion file. */
BPG_API bpg_status bpg_synth(const char* kind, int frames, double fps, uint64_t seed,
                             const char* out_path);
/*
 * Emits the sensor stream lines derived from a motion file, using the
 * skeleton of `model` or the built-in one when model is NULL.
 */
BPG_API bpg_status bpg_motion_sensor_lines(const bpg_model* model, const char* motion_path,
                                           bpg_line_fn fn, void* user);

/* ---- models ----------------------------------------------------------- */

BPG_API bpg_status bpg_model_create(const bpg_config* cfg, bpg_model** out);
/* Loads a checkpoint including its step counter and optimizer state. */
BPG_API bpg_status bpg_model_load(const char* path, bpg_model** out);
BPG_API bpg_status bpg_model_save(const bpg_model* model, const char* path);
BPG_API void bpg_model_free(bpg_model* model);
BPG_API int64_t bpg_model_step(const bpg_model* model);
BPG_API int bpg_model_window(const bpg_model* model);
/* Overrides a training key of a loaded model (model keys are fixed). */
BPG_API bpg_status bpg_model_set(bpg_model* model, const char* key, const char* value);
BPG_API bpg_status bpg_model_config_echo(const bpg_model* model, int with_source, char** out);

/*
 * Trains on every *.mot file in data_dir until the configured step count.
 * Writes into out_dir: loss_curve.csv, checkpoints ckpt_<step>.bpg, the final
 * model.bpg, config_echo.txt and train_metrics.json (metrics of the final
 * model on the training data). A resumed model continues its step counter and
 * appends to an existing loss curve. on_step may be NULL.
 */
BPG_API bpg_status bpg_train(bpg_model* model, const char* data_dir, const char* out_dir,
                             bpg_step_fn on_step, void* user);

BPG_API bpg_status bpg_evaluate(const bpg_model* model, const char* data_dir, bpg_metrics* out);
BPG_API bpg_status bpg_metrics_write_json(const bpg_metrics* metrics, const char* path);

/* ---- inference -------------------------------------------------------- */

/*
 * Pose lines for every target frame of a motion file: frame index, 3 root
 * translation values, then 66 axis-angle values.
 */
BPG_API bpg_status bpg_infer_motion(const bpg_model* model, const char* motion_path,
                                    bpg_line_fn fn, void* user);

/* Online inference over sensor frames. The model must outlive the stream. */
BPG_API bpg_status bpg_stream_create(const bpg_model* model, double fps, bpg_stream** out);
BPG_API void bpg_stream_free(bpg_stream* stream);
/*
 * Feeds one sensor line (9 positions then 27 row-major rotation values, in
 * head/left/right order). *has_output is set when a pose line is ready;
 * read it with bpg_stream_output. A malformed line returns BPG_ERR_PARSE and
 * leaves the stream unchanged.
 */
BPG_API bpg_status bpg_stream_push_line(bpg_stream* stream, const char* line, int* has_output);
BPG_API bpg_status bpg_stream_push(bpg_stream* stream, const double values[BPG_SENSOR_LINE_VALUES],
                                   int* has_output);
/* Latest pose line; valid until the next push. */
BPG_API const char* bpg_stream_output(const bpg_stream* stream);

/* ---- verification ----------------------------------------------------- */

/*
 * Runs the finite-difference gradient check of one block, or of every block
 * for "all". Report lines go to fn. Returns BPG_ERR_GRADCHECK when any
 * block fails and BPG_ERR_INVALID_ARGUMENT for an unknown block.
 */
BPG_API bpg_status bpg_gradcheck(const char* block, double tol, bpg_line_fn fn, void* user);

#ifdef __cplusplus
}
#endif

#endif /* BPG_BPG_H */
