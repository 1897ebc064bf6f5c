/* C interface to the duet motion pipeline. All functions return a duet_status;
 * on failure duet_last_error() describes the problem (per thread). */
#ifndef DUET_DUET_H
#define DUET_DUET_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define DUET_API __declspec(dllexport)
#else
#define DUET_API __attribute__((visibility("default")))
#endif

typedef enum duet_status {
  DUET_OK = 0,
  DUET_ERR_INVALID_ARGUMENT = 1,
  DUET_ERR_OUT_OF_RANGE = 2,
  DUET_ERR_IO = 3,
  DUET_ERR_FORMAT = 4,
  DUET_ERR_NUMERICAL = 5,
  DUET_ERR_INCOMPATIBLE = 6,
  DUET_ERR_MISSING_INPUT = 7,
  DUET_ERR_UNBALANCED_MARKER = 8,
  DUET_ERR_INTERNAL = 9
} duet_status;

typedef enum duet_role { DUET_LEADER = 0, DUET_FOLLOWER = 1 } duet_role;

typedef struct duet_config duet_config;
typedef struct duet_sequence duet_sequence;
typedef struct duet_reports duet_reports;

typedef void (*duet_log_fn)(const char* message, void* user);

DUET_API const char* duet_version(void);
DUET_API const char* duet_last_error(void);
DUET_API const char* duet_status_name(duet_status s);

/* Configuration. `preset` is "desk" or "smoke". */
DUET_API duet_status duet_config_new(const char* preset, duet_config** out);
DUET_API duet_status duet_config_load(const char* path, duet_config** out);
DUET_API void duet_config_free(duet_config* cfg);
DUET_API duet_status duet_config_set(duet_config* cfg, const char* key, const char* value);
/* Copies a NUL-terminated string into buf when it fits; *needed receives the
 * full size including the terminator. */
DUET_API duet_status duet_config_get(const duet_config* cfg, const char* key, char* buf, size_t cap, size_t* needed);
DUET_API duet_status duet_config_dump(const duet_config* cfg, char* buf, size_t cap, size_t* needed);

/* Stage commands: gen-data, train-vq, tokenize, describe, train-diffusion,
 * train-lm, generate, refine, evaluate, report. `in`/`out` may be NULL. */
DUET_API size_t duet_command_count(void);
DUET_API const char* duet_command_name(size_t i);
DUET_API duet_status duet_run_command(const duet_config* cfg, const char* command, const char* in, const char* out,
                                      duet_log_fn log, void* user);
DUET_API duet_status duet_run_pipeline(const duet_config* cfg, duet_log_fn log, void* user);

/* Duet motion files. */
DUET_API duet_status duet_sequence_read(const char* path, duet_sequence** out);
DUET_API void duet_sequence_free(duet_sequence* seq);
DUET_API int duet_sequence_frames(const duet_sequence* seq);
DUET_API int duet_sequence_joints(const duet_sequence* seq);
DUET_API double duet_sequence_fps(const duet_sequence* seq);
DUET_API duet_status duet_sequence_position(const duet_sequence* seq, duet_role role, int frame, int joint, double xyz[3]);
/* Follower root offset and heading in the leader's ground frame. */
DUET_API duet_status duet_sequence_relation(const duet_sequence* seq, int frame, double xz_theta[3]);
DUET_API duet_status duet_sequence_render_svg(const duet_sequence* seq, int frame, const char* svg_path);

/* Metric reports (metrics.json files written by evaluate). Metric names:
 * fid_k fid_g div_k div_g fid_cd div_cd bed bas. */
DUET_API duet_status duet_reports_read(const char* path, duet_reports** out);
DUET_API void duet_reports_free(duet_reports* r);
DUET_API size_t duet_reports_count(const duet_reports* r);
DUET_API const char* duet_reports_label(const duet_reports* r, size_t row);
DUET_API duet_status duet_reports_value(const duet_reports* r, size_t row, const char* metric, double* value);

#ifdef __cplusplus
}
#endif

#endif
