#ifndef PCP_PCP_H
#define PCP_PCP_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define PCP_API __declspec(dllexport)
#else
#define PCP_API __attribute__((visibility("default")))
#endif

/* Status codes double as process exit codes. */
typedef enum pcp_status {
  PCP_OK = 0,
  PCP_ERR_USAGE = 1,
  PCP_ERR_DATA = 2,
  PCP_ERR_NUMERIC = 3,
  PCP_ERR_INTERNAL = 4
} pcp_status;

typedef enum pcp_log_level {
  PCP_LOG_DEBUG = 0,
  PCP_LOG_INFO = 1,
  PCP_LOG_WARN = 2,
  PCP_LOG_ERROR = 3,
  PCP_LOG_OFF = 4
} pcp_log_level;

typedef struct pcp_session pcp_session;
typedef struct pcp_sdf pcp_sdf;

PCP_API const char* pcp_version(void);
PCP_API void pcp_set_log_level(pcp_log_level level);

/* Message of the most recent failure on the calling thread ("" if none). */
PCP_API const char* pcp_last_error(void);

PCP_API pcp_status pcp_session_create(pcp_session** out);
PCP_API void pcp_session_destroy(pcp_session* session);

/* Runs a command ("train-prior", "reconstruct", "evaluate", "demo2d",
 * "grad-check") with a JSON object of options. A "config_file" key names a
 * JSON file layered between the defaults and the remaining keys. On return
 * the session holds the command's report; *exit_code receives the command's
 * own verdict (nonzero e.g. for a failed grad-check) when the call itself
 * succeeded. */
PCP_API pcp_status pcp_run(pcp_session* session, const char* command, const char* options_json, int* exit_code);

/* Report text of the last pcp_run; valid until the next call on the session. */
PCP_API const char* pcp_session_report(const pcp_session* session);
/* Fully resolved options of a command as JSON; valid until the next call. */
PCP_API pcp_status pcp_resolve_options(pcp_session* session, const char* command, const char* options_json,
                                       const char** resolved_json);

/* Specialized SDF checkpoint written by reconstruct --save-sdf. */
PCP_API pcp_status pcp_sdf_load(const char* path, pcp_sdf** out);
PCP_API void pcp_sdf_free(pcp_sdf* sdf);
PCP_API int pcp_sdf_dim(const pcp_sdf* sdf);
/* points: n * dim doubles, row-major; values: n doubles. */
PCP_API pcp_status pcp_sdf_eval(const pcp_sdf* sdf, const double* points, size_t n, double* values);

/* Symmetric chamfer distance between two point sets (row-major, n * dim). */
PCP_API pcp_status pcp_chamfer(const double* x, size_t nx, const double* y, size_t ny, int dim, int order,
                               double* out);

#ifdef __cplusplus
}
#endif

#endif
