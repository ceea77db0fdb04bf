/* voltgrid — linearized distribution-grid models, local volt-var control
 * rules, and an AC forward-backward sweep oracle, behind a C ABI.
 *
 * All functions return vg_status; VG_OK is 0. On failure the thread-local
 * message from vg_last_error() describes the problem. Objects returned
 * through out-parameters are owned by the caller and released with the
 * matching *_free function. Strings returned through char** are released
 * with vg_string_free.
 */
#ifndef VOLTGRID_H
#define VOLTGRID_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum vg_status {
    VG_OK = 0,
    VG_ERR_PARSE = 1,
    VG_ERR_TOPOLOGY = 2,
    VG_ERR_VALIDATION = 3,
    VG_ERR_NUMERIC = 4,
    VG_ERR_STATE = 5,
    VG_ERR_CONFIG = 6,
    VG_ERR_IO = 7,
} vg_status;

typedef struct vg_feeder vg_feeder;
typedef struct vg_model vg_model;

typedef enum vg_model_kind {
    VG_MODEL_SINGLE_PHASE = 0,
    VG_MODEL_MULTIPHASE = 1,
} vg_model_kind;

const char* vg_version(void);
/* Message describing the most recent failure on this thread. */
const char* vg_last_error(void);
void vg_string_free(char* s);

/* ---- feeder ------------------------------------------------------------ */

vg_status vg_feeder_load(const char* path, vg_feeder** out);
vg_status vg_feeder_parse(const char* json_text, vg_feeder** out);
void vg_feeder_free(vg_feeder* feeder);

/* Number of non-feeder buses N. */
int vg_feeder_bus_count(const vg_feeder* feeder);
/* Canonical index of a bus by external id, or -1. */
int vg_feeder_bus_index(const vg_feeder* feeder, const char* id);

/* Open/close lines by id (NULL to skip either side); returns the
 * re-canonicalized feeder. */
vg_status vg_feeder_apply_event(const vg_feeder* feeder, const char* open_line,
                                const char* close_line, vg_feeder** out);

/* ---- model matrices ---------------------------------------------------- */

vg_status vg_model_build(const vg_feeder* feeder, vg_model_kind kind, vg_model** out);
void vg_model_free(vg_model* model);

/* Rows of R/X: N for single-phase, number of served (bus, phase) pairs for
 * multiphase. */
int vg_model_dim(const vg_model* model);
int vg_model_bus_count(const vg_model* model);

/* Copy a matrix ("R", "X", "Xx", "Xr", "F", "A") row-major into buf, which
 * holds buflen doubles. Use vg_model_dim (or bus count for "F"/"A") to size. */
vg_status vg_model_matrix(const vg_model* model, const char* name, double* buf, size_t buflen);

typedef struct vg_eigs {
    double lambda_min;     /* extreme eigenvalues of the symmetric part of X */
    double lambda_max;
    double kappa;          /* sigma_max / sigma_min */
    double lambda_max_xtx;
    double prop3_bound;    /* 2 lambda_min / lambda_max^2 */
    double lmax_bound;     /* 1 / sigma_max */
    double prop5_bound;    /* 2 lambda_min(Xx) / lambda_max(X^T X) */
    double prop6_bound;    /* contraction bound from the X X^T eigendecomposition */
} vg_eigs;

vg_status vg_model_eigs(const vg_model* model, vg_eigs* out);

/* Full matrix dump (R, X, Xx, Xr, F, eigen summary, phase-mask legend) as a
 * JSON document. */
vg_status vg_model_dump_json(const vg_model* model, char** out_json);

/* Sign classification of the phase-major coupling blocks, as CSV. */
vg_status vg_model_coupling_csv(const vg_model* model, char** out_csv);

/* ---- experiments -------------------------------------------------------- */

/* Execute a scenario file; writes the per-iteration trace CSV and a summary
 * JSON document to the given paths (either may be NULL to skip). */
vg_status vg_run_scenario(const char* scenario_path, const char* trace_csv_path,
                          const char* summary_json_path);

/* Linear model vs AC power flow at the given scales, as a JSON report. */
vg_status vg_validate(const vg_feeder* feeder, vg_model_kind kind, double load_scale,
                      double pv_scale, char** out_json);

/* Step-size robustness sweep at mu = multiplier * prop6_bound, run at the
 * given load/PV scales, as a JSON table of (multiplier, outcome,
 * final ||dq||). */
vg_status vg_divergence_probe(const vg_feeder* feeder, vg_model_kind kind, double load_scale,
                              double pv_scale, const double* multipliers, size_t count,
                              char** out_json);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* VOLTGRID_H */
