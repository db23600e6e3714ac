#ifndef CSF_CSF_H
#define CSF_CSF_H

/* C interface to the skill-discovery library. Every call returns a status;
 * on failure csf_last_error() describes it (thread-local, valid until the
 * next call on the same thread). Handles are opaque and owned by the
 * caller, who releases them with the matching *_free. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define CSF_API __declspec(dllexport)
#else
#define CSF_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum csf_status {
  CSF_OK = 0,
  CSF_E_INVALID_ARGUMENT = 1,
  CSF_E_DIMENSION = 2,
  CSF_E_CONFIG = 3,
  CSF_E_IO = 4,
  CSF_E_NUMERICAL = 5,
  CSF_E_USAGE = 6,
  CSF_E_RANGE = 7,
  CSF_E_DOMAIN = 8,
  CSF_E_VERSION = 9,
  CSF_E_BUFFER_TOO_SMALL = 10,
  CSF_E_INTERNAL = 99
} csf_status;

typedef struct csf_config csf_config;
typedef struct csf_trainer csf_trainer;
typedef struct csf_sweep csf_sweep;

CSF_API const char* csf_last_error(void);
CSF_API const char* csf_status_name(csf_status status);
/* Process exit code for a status: 0 ok, 3 numerical failure, 2 otherwise
 * (1 for internal errors). */
CSF_API int csf_exit_code(csf_status status);
CSF_API const char* csf_version(void);

/* ---- configuration ------------------------------------------------------ */

CSF_API csf_status csf_config_default(csf_config** out);
CSF_API csf_status csf_config_load(const char* path, csf_config** out);
CSF_API csf_status csf_config_parse(const char* text, csf_config** out);
CSF_API csf_status csf_config_clone(const csf_config* config, csf_config** out);
CSF_API void csf_config_free(csf_config* config);
CSF_API csf_status csf_config_set(csf_config* config, const char* key, const char* value);
CSF_API csf_status csf_config_validate(const csf_config* config);
/* Strings are copied into buf (NUL-terminated) when cap suffices; *needed
 * always receives the required size including the NUL. */
CSF_API csf_status csf_config_get(const csf_config* config, const char* key, char* buf, size_t cap, size_t* needed);
CSF_API csf_status csf_config_format(const csf_config* config, char* buf, size_t cap, size_t* needed);

/* ---- training ----------------------------------------------------------- */

/* Missing values are NaN. */
typedef struct csf_metrics {
  uint64_t iteration;
  uint64_t env_steps;
  uint64_t buffer_size;
  double loss_repr;
  double loss_sf;
  double loss_actor;
  double alpha;
  double mean_reward;
  double e_sq_norm_dphi;
  double coverage;
  double goal_staying_frac;
  double wall_s;
  double lambda;
} csf_metrics;

CSF_API csf_status csf_trainer_create(const csf_config* config, csf_trainer** out);
/* Refuses checkpoints whose dimensions disagree with `config`. */
CSF_API csf_status csf_trainer_load(const char* checkpoint, const csf_config* config, csf_trainer** out);
CSF_API void csf_trainer_free(csf_trainer* trainer);
CSF_API csf_status csf_trainer_iterate(csf_trainer* trainer, csf_metrics* out);
CSF_API csf_status csf_trainer_save(const csf_trainer* trainer, const char* path);
CSF_API csf_status csf_trainer_env_steps(const csf_trainer* trainer, uint64_t* out);

typedef void (*csf_progress_fn)(const csf_metrics* metrics, void* user);

/* Runs to config's total steps, writing metrics.csv, config.resolved,
 * checkpoints/ and buffer_sample.jsonl under run_dir. `progress` may be NULL. */
CSF_API csf_status csf_run_experiment(const csf_config* config, const char* run_dir, csf_progress_fn progress,
                                      void* user, csf_metrics* last);

/* ---- evaluation --------------------------------------------------------- */

typedef struct csf_eval_summary {
  uint64_t coverage;
  uint64_t random_baseline;
  uint64_t n_goals;
  double mean_staying;
} csf_eval_summary;

/* Writes eval.json into out_dir. goals_file may be NULL. */
CSF_API csf_status csf_evaluate(const char* checkpoint, const csf_config* config, uint64_t seed,
                                const char* goals_file, const char* out_dir, csf_eval_summary* out);

CSF_API csf_status csf_random_baseline(const csf_config* config, uint64_t seed, uint64_t* cells);

typedef struct csf_diag_summary {
  uint64_t n;
  double mean_sq_norm;
  double slope;
  double mean_resultant_length;
  int isotropic;
  int uniform;
} csf_diag_summary;

/* Writes diagnostics.json and histograms/ into out_dir. With checkpoint ==
 * NULL the records' next_obs - obs are taken as the representation
 * differences directly (config is then ignored). */
CSF_API csf_status csf_diagnose(const char* checkpoint, const csf_config* config, const char* buffer_jsonl,
                                const char* out_dir, csf_diag_summary* out);

/* ---- self-test ---------------------------------------------------------- */

typedef struct csf_check_result {
  int id;
  int passed;
  double value;
  double seconds;
  const char* name;
  const char* line; /* one human-readable summary line */
} csf_check_result;

typedef void (*csf_check_fn)(const csf_check_result* result, void* user);

CSF_API csf_status csf_selftest(const char* scratch_dir, csf_check_fn on_result, void* user, int* failures);

/* ---- ablation sweeps ---------------------------------------------------- */

CSF_API csf_status csf_sweep_load(const char* path, csf_sweep** out);
CSF_API void csf_sweep_free(csf_sweep* sweep);
CSF_API csf_status csf_sweep_shape(const csf_sweep* sweep, size_t* n_variants, size_t* n_seeds);
CSF_API csf_status csf_sweep_variant_name(const csf_sweep* sweep, size_t variant, char* buf, size_t cap,
                                          size_t* needed);
CSF_API csf_status csf_sweep_seed(const csf_sweep* sweep, size_t seed_index, uint64_t* seed);
CSF_API csf_status csf_sweep_config(const csf_sweep* sweep, size_t variant, size_t seed_index, csf_config** out);

typedef struct csf_run_result {
  const char* variant;
  uint64_t seed;
  int ok;
  double final_coverage;
  double final_goal_staying;
} csf_run_result;

/* Final evaluated coverage and goal fraction of a finished run directory.
 * `variant` is left untouched. */
CSF_API csf_status csf_read_run_result(const char* run_dir, csf_run_result* out);
/* ablation_summary.csv: one row per run plus one mean/std row per variant. */
CSF_API csf_status csf_write_ablation_summary(const csf_run_result* runs, size_t n, const char* path);

#ifdef __cplusplus
}
#endif

#endif
