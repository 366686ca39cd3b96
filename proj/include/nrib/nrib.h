/*
 * nrib — noise-robust information-bottleneck training, C API.
 *
 * Every function returns NRIB_OK (0) on success or a nonzero status code;
 * nrib_last_error() describes the most recent failure on the calling thread.
 * Strings returned through char** out-parameters are heap-allocated and must
 * be released with nrib_string_free(). Opaque handles are released with their
 * matching *_free() function.
 */
#ifndef NRIB_H
#define NRIB_H

#ifdef __cplusplus
extern "C" {
#endif

typedef enum nrib_status {
  NRIB_OK = 0,
  NRIB_ERR_INVALID_ARGUMENT = 1,
  NRIB_ERR_IO = 2,
  NRIB_ERR_RUNTIME = 3
} nrib_status;

typedef struct nrib_dataset nrib_dataset;
typedef struct nrib_model nrib_model;

const char* nrib_version(void);
const char* nrib_last_error(void);
void nrib_string_free(char* s);

/* ------------------------------------------------------------------ data */

/* Gaussian blob classification dataset (vector mode). */
int nrib_generate_blobs(int num_classes, int dim, int n, double separation,
                        unsigned long long seed, nrib_dataset** out);

/* Stochastic-block-model node classification dataset (graph mode). */
int nrib_generate_sbm(int communities, int nodes_per_community, double p_in, double p_out,
                      int feature_dim, unsigned long long seed, nrib_dataset** out);

int nrib_dataset_load(const char* path, nrib_dataset** out);
int nrib_dataset_save(const nrib_dataset* ds, const char* path);

/* JSON summary: size, mode, class count, split sizes, injected-noise rate. */
int nrib_dataset_info(const nrib_dataset* ds, char** json_out);

/* Corrupts train labels in place via a transition matrix
 * (kind = "symmetric" | "pair"). */
int nrib_inject_noise(nrib_dataset* ds, const char* kind, double rate, unsigned long long seed);

void nrib_dataset_free(nrib_dataset* ds);

/* -------------------------------------------------------------- training */

/* Trains on the dataset per the config file and writes
 *   <out_dir>/checkpoint.nrib
 *   <out_dir>/metrics.jsonl       (one record per epoch)
 *   <out_dir>/selection.jsonl     (when dump_selection != 0)
 * variant: "full" | "no-ki" | "no-rt" | "baseline".
 * Returns a JSON summary through summary_json_out (may be NULL). */
int nrib_train(const nrib_dataset* ds, const char* config_path, const char* variant,
               int dump_selection, const char* out_dir, char** summary_json_out);

int nrib_model_load(const char* path, nrib_model** out);
int nrib_model_save(const nrib_model* m, const char* path);
void nrib_model_free(nrib_model* m);

/* Accuracy per branch plus the report branch, as JSON.
 * split: "train" | "val" | "test". */
int nrib_evaluate(nrib_model* m, const nrib_dataset* ds, const char* split, char** json_out);

/* FGSM sweep on the test split (vector mode only): one record per epsilon. */
int nrib_attack_eval(nrib_model* m, const nrib_dataset* ds, const double* epsilons, int n_eps,
                     char** json_out);

/* ---------------------------------------------------- verification, misc */

/* Runs the discrete-oracle bound suite; JSON array with one record per
 * inequality carrying the minimum observed slack. Status is NRIB_ERR_RUNTIME
 * if any inequality fails. */
int nrib_verify_bounds(int trials, unsigned long long seed, char** json_out);

/* Renders accuracy/loss/selector SVG plots from a metrics.jsonl file. */
int nrib_emit_plots(const char* history_path, const char* out_dir);

/* Multi-seed benchmark vs the single-encoder baseline. spec_json keys:
 * data_kind ("blobs"|"sbm"), num_classes, dim, n, separation, communities,
 * nodes_per_community, p_in, p_out, noise_kind, noise_rate, seeds,
 * ablations (bool), fgsm_epsilons (array). */
int nrib_run_experiment(const char* config_path, const char* spec_json, char** report_json_out);

#ifdef __cplusplus
}
#endif

#endif /* NRIB_H */
