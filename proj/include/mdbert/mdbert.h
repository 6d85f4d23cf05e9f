/* C interface to the mdbert hierarchical document encoder.
 *
 * Every function returns an mdb_code; on failure a human-readable message
 * is copied into the caller's error buffer (always NUL-terminated when
 * errcap > 0). Opaque handles are created and released by the library.
 */
#ifndef MDBERT_H
#define MDBERT_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mdb_code {
  MDB_OK = 0,
  MDB_ERR_USAGE = 1,   /* bad flags, config keys, option values */
  MDB_ERR_DATA = 2,    /* unreadable or malformed inputs */
  MDB_ERR_NUMERIC = 3  /* non-finite loss or other numeric failure */
} mdb_code;

const char* mdb_version(void);
uint32_t mdb_checkpoint_format_version(void);

/* Frees strings returned through char** out parameters. */
void mdb_string_free(char* s);

/* --- training ----------------------------------------------------------- */

/* config_path may be NULL; overrides are "key=value" strings applied on
 * top of the file. Writes log.csv and checkpoints into the configured
 * out_dir. */
int mdb_train(const char* config_path, const char* const* overrides, size_t n_overrides,
              char* err, size_t errcap);

/* --- models -------------------------------------------------------------- */

typedef struct mdb_model mdb_model;

int mdb_model_open(const char* checkpoint_path, const char* vocab_path, mdb_model** out,
                   char* err, size_t errcap);
void mdb_model_close(mdb_model* model);

typedef struct mdb_eval_options {
  const char* corpus_path;       /* required */
  const char* labels_path;       /* required */
  const char* fields;            /* comma separated; NULL = record order */
  const char* summary_csv;       /* required output path */
  const char* per_class_csv;     /* optional output path */
  const char* explain_csv;       /* optional; single model, label attention only */
  const int* p_at_k;             /* optional K values */
  size_t n_p_at_k;
  int threads;                   /* <= 0: MDB_THREADS or all cores */
} mdb_eval_options;

/* Averages predictions when more than one model is given. */
int mdb_eval(mdb_model* const* models, size_t n_models, const mdb_eval_options* options,
             char* err, size_t errcap);

/* level is "sentence" or "document"; output is line-delimited JSON records
 * {"id": ..., "level": ..., "vector": [...]}. */
int mdb_embed(mdb_model* model, const char* corpus_path, const char* level, const char* fields,
              const char* out_path, char* err, size_t errcap);

/* --- retrieval ------------------------------------------------------------ */

typedef struct mdb_search_options {
  const char* engine;       /* "bm25" or "embed" */
  const char* base_csv;     /* search base: id,group_id,name */
  const char* truth_path;   /* line-delimited JSON {"query":..., "groups":[...]} */
  const char* results_csv;  /* optional per-query output */
  mdb_model* model;         /* required for the embed engine */
} mdb_search_options;

typedef struct mdb_search_report {
  double hit_rate;
  double top1_auc;   /* valid only when auc_defined */
  int auc_defined;   /* 0 when all outcomes are on one side */
  size_t n_queries;
} mdb_search_report;

int mdb_search(const mdb_search_options* options, mdb_search_report* report, char* err, size_t errcap);

/* --- benchmark ------------------------------------------------------------ */

typedef struct mdb_bench_options {
  size_t n;      /* tokens per document */
  size_t d;      /* hidden dimension */
  size_t s;      /* sentences per document */
  size_t depth;  /* attention layers */
  size_t trials; /* 0: analytic model only */
  int include_projections;
  int grid;      /* sweep s over powers of two up to n */
} mdb_bench_options;

int mdb_bench_csv(const mdb_bench_options* options, char** out_csv, char* err, size_t errcap);

/* --- corpus utilities ------------------------------------------------------ */

int mdb_stats_csv(const char* corpus_path, const char* vocab_path, const char* labels_path,
                  const char* fields, size_t max_tokens_per_sentence, size_t max_sentences_per_doc,
                  char** out_csv, char* err, size_t errcap);

int mdb_build_vocab(const char* corpus_path, size_t target_size, const char* out_path,
                    char* err, size_t errcap);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* MDBERT_H */
