#ifndef WDISTILL_WDISTILL_H
#define WDISTILL_WDISTILL_H

#include <stddef.h>
#include <stdint.h>

#if defined(WDISTILL_BUILDING) && defined(__GNUC__)
#define WD_API __attribute__((visibility("default")))
#else
#define WD_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum wd_status {
  WD_OK = 0,
  WD_ERR_INVALID_ARGUMENT = 1,
  WD_ERR_CONFIG = 2,
  WD_ERR_SHAPE = 3,
  WD_ERR_NUMERIC = 4,
  WD_ERR_IO = 5,
  WD_ERR_RUNTIME = 6
} wd_status;

typedef struct wd_model wd_model;
typedef struct wd_corpus wd_corpus;

/* Message of the last failed call on this thread; empty after a success. */
WD_API const char* wd_last_error(void);
WD_API const char* wd_version(void);

/* "off", "error", "warn", "info" or "debug". */
WD_API wd_status wd_set_log_level(const char* level);

/* Strings returned through char** out-parameters are owned by the caller. */
WD_API void wd_string_free(char* s);

/* Runs one of train-teacher, distill, ablate, sweep, bench, eval. config_json
   may be NULL or "{}" for all defaults. On success *report_json (if non-NULL)
   receives the command's JSON report. */
WD_API wd_status wd_run_command(const char* command, const char* config_json, char** report_json);

/* The fully resolved config for a partial one. */
WD_API wd_status wd_resolve_config(const char* config_json, char** resolved_json);

WD_API wd_status wd_model_load(const char* path, wd_model** out);
WD_API void wd_model_free(wd_model* model);
/* {"config": {...}, "params": N, "meta": {...}} */
WD_API wd_status wd_model_info(const wd_model* model, char** info_json);
/* Greedy decode of one source. Writes at most capacity ids (EOS excluded) and
   always sets *out_len to the full length. */
WD_API wd_status wd_model_decode(const wd_model* model, const int32_t* src, size_t src_len, int32_t* out, size_t capacity,
                          size_t* out_len);

/* task: "copy", "reverse" or "sort". */
WD_API wd_status wd_corpus_generate(const char* task, size_t n, size_t min_len, size_t max_len, size_t vocab, uint64_t seed,
                             wd_corpus** out);
WD_API wd_status wd_corpus_load_tsv(const char* path, size_t vocab, wd_corpus** out);
WD_API wd_status wd_corpus_save_tsv(const wd_corpus* corpus, const char* path);
WD_API wd_status wd_corpus_size(const wd_corpus* corpus, size_t* out);
WD_API void wd_corpus_free(wd_corpus* corpus);

/* Token accuracy, BLEU and decode speed of a model on a corpus, as JSON. */
WD_API wd_status wd_evaluate(const wd_model* model, const wd_corpus* corpus, char** report_json);

/* Corpus BLEU over n sentence pairs given as pointer/length arrays. */
WD_API wd_status wd_corpus_bleu(const int32_t* const* hyps, const size_t* hyp_lens, const int32_t* const* refs,
                         const size_t* ref_lens, size_t n, double* out);

/* Hex SHA-256 of a file. */
WD_API wd_status wd_file_digest(const char* path, char** hex);

#ifdef __cplusplus
}
#endif

#endif
