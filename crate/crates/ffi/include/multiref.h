#ifndef MULTIREF_H
#define MULTIREF_H

#include <stddef.h>

// Result code of every fallible call.
typedef enum MrStatus {
  MR_STATUS_OK = 0,
  MR_STATUS_NULL_ARGUMENT = 1,
  MR_STATUS_INVALID_UTF8 = 2,
  MR_STATUS_IO = 3,
  MR_STATUS_PARSE = 4,
  MR_STATUS_INVALID_CONFIG = 5,
  MR_STATUS_INVALID_INPUT = 6,
  MR_STATUS_MODEL = 7,
  MR_STATUS_EXTERNAL = 8,
  MR_STATUS_PANIC = 9,
} MrStatus;

// A loaded corpus.
typedef struct MrCorpus MrCorpus;

// A trained translator.
typedef struct MrModel MrModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer stays
// valid until the next failing call on the same thread.
const char *mr_last_error(void);

// Releases a string returned by this library.
//
// # Safety
// `s` must be NULL or a pointer obtained from this library, freed once.
void mr_string_free(char *s);

// Library version as a static NUL-terminated string.
const char *mr_version(void);

// Loads a JSONL corpus. `split` is "train", "dev" or "test".
//
// # Safety
// String arguments must be NUL-terminated; `out` must be writable.
enum MrStatus mr_corpus_load(const char *path, const char *split, struct MrCorpus **out);

// Builds the synthetic corpus; `config_json` may be NULL for defaults.
//
// # Safety
// `config_json` must be NULL or NUL-terminated; `out` must be writable.
enum MrStatus mr_synth(const char *config_json, struct MrCorpus **out);

// Writes a corpus as JSONL.
//
// # Safety
// `corpus` must be a live handle; `path` NUL-terminated.
enum MrStatus mr_corpus_save(const struct MrCorpus *corpus, const char *path);

// Number of examples in a corpus.
//
// # Safety
// `corpus` must be a live handle; `out` writable.
enum MrStatus mr_corpus_len(const struct MrCorpus *corpus, size_t *out);

// # Safety
// `corpus` must be NULL or a live handle, freed once.
void mr_corpus_free(struct MrCorpus *corpus);

// Corpus statistics as JSON. `train` may be NULL for a training corpus;
// `k == 0` skips the generated-reference measures.
//
// # Safety
// Handles must be live or NULL where allowed; `out_json` writable.
enum MrStatus mr_corpus_stats(const struct MrCorpus *corpus,
                              const struct MrCorpus *train,
                              size_t k,
                              char **out_json);

// Smoothed sentence BLEU of `hyp` against `n_refs` references.
//
// # Safety
// `refs` must point to `n_refs` NUL-terminated strings; `out` writable.
enum MrStatus mr_sentence_bleu(const char *hyp,
                               const char *const *refs,
                               size_t n_refs,
                               double *out);

// Corpus BLEU. `hyps_json` is a JSON array of strings, `refsets_json` an
// array of arrays of strings, aligned by position.
//
// # Safety
// Strings must be NUL-terminated; `out` writable.
enum MrStatus mr_corpus_bleu(const char *hyps_json, const char *refsets_json, double *out);

// ROUGE-L of `hyp`, best over `n_refs` references.
//
// # Safety
// As [`mr_sentence_bleu`].
enum MrStatus mr_rouge_l(const char *hyp, const char *const *refs, size_t n_refs, double *out);

// Mean pairwise BLEU among `n` sentences (n >= 2).
//
// # Safety
// `sentences` must point to `n` NUL-terminated strings; `out` writable.
enum MrStatus mr_pairwise_bleu(const char *const *sentences, size_t n, double *out);

// Loads a checkpoint.
//
// # Safety
// `path` NUL-terminated; `out` writable.
enum MrStatus mr_model_load(const char *path, struct MrModel **out);

// Writes a checkpoint.
//
// # Safety
// `model` must be a live handle; `path` NUL-terminated.
enum MrStatus mr_model_save(const struct MrModel *model, const char *path);

// # Safety
// `model` must be NULL or a live handle, freed once.
void mr_model_free(struct MrModel *model);

// Decodes one source sequence. `config_json` (nullable) holds decoding
// parameters; the result is a JSON object with `hypotheses`, `log_probs`
// and `groups`.
//
// # Safety
// `source` must point to `n_source` NUL-terminated strings; `out_json` writable.
enum MrStatus mr_decode(const struct MrModel *model,
                        const char *const *source,
                        size_t n_source,
                        const char *config_json,
                        char **out_json);

// Decodes a corpus; the result is JSONL in the hypotheses file format.
//
// # Safety
// Handles must be live; `config_json` NULL or NUL-terminated; `out_jsonl` writable.
enum MrStatus mr_decode_corpus(const struct MrModel *model,
                               const struct MrCorpus *corpus,
                               const char *config_json,
                               char **out_jsonl);

// Scores JSONL hypotheses against a corpus with the surrogate scorer and
// returns the metric report as JSON. `topk == 0` keeps every hypothesis.
//
// # Safety
// `corpus` must be live; `hyps_jsonl` NUL-terminated; `out_json` writable.
enum MrStatus mr_eval(const struct MrCorpus *corpus,
                      const char *hyps_jsonl,
                      size_t topk,
                      char **out_json);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* MULTIREF_H */
