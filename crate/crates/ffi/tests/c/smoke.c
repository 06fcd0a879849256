#include <stdio.h>
#include <string.h>
#include "multiref.h"

#define CHECK(call)                                                        \
    do {                                                                   \
        MrStatus s_ = (call);                                              \
        if (s_ != MR_STATUS_OK) {                                          \
            fprintf(stderr, "%s -> %d: %s\n", #call, s_, mr_last_error()); \
            return 1;                                                      \
        }                                                                  \
    } while (0)

int main(void) {
    const char *refs[] = {"it rains in the north", "rain falls in the north"};
    double bleu = -1.0;
    CHECK(mr_sentence_bleu("it rains in the north", refs, 2, &bleu));
    if (bleu < 99.999) {
        fprintf(stderr, "identical hypothesis scored %f\n", bleu);
        return 1;
    }

    MrCorpus *corpus = NULL;
    CHECK(mr_synth("{\"num_examples\": 4}", &corpus));
    size_t n = 0;
    CHECK(mr_corpus_len(corpus, &n));
    if (n != 4) {
        fprintf(stderr, "expected 4 examples, got %zu\n", n);
        return 1;
    }
    char *stats = NULL;
    CHECK(mr_corpus_stats(corpus, NULL, 0, &stats));
    if (strstr(stats, "\"num_references\":12") == NULL) {
        fprintf(stderr, "unexpected stats %s\n", stats);
        return 1;
    }
    mr_string_free(stats);
    mr_corpus_free(corpus);

    MrModel *model = NULL;
    if (mr_model_load("/nonexistent/model.ckpt", &model) != MR_STATUS_IO || mr_last_error() == NULL) {
        fprintf(stderr, "missing checkpoint not reported as an i/o error\n");
        return 1;
    }
    if (mr_sentence_bleu(NULL, refs, 2, &bleu) != MR_STATUS_NULL_ARGUMENT) {
        fprintf(stderr, "NULL hypothesis accepted\n");
        return 1;
    }
    printf("ok %s\n", mr_version());
    return 0;
}
