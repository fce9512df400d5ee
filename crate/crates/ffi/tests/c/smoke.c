#include <stdio.h>
#include <stdlib.h>

#include "csc.h"

#define CHECK(call)                                                            \
  do {                                                                         \
    CscStatus s_ = (call);                                                     \
    if (s_ != CSC_STATUS_OK) {                                                 \
      fprintf(stderr, "%s failed (%d): %s\n", #call, (int)s_, csc_last_error()); \
      return 1;                                                                \
    }                                                                          \
  } while (0)

int main(void) {
  CscDataset *ds = NULL;
  CHECK(csc_dataset_generate(3, 2, 12, 90, 0.0, 1.0, 7, &ds));
  size_t n = csc_dataset_len(ds);
  size_t d = csc_dataset_dim(ds);

  size_t *truth = malloc(n * sizeof *truth);
  size_t *pred = malloc(n * sizeof *pred);
  CHECK(csc_dataset_labels(ds, truth, n));
  CHECK(csc_cluster_zero_filled(ds, 3, csc_ssc_lambda_default(), 0, pred, n));
  double error = -1.0;
  CHECK(csc_score(pred, truth, n, &error));

  CscTrainOptions opts = csc_train_options_default(d);
  opts.epochs = 2;
  opts.batch_size = 16;
  CscModel *model = NULL;
  CHECK(csc_model_train(ds, &opts, NULL, &model));
  size_t p = csc_model_embed_dim(model);
  double *h = malloc(p * n * sizeof *h);
  CHECK(csc_model_embed(model, ds, h, p * n));

  if (csc_dataset_labels(NULL, truth, n) != CSC_STATUS_NULL_POINTER || csc_last_error() == NULL) {
    fprintf(stderr, "null handle not reported\n");
    return 1;
  }
  printf("version=%s n=%zu d=%zu p=%zu zf_error=%.6f\n", csc_version(), n, d, p, error);

  free(h);
  free(pred);
  free(truth);
  csc_model_free(model);
  csc_dataset_free(ds);
  return error == 0.0 ? 0 : 2;
}
