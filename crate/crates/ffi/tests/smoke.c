#include <stdio.h>
#include <string.h>
#include "xattrib.h"

#define CHECK(expr)                                                              \
  do {                                                                           \
    if ((expr) != XATTRIB_STATUS_OK) {                                           \
      const char *e = xattrib_last_error();                                      \
      fprintf(stderr, "%s failed: %s\n", #expr, e ? e : "?");                    \
      return 1;                                                                  \
    }                                                                            \
  } while (0)

int main(void) {
  XattribModel *model = NULL;
  CHECK(xattrib_model_new("toy-controlled", 7, &model));

  uint32_t prompt[64], target[64];
  size_t plen = 0, tlen = 0;
  CHECK(xattrib_tokenize(model, "write a story about the doctor and his patient", prompt, 64, &plen));
  CHECK(xattrib_generate(model, prompt, plen, NULL, 16, target, 64, &tlen));

  XattribExplainOptions opts = xattrib_explain_options_default();
  opts.method = XATTRIB_METHOD_XPROMPT;
  opts.k = 2;
  XattribResult *result = NULL;
  CHECK(xattrib_explain(model, prompt, plen, target, tlen, &opts, &result));

  size_t idx[8], n = 0;
  CHECK(xattrib_result_indices(result, idx, 8, &n));
  if (n != 2 || idx[0] >= idx[1] || idx[1] >= plen) return 2;

  uint8_t mask[64];
  memset(mask, 1, sizeof mask);
  mask[idx[0]] = mask[idx[1]] = 0;
  double pr = 0.0, kl = 0.0;
  CHECK(xattrib_mask_metrics(model, prompt, plen, mask, target, tlen, &pr, &kl));
  if (!(pr > 0.0 && pr <= 1.0 + 1e-9) || kl < 0.0) return 3;

  char *json = NULL;
  CHECK(xattrib_result_to_json(result, &json));
  printf("%s %s\n", xattrib_version(), json);
  xattrib_string_free(json);

  if (xattrib_model_new("missing", 0, &model) != XATTRIB_STATUS_UNKNOWN_MODEL) return 4;

  xattrib_result_free(result);
  xattrib_model_free(model);
  return 0;
}
