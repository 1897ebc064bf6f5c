/* Exercises the C interface from plain C. */
#include "duet/duet.h"

#include <stdio.h>
#include <stdlib.h>
#include <string.h>

static int failures = 0;

#define EXPECT(cond)                                                  \
  do {                                                                \
    if (!(cond)) {                                                    \
      fprintf(stderr, "%s:%d: expected %s\n", __FILE__, __LINE__, #cond); \
      ++failures;                                                     \
    }                                                                 \
  } while (0)

int main(void) {
  duet_config* cfg = NULL;
  char buf[64];
  size_t need = 0;

  EXPECT(duet_config_new("smoke", &cfg) == DUET_OK);
  EXPECT(cfg != NULL);
  EXPECT(duet_config_get(cfg, "corpus.count", buf, sizeof buf, &need) == DUET_OK);
  EXPECT(strcmp(buf, "8") == 0);
  EXPECT(need == 2);

  EXPECT(duet_config_set(cfg, "lm.d_model", "48") == DUET_OK);
  EXPECT(duet_config_get(cfg, "lm.d_model", buf, sizeof buf, NULL) == DUET_OK);
  EXPECT(strcmp(buf, "48") == 0);

  EXPECT(duet_config_set(cfg, "lm.wings", "2") == DUET_ERR_INVALID_ARGUMENT);
  EXPECT(strstr(duet_last_error(), "lm.wings") != NULL);
  EXPECT(duet_config_set(cfg, "lm.d_model", "many") == DUET_ERR_FORMAT);
  EXPECT(duet_config_set(cfg, NULL, "1") == DUET_ERR_INVALID_ARGUMENT);

  /* Size query, then a too-small buffer. */
  EXPECT(duet_config_dump(cfg, NULL, 0, &need) == DUET_OK);
  EXPECT(need > 100);
  EXPECT(duet_config_dump(cfg, buf, 4, &need) == DUET_ERR_OUT_OF_RANGE);
  {
    char* text = malloc(need);
    EXPECT(duet_config_dump(cfg, text, need, &need) == DUET_OK);
    EXPECT(strstr(text, "lm.d_model = 48") != NULL);
    free(text);
  }

  EXPECT(duet_command_count() == 10);
  EXPECT(strcmp(duet_command_name(0), "gen-data") == 0);
  EXPECT(duet_command_name(99) == NULL);

  EXPECT(duet_config_set(cfg, "run_dir", "/nonexistent/duet_capi_run") == DUET_OK);
  EXPECT(duet_run_command(cfg, "train-lm", NULL, NULL, NULL, NULL) == DUET_ERR_MISSING_INPUT);
  EXPECT(strncmp(duet_last_error(), "train-lm:", 9) == 0);
  EXPECT(duet_run_command(cfg, "juggle", NULL, NULL, NULL, NULL) == DUET_ERR_INVALID_ARGUMENT);

  {
    duet_sequence* seq = NULL;
    EXPECT(duet_sequence_read("/nonexistent/x.duet", &seq) == DUET_ERR_IO);
    EXPECT(seq == NULL);
    EXPECT(duet_sequence_frames(NULL) == 0);
  }
  {
    duet_reports* r = NULL;
    EXPECT(duet_reports_read("/nonexistent/metrics.json", &r) == DUET_ERR_IO);
  }
  EXPECT(strcmp(duet_status_name(DUET_ERR_INCOMPATIBLE), "incompatible") == 0);

  duet_config_free(cfg);
  duet_config_free(NULL);

  /* A miniature end-to-end run through the interface. */
  {
    static const char* tiny[][2] = {
        {"run_dir", "duet_capi_run"},   {"corpus.count", "4"},          {"corpus.eval_count", "2"},
        {"corpus.duration", "10"},      {"vq_motion.codebook_size", "16"}, {"vq_motion.latent_dim", "16"},
        {"vq_motion.hidden", "16"},     {"vq_motion.epochs", "2"},      {"vq_relation.codebook_size", "8"},
        {"vq_relation.hidden", "8"},    {"vq_relation.epochs", "2"},    {"lm.d_model", "16"},
        {"lm.heads", "2"},              {"lm.layers", "1"},             {"lm.lora_rank", "4"},
        {"lm.epochs_stage0", "1"},      {"lm.epochs_stage1", "1"},      {"lm.epochs_stage2", "1"},
        {"diffusion.d_model", "16"},    {"diffusion.layers", "1"},      {"diffusion.heads", "2"},
        {"diffusion.iterations", "4"},  {"diffusion.batch_size", "2"}};
    duet_config* c = NULL;
    duet_reports* r = NULL;
    duet_sequence* seq = NULL;
    double v = -1.0, rel[3], xyz[3];
    size_t i;
    EXPECT(duet_config_new("smoke", &c) == DUET_OK);
    for (i = 0; i < sizeof tiny / sizeof tiny[0]; ++i) EXPECT(duet_config_set(c, tiny[i][0], tiny[i][1]) == DUET_OK);
    EXPECT(duet_run_pipeline(c, NULL, NULL) == DUET_OK);
    EXPECT(duet_reports_read("duet_capi_run/variants/full-s1/metrics.json", &r) == DUET_OK);
    EXPECT(duet_reports_count(r) == 3);
    EXPECT(strcmp(duet_reports_label(r, 0), "full-s1/ground-truth") == 0);
    EXPECT(duet_reports_value(r, 0, "fid_k", &v) == DUET_OK);
    EXPECT(v >= 0.0 && v < 1e-6);
    EXPECT(duet_reports_value(r, 1, "bas", &v) == DUET_OK);
    EXPECT(v >= 0.0 && v <= 1.0);
    EXPECT(duet_reports_value(r, 0, "style", &v) == DUET_ERR_INVALID_ARGUMENT);
    EXPECT(duet_reports_value(r, 7, "bas", &v) == DUET_ERR_OUT_OF_RANGE);
    duet_reports_free(r);

    EXPECT(duet_sequence_read("duet_capi_run/variants/full-s1/gen/seq002.duet", &seq) == DUET_OK);
    EXPECT(duet_sequence_frames(seq) == 200);
    EXPECT(duet_sequence_joints(seq) == 22);
    EXPECT(duet_sequence_fps(seq) == 20.0);
    EXPECT(duet_sequence_position(seq, DUET_FOLLOWER, 10, 0, xyz) == DUET_OK);
    EXPECT(duet_sequence_relation(seq, 0, rel) == DUET_OK);
    EXPECT(duet_sequence_position(seq, DUET_LEADER, 200, 0, xyz) == DUET_ERR_OUT_OF_RANGE);
    EXPECT(duet_sequence_render_svg(seq, 3, "duet_capi_run/frame.svg") == DUET_OK);
    duet_sequence_free(seq);
    duet_config_free(c);
  }

  if (failures == 0) printf("capi: all checks passed\n");
  return failures == 0 ? 0 : 1;
}
