#ifndef LAIF_H
#define LAIF_H

/* C interface to the laif core: synthetic glyph datasets, the recognizer and
 * DCGAN training pipelines, checkpoints, and inference. Every fallible call
 * returns a laif_status; on failure laif_last_error() holds a message for the
 * calling thread. Handles are opaque and owned by the caller via the matching
 * _free function. All functions are thread-compatible: one handle may only be
 * used from one thread at a time, but distinct handles are independent. */

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum laif_status {
  LAIF_OK = 0,
  LAIF_INVALID_ARG = 1, /* null/invalid handle or out-of-range value */
  LAIF_IO = 2,          /* missing or unreadable/unwritable file */
  LAIF_FORMAT = 3,      /* malformed checkpoint, image, or dataset tree */
  LAIF_NUMERIC = 4,     /* training aborted on a non-finite loss */
  LAIF_INTERNAL = 5
} laif_status;

const char* laif_status_name(laif_status s);

/* Message for this thread's most recent failing call; empty string if none.
 * The storage is thread-local and overwritten by the next failure. */
const char* laif_last_error(void);

typedef struct laif_dataset laif_dataset;
typedef struct laif_model laif_model;

/* ---- datasets ------------------------------------------------------- */

/* Deterministic 30-class synthetic glyph dataset, per_class >= 1 samples per
 * class, 32x32 grayscale. Same seed, same data. */
laif_status laif_dataset_synth(uint64_t seed, int per_class, laif_dataset** out);

/* Loads root/<class>/<id>.pgm; class names are the subdirectory names. */
laif_status laif_dataset_open(const char* dir, laif_dataset** out);

/* Writes the directory layout above plus manifest.csv (id,class,label). */
laif_status laif_dataset_write(const laif_dataset* ds, const char* dir);

int64_t laif_dataset_size(const laif_dataset* ds);     /* -1 on null */
int laif_dataset_class_count(const laif_dataset* ds);  /* -1 on null */
void laif_dataset_free(laif_dataset* ds);

/* ---- models ---------------------------------------------------------- */

/* Fresh recognizer ("desk" or "vgg19" scale) with head_classes outputs,
 * seeded initialization. */
laif_status laif_recognizer_new(const char* scale, int head_classes, uint64_t seed, laif_model** out);

/* Fresh DCGAN generator/discriminator pair for 32x32 single-channel images.
 * Both nets are initialized from streams derived from the one seed. */
laif_status laif_gan_new(int latent, uint64_t seed, laif_model** g_out, laif_model** d_out);

/* Loads a checkpoint. If require_arch is non-null and non-empty, the stored
 * architecture tag must start with it (e.g. "rec", "dcgan-g"); mismatch is
 * LAIF_FORMAT. */
laif_status laif_model_open(const char* path, const char* require_arch, laif_model** out);

laif_status laif_model_save(laif_model* m, const char* path);

/* Swaps the classifier head for a fresh one with new_classes outputs; every
 * other tensor is preserved bitwise. Recognizer models only. */
laif_status laif_model_replace_head(laif_model* m, int new_classes, uint64_t seed);

const char* laif_model_arch(const laif_model* m); /* "" on null */
int laif_model_class_count(const laif_model* m);  /* 0 for GAN nets, -1 on null */
const char* laif_model_class_name(const laif_model* m, int index); /* NULL if out of range */
int64_t laif_model_param_count(const laif_model* m); /* -1 on null */
void laif_model_free(laif_model* m);

/* ---- inference ------------------------------------------------------- */

/* Class probabilities for one grayscale image, pixels row-major in [0,1].
 * probs_len must equal the model's class count; probs descend from softmax
 * over the head logits and sum to 1. */
laif_status laif_recognize(laif_model* m, const float* pixels, int h, int w,
                           float* probs, int probs_len);

/* Same, reading a binary PGM file. */
laif_status laif_recognize_file(laif_model* m, const char* pgm_path,
                                float* probs, int probs_len);

/* Samples `count` latents from `seed` and writes one tiled PGM grid with
 * `cols` tiles per row. Deterministic per seed. Generator models only. */
laif_status laif_generate_grid(laif_model* g, uint64_t seed, int count, int cols,
                               const char* out_pgm);

/* ---- training -------------------------------------------------------- */

typedef struct laif_rec_train_config {
  int epochs;          /* default 40 */
  int batch;           /* default 32 */
  float lr;            /* default 1e-4 */
  float weight_decay;  /* default 1e-4 */
  float momentum;      /* default 0.9 */
  double val_fraction; /* per-class tail held out for validation; default 0.2 */
  uint64_t seed;       /* default 1 */
} laif_rec_train_config;

void laif_rec_train_config_defaults(laif_rec_train_config* cfg);

typedef void (*laif_rec_epoch_fn)(void* user, int epoch, double train_accuracy,
                                  double loss, double val_accuracy);

/* Trains the model in place on an 80/20-style per-class split of `ds` and
 * writes metrics.csv, best.ckpt (best validation accuracy; falls back to the
 * final state if no epoch improved), and final.ckpt under out_dir (created if
 * needed). The callback, if non-null, fires after every epoch. */
laif_status laif_train_recognizer(laif_model* m, const laif_dataset* ds,
                                  const laif_rec_train_config* cfg, const char* out_dir,
                                  laif_rec_epoch_fn on_epoch, void* user);

typedef struct laif_gan_train_config {
  int epochs;       /* default 2000; one generator/discriminator cycle each */
  int batch;        /* default 32 */
  float lr;         /* default 2e-4 */
  float beta1;      /* default 0.5 */
  float beta2;      /* default 0.999 */
  int sample_every; /* write samples/epoch_<N>.pgm every N epochs; 0 disables */
  uint64_t seed;    /* default 1 */
} laif_gan_train_config;

void laif_gan_train_config_defaults(laif_gan_train_config* cfg);

typedef void (*laif_gan_epoch_fn)(void* user, int epoch, double d_loss, double g_loss);

/* Adversarial training in place; writes metrics.csv, g.ckpt, d.ckpt, and any
 * sample grids under out_dir. */
laif_status laif_train_gan(laif_model* g, laif_model* d, const laif_dataset* ds,
                           const laif_gan_train_config* cfg, const char* out_dir,
                           laif_gan_epoch_fn on_epoch, void* user);

#ifdef __cplusplus
}
#endif

#endif /* LAIF_H */
