#include "laif/laif.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "core/checkpoint.hpp"
#include "core/data.hpp"
#include "core/errors.hpp"
#include "core/models.hpp"
#include "core/rng.hpp"
#include "core/train.hpp"

struct laif_dataset {
  laif::Dataset ds;
};

struct laif_model {
  laif::Model m;
};

namespace {

thread_local std::string t_last_error;

laif_status map_kind(laif::ErrorKind kind) {
  using EK = laif::ErrorKind;
  switch (kind) {
    case EK::kIo:
      return LAIF_IO;
    case EK::kInvalidArgument:
    case EK::kInvalidSpec:
    case EK::kInvalidPlan:
    case EK::kShapeMismatch:
    case EK::kBadLabel:
    case EK::kBadProbability:
    case EK::kDegenerateBatch:
    case EK::kNoHead:
      return LAIF_INVALID_ARG;
    case EK::kUnknownExtension:
    case EK::kMalformedHeader:
    case EK::kTruncatedData:
    case EK::kBadMagic:
    case EK::kCrcMismatch:
    case EK::kArchMismatch:
    case EK::kVersionUnsupported:
    case EK::kEmptyClass:
      return LAIF_FORMAT;
    case EK::kNumericAbort:
      return LAIF_NUMERIC;
    default:
      return LAIF_INTERNAL;
  }
}

template <typename Fn>
laif_status guarded(Fn&& fn) {
  try {
    fn();
    return LAIF_OK;
  } catch (const laif::Error& e) {
    t_last_error = e.what();
    return map_kind(e.kind());
  } catch (const std::exception& e) {
    t_last_error = e.what();
    return LAIF_INTERNAL;
  } catch (...) {
    t_last_error = "unknown error";
    return LAIF_INTERNAL;
  }
}

laif_status invalid(const char* msg) {
  t_last_error = msg;
  return LAIF_INVALID_ARG;
}

std::vector<std::string> default_class_names(int n) {
  if (n == 30) return laif::glyph_class_names();
  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) names.push_back("class_" + std::to_string(i));
  return names;
}

/// Eval-mode forward of one [1,1,h,w] image; fills probs with the softmax of
/// the head logits (stabilized in double).
void recognize_tensor(laif_model* m, laif::Tensor img, float* probs, int probs_len) {
  m->m.net.set_mode(false);
  laif::Tape tape(/*grads_enabled=*/false);
  const laif::Tensor logits = tape.value(m->m.net.forward(tape, tape.constant(std::move(img))));
  if (logits.numel() != probs_len)
    laif::fail(laif::ErrorKind::kShapeMismatch,
               "model emits " + std::to_string(logits.numel()) + " scores, caller expects " +
                   std::to_string(probs_len));
  double hi = logits[0];
  for (std::int64_t i = 1; i < logits.numel(); ++i) hi = std::max(hi, static_cast<double>(logits[i]));
  std::vector<double> e(static_cast<std::size_t>(logits.numel()));
  double sum = 0.0;
  for (std::int64_t i = 0; i < logits.numel(); ++i) {
    e[static_cast<std::size_t>(i)] = std::exp(static_cast<double>(logits[i]) - hi);
    sum += e[static_cast<std::size_t>(i)];
  }
  for (std::int64_t i = 0; i < logits.numel(); ++i)
    probs[i] = static_cast<float>(e[static_cast<std::size_t>(i)] / sum);
}

}  // namespace

extern "C" {

const char* laif_status_name(laif_status s) {
  switch (s) {
    case LAIF_OK: return "ok";
    case LAIF_INVALID_ARG: return "invalid argument";
    case LAIF_IO: return "io error";
    case LAIF_FORMAT: return "format error";
    case LAIF_NUMERIC: return "numeric abort";
    case LAIF_INTERNAL: return "internal error";
  }
  return "unknown";
}

const char* laif_last_error(void) { return t_last_error.c_str(); }

/* ---- datasets ---- */

laif_status laif_dataset_synth(uint64_t seed, int per_class, laif_dataset** out) {
  if (!out) return invalid("null output handle");
  if (per_class < 1) return invalid("per_class must be at least 1");
  return guarded([&] { *out = new laif_dataset{laif::synth_glyphs(seed, per_class)}; });
}

laif_status laif_dataset_open(const char* dir, laif_dataset** out) {
  if (!out) return invalid("null output handle");
  if (!dir) return invalid("null directory");
  return guarded([&] { *out = new laif_dataset{laif::load_dataset(dir)}; });
}

laif_status laif_dataset_write(const laif_dataset* ds, const char* dir) {
  if (!ds) return invalid("null dataset");
  if (!dir) return invalid("null directory");
  return guarded([&] { laif::write_dataset(ds->ds, dir); });
}

int64_t laif_dataset_size(const laif_dataset* ds) {
  return ds ? static_cast<int64_t>(ds->ds.samples.size()) : -1;
}

int laif_dataset_class_count(const laif_dataset* ds) {
  return ds ? static_cast<int>(ds->ds.class_names.size()) : -1;
}

void laif_dataset_free(laif_dataset* ds) { delete ds; }

/* ---- models ---- */

laif_status laif_recognizer_new(const char* scale, int head_classes, uint64_t seed, laif_model** out) {
  if (!out) return invalid("null output handle");
  if (!scale) return invalid("null scale");
  return guarded([&] {
    laif::RecognizerSpec spec;
    spec.scale = scale;
    spec.head_classes = head_classes;
    laif::Model m = laif::build_recognizer(spec);
    laif::Rng rng(seed);
    m.net.init(rng);
    m.class_names = default_class_names(head_classes);
    *out = new laif_model{std::move(m)};
  });
}

laif_status laif_gan_new(int latent, uint64_t seed, laif_model** g_out, laif_model** d_out) {
  if (!g_out || !d_out) return invalid("null output handle");
  return guarded([&] {
    laif::GanSpec spec;
    spec.latent_dim = latent;
    laif::Model g = laif::build_generator(spec);
    laif::Model d = laif::build_discriminator(spec);
    laif::Rng rng(seed);
    g.net.init(rng);
    d.net.init(rng);
    *g_out = new laif_model{std::move(g)};
    *d_out = new laif_model{std::move(d)};
  });
}

laif_status laif_model_open(const char* path, const char* require_arch, laif_model** out) {
  if (!out) return invalid("null output handle");
  if (!path) return invalid("null path");
  return guarded([&] {
    *out = new laif_model{laif::load_checkpoint(path, require_arch ? require_arch : "")};
  });
}

laif_status laif_model_save(laif_model* m, const char* path) {
  if (!m) return invalid("null model");
  if (!path) return invalid("null path");
  return guarded([&] { laif::save_checkpoint(m->m, path); });
}

laif_status laif_model_replace_head(laif_model* m, int new_classes, uint64_t seed) {
  if (!m) return invalid("null model");
  return guarded([&] {
    laif::Rng rng(seed);
    laif::replace_head(m->m, new_classes, rng);
    m->m.class_names = default_class_names(new_classes);
  });
}

const char* laif_model_arch(const laif_model* m) { return m ? m->m.arch.c_str() : ""; }

int laif_model_class_count(const laif_model* m) {
  return m ? static_cast<int>(m->m.class_names.size()) : -1;
}

const char* laif_model_class_name(const laif_model* m, int index) {
  if (!m || index < 0 || static_cast<std::size_t>(index) >= m->m.class_names.size()) return nullptr;
  return m->m.class_names[static_cast<std::size_t>(index)].c_str();
}

int64_t laif_model_param_count(const laif_model* m) {
  if (!m) return -1;
  return laif::param_count(const_cast<laif_model*>(m)->m.net);
}

void laif_model_free(laif_model* m) { delete m; }

/* ---- inference ---- */

laif_status laif_recognize(laif_model* m, const float* pixels, int h, int w, float* probs,
                           int probs_len) {
  if (!m) return invalid("null model");
  if (!pixels || !probs) return invalid("null buffer");
  if (h < 1 || w < 1) return invalid("image must be at least 1x1");
  if (probs_len != laif_model_class_count(m)) return invalid("probs_len must equal the class count");
  return guarded([&] {
    laif::Tensor img(laif::Shape{1, 1, h, w});
    std::memcpy(img.data(), pixels, sizeof(float) * static_cast<std::size_t>(h) * w);
    recognize_tensor(m, std::move(img), probs, probs_len);
  });
}

laif_status laif_recognize_file(laif_model* m, const char* pgm_path, float* probs, int probs_len) {
  if (!m) return invalid("null model");
  if (!pgm_path || !probs) return invalid("null buffer");
  if (probs_len != laif_model_class_count(m)) return invalid("probs_len must equal the class count");
  return guarded([&] {
    laif::Tensor flat = laif::read_pgm(pgm_path);  // [1,H,W]
    laif::Tensor img(laif::Shape{1, flat.shape().dim(0), flat.shape().dim(1), flat.shape().dim(2)});
    img.values() = flat.values();
    recognize_tensor(m, std::move(img), probs, probs_len);
  });
}

laif_status laif_generate_grid(laif_model* g, uint64_t seed, int count, int cols,
                               const char* out_pgm) {
  if (!g) return invalid("null model");
  if (!out_pgm) return invalid("null path");
  if (count < 1 || cols < 1) return invalid("count and cols must be at least 1");
  if (g->m.arch.rfind("dcgan-g", 0) != 0) return invalid("model is not a generator");
  return guarded([&] {
    const int latent = g->m.net.input_shape().dim(1);
    laif::Rng rng(seed);
    laif::Tensor z(laif::Shape{count, latent});
    for (std::int64_t i = 0; i < z.numel(); ++i) z[static_cast<std::size_t>(i)] = static_cast<float>(rng.normal());
    g->m.net.set_mode(false);
    laif::Tape tape(/*grads_enabled=*/false);
    const laif::Tensor imgs = tape.value(g->m.net.forward(tape, tape.constant(std::move(z))));
    laif::save_grid(imgs, cols, out_pgm, /*symmetric_range=*/true);
  });
}

/* ---- training ---- */

void laif_rec_train_config_defaults(laif_rec_train_config* cfg) {
  if (!cfg) return;
  cfg->epochs = 40;
  cfg->batch = 32;
  cfg->lr = 1e-4f;
  cfg->weight_decay = 1e-4f;
  cfg->momentum = 0.9f;
  cfg->val_fraction = 0.2;
  cfg->seed = 1;
}

laif_status laif_train_recognizer(laif_model* m, const laif_dataset* ds,
                                  const laif_rec_train_config* cfg, const char* out_dir,
                                  laif_rec_epoch_fn on_epoch, void* user) {
  if (!m || !ds || !cfg) return invalid("null handle or config");
  if (!out_dir) return invalid("null output directory");
  if (cfg->epochs < 0) return invalid("epochs must be non-negative");
  if (cfg->batch < 1) return invalid("batch must be at least 1");
  if (!(cfg->val_fraction >= 0.0 && cfg->val_fraction < 1.0))
    return invalid("val_fraction must be in [0, 1)");
  if (static_cast<int>(ds->ds.class_names.size()) != laif_model_class_count(m))
    return invalid("dataset class count does not match the model head");
  return guarded([&] {
    const std::filesystem::path dir(out_dir);
    std::filesystem::create_directories(dir);
    auto [train_ds, val_ds] = laif::split_dataset(ds->ds, cfg->val_fraction);
    m->m.class_names = ds->ds.class_names;

    laif::ClassifierConfig cc;
    cc.epochs = cfg->epochs;
    cc.batch = cfg->batch;
    cc.seed = cfg->seed;
    cc.sgd = laif::SgdConfig{cfg->lr, cfg->momentum, cfg->weight_decay};
    cc.best_path = (dir / "best.ckpt").string();
    if (on_epoch) {
      cc.on_epoch = [on_epoch, user](const laif::EpochRecord& r) {
        on_epoch(user, r.epoch, r.train_accuracy, r.loss, r.val_accuracy);
      };
    }
    const std::vector<laif::EpochRecord> records =
        laif::train_classifier(m->m, train_ds, val_ds, cc);
    laif::write_metrics_csv(records, (dir / "metrics.csv").string());
    laif::save_checkpoint(m->m, (dir / "final.ckpt").string());
    // No epoch improved validation accuracy (e.g. a zero-epoch run): the best
    // artifact is the final state.
    if (!std::filesystem::exists(dir / "best.ckpt"))
      laif::save_checkpoint(m->m, (dir / "best.ckpt").string());
  });
}

void laif_gan_train_config_defaults(laif_gan_train_config* cfg) {
  if (!cfg) return;
  cfg->epochs = 2000;
  cfg->batch = 32;
  cfg->lr = 2e-4f;
  cfg->beta1 = 0.5f;
  cfg->beta2 = 0.999f;
  cfg->sample_every = 0;
  cfg->seed = 1;
}

laif_status laif_train_gan(laif_model* g, laif_model* d, const laif_dataset* ds,
                           const laif_gan_train_config* cfg, const char* out_dir,
                           laif_gan_epoch_fn on_epoch, void* user) {
  if (!g || !d || !ds || !cfg) return invalid("null handle or config");
  if (!out_dir) return invalid("null output directory");
  if (cfg->epochs < 0) return invalid("epochs must be non-negative");
  if (cfg->batch < 1) return invalid("batch must be at least 1");
  if (cfg->sample_every < 0) return invalid("sample_every must be non-negative");
  if (g->m.arch.rfind("dcgan-g", 0) != 0) return invalid("g is not a generator");
  if (d->m.arch.rfind("dcgan-d", 0) != 0) return invalid("d is not a discriminator");
  return guarded([&] {
    const std::filesystem::path dir(out_dir);
    std::filesystem::create_directories(dir);

    laif::GanConfig gc;
    gc.epochs = cfg->epochs;
    gc.batch = cfg->batch;
    gc.seed = cfg->seed;
    gc.adam.lr = cfg->lr;
    gc.adam.beta1 = cfg->beta1;
    gc.adam.beta2 = cfg->beta2;
    gc.sample_every = cfg->sample_every;
    gc.sample_dir = (dir / "samples").string();
    if (on_epoch) {
      gc.on_epoch = [on_epoch, user](const laif::GanEpochRecord& r) {
        on_epoch(user, r.epoch, r.d_loss, r.g_loss);
      };
    }
    const std::vector<laif::GanEpochRecord> records = laif::train_gan(g->m, d->m, ds->ds, gc);
    laif::write_metrics_csv(records, (dir / "metrics.csv").string());
    laif::save_checkpoint(g->m, (dir / "g.ckpt").string());
    laif::save_checkpoint(d->m, (dir / "d.ckpt").string());
  });
}

}  // extern "C"
