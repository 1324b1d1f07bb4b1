// laif: synthesize glyph data, train the recognizer and the DCGAN, recognize
// images, and render sample grids. Exit codes: 0 success, 2 usage/input
// error, 3 numeric abort during training. Flag values win over the LAIF_SEED
// and LAIF_OUT environment fallbacks, which win over built-in defaults. Every
// run that writes into a directory drops a run.json flag snapshot beside its
// outputs so it can be reproduced exactly.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "laif/laif.h"

namespace {

int exit_for(laif_status s) {
  if (s == LAIF_OK) return 0;
  return s == LAIF_NUMERIC ? 3 : 2;
}

int fail_with(laif_status s) {
  std::fprintf(stderr, "error: %s\n", laif_last_error());
  return exit_for(s);
}

int usage_error(const std::string& msg) {
  std::fprintf(stderr, "error: %s\n", msg.c_str());
  return 2;
}

/// LAIF_SEED fallback for --seed; unset or empty keeps the built-in 1.
std::uint64_t default_seed() {
  const char* env = std::getenv("LAIF_SEED");
  if (!env || !*env) return 1;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(env, &end, 10);
  if (end == env || *end != '\0') {
    std::fprintf(stderr, "error: LAIF_SEED is not an integer: %s\n", env);
    std::exit(2);
  }
  return v;
}

/// LAIF_OUT fallback for directory-valued --out flags.
std::string default_out() {
  const char* env = std::getenv("LAIF_OUT");
  return (env && *env) ? env : "out";
}

void write_run_json(const std::filesystem::path& dir, const nlohmann::json& snapshot) {
  std::filesystem::create_directories(dir);
  std::ofstream f(dir / "run.json");
  f << snapshot.dump(2) << "\n";
  if (!f) {
    std::fprintf(stderr, "error: cannot write %s\n", (dir / "run.json").string().c_str());
    std::exit(2);
  }
}

struct ModelPtr {
  laif_model* p = nullptr;
  ~ModelPtr() { laif_model_free(p); }
};

struct DatasetPtr {
  laif_dataset* p = nullptr;
  ~DatasetPtr() { laif_dataset_free(p); }
};

int cmd_synth(const std::string& out, std::uint64_t seed, int per_class) {
  DatasetPtr ds;
  if (laif_status s = laif_dataset_synth(seed, per_class, &ds.p); s != LAIF_OK) return fail_with(s);
  if (laif_status s = laif_dataset_write(ds.p, out.c_str()); s != LAIF_OK) return fail_with(s);
  write_run_json(out, {{"command", "synth"}, {"out", out}, {"seed", seed}, {"per_class", per_class}});
  std::printf("wrote %lld samples in %d classes to %s\n",
              static_cast<long long>(laif_dataset_size(ds.p)), laif_dataset_class_count(ds.p),
              out.c_str());
  return 0;
}

void print_rec_epoch(void*, int epoch, double train_acc, double loss, double val_acc) {
  std::printf("epoch %d: train %.6f loss %.6f val %.6f\n", epoch, train_acc, loss, val_acc);
  std::fflush(stdout);
}

int cmd_train_rec(const std::string& data, const std::string& init_from, const std::string& scale,
                  const std::string& out, std::uint64_t seed, laif_rec_train_config cfg) {
  DatasetPtr ds;
  if (laif_status s = laif_dataset_open(data.c_str(), &ds.p); s != LAIF_OK) return fail_with(s);
  const int classes = laif_dataset_class_count(ds.p);

  ModelPtr model;
  if (!init_from.empty()) {
    // Transfer flow: load the pretrained backbone, then give it a fresh head
    // sized for this dataset's class space.
    if (laif_status s = laif_model_open(init_from.c_str(), "rec", &model.p); s != LAIF_OK)
      return fail_with(s);
    if (laif_status s = laif_model_replace_head(model.p, classes, seed); s != LAIF_OK)
      return fail_with(s);
  } else {
    if (laif_status s = laif_recognizer_new(scale.c_str(), classes, seed, &model.p); s != LAIF_OK)
      return fail_with(s);
  }

  write_run_json(out, {{"command", "train-rec"},
                       {"data", data},
                       {"init_from", init_from},
                       {"scale", scale},
                       {"out", out},
                       {"seed", seed},
                       {"epochs", cfg.epochs},
                       {"batch", cfg.batch},
                       {"lr", cfg.lr},
                       {"wd", cfg.weight_decay},
                       {"momentum", cfg.momentum},
                       {"val_fraction", cfg.val_fraction}});

  std::printf("train-rec: scale=%s classes=%d epochs=%d batch=%d lr=%g wd=%g momentum=%g seed=%llu\n",
              scale.c_str(), classes, cfg.epochs, cfg.batch, static_cast<double>(cfg.lr),
              static_cast<double>(cfg.weight_decay), static_cast<double>(cfg.momentum),
              static_cast<unsigned long long>(seed));
  cfg.seed = seed;
  if (laif_status s = laif_train_recognizer(model.p, ds.p, &cfg, out.c_str(), print_rec_epoch, nullptr);
      s != LAIF_OK)
    return fail_with(s);
  std::printf("wrote metrics.csv, best.ckpt, final.ckpt to %s\n", out.c_str());
  return 0;
}

int cmd_recognize(const std::string& model_path, const std::string& image, bool all) {
  ModelPtr model;
  if (laif_status s = laif_model_open(model_path.c_str(), "rec", &model.p); s != LAIF_OK)
    return fail_with(s);
  const int classes = laif_model_class_count(model.p);
  std::vector<float> probs(static_cast<std::size_t>(classes));
  if (laif_status s = laif_recognize_file(model.p, image.c_str(), probs.data(), classes);
      s != LAIF_OK)
    return fail_with(s);

  // Descending probability, ties by class index.
  std::vector<int> order(probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return probs[static_cast<std::size_t>(a)] > probs[static_cast<std::size_t>(b)]; });
  const int shown = all ? classes : std::min(classes, 3);
  for (int i = 0; i < shown; ++i) {
    const int c = order[static_cast<std::size_t>(i)];
    std::printf("%s %.6f\n", laif_model_class_name(model.p, c), probs[static_cast<std::size_t>(c)]);
  }
  return 0;
}

void print_gan_epoch(void*, int epoch, double d_loss, double g_loss) {
  std::printf("epoch %d: d %.6f g %.6f\n", epoch, d_loss, g_loss);
  std::fflush(stdout);
}

int cmd_train_gan(const std::string& data, const std::string& out, std::uint64_t seed, int latent,
                  laif_gan_train_config cfg) {
  DatasetPtr ds;
  if (laif_status s = laif_dataset_open(data.c_str(), &ds.p); s != LAIF_OK) return fail_with(s);
  ModelPtr g, d;
  if (laif_status s = laif_gan_new(latent, seed, &g.p, &d.p); s != LAIF_OK) return fail_with(s);

  write_run_json(out, {{"command", "train-gan"},
                       {"data", data},
                       {"out", out},
                       {"seed", seed},
                       {"epochs", cfg.epochs},
                       {"batch", cfg.batch},
                       {"latent", latent},
                       {"lr", cfg.lr},
                       {"beta1", cfg.beta1},
                       {"beta2", cfg.beta2},
                       {"sample_every", cfg.sample_every}});

  std::printf("train-gan: epochs=%d batch=%d latent=%d lr=%g beta1=%g beta2=%g seed=%llu\n",
              cfg.epochs, cfg.batch, latent, static_cast<double>(cfg.lr),
              static_cast<double>(cfg.beta1), static_cast<double>(cfg.beta2),
              static_cast<unsigned long long>(seed));
  cfg.seed = seed;
  if (laif_status s = laif_train_gan(g.p, d.p, ds.p, &cfg, out.c_str(), print_gan_epoch, nullptr);
      s != LAIF_OK)
    return fail_with(s);
  std::printf("wrote metrics.csv, g.ckpt, d.ckpt to %s\n", out.c_str());
  return 0;
}

int cmd_generate(const std::string& model_path, int count, int cols, std::uint64_t seed,
                 const std::string& out) {
  ModelPtr g;
  if (laif_status s = laif_model_open(model_path.c_str(), "dcgan-g", &g.p); s != LAIF_OK)
    return fail_with(s);
  const std::filesystem::path out_path(out);
  if (out_path.has_parent_path()) std::filesystem::create_directories(out_path.parent_path());
  if (laif_status s = laif_generate_grid(g.p, seed, count, cols, out.c_str()); s != LAIF_OK)
    return fail_with(s);
  const std::filesystem::path dir = out_path.has_parent_path() ? out_path.parent_path() : ".";
  write_run_json(dir, {{"command", "generate"},
                       {"model", model_path},
                       {"count", count},
                       {"cols", cols},
                       {"seed", seed},
                       {"out", out}});
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"glyph recognizer and DCGAN trainer"};
  app.require_subcommand(1);

  const std::uint64_t seed_default = default_seed();
  const std::string out_default = default_out();

  // synth
  auto* synth = app.add_subcommand("synth", "write a deterministic synthetic glyph dataset");
  std::string synth_out = out_default;
  std::uint64_t synth_seed = seed_default;
  int per_class = 10;
  synth->add_option("--out", synth_out, "output directory")->capture_default_str();
  synth->add_option("--seed", synth_seed, "dataset seed")->capture_default_str();
  synth->add_option("--per-class", per_class, "samples per class")->capture_default_str();

  // train-rec
  auto* trec = app.add_subcommand("train-rec", "train the glyph recognizer");
  std::string trec_data, trec_init, trec_scale = "desk", trec_out = out_default;
  std::uint64_t trec_seed = seed_default;
  laif_rec_train_config rcfg;
  laif_rec_train_config_defaults(&rcfg);
  trec->add_option("--data", trec_data, "dataset directory")->required();
  trec->add_option("--init-from", trec_init,
                   "pretrained recognizer checkpoint; its head is replaced for this dataset");
  trec->add_option("--scale", trec_scale, "network plan: desk or vgg19")->capture_default_str();
  trec->add_option("--epochs", rcfg.epochs, "training epochs")->capture_default_str();
  trec->add_option("--batch", rcfg.batch, "batch size")->capture_default_str();
  trec->add_option("--lr", rcfg.lr, "learning rate")->capture_default_str();
  trec->add_option("--wd", rcfg.weight_decay, "weight decay")->capture_default_str();
  trec->add_option("--momentum", rcfg.momentum, "SGD momentum")->capture_default_str();
  trec->add_option("--val-fraction", rcfg.val_fraction, "per-class tail held out for validation")
      ->capture_default_str();
  trec->add_option("--seed", trec_seed, "training seed")->capture_default_str();
  trec->add_option("--out", trec_out, "output directory")->capture_default_str();

  // recognize
  auto* rec = app.add_subcommand("recognize", "print class probabilities for one image");
  std::string rec_model, rec_image;
  bool rec_all = false;
  rec->add_option("--model", rec_model, "recognizer checkpoint")->required();
  rec->add_option("--image", rec_image, "binary PGM image")->required();
  rec->add_flag("--all", rec_all, "print every class instead of the top 3");

  // train-gan
  auto* tgan = app.add_subcommand("train-gan", "train the DCGAN on a glyph dataset");
  std::string tgan_data, tgan_out = out_default;
  std::uint64_t tgan_seed = seed_default;
  int tgan_latent = 100;
  laif_gan_train_config gcfg;
  laif_gan_train_config_defaults(&gcfg);
  tgan->add_option("--data", tgan_data, "dataset directory")->required();
  tgan->add_option("--epochs", gcfg.epochs, "update cycles")->capture_default_str();
  tgan->add_option("--batch", gcfg.batch, "batch size")->capture_default_str();
  tgan->add_option("--latent", tgan_latent, "latent dimension")->capture_default_str();
  tgan->add_option("--lr", gcfg.lr, "Adam learning rate")->capture_default_str();
  tgan->add_option("--beta1", gcfg.beta1, "Adam beta1")->capture_default_str();
  tgan->add_option("--beta2", gcfg.beta2, "Adam beta2")->capture_default_str();
  tgan->add_option("--sample-every", gcfg.sample_every,
                   "write samples/epoch_<N>.pgm every N epochs; 0 disables")
      ->capture_default_str();
  tgan->add_option("--seed", tgan_seed, "training seed")->capture_default_str();
  tgan->add_option("--out", tgan_out, "output directory")->capture_default_str();

  // generate
  auto* gen = app.add_subcommand("generate", "sample a generator checkpoint into a PGM grid");
  std::string gen_model, gen_out = "grid.pgm";
  int gen_count = 64, gen_cols = 8;
  std::uint64_t gen_seed = seed_default;
  gen->add_option("--model", gen_model, "generator checkpoint")->required();
  gen->add_option("--count", gen_count, "number of samples")->capture_default_str();
  gen->add_option("--cols", gen_cols, "tiles per row")->capture_default_str();
  gen->add_option("--seed", gen_seed, "latent seed")->capture_default_str();
  gen->add_option("--out", gen_out, "output PGM path")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }

  if (synth->parsed()) {
    if (per_class < 1) return usage_error("--per-class must be at least 1");
    return cmd_synth(synth_out, synth_seed, per_class);
  }
  if (trec->parsed()) return cmd_train_rec(trec_data, trec_init, trec_scale, trec_out, trec_seed, rcfg);
  if (rec->parsed()) return cmd_recognize(rec_model, rec_image, rec_all);
  if (tgan->parsed()) return cmd_train_gan(tgan_data, tgan_out, tgan_seed, tgan_latent, gcfg);
  if (gen->parsed()) return cmd_generate(gen_model, gen_count, gen_cols, gen_seed, gen_out);
  return usage_error("no subcommand");
}
