#include "core/train.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "core/checkpoint.hpp"

namespace laif {

namespace {

// Stream tags for deriving independent RNGs from the run seed.
constexpr std::uint64_t kTagDropout = 11;
constexpr std::uint64_t kTagLatent = 12;
constexpr std::uint64_t kTagProbe = 13;
constexpr std::uint64_t kTagShuffleBase = 1000;

void check_finite(double loss, const std::string& where) {
  if (!std::isfinite(loss)) fail(ErrorKind::kNumericAbort, "non-finite loss at " + where);
}

Tensor draw_normal(Rng& rng, Shape shape) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<float>(rng.normal());
  return t;
}

}  // namespace

std::vector<EpochRecord> train_classifier(Model& model, const Dataset& train_ds, const Dataset& val_ds,
                                          const ClassifierConfig& cfg) {
  const std::vector<ParamSlot*> params = collect_params(model.net);
  Sgd opt(params, cfg.sgd);
  model.net.reseed(Rng::mix(cfg.seed, kTagDropout));
  std::vector<EpochRecord> records;
  double best_val = -1.0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    model.net.set_mode(true);
    const std::vector<Batch> batches =
        make_batches(train_ds, cfg.batch, Rng::mix(cfg.seed, kTagShuffleBase + static_cast<std::uint64_t>(epoch)),
                     Normalize::kUnit);
    double loss_sum = 0.0, acc_sum = 0.0;
    std::int64_t seen = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      const Batch& batch = batches[b];
      Tape tape;
      Var logits = model.net.forward(tape, tape.constant(batch.x));
      Tape::SoftmaxCeOut out = tape.softmax_cross_entropy(logits, batch.labels);
      const double loss = tape.value(out.loss)[0];
      check_finite(loss, "epoch " + std::to_string(epoch) + " batch " + std::to_string(b));
      zero_grads(params);
      tape.backward(out.loss);
      opt.step();
      const auto n = static_cast<std::int64_t>(batch.labels.size());
      loss_sum += loss * static_cast<double>(n);
      acc_sum += accuracy(out.probs, batch.labels) * static_cast<double>(n);
      seen += n;
    }
    const auto [val_acc, val_loss] = evaluate(model, val_ds, cfg.batch);
    (void)val_loss;
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_accuracy = seen ? acc_sum / static_cast<double>(seen) : 0.0;
    rec.loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;
    rec.val_accuracy = val_acc;
    records.push_back(rec);
    if (cfg.on_epoch) cfg.on_epoch(rec);
    if (val_acc > best_val) {
      best_val = val_acc;
      if (!cfg.best_path.empty()) save_checkpoint(model, cfg.best_path);
    }
  }
  return records;
}

std::pair<double, double> evaluate(Model& model, const Dataset& ds, int batch) {
  const bool was_training = model.net.training();
  model.net.set_mode(false);
  double acc_sum = 0.0, loss_sum = 0.0;
  std::int64_t seen = 0;
  for (const Batch& b : make_batches(ds, batch, /*seed=*/0, Normalize::kUnit)) {
    Tape tape(/*grads_enabled=*/false);
    Var logits = model.net.forward(tape, tape.constant(b.x));
    Tape::SoftmaxCeOut out = tape.softmax_cross_entropy(logits, b.labels);
    const auto n = static_cast<std::int64_t>(b.labels.size());
    acc_sum += accuracy(out.probs, b.labels) * static_cast<double>(n);
    loss_sum += tape.value(out.loss)[0] * static_cast<double>(n);
    seen += n;
  }
  model.net.set_mode(was_training);
  return {acc_sum / static_cast<double>(seen), loss_sum / static_cast<double>(seen)};
}

std::vector<GanEpochRecord> train_gan(Model& g, Model& d, const Dataset& ds, const GanConfig& cfg) {
  const int latent = g.net.input_shape().dim(1);
  const std::vector<ParamSlot*> g_params = collect_params(g.net);
  const std::vector<ParamSlot*> d_params = collect_params(d.net);
  Adam g_opt(g_params, cfg.adam);
  Adam d_opt(d_params, cfg.adam);
  g.net.reseed(Rng::mix(cfg.seed, kTagDropout));
  d.net.reseed(Rng::mix(cfg.seed, kTagDropout + 1));
  Rng z_rng(Rng::mix(cfg.seed, kTagLatent));
  Rng probe_rng(Rng::mix(cfg.seed, kTagProbe));
  const Tensor probe_z = draw_normal(probe_rng, Shape{64, latent});
  if (cfg.sample_every > 0 && !cfg.sample_dir.empty()) std::filesystem::create_directories(cfg.sample_dir);

  std::vector<Batch> batches;
  std::size_t next_batch = 0;
  std::uint64_t pass = 0;
  auto take_batch = [&]() -> const Batch& {
    if (next_batch == batches.size()) {
      batches = make_batches(ds, cfg.batch, Rng::mix(cfg.seed, kTagShuffleBase + pass), Normalize::kSymmetric);
      next_batch = 0;
      ++pass;
    }
    return batches[next_batch++];
  };

  std::vector<GanEpochRecord> records;
  g.net.set_mode(true);
  d.net.set_mode(true);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const Batch& real = take_batch();
    const int b = static_cast<int>(real.labels.size());
    const Tensor ones(Shape{b, 1}, 1.0f);
    const Tensor zeros_t(Shape{b, 1});

    // Discriminator step; the generated batch is produced on a value-only
    // tape (the detach of its graph), so no gradient reaches the generator.
    // G stays in train mode: batch-stat normalization and running-stat
    // updates still happen on this pass.
    double d_loss;
    {
      Tensor fake_imgs;
      {
        Tape gen_tape(/*grads_enabled=*/false);
        fake_imgs = gen_tape.value(g.net.forward(gen_tape, gen_tape.constant(draw_normal(z_rng, Shape{b, latent}))));
      }
      Tape tape;
      Var loss = tape.add(tape.bce(d.net.forward(tape, tape.constant(real.x)), ones),
                          tape.bce(d.net.forward(tape, tape.constant(std::move(fake_imgs))), zeros_t));
      d_loss = tape.value(loss)[0];
      check_finite(d_loss, "epoch " + std::to_string(epoch) + " (d step)");
      zero_grads(d_params);
      tape.backward(loss);
      d_opt.step();
    }

    // Generator step on a fresh latent batch; D gradients are discarded.
    double g_loss;
    {
      Tape tape;
      Var fake = g.net.forward(tape, tape.constant(draw_normal(z_rng, Shape{b, latent})));
      Var loss = tape.bce(d.net.forward(tape, fake), ones);
      g_loss = tape.value(loss)[0];
      check_finite(g_loss, "epoch " + std::to_string(epoch) + " (g step)");
      zero_grads(g_params);
      tape.backward(loss);
      g_opt.step();
    }

    GanEpochRecord rec{epoch, d_loss, g_loss};
    records.push_back(rec);
    if (cfg.on_epoch) cfg.on_epoch(rec);

    if (cfg.sample_every > 0 && epoch % cfg.sample_every == 0 && !cfg.sample_dir.empty()) {
      g.net.set_mode(false);
      Tape tape(/*grads_enabled=*/false);
      const Tensor& imgs = tape.value(g.net.forward(tape, tape.constant(probe_z)));
      save_grid(imgs, 8, cfg.sample_dir + "/epoch_" + std::to_string(epoch) + ".pgm", /*symmetric_range=*/true);
      g.net.set_mode(true);
    }
  }
  return records;
}

void write_metrics_csv(const std::vector<EpochRecord>& records, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path);
  out << "epoch,train_accuracy,loss,val_accuracy\n";
  char line[128];
  for (const EpochRecord& r : records) {
    std::snprintf(line, sizeof line, "%d,%.6f,%.6f,%.6f\n", r.epoch, r.train_accuracy, r.loss, r.val_accuracy);
    out << line;
  }
}

void write_metrics_csv(const std::vector<GanEpochRecord>& records, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path);
  out << "epoch,d_loss,g_loss\n";
  char line[96];
  for (const GanEpochRecord& r : records) {
    std::snprintf(line, sizeof line, "%d,%.6f,%.6f\n", r.epoch, r.d_loss, r.g_loss);
    out << line;
  }
}

}  // namespace laif
