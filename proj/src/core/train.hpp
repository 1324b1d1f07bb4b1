#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "core/data.hpp"
#include "core/models.hpp"
#include "core/optim.hpp"

namespace laif {

struct EpochRecord {
  int epoch = 0;
  double train_accuracy = 0.0;
  double loss = 0.0;
  double val_accuracy = 0.0;
};

struct GanEpochRecord {
  int epoch = 0;
  double d_loss = 0.0;
  double g_loss = 0.0;
};

struct ClassifierConfig {
  int epochs = 40;
  int batch = 32;
  std::uint64_t seed = 1;
  SgdConfig sgd;
  std::string best_path;  // best-validation checkpoint target; empty skips it
  std::function<void(const EpochRecord&)> on_epoch;
};

/// SGD + softmax cross-entropy training. Per epoch: train-mode pass over a
/// freshly shuffled split (forward, loss, backward, step per batch), then an
/// eval-mode validation pass. The best-validation checkpoint is written on
/// strict improvement only, so ties keep the earlier epoch. Aborts with
/// NumericAbort on a non-finite loss.
std::vector<EpochRecord> train_classifier(Model& model, const Dataset& train_ds, const Dataset& val_ds,
                                          const ClassifierConfig& cfg);

/// Eval-mode accuracy and mean cross-entropy over a dataset; restores the
/// model's previous mode and mutates nothing.
std::pair<double, double> evaluate(Model& model, const Dataset& ds, int batch = 64);

struct GanConfig {
  int epochs = 2000;
  int batch = 32;
  std::uint64_t seed = 1;
  AdamConfig adam;
  int sample_every = 0;    // write a probe grid every N epochs; 0 disables
  std::string sample_dir;  // destination for epoch_<N>.pgm grids
  std::function<void(const GanEpochRecord&)> on_epoch;
};

/// Adversarial training; one epoch is one update cycle on one batch:
///   D step: bce(d(real),1) + bce(d(g(z) detached),0), Adam step on D only
///   G step: fresh z, bce(d(g(z)),1), Adam step on G only
/// Batches cycle through the dataset and reshuffle each full pass. A fixed
/// 64-row probe z renders progress grids. Aborts on non-finite losses.
std::vector<GanEpochRecord> train_gan(Model& g, Model& d, const Dataset& ds, const GanConfig& cfg);

void write_metrics_csv(const std::vector<EpochRecord>& records, const std::string& path);
void write_metrics_csv(const std::vector<GanEpochRecord>& records, const std::string& path);

}  // namespace laif
