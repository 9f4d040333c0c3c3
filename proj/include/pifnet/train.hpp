#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "pifnet/dataset.hpp"
#include "pifnet/model.hpp"
#include "pifnet/rng.hpp"

namespace pifnet {

enum class Augmentation { none, flips, flips_translation };

std::string to_string(Augmentation a);
Augmentation parse_augmentation(const std::string& s);

struct TrainConfig {
  double learning_rate = 0.1;
  double weight_decay = 1e-4;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 100;
  /// Epochs without strict improvement of validation balanced accuracy.
  std::size_t patience = 10;
  std::uint64_t seed = 0;
  Augmentation augmentation = Augmentation::none;
  std::size_t translation_max = 2;
};

void validate(const TrainConfig& cfg);

/// PIF models rely on aligned inputs, so their preset refuses translation
/// augmentation (ConfigError). Baselines accept every policy.
void check_augmentation_policy(ModelKind kind, const TrainConfig& cfg);
/// flips + translation for the baseline arm, flips only for the PIF arm.
Augmentation default_augmentation(ModelKind kind);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_balanced_accuracy = 0.0;
  bool is_best = false;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  std::size_t stop_iteration = 0;
  std::size_t best_epoch = 0;
  double best_val_bacc = 0.0;
};

/// Strict-improvement early stopping with a weight snapshot.
class EarlyStopState {
 public:
  /// Returns true if `metric` beats the best so far (ties do not count).
  bool observe(std::size_t epoch, double metric, const Model& model);
  bool should_stop(std::size_t patience) const { return epochs_since_improvement_ >= patience; }

  double best_metric() const { return best_metric_; }
  std::size_t best_epoch() const { return best_epoch_; }
  std::size_t epochs_since_improvement() const { return epochs_since_improvement_; }
  const std::vector<Tensor>& best_state() const { return best_state_; }

 private:
  double best_metric_ = -std::numeric_limits<double>::infinity();
  std::size_t best_epoch_ = 0;
  std::size_t epochs_since_improvement_ = 0;
  std::vector<Tensor> best_state_;
};

/// p <- p - lr * (g + weight_decay * p) for every learnable tensor.
void sgd_step(std::span<const ParamRef> params, const TrainConfig& cfg);

/// Mean per-class recall over the classes present in `labels`.
double balanced_accuracy(std::span<const int> predictions, std::span<const int> labels,
                         std::size_t num_classes);

/// Reverses the last (horizontal) spatial axis.
Tensor flip_last_axis(const Tensor& x);
/// Flips with probability 0.5; consumes one uniform.
Tensor augment_flip(const Tensor& x, Rng& rng);
/// Integer shift per spatial axis; vacated entries are zero.
Tensor shift_spatial(const Tensor& x, std::span<const long> shifts);
/// Shift drawn uniformly from [-max_shift, max_shift] per spatial axis, in
/// axis order. Requires max_shift < every spatial extent.
Tensor augment_translate(const Tensor& x, Rng& rng, std::size_t max_shift);

/// round(fraction * N) samples drawn uniformly without replacement. Throws
/// SubsetError if any class ends up with fewer than 2 samples.
Dataset subset_sample(const Dataset& d, double fraction, Rng& rng, std::size_t num_classes = 2);

/// Eval-mode argmax predictions.
std::vector<int> predict(Model& model, const Tensor& images, std::size_t batch_size = 64);
double evaluate_balanced_accuracy(Model& model, const Dataset& d);

/// Mini-batch SGD with early stopping on validation balanced accuracy.
///
/// Random draws come from Rng(seed).derive(streams::kData), consumed per
/// epoch as: one Fisher-Yates shuffle of the training indices, then for each
/// sample in batch order one flip draw (if flips are enabled) followed by
/// one shift draw per spatial axis (if translation is enabled). A trailing
/// batch of a single sample is dropped (batch norm needs two). The best
/// weights are restored before returning.
TrainHistory train(Model& model, const Dataset& train_set, const Dataset& val_set,
                   const TrainConfig& cfg);

/// `epoch,train_loss,val_balanced_accuracy,is_best` with 17 significant digits.
std::string history_csv(const TrainHistory& h);

}  // namespace pifnet
