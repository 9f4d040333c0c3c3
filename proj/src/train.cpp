#include "pifnet/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "pifnet/errors.hpp"

namespace pifnet {

std::string to_string(Augmentation a) {
  switch (a) {
    case Augmentation::none:
      return "none";
    case Augmentation::flips:
      return "flips";
    case Augmentation::flips_translation:
      return "flips+translation";
  }
  return "none";
}

Augmentation parse_augmentation(const std::string& s) {
  if (s == "none") return Augmentation::none;
  if (s == "flips") return Augmentation::flips;
  if (s == "flips+translation") return Augmentation::flips_translation;
  throw ConfigError("unknown augmentation '" + s + "' (expected none, flips or flips+translation)");
}

void validate(const TrainConfig& cfg) {
  if (!(cfg.learning_rate > 0.0)) throw ConfigError("train.learning_rate must be positive");
  if (!(cfg.weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be non-negative");
  if (cfg.batch_size < 2) throw ConfigError("train.batch_size must be at least 2 (batch norm)");
  if (cfg.max_epochs < 1) throw ConfigError("train.max_epochs must be at least 1");
  if (cfg.patience < 1) throw ConfigError("train.patience must be at least 1");
}

void check_augmentation_policy(ModelKind kind, const TrainConfig& cfg) {
  if (kind == ModelKind::pif && cfg.augmentation == Augmentation::flips_translation) {
    throw ConfigError(
        "PIF models must not be trained with translation augmentation: shifted inputs break the "
        "fixed patch-to-region alignment (use augmentation = flips)");
  }
}

Augmentation default_augmentation(ModelKind kind) {
  return kind == ModelKind::pif ? Augmentation::flips : Augmentation::flips_translation;
}

bool EarlyStopState::observe(std::size_t epoch, double metric, const Model& model) {
  if (metric > best_metric_) {
    best_metric_ = metric;
    best_epoch_ = epoch;
    epochs_since_improvement_ = 0;
    best_state_ = model.state();
    return true;
  }
  epochs_since_improvement_ = epoch - best_epoch_;
  return false;
}

void sgd_step(std::span<const ParamRef> params, const TrainConfig& cfg) {
  for (const auto& p : params) {
    if (p.value->shape() != p.grad->shape()) {
      throw ShapeError("sgd_step: gradient shape mismatch for " + p.name);
    }
    auto v = p.value->data();
    auto g = p.grad->data();
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] -= cfg.learning_rate * (g[i] + cfg.weight_decay * v[i]);
    }
  }
}

double balanced_accuracy(std::span<const int> predictions, std::span<const int> labels,
                         std::size_t num_classes) {
  if (labels.empty()) throw MetricError("balanced accuracy of an empty set");
  if (predictions.size() != labels.size()) {
    throw MetricError("balanced accuracy: " + std::to_string(predictions.size()) + " predictions for " +
                      std::to_string(labels.size()) + " labels");
  }
  std::vector<std::size_t> total(num_classes, 0), hit(num_classes, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int l = labels[i];
    if (l < 0 || static_cast<std::size_t>(l) >= num_classes) {
      throw MetricError("label " + std::to_string(l) + " outside [0, " + std::to_string(num_classes) + ")");
    }
    ++total[static_cast<std::size_t>(l)];
    if (predictions[i] == l) ++hit[static_cast<std::size_t>(l)];
  }
  double sum = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (total[c] == 0) continue;
    sum += static_cast<double>(hit[c]) / static_cast<double>(total[c]);
    ++present;
  }
  return sum / static_cast<double>(present);
}

Tensor flip_last_axis(const Tensor& x) {
  if (x.rank() < 3) throw ShapeError("flip: tensor has no spatial axes");
  const std::size_t w = x.shape().back();
  Tensor y = Tensor::zeros_like(x);
  for (std::size_t row = 0; row < x.size() / w; ++row) {
    for (std::size_t i = 0; i < w; ++i) y[row * w + i] = x[row * w + (w - 1 - i)];
  }
  return y;
}

Tensor augment_flip(const Tensor& x, Rng& rng) { return rng.bernoulli(0.5) ? flip_last_axis(x) : x; }

Tensor shift_spatial(const Tensor& x, std::span<const long> shifts) {
  if (x.rank() < 3 || shifts.size() != x.rank() - 2) {
    throw ShapeError("shift: one shift per spatial axis required");
  }
  Tensor y = Tensor::zeros_like(x);
  const std::size_t rank = x.rank();
  std::vector<std::size_t> strides(rank, 1);
  for (std::size_t a = rank - 1; a-- > 0;) strides[a] = strides[a + 1] * x.dim(a + 1);
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t flat = 0; flat < x.size(); ++flat) {
    std::size_t rem = flat;
    for (std::size_t a = 0; a < rank; ++a) {
      idx[a] = rem / strides[a];
      rem %= strides[a];
    }
    std::size_t dst = 0;
    bool inside = true;
    for (std::size_t a = 0; a < rank; ++a) {
      long pos = static_cast<long>(idx[a]);
      if (a >= 2) pos += shifts[a - 2];
      if (pos < 0 || pos >= static_cast<long>(x.dim(a))) {
        inside = false;
        break;
      }
      dst += static_cast<std::size_t>(pos) * strides[a];
    }
    if (inside) y[dst] = x[flat];
  }
  return y;
}

Tensor augment_translate(const Tensor& x, Rng& rng, std::size_t max_shift) {
  if (x.rank() < 3) throw ShapeError("translate: tensor has no spatial axes");
  for (std::size_t a = 2; a < x.rank(); ++a) {
    if (max_shift >= x.dim(a)) {
      throw InvalidArgumentError("translate: max_shift " + std::to_string(max_shift) +
                                 " must be smaller than spatial extent " + std::to_string(x.dim(a)));
    }
  }
  std::vector<long> shifts;
  const auto m = static_cast<std::int64_t>(max_shift);
  for (std::size_t a = 2; a < x.rank(); ++a) shifts.push_back(static_cast<long>(rng.integer(-m, m)));
  return shift_spatial(x, shifts);
}

Dataset subset_sample(const Dataset& d, double fraction, Rng& rng, std::size_t num_classes) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw InvalidArgumentError("subset fraction must lie in (0, 1]");
  }
  const std::size_t n_total = d.size();
  const auto n = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n_total)));
  if (n == 0) throw SubsetError("subset of fraction " + std::to_string(fraction) + " is empty");
  std::vector<std::size_t> idx(n_total);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n_total - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(n);
  Dataset out = take(d, idx);
  const auto before = class_counts(d.labels, num_classes);
  const auto after = class_counts(out.labels, num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (before[c] > 0 && after[c] < 2) {
      throw SubsetError("class " + std::to_string(c) + " collapses to " + std::to_string(after[c]) +
                        " sample(s) in a subset of " + std::to_string(n));
    }
  }
  return out;
}

std::vector<int> predict(Model& model, const Tensor& images, std::size_t batch_size) {
  const std::size_t n = images.dim(0);
  const std::size_t per = images.size() / n;
  std::vector<int> preds;
  preds.reserve(n);
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t count = std::min(batch_size, n - start);
    Shape shape = images.shape();
    shape[0] = count;
    std::vector<double> chunk(images.data().begin() + start * per,
                              images.data().begin() + (start + count) * per);
    const Tensor logits = model.forward(Tensor::from_data(shape, std::move(chunk)), Mode::eval);
    const std::size_t k = logits.dim(1);
    for (std::size_t i = 0; i < count; ++i) {
      const auto row = logits.data().subspan(i * k, k);
      preds.push_back(static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()));
    }
  }
  return preds;
}

double evaluate_balanced_accuracy(Model& model, const Dataset& d) {
  const auto preds = predict(model, d.images);
  return balanced_accuracy(preds, d.labels, model.spec().num_classes);
}

TrainHistory train(Model& model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg) {
  validate(cfg);
  check_augmentation_policy(model.kind(), cfg);
  train_set.validate();
  val_set.validate();
  if (train_set.size() < 2) throw InvalidArgumentError("training set needs at least 2 samples");

  Rng rng = Rng(cfg.seed).derive(streams::kData);
  const std::size_t n = train_set.size();
  const std::size_t per = train_set.images.size() / n;
  const Shape sample_shape = [&] {
    Shape s = train_set.images.shape();
    s[0] = 1;
    return s;
  }();
  const bool flips = cfg.augmentation != Augmentation::none;
  const bool translate = cfg.augmentation == Augmentation::flips_translation;

  TrainHistory h;
  EarlyStopState stop;
  std::vector<std::size_t> order(n);
  auto params = model.parameters();

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = n; i-- > 1;) {
      std::swap(order[i], order[static_cast<std::size_t>(rng.below(i + 1))]);
    }

    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t count = std::min(cfg.batch_size, n - start);
      if (count < 2) break;
      Shape bshape = train_set.images.shape();
      bshape[0] = count;
      std::vector<double> batch(count * per);
      std::vector<int> labels(count);
      for (std::size_t i = 0; i < count; ++i) {
        const std::size_t src = order[start + i];
        labels[i] = train_set.labels[src];
        std::vector<double> sample(train_set.images.data().begin() + src * per,
                                   train_set.images.data().begin() + (src + 1) * per);
        Tensor x = Tensor::from_data(sample_shape, std::move(sample));
        if (flips) x = augment_flip(x, rng);
        if (translate) x = augment_translate(x, rng, cfg.translation_max);
        std::copy(x.data().begin(), x.data().end(), batch.begin() + i * per);
      }
      const Tensor logits = model.forward(Tensor::from_data(bshape, std::move(batch)), Mode::train);
      LossResult loss = softmax_cross_entropy(logits, labels);
      if (!std::isfinite(loss.loss)) throw TrainingDivergedError(epoch);
      model.backward(loss.dlogits);
      sgd_step(params, cfg);
      loss_sum += loss.loss * static_cast<double>(count);
      seen += count;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(seen);
    rec.val_balanced_accuracy = evaluate_balanced_accuracy(model, val_set);
    rec.is_best = stop.observe(epoch, rec.val_balanced_accuracy, model);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    h.epochs.push_back(rec);
    h.stop_iteration = epoch;
    if (stop.should_stop(cfg.patience)) break;
  }

  h.best_epoch = stop.best_epoch();
  h.best_val_bacc = stop.best_metric();
  model.load_state(stop.best_state());
  return h;
}

std::string history_csv(const TrainHistory& h) {
  std::string out = "epoch,train_loss,val_balanced_accuracy,is_best\n";
  char buf[128];
  for (const auto& e : h.epochs) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%d\n", e.epoch, e.train_loss,
                  e.val_balanced_accuracy, e.is_best ? 1 : 0);
    out += buf;
  }
  return out;
}

}  // namespace pifnet
