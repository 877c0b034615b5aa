#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "fsb/adam.hpp"
#include "fsb/data.hpp"
#include "fsb/model.hpp"

namespace fsb {

struct TrainConfig {
  int epochs = 50;      // batch regime
  int episodes = 2000;  // meta regime
  int batch_size = 16;
  int n_way = 5;
  int k_shot = 5;
  int n_query = 16;
  double lr = kDefaultLr;
  AugmentConfig augment;
  /// Episodes between validation evaluations (meta regime).
  int eval_every = 500;
  int val_episodes = 100;
  /// Episode shape used for validation.
  int val_n_way = 5;
  int val_n_query = 16;
  std::uint64_t seed = 0;

  void validate(bool meta) const;
};

struct ValPoint {
  int episode = 0;
  double accuracy = 0;
  bool operator==(const ValPoint&) const = default;
};

struct TrainMetrics {
  std::vector<double> epoch_loss;  // mean loss per epoch (batch regime)
  std::vector<ValPoint> val_curve;
  /// Episode (meta) or epoch (batch) index of the returned parameters.
  int selected_index = 0;
  /// Validation accuracy of the returned parameters, negative when none was measured.
  double best_val = -1;
  bool operator==(const TrainMetrics&) const = default;
};

struct TrainResult {
  Model model;
  AdamState<Real> adam;
  TrainMetrics metrics;
};

/// Baseline / Baseline++ training on all samples of `base_classes`, labelled
/// by their position in that list.
TrainResult train_batch(Model model, const Dataset& ds, std::span<const int> base_classes, const TrainConfig& cfg);

/// Episodic training. Every `eval_every` episodes the model is scored on
/// `val_episodes` episodes from `val_classes` and the best one is kept.
/// With no validation classes the final parameters are returned.
TrainResult meta_train(Model model, const Dataset& ds, std::span<const int> base_classes,
                       std::span<const int> val_classes, const TrainConfig& cfg);

struct FinetuneConfig {
  int iterations = 100;
  int batch_size = 4;
  double lr = kDefaultLr;
  /// Augment support images on every iteration (features recomputed each time).
  bool augment = false;
};

enum class HeadKind { linear, cosine };

struct TrainedHead {
  HeadKind kind = HeadKind::linear;
  Tensor<Real> W;
  Tensor<Real> b;  // bias (linear) or per-class scale (cosine)
  Tensor<Real> logits(const Tensor<Real>& features) const;
};

/// Features for the listed support rows; called once per iteration.
using BatchFeatures = std::function<Tensor<Real>(std::span<const int> rows)>;

/// New N-way head trained with Adam on batches drawn with replacement from
/// `m` support samples.
TrainedHead finetune_head(const BatchFeatures& features, std::size_t m, std::span<const int> labels,
                          std::size_t n_way, std::size_t dim, HeadKind kind, double scale0,
                          const FinetuneConfig& cfg, Rng& rng);

/// Precomputed-feature form: rows of `features` [m x d] are gathered per batch.
TrainedHead finetune_head(const Tensor<Real>& features, std::span<const int> labels, std::size_t n_way,
                          HeadKind kind, double scale0, const FinetuneConfig& cfg, Rng& rng);

}  // namespace fsb
