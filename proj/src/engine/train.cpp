#include "fsb/train.hpp"

#include <cmath>

#include "fsb/errors.hpp"
#include "fsb/eval.hpp"
#include "fsb/ops.hpp"

namespace fsb {

namespace {

// Stream ids for derive_seed so each consumer draws from its own sequence.
constexpr std::uint64_t kBatchStream = 10;
constexpr std::uint64_t kEpisodeStream = 20;
constexpr std::uint64_t kValStream = 30;

void clear_grads(std::span<Tensor<Real>> params) {
  for (auto& p : params) p.zero_grad();
}

}  // namespace

void TrainConfig::validate(bool meta) const {
  if (!(lr > 0)) throw ConfigError("train.lr: must be positive");
  augment.validate();
  if (meta) {
    if (episodes < 1) throw ConfigError("train.episodes: must be positive");
    if (eval_every < 1 || episodes % eval_every != 0) {
      throw ConfigError("train.eval_every: must be positive and divide train.episodes (" + std::to_string(episodes) +
                        ")");
    }
    if (n_way < 2 || k_shot < 1 || n_query < 1) throw ConfigError("train: need n_way >= 2, k_shot >= 1, n_query >= 1");
    if (val_episodes < 1 || val_n_way < 2 || val_n_query < 1) {
      throw ConfigError("train: val_episodes, val_n_way and val_n_query must be positive");
    }
  } else {
    if (epochs < 1) throw ConfigError("train.epochs: must be positive");
    if (batch_size < 1) throw ConfigError("train.batch_size: must be positive");
  }
}

TrainResult train_batch(Model model, const Dataset& ds, std::span<const int> base_classes, const TrainConfig& cfg) {
  cfg.validate(false);
  const auto method = model.method.method;
  if (method != Method::baseline && method != Method::baseline_pp) {
    throw ConfigError("train_batch: method " + to_string(method) + " is trained episodically");
  }
  if (model.head_classes != base_classes.size()) {
    throw ConfigError("train_batch: head has " + std::to_string(model.head_classes) + " classes, the base split has " +
                      std::to_string(base_classes.size()));
  }
  std::vector<SampleRef> samples;
  std::vector<int> labels;
  for (std::size_t c = 0; c < base_classes.size(); ++c) {
    const auto& rec = ds.classes.at(static_cast<std::size_t>(base_classes[c]));
    for (std::size_t i = 0; i < rec.samples.size(); ++i) {
      samples.push_back({base_classes[c], static_cast<int>(i)});
      labels.push_back(static_cast<int>(c));
    }
  }
  const auto bs = static_cast<std::size_t>(cfg.batch_size);
  if (bs > samples.size()) {
    throw ConfigError("train.batch_size: " + std::to_string(bs) + " exceeds the " + std::to_string(samples.size()) +
                      " base samples");
  }

  auto params = model.parameters();
  TrainResult res{model, AdamState<Real>::for_params(params, cfg.lr), {}};
  Rng rng(derive_seed(cfg.seed, kBatchStream));
  const AugmentConfig* aug = cfg.augment.enabled ? &cfg.augment : nullptr;
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
    double loss_sum = 0;
    std::size_t n_batches = 0;
    // The incomplete tail batch is dropped.
    for (std::size_t start = 0; start + bs <= order.size(); start += bs) {
      std::vector<SampleRef> refs;
      std::vector<int> y;
      for (std::size_t j = start; j < start + bs; ++j) {
        refs.push_back(samples[order[j]]);
        y.push_back(labels[order[j]]);
      }
      auto x = stack_images<Real>(ds, refs, aug, &rng);
      auto f = backbone_forward(res.model.backbone, x, BnMode::train);
      auto loss = softmax_cross_entropy(head_logits(res.model, f), std::span<const int>(y));
      loss_sum += loss.item();
      ++n_batches;
      backward(loss);
      adam_step(res.adam, std::span<Tensor<Real>>(params));
      clear_grads(params);
    }
    res.metrics.epoch_loss.push_back(loss_sum / static_cast<double>(n_batches));
  }
  res.metrics.selected_index = cfg.epochs;
  return res;
}

TrainResult meta_train(Model model, const Dataset& ds, std::span<const int> base_classes,
                       std::span<const int> val_classes, const TrainConfig& cfg) {
  cfg.validate(true);
  const auto method = model.method.method;
  if (!is_meta_method(method)) throw ConfigError("meta_train: " + to_string(method) + " is trained in batches");
  if (base_classes.size() < static_cast<std::size_t>(cfg.n_way)) {
    throw ConfigError("meta_train: " + std::to_string(cfg.n_way) + "-way training needs that many base classes, got " +
                      std::to_string(base_classes.size()));
  }
  const bool maml = method == Method::maml;
  if (maml && model.head_classes != static_cast<std::size_t>(cfg.n_way)) {
    throw ConfigError("meta_train: MAML head width " + std::to_string(model.head_classes) +
                      " differs from train.n_way " + std::to_string(cfg.n_way));
  }
  const bool validate = val_classes.size() >= static_cast<std::size_t>(maml ? cfg.n_way : cfg.val_n_way);

  auto params = model.parameters();
  TrainResult res{model, AdamState<Real>::for_params(params, cfg.lr), {}};
  TrainResult best{res.model.clone(), res.adam, {}};
  Rng rng(derive_seed(cfg.seed, kEpisodeStream));
  const AugmentConfig* aug = cfg.augment.enabled ? &cfg.augment : nullptr;

  EvalConfig val;
  val.role = Role::val;
  val.n_way = maml ? cfg.n_way : cfg.val_n_way;
  val.k_shot = cfg.k_shot;
  val.n_query = cfg.val_n_query;
  val.episodes = cfg.val_episodes;
  val.seed = derive_seed(cfg.seed, kValStream);

  std::vector<MamlTask<Real>> tasks;
  std::vector<EpisodeTensors> task_data;
  auto& stats = res.model.backbone.stats;
  const auto& mc = res.model.method.maml;

  for (int e = 1; e <= cfg.episodes; ++e) {
    auto ep = sample_episode(ds, base_classes, cfg.n_way, cfg.k_shot, cfg.n_query, rng);
    auto et = episode_tensors(ds, ep, aug, &rng);
    if (!maml) {
      auto loss = softmax_cross_entropy(metric_logits(res.model, et, BnMode::train), std::span<const int>(et.query_y));
      backward(loss);
      adam_step(res.adam, std::span<Tensor<Real>>(params));
      clear_grads(params);
    } else {
      task_data.push_back(std::move(et));
      if (task_data.size() == static_cast<std::size_t>(res.model.method.maml_tasks) || e == cfg.episodes) {
        tasks.clear();
        for (const auto& t : task_data) {
          const auto s_rows = t.support_rows();
          const auto q_rows = t.query_rows();
          auto xs = gather_rows(t.images, std::span<const int>(s_rows));
          auto xq = gather_rows(t.images, std::span<const int>(q_rows));
          const Model* mp = &res.model;
          auto* sp = &stats;
          tasks.push_back({[mp, sp, xs, ys = t.support_y](std::span<const Tensor<Real>> p) {
                             return softmax_cross_entropy(maml_logits(*mp, p, sp, xs, BnMode::train),
                                                          std::span<const int>(ys));
                           },
                           [mp, sp, xq, yq = t.query_y](std::span<const Tensor<Real>> p) {
                             return softmax_cross_entropy(maml_logits(*mp, p, sp, xq, BnMode::train),
                                                          std::span<const int>(yq));
                           }});
        }
        auto g = maml_meta_step<Real>(params, tasks, mc.inner_lr, mc.inner_steps_train, mc.first_order);
        std::vector<std::vector<Real>> grads;
        for (const auto& t : g) grads.emplace_back(t.data().begin(), t.data().end());
        adam_step(res.adam, std::span<Tensor<Real>>(params), std::span<const std::vector<Real>>(grads));
        task_data.clear();
      }
    }

    if (validate && e % cfg.eval_every == 0) {
      const auto report = evaluate(ModelScorer(res.model, val), ds, val_classes, val, "val");
      res.metrics.val_curve.push_back({e, report.mean});
      if (report.mean > best.metrics.best_val) {
        best.model = res.model.clone();
        best.adam = res.adam;
        best.metrics.best_val = report.mean;
        best.metrics.selected_index = e;
      }
    }
  }

  if (!validate) {
    res.metrics.selected_index = cfg.episodes;
    return res;
  }
  best.metrics.val_curve = res.metrics.val_curve;
  return best;
}

Tensor<Real> TrainedHead::logits(const Tensor<Real>& features) const {
  return kind == HeadKind::linear ? linear_logits(features, W, b) : cosine_scores(features, W, b);
}

TrainedHead finetune_head(const BatchFeatures& features, std::size_t m, std::span<const int> labels,
                          std::size_t n_way, std::size_t dim, HeadKind kind, double scale0,
                          const FinetuneConfig& cfg, Rng& rng) {
  if (m == 0 || labels.size() != m) throw ContractError("finetune_head: need one label per support sample");
  if (cfg.iterations < 1 || cfg.batch_size < 1 || !(cfg.lr > 0)) {
    throw ConfigError("finetune: iterations, batch_size and lr must be positive");
  }
  TrainedHead h;
  h.kind = kind;
  const auto seed = rng();
  if (kind == HeadKind::linear) {
    auto lh = LinearHead<Real>::init(dim, n_way, seed);
    h.W = lh.W;
    h.b = lh.b;
  } else {
    auto ch = CosineHead<Real>::init(dim, n_way, scale0, seed);
    h.W = ch.W;
    h.b = ch.scale;
  }
  h.W.set_requires_grad(true);
  h.b.set_requires_grad(true);
  std::vector<Tensor<Real>> params{h.W, h.b};
  auto adam = AdamState<Real>::for_params(params, cfg.lr);
  GradModeGuard on(true);
  std::vector<int> rows(static_cast<std::size_t>(cfg.batch_size));
  std::vector<int> y(rows.size());
  for (int it = 0; it < cfg.iterations; ++it) {
    for (std::size_t j = 0; j < rows.size(); ++j) {
      rows[j] = static_cast<int>(uniform_index(rng, m));
      y[j] = labels[static_cast<std::size_t>(rows[j])];
    }
    Tensor<Real> f;
    {
      NoGradGuard off;
      f = features(rows);
    }
    auto loss = softmax_cross_entropy(h.logits(f), std::span<const int>(y));
    backward(loss);
    adam_step(adam, std::span<Tensor<Real>>(params));
    clear_grads(params);
  }
  h.W.set_requires_grad(false);
  h.b.set_requires_grad(false);
  return h;
}

TrainedHead finetune_head(const Tensor<Real>& features, std::span<const int> labels, std::size_t n_way,
                          HeadKind kind, double scale0, const FinetuneConfig& cfg, Rng& rng) {
  if (features.rank() != 2) throw DimensionError("finetune_head: features must be [m x d]");
  auto fn = [&features](std::span<const int> rows) { return gather_rows(features, rows); };
  return finetune_head(fn, features.dim(0), labels, n_way, features.dim(1), kind, scale0, cfg, rng);
}

}  // namespace fsb
