#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <thread>

#include "fsb/errors.hpp"
#include "fsb/eval.hpp"
#include "fsb/ops.hpp"

namespace fsb {

std::string to_string(AdaptScheme scheme) {
  switch (scheme) {
    case AdaptScheme::none: return "none";
    case AdaptScheme::new_softmax_head: return "new-softmax-head";
    case AdaptScheme::maml_extended_updates: return "maml-extended-updates";
    case AdaptScheme::relation_finetune: return "relation-finetune";
  }
  return "?";
}

AdaptScheme adapt_scheme_from_string(const std::string& s) {
  for (auto a : {AdaptScheme::none, AdaptScheme::new_softmax_head, AdaptScheme::maml_extended_updates,
                 AdaptScheme::relation_finetune}) {
    if (to_string(a) == s) return a;
  }
  throw ConfigError("eval.scheme: unknown scheme \"" + s +
                    "\" (expected none, new-softmax-head, maml-extended-updates or relation-finetune)");
}

std::string bn_eval_name(BnMode mode) { return mode == BnMode::eval ? "running" : "episode_batch"; }

BnMode bn_eval_from_string(const std::string& s) {
  if (s == "episode_batch") return BnMode::episode_batch;
  if (s == "running") return BnMode::eval;
  throw ConfigError("eval.bn_mode: expected episode_batch or running, got \"" + s + "\"");
}

void EvalConfig::validate() const {
  if (n_way < 2) throw ConfigError("eval.n_way: must be at least 2");
  if (k_shot < 1 || n_query < 1) throw ConfigError("eval.k_shot and eval.n_query: must be positive");
  if (episodes < 1) throw ConfigError("eval.episodes: must be positive");
  if (workers < 1) throw ConfigError("eval.workers: must be positive");
  if (adapt_steps < 1) throw ConfigError("eval.adapt_steps: must be positive");
  if (finetune.iterations < 1 || finetune.batch_size < 1 || !(finetune.lr > 0)) {
    throw ConfigError("eval.finetune: iterations, batch_size and lr must be positive");
  }
}

void check_scheme(Method method, AdaptScheme scheme, int k_shot) {
  auto reject = [&] {
    throw ConfigError("eval.scheme: " + to_string(scheme) + " does not apply to " + to_string(method));
  };
  switch (scheme) {
    case AdaptScheme::none: return;
    case AdaptScheme::new_softmax_head:
      if (method != Method::protonet && method != Method::matchingnet) reject();
      return;
    case AdaptScheme::maml_extended_updates:
      if (method != Method::maml) reject();
      return;
    case AdaptScheme::relation_finetune:
      if (method != Method::relationnet) reject();
      if (k_shot != 5) {
        throw ConfigError("eval.scheme: relation-finetune splits 5 supports into 3 + 2 and needs k_shot = 5, got " +
                          std::to_string(k_shot));
      }
      return;
  }
}

ModelScorer::ModelScorer(const Model& model, const EvalConfig& cfg) : model_(model.clone()), cfg_(cfg) {
  cfg_.validate();
  check_scheme(model_.method.method, cfg_.scheme, cfg_.k_shot);
}

std::string ModelScorer::method_name() const { return to_string(model_.method.method); }
std::string ModelScorer::backbone_name() const { return model_.backbone_cfg().name(); }

Tensor<Real> ModelScorer::query_logits(const Dataset& ds, const Episode& ep, Rng& rng) const {
  const auto et = episode_tensors(ds, ep, nullptr, nullptr);
  const auto s_rows = et.support_rows();
  const auto q_rows = et.query_rows();
  const auto method = model_.method.method;
  const auto bn = cfg_.bn_mode;
  auto* stats = &model_.backbone.stats;
  const auto& bcfg = model_.backbone_cfg();

  auto split_features = [&](Tensor<Real>& fs, Tensor<Real>& fq) {
    NoGradGuard off;
    auto f = backbone_forward<Real>(bcfg, model_.backbone.tensors, stats, et.images, bn);
    fs = gather_rows(f, std::span<const int>(s_rows));
    fq = gather_rows(f, std::span<const int>(q_rows));
  };

  switch (method) {
    case Method::baseline:
    case Method::baseline_pp: {
      const auto kind = method == Method::baseline ? HeadKind::linear : HeadKind::cosine;
      Tensor<Real> fs, fq;
      split_features(fs, fq);
      TrainedHead head;
      if (cfg_.finetune.augment) {
        AugmentConfig aug;
        BatchFeatures fn = [&](std::span<const int> rows) {
          std::vector<SampleRef> refs;
          for (int r : rows) refs.push_back(ep.support[static_cast<std::size_t>(r)]);
          auto x = stack_images<Real>(ds, refs, &aug, &rng);
          return backbone_forward<Real>(bcfg, model_.backbone.tensors, stats, x, bn);
        };
        head = finetune_head(fn, et.n_support, et.support_y, et.n_way, bcfg.feature_dim(), kind,
                             model_.method.cosine_scale, cfg_.finetune, rng);
      } else {
        head = finetune_head(fs, et.support_y, et.n_way, kind, model_.method.cosine_scale, cfg_.finetune, rng);
      }
      NoGradGuard off;
      return head.logits(fq);
    }
    case Method::protonet:
    case Method::matchingnet: {
      if (cfg_.scheme == AdaptScheme::new_softmax_head) {
        Tensor<Real> fs, fq;
        split_features(fs, fq);
        auto ft = cfg_.finetune;
        ft.iterations = cfg_.adapt_steps;
        auto head = finetune_head(fs, et.support_y, et.n_way, HeadKind::linear, 1.0, ft, rng);
        NoGradGuard off;
        return head.logits(fq);
      }
      NoGradGuard off;
      return metric_logits(model_, et, bn);
    }
    case Method::relationnet: {
      if (cfg_.scheme != AdaptScheme::relation_finetune) {
        NoGradGuard off;
        return metric_logits(model_, et, bn);
      }
      Tensor<Real> ms, mq;
      {
        NoGradGuard off;
        auto maps = backbone_maps<Real>(bcfg, model_.backbone.tensors, stats, et.images, bn);
        ms = gather_rows(maps, std::span<const int>(s_rows));
        mq = gather_rows(maps, std::span<const int>(q_rows));
      }
      std::vector<Tensor<Real>> rel;
      for (const auto& t : model_.head) {
        auto c = t.detach();
        c.set_requires_grad(true);
        rel.push_back(std::move(c));
      }
      auto adam = AdamState<Real>::for_params(rel, cfg_.finetune.lr);
      const auto map = bcfg.map_shape();
      // Per class: 3 of the 5 supports act as support, 2 as query, reshuffled every epoch.
      std::vector<std::vector<int>> by_class(et.n_way);
      for (std::size_t i = 0; i < et.support_y.size(); ++i) by_class[et.support_y[i]].push_back(static_cast<int>(i));
      GradModeGuard on(true);
      for (int epoch = 0; epoch < cfg_.adapt_steps; ++epoch) {
        std::vector<int> sub_s, sub_q, ys, yq;
        for (std::size_t c = 0; c < et.n_way; ++c) {
          auto idx = by_class[c];
          for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[uniform_index(rng, i)]);
          for (std::size_t i = 0; i < idx.size(); ++i) {
            (i < 3 ? sub_s : sub_q).push_back(idx[i]);
            (i < 3 ? ys : yq).push_back(static_cast<int>(c));
          }
        }
        auto scores = relationnet_scores<Real>(gather_rows(ms, std::span<const int>(sub_s)), ys,
                                               gather_rows(ms, std::span<const int>(sub_q)), et.n_way, map, rel);
        auto loss = softmax_cross_entropy(scores, std::span<const int>(yq));
        backward(loss);
        adam_step(adam, std::span<Tensor<Real>>(rel));
        for (auto& p : rel) p.zero_grad();
      }
      NoGradGuard off;
      return relationnet_scores<Real>(ms, et.support_y, mq, et.n_way, map, rel);
    }
    case Method::maml: {
      if (static_cast<std::size_t>(et.n_way) != model_.head_classes) {
        throw UnsupportedMethodError("maml: the classifier has " + std::to_string(model_.head_classes) +
                                     " outputs and cannot score " + std::to_string(et.n_way) + "-way episodes");
      }
      auto xs = gather_rows(et.images, std::span<const int>(s_rows));
      auto xq = gather_rows(et.images, std::span<const int>(q_rows));
      const auto params = model_.parameters();
      ParamsLoss<Real> support_loss = [&](std::span<const Tensor<Real>> p) {
        return softmax_cross_entropy(maml_logits(model_, p, stats, xs, bn), std::span<const int>(et.support_y));
      };
      const int steps =
          cfg_.scheme == AdaptScheme::maml_extended_updates ? cfg_.adapt_steps : model_.method.maml.inner_steps_test;
      // Adapted values are the same in both modes; no outer gradient is needed here.
      auto adapted = maml_inner_adapt<Real>(params, support_loss, model_.method.maml.inner_lr, steps, true);
      NoGradGuard off;
      return maml_logits(model_, adapted, stats, xq, bn);
    }
  }
  throw ContractError("unreachable");
}

double ModelScorer::episode_accuracy(const Dataset& ds, const Episode& ep, std::size_t, Rng& rng) const {
  return accuracy(query_logits(ds, ep, rng), ep.query_y);
}

void summarize(std::span<const double> accuracies, double& mean, double& ci95) {
  if (accuracies.empty()) throw ContractError("summarize: no episodes");
  const double n = static_cast<double>(accuracies.size());
  mean = std::accumulate(accuracies.begin(), accuracies.end(), 0.0) / n;
  if (accuracies.size() < 2) {
    ci95 = 0;
    return;
  }
  double ss = 0;
  for (double a : accuracies) ss += (a - mean) * (a - mean);
  ci95 = 1.96 * std::sqrt(ss / (n - 1)) / std::sqrt(n);
}

EvalReport evaluate(const EpisodeModel& model, const Dataset& ds, std::span<const int> pool, const EvalConfig& cfg,
                    const std::string& scenario) {
  cfg.validate();
  if (pool.size() < static_cast<std::size_t>(cfg.n_way)) {
    throw ConfigError("evaluate: " + std::to_string(cfg.n_way) + "-way episodes need that many " +
                      to_string(cfg.role) + " classes, got " + std::to_string(pool.size()));
  }
  const auto t0 = std::chrono::steady_clock::now();
  const auto E = static_cast<std::size_t>(cfg.episodes);
  std::vector<double> acc(E);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;

  auto work = [&] {
    for (;;) {
      const auto i = next.fetch_add(1);
      if (i >= E) return;
      try {
        Rng rng(cfg.seed + i);
        const auto ep = sample_episode(ds, pool, cfg.n_way, cfg.k_shot, cfg.n_query, rng);
        acc[i] = model.episode_accuracy(ds, ep, i, rng);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next.store(E);
        return;
      }
    }
  };
  const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(cfg.workers), E);
  if (n_threads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool_threads;
    for (std::size_t t = 0; t < n_threads; ++t) pool_threads.emplace_back(work);
    for (auto& t : pool_threads) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  EvalReport r;
  r.method = model.method_name();
  r.backbone = model.backbone_name();
  r.scenario = scenario;
  r.scheme = to_string(cfg.scheme);
  r.n_way = cfg.n_way;
  r.k_shot = cfg.k_shot;
  r.n_query = cfg.n_query;
  r.accuracies = std::move(acc);
  summarize(r.accuracies, r.mean, r.ci95);
  r.seed = cfg.seed;
  r.wallclock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

std::vector<EvalReport> nway_sweep(const Model& model, const Dataset& ds, std::span<const int> pool,
                                   std::span<const int> ways, const EvalConfig& cfg, const std::string& scenario) {
  if (model.method.method == Method::maml) {
    throw UnsupportedMethodError("nway_sweep: MAML trains a fixed-width classifier and cannot be tested N-way");
  }
  std::vector<EvalReport> out;
  for (int n : ways) {
    auto c = cfg;
    c.n_way = n;
    out.push_back(evaluate(ModelScorer(model, c), ds, pool, c, scenario));
  }
  return out;
}

double db_index(const Tensor<Real>& features, std::span<const int> labels) {
  if (features.rank() != 2 || features.dim(0) != labels.size()) {
    throw DimensionError("db_index: features " + shape_str(features.shape()) + " with " +
                         std::to_string(labels.size()) + " labels");
  }
  std::vector<int> classes(labels.begin(), labels.end());
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  if (classes.size() < 2) throw ContractError("db_index: needs at least two classes");
  const auto K = classes.size();
  const auto d = features.dim(1);
  auto x = features.data();
  auto slot = [&](int label) {
    return static_cast<std::size_t>(std::lower_bound(classes.begin(), classes.end(), label) - classes.begin());
  };
  std::vector<double> centroid(K * d, 0.0), sigma(K, 0.0);
  std::vector<std::size_t> count(K, 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto c = slot(labels[i]);
    ++count[c];
    for (std::size_t j = 0; j < d; ++j) centroid[c * d + j] += x[i * d + j];
  }
  for (std::size_t c = 0; c < K; ++c)
    for (std::size_t j = 0; j < d; ++j) centroid[c * d + j] /= static_cast<double>(count[c]);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto c = slot(labels[i]);
    double s = 0;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = x[i * d + j] - centroid[c * d + j];
      s += diff * diff;
    }
    sigma[c] += std::sqrt(s);
  }
  for (std::size_t c = 0; c < K; ++c) sigma[c] /= static_cast<double>(count[c]);
  double total = 0;
  for (std::size_t a = 0; a < K; ++a) {
    double worst = 0;
    for (std::size_t b = 0; b < K; ++b) {
      if (a == b) continue;
      double s = 0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = centroid[a * d + j] - centroid[b * d + j];
        s += diff * diff;
      }
      if (s == 0) return std::numeric_limits<double>::infinity();
      worst = std::max(worst, (sigma[a] + sigma[b]) / std::sqrt(s));
    }
    total += worst;
  }
  return total / static_cast<double>(K);
}

}  // namespace fsb
