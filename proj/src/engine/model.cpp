#include "fsb/model.hpp"

#include <algorithm>
#include <numeric>

#include "fsb/errors.hpp"
#include "fsb/ops.hpp"

namespace fsb {

namespace {

Tensor<Real> copy_tensor(const Tensor<Real>& t) {
  auto c = t.detach();
  c.set_requires_grad(t.requires_grad());
  return c;
}

std::vector<Tensor<Real>> backbone_slice(std::span<const Tensor<Real>> params, std::size_t n) {
  return {params.begin(), params.begin() + static_cast<std::ptrdiff_t>(n)};
}

}  // namespace

std::string to_string(Method method) {
  switch (method) {
    case Method::baseline: return "baseline";
    case Method::baseline_pp: return "baseline++";
    case Method::protonet: return "protonet";
    case Method::matchingnet: return "matchingnet";
    case Method::relationnet: return "relationnet";
    case Method::maml: return "maml";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  for (auto m : {Method::baseline, Method::baseline_pp, Method::protonet, Method::matchingnet, Method::relationnet,
                 Method::maml}) {
    if (to_string(m) == s) return m;
  }
  throw ConfigError("method.name: unknown method \"" + s +
                    "\" (expected baseline, baseline++, protonet, matchingnet, relationnet or maml)");
}

bool is_meta_method(Method method) { return method != Method::baseline && method != Method::baseline_pp; }

void MethodConfig::validate(const BackboneConfig& backbone) const {
  if (!(cosine_scale > 0)) throw ConfigError("method.cosine_scale: must be positive");
  if (!(tau > 0)) throw ConfigError("method.tau: must be positive");
  if (relation_hidden < 1) throw ConfigError("method.relation_hidden: must be positive");
  if (method == Method::maml) {
    if (!(maml.inner_lr > 0)) throw ConfigError("method.inner_lr: must be positive");
    if (maml.inner_steps_train < 1 || maml.inner_steps_test < 1) {
      throw ConfigError("method.inner_steps_train/inner_steps_test: must be at least 1");
    }
    if (maml_tasks < 1) throw ConfigError("method.maml_tasks: must be at least 1");
    if (!maml.first_order && backbone.kind == BackboneKind::conv) {
      throw ConfigError("method.second_order: full second-order MAML needs a dense backbone, got " + backbone.name());
    }
  }
}

Model Model::init(const MethodConfig& method, const BackboneConfig& backbone, std::size_t head_classes,
                  std::uint64_t seed) {
  backbone.validate();
  method.validate(backbone);
  Model m;
  m.method = method;
  m.backbone = init_backbone<Real>(backbone, derive_seed(seed, 1));
  const auto d = backbone.feature_dim();
  const auto head_seed = derive_seed(seed, 2);
  switch (method.method) {
    case Method::baseline:
    case Method::maml: {
      auto h = LinearHead<Real>::init(d, head_classes, head_seed);
      m.head = h.parameters();
      m.head_classes = head_classes;
      break;
    }
    case Method::baseline_pp: {
      auto h = CosineHead<Real>::init(d, head_classes, method.cosine_scale, head_seed);
      m.head = h.parameters();
      m.head_classes = head_classes;
      break;
    }
    case Method::relationnet:
      m.head = RelationParams<Real>::init(backbone.map_shape(), method.relation_hidden, head_seed).tensors;
      break;
    case Method::protonet:
    case Method::matchingnet:
      break;
  }
  for (auto& t : m.head) t.set_requires_grad(true);
  return m;
}

std::vector<Tensor<Real>> Model::parameters() const {
  std::vector<Tensor<Real>> out = backbone.tensors;
  out.insert(out.end(), head.begin(), head.end());
  return out;
}

Model Model::clone() const {
  Model c;
  c.method = method;
  c.head_classes = head_classes;
  c.backbone.cfg = backbone.cfg;
  c.backbone.stats = backbone.stats;
  for (const auto& t : backbone.tensors) c.backbone.tensors.push_back(copy_tensor(t));
  for (const auto& t : head) c.head.push_back(copy_tensor(t));
  return c;
}

std::vector<int> EpisodeTensors::support_rows() const {
  std::vector<int> r(n_support);
  std::iota(r.begin(), r.end(), 0);
  return r;
}

std::vector<int> EpisodeTensors::query_rows() const {
  std::vector<int> r(query_y.size());
  std::iota(r.begin(), r.end(), static_cast<int>(n_support));
  return r;
}

EpisodeTensors episode_tensors(const Dataset& ds, const Episode& ep, const AugmentConfig* aug, Rng* rng) {
  std::vector<SampleRef> refs = ep.support;
  refs.insert(refs.end(), ep.query.begin(), ep.query.end());
  EpisodeTensors t;
  t.images = stack_images<Real>(ds, refs, aug, rng);
  t.n_support = ep.support.size();
  t.support_y = ep.support_y;
  t.query_y = ep.query_y;
  t.n_way = static_cast<std::size_t>(ep.n_way);
  return t;
}

Tensor<Real> metric_logits(Model& model, const EpisodeTensors& ep, BnMode mode) {
  const auto s_rows = ep.support_rows();
  const auto q_rows = ep.query_rows();
  auto* stats = &model.backbone.stats;
  const auto& cfg = model.backbone_cfg();
  switch (model.method.method) {
    case Method::protonet:
    case Method::matchingnet: {
      auto f = backbone_forward<Real>(cfg, model.backbone.tensors, stats, ep.images, mode);
      auto fs = gather_rows(f, std::span<const int>(s_rows));
      auto fq = gather_rows(f, std::span<const int>(q_rows));
      if (model.method.method == Method::protonet) return protonet_logits(fs, ep.support_y, fq, ep.n_way);
      return matchingnet_logits(fs, ep.support_y, fq, ep.n_way, model.method.tau);
    }
    case Method::relationnet: {
      auto maps = backbone_maps<Real>(cfg, model.backbone.tensors, stats, ep.images, mode);
      auto ms = gather_rows(maps, std::span<const int>(s_rows));
      auto mq = gather_rows(maps, std::span<const int>(q_rows));
      return relationnet_scores<Real>(ms, ep.support_y, mq, ep.n_way, cfg.map_shape(), model.head);
    }
    default:
      throw UnsupportedMethodError("metric_logits: " + to_string(model.method.method) + " is not a metric method");
  }
}

Tensor<Real> maml_logits(const Model& model, std::span<const Tensor<Real>> params,
                         std::vector<RunningStats<Real>>* stats, const Tensor<Real>& images, BnMode mode) {
  const auto nb = model.backbone.tensors.size();
  if (params.size() != nb + 2) throw DimensionError("maml_logits: expected backbone tensors plus {W, b}");
  const auto bb = backbone_slice(params, nb);
  auto f = backbone_forward<Real>(model.backbone_cfg(), bb, stats, images, mode);
  return linear_logits(f, params[nb], params[nb + 1]);
}

Tensor<Real> head_logits(const Model& model, const Tensor<Real>& features) {
  switch (model.method.method) {
    case Method::baseline: return linear_logits(features, model.head[0], model.head[1]);
    case Method::baseline_pp: return cosine_scores(features, model.head[0], model.head[1]);
    default: throw UnsupportedMethodError("head_logits: " + to_string(model.method.method) + " has no class head");
  }
}

Tensor<Real> extract_features(Model& model, const Dataset& ds, std::span<const SampleRef> refs, BnMode mode,
                              std::size_t batch) {
  if (refs.empty()) throw ContractError("extract_features: no samples");
  NoGradGuard off;
  const auto d = model.backbone_cfg().feature_dim();
  std::vector<Real> out;
  out.reserve(refs.size() * d);
  for (std::size_t start = 0; start < refs.size(); start += batch) {
    const auto n = std::min(batch, refs.size() - start);
    auto x = stack_images<Real>(ds, refs.subspan(start, n));
    auto f = backbone_forward<Real>(model.backbone_cfg(), model.backbone.tensors, &model.backbone.stats, x, mode);
    out.insert(out.end(), f.data().begin(), f.data().end());
  }
  return Tensor<Real>({refs.size(), d}, std::move(out));
}

double accuracy(const Tensor<Real>& logits, std::span<const int> labels) {
  const auto pred = argmax_rows(logits);
  if (pred.size() != labels.size()) throw DimensionError("accuracy: prediction and label counts differ");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

}  // namespace fsb
