#include "fsb/backbone.hpp"

#include <cmath>

#include "fsb/errors.hpp"
#include "fsb/rng.hpp"

namespace fsb {

std::string to_string(BackboneKind kind) { return kind == BackboneKind::conv ? "conv" : "dense"; }

BackboneKind backbone_kind_from_string(const std::string& s) {
  if (s == "conv") return BackboneKind::conv;
  if (s == "dense") return BackboneKind::dense;
  throw ConfigError("backbone.kind: expected \"conv\" or \"dense\", got \"" + s + "\"");
}

void BackboneConfig::validate() const {
  if (in_channels < 1 || input_h < 1 || input_w < 1) {
    throw ConfigError("backbone: input channels and extents must be positive");
  }
  if (kind == BackboneKind::dense) {
    if (hidden.empty()) throw ConfigError("backbone.hidden: dense backbone needs at least one layer");
    for (int h : hidden) {
      if (h < 1) throw ConfigError("backbone.hidden: layer widths must be positive");
    }
    return;
  }
  if (n_blocks < 1) throw ConfigError("backbone.n_blocks: must be at least 1");
  if (channels < 1) throw ConfigError("backbone.channels: must be positive");
  if (pooled_blocks < 0) throw ConfigError("backbone.pooled_blocks: must be non-negative");
  int h = input_h, w = input_w;
  for (int b = 0; b < std::min(n_blocks, pooled_blocks); ++b) {
    if (h < 2 || w < 2) {
      throw ConfigError("backbone.input_hw: " + std::to_string(input_h) + "x" + std::to_string(input_w) +
                        " is too small for " + std::to_string(std::min(n_blocks, pooled_blocks)) +
                        " pooled blocks");
    }
    h /= 2;
    w /= 2;
  }
}

Shape BackboneConfig::map_shape() const {
  validate();
  if (kind == BackboneKind::dense) return {static_cast<std::size_t>(hidden.back()), 1, 1};
  std::size_t h = input_h, w = input_w;
  for (int b = 0; b < std::min(n_blocks, pooled_blocks); ++b) {
    h /= 2;
    w /= 2;
  }
  return {static_cast<std::size_t>(channels), h, w};
}

std::size_t BackboneConfig::feature_dim() const { return shape_numel(map_shape()); }

std::string BackboneConfig::name() const {
  if (kind == BackboneKind::dense) return "MLP-" + std::to_string(hidden.size());
  return "Conv-" + std::to_string(n_blocks);
}

template <class T>
std::size_t BackboneParams<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.numel();
  return n;
}

namespace {

template <class T>
Tensor<T> uniform_tensor(Shape shape, double bound, Rng& rng) {
  std::uniform_real_distribution<double> u(-bound, bound);
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(u(rng));
  return Tensor<T>(std::move(shape), std::move(v), true);
}

}  // namespace

template <class T>
BackboneParams<T> init_backbone(const BackboneConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  BackboneParams<T> bp;
  bp.cfg = cfg;
  Rng rng(seed);
  if (cfg.kind == BackboneKind::dense) {
    std::size_t in = static_cast<std::size_t>(cfg.in_channels) * cfg.input_h * cfg.input_w;
    for (int width : cfg.hidden) {
      const auto out = static_cast<std::size_t>(width);
      bp.tensors.push_back(uniform_tensor<T>({in, out}, std::sqrt(6.0 / in), rng));
      bp.tensors.push_back(Tensor<T>::zeros({out}, true));
      in = out;
    }
    return bp;
  }
  std::size_t in = cfg.in_channels;
  const auto c = static_cast<std::size_t>(cfg.channels);
  for (int b = 0; b < cfg.n_blocks; ++b) {
    bp.tensors.push_back(uniform_tensor<T>({c, in, 3, 3}, std::sqrt(6.0 / (in * 9)), rng));
    bp.tensors.push_back(Tensor<T>::full({c}, T(1), true));
    bp.tensors.push_back(Tensor<T>::zeros({c}, true));
    bp.stats.push_back(RunningStats<T>::identity(c));
    in = c;
  }
  return bp;
}

template <class T>
Tensor<T> backbone_maps(const BackboneConfig& cfg, std::span<const Tensor<T>> params,
                        std::vector<RunningStats<T>>* stats, const Tensor<T>& batch, BnMode mode) {
  const Shape want{static_cast<std::size_t>(cfg.in_channels), static_cast<std::size_t>(cfg.input_h),
                   static_cast<std::size_t>(cfg.input_w)};
  if (batch.rank() != 4 || Shape(batch.shape().begin() + 1, batch.shape().end()) != want) {
    throw DimensionError("backbone: expected [B x " + std::to_string(cfg.in_channels) + " x " +
                         std::to_string(cfg.input_h) + " x " + std::to_string(cfg.input_w) + "], got " +
                         shape_str(batch.shape()));
  }
  const std::size_t per_block = cfg.kind == BackboneKind::dense ? 2 : 3;
  const std::size_t blocks = cfg.kind == BackboneKind::dense ? cfg.hidden.size() : cfg.n_blocks;
  if (params.size() != per_block * blocks) {
    throw DimensionError("backbone: expected " + std::to_string(per_block * blocks) +
                         " parameter tensors, got " + std::to_string(params.size()));
  }

  if (cfg.kind == BackboneKind::dense) {
    Tensor<T> h = flatten(batch);
    for (std::size_t l = 0; l < blocks; ++l) h = relu(add_row(matmul(h, params[2 * l]), params[2 * l + 1]));
    return reshape(h, {h.dim(0), h.dim(1), 1, 1});
  }

  if (mode == BnMode::eval && (!stats || stats->size() != blocks)) {
    throw ContractError("backbone: eval mode needs running statistics");
  }
  Tensor<T> h = batch;
  for (std::size_t b = 0; b < blocks; ++b) {
    RunningStats<T>* s = stats && stats->size() == blocks ? &(*stats)[b] : nullptr;
    h = conv2d(h, params[3 * b], 1, 1);
    h = batchnorm2d(h, params[3 * b + 1], params[3 * b + 2], s, mode);
    h = relu(h);
    if (static_cast<int>(b) < cfg.pooled_blocks) h = maxpool2d(h, 2, 2);
  }
  return h;
}

template <class T>
Tensor<T> backbone_forward(const BackboneConfig& cfg, std::span<const Tensor<T>> params,
                           std::vector<RunningStats<T>>* stats, const Tensor<T>& batch, BnMode mode) {
  auto maps = backbone_maps(cfg, params, stats, batch, mode);
  return flatten(maps);
}

template <class T>
Tensor<T> backbone_forward(BackboneParams<T>& bp, const Tensor<T>& batch, BnMode mode) {
  return backbone_forward<T>(bp.cfg, bp.tensors, &bp.stats, batch, mode);
}

template <class T>
Tensor<T> backbone_maps(BackboneParams<T>& bp, const Tensor<T>& batch, BnMode mode) {
  return backbone_maps<T>(bp.cfg, bp.tensors, &bp.stats, batch, mode);
}

#define FSB_INSTANTIATE_BACKBONE(T)                                                                   \
  template struct BackboneParams<T>;                                                                  \
  template BackboneParams<T> init_backbone<T>(const BackboneConfig&, std::uint64_t);                   \
  template Tensor<T> backbone_maps<T>(const BackboneConfig&, std::span<const Tensor<T>>,              \
                                      std::vector<RunningStats<T>>*, const Tensor<T>&, BnMode);       \
  template Tensor<T> backbone_forward<T>(const BackboneConfig&, std::span<const Tensor<T>>,           \
                                         std::vector<RunningStats<T>>*, const Tensor<T>&, BnMode);    \
  template Tensor<T> backbone_forward<T>(BackboneParams<T>&, const Tensor<T>&, BnMode);              \
  template Tensor<T> backbone_maps<T>(BackboneParams<T>&, const Tensor<T>&, BnMode);

FSB_INSTANTIATE_BACKBONE(float)
FSB_INSTANTIATE_BACKBONE(double)

}  // namespace fsb
