#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fsb/ops.hpp"
#include "fsb/tensor.hpp"

namespace fsb {

enum class BackboneKind { conv, dense };

std::string to_string(BackboneKind kind);
BackboneKind backbone_kind_from_string(const std::string& s);

struct BackboneConfig {
  BackboneKind kind = BackboneKind::conv;
  int n_blocks = 4;
  int in_channels = 3;
  int channels = 64;
  int input_h = 32;
  int input_w = 32;
  /// Leading blocks followed by 2x2 max pooling.
  int pooled_blocks = 4;
  /// Hidden widths of the dense kind; the last one is the feature dimension.
  std::vector<int> hidden{64, 64};

  /// Throws ConfigError when the configuration cannot produce a feature map.
  void validate() const;
  /// Output of the last block before flattening, as {C, h, w}.
  Shape map_shape() const;
  std::size_t feature_dim() const;
  /// Short name used in reports, e.g. "Conv-4" or "MLP-2".
  std::string name() const;
};

/// Learnable tensors in declared order:
///   conv:  per block {kernel, gamma, beta}
///   dense: per layer {weight [in x out], bias}
/// Running batch-norm statistics are kept alongside, one entry per conv block.
template <class T>
struct BackboneParams {
  BackboneConfig cfg;
  std::vector<Tensor<T>> tensors;
  std::vector<RunningStats<T>> stats;

  std::size_t parameter_count() const;
};

template <class T>
BackboneParams<T> init_backbone(const BackboneConfig& cfg, std::uint64_t seed);

/// Feature maps [B x C x h x w] computed with an explicit parameter list laid
/// out as in BackboneParams::tensors. `stats` may be null unless mode is eval
/// or train.
template <class T>
Tensor<T> backbone_maps(const BackboneConfig& cfg, std::span<const Tensor<T>> params,
                        std::vector<RunningStats<T>>* stats, const Tensor<T>& batch, BnMode mode);

/// Flattened features [B x d].
template <class T>
Tensor<T> backbone_forward(const BackboneConfig& cfg, std::span<const Tensor<T>> params,
                           std::vector<RunningStats<T>>* stats, const Tensor<T>& batch, BnMode mode);

template <class T>
Tensor<T> backbone_forward(BackboneParams<T>& bp, const Tensor<T>& batch, BnMode mode);

template <class T>
Tensor<T> backbone_maps(BackboneParams<T>& bp, const Tensor<T>& batch, BnMode mode);

}  // namespace fsb
