#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fsb/backbone.hpp"
#include "fsb/data.hpp"
#include "fsb/heads.hpp"
#include "fsb/meta.hpp"

namespace fsb {

/// Every trained model is stored and run in single precision.
using Real = float;

enum class Method { baseline, baseline_pp, protonet, matchingnet, relationnet, maml };

/// "baseline", "baseline++", "protonet", "matchingnet", "relationnet", "maml"
std::string to_string(Method method);
Method method_from_string(const std::string& s);
bool is_meta_method(Method method);

struct MethodConfig {
  Method method = Method::protonet;
  double cosine_scale = kDefaultCosineScale;
  double tau = kDefaultMatchingTau;
  int relation_hidden = 8;
  MamlConfig maml;
  /// Episodes averaged into one MAML meta-update.
  int maml_tasks = 4;

  void validate(const BackboneConfig& backbone) const;
};

/// Backbone plus method-specific tensors:
///   baseline     {W [d x C], b [C]}
///   baseline++   {W [C x d], scale [C]}
///   relationnet  relation module tensors
///   maml         {W [d x N], b [N]}
///   protonet, matchingnet: none
struct Model {
  MethodConfig method;
  BackboneParams<Real> backbone;
  std::vector<Tensor<Real>> head;
  /// Output width of the classifier head (base classes or training N), 0 if none.
  std::size_t head_classes = 0;

  static Model init(const MethodConfig& method, const BackboneConfig& backbone, std::size_t head_classes,
                    std::uint64_t seed);
  const BackboneConfig& backbone_cfg() const { return backbone.cfg; }
  /// Backbone tensors followed by head tensors; handles alias the model's storage.
  std::vector<Tensor<Real>> parameters() const;
  /// Deep copy with independent storage.
  Model clone() const;
};

/// One episode's images stacked support-first, so metric methods can run the
/// backbone on a single batch.
struct EpisodeTensors {
  Tensor<Real> images;
  std::size_t n_support = 0;
  std::vector<int> support_y;
  std::vector<int> query_y;
  std::size_t n_way = 0;

  std::vector<int> support_rows() const;
  std::vector<int> query_rows() const;
};

EpisodeTensors episode_tensors(const Dataset& ds, const Episode& ep, const AugmentConfig* aug, Rng* rng);

/// Query logits [Q x N] of protonet, matchingnet or relationnet.
Tensor<Real> metric_logits(Model& model, const EpisodeTensors& ep, BnMode mode);

/// Logits of the MAML network with an explicit parameter list (backbone then {W, b}).
Tensor<Real> maml_logits(const Model& model, std::span<const Tensor<Real>> params,
                         std::vector<RunningStats<Real>>* stats, const Tensor<Real>& images, BnMode mode);

/// Head logits of baseline / baseline++ for already computed features.
Tensor<Real> head_logits(const Model& model, const Tensor<Real>& features);

/// Features of every listed sample through the frozen backbone, in batches.
Tensor<Real> extract_features(Model& model, const Dataset& ds, std::span<const SampleRef> refs, BnMode mode,
                              std::size_t batch = 64);

/// Fraction of rows whose argmax equals the label.
double accuracy(const Tensor<Real>& logits, std::span<const int> labels);

}  // namespace fsb
