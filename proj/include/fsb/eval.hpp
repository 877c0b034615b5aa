#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fsb/data.hpp"
#include "fsb/model.hpp"
#include "fsb/train.hpp"

namespace fsb {

enum class AdaptScheme { none, new_softmax_head, maml_extended_updates, relation_finetune };

/// "none", "new-softmax-head", "maml-extended-updates", "relation-finetune"
std::string to_string(AdaptScheme scheme);
AdaptScheme adapt_scheme_from_string(const std::string& s);

/// "episode_batch" or "running"; running uses the stored batch-norm statistics.
std::string bn_eval_name(BnMode mode);
BnMode bn_eval_from_string(const std::string& s);

inline constexpr int kDefaultEpisodes = 600;
inline constexpr int kDefaultQuery = 16;

struct EvalConfig {
  Role role = Role::novel;
  int n_way = 5;
  int k_shot = 5;
  int n_query = kDefaultQuery;
  int episodes = kDefaultEpisodes;
  AdaptScheme scheme = AdaptScheme::none;
  BnMode bn_mode = BnMode::episode_batch;
  /// Baseline heads and the new-softmax scheme.
  FinetuneConfig finetune;
  /// Updates (or epochs) run by the further-adaptation schemes.
  int adapt_steps = 100;
  std::uint64_t seed = 0;
  int workers = 1;

  void validate() const;
};

/// Anything that can score one episode. Implementations must be safe to call
/// from several threads at once.
class EpisodeModel {
 public:
  virtual ~EpisodeModel() = default;
  virtual std::string method_name() const = 0;
  virtual std::string backbone_name() const = 0;
  /// Query accuracy on `ep`. `rng` is private to the episode.
  virtual double episode_accuracy(const Dataset& ds, const Episode& ep, std::size_t index, Rng& rng) const = 0;
};

/// A trained Model scored under an EvalConfig (scheme, batch-norm mode, fine-tuning).
class ModelScorer : public EpisodeModel {
 public:
  ModelScorer(const Model& model, const EvalConfig& cfg);
  std::string method_name() const override;
  std::string backbone_name() const override;
  double episode_accuracy(const Dataset& ds, const Episode& ep, std::size_t index, Rng& rng) const override;

  /// Query logits for one episode; exposed for tests.
  Tensor<Real> query_logits(const Dataset& ds, const Episode& ep, Rng& rng) const;

 private:
  mutable Model model_;
  EvalConfig cfg_;
};

/// Throws ConfigError when `scheme` cannot be applied to `method` with k support shots.
void check_scheme(Method method, AdaptScheme scheme, int k_shot);

struct EvalReport {
  std::string method;
  std::string backbone;
  std::string scenario;
  std::string scheme = "none";
  int n_way = 0;
  int k_shot = 0;
  int n_query = 0;
  std::vector<double> accuracies;
  double mean = 0;
  double ci95 = 0;
  double wallclock_s = 0;
  std::uint64_t seed = 0;

  bool operator==(const EvalReport&) const = default;
  std::size_t episodes() const { return accuracies.size(); }
};

/// Mean and 1.96 * s / sqrt(E) with the E-1 sample deviation (0 when E < 2).
void summarize(std::span<const double> accuracies, double& mean, double& ci95);

/// E episodes from `pool`; episode i draws from an rng seeded with seed + i.
EvalReport evaluate(const EpisodeModel& model, const Dataset& ds, std::span<const int> pool, const EvalConfig& cfg,
                    const std::string& scenario);

/// One report per N under the same base seed. MAML cannot change its head width.
std::vector<EvalReport> nway_sweep(const Model& model, const Dataset& ds, std::span<const int> pool,
                                   std::span<const int> ways, const EvalConfig& cfg, const std::string& scenario);

/// Davies-Bouldin index. Returns +infinity when two centroids coincide.
double db_index(const Tensor<Real>& features, std::span<const int> labels);

std::string report_csv_header();
std::string report_csv_row(const EvalReport& r);
std::string reports_to_json(std::span<const EvalReport> reports);
std::vector<EvalReport> reports_from_json(const std::string& text);

enum class ReportFormat { json, csv };
void emit_report(std::span<const EvalReport> reports, ReportFormat format, const std::filesystem::path& path);

}  // namespace fsb
