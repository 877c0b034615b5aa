#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fsb/backbone.hpp"
#include "fsb/checkpoint.hpp"
#include "fsb/data.hpp"
#include "fsb/eval.hpp"
#include "fsb/model.hpp"
#include "fsb/train.hpp"
#include "json.hpp"

namespace fsb {

/// A dataset tree on disk, or synthetic parameters when `path` is empty.
struct DatasetSource {
  std::string path;
  SynthConfig synth;

  bool synthetic() const { return path.empty(); }
};

struct SplitConfig {
  SplitCounts counts{10, 5, 5};
  std::uint64_t seed = 0;
  /// Split JSON to use instead of drawing one.
  std::string file;
};

inline constexpr int kFullEpochs = 400;
inline constexpr int kFullEpisodes1Shot = 60000;
inline constexpr int kFullEpisodes5Shot = 40000;

struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "runs/default";
  DatasetSource dataset;
  /// Second dataset for the cross-domain scenario: val and novel classes come from it.
  std::optional<DatasetSource> novel_dataset;
  SplitConfig split;
  BackboneConfig backbone;
  MethodConfig method;
  TrainConfig train;
  /// Replaces epochs/episodes by the long budgets (400 epochs, 60k/40k episodes).
  bool full_budget = false;
  EvalConfig eval;

  bool cross_domain() const { return novel_dataset.has_value(); }
};

/// Parses a run document. Unknown keys and invalid values throw ConfigError
/// naming the field. Absent fields take their defaults.
RunConfig run_config_from_json(const nlohmann::json& j);
/// Every field, defaults included.
nlohmann::ordered_json run_config_to_json(const RunConfig& cfg);

/// Parses a JSON file into an object; no validation.
nlohmann::json read_config_json(const std::filesystem::path& path);

/// Reads and parses a file; FSB_SEED, when set, replaces the top-level seed.
RunConfig load_run_config(const std::filesystem::path& path);

/// Value of FSB_SEED, if set. Malformed values throw ConfigError.
std::optional<std::uint64_t> env_seed();

/// FNV-1a of the resolved config without the eval section and output_dir:
/// everything that shapes the trained parameters.
std::string config_digest(const RunConfig& cfg);

// --- pipelines -----------------------------------------------------------------

struct RunData {
  Dataset base;
  std::optional<Dataset> novel;
  SplitSpec split;

  /// Dataset that holds the classes of `role`.
  const Dataset& dataset_for(Role role) const;
  std::vector<int> classes(Role role) const;
  /// "synth", or "a->b" across domains.
  std::string scenario() const;
};

RunData load_run_data(const RunConfig& cfg);

/// Initialises and trains the configured model; batch or episodic by method.
TrainResult train_run(const RunConfig& cfg, const RunData& data);

/// Number of head classes the method needs for this run.
std::size_t head_classes_for(const RunConfig& cfg, const RunData& data);

struct TrainOutputs {
  std::filesystem::path checkpoint, config, split;
};

/// Trains and writes checkpoint.fsck, config.json and split.json into output_dir.
/// Nothing is left behind on failure.
TrainOutputs cmd_train(const RunConfig& cfg);

struct EvalRequest {
  /// More than one value runs an N-way sweep.
  std::vector<int> ways;
  int workers = 1;
};

/// Scores a checkpoint under `cfg.eval`. `cfg` must carry the checkpoint's
/// digest unless `force` is set.
std::vector<EvalReport> evaluate_run(const Checkpoint& ck, const RunConfig& cfg, const RunData& data,
                                     const EvalRequest& req);

struct EvalOutputs {
  std::filesystem::path csv, json, config;
};

/// Writes eval_report.csv, eval_report.json and eval_config.json into `out_dir`.
EvalOutputs cmd_evaluate(const Checkpoint& ck, const RunConfig& cfg, const EvalRequest& req,
                         const std::filesystem::path& out_dir, bool force);

/// Throws ConfigError when the digests differ.
void check_digest(const Checkpoint& ck, const RunConfig& cfg);

/// Davies-Bouldin index of the features of every sample in each listed role.
/// Keys are "<role>_db"; +infinity is written as the string "inf".
nlohmann::ordered_json analyze_db(const Checkpoint& ck, const RunConfig& cfg, const RunData& data,
                                  std::span<const Role> roles);

/// Merges analyze_db output into the JSON object at `path` (created if absent).
void cmd_analyze_db(const Checkpoint& ck, const RunConfig& cfg, std::span<const Role> roles,
                    const std::filesystem::path& path, bool force, nlohmann::ordered_json* result = nullptr);

}  // namespace fsb
