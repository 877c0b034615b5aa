// fsb: train, evaluate and analyse few-shot classifiers from a run config.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "fsb/config.hpp"
#include "fsb/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Removes a directory tree this command created if it does not finish.
class DirGuard {
 public:
  explicit DirGuard(const fs::path& dir) : dir_(dir), created_(!fs::exists(dir)) {}
  ~DirGuard() {
    if (created_ && !done_) {
      std::error_code ec;
      fs::remove_all(dir_, ec);
    }
  }
  void commit() { done_ = true; }

 private:
  fs::path dir_;
  bool created_;
  bool done_ = false;
};

struct EvalFlags {
  std::string checkpoint;
  std::string config;
  std::vector<int> ways;
  int episodes = 0;
  int shots = 0;
  int queries = 0;
  std::string scheme;
  std::string bn_mode;
  std::string role;
  int adapt_steps = 0;
  int workers = 1;
  std::string out;
  bool force = false;
};

// Checkpoint config (or --config) with the eval section patched from flags.
fsb::RunConfig eval_config(const fsb::Checkpoint& ck, const EvalFlags& f) {
  json j = f.config.empty() ? json::parse(ck.config.dump()) : fsb::read_config_json(f.config);
  auto& e = j["eval"];
  if (e.is_null()) e = json::object();
  if (f.episodes) e["episodes"] = f.episodes;
  if (f.shots) e["k_shot"] = f.shots;
  if (f.queries) e["n_query"] = f.queries;
  if (!f.scheme.empty()) e["scheme"] = f.scheme;
  if (!f.bn_mode.empty()) e["bn_mode"] = f.bn_mode;
  if (!f.role.empty()) e["role"] = f.role;
  if (f.adapt_steps) e["adapt_steps"] = f.adapt_steps;
  if (f.ways.size() == 1) e["n_way"] = f.ways.front();
  // evaluation may only move the eval seed; the rest is pinned by the digest
  if (auto s = fsb::env_seed()) e["seed"] = *s;
  return fsb::run_config_from_json(j);
}

int run_train(const std::string& config) {
  const auto cfg = fsb::load_run_config(config);
  const auto out = fsb::cmd_train(cfg);
  std::cout << "checkpoint " << out.checkpoint.string() << "\n"
            << "config " << out.config.string() << "\n"
            << "split " << out.split.string() << "\n";
  return 0;
}

int run_evaluate(const EvalFlags& f) {
  const auto ck = fsb::load_checkpoint(f.checkpoint);
  const auto cfg = eval_config(ck, f);
  const fs::path out = f.out.empty() ? fs::path(cfg.output_dir) : fs::path(f.out);
  fsb::EvalRequest req{f.ways, f.workers};
  const auto files = fsb::cmd_evaluate(ck, cfg, req, out, f.force);
  std::ifstream csv(files.csv);
  std::cout << csv.rdbuf();
  std::cout << "report " << files.csv.string() << " " << files.json.string() << "\n";
  return 0;
}

int run_analyze(const EvalFlags& f, const std::vector<std::string>& roles_s) {
  const auto ck = fsb::load_checkpoint(f.checkpoint);
  const auto cfg = eval_config(ck, f);
  std::vector<fsb::Role> roles;
  for (const auto& r : roles_s) roles.push_back(fsb::role_from_string(r));
  const fs::path out = f.out.empty() ? fs::path(cfg.output_dir) / "db_report.json" : fs::path(f.out);
  nlohmann::ordered_json values;
  fsb::cmd_analyze_db(ck, cfg, roles, out, f.force, &values);
  for (auto r : roles) {
    const auto key = fsb::to_string(r) + "_db";
    std::cout << key << " " << (values[key].is_string() ? values[key].get<std::string>() : values[key].dump()) << "\n";
  }
  std::cout << "report " << out.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Few-shot classification benchmark"};
  app.require_subcommand(1);

  std::string train_config;
  auto* train = app.add_subcommand("train", "Train the configured method; writes checkpoint and resolved config");
  train->add_option("config,--config", train_config, "Run config JSON")->required()->check(CLI::ExistingFile);

  EvalFlags ef;
  auto add_common = [&](CLI::App* c) {
    c->add_option("--checkpoint", ef.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
    c->add_option("--config", ef.config, "Run config; defaults to the one stored in the checkpoint")
        ->check(CLI::ExistingFile);
    c->add_flag("--force", ef.force, "Ignore a config digest mismatch");
    c->add_option("--bn-mode", ef.bn_mode, "episode_batch or running");
  };
  auto* evaluate = app.add_subcommand("evaluate", "Score a checkpoint on novel-class episodes");
  add_common(evaluate);
  evaluate->add_option("--ways", ef.ways, "N-way values; several run a sweep")->delimiter(',');
  evaluate->add_option("--episodes", ef.episodes, "Test episodes E")->check(CLI::PositiveNumber);
  evaluate->add_option("--shots", ef.shots, "Support shots k")->check(CLI::PositiveNumber);
  evaluate->add_option("--queries", ef.queries, "Queries per class")->check(CLI::PositiveNumber);
  evaluate->add_option("--scheme", ef.scheme, "none, new-softmax-head, maml-extended-updates, relation-finetune");
  evaluate->add_option("--adapt-steps", ef.adapt_steps, "Updates of the further-adaptation schemes")
      ->check(CLI::PositiveNumber);
  evaluate->add_option("--role", ef.role, "Split role to draw episodes from");
  evaluate->add_option("--workers", ef.workers, "Concurrent episodes")->check(CLI::PositiveNumber);
  evaluate->add_option("--out", ef.out, "Report directory; defaults to output_dir");

  std::vector<std::string> db_roles{"base", "novel"};
  auto* analyze = app.add_subcommand("analyze-db", "Davies-Bouldin index of base and novel features");
  add_common(analyze);
  analyze->add_option("--roles", db_roles, "Roles to analyse")->delimiter(',');
  analyze->add_option("--out", ef.out, "JSON report; defaults to output_dir/db_report.json");

  auto* dataset = app.add_subcommand("dataset", "Dataset utilities");
  dataset->require_subcommand(1);

  fsb::SynthConfig sc;
  std::string synth_out, synth_format = "rtf";
  int size = 0;
  auto* synth = dataset->add_subcommand("synth", "Write a synthetic dataset tree");
  synth->add_option("--out", synth_out, "Target directory")->required();
  synth->add_option("--classes", sc.n_classes)->check(CLI::PositiveNumber);
  synth->add_option("--samples", sc.samples_per_class, "Samples per class")->check(CLI::PositiveNumber);
  synth->add_option("--channels", sc.channels)->check(CLI::IsMember({1, 3}));
  synth->add_option("--size", size, "Square image side")->check(CLI::PositiveNumber);
  synth->add_option("--sigma", sc.sigma, "Pixel noise")->check(CLI::NonNegativeNumber);
  synth->add_option("--shift", sc.max_shift, "Largest translation in pixels")->check(CLI::NonNegativeNumber);
  synth->add_option("--grid", sc.grid)->check(CLI::PositiveNumber);
  synth->add_option("--seed", sc.seed);
  synth->add_option("--format", synth_format)->check(CLI::IsMember({"rtf", "pnm"}));

  std::string split_data, split_other, split_out;
  fsb::SplitCounts counts{64, 16, 20};
  std::uint64_t split_seed = 0;
  auto* split = dataset->add_subcommand("split", "Write a base/val/novel class split");
  split->add_option("--data", split_data, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  split->add_option("--novel-data", split_other, "Second dataset for a cross-domain split")
      ->check(CLI::ExistingDirectory);
  split->add_option("--base", counts.base)->check(CLI::NonNegativeNumber);
  split->add_option("--val", counts.val)->check(CLI::NonNegativeNumber);
  split->add_option("--novel", counts.novel)->check(CLI::NonNegativeNumber);
  split->add_option("--seed", split_seed);
  split->add_option("--out", split_out, "Split JSON file")->required();

  std::string conv_in, conv_out, conv_to;
  auto* convert = dataset->add_subcommand("convert", "Transcode PGM/PPM and RTF, one file or a tree");
  convert->add_option("--in", conv_in)->required()->check(CLI::ExistingPath);
  convert->add_option("--out", conv_out)->required();
  convert->add_option("--to", conv_to)->required()->check(CLI::IsMember({"rtf", "pnm"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return run_train(train_config);
    if (*evaluate) return run_evaluate(ef);
    if (*analyze) return run_analyze(ef, db_roles);
    if (*synth) {
      if (size) sc.h = sc.w = size;
      sc.name = fs::path(synth_out).filename().string();
      DirGuard guard(synth_out);
      fsb::save_dataset(synth_out, fsb::synth_generate(sc),
                        synth_format == "rtf" ? fsb::ImageFormat::rtf : fsb::ImageFormat::pnm);
      guard.commit();
      std::cout << "wrote " << sc.n_classes << " classes x " << sc.samples_per_class << " samples to " << synth_out
                << "\n";
      return 0;
    }
    if (*split) {
      const auto ds = fsb::load_dataset(split_data);
      const auto s = split_other.empty()
                         ? fsb::split_classes(ds, counts, split_seed)
                         : fsb::split_cross_domain(ds, fsb::load_dataset(split_other), counts.val, counts.novel,
                                                   split_seed);
      fsb::save_split(split_out, s);
      std::cout << "base " << s.base.size() << " val " << s.val.size() << " novel " << s.novel.size() << "\n";
      return 0;
    }
    if (*convert) {
      const auto fmt = conv_to == "rtf" ? fsb::ImageFormat::rtf : fsb::ImageFormat::pnm;
      if (fs::is_directory(conv_in)) {
        DirGuard guard(conv_out);
        fsb::save_dataset(conv_out, fsb::load_dataset(conv_in), fmt);
        guard.commit();
      } else {
        const auto img = fsb::read_image(conv_in);
        try {
          if (fmt == fsb::ImageFormat::rtf) {
            fsb::write_rtf_image(conv_out, img);
          } else {
            fsb::write_pnm(conv_out, img);
          }
        } catch (...) {
          std::error_code ec;
          fs::remove(conv_out, ec);
          throw;
        }
      }
      std::cout << "wrote " << conv_out << "\n";
      return 0;
    }
  } catch (const fsb::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const fsb::UnsupportedMethodError& e) {
    std::cerr << "unsupported: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
