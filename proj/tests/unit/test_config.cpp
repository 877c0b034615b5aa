#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "fsb/config.hpp"
#include "fsb/errors.hpp"

using namespace fsb;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json small(const std::string& method, const fs::path& out) {
  return json{
      {"seed", 3},
      {"output_dir", out.string()},
      {"dataset", {{"synth", {{"n_classes", 12}, {"samples_per_class", 30}, {"h", 16}, {"w", 16}, {"channels", 1}}}}},
      {"split", {{"base", 6}, {"val", 1}, {"novel", 5}}},
      {"backbone", {{"channels", 8}, {"pooled_blocks", 3}}},
      {"method", {{"name", method}}},
      {"train", {{"epochs", 1}, {"episodes", 4}, {"eval_every", 4}, {"n_query", 2}}},
      {"eval", {{"episodes", 10}, {"n_query", 4}}},
  };
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string error_of(const json& j) {
  try {
    run_config_from_json(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() / ("fsb_cfg_" + std::to_string(::getpid()) + "_" + std::to_string(counter_++));
    fs::remove_all(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
  static inline int counter_ = 0;
};

class EnvSeed {
 public:
  explicit EnvSeed(const char* v) { ::setenv("FSB_SEED", v, 1); }
  ~EnvSeed() { ::unsetenv("FSB_SEED"); }
};

}  // namespace

TEST(RunConfig, DefaultsMaterialized) {
  const auto cfg = run_config_from_json(json::object());
  const auto j = run_config_to_json(cfg);
  EXPECT_EQ(j["eval"]["episodes"], 600);
  EXPECT_EQ(j["eval"]["n_query"], 16);
  EXPECT_EQ(j["eval"]["n_way"], 5);
  EXPECT_EQ(j["eval"]["finetune"]["iterations"], 100);
  EXPECT_EQ(j["eval"]["finetune"]["batch_size"], 4);
  EXPECT_DOUBLE_EQ(j["eval"]["finetune"]["lr"].get<double>(), 1e-3);
  EXPECT_DOUBLE_EQ(j["train"]["lr"].get<double>(), 1e-3);
  EXPECT_EQ(j["train"]["epochs"], 50);
  EXPECT_EQ(j["train"]["episodes"], 2000);
  EXPECT_EQ(j["train"]["batch_size"], 16);
  EXPECT_FALSE(j["method"]["second_order"].get<bool>());
}

TEST(RunConfig, ResolvedConfigReparsesToItself) {
  for (const auto* m : {"baseline", "baseline++", "protonet", "matchingnet", "relationnet", "maml"}) {
    const auto a = run_config_to_json(run_config_from_json(small(m, "x")));
    const auto b = run_config_to_json(run_config_from_json(json::parse(a.dump())));
    EXPECT_EQ(a.dump(), b.dump()) << m;
  }
}

TEST(RunConfig, UnknownKeysNameTheField) {
  auto j = small("protonet", "x");
  j["train"]["epoch"] = 3;
  EXPECT_EQ(error_of(j), "train.epoch: unknown key");
  j = small("protonet", "x");
  j["bogus"] = 1;
  EXPECT_EQ(error_of(j), "bogus: unknown key");
  j = small("protonet", "x");
  j["dataset"]["synth"]["sigm"] = 0.1;
  EXPECT_EQ(error_of(j), "dataset.synth.sigm: unknown key");
  j = small("protonet", "x");
  j["eval"]["finetune"]["steps"] = 1;
  EXPECT_EQ(error_of(j), "eval.finetune.steps: unknown key");
}

TEST(RunConfig, TypeAndValueErrorsNameTheField) {
  auto j = small("protonet", "x");
  j["train"]["lr"] = "fast";
  EXPECT_EQ(error_of(j), "train.lr: expected a number");
  j = small("protonet", "x");
  j["eval"]["episodes"] = 1.5;
  EXPECT_EQ(error_of(j), "eval.episodes: expected an integer");
  j = small("protonet", "x");
  j["method"]["name"] = "siamese";
  EXPECT_NE(error_of(j).find("method.name"), std::string::npos);
  j = small("protonet", "x");
  j["train"]["eval_every"] = 3;
  EXPECT_NE(error_of(j).find("train.eval_every"), std::string::npos);
  j = small("protonet", "x");
  j["eval"]["scheme"] = "maml-extended-updates";
  EXPECT_NE(error_of(j).find("eval.scheme"), std::string::npos);
}

TEST(RunConfig, SecondOrderMamlOnConvRejected) {
  auto j = small("maml", "x");
  j["method"]["second_order"] = true;
  EXPECT_NE(error_of(j).find("method.second_order"), std::string::npos);
  j["backbone"] = {{"kind", "dense"}, {"hidden", {16, 16}}};
  EXPECT_EQ(error_of(j), "");
}

TEST(RunConfig, BaselinePlusPlusEchoesScaleInit) {
  const auto j = run_config_to_json(run_config_from_json(small("baseline++", "x")));
  EXPECT_DOUBLE_EQ(j["method"]["cosine_scale"].get<double>(), 10.0);
}

TEST(RunConfig, FullBudget) {
  auto j = small("protonet", "x");
  j["train"] = {{"full_budget", true}, {"k_shot", 1}};
  auto cfg = run_config_from_json(j);
  EXPECT_EQ(cfg.train.epochs, 400);
  EXPECT_EQ(cfg.train.episodes, 60000);
  j["train"]["k_shot"] = 5;
  EXPECT_EQ(run_config_from_json(j).train.episodes, 40000);
}

TEST(RunConfig, DatasetSourceIsExclusive) {
  auto j = small("protonet", "x");
  j["dataset"]["path"] = "/tmp/nowhere";
  EXPECT_NE(error_of(j).find("dataset.path"), std::string::npos);
}

TEST(RunConfig, CrossDomainNeedsDistinctNamesAndNoBaseCount) {
  auto j = small("protonet", "x");
  j["dataset"]["novel"] = {{"synth", {{"n_classes", 10}, {"h", 16}, {"w", 16}, {"channels", 1}}}};
  EXPECT_NE(error_of(j).find("dataset.novel.synth.name"), std::string::npos);
  j["dataset"]["novel"]["synth"]["name"] = "other";
  EXPECT_NE(error_of(j).find("split.base"), std::string::npos);
  j["split"].erase("base");
  EXPECT_EQ(error_of(j), "");
}

TEST(RunConfig, EnvSeedOverridesAndIsRecorded) {
  TempDir d;
  fs::create_directories(d.path());
  const auto p = d.path() / "c.json";
  std::ofstream(p) << small("protonet", "x").dump();
  {
    EnvSeed env("41");
    const auto cfg = load_run_config(p);
    EXPECT_EQ(cfg.seed, 41u);
    EXPECT_EQ(cfg.train.seed, 41u);
    EXPECT_EQ(run_config_to_json(cfg)["seed"], 41);
  }
  {
    EnvSeed env("4x");
    EXPECT_THROW(load_run_config(p), ConfigError);
  }
  EXPECT_EQ(load_run_config(p).seed, 3u);
}

TEST(RunConfig, DigestIgnoresEvalSectionOnly) {
  auto j = small("protonet", "x");
  const auto d0 = config_digest(run_config_from_json(j));
  j["eval"]["episodes"] = 50;
  j["eval"]["seed"] = 9;
  j["output_dir"] = "elsewhere";
  EXPECT_EQ(config_digest(run_config_from_json(j)), d0);
  j["train"]["lr"] = 0.01;
  EXPECT_NE(config_digest(run_config_from_json(j)), d0);
  j = small("protonet", "x");
  j["seed"] = 4;
  EXPECT_NE(config_digest(run_config_from_json(j)), d0);
}

TEST(Pipeline, TrainRerunIsByteIdentical) {
  TempDir a;
  for (const auto* m : {"baseline++", "protonet", "maml"}) {
    const auto ca = run_config_from_json(small(m, a.path()));
    const auto oa = cmd_train(ca);
    const auto first = slurp(oa.checkpoint);
    const auto resolved = slurp(oa.config);
    cmd_train(ca);
    EXPECT_TRUE(slurp(oa.checkpoint) == first) << m;
    // the resolved config fed back reproduces the checkpoint
    cmd_train(run_config_from_json(json::parse(resolved)));
    EXPECT_TRUE(slurp(oa.checkpoint) == first) << m;
    EXPECT_EQ(slurp(oa.config), resolved);
    const auto ck = load_checkpoint(oa.checkpoint);
    EXPECT_EQ(ck.digest, config_digest(ca));
    EXPECT_EQ(ck.config.dump(), run_config_to_json(ca).dump());
  }
}

TEST(Pipeline, FailedTrainLeavesNothing) {
  TempDir d;
  fs::create_directories(d.path() / "config.json");  // blocks the second write
  auto cfg = run_config_from_json(small("protonet", d.path()));
  EXPECT_THROW(cmd_train(cfg), LoadError);
  EXPECT_FALSE(fs::exists(d.path() / "checkpoint.fsck"));
  EXPECT_FALSE(fs::exists(d.path() / "split.json"));

  TempDir fresh;
  auto bad = small("protonet", fresh.path());
  bad["split"]["base"] = 2;  // fewer base classes than train.n_way
  EXPECT_THROW(cmd_train(run_config_from_json(bad)), ConfigError);
  EXPECT_FALSE(fs::exists(fresh.path()));
}

TEST(Pipeline, EvaluateOverridesAndDefaults) {
  TempDir d;
  auto j = small("protonet", d.path());
  j["eval"].erase("episodes");
  const auto cfg = run_config_from_json(j);
  const auto out = cmd_train(cfg);
  const auto ck = load_checkpoint(out.checkpoint);
  const auto data = load_run_data(cfg);
  auto r = evaluate_run(ck, cfg, data, {});
  ASSERT_EQ(r.size(), 1u);
  EXPECT_EQ(r[0].episodes(), 600u);
  EXPECT_EQ(r[0].n_way, 5);

  j["eval"]["episodes"] = 50;
  const auto e50 = cmd_evaluate(ck, run_config_from_json(j), {{}, 2}, d.path() / "e50", false);
  const auto csv = slurp(e50.csv);
  EXPECT_NE(csv.find("protonet,Conv-4,synth,5,5,50,"), std::string::npos) << csv;
  EXPECT_EQ(reports_from_json(slurp(e50.json)).front().episodes(), 50u);

  // same run, one worker: identical CSV
  const auto e50b = cmd_evaluate(ck, run_config_from_json(j), {{}, 1}, d.path() / "e50b", false);
  EXPECT_EQ(slurp(e50b.csv), csv);

  auto other = j;
  other["train"]["lr"] = 0.5;
  EXPECT_THROW(cmd_evaluate(ck, run_config_from_json(other), {}, d.path() / "x", false), ConfigError);
  EXPECT_FALSE(fs::exists(d.path() / "x"));
  EXPECT_NO_THROW(cmd_evaluate(ck, run_config_from_json(other), {}, d.path() / "x", true));
}

TEST(Pipeline, SweepRejectedForMaml) {
  TempDir d;
  const auto cfg = run_config_from_json(small("maml", d.path()));
  const auto ck = load_checkpoint(cmd_train(cfg).checkpoint);
  const std::vector<int> ways{5, 10, 20};
  EXPECT_THROW(cmd_evaluate(ck, cfg, {ways, 1}, d.path() / "sweep", false), UnsupportedMethodError);
  EXPECT_FALSE(fs::exists(d.path() / "sweep"));
}

TEST(Pipeline, SweepOnProtoNet) {
  TempDir d;
  auto j = small("protonet", d.path());
  j["split"] = {{"base", 6}, {"val", 0}, {"novel", 6}};
  const auto cfg = run_config_from_json(j);
  const auto ck = load_checkpoint(cmd_train(cfg).checkpoint);
  const auto r = evaluate_run(ck, cfg, load_run_data(cfg), {{2, 4, 6}, 1});
  ASSERT_EQ(r.size(), 3u);
  EXPECT_EQ(r[2].n_way, 6);
}

TEST(Pipeline, AnalyzeDbKeysAndDeterminism) {
  TempDir d;
  auto j = small("baseline", d.path());
  j["dataset"]["synth"]["sigma"] = 0.0;
  j["dataset"]["synth"]["max_shift"] = 0;
  const auto cfg = run_config_from_json(j);
  const auto ck = load_checkpoint(cmd_train(cfg).checkpoint);
  const std::vector<Role> roles{Role::base, Role::novel};
  const auto path = d.path() / "db.json";
  nlohmann::ordered_json v1, v2;
  cmd_analyze_db(ck, cfg, roles, path, false, &v1);
  cmd_analyze_db(ck, cfg, roles, path, false, &v2);
  EXPECT_EQ(v1.dump(), v2.dump());
  const auto doc = json::parse(slurp(path));
  ASSERT_TRUE(doc.contains("base_db"));
  ASSERT_TRUE(doc.contains("novel_db"));
  // no scatter: every class collapses onto its centroid
  EXPECT_LT(doc["base_db"].get<double>(), 1e-3);
  EXPECT_LT(doc["novel_db"].get<double>(), 1e-3);

  auto no_val = j;
  const std::vector<Role> val{Role::val};
  no_val["split"]["val"] = 0;
  no_val["split"]["novel"] = 6;
  const auto c2 = run_config_from_json(no_val);
  const auto ck2 = load_checkpoint(cmd_train(c2).checkpoint);
  EXPECT_THROW(cmd_analyze_db(ck2, c2, val, d.path() / "v.json", false), ConfigError);
  EXPECT_FALSE(fs::exists(d.path() / "v.json"));
}

TEST(Pipeline, CrossDomainTrainsOnBaseAndScoresOther) {
  TempDir d;
  auto j = small("protonet", d.path());
  j["dataset"]["novel"] = {
      {"synth", {{"name", "other"}, {"n_classes", 10}, {"h", 16}, {"w", 16}, {"channels", 1}, {"seed", 5}}}};
  j["split"] = {{"val", 5}, {"novel", 5}};
  const auto cfg = run_config_from_json(j);
  const auto data = load_run_data(cfg);
  EXPECT_EQ(data.split.base.size(), 12u);
  EXPECT_EQ(data.scenario(), "synth->other");
  EXPECT_EQ(&data.dataset_for(Role::novel), &*data.novel);
  const auto r = train_run(cfg, data);
  EXPECT_EQ(r.metrics.val_curve.size(), 1u);
}

TEST(Pipeline, ImageShapeMismatchIsConfigError) {
  auto j = small("protonet", "x");
  j["backbone"]["input_hw"] = {32, 32};
  EXPECT_THROW(load_run_data(run_config_from_json(j)), ConfigError);
}

TEST(Presets, AllParseAndLoad) {
  int n = 0;
  for (const auto& e : fs::directory_iterator(FSB_CONFIG_DIR)) {
    if (e.path().extension() != ".json") continue;
    ++n;
    RunConfig cfg;
    ASSERT_NO_THROW(cfg = load_run_config(e.path())) << e.path();
    EXPECT_NO_THROW(load_run_data(cfg)) << e.path();
  }
  EXPECT_GE(n, 5);
}

TEST(Presets, HigherWayProtoNetTrainsWide) {
  const auto cfg = load_run_config(fs::path(FSB_CONFIG_DIR) / "protonet_20way_train.json");
  EXPECT_EQ(cfg.train.n_way, 20);
  EXPECT_EQ(cfg.eval.n_way, 5);
}
