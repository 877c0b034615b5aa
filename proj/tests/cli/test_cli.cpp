#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include "fsb/data.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code = -1;
  std::string out;
};

// Runs the CLI with stderr folded into the captured output.
Run cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " " FSB_CLI_PATH " " + args + " 2>&1";
  Run r;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  while (std::fgets(buf, sizeof buf, p)) r.out += buf;
  const int status = ::pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("fsb_cli_" + std::to_string(::getpid()) + "_" + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write_config(const std::string& name, const json& j) {
    const auto p = dir_ / name;
    std::ofstream(p) << j.dump(2);
    return p;
  }

  json small(const std::string& method, const std::string& out) const {
    return json{
        {"seed", 3},
        {"output_dir", (dir_ / out).string()},
        {"dataset",
         {{"synth", {{"n_classes", 12}, {"samples_per_class", 30}, {"h", 16}, {"w", 16}, {"channels", 1}}}}},
        {"split", {{"base", 6}, {"val", 1}, {"novel", 5}}},
        {"backbone", {{"channels", 8}, {"pooled_blocks", 3}}},
        {"method", {{"name", method}}},
        {"train", {{"epochs", 1}, {"episodes", 4}, {"eval_every", 4}, {"n_query", 2}}},
        {"eval", {{"n_query", 4}}},
    };
  }

  fs::path dir_;
};

std::size_t count_files(const fs::path& root, std::size_t* dirs) {
  std::size_t n = 0;
  *dirs = 0;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) ++n;
    if (e.is_directory()) ++*dirs;
  }
  return n;
}

}  // namespace

TEST_F(CliTest, SynthWritesOneFilePerSample) {
  const auto r = cli("dataset synth --out " + (dir_ / "tree").string() + " --classes 20 --samples 50 --size 8");
  ASSERT_EQ(r.code, 0) << r.out;
  std::size_t dirs = 0;
  EXPECT_EQ(count_files(dir_ / "tree", &dirs), 1000u);
  EXPECT_EQ(dirs, 20u);
}

TEST_F(CliTest, SplitCardinalities) {
  ASSERT_EQ(cli("dataset synth --out " + (dir_ / "hundred").string() + " --classes 100 --samples 1 --size 4").code, 0);
  const auto out = dir_ / "split.json";
  const auto r = cli("dataset split --data " + (dir_ / "hundred").string() +
                     " --base 64 --val 16 --novel 20 --seed 1 --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.out;
  const auto s = fsb::load_split(out);
  EXPECT_EQ(s.base.size(), 64u);
  EXPECT_EQ(s.val.size(), 16u);
  EXPECT_EQ(s.novel.size(), 20u);
  EXPECT_NE(cli("dataset split --data " + (dir_ / "hundred").string() + " --base 90 --val 16 --novel 20 --out " +
                (dir_ / "bad.json").string())
                .code,
            0);
}

TEST_F(CliTest, ConvertRoundTripIsLossless) {
  const auto pgm = dir_ / "pgm";
  ASSERT_EQ(cli("dataset synth --out " + pgm.string() + " --classes 3 --samples 4 --size 8 --channels 1 --format pnm")
                .code,
            0);
  ASSERT_EQ(cli("dataset convert --in " + pgm.string() + " --out " + (dir_ / "rtf").string() + " --to rtf").code, 0);
  ASSERT_EQ(cli("dataset convert --in " + (dir_ / "rtf").string() + " --out " + (dir_ / "back").string() + " --to pnm")
                .code,
            0);
  const auto a = fsb::load_dataset(pgm);
  const auto b = fsb::load_dataset(dir_ / "back");
  ASSERT_EQ(a.classes.size(), b.classes.size());
  for (std::size_t c = 0; c < a.classes.size(); ++c) EXPECT_EQ(a.classes[c].samples, b.classes[c].samples);
  // single file
  const auto file = *fs::directory_iterator(pgm / a.classes[0].name);
  ASSERT_EQ(cli("dataset convert --in " + file.path().string() + " --out " + (dir_ / "one.rtf").string() + " --to rtf")
                .code,
            0);
  EXPECT_EQ(fsb::read_image(dir_ / "one.rtf"), fsb::read_image(file.path()));
}

TEST_F(CliTest, InvalidConfigExitsWithFieldMessage) {
  auto j = small("protonet", "bad");
  j["train"]["epoch"] = 2;
  const auto r = cli("train " + write_config("c.json", j).string());
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.out.find("train.epoch"), std::string::npos) << r.out;
  EXPECT_FALSE(fs::exists(dir_ / "bad"));

  auto m = small("maml", "bad");
  m["method"]["second_order"] = true;
  const auto r2 = cli("train " + write_config("m.json", m).string());
  EXPECT_NE(r2.code, 0);
  EXPECT_NE(r2.out.find("method.second_order"), std::string::npos) << r2.out;
}

TEST_F(CliTest, TrainEvaluateAnalyze) {
  const auto cfg = write_config("c.json", small("protonet", "run"));
  const auto t = cli("train " + cfg.string());
  ASSERT_EQ(t.code, 0) << t.out;
  const auto ck = (dir_ / "run" / "checkpoint.fsck").string();
  const auto first = slurp(ck);
  ASSERT_EQ(cli("train " + cfg.string()).code, 0);
  EXPECT_TRUE(slurp(ck) == first);

  // default protocol: one row, E = 600
  const auto e = cli("evaluate --checkpoint " + ck + " --out " + (dir_ / "e600").string());
  ASSERT_EQ(e.code, 0) << e.out;
  std::istringstream csv(slurp(dir_ / "e600" / "eval_report.csv"));
  std::string header, row, extra;
  std::getline(csv, header);
  std::getline(csv, row);
  EXPECT_FALSE(std::getline(csv, extra));
  EXPECT_EQ(header, "method,backbone,scenario,N,k,E,mean,ci95,seed");
  EXPECT_EQ(row.rfind("protonet,Conv-4,synth,5,5,600,", 0), 0u) << row;

  const auto e50 = cli("evaluate --checkpoint " + ck + " --episodes 50 --workers 3 --out " + (dir_ / "e50").string());
  ASSERT_EQ(e50.code, 0) << e50.out;
  EXPECT_NE(slurp(dir_ / "e50" / "eval_report.csv").find(",5,5,50,"), std::string::npos);
  ASSERT_EQ(cli("evaluate --checkpoint " + ck + " --episodes 50 --out " + (dir_ / "e50b").string()).code, 0);
  EXPECT_EQ(slurp(dir_ / "e50" / "eval_report.csv"), slurp(dir_ / "e50b" / "eval_report.csv"));

  const auto resolved = json::parse(slurp(dir_ / "e50" / "eval_config.json"));
  EXPECT_EQ(resolved["eval"]["episodes"], 50);

  const auto db = cli("analyze-db --checkpoint " + ck);
  ASSERT_EQ(db.code, 0) << db.out;
  const auto doc = json::parse(slurp(dir_ / "run" / "db_report.json"));
  EXPECT_TRUE(doc.contains("base_db"));
  EXPECT_TRUE(doc.contains("novel_db"));
  const auto db2 = cli("analyze-db --checkpoint " + ck);
  EXPECT_EQ(db.out, db2.out);
}

TEST_F(CliTest, DigestMismatchNeedsForce) {
  const auto cfg = write_config("c.json", small("protonet", "run"));
  ASSERT_EQ(cli("train " + cfg.string()).code, 0);
  auto other = small("protonet", "run");
  other["train"]["lr"] = 0.01;
  const auto oc = write_config("o.json", other);
  const auto ck = (dir_ / "run" / "checkpoint.fsck").string();
  const auto out = (dir_ / "ev").string();
  const auto r = cli("evaluate --checkpoint " + ck + " --config " + oc.string() + " --episodes 5 --out " + out);
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.out.find("digest"), std::string::npos);
  EXPECT_FALSE(fs::exists(out));
  EXPECT_EQ(cli("evaluate --checkpoint " + ck + " --config " + oc.string() + " --episodes 5 --force --out " + out).code,
            0);
}

TEST_F(CliTest, MamlSweepIsRejected) {
  const auto cfg = write_config("c.json", small("maml", "run"));
  ASSERT_EQ(cli("train " + cfg.string()).code, 0);
  const auto out = (dir_ / "sweep").string();
  const auto r = cli("evaluate --checkpoint " + (dir_ / "run" / "checkpoint.fsck").string() +
                     " --ways 5,10,20 --episodes 5 --out " + out);
  EXPECT_NE(r.code, 0);
  EXPECT_FALSE(fs::exists(out));
}

TEST_F(CliTest, EnvSeedIsRecorded) {
  const auto cfg = write_config("c.json", small("protonet", "run"));
  ASSERT_EQ(cli("train " + cfg.string(), "FSB_SEED=17").code, 0);
  const auto resolved = json::parse(slurp(dir_ / "run" / "config.json"));
  EXPECT_EQ(resolved["seed"], 17);
  EXPECT_EQ(resolved["eval"]["seed"], 17);
  // evaluation under another FSB_SEED moves only the eval seed
  const auto ck = (dir_ / "run" / "checkpoint.fsck").string();
  const auto r = cli("evaluate --checkpoint " + ck + " --episodes 5 --out " + (dir_ / "ev").string(), "FSB_SEED=5");
  ASSERT_EQ(r.code, 0) << r.out;
  EXPECT_NE(slurp(dir_ / "ev" / "eval_report.csv").find(",5\n"), std::string::npos);
}
