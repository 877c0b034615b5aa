#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <unistd.h>

#include "fsb/data.hpp"
#include "fsb/errors.hpp"

using namespace fsb;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("fsb_test_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_pgm(const fs::path& p, int w, int h, int maxval, unsigned char fill) {
  std::ofstream out(p, std::ios::binary);
  out << "P5\n# comment line\n" << w << " " << h << "\n" << maxval << "\n";
  std::string px(static_cast<std::size_t>(w * h), static_cast<char>(fill));
  out << px;
}

Dataset tiny_dataset(int classes, int per_class) {
  SynthConfig cfg;
  cfg.name = "tiny";
  cfg.n_classes = classes;
  cfg.samples_per_class = per_class;
  cfg.channels = 1;
  cfg.h = cfg.w = 4;
  return synth_generate(cfg);
}

std::vector<int> all_classes(const Dataset& ds) {
  std::vector<int> v(ds.classes.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<int>(i);
  return v;
}

}  // namespace

TEST(DataIO, LoadsPgmDirectory) {
  TempDir t("pgm");
  for (const char* cls : {"b", "a"}) {
    fs::create_directories(t.path / cls);
    for (int i = 0; i < 3; ++i) write_pgm(t.path / cls / (std::to_string(i) + ".pgm"), 3, 2, 255, 255);
  }
  auto ds = load_dataset(t.path);
  ASSERT_EQ(ds.classes.size(), 2u);
  EXPECT_EQ(ds.classes[0].name, "a");
  EXPECT_EQ(ds.classes[1].name, "b");
  for (const auto& c : ds.classes) {
    ASSERT_EQ(c.samples.size(), 3u);
    EXPECT_EQ(c.samples[0].c, 1);
    EXPECT_EQ(c.samples[0].h, 2);
    EXPECT_EQ(c.samples[0].w, 3);
    for (float v : c.samples[0].pixels) EXPECT_EQ(v, 1.0f);
  }
}

TEST(DataIO, MissingDirectoryIsLoadError) {
  EXPECT_THROW(load_dataset("/nonexistent/fsb/dataset"), LoadError);
}

TEST(DataIO, EmptyClassIsLoadError) {
  TempDir t("empty");
  fs::create_directories(t.path / "a");
  EXPECT_THROW(load_dataset(t.path), LoadError);
}

TEST(DataIO, UnreadableFileNamesPath) {
  TempDir t("bad");
  fs::create_directories(t.path / "a");
  std::ofstream(t.path / "a" / "junk.bin") << "hello";
  try {
    load_dataset(t.path);
    FAIL() << "expected LoadError";
  } catch (const LoadError& e) {
    EXPECT_NE(std::string(e.what()).find("junk.bin"), std::string::npos);
  }
}

TEST(DataIO, SixteenBitPgm) {
  TempDir t("p16");
  const auto p = t.path / "x.pgm";
  {
    std::ofstream out(p, std::ios::binary);
    out << "P5 1 1 1000\n";
    out.put(static_cast<char>(0x01));
    out.put(static_cast<char>(0xf4));  // 500
  }
  EXPECT_FLOAT_EQ(read_pnm(p).pixels[0], 0.5f);
}

TEST(DataIO, RtfStreamLayout) {
  std::ostringstream os;
  write_rtf(os, {1, 2}, std::vector<float>{1.0f, -2.5f});
  const auto bytes = os.str();
  ASSERT_EQ(bytes.size(), 4u + 4 + 8 + 8);
  EXPECT_EQ(bytes.substr(0, 4), "RTF1");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 2);  // rank, little-endian
  EXPECT_EQ(static_cast<unsigned char>(bytes[12]), 2);  // second extent
  // 1.0f = 0x3f800000, low byte first.
  EXPECT_EQ(static_cast<unsigned char>(bytes[16 + 3]), 0x3f);
  EXPECT_EQ(static_cast<unsigned char>(bytes[16 + 2]), 0x80);
  std::istringstream is(bytes);
  auto t = read_rtf(is);
  EXPECT_EQ(t.shape, (Shape{1, 2}));
  EXPECT_EQ(t.values, (std::vector<float>{1.0f, -2.5f}));
}

TEST(DataIO, TruncatedRtfIsLoadError) {
  std::istringstream is(std::string("RTF1\x01\x00\x00\x00\x04\x00\x00\x00", 12));
  EXPECT_THROW(read_rtf(is), LoadError);
}

TEST(DataIO, RtfDatasetRoundTripIsBitExact) {
  TempDir t("rtf");
  SynthConfig cfg;
  cfg.name = "rt";
  cfg.n_classes = 3;
  cfg.samples_per_class = 4;
  cfg.h = cfg.w = 6;
  auto ds = synth_generate(cfg);
  save_dataset(t.path / "a", ds, ImageFormat::rtf);
  auto back = load_dataset(t.path / "a");
  ASSERT_EQ(back.classes.size(), ds.classes.size());
  for (std::size_t c = 0; c < ds.classes.size(); ++c) {
    EXPECT_EQ(back.classes[c].name, ds.classes[c].name);
    EXPECT_EQ(back.classes[c].samples, ds.classes[c].samples);
  }
  save_dataset(t.path / "b", back, ImageFormat::rtf);
  auto again = load_dataset(t.path / "b");
  for (std::size_t c = 0; c < ds.classes.size(); ++c) EXPECT_EQ(again.classes[c].samples, back.classes[c].samples);
}

TEST(DataIO, PnmRtfPnmPreservesPixels) {
  TempDir t("conv");
  SynthConfig cfg;
  cfg.n_classes = 2;
  cfg.samples_per_class = 2;
  cfg.h = cfg.w = 5;
  save_dataset(t.path / "pnm", synth_generate(cfg), ImageFormat::pnm);
  auto a = load_dataset(t.path / "pnm");
  save_dataset(t.path / "rtf", a, ImageFormat::rtf);
  auto b = load_dataset(t.path / "rtf");
  save_dataset(t.path / "pnm2", b, ImageFormat::pnm);
  auto c = load_dataset(t.path / "pnm2");
  for (std::size_t k = 0; k < a.classes.size(); ++k) {
    EXPECT_EQ(a.classes[k].samples, b.classes[k].samples);
    EXPECT_EQ(a.classes[k].samples, c.classes[k].samples);
  }
}

TEST(Split, PartitionCoversAllClasses) {
  auto ds = tiny_dataset(10, 2);
  auto s = split_classes(ds, {6, 2, 2}, 3);
  EXPECT_EQ(s.base.size(), 6u);
  EXPECT_EQ(s.val.size(), 2u);
  EXPECT_EQ(s.novel.size(), 2u);
  std::set<std::string> all(s.base.begin(), s.base.end());
  all.insert(s.val.begin(), s.val.end());
  all.insert(s.novel.begin(), s.novel.end());
  EXPECT_EQ(all.size(), 10u);
}

TEST(Split, DeterministicPerSeed) {
  auto ds = tiny_dataset(12, 2);
  EXPECT_EQ(split_classes(ds, {6, 3, 3}, 7), split_classes(ds, {6, 3, 3}, 7));
  EXPECT_NE(split_classes(ds, {6, 3, 3}, 7).base, split_classes(ds, {6, 3, 3}, 8).base);
}

TEST(Split, TooManyClassesIsConfigError) {
  auto ds = tiny_dataset(5, 2);
  EXPECT_THROW(split_classes(ds, {3, 2, 1}, 0), ConfigError);
}

TEST(Split, CrossDomainAssignsDatasetsByConstruction) {
  auto a = tiny_dataset(6, 2);
  SynthConfig cb;
  cb.name = "other";
  cb.n_classes = 8;
  cb.samples_per_class = 2;
  cb.channels = 1;
  cb.h = cb.w = 4;
  auto b = synth_generate(cb);
  auto s = split_cross_domain(a, b, 3, 5, 1);
  EXPECT_TRUE(s.cross_domain());
  EXPECT_EQ(s.base.size(), 6u);
  for (const auto& n : s.base) EXPECT_NO_THROW(a.class_index(n));
  for (const auto& n : s.novel) EXPECT_NO_THROW(b.class_index(n));
  for (const auto& n : s.base) EXPECT_EQ(std::count(s.novel.begin(), s.novel.end(), n), 0);
  EXPECT_THROW(role_classes(a, s, Role::novel), ConfigError);
  EXPECT_EQ(role_classes(b, s, Role::novel).size(), 5u);
  EXPECT_THROW(split_cross_domain(a, a, 1, 1, 0), ConfigError);
}

TEST(Split, JsonRoundTrip) {
  auto ds = tiny_dataset(10, 2);
  auto s = split_classes(ds, {5, 2, 3}, 99);
  EXPECT_EQ(split_from_json(split_to_json(s)), s);
  auto j = split_to_json(s);
  EXPECT_NE(j.find("\"base_dataset\""), std::string::npos);
  EXPECT_THROW(split_from_json("{\"base\":[],\"val\":[],\"novel\":[],\"base_dataset\":\"a\","
                               "\"novel_dataset\":\"a\",\"seed\":1,\"extra\":2}"),
               ConfigError);
}

TEST(Episode, StandardFiveWayShape) {
  auto ds = tiny_dataset(8, 20);
  Rng rng(1);
  auto pool = all_classes(ds);
  auto ep = sample_episode(ds, pool, 5, 1, 16, rng);
  EXPECT_EQ(ep.support.size(), 5u);
  EXPECT_EQ(ep.query.size(), 80u);
}

TEST(Episode, Exhaustion) {
  auto ds = tiny_dataset(2, 2);
  Rng rng(2);
  auto pool = all_classes(ds);
  auto ep = sample_episode(ds, pool, 2, 1, 1, rng);
  std::set<int> s_cls, q_cls;
  for (auto r : ep.support) s_cls.insert(r.cls);
  for (auto r : ep.query) q_cls.insert(r.cls);
  EXPECT_EQ(s_cls.size(), 2u);
  EXPECT_EQ(q_cls.size(), 2u);
}

TEST(Episode, InsufficientIsEpisodeError) {
  auto ds = tiny_dataset(3, 4);
  Rng rng(3);
  auto pool = all_classes(ds);
  EXPECT_THROW(sample_episode(ds, pool, 4, 1, 1, rng), EpisodeError);
  EXPECT_THROW(sample_episode(ds, pool, 2, 2, 3, rng), EpisodeError);
}

TEST(Episode, InvariantsOverManyDraws) {
  auto ds = tiny_dataset(10, 12);
  auto pool = all_classes(ds);
  Rng rng(4);
  for (int e = 0; e < 10000; ++e) {
    auto ep = sample_episode(ds, pool, 5, 2, 3, rng);
    std::set<int> classes(ep.classes.begin(), ep.classes.end());
    ASSERT_EQ(classes.size(), 5u);
    std::vector<int> s_count(5, 0), q_count(5, 0);
    std::set<std::pair<int, int>> seen;
    for (std::size_t i = 0; i < ep.support.size(); ++i) {
      ++s_count[ep.support_y[i]];
      ASSERT_EQ(ep.support[i].cls, ep.classes[ep.support_y[i]]);
      seen.insert({ep.support[i].cls, ep.support[i].index});
    }
    for (std::size_t i = 0; i < ep.query.size(); ++i) {
      ++q_count[ep.query_y[i]];
      ASSERT_EQ(ep.query[i].cls, ep.classes[ep.query_y[i]]);
      ASSERT_FALSE(seen.count({ep.query[i].cls, ep.query[i].index}));
      seen.insert({ep.query[i].cls, ep.query[i].index});
    }
    ASSERT_EQ(s_count, std::vector<int>(5, 2));
    ASSERT_EQ(q_count, std::vector<int>(5, 3));
  }
}

TEST(Episode, SameSeedSameEpisode) {
  auto ds = tiny_dataset(10, 12);
  auto pool = all_classes(ds);
  Rng a(77), b(77);
  for (int e = 0; e < 20; ++e) {
    auto x = sample_episode(ds, pool, 5, 1, 4, a);
    auto y = sample_episode(ds, pool, 5, 1, 4, b);
    EXPECT_EQ(x.support, y.support);
    EXPECT_EQ(x.query, y.query);
  }
}

TEST(Augment, NoOpConfigIsIdentity) {
  auto ds = tiny_dataset(2, 1);
  AugmentConfig cfg{true, {1, 1}, 0, {1, 1}};
  Rng rng(5);
  const auto& img = ds.classes[0].samples[0];
  EXPECT_EQ(augment(img, cfg, rng), img);
}

TEST(Augment, DoubleFlipIsIdentity) {
  SynthConfig sc;
  sc.n_classes = 2;
  sc.samples_per_class = 1;
  sc.h = 5;
  sc.w = 7;
  auto img = synth_generate(sc).classes[1].samples[0];
  AugmentConfig cfg{true, {1, 1}, 1.0, {1, 1}};
  Rng rng(6);
  auto once = augment(img, cfg, rng);
  EXPECT_NE(once, img);
  EXPECT_EQ(once, hflip(img));
  EXPECT_EQ(augment(once, cfg, rng), img);
}

TEST(Augment, OutputStaysInUnitRange) {
  SynthConfig sc;
  sc.n_classes = 2;
  sc.samples_per_class = 1;
  auto img = synth_generate(sc).classes[0].samples[0];
  AugmentConfig cfg;
  cfg.jitter = {0.5, 2.0};
  Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    auto out = augment(img, cfg, rng);
    for (float v : out.pixels) {
      ASSERT_GE(v, 0.0f);
      ASSERT_LE(v, 1.0f);
    }
  }
}

TEST(Augment, InvalidConfigIsConfigError) {
  AugmentConfig bad;
  bad.flip_prob = 1.5;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = {};
  bad.crop_scale = {0.9, 0.8};
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Synth, ZeroNoiseZeroShiftIsConstantPerClass) {
  SynthConfig cfg;
  cfg.n_classes = 3;
  cfg.samples_per_class = 5;
  cfg.sigma = 0;
  cfg.max_shift = 0;
  auto ds = synth_generate(cfg);
  for (const auto& c : ds.classes)
    for (const auto& s : c.samples) EXPECT_EQ(s, c.samples[0]);
}

TEST(Synth, DeterministicPerSeed) {
  SynthConfig cfg;
  cfg.n_classes = 3;
  cfg.samples_per_class = 3;
  auto a = synth_generate(cfg), b = synth_generate(cfg);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(a.classes[c].samples, b.classes[c].samples);
  cfg.seed = 1;
  EXPECT_NE(synth_generate(cfg).classes[0].samples, a.classes[0].samples);
}

TEST(Synth, NearestPrototypeOracleAbove99Percent) {
  SynthConfig cfg;
  cfg.n_classes = 20;
  cfg.samples_per_class = 50;
  cfg.sigma = 0.05;
  auto ds = synth_generate(cfg);
  auto protos = synth_prototypes(cfg);
  int correct = 0, total = 0;
  for (std::size_t c = 0; c < ds.classes.size(); ++c) {
    for (const auto& s : ds.classes[c].samples) {
      std::size_t best = 0;
      double best_d = INFINITY;
      for (std::size_t p = 0; p < protos.size(); ++p) {
        double d = 0;
        for (std::size_t k = 0; k < s.pixels.size(); ++k) {
          const double diff = s.pixels[k] - protos[p].pixels[k];
          d += diff * diff;
        }
        if (d < best_d) {
          best_d = d;
          best = p;
        }
      }
      correct += best == c;
      ++total;
    }
  }
  EXPECT_GT(static_cast<double>(correct) / total, 0.99);
}

TEST(Stack, BuildsBatchTensor) {
  auto ds = tiny_dataset(3, 2);
  std::vector<SampleRef> refs{{0, 0}, {2, 1}};
  auto t = stack_images<float>(ds, refs);
  EXPECT_EQ(t.shape(), (Shape{2, 1, 4, 4}));
  EXPECT_EQ(t.data()[16], ds.classes[2].samples[1].pixels[0]);
}
