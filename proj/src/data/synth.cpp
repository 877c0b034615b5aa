#include <algorithm>
#include <cmath>
#include <cstdio>

#include "fsb/data.hpp"
#include "fsb/errors.hpp"

namespace fsb {

namespace {

constexpr std::uint64_t kSampleStream = 0x5a17e5ULL;

void check(const SynthConfig& cfg) {
  if (cfg.n_classes < 2) throw ConfigError("synth: n_classes must be at least 2");
  if (cfg.samples_per_class < 1) throw ConfigError("synth: samples_per_class must be positive");
  if (cfg.channels < 1 || cfg.h < 1 || cfg.w < 1) throw ConfigError("synth: image extents must be positive");
  if (cfg.grid < 1) throw ConfigError("synth: grid must be positive");
  if (cfg.sigma < 0 || cfg.max_shift < 0) throw ConfigError("synth: sigma and max_shift must be non-negative");
}

// Bilinear upsampling of a random grid x grid field per channel.
Image prototype(const SynthConfig& cfg, int cls) {
  Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(cls)));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int g = cfg.grid;
  std::vector<double> field(static_cast<std::size_t>(cfg.channels) * g * g);
  for (auto& v : field) v = u(rng);
  Image img{cfg.channels, cfg.h, cfg.w, std::vector<float>(static_cast<std::size_t>(cfg.channels) * cfg.h * cfg.w)};
  auto coord = [g](int i, int n) {
    const double t = n > 1 ? static_cast<double>(i) * (g - 1) / (n - 1) : 0.0;
    const int lo = std::min(static_cast<int>(t), g - 1);
    return std::pair<int, double>(lo, t - lo);
  };
  for (int ch = 0; ch < cfg.channels; ++ch) {
    const double* f = field.data() + static_cast<std::size_t>(ch) * g * g;
    for (int y = 0; y < cfg.h; ++y) {
      const auto [y0, fy] = coord(y, cfg.h);
      const int y1 = std::min(y0 + 1, g - 1);
      for (int x = 0; x < cfg.w; ++x) {
        const auto [x0, fx] = coord(x, cfg.w);
        const int x1 = std::min(x0 + 1, g - 1);
        const double top = f[y0 * g + x0] * (1 - fx) + f[y0 * g + x1] * fx;
        const double bottom = f[y1 * g + x0] * (1 - fx) + f[y1 * g + x1] * fx;
        img.at(ch, y, x) = static_cast<float>(top * (1 - fy) + bottom * fy);
      }
    }
  }
  return img;
}

std::string class_name(const SynthConfig& cfg, int cls) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "_c%03d", cls);
  return cfg.name + buf;
}

}  // namespace

std::vector<Image> synth_prototypes(const SynthConfig& cfg) {
  check(cfg);
  std::vector<Image> out;
  for (int c = 0; c < cfg.n_classes; ++c) out.push_back(prototype(cfg, c));
  return out;
}

Dataset synth_generate(const SynthConfig& cfg) {
  check(cfg);
  Dataset ds;
  ds.name = cfg.name;
  for (int c = 0; c < cfg.n_classes; ++c) {
    const Image proto = prototype(cfg, c);
    Rng rng(derive_seed(cfg.seed ^ kSampleStream, static_cast<std::uint64_t>(c)));
    std::normal_distribution<double> noise(0.0, 1.0);
    std::uniform_int_distribution<int> shift(-cfg.max_shift, cfg.max_shift);
    ClassRecord rec{class_name(cfg, c), {}};
    for (int s = 0; s < cfg.samples_per_class; ++s) {
      const int dy = shift(rng), dx = shift(rng);
      Image img = proto;
      for (int ch = 0; ch < cfg.channels; ++ch) {
        for (int y = 0; y < cfg.h; ++y) {
          const int sy = std::clamp(y - dy, 0, cfg.h - 1);
          for (int x = 0; x < cfg.w; ++x) {
            const int sx = std::clamp(x - dx, 0, cfg.w - 1);
            const double v = proto.at(ch, sy, sx) + cfg.sigma * noise(rng);
            img.at(ch, y, x) = static_cast<float>(std::clamp(v, 0.0, 1.0));
          }
        }
      }
      rec.samples.push_back(std::move(img));
    }
    ds.classes.push_back(std::move(rec));
  }
  return ds;
}

}  // namespace fsb
