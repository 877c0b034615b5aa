#include <algorithm>
#include <cmath>
#include <numeric>

#include "fsb/data.hpp"
#include "fsb/errors.hpp"

namespace fsb {

namespace {

// First `take` entries of a uniformly shuffled 0..n-1 (partial Fisher-Yates).
std::vector<int> draw_without_replacement(std::size_t n, std::size_t take, Rng& rng) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < take; ++i) std::swap(idx[i], idx[i + uniform_index(rng, n - i)]);
  idx.resize(take);
  return idx;
}

}  // namespace

Episode sample_episode(const Dataset& ds, std::span<const int> pool, int n_way, int k_shot, int n_query, Rng& rng) {
  if (n_way < 1 || k_shot < 1 || n_query < 0) {
    throw EpisodeError("episode shape must have N >= 1, k >= 1, q >= 0");
  }
  if (pool.size() < static_cast<std::size_t>(n_way)) {
    throw EpisodeError(std::to_string(n_way) + "-way episode needs " + std::to_string(n_way) +
                       " classes, the pool has " + std::to_string(pool.size()));
  }
  Episode ep;
  ep.n_way = n_way;
  ep.k_shot = k_shot;
  ep.n_query = n_query;
  const auto per_class = static_cast<std::size_t>(k_shot + n_query);
  for (int pick : draw_without_replacement(pool.size(), n_way, rng)) {
    const int cls = pool[static_cast<std::size_t>(pick)];
    if (cls < 0 || static_cast<std::size_t>(cls) >= ds.classes.size()) {
      throw EpisodeError("class index " + std::to_string(cls) + " outside the dataset");
    }
    const auto& rec = ds.classes[static_cast<std::size_t>(cls)];
    if (rec.samples.size() < per_class) {
      throw EpisodeError("class \"" + rec.name + "\" has " + std::to_string(rec.samples.size()) +
                         " samples, the episode needs " + std::to_string(per_class));
    }
    const int local = static_cast<int>(ep.classes.size());
    ep.classes.push_back(cls);
    const auto chosen = draw_without_replacement(rec.samples.size(), per_class, rng);
    for (std::size_t i = 0; i < per_class; ++i) {
      if (i < static_cast<std::size_t>(k_shot)) {
        ep.support.push_back({cls, chosen[i]});
        ep.support_y.push_back(local);
      } else {
        ep.query.push_back({cls, chosen[i]});
        ep.query_y.push_back(local);
      }
    }
  }
  return ep;
}

void AugmentConfig::validate() const {
  if (!(crop_scale[0] > 0) || crop_scale[0] > crop_scale[1] || crop_scale[1] > 1) {
    throw ConfigError("augment.crop_scale: need 0 < lo <= hi <= 1");
  }
  if (!(flip_prob >= 0 && flip_prob <= 1)) throw ConfigError("augment.flip_prob: must lie in [0, 1]");
  if (!(jitter[0] > 0) || jitter[0] > jitter[1]) throw ConfigError("augment.jitter: need 0 < lo <= hi");
}

Image hflip(const Image& img) {
  Image out = img;
  for (int ch = 0; ch < img.c; ++ch)
    for (int y = 0; y < img.h; ++y)
      for (int x = 0; x < img.w; ++x) out.at(ch, y, x) = img.at(ch, y, img.w - 1 - x);
  return out;
}

Image augment(const Image& img, const AugmentConfig& cfg, Rng& rng) {
  cfg.validate();
  auto draw = [&](const std::array<double, 2>& r) {
    return r[0] == r[1] ? r[0] : std::uniform_real_distribution<double>(r[0], r[1])(rng);
  };
  const double area = draw(cfg.crop_scale);
  const int ch_ = std::clamp(static_cast<int>(std::lround(img.h * std::sqrt(area))), 1, img.h);
  const int cw = std::clamp(static_cast<int>(std::lround(img.w * std::sqrt(area))), 1, img.w);
  const int y0 = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(img.h - ch_ + 1)));
  const int x0 = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(img.w - cw + 1)));
  const bool flip = cfg.flip_prob > 0 && uniform01(rng) < cfg.flip_prob;

  Image out{img.c, img.h, img.w, std::vector<float>(img.pixels.size())};
  for (int ch = 0; ch < img.c; ++ch) {
    const double gain = draw(cfg.jitter);
    for (int y = 0; y < img.h; ++y) {
      const int sy = y0 + std::min(ch_ - 1, y * ch_ / img.h);
      for (int x = 0; x < img.w; ++x) {
        const int dx = flip ? img.w - 1 - x : x;
        const int sx = x0 + std::min(cw - 1, dx * cw / img.w);
        out.at(ch, y, x) = static_cast<float>(std::clamp(img.at(ch, sy, sx) * gain, 0.0, 1.0));
      }
    }
  }
  return out;
}

template <class T>
Tensor<T> stack_images(std::span<const Image* const> images) {
  if (images.empty()) throw DimensionError("stack_images: no samples");
  const Image& first = *images.front();
  const std::size_t per = first.pixels.size();
  std::vector<T> data;
  data.reserve(per * images.size());
  for (const Image* img : images) {
    if (img->c != first.c || img->h != first.h || img->w != first.w) {
      throw DimensionError("stack_images: mixed sample shapes " + std::to_string(first.c) + "x" +
                           std::to_string(first.h) + "x" + std::to_string(first.w) + " and " +
                           std::to_string(img->c) + "x" + std::to_string(img->h) + "x" + std::to_string(img->w));
    }
    for (float v : img->pixels) data.push_back(static_cast<T>(v));
  }
  return Tensor<T>({images.size(), static_cast<std::size_t>(first.c), static_cast<std::size_t>(first.h),
                    static_cast<std::size_t>(first.w)},
                   std::move(data));
}

template <class T>
Tensor<T> stack_images(const Dataset& ds, std::span<const SampleRef> refs, const AugmentConfig* aug, Rng* rng) {
  const bool on = aug && aug->enabled;
  if (on && !rng) throw ContractError("stack_images: augmentation needs an rng");
  std::vector<Image> augmented;
  std::vector<const Image*> ptrs;
  augmented.reserve(on ? refs.size() : 0);
  for (const auto& r : refs) {
    const Image& src = ds.classes.at(static_cast<std::size_t>(r.cls)).samples.at(static_cast<std::size_t>(r.index));
    if (on) {
      augmented.push_back(augment(src, *aug, *rng));
      ptrs.push_back(&augmented.back());
    } else {
      ptrs.push_back(&src);
    }
  }
  return stack_images<T>(std::span<const Image* const>(ptrs));
}

template Tensor<float> stack_images<float>(std::span<const Image* const>);
template Tensor<double> stack_images<double>(std::span<const Image* const>);
template Tensor<float> stack_images<float>(const Dataset&, std::span<const SampleRef>, const AugmentConfig*, Rng*);
template Tensor<double> stack_images<double>(const Dataset&, std::span<const SampleRef>, const AugmentConfig*, Rng*);

}  // namespace fsb
