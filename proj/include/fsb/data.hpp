#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "fsb/rng.hpp"
#include "fsb/tensor.hpp"

namespace fsb {

/// One sample, channel-major (C x H x W), values in [0, 1].
struct Image {
  int c = 0, h = 0, w = 0;
  std::vector<float> pixels;

  float& at(int ch, int y, int x) { return pixels[(static_cast<std::size_t>(ch) * h + y) * w + x]; }
  float at(int ch, int y, int x) const { return pixels[(static_cast<std::size_t>(ch) * h + y) * w + x]; }
  bool operator==(const Image&) const = default;
};

struct ClassRecord {
  std::string name;
  std::vector<Image> samples;
};

struct Dataset {
  std::string name;
  std::vector<ClassRecord> classes;

  /// Index of the class with this name; throws ConfigError when absent.
  int class_index(const std::string& name) const;
  std::size_t sample_count() const;
};

// --- file formats ------------------------------------------------------------

/// Raw tensor file: "RTF1", u32 rank, u32 extents, float32 payload, all little-endian.
struct RtfTensor {
  Shape shape;
  std::vector<float> values;
};

void write_rtf(std::ostream& os, const Shape& shape, std::span<const float> values);
RtfTensor read_rtf(std::istream& is);

/// Binary PGM (P5) or PPM (P6); 8- or 16-bit maxval.
Image read_pnm(const std::filesystem::path& path);
/// Writes P5 for one channel and P6 for three, maxval 255.
void write_pnm(const std::filesystem::path& path, const Image& img);

Image read_rtf_image(const std::filesystem::path& path);
void write_rtf_image(const std::filesystem::path& path, const Image& img);

/// Reads a PGM/PPM/RTF file, chosen by its magic bytes.
Image read_image(const std::filesystem::path& path);

enum class ImageFormat { rtf, pnm };

/// root/<class>/<files>; classes and files in lexicographic order.
Dataset load_dataset(const std::filesystem::path& root);
void save_dataset(const std::filesystem::path& root, const Dataset& ds, ImageFormat format);

// --- splits ------------------------------------------------------------------

struct SplitCounts {
  int base = 0, val = 0, novel = 0;
};

struct SplitSpec {
  std::vector<std::string> base, val, novel;
  std::string base_dataset, novel_dataset;
  std::uint64_t seed = 0;

  bool cross_domain() const { return base_dataset != novel_dataset; }
  bool operator==(const SplitSpec&) const = default;
};

/// Seeded uniform permutation of the classes, then partition.
SplitSpec split_classes(const Dataset& ds, SplitCounts counts, std::uint64_t seed);
/// Every class of `base` becomes a base class; `other` is partitioned into val/novel.
SplitSpec split_cross_domain(const Dataset& base, const Dataset& other, int val, int novel, std::uint64_t seed);

std::string split_to_json(const SplitSpec& split);
SplitSpec split_from_json(const std::string& text);
void save_split(const std::filesystem::path& path, const SplitSpec& split);
SplitSpec load_split(const std::filesystem::path& path);

enum class Role { base, val, novel };
std::string to_string(Role role);
Role role_from_string(const std::string& s);

/// Class indices of `ds` that the split assigns to `role`.
std::vector<int> role_classes(const Dataset& ds, const SplitSpec& split, Role role);

// --- episodes ----------------------------------------------------------------

struct SampleRef {
  int cls = 0;
  int index = 0;
  bool operator==(const SampleRef&) const = default;
};

struct Episode {
  int n_way = 0, k_shot = 0, n_query = 0;
  std::vector<int> classes;  // dataset class index per local label
  std::vector<SampleRef> support, query;
  std::vector<int> support_y, query_y;
};

/// N distinct classes from `pool`, then k + q distinct samples per class, the
/// first k going to the support set. Local labels follow the class draw order.
Episode sample_episode(const Dataset& ds, std::span<const int> pool, int n_way, int k_shot, int n_query, Rng& rng);

struct AugmentConfig {
  bool enabled = true;
  std::array<double, 2> crop_scale{0.8, 1.0};
  double flip_prob = 0.5;
  std::array<double, 2> jitter{0.8, 1.2};

  void validate() const;
};

/// Random area crop resized back by nearest neighbour, horizontal flip, and
/// per-channel multiplicative jitter clamped to [0, 1].
Image augment(const Image& img, const AugmentConfig& cfg, Rng& rng);
Image hflip(const Image& img);

/// Stacks samples into [B x C x H x W]; augments each one when `aug` is enabled.
template <class T>
Tensor<T> stack_images(const Dataset& ds, std::span<const SampleRef> refs, const AugmentConfig* aug = nullptr,
                       Rng* rng = nullptr);
template <class T>
Tensor<T> stack_images(std::span<const Image* const> images);

// --- synthetic data ----------------------------------------------------------

struct SynthConfig {
  std::string name = "synth";
  int n_classes = 20;
  int samples_per_class = 50;
  int channels = 3;
  int h = 32, w = 32;
  double sigma = 0.05;
  int max_shift = 2;
  /// Side of the random grid upsampled into each smooth prototype.
  int grid = 4;
  std::uint64_t seed = 0;
};

/// Per class a smooth random prototype; samples add a translation of at most
/// max_shift pixels and Gaussian pixel noise, clamped to [0, 1].
Dataset synth_generate(const SynthConfig& cfg);
/// The noise-free, unshifted prototype of each class, in class order.
std::vector<Image> synth_prototypes(const SynthConfig& cfg);

}  // namespace fsb
