#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "fsb/adam.hpp"
#include "fsb/model.hpp"
#include "fsb/train.hpp"
#include "json.hpp"

namespace fsb {

/// 64-bit FNV-1a as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view bytes);

struct Checkpoint {
  /// Resolved run configuration the model was trained from.
  nlohmann::ordered_json config;
  std::string digest;
  TrainMetrics metrics;
  Model model;
  AdamState<Real> adam;
};

// File layout: "FSCK", u32 little-endian header length, JSON header, then RTF
// tensors: backbone, batch-norm running mean/var per block, head, Adam m, Adam v.

std::string checkpoint_bytes(const Checkpoint& ck);
Checkpoint checkpoint_from_bytes(const std::string& bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::ordered_json method_to_json(const MethodConfig& m);
nlohmann::ordered_json backbone_to_json(const BackboneConfig& b);

}  // namespace fsb
