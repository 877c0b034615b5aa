#include "fsb/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "fsb/errors.hpp"

namespace fsb {

using nlohmann::ordered_json;

namespace {

constexpr std::uint32_t kFormatVersion = 1;

MethodConfig method_from_json(const ordered_json& j) {
  MethodConfig m;
  m.method = method_from_string(j.at("name").get<std::string>());
  m.cosine_scale = j.at("cosine_scale").get<double>();
  m.tau = j.at("tau").get<double>();
  m.relation_hidden = j.at("relation_hidden").get<int>();
  m.maml.inner_lr = j.at("inner_lr").get<double>();
  m.maml.inner_steps_train = j.at("inner_steps_train").get<int>();
  m.maml.inner_steps_test = j.at("inner_steps_test").get<int>();
  m.maml.first_order = !j.at("second_order").get<bool>();
  m.maml_tasks = j.at("maml_tasks").get<int>();
  return m;
}

BackboneConfig backbone_from_json(const ordered_json& j) {
  BackboneConfig b;
  b.kind = backbone_kind_from_string(j.at("kind").get<std::string>());
  b.n_blocks = j.at("n_blocks").get<int>();
  b.in_channels = j.at("in_channels").get<int>();
  b.channels = j.at("channels").get<int>();
  b.input_h = j.at("input_h").get<int>();
  b.input_w = j.at("input_w").get<int>();
  b.pooled_blocks = j.at("pooled_blocks").get<int>();
  b.hidden = j.at("hidden").get<std::vector<int>>();
  return b;
}

void put_u32(std::ostream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b, 4);
}

Tensor<Real> read_tensor(std::istream& is, const Shape& expect, const std::string& what) {
  auto t = read_rtf(is);
  if (t.shape != expect) {
    throw LoadError("checkpoint: " + what + " has shape " + shape_str(t.shape) + ", expected " + shape_str(expect));
  }
  return Tensor<Real>(t.shape, std::move(t.values));
}

}  // namespace

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ordered_json method_to_json(const MethodConfig& m) {
  ordered_json j;
  j["name"] = to_string(m.method);
  j["cosine_scale"] = m.cosine_scale;
  j["tau"] = m.tau;
  j["relation_hidden"] = m.relation_hidden;
  j["inner_lr"] = m.maml.inner_lr;
  j["inner_steps_train"] = m.maml.inner_steps_train;
  j["inner_steps_test"] = m.maml.inner_steps_test;
  j["second_order"] = !m.maml.first_order;
  j["maml_tasks"] = m.maml_tasks;
  return j;
}

ordered_json backbone_to_json(const BackboneConfig& b) {
  ordered_json j;
  j["kind"] = to_string(b.kind);
  j["n_blocks"] = b.n_blocks;
  j["in_channels"] = b.in_channels;
  j["channels"] = b.channels;
  j["input_h"] = b.input_h;
  j["input_w"] = b.input_w;
  j["pooled_blocks"] = b.pooled_blocks;
  j["hidden"] = b.hidden;
  return j;
}

std::string checkpoint_bytes(const Checkpoint& ck) {
  const auto params = ck.model.parameters();
  ordered_json h;
  h["format_version"] = kFormatVersion;
  h["digest"] = ck.digest;
  h["config"] = ck.config;
  ordered_json model;
  model["method"] = method_to_json(ck.model.method);
  model["backbone"] = backbone_to_json(ck.model.backbone_cfg());
  model["head_classes"] = ck.model.head_classes;
  model["head_tensors"] = ck.model.head.size();
  h["model"] = model;
  ordered_json metrics;
  metrics["selected_index"] = ck.metrics.selected_index;
  metrics["best_val"] = ck.metrics.best_val;
  metrics["epoch_loss"] = ck.metrics.epoch_loss;
  auto curve = ordered_json::array();
  for (const auto& p : ck.metrics.val_curve) curve.push_back({p.episode, p.accuracy});
  metrics["val_curve"] = curve;
  h["metrics"] = metrics;
  ordered_json adam;
  adam["lr"] = ck.adam.lr;
  adam["beta1"] = ck.adam.beta1;
  adam["beta2"] = ck.adam.beta2;
  adam["eps"] = ck.adam.eps;
  adam["step"] = ck.adam.step;
  adam["has_moments"] = !ck.adam.m.empty();
  h["adam"] = adam;
  const auto header = h.dump();

  std::ostringstream os;
  os.write("FSCK", 4);
  put_u32(os, static_cast<std::uint32_t>(header.size()));
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& p : params) write_rtf(os, p.shape(), p.data());
  for (const auto& s : ck.model.backbone.stats) {
    write_rtf(os, {s.mean.size()}, s.mean);
    write_rtf(os, {s.var.size()}, s.var);
  }
  if (!ck.adam.m.empty()) {
    if (ck.adam.m.size() != params.size()) throw ContractError("checkpoint: Adam state does not match parameters");
    for (std::size_t i = 0; i < params.size(); ++i) write_rtf(os, params[i].shape(), ck.adam.m[i]);
    for (std::size_t i = 0; i < params.size(); ++i) write_rtf(os, params[i].shape(), ck.adam.v[i]);
  }
  return os.str();
}

Checkpoint checkpoint_from_bytes(const std::string& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), "FSCK", 4) != 0) throw LoadError("checkpoint: bad magic");
  const auto* b = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint32_t len = b[4] | (b[5] << 8) | (b[6] << 16) | (static_cast<std::uint32_t>(b[7]) << 24);
  if (bytes.size() < 8 + static_cast<std::size_t>(len)) throw LoadError("checkpoint: truncated header");
  Checkpoint ck;
  try {
    const auto h = ordered_json::parse(bytes.substr(8, len));
    if (h.at("format_version").get<std::uint32_t>() != kFormatVersion) {
      throw LoadError("checkpoint: unsupported format version");
    }
    ck.digest = h.at("digest").get<std::string>();
    ck.config = h.at("config");
    const auto& model = h.at("model");
    ck.model.method = method_from_json(model.at("method"));
    const auto bcfg = backbone_from_json(model.at("backbone"));
    ck.model.head_classes = model.at("head_classes").get<std::size_t>();
    const auto n_head = model.at("head_tensors").get<std::size_t>();
    const auto& metrics = h.at("metrics");
    ck.metrics.selected_index = metrics.at("selected_index").get<int>();
    ck.metrics.best_val = metrics.at("best_val").get<double>();
    ck.metrics.epoch_loss = metrics.at("epoch_loss").get<std::vector<double>>();
    for (const auto& p : metrics.at("val_curve")) ck.metrics.val_curve.push_back({p.at(0).get<int>(), p.at(1).get<double>()});
    const auto& adam = h.at("adam");
    ck.adam.lr = adam.at("lr").get<double>();
    ck.adam.beta1 = adam.at("beta1").get<double>();
    ck.adam.beta2 = adam.at("beta2").get<double>();
    ck.adam.eps = adam.at("eps").get<double>();
    ck.adam.step = adam.at("step").get<std::int64_t>();
    const bool moments = adam.at("has_moments").get<bool>();

    // Shapes come from a freshly initialised model of the same architecture.
    const auto ref = Model::init(ck.model.method, bcfg, ck.model.head_classes, 0);
    if (ref.head.size() != n_head) throw LoadError("checkpoint: head tensor count does not match the method");
    std::istringstream is(bytes.substr(8 + len));
    ck.model.backbone.cfg = bcfg;
    for (std::size_t i = 0; i < ref.backbone.tensors.size(); ++i) {
      auto t = read_tensor(is, ref.backbone.tensors[i].shape(), "backbone tensor " + std::to_string(i));
      t.set_requires_grad(true);
      ck.model.backbone.tensors.push_back(std::move(t));
    }
    for (std::size_t i = 0; i < ref.head.size(); ++i) {
      auto t = read_tensor(is, ref.head[i].shape(), "head tensor " + std::to_string(i));
      t.set_requires_grad(true);
      ck.model.head.push_back(std::move(t));
    }
    for (const auto& s : ref.backbone.stats) {
      RunningStats<Real> rs;
      const auto mean = read_tensor(is, {s.mean.size()}, "running mean");
      const auto var = read_tensor(is, {s.var.size()}, "running variance");
      rs.mean.assign(mean.data().begin(), mean.data().end());
      rs.var.assign(var.data().begin(), var.data().end());
      ck.model.backbone.stats.push_back(std::move(rs));
    }
    if (moments) {
      const auto params = ck.model.parameters();
      for (auto* buf : {&ck.adam.m, &ck.adam.v}) {
        for (const auto& p : params) {
          auto t = read_tensor(is, p.shape(), "Adam moment");
          buf->emplace_back(t.data().begin(), t.data().end());
        }
      }
    }
    if (is.peek() != std::char_traits<char>::eof()) throw LoadError("checkpoint: trailing bytes after the tensors");
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("checkpoint header: ") + e.what());
  } catch (const ConfigError& e) {
    throw LoadError(std::string("checkpoint header: ") + e.what());
  }
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  const auto bytes = checkpoint_bytes(ck);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw LoadError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return checkpoint_from_bytes(ss.str());
  } catch (const LoadError& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
}

}  // namespace fsb
