#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>

#include "fsb/data.hpp"
#include "fsb/errors.hpp"
#include "json.hpp"

namespace fsb {

namespace {

std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
  return order;
}

}  // namespace

SplitSpec split_classes(const Dataset& ds, SplitCounts counts, std::uint64_t seed) {
  if (counts.base < 0 || counts.val < 0 || counts.novel < 0) throw ConfigError("split: counts must be non-negative");
  const auto total = static_cast<std::size_t>(counts.base + counts.val + counts.novel);
  if (total > ds.classes.size()) {
    throw ConfigError("split: counts " + std::to_string(counts.base) + "+" + std::to_string(counts.val) + "+" +
                      std::to_string(counts.novel) + " exceed the " + std::to_string(ds.classes.size()) +
                      " classes of \"" + ds.name + "\"");
  }
  const auto order = permutation(ds.classes.size(), seed);
  SplitSpec s;
  s.base_dataset = s.novel_dataset = ds.name;
  s.seed = seed;
  std::size_t i = 0;
  for (int n = 0; n < counts.base; ++n) s.base.push_back(ds.classes[order[i++]].name);
  for (int n = 0; n < counts.val; ++n) s.val.push_back(ds.classes[order[i++]].name);
  for (int n = 0; n < counts.novel; ++n) s.novel.push_back(ds.classes[order[i++]].name);
  return s;
}

SplitSpec split_cross_domain(const Dataset& base, const Dataset& other, int val, int novel, std::uint64_t seed) {
  if (base.name == other.name) {
    throw ConfigError("split: cross-domain datasets must differ, both are named \"" + base.name + "\"");
  }
  auto s = split_classes(other, {0, val, novel}, seed);
  s.base_dataset = base.name;
  for (const auto& c : base.classes) s.base.push_back(c.name);
  return s;
}

std::string split_to_json(const SplitSpec& split) {
  nlohmann::ordered_json j;
  j["base"] = split.base;
  j["val"] = split.val;
  j["novel"] = split.novel;
  j["base_dataset"] = split.base_dataset;
  j["novel_dataset"] = split.novel_dataset;
  j["seed"] = split.seed;
  return j.dump(2) + "\n";
}

SplitSpec split_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    for (const auto& [key, _] : j.items()) {
      if (key != "base" && key != "val" && key != "novel" && key != "base_dataset" && key != "novel_dataset" &&
          key != "seed") {
        throw ConfigError("split: unknown key \"" + key + "\"");
      }
    }
    SplitSpec s;
    s.base = j.at("base").get<std::vector<std::string>>();
    s.val = j.at("val").get<std::vector<std::string>>();
    s.novel = j.at("novel").get<std::vector<std::string>>();
    s.base_dataset = j.at("base_dataset").get<std::string>();
    s.novel_dataset = j.at("novel_dataset").get<std::string>();
    s.seed = j.at("seed").get<std::uint64_t>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("split: ") + e.what());
  }
}

void save_split(const std::filesystem::path& path, const SplitSpec& split) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write " + path.string());
  out << split_to_json(split);
}

SplitSpec load_split(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return split_from_json(ss.str());
}

std::string to_string(Role role) {
  switch (role) {
    case Role::base: return "base";
    case Role::val: return "val";
    case Role::novel: return "novel";
  }
  return "?";
}

Role role_from_string(const std::string& s) {
  if (s == "base") return Role::base;
  if (s == "val") return Role::val;
  if (s == "novel") return Role::novel;
  throw ConfigError("split role must be base, val or novel, got \"" + s + "\"");
}

std::vector<int> role_classes(const Dataset& ds, const SplitSpec& split, Role role) {
  const auto& names = role == Role::base ? split.base : role == Role::val ? split.val : split.novel;
  const auto& owner = role == Role::base ? split.base_dataset : split.novel_dataset;
  if (!owner.empty() && owner != ds.name) {
    throw ConfigError("split assigns " + to_string(role) + " classes to dataset \"" + owner + "\", not \"" +
                      ds.name + "\"");
  }
  std::vector<int> out;
  out.reserve(names.size());
  for (const auto& n : names) out.push_back(ds.class_index(n));
  return out;
}

}  // namespace fsb
