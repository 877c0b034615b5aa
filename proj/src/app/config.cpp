#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "fsb/config.hpp"
#include "fsb/errors.hpp"

namespace fsb {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// Object reader that remembers which keys were consumed, so the leftovers can
// be reported as unknown.
class Section {
 public:
  Section(const json* j, std::string path) : j_(j), path_(std::move(path)) {
    if (j_ && !j_->is_null() && !j_->is_object()) throw ConfigError(where() + ": expected an object");
    if (j_ && j_->is_null()) j_ = nullptr;
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* raw(const std::string& key) {
    seen_.insert(key);
    if (!j_) return nullptr;
    auto it = j_->find(key);
    if (it == j_->end() || it->is_null()) return nullptr;
    return &*it;
  }

  bool has(const std::string& key) {
    const bool h = raw(key) != nullptr;
    seen_.erase(key);
    return h;
  }

  Section sub(const std::string& key) { return Section(raw(key), field(key)); }

  int get_int(const std::string& key, int def) {
    const auto* v = raw(key);
    if (!v) return def;
    if (!v->is_number_integer()) throw ConfigError(field(key) + ": expected an integer");
    return v->get<int>();
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t def) {
    const auto* v = raw(key);
    if (!v) return def;
    if (!v->is_number_integer() || (v->is_number_integer() && !v->is_number_unsigned() && v->get<std::int64_t>() < 0)) {
      throw ConfigError(field(key) + ": expected a non-negative integer");
    }
    return v->get<std::uint64_t>();
  }

  double get_double(const std::string& key, double def) {
    const auto* v = raw(key);
    if (!v) return def;
    if (!v->is_number()) throw ConfigError(field(key) + ": expected a number");
    return v->get<double>();
  }

  bool get_bool(const std::string& key, bool def) {
    const auto* v = raw(key);
    if (!v) return def;
    if (!v->is_boolean()) throw ConfigError(field(key) + ": expected true or false");
    return v->get<bool>();
  }

  std::string get_string(const std::string& key, const std::string& def) {
    const auto* v = raw(key);
    if (!v) return def;
    if (!v->is_string()) throw ConfigError(field(key) + ": expected a string");
    return v->get<std::string>();
  }

  std::vector<int> get_ints(const std::string& key, std::vector<int> def) {
    const auto* v = raw(key);
    if (!v) return def;
    if (!v->is_array()) throw ConfigError(field(key) + ": expected an array of integers");
    std::vector<int> out;
    for (const auto& e : *v) {
      if (!e.is_number_integer()) throw ConfigError(field(key) + ": expected an array of integers");
      out.push_back(e.get<int>());
    }
    return out;
  }

  std::array<double, 2> get_pair(const std::string& key, std::array<double, 2> def) {
    const auto* v = raw(key);
    if (!v) return def;
    if (!v->is_array() || v->size() != 2 || !(*v)[0].is_number() || !(*v)[1].is_number()) {
      throw ConfigError(field(key) + ": expected [low, high]");
    }
    return {(*v)[0].get<double>(), (*v)[1].get<double>()};
  }

  // Converts enum-parsing errors into field-level messages.
  template <class F>
  auto parse_enum(const std::string& key, const std::string& def, F&& f) {
    const auto s = get_string(key, def);
    try {
      return f(s);
    } catch (const std::exception& e) {
      const std::string msg = e.what();
      throw ConfigError(msg.starts_with(field(key)) ? msg : field(key) + ": " + msg);
    }
  }

  void finish() const {
    if (!j_) return;
    for (const auto& [key, _] : j_->items()) {
      if (!seen_.count(key)) throw ConfigError(field(key) + ": unknown key");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }

  const json* j_;
  std::string path_;
  std::set<std::string> seen_;
};

DatasetSource parse_source(Section& s) {
  DatasetSource d;
  d.path = s.get_string("path", "");
  const bool has_synth = s.has("synth");
  if (!d.path.empty() && has_synth) throw ConfigError(s.field("path") + ": give either path or synth, not both");
  auto sy = s.sub("synth");
  auto& c = d.synth;
  c.name = sy.get_string("name", c.name);
  c.n_classes = sy.get_int("n_classes", c.n_classes);
  c.samples_per_class = sy.get_int("samples_per_class", c.samples_per_class);
  c.channels = sy.get_int("channels", c.channels);
  c.h = sy.get_int("h", c.h);
  c.w = sy.get_int("w", c.w);
  c.sigma = sy.get_double("sigma", c.sigma);
  c.max_shift = sy.get_int("max_shift", c.max_shift);
  c.grid = sy.get_int("grid", c.grid);
  c.seed = sy.get_u64("seed", c.seed);
  sy.finish();
  if (d.synthetic()) {
    if (c.n_classes < 1 || c.samples_per_class < 1) {
      throw ConfigError(sy.field("n_classes") + " and samples_per_class: must be positive");
    }
    if (c.channels != 1 && c.channels != 3) throw ConfigError(sy.field("channels") + ": must be 1 or 3");
    if (c.h < 1 || c.w < 1 || c.grid < 1 || c.max_shift < 0 || c.sigma < 0) {
      throw ConfigError(s.field("synth") + ": sizes must be positive, max_shift and sigma non-negative");
    }
  }
  return d;
}

ordered_json source_to_json(const DatasetSource& d) {
  ordered_json j;
  if (!d.synthetic()) {
    j["path"] = d.path;
    j["synth"] = nullptr;
    return j;
  }
  j["path"] = nullptr;
  const auto& c = d.synth;
  ordered_json s;
  s["name"] = c.name;
  s["n_classes"] = c.n_classes;
  s["samples_per_class"] = c.samples_per_class;
  s["channels"] = c.channels;
  s["h"] = c.h;
  s["w"] = c.w;
  s["sigma"] = c.sigma;
  s["max_shift"] = c.max_shift;
  s["grid"] = c.grid;
  s["seed"] = c.seed;
  j["synth"] = s;
  return j;
}

}  // namespace

RunConfig run_config_from_json(const json& j) {
  RunConfig cfg;
  Section top(&j, "");
  cfg.seed = top.get_u64("seed", 0);
  cfg.output_dir = top.get_string("output_dir", cfg.output_dir);

  {
    auto ds = top.sub("dataset");
    const bool cross = ds.has("novel");
    auto nv = ds.sub("novel");
    if (cross) {
      cfg.novel_dataset = parse_source(nv);
      nv.finish();
    }
    // the base source is given by path/synth next to "novel"
    cfg.dataset = parse_source(ds);
    ds.finish();
  }
  if (cfg.novel_dataset && cfg.dataset.synthetic() && cfg.novel_dataset->synthetic() &&
      cfg.dataset.synth.name == cfg.novel_dataset->synth.name) {
    throw ConfigError("dataset.novel.synth.name: must differ from the base dataset name \"" + cfg.dataset.synth.name +
                      "\"");
  }

  {
    auto s = top.sub("split");
    cfg.split.counts.base = s.get_int("base", cfg.novel_dataset ? 0 : cfg.split.counts.base);
    cfg.split.counts.val = s.get_int("val", cfg.split.counts.val);
    cfg.split.counts.novel = s.get_int("novel", cfg.split.counts.novel);
    cfg.split.seed = s.get_u64("seed", cfg.seed);
    cfg.split.file = s.get_string("file", "");
    s.finish();
    const auto& c = cfg.split.counts;
    if (c.base < 0 || c.val < 0 || c.novel < 0) throw ConfigError("split: class counts must be non-negative");
    if (cfg.novel_dataset && c.base != 0) {
      throw ConfigError("split.base: must be 0 across domains; every class of the base dataset is a base class");
    }
  }

  {
    auto b = top.sub("backbone");
    auto& bb = cfg.backbone;
    bb.kind = b.parse_enum("kind", to_string(bb.kind), backbone_kind_from_string);
    bb.n_blocks = b.get_int("n_blocks", bb.n_blocks);
    bb.in_channels = b.get_int("in_channels", cfg.dataset.synthetic() ? cfg.dataset.synth.channels : bb.in_channels);
    bb.channels = b.get_int("channels", bb.channels);
    const std::vector<int> hw_def = cfg.dataset.synthetic()
                                        ? std::vector<int>{cfg.dataset.synth.h, cfg.dataset.synth.w}
                                        : std::vector<int>{bb.input_h, bb.input_w};
    const auto hw = b.get_ints("input_hw", hw_def);
    if (hw.size() != 2) throw ConfigError("backbone.input_hw: expected [h, w]");
    bb.input_h = hw[0];
    bb.input_w = hw[1];
    bb.pooled_blocks = b.get_int("pooled_blocks", std::min(4, bb.n_blocks));
    bb.hidden = b.get_ints("hidden", bb.hidden);
    b.finish();
    try {
      bb.validate();
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("backbone: ") + e.what());
    }
  }

  {
    auto m = top.sub("method");
    auto& mc = cfg.method;
    mc.method = m.parse_enum("name", to_string(mc.method), method_from_string);
    mc.cosine_scale = m.get_double("cosine_scale", mc.cosine_scale);
    mc.tau = m.get_double("tau", mc.tau);
    mc.relation_hidden = m.get_int("relation_hidden", mc.relation_hidden);
    mc.maml.inner_lr = m.get_double("inner_lr", mc.maml.inner_lr);
    mc.maml.inner_steps_train = m.get_int("inner_steps_train", mc.maml.inner_steps_train);
    mc.maml.inner_steps_test = m.get_int("inner_steps_test", mc.maml.inner_steps_test);
    mc.maml.first_order = !m.get_bool("second_order", !mc.maml.first_order);
    mc.maml_tasks = m.get_int("maml_tasks", mc.maml_tasks);
    m.finish();
    mc.validate(cfg.backbone);
  }

  {
    auto t = top.sub("train");
    auto& tc = cfg.train;
    tc.epochs = t.get_int("epochs", tc.epochs);
    tc.episodes = t.get_int("episodes", tc.episodes);
    tc.batch_size = t.get_int("batch_size", tc.batch_size);
    tc.n_way = t.get_int("n_way", tc.n_way);
    tc.k_shot = t.get_int("k_shot", tc.k_shot);
    tc.n_query = t.get_int("n_query", tc.n_query);
    tc.lr = t.get_double("lr", tc.lr);
    tc.eval_every = t.get_int("eval_every", tc.eval_every);
    tc.val_episodes = t.get_int("val_episodes", tc.val_episodes);
    tc.val_n_way = t.get_int("val_n_way", tc.val_n_way);
    tc.val_n_query = t.get_int("val_n_query", tc.val_n_query);
    cfg.full_budget = t.get_bool("full_budget", false);
    auto a = t.sub("augment");
    tc.augment.enabled = a.get_bool("enabled", tc.augment.enabled);
    tc.augment.crop_scale = a.get_pair("crop_scale", tc.augment.crop_scale);
    tc.augment.flip_prob = a.get_double("flip_prob", tc.augment.flip_prob);
    tc.augment.jitter = a.get_pair("jitter", tc.augment.jitter);
    a.finish();
    t.finish();
    if (cfg.full_budget) {
      tc.epochs = kFullEpochs;
      tc.episodes = tc.k_shot == 1 ? kFullEpisodes1Shot : kFullEpisodes5Shot;
    }
    tc.seed = cfg.seed;
    tc.validate(is_meta_method(cfg.method.method));
  }

  {
    auto e = top.sub("eval");
    auto& ec = cfg.eval;
    ec.role = e.parse_enum("role", to_string(ec.role), role_from_string);
    ec.n_way = e.get_int("n_way", ec.n_way);
    ec.k_shot = e.get_int("k_shot", ec.k_shot);
    ec.n_query = e.get_int("n_query", ec.n_query);
    ec.episodes = e.get_int("episodes", ec.episodes);
    ec.scheme = e.parse_enum("scheme", to_string(ec.scheme), adapt_scheme_from_string);
    ec.bn_mode = e.parse_enum("bn_mode", bn_eval_name(ec.bn_mode), bn_eval_from_string);
    ec.adapt_steps = e.get_int("adapt_steps", ec.adapt_steps);
    ec.seed = e.get_u64("seed", cfg.seed);
    auto f = e.sub("finetune");
    ec.finetune.iterations = f.get_int("iterations", ec.finetune.iterations);
    ec.finetune.batch_size = f.get_int("batch_size", ec.finetune.batch_size);
    ec.finetune.lr = f.get_double("lr", ec.finetune.lr);
    ec.finetune.augment = f.get_bool("augment", ec.finetune.augment);
    f.finish();
    e.finish();
    ec.validate();
    check_scheme(cfg.method.method, ec.scheme, ec.k_shot);
  }
  top.finish();
  return cfg;
}

ordered_json run_config_to_json(const RunConfig& cfg) {
  ordered_json j;
  j["seed"] = cfg.seed;
  j["output_dir"] = cfg.output_dir;

  auto ds = source_to_json(cfg.dataset);
  ds["novel"] = cfg.novel_dataset ? source_to_json(*cfg.novel_dataset) : ordered_json(nullptr);
  j["dataset"] = ds;

  ordered_json sp;
  sp["base"] = cfg.split.counts.base;
  sp["val"] = cfg.split.counts.val;
  sp["novel"] = cfg.split.counts.novel;
  sp["seed"] = cfg.split.seed;
  sp["file"] = cfg.split.file.empty() ? ordered_json(nullptr) : ordered_json(cfg.split.file);
  j["split"] = sp;

  const auto& bb = cfg.backbone;
  ordered_json b;
  b["kind"] = to_string(bb.kind);
  b["n_blocks"] = bb.n_blocks;
  b["in_channels"] = bb.in_channels;
  b["channels"] = bb.channels;
  b["input_hw"] = {bb.input_h, bb.input_w};
  b["pooled_blocks"] = bb.pooled_blocks;
  b["hidden"] = bb.hidden;
  j["backbone"] = b;

  j["method"] = method_to_json(cfg.method);

  const auto& tc = cfg.train;
  ordered_json t;
  t["epochs"] = tc.epochs;
  t["episodes"] = tc.episodes;
  t["batch_size"] = tc.batch_size;
  t["n_way"] = tc.n_way;
  t["k_shot"] = tc.k_shot;
  t["n_query"] = tc.n_query;
  t["lr"] = tc.lr;
  t["eval_every"] = tc.eval_every;
  t["val_episodes"] = tc.val_episodes;
  t["val_n_way"] = tc.val_n_way;
  t["val_n_query"] = tc.val_n_query;
  t["full_budget"] = cfg.full_budget;
  ordered_json a;
  a["enabled"] = tc.augment.enabled;
  a["crop_scale"] = tc.augment.crop_scale;
  a["flip_prob"] = tc.augment.flip_prob;
  a["jitter"] = tc.augment.jitter;
  t["augment"] = a;
  j["train"] = t;

  const auto& ec = cfg.eval;
  ordered_json e;
  e["role"] = to_string(ec.role);
  e["n_way"] = ec.n_way;
  e["k_shot"] = ec.k_shot;
  e["n_query"] = ec.n_query;
  e["episodes"] = ec.episodes;
  e["scheme"] = to_string(ec.scheme);
  e["bn_mode"] = bn_eval_name(ec.bn_mode);
  e["adapt_steps"] = ec.adapt_steps;
  e["seed"] = ec.seed;
  ordered_json f;
  f["iterations"] = ec.finetune.iterations;
  f["batch_size"] = ec.finetune.batch_size;
  f["lr"] = ec.finetune.lr;
  f["augment"] = ec.finetune.augment;
  e["finetune"] = f;
  j["eval"] = e;
  return j;
}

std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("FSB_SEED");
  if (!s || !*s) return std::nullopt;
  const std::string text(s);
  if (text.find_first_not_of("0123456789") != std::string::npos) {
    throw ConfigError("FSB_SEED: expected a non-negative integer, got \"" + text + "\"");
  }
  try {
    return std::stoull(text);
  } catch (const std::exception&) {
    throw ConfigError("FSB_SEED: out of range");
  }
}

json read_config_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError(path.string() + ": expected a JSON object");
  return j;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  auto j = read_config_json(path);
  if (auto s = env_seed()) j["seed"] = *s;
  return run_config_from_json(j);
}

std::string config_digest(const RunConfig& cfg) {
  auto j = run_config_to_json(cfg);
  j.erase("eval");
  j.erase("output_dir");
  return fnv1a_hex(j.dump());
}

}  // namespace fsb
