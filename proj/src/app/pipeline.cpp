#include <cmath>
#include <fstream>
#include <sstream>

#include "fsb/config.hpp"
#include "fsb/errors.hpp"

namespace fsb {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

Dataset load_source(const DatasetSource& s) { return s.synthetic() ? synth_generate(s.synth) : load_dataset(s.path); }

void check_images(const Dataset& ds, const BackboneConfig& b) {
  for (const auto& c : ds.classes) {
    for (const auto& img : c.samples) {
      if (img.c != b.in_channels || img.h != b.input_h || img.w != b.input_w) {
        throw ConfigError("backbone.input_hw / in_channels: dataset \"" + ds.name + "\" class \"" + c.name + "\" has " +
                          std::to_string(img.c) + "x" + std::to_string(img.h) + "x" + std::to_string(img.w) +
                          " images, backbone expects " + std::to_string(b.in_channels) + "x" +
                          std::to_string(b.input_h) + "x" + std::to_string(b.input_w));
      }
    }
  }
}

// Files written by one command; removed again unless commit() is reached.
class Outputs {
 public:
  explicit Outputs(const fs::path& dir) {
    if (!fs::exists(dir)) {
      fs::create_directories(dir);
      created_ = dir;
    }
  }
  ~Outputs() {
    if (done_) return;
    std::error_code ec;
    for (const auto& p : files_) fs::remove(p, ec);
    if (!created_.empty() && fs::is_empty(created_, ec)) fs::remove(created_, ec);
  }
  Outputs(const Outputs&) = delete;
  Outputs& operator=(const Outputs&) = delete;

  void write(const fs::path& p, const std::string& bytes) {
    files_.push_back(p);
    std::ofstream out(p, std::ios::binary);
    if (!out) throw LoadError("cannot write " + p.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.close();
    if (!out) throw LoadError("failed writing " + p.string());
  }
  void commit() { done_ = true; }

 private:
  std::vector<fs::path> files_;
  fs::path created_;
  bool done_ = false;
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

const Dataset& RunData::dataset_for(Role role) const { return role != Role::base && novel ? *novel : base; }

std::vector<int> RunData::classes(Role role) const { return role_classes(dataset_for(role), split, role); }

std::string RunData::scenario() const { return novel ? base.name + "->" + novel->name : base.name; }

RunData load_run_data(const RunConfig& cfg) {
  RunData d;
  d.base = load_source(cfg.dataset);
  check_images(d.base, cfg.backbone);
  if (cfg.novel_dataset) {
    d.novel = load_source(*cfg.novel_dataset);
    check_images(*d.novel, cfg.backbone);
  }
  if (!cfg.split.file.empty()) {
    d.split = load_split(cfg.split.file);
  } else if (d.novel) {
    d.split = split_cross_domain(d.base, *d.novel, cfg.split.counts.val, cfg.split.counts.novel, cfg.split.seed);
  } else {
    d.split = split_classes(d.base, cfg.split.counts, cfg.split.seed);
  }
  // resolves every name once so a stale split file fails here
  for (auto r : {Role::base, Role::val, Role::novel}) (void)d.classes(r);
  return d;
}

std::size_t head_classes_for(const RunConfig& cfg, const RunData& data) {
  switch (cfg.method.method) {
    case Method::baseline:
    case Method::baseline_pp: return data.split.base.size();
    case Method::maml: return static_cast<std::size_t>(cfg.train.n_way);
    default: return 0;
  }
}

TrainResult train_run(const RunConfig& cfg, const RunData& data) {
  auto model = Model::init(cfg.method, cfg.backbone, head_classes_for(cfg, data), cfg.seed);
  const auto base = data.classes(Role::base);
  if (!is_meta_method(cfg.method.method)) return train_batch(std::move(model), data.base, base, cfg.train);
  if (!data.novel) return meta_train(std::move(model), data.base, base, data.classes(Role::val), cfg.train);

  // Across domains the validation classes live in the other dataset; train on
  // a view holding both.
  Dataset merged;
  merged.name = data.base.name + "+" + data.novel->name;
  merged.classes = data.base.classes;
  std::vector<int> val;
  for (int c : data.classes(Role::val)) {
    val.push_back(static_cast<int>(merged.classes.size()));
    merged.classes.push_back(data.novel->classes[c]);
  }
  return meta_train(std::move(model), merged, base, val, cfg.train);
}

TrainOutputs cmd_train(const RunConfig& cfg) {
  const auto data = load_run_data(cfg);
  auto result = train_run(cfg, data);
  Checkpoint ck{run_config_to_json(cfg), config_digest(cfg), std::move(result.metrics), std::move(result.model),
                std::move(result.adam)};
  const fs::path dir(cfg.output_dir);
  TrainOutputs out{dir / "checkpoint.fsck", dir / "config.json", dir / "split.json"};
  Outputs files(dir);
  files.write(out.checkpoint, checkpoint_bytes(ck));
  files.write(out.config, ck.config.dump(2) + "\n");
  files.write(out.split, split_to_json(data.split));
  files.commit();
  return out;
}

void check_digest(const Checkpoint& ck, const RunConfig& cfg) {
  const auto d = config_digest(cfg);
  if (d != ck.digest) {
    throw ConfigError("config digest " + d + " does not match checkpoint digest " + ck.digest +
                      " (only the eval section may differ; use --force to evaluate anyway)");
  }
}

std::vector<EvalReport> evaluate_run(const Checkpoint& ck, const RunConfig& cfg, const RunData& data,
                                     const EvalRequest& req) {
  EvalConfig ec = cfg.eval;
  ec.workers = req.workers;
  const auto& ds = data.dataset_for(ec.role);
  const auto pool = data.classes(ec.role);
  auto scenario = data.scenario();
  if (ec.role != Role::novel) scenario += ":" + to_string(ec.role);
  if (req.ways.size() > 1) return nway_sweep(ck.model, ds, pool, req.ways, ec, scenario);
  if (!req.ways.empty()) ec.n_way = req.ways.front();
  return {evaluate(ModelScorer(ck.model, ec), ds, pool, ec, scenario)};
}

EvalOutputs cmd_evaluate(const Checkpoint& ck, const RunConfig& cfg, const EvalRequest& req, const fs::path& out_dir,
                         bool force) {
  if (!force) check_digest(ck, cfg);
  const auto data = load_run_data(cfg);
  const auto reports = evaluate_run(ck, cfg, data, req);
  EvalOutputs out{out_dir / "eval_report.csv", out_dir / "eval_report.json", out_dir / "eval_config.json"};
  std::string csv = report_csv_header() + "\n";
  for (const auto& r : reports) csv += report_csv_row(r) + "\n";
  Outputs files(out_dir);
  files.write(out.csv, csv);
  files.write(out.json, reports_to_json(reports));
  files.write(out.config, run_config_to_json(cfg).dump(2) + "\n");
  files.commit();
  return out;
}

ordered_json analyze_db(const Checkpoint& ck, const RunConfig& cfg, const RunData& data, std::span<const Role> roles) {
  (void)cfg;
  ordered_json j;
  j["method"] = to_string(ck.model.method.method);
  j["backbone"] = ck.model.backbone_cfg().name();
  j["scenario"] = data.scenario();
  auto model = ck.model.clone();
  for (auto role : roles) {
    const auto& ds = data.dataset_for(role);
    const auto classes = data.classes(role);
    if (classes.empty()) throw ConfigError("analyze-db: the split has no " + to_string(role) + " classes");
    std::vector<SampleRef> refs;
    std::vector<int> labels;
    for (std::size_t i = 0; i < classes.size(); ++i) {
      const int n = static_cast<int>(ds.classes[classes[i]].samples.size());
      for (int s = 0; s < n; ++s) {
        refs.push_back({classes[i], s});
        labels.push_back(static_cast<int>(i));
      }
    }
    // stored statistics, so the value does not depend on how samples are batched
    const auto feats = extract_features(model, ds, refs, BnMode::eval);
    const double db = db_index(feats, labels);
    j[to_string(role) + "_db"] = std::isinf(db) ? ordered_json("inf") : ordered_json(db);
  }
  return j;
}

void cmd_analyze_db(const Checkpoint& ck, const RunConfig& cfg, std::span<const Role> roles, const fs::path& path,
                    bool force, ordered_json* result) {
  if (!force) check_digest(ck, cfg);
  const auto data = load_run_data(cfg);
  const auto values = analyze_db(ck, cfg, data, roles);
  ordered_json doc = ordered_json::object();
  if (fs::exists(path)) {
    try {
      doc = ordered_json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
      throw LoadError(path.string() + ": existing report is not JSON: " + e.what());
    }
    if (!doc.is_object()) throw LoadError(path.string() + ": existing report is not a JSON object");
  }
  for (const auto& [k, v] : values.items()) doc[k] = v;
  const auto dir = path.parent_path().empty() ? fs::path(".") : path.parent_path();
  const bool existed = fs::exists(path);
  {
    Outputs files(dir);
    if (existed) {
      // leave the previous report in place if the rewrite fails
      const auto tmp = fs::path(path.string() + ".tmp");
      files.write(tmp, doc.dump(2) + "\n");
      fs::rename(tmp, path);
    } else {
      files.write(path, doc.dump(2) + "\n");
    }
    files.commit();
  }
  if (result) *result = values;
}

}  // namespace fsb
