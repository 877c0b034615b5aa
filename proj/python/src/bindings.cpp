// Thin string/array bridge; the Python package turns JSON text into dicts.

#include <fstream>
#include <iterator>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fsb/config.hpp"
#include "fsb/errors.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

fsb::RunConfig parse(const std::string& text) { return fsb::run_config_from_json(json::parse(text)); }

std::string resolve(const std::string& text) { return fsb::run_config_to_json(parse(text)).dump(); }

std::string checkpoint_config(const std::string& path) { return fsb::load_checkpoint(path).config.dump(); }

py::dict train(const std::string& config_text) {
  const auto cfg = parse(config_text);
  fsb::TrainOutputs out;
  {
    py::gil_scoped_release nogil;
    out = fsb::cmd_train(cfg);
  }
  py::dict d;
  d["checkpoint"] = out.checkpoint.string();
  d["config"] = out.config.string();
  d["split"] = out.split.string();
  return d;
}

std::string evaluate(const std::string& checkpoint, const std::string& config_text, std::vector<int> ways,
                     int workers, const std::string& out_dir, bool force) {
  const auto cfg = parse(config_text);
  py::gil_scoped_release nogil;
  const auto ck = fsb::load_checkpoint(checkpoint);
  const fsb::EvalRequest req{std::move(ways), workers};
  if (!out_dir.empty()) {
    const auto files = fsb::cmd_evaluate(ck, cfg, req, out_dir, force);
    std::ifstream in(files.json);
    return std::string(std::istreambuf_iterator<char>(in), {});
  }
  if (!force) fsb::check_digest(ck, cfg);
  const auto reports = fsb::evaluate_run(ck, cfg, fsb::load_run_data(cfg), req);
  return fsb::reports_to_json(reports);
}

std::string analyze_db(const std::string& checkpoint, const std::string& config_text,
                       const std::vector<std::string>& role_names, bool force) {
  const auto cfg = parse(config_text);
  std::vector<fsb::Role> roles;
  for (const auto& r : role_names) roles.push_back(fsb::role_from_string(r));
  py::gil_scoped_release nogil;
  const auto ck = fsb::load_checkpoint(checkpoint);
  if (!force) fsb::check_digest(ck, cfg);
  return fsb::analyze_db(ck, cfg, fsb::load_run_data(cfg), roles).dump();
}

void synth_dataset(const std::string& out, fsb::SynthConfig sc, bool pnm) {
  py::gil_scoped_release nogil;
  fsb::save_dataset(out, fsb::synth_generate(sc), pnm ? fsb::ImageFormat::pnm : fsb::ImageFormat::rtf);
}

double db_index(py::array_t<float, py::array::c_style | py::array::forcecast> features, std::vector<int> labels) {
  if (features.ndim() != 2) throw py::value_error("features must be 2-D");
  const auto m = static_cast<std::size_t>(features.shape(0)), d = static_cast<std::size_t>(features.shape(1));
  std::vector<fsb::Real> v(features.data(), features.data() + m * d);
  return fsb::db_index(fsb::Tensor<fsb::Real>({m, d}, std::move(v)), labels);
}

}  // namespace

PYBIND11_MODULE(_fsb, m) {
  m.doc() = "fewshot_bench native core";
  py::register_exception<fsb::ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<fsb::UnsupportedMethodError>(m, "UnsupportedMethodError", PyExc_ValueError);

  m.def("resolve_config", &resolve, py::arg("config_json"));
  m.def("load_config", [](const std::string& path) { return fsb::run_config_to_json(fsb::load_run_config(path)).dump(); },
        py::arg("path"));
  m.def("config_digest", [](const std::string& text) { return fsb::config_digest(parse(text)); }, py::arg("config_json"));
  m.def("env_seed", &fsb::env_seed);
  m.def("checkpoint_config", &checkpoint_config, py::arg("path"));
  m.def("train", &train, py::arg("config_json"));
  m.def("evaluate", &evaluate, py::arg("checkpoint"), py::arg("config_json"), py::arg("ways"), py::arg("workers"),
        py::arg("out_dir"), py::arg("force"));
  m.def("analyze_db", &analyze_db, py::arg("checkpoint"), py::arg("config_json"), py::arg("roles"),
        py::arg("force"));
  py::class_<fsb::SynthConfig>(m, "SynthConfig")
      .def(py::init<>())
      .def_readwrite("name", &fsb::SynthConfig::name)
      .def_readwrite("n_classes", &fsb::SynthConfig::n_classes)
      .def_readwrite("samples_per_class", &fsb::SynthConfig::samples_per_class)
      .def_readwrite("channels", &fsb::SynthConfig::channels)
      .def_readwrite("h", &fsb::SynthConfig::h)
      .def_readwrite("w", &fsb::SynthConfig::w)
      .def_readwrite("sigma", &fsb::SynthConfig::sigma)
      .def_readwrite("max_shift", &fsb::SynthConfig::max_shift)
      .def_readwrite("grid", &fsb::SynthConfig::grid)
      .def_readwrite("seed", &fsb::SynthConfig::seed);
  m.def("synth_dataset", &synth_dataset, py::arg("out"), py::arg("config"), py::arg("pnm") = false);
  m.def("db_index", &db_index, py::arg("features"), py::arg("labels"));
}
