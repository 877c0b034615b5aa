#include <cstdio>
#include <fstream>

#include "fsb/errors.hpp"
#include "fsb/eval.hpp"
#include "json.hpp"

namespace fsb {

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

}  // namespace

std::string report_csv_header() { return "method,backbone,scenario,N,k,E,mean,ci95,seed"; }

std::string report_csv_row(const EvalReport& r) {
  return csv_field(r.method) + "," + csv_field(r.backbone) + "," + csv_field(r.scenario) + "," +
         std::to_string(r.n_way) + "," + std::to_string(r.k_shot) + "," + std::to_string(r.episodes()) + "," +
         percent(r.mean) + "," + percent(r.ci95) + "," + std::to_string(r.seed);
}

std::string reports_to_json(std::span<const EvalReport> reports) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& r : reports) {
    nlohmann::ordered_json j;
    j["method"] = r.method;
    j["backbone"] = r.backbone;
    j["scenario"] = r.scenario;
    j["scheme"] = r.scheme;
    j["N"] = r.n_way;
    j["k"] = r.k_shot;
    j["q"] = r.n_query;
    j["E"] = r.episodes();
    j["mean"] = r.mean;
    j["ci95"] = r.ci95;
    j["seed"] = r.seed;
    j["wallclock_s"] = r.wallclock_s;
    j["accuracies"] = r.accuracies;
    arr.push_back(std::move(j));
  }
  return arr.dump(2) + "\n";
}

std::vector<EvalReport> reports_from_json(const std::string& text) {
  try {
    const auto arr = nlohmann::json::parse(text);
    if (!arr.is_array()) throw ConfigError("report JSON: expected an array of reports");
    std::vector<EvalReport> out;
    for (const auto& j : arr) {
      EvalReport r;
      r.method = j.at("method").get<std::string>();
      r.backbone = j.at("backbone").get<std::string>();
      r.scenario = j.at("scenario").get<std::string>();
      r.scheme = j.at("scheme").get<std::string>();
      r.n_way = j.at("N").get<int>();
      r.k_shot = j.at("k").get<int>();
      r.n_query = j.at("q").get<int>();
      r.mean = j.at("mean").get<double>();
      r.ci95 = j.at("ci95").get<double>();
      r.seed = j.at("seed").get<std::uint64_t>();
      r.wallclock_s = j.at("wallclock_s").get<double>();
      r.accuracies = j.at("accuracies").get<std::vector<double>>();
      if (j.at("E").get<std::size_t>() != r.accuracies.size()) {
        throw ConfigError("report JSON: E does not match the number of accuracies");
      }
      out.push_back(std::move(r));
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("report JSON: ") + e.what());
  }
}

void emit_report(std::span<const EvalReport> reports, ReportFormat format, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError("cannot write report " + path.string());
  if (format == ReportFormat::json) {
    out << reports_to_json(reports);
  } else {
    out << report_csv_header() << "\n";
    for (const auto& r : reports) out << report_csv_row(r) << "\n";
  }
  if (!out) throw LoadError("failed writing report " + path.string());
}

}  // namespace fsb
