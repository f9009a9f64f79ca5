#include "segfalsify/report.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace segfalsify {

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

std::string fixed(double v, int digits) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(digits) << v;
  return out.str();
}

}  // namespace

nlohmann::ordered_json report_to_json(const FalsifyReport& report, const Registry& registry,
                                      const nlohmann::ordered_json& settings) {
  nlohmann::ordered_json doc;
  doc["generated_at"] = utc_now();
  doc["config"] = settings;
  doc["clusters"] = nlohmann::ordered_json::array();
  for (const auto& c : report.clusters) {
    nlohmann::ordered_json entry;
    entry["id"] = c.id;
    entry["size"] = c.size;
    entry["evaluated_images"] = c.evaluated_images;
    entry["status"] = c.ok ? "ok" : "failed";
    if (!c.ok) entry["error"] = c.error;
    entry["disabled"] = c.disabled;
    entry["mean_baseline_iou"] = c.mean_baseline_iou;
    entry["best_deterioration"] = c.best_deterioration;
    entry["evaluations"] = c.evaluations;
    entry["chain"] = chain_to_json(c.best_chain, registry);
    entry["genome"] = std::vector<double>(c.best_genome.data(), c.best_genome.data() + c.best_genome.size());
    entry["trace"] = c.trace_file;
    doc["clusters"].push_back(std::move(entry));
  }
  nlohmann::ordered_json usage;
  usage["perturbations"] = report.usage.perturbations;
  usage["clusters"] = report.usage.clusters;
  usage["positions"] = nlohmann::ordered_json::array();
  for (Eigen::Index r = 0; r < report.usage.positions.rows(); ++r) {
    std::vector<int> row(report.usage.positions.cols());
    for (Eigen::Index c = 0; c < report.usage.positions.cols(); ++c) row[c] = report.usage.positions(r, c);
    usage["positions"].push_back(row);
  }
  doc["usage"] = std::move(usage);
  return doc;
}

std::string render_markdown(const nlohmann::ordered_json& report) {
  std::ostringstream md;
  md << "## Mean IoU deterioration per cluster\n\n";
  md << "| Cluster | Size | Evaluated | Baseline IoU | Deterioration | Chain |\n";
  md << "|--:|--:|--:|--:|--:|:--|\n";
  for (const auto& c : report.at("clusters")) {
    std::string chain;
    for (const auto& link : c.at("chain")) {
      if (!chain.empty()) chain += " > ";
      chain += link.at("name").get<std::string>();
    }
    if (c.at("status") != "ok") chain += (chain.empty() ? "" : " ") + std::string("(failed)");
    std::string id = std::to_string(c.at("id").get<int>());
    if (!c.at("disabled").empty()) id += " *";
    md << "| " << id << " | " << c.at("size").get<std::size_t>() << " | "
       << c.at("evaluated_images").get<std::size_t>() << " | "
       << fixed(c.at("mean_baseline_iou").get<double>(), 3) << " | "
       << fixed(c.at("best_deterioration").get<double>(), 3) << " | " << chain << " |\n";
  }
  md << "\n`*` clusters ran with some perturbations disabled.\n";

  const auto& usage = report.at("usage");
  md << "\n## Perturbation usage (chain position)\n\n| Perturbation |";
  for (const auto& id : usage.at("clusters")) md << ' ' << id.get<int>() << " |";
  md << "\n|:--|";
  for (std::size_t i = 0; i < usage.at("clusters").size(); ++i) md << ":-:|";
  md << '\n';
  const auto& names = usage.at("perturbations");
  for (std::size_t r = 0; r < names.size(); ++r) {
    md << "| " << names[r].get<std::string>() << " |";
    for (const auto& pos : usage.at("positions")[r]) {
      const int p = pos.get<int>();
      md << ' ' << (p == 0 ? std::string("-") : std::to_string(p)) << " |";
    }
    md << '\n';
  }

  for (const auto& c : report.at("clusters")) {
    if (c.at("status") == "ok") continue;
    md << "\nCluster " << c.at("id").get<int>() << " failed: " << c.value("error", std::string()) << '\n';
  }
  return md.str();
}

nlohmann::ordered_json strip_volatile(nlohmann::ordered_json report) {
  report.erase("generated_at");
  return report;
}

nlohmann::ordered_json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return nlohmann::ordered_json::parse(in);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

}  // namespace segfalsify
