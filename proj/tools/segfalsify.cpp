#include "segfalsify/calibrate.hpp"
#include "segfalsify/campaign.hpp"
#include "segfalsify/cluster.hpp"
#include "segfalsify/io.hpp"
#include "segfalsify/model.hpp"
#include "segfalsify/report.hpp"
#include "segfalsify/rng.hpp"
#include "segfalsify/synthetic.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace segfalsify;

namespace {

// Run config file: a JSON object whose keys are long flag names of the
// selected subcommand. An object value keyed by a subcommand name addresses
// that subcommand explicitly; arrays feed repeated options.
class JsonConfig : public CLI::Config {
 public:
  explicit JsonConfig(std::string section) : section_(std::move(section)) {}

  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    ordered_json doc;
    for (const CLI::Option* opt : app->get_options({})) {
      if (opt->get_lnames().empty() || !opt->get_configurable()) continue;
      const std::string name = opt->get_lnames().front();
      if (opt->count() > 0) {
        const auto& values = opt->results();
        doc[name] = values.size() == 1 && opt->get_expected_max() <= 1 ? ordered_json(values[0])
                                                                       : ordered_json(values);
      } else if (default_also && !opt->get_default_str().empty()) {
        doc[name] = opt->get_default_str();
      }
    }
    return doc.dump(2) + "\n";
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    ordered_json doc;
    try {
      doc = ordered_json::parse(input);
    } catch (const nlohmann::json::parse_error& e) {
      throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : doc.items()) {
      if (value.is_object()) {
        flatten(value, {key}, items);
      } else {
        flatten(ordered_json{{key, value}}, {section_}, items);
      }
    }
    return items;
  }

 private:
  std::string section_;

  static std::string scalar(const ordered_json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
  }

  static void flatten(const ordered_json& obj, const std::vector<std::string>& parents,
                      std::vector<CLI::ConfigItem>& out) {
    for (const auto& [key, value] : obj.items()) {
      if (value.is_object()) {
        auto deeper = parents;
        deeper.push_back(key);
        flatten(value, deeper, out);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar(v));
      } else {
        item.inputs.push_back(scalar(value));
      }
      out.push_back(std::move(item));
    }
  }
};

void log(const std::string& msg) { std::cerr << "segfalsify: " << msg << '\n'; }

struct ModelOptions {
  std::string model = "builtin";
  int timeout_ms = 30000;

  void add(CLI::App* app) {
    app->add_option("--model", model, "\"builtin\" or a command speaking the model protocol")
        ->capture_default_str();
    app->add_option("--timeout", timeout_ms, "per-request model timeout in milliseconds")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
  }
  std::unique_ptr<Model> open() const {
    return make_model(model, std::chrono::milliseconds(timeout_ms));
  }
};

Registry load_registry(const std::string& path) {
  if (path.empty()) return builtin_registry();
  return registry_from_json(read_json(path));
}

// ---------------------------------------------------------------------------

struct GenSyntheticCmd {
  int n = 50;
  std::string out;
  std::uint64_t seed = 0;
  std::string style = "standard";

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("gen-synthetic", "write a synthetic band dataset");
    app->add_option("--n", n, "number of images")->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--out", out, "output directory")->required();
    app->add_option("--seed", seed)->capture_default_str();
    app->add_option("--style", style, "standard|dark|bright|textured|mixed")->capture_default_str();
    app->callback([this] { run(); });
  }

  void run() const {
    const std::string manifest = write_synthetic_dataset(out, n, seed, style);
    std::cout << manifest << '\n';
  }
};

struct CalibrateCmd {
  std::string dataset;
  std::string out;
  std::string registry;
  ModelOptions model;
  CalibrationConfig cfg;
  std::vector<std::string> disable;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("calibrate", "measure per-parameter bounds at the target deterioration");
    app->add_option("--dataset", dataset, "manifest CSV")->required();
    app->add_option("--out", out, "bounds JSON to write")->required();
    app->add_option("--registry", registry, "registry JSON (defaults to the built-in one)");
    model.add(app);
    app->add_option("--grid", cfg.grid_points, "grid points per side")->capture_default_str();
    app->add_option("--target", cfg.target_deterioration, "target mean deterioration")
        ->capture_default_str();
    app->add_option("--refine-steps", cfg.refine_steps)->capture_default_str();
    app->add_option("--seed", cfg.seed)->capture_default_str();
    app->add_option("--disable", disable, "perturbations to mark disabled");
    app->callback([this] { run(); });
  }

  void run() const {
    const Dataset data = load_dataset(dataset);
    const Registry base = load_registry(registry);
    const Registry reg = base.with_disabled({disable.begin(), disable.end()});
    const auto m = model.open();
    const auto start = std::chrono::steady_clock::now();
    const Calibrator cal(data.samples, *m, cfg);
    const CalibrationResult res = cal.calibrate_all(reg);
    save_bounds(out, res.bounds, reg);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    for (const auto& pc : res.params) {
      std::cout << pc.perturbation << '.' << pc.param << " [" << pc.bound.calibrated_min << ", "
                << pc.bound.calibrated_max << "]"
                << (pc.has_lower && pc.lower.saturated ? " lower-saturated" : "")
                << (pc.has_upper && pc.upper.saturated ? " upper-saturated" : "") << '\n';
    }
    log("calibrated " + std::to_string(res.params.size()) + " parameters on " +
        std::to_string(data.size()) + " images in " + std::to_string(secs) + " s");
  }
};

struct ClusterCmd {
  std::string dataset;
  std::string out;
  std::string features;
  std::string features_out;
  KMeansOptions kmeans;
  int dim = 10;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("cluster", "group images by appearance");
    app->add_option("--dataset", dataset, "manifest CSV")->required();
    app->add_option("--out", out, "assignment CSV to write")->required();
    app->add_option("--features", features, "precomputed features CSV instead of built-in features");
    app->add_option("--features-out", features_out, "also write the extracted features");
    app->add_option("--k", kmeans.k, "number of clusters")->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--dim", dim, "reduced dimension")->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--seed", kmeans.seed)->capture_default_str();
    app->callback([this] { run(); });
  }

  void run() const {
    const Dataset data = load_dataset(dataset);
    FeatureTable table;
    if (!features.empty()) {
      table = read_features_csv(features);
      std::map<std::string, Eigen::Index> row_of;
      for (std::size_t i = 0; i < table.ids.size(); ++i) row_of[table.ids[i]] = Eigen::Index(i);
      for (const auto& id : data.ids) {
        if (!row_of.contains(id)) throw std::runtime_error("features file has no row for " + id);
      }
    } else {
      table.ids = data.ids;
      table.values.resize(Eigen::Index(data.size()), kFeatureGrid * kFeatureGrid * kFeaturesPerCell);
      for (std::size_t i = 0; i < data.size(); ++i) {
        table.values.row(Eigen::Index(i)) = extract_features(data.samples[i].image).transpose();
      }
      if (!features_out.empty()) write_features_csv(features_out, table);
    }
    const ClusterModel cm = cluster_features(table, kmeans, dim);
    write_assignments_csv(out, table.ids, cm.assignment);
    log("clustered " + std::to_string(table.ids.size()) + " images into " + std::to_string(kmeans.k) +
        " clusters (" + std::to_string(cm.kmeans.iterations) + " iterations, inertia " +
        std::to_string(cm.kmeans.inertia()) + ")");
  }
};

struct FalsifyCmd {
  std::string dataset;
  std::string bounds;
  std::string clusters;
  std::string registry;
  std::string out;
  ModelOptions model;
  int budget = 5000;
  int population = 30;
  double weight = 0.8;
  int k_chain = kDefaultChainLength;
  std::uint64_t seed = 0;
  int subsample = 0;
  std::string optimizer = "de";
  std::vector<std::string> disable;
  bool no_cache = false;

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("falsify", "search perturbation chains per cluster");
    app->add_option("--dataset", dataset, "manifest CSV")->required();
    app->add_option("--bounds", bounds, "bounds JSON from calibrate")->required();
    app->add_option("--clusters", clusters, "assignment CSV (default: one cluster)");
    app->add_option("--registry", registry, "registry JSON (defaults to the built-in one)");
    app->add_option("--out", out, "report directory")->required();
    model.add(app);
    app->add_option("--budget", budget, "objective evaluations per cluster")->capture_default_str();
    app->add_option("--population", population)->capture_default_str();
    app->add_option("--weight", weight, "differential weight F")->capture_default_str();
    app->add_option("--k-chain", k_chain, "chain length")->capture_default_str();
    app->add_option("--seed", seed)->capture_default_str();
    app->add_option("--subsample", subsample, "images evaluated per cluster (0 = all)")
        ->capture_default_str();
    app->add_option("--optimizer", optimizer)->check(CLI::IsMember({"de", "random"}))->capture_default_str();
    app->add_option("--disable", disable, "name or name@id,id,... (repeatable)");
    app->add_flag("--no-cache", no_cache, "recompute baseline IoUs on every evaluation");
    app->callback([this] { run(); });
  }

  ordered_json settings() const {
    return {{"dataset", dataset},     {"model", model.model},   {"bounds", bounds},
            {"clusters", clusters},   {"registry", registry},   {"budget", budget},
            {"population", population}, {"weight", weight},     {"k-chain", k_chain},
            {"seed", seed},           {"subsample", subsample}, {"optimizer", optimizer},
            {"disable", disable},     {"cache_baseline", !no_cache}};
  }

  void run() const {
    const Dataset data = load_dataset(dataset);
    const Registry base = load_registry(registry);
    const ParamBounds pb = load_bounds(bounds, base);
    const Registry reg = base.with_disabled(pb.disabled);
    DisableRules rules;
    for (const auto& d : disable) add_disable_rule(rules, d);
    const ClusterMap map =
        clusters.empty() ? single_cluster(data) : clusters_from_assignments(data, read_assignments_csv(clusters));

    FalsifyConfig cfg;
    cfg.de = {population, weight, budget, derive_seed(seed, 1)};
    cfg.de.validate();
    cfg.method = optimizer == "random" ? SearchMethod::random : SearchMethod::differential_evolution;
    cfg.chain_length = k_chain;
    cfg.perturbation_seed = derive_seed(seed, 2);
    cfg.subsample = subsample;
    cfg.subsample_seed = derive_seed(seed, 3);
    cfg.cache_baseline = !no_cache;
    cfg.trace_dir = out;

    fs::create_directories(out);
    const auto m = model.open();
    const FalsifyReport rep = run_campaign(data, *m, reg, pb, map, rules, cfg);
    const ordered_json doc = report_to_json(rep, reg, settings());
    write_text((fs::path(out) / "report.json").string(), doc.dump(2) + "\n");
    const std::string md = render_markdown(doc);
    write_text((fs::path(out) / "report.md").string(), md);
    std::cout << md;
    int failed = 0;
    for (const auto& c : rep.clusters) failed += c.ok ? 0 : 1;
    if (failed > 0) log(std::to_string(failed) + " cluster(s) failed; see report");
  }
};

struct ReportCmd {
  std::string in;
  std::string format = "md";

  void add(CLI::App& root) {
    auto* app = root.add_subcommand("report", "print a stored falsification report");
    app->add_option("--in", in, "report directory or report.json")->required();
    app->add_option("--format", format)->check(CLI::IsMember({"md", "json"}))->capture_default_str();
    app->callback([this] { run(); });
  }

  void run() const {
    const fs::path path = fs::is_directory(in) ? fs::path(in) / "report.json" : fs::path(in);
    const ordered_json doc = read_json(path.string());
    if (format == "json") {
      std::cout << doc.dump(2) << '\n';
    } else {
      std::cout << render_markdown(doc);
    }
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Black-box falsification of segmentation models with perturbation chains"};
  app.require_subcommand(1);
  app.fallthrough();

  GenSyntheticCmd gen;
  CalibrateCmd calibrate;
  ClusterCmd cluster;
  FalsifyCmd falsify;
  ReportCmd report;
  gen.add(app);
  calibrate.add(app);
  cluster.add(app);
  falsify.add(app);
  report.add(app);
  std::string section;
  for (int i = 1; i < argc && section.empty(); ++i) {
    if (app.get_subcommand_no_throw(argv[i]) != nullptr) section = argv[i];
  }
  app.set_config("--config", "", "JSON run config; command-line flags take precedence");
  app.config_formatter(std::make_shared<JsonConfig>(section));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    log(std::string("error: ") + e.what());
    return 1;
  }
  return 0;
}
