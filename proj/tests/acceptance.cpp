// Acceptance suite: one line per criterion, PASS / FAIL / SKIP, followed by
// the measured numbers. Exit status is non-zero when any criterion fails.

#include "segfalsify/calibrate.hpp"
#include "segfalsify/campaign.hpp"
#include "segfalsify/cluster.hpp"
#include "segfalsify/io.hpp"
#include "segfalsify/metrics.hpp"
#include "segfalsify/report.hpp"
#include "segfalsify/synthetic.hpp"
#include "test_support.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#ifndef SEGFALSIFY_CLI
#error "SEGFALSIFY_CLI must name the command-line tool"
#endif

namespace fs = std::filesystem;
using namespace segfalsify;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(const std::string& name, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome out;
  try {
    out = body();
  } catch (const std::exception& e) {
    out = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!out.pass) ++failures;
  std::printf("[%s] %s: %s (%.1f s)\n", out.pass ? "PASS" : "FAIL", name.c_str(), out.detail.c_str(), secs);
  std::fflush(stdout);
}

template <typename... Args>
std::string fmt(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

bool history_monotone(const OptResult& r) {
  for (std::size_t i = 1; i < r.history.size(); ++i) {
    if (r.history[i].best < r.history[i - 1].best) return false;
  }
  return true;
}

// Per-pixel counting, written independently of metrics.cpp.
double iou_oracle(const ProbMap& p, const Mask& m) {
  const double taus[] = {0.5, 0.9, 0.99};
  double sum = 0.0;
  for (double tau : taus) {
    long inter = 0, uni = 0;
    for (Eigen::Index y = 0; y < p.rows(); ++y) {
      for (Eigen::Index x = 0; x < p.cols(); ++x) {
        const bool a = p(y, x) > tau;
        const bool b = m(y, x);
        inter += a && b;
        uni += a || b;
      }
    }
    sum += uni == 0 ? 1.0 : double(inter) / double(uni);
  }
  return sum / 3.0;
}

int run(const std::string& cmd) {
  const std::string quiet = cmd + " >/dev/null 2>&1";
  return std::system(quiet.c_str());
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Shared fixture: the 50-image synthetic dataset and its calibration.
struct Calibrated {
  std::vector<Sample> data = make_synthetic_dataset(50, 7);
  ReferenceModel model;
  CalibrationConfig cfg;
  Calibrator calibrator{data, model, cfg};
  CalibrationResult result = calibrator.calibrate_all(builtin_registry());
};

}  // namespace

int main() {
  const Registry& reg = builtin_registry();
  const fs::path work = fs::temp_directory_path() / ("segfalsify_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(work);

  criterion("IoU oracle equivalence", [] {
    std::mt19937_64 rng(1001);
    std::uniform_int_distribution<int> side(1, 16);
    int mismatches = 0;
    for (int i = 0; i < 10000; ++i) {
      const int w = side(rng), h = side(rng);
      const ProbMap p = testing::random_probs(w, h, rng);
      const Mask m = testing::random_mask(w, h, rng, (rng() % 5) / 4.0);
      if (iou(p, m) != iou_oracle(p, m)) ++mismatches;
    }
    return Outcome{mismatches == 0, fmt("%d of 10000 pairs differ from the counting oracle", mismatches)};
  });

  criterion("Perturbation identity and mask safety", [&] {
    std::mt19937_64 rng(1002);
    int identity_bad = 0, mask_bad = 0, draws = 0;
    for (int trial = 0; trial < 20; ++trial) {
      const Image img = testing::random_image(17 + trial, 13 + trial % 7, rng);
      const Mask mask = testing::random_mask(img.width(), img.height(), rng);
      for (const auto& spec : reg.specs()) {
        const Sample out = apply(spec, neutral_params(spec), img, mask, rng());
        if (!(out.image == img) || !(out.mask == mask).all()) ++identity_bad;
      }
    }
    std::vector<const PerturbationSpec*> photometric;
    for (const auto& spec : reg.specs()) {
      if (!spec.geometric) photometric.push_back(&spec);
    }
    for (; draws < 1000; ++draws) {
      const PerturbationSpec& spec = *photometric[std::size_t(draws) % photometric.size()];
      const Image img = testing::random_image(8 + int(rng() % 40), 8 + int(rng() % 30), rng);
      const Mask mask = testing::random_mask(img.width(), img.height(), rng);
      const Sample out = apply(spec, testing::random_params(spec, rng), img, mask, rng());
      if (!(out.mask == mask).all()) ++mask_bad;
    }
    return Outcome{identity_bad == 0 && mask_bad == 0,
                   fmt("%d neutral applications changed their input (240 runs); %d of %d photometric "
                       "draws altered the mask",
                       identity_bad, mask_bad, draws)};
  });

  std::unique_ptr<Calibrated> cal;
  criterion("Calibration fidelity", [&] {
    cal = std::make_unique<Calibrated>();
    int checked = 0, saturated = 0, bad = 0;
    double lo_seen = 1.0, hi_seen = 0.0;
    std::string worst;
    for (const auto& pc : cal->result.params) {
      const auto& spec = reg.spec(pc.perturbation);
      const std::size_t index = static_cast<std::size_t>(
          std::find_if(spec.params.begin(), spec.params.end(),
                       [&](const ParamSpec& p) { return p.name == pc.param; }) -
          spec.params.begin());
      auto remeasure = [&](double v) {
        ParamVector p = neutral_params(spec);
        p(Eigen::Index(index)) = v;
        return cal->calibrator.measure(spec, p);
      };
      const std::pair<bool, const SideCalibration*> sides[] = {{pc.has_lower, &pc.lower},
                                                               {pc.has_upper, &pc.upper}};
      for (const auto& [present, side] : sides) {
        if (!present) continue;
        const double d = remeasure(side->bound);
        if (side->saturated) {
          // Target never reached up to the hard limit: the bound is the limit.
          ++saturated;
          if (d > 2 * cal->cfg.target_deterioration) {
            ++bad;
            worst += fmt(" %s.%s@limit=%.4f", pc.perturbation.c_str(), pc.param.c_str(), d);
          }
          continue;
        }
        ++checked;
        lo_seen = std::min(lo_seen, d);
        hi_seen = std::max(hi_seen, d);
        if (d < 0.005 || d > 0.02) {
          ++bad;
          worst += fmt(" %s.%s=%.4f", pc.perturbation.c_str(), pc.param.c_str(), d);
        }
      }
    }
    return Outcome{bad == 0 && checked > 0,
                   fmt("%d calibrated sides re-measure in [%.4f, %.4f] (required [0.005, 0.02]); "
                       "%d sides saturate at the hard limit",
                       checked, lo_seen, hi_seen, saturated) +
                       (worst.empty() ? "" : "; out of range:" + worst)};
  });

  std::vector<OptResult> all_runs;
  criterion("Falsification beats random", [&] {
    if (!cal) return Outcome{false, "calibration unavailable"};
    std::vector<const Sample*> cluster;
    for (const auto& s : cal->data) cluster.push_back(&s);
    std::vector<double> de, rs;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      FalsifyConfig cfg;
      cfg.de = {30, 0.8, 2000, seed};
      cfg.chain_length = 6;
      cfg.perturbation_seed = seed;
      cfg.subsample = 10;
      cfg.subsample_seed = 99;
      const ClusterReport a = falsify_cluster(0, cluster, cal->model, reg, cal->result.bounds, cfg);
      cfg.method = SearchMethod::random;
      const ClusterReport b = falsify_cluster(0, cluster, cal->model, reg, cal->result.bounds, cfg);
      if (!a.ok || !b.ok) return Outcome{false, a.ok ? b.error : a.error};
      de.push_back(a.best_deterioration);
      rs.push_back(b.best_deterioration);
      all_runs.push_back(a.result);
      all_runs.push_back(b.result);
    }
    const double md = median(de), mr = median(rs);
    return Outcome{md >= 0.1 && md >= 1.5 * mr,
                   fmt("median DE %.4f vs random %.4f (ratio %.3f; required >= 0.1 and >= 1.5x)", md, mr,
                       mr > 0 ? md / mr : 0.0)};
  });

  criterion("Genome validity", [&] {
    const ParamBounds bounds = cal ? cal->result.bounds : hard_bounds(reg);
    const GenomeLayout layout(reg);
    std::mt19937_64 rng(1005);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    int invalid = 0;
    for (int i = 0; i < 10000; ++i) {
      Eigen::VectorXd g(layout.dim());
      for (auto& v : g) v = unit(rng);
      const Chain c = decode(g, reg, bounds);
      std::set<std::string> names;
      bool ok = c.size() == 6;
      for (const auto& link : c) {
        ok = ok && names.insert(link.name).second && reg.enabled(link.name);
        const auto& bs = bounds.at(link.name);
        for (Eigen::Index k = 0; k < link.params.size(); ++k) {
          ok = ok && link.params(k) >= bs[k].calibrated_min && link.params(k) <= bs[k].calibrated_max;
        }
      }
      invalid += ok ? 0 : 1;
    }
    const std::vector<std::string> prefix{"gaussian_blur", "motion_blur", "gaussian_noise",
                                          "impulse_noise", "brightness", "contrast"};
    auto names_of = [](const Chain& c) {
      std::vector<std::string> out;
      for (const auto& l : c) out.push_back(l.name);
      return out;
    };
    Eigen::VectorXd sorted = Eigen::VectorXd::Constant(layout.dim(), 0.5);
    for (int i = 0; i < 12; ++i) sorted(i) = 1.0 - 0.05 * i;
    const bool descending = names_of(decode(sorted, reg, bounds)) == prefix;
    const bool ties = names_of(decode(Eigen::VectorXd::Constant(layout.dim(), 0.7), reg, bounds)) == prefix;
    bool endpoints = true;
    for (double t : {0.0, 0.5, 1.0}) {
      Eigen::VectorXd g = Eigen::VectorXd::Constant(layout.dim(), t);
      g.head(12).setConstant(0.5);
      for (const auto& link : decode(g, reg, bounds)) {
        const auto& bs = bounds.at(link.name);
        for (Eigen::Index k = 0; k < link.params.size(); ++k) {
          const double want = t == 0.0   ? bs[k].calibrated_min
                              : t == 1.0 ? bs[k].calibrated_max
                                         : 0.5 * (bs[k].calibrated_min + bs[k].calibrated_max);
          endpoints = endpoints && link.params(k) == want;
        }
      }
    }
    return Outcome{invalid == 0 && descending && ties && endpoints,
                   fmt("%d of 10000 random genomes invalid; descending-key example %s; tie-break %s; "
                       "endpoint mapping %s",
                       invalid, descending ? "holds" : "broken", ties ? "holds" : "broken",
                       endpoints ? "exact" : "inexact")};
  });

  criterion("Optimizer sanity", [&] {
    auto sphere = [](const Eigen::VectorXd& x) {
      return -(x - Eigen::VectorXd::LinSpaced(x.size(), 0.2, 0.7)).squaredNorm();
    };
    std::vector<double> best;
    bool monotone = true;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const OptResult r = optimize(sphere, 8, {30, 0.8, 2000, seed});
      monotone = monotone && history_monotone(r);
      best.push_back(r.best_value);
      monotone = monotone && history_monotone(random_search(sphere, 8, 2000, seed));
    }
    for (const auto& r : all_runs) monotone = monotone && history_monotone(r);
    const OptResult a = optimize(sphere, 8, {30, 0.8, 2000, 17});
    const OptResult b = optimize(sphere, 8, {30, 0.8, 2000, 17});
    bool identical = a.best_genome == b.best_genome && a.best_value == b.best_value &&
                     a.evaluation_count == b.evaluation_count && a.history.size() == b.history.size();
    for (std::size_t i = 0; identical && i < a.history.size(); ++i) {
      identical = a.history[i].value == b.history[i].value && a.history[i].best == b.history[i].best;
    }
    const double m = median(best);
    return Outcome{monotone && identical && m >= -1e-3,
                   fmt("traces %s over %zu runs; sphere median best %.3g (required >= -1e-3); "
                       "repeated seed %s",
                       monotone ? "monotone" : "NOT monotone", 10 + all_runs.size(), m,
                       identical ? "bitwise identical" : "differs")};
  });

  criterion("Clustering pipeline", [&] {
    std::mt19937_64 rng(1007);
    std::normal_distribution<double> noise(0.0, 1.0);
    int recovered = 0;
    bool monotone = true;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      // Points within radius 1 of centres 10 apart.
      Eigen::MatrixXd pts(60, 3);
      std::vector<int> truth(60);
      for (int i = 0; i < 60; ++i) {
        truth[i] = i % 2;
        Eigen::RowVector3d d(noise(rng), noise(rng), noise(rng));
        d *= std::uniform_real_distribution<double>(0.0, 1.0)(rng) / d.norm();
        pts.row(i) = Eigen::RowVector3d(10.0 * truth[i], 0.0, 0.0) + d;
      }
      const KMeansResult r = kmeans(pts, {2, seed, 300, false});
      bool exact = true;
      for (int i = 0; i < 60; ++i) exact = exact && ((r.assignment[i] == r.assignment[0]) == (truth[i] == 0));
      recovered += exact ? 1 : 0;
      for (std::size_t i = 1; i < r.inertia_history.size(); ++i) {
        monotone = monotone && r.inertia_history[i] <= r.inertia_history[i - 1];
      }
    }
    const fs::path dir = work / "cluster";
    const std::string manifest = write_synthetic_dataset(dir.string(), 24, 5, "mixed");
    const std::string cli = SEGFALSIFY_CLI;
    int rc = 0;
    for (const char* name : {"a.csv", "b.csv"}) {
      rc |= run(cli + " cluster --dataset " + manifest + " --k 4 --seed 3 --out " + (dir / name).string());
    }
    const bool same = rc == 0 && slurp(dir / "a.csv") == slurp(dir / "b.csv") && !slurp(dir / "a.csv").empty();
    return Outcome{recovered == 10 && monotone && same,
                   fmt("two blobs recovered exactly in %d of 10 seeds; inertia %s; repeated CLI run "
                       "%s",
                       recovered, monotone ? "monotone" : "NOT monotone",
                       same ? "wrote identical assignment CSVs" : "differed or failed")};
  });

  criterion("End-to-end reproducibility", [&] {
    const fs::path dir = work / "e2e";
    const std::string cli = SEGFALSIFY_CLI;
    const std::string manifest = (dir / "data" / "manifest.csv").string();
    if (run(cli + " gen-synthetic --n 30 --seed 11 --style mixed --out " + (dir / "data").string()) != 0 ||
        run(cli + " calibrate --dataset " + manifest + " --out " + (dir / "bounds.json").string()) != 0 ||
        run(cli + " cluster --dataset " + manifest + " --k 3 --seed 2 --out " +
            (dir / "clusters.csv").string()) != 0) {
      return Outcome{false, "setup commands failed"};
    }
    nlohmann::ordered_json config{{"dataset", manifest},
                                  {"bounds", (dir / "bounds.json").string()},
                                  {"clusters", (dir / "clusters.csv").string()},
                                  {"out", (dir / "report").string()},
                                  {"budget", 300},
                                  {"k-chain", 6},
                                  {"seed", 21},
                                  {"subsample", 4},
                                  {"disable", {"brightness@1"}}};
    write_text((dir / "run.json").string(), config.dump(2));
    std::vector<nlohmann::ordered_json> reports;
    for (int i = 0; i < 2; ++i) {
      if (run(cli + " falsify --config " + (dir / "run.json").string()) != 0) {
        return Outcome{false, "falsify exited with an error"};
      }
      reports.push_back(read_json((dir / "report" / "report.json").string()));
    }
    const bool same = strip_volatile(reports[0]) == strip_volatile(reports[1]);
    const std::size_t clusters = reports[0].at("clusters").size();
    return Outcome{same && clusters == 3,
                   fmt("two falsify runs over %zu clusters (subsample 4, budget 300) %s", clusters,
                       same ? "produced identical reports" : "DIFFER")};
  });

  criterion("RLE and PPM roundtrip", [] {
    std::mt19937_64 rng(1009);
    int bad_rle = 0, bad_ppm = 0;
    for (int i = 0; i < 1000; ++i) {
      const int w = 1 + int(rng() % 48), h = 1 + int(rng() % 48);
      const Mask m = testing::random_mask(w, h, rng, (rng() % 9) / 8.0);
      const Mask back = decode_rle(encode_rle(m));
      if (!(back.rows() == h && back.cols() == w && (back == m).all())) ++bad_rle;
      const Image img = testing::random_image(w, h, rng);
      if (!(decode_ppm(encode_ppm(img)) == img)) ++bad_ppm;
    }
    return Outcome{bad_rle == 0 && bad_ppm == 0,
                   fmt("%d of 1000 masks and %d of 1000 images failed to round-trip", bad_rle, bad_ppm)};
  });

  std::printf("[SKIP] Protocol conformance: needs the Python adapter, which this build does not include; "
              "the harness side is covered by the model_test binary\n");

  fs::remove_all(work);
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
