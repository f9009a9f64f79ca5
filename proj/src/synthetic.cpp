#include "segfalsify/synthetic.hpp"

#include "segfalsify/rng.hpp"
#include "segfalsify/texture.hpp"

#include <cmath>
#include <filesystem>
#include <iomanip>
#include <random>
#include <sstream>

namespace segfalsify {

namespace {

struct StyleLevels {
  double background;
  double band;
  double texture;  // peak-to-peak background variation
  int cell;        // texture cell size in pixels
};

StyleLevels levels(SceneStyle style) {
  switch (style) {
    case SceneStyle::dark: return {0.12, 0.80, 0.06, 8};
    case SceneStyle::bright: return {0.42, 0.90, 0.10, 8};
    case SceneStyle::textured: return {0.28, 0.85, 0.22, 4};
    case SceneStyle::standard: break;
  }
  return {0.30, 0.85, 0.10, 8};
}

float quantise(double v) {
  return static_cast<float>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)) / 255.0f;
}

}  // namespace

SceneStyle parse_scene_style(const std::string& name) {
  if (name == "standard") return SceneStyle::standard;
  if (name == "dark") return SceneStyle::dark;
  if (name == "bright") return SceneStyle::bright;
  if (name == "textured") return SceneStyle::textured;
  throw std::invalid_argument("unknown scene style: " + name);
}

std::string to_string(SceneStyle style) {
  switch (style) {
    case SceneStyle::dark: return "dark";
    case SceneStyle::bright: return "bright";
    case SceneStyle::textured: return "textured";
    case SceneStyle::standard: break;
  }
  return "standard";
}

Sample make_synthetic_sample(std::uint64_t seed, const SyntheticOptions& options) {
  const int w = options.width;
  const int h = options.height;
  const StyleLevels lv = levels(options.style);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const double x0 = w * (0.3 + 0.4 * unit(rng));
  const double slope = w * (-0.25 + 0.5 * unit(rng));
  const double bend = w * (-0.25 + 0.5 * unit(rng));
  const double half_width = 0.5 * (6.0 + 4.0 * unit(rng));
  const Plane<float> texture = value_noise(w, h, lv.cell, rng);

  Image img(w, h);
  Mask mask = Mask::Constant(h, w, false);
  for (int y = 0; y < h; ++y) {
    const double t = static_cast<double>(y) / h;
    const double centre = x0 + slope * t + bend * t * t;
    for (int x = 0; x < w; ++x) {
      const bool inside = std::abs(x + 0.5 - centre) < half_width;
      mask(y, x) = inside;
      const double value = inside ? lv.band : lv.background + lv.texture * (texture(y, x) - 0.5);
      const float q = quantise(value);
      for (int c = 0; c < Image::kChannels; ++c) img.at(x, y, c) = q;
    }
  }
  return {std::move(img), std::move(mask)};
}

std::vector<Sample> make_synthetic_dataset(int n, std::uint64_t seed, const SyntheticOptions& options) {
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(std::max(n, 0)));
  for (int i = 0; i < n; ++i) out.push_back(make_synthetic_sample(derive_seed(seed, i), options));
  return out;
}

std::string write_synthetic_dataset(const std::string& dir, int n, std::uint64_t seed,
                                    const std::string& style) {
  namespace fs = std::filesystem;
  if (n < 1) throw std::invalid_argument("synthetic dataset needs at least one image");
  fs::create_directories(dir);
  const bool mixed = style == "mixed";
  const SceneStyle fixed = mixed ? SceneStyle::standard : parse_scene_style(style);
  constexpr SceneStyle kCycle[] = {SceneStyle::dark, SceneStyle::bright, SceneStyle::textured};

  std::vector<ManifestEntry> entries;
  for (int i = 0; i < n; ++i) {
    SyntheticOptions opts;
    opts.style = mixed ? kCycle[i % 3] : fixed;
    const Sample s = make_synthetic_sample(derive_seed(seed, i), opts);
    std::ostringstream id;
    id << "img_" << std::setw(4) << std::setfill('0') << i;
    write_ppm((fs::path(dir) / (id.str() + ".ppm")).string(), s.image);
    write_rle((fs::path(dir) / (id.str() + ".rle")).string(), s.mask);
    entries.push_back({id.str(), id.str() + ".ppm", id.str() + ".rle"});
  }
  const std::string manifest = (fs::path(dir) / "manifest.csv").string();
  write_manifest(manifest, entries);
  return manifest;
}

}  // namespace segfalsify
