#include "segfalsify/perturb.hpp"

#include "segfalsify/rng.hpp"
#include "segfalsify/texture.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <random>

namespace segfalsify {

namespace {

using Rng = std::mt19937_64;
using Affine = Eigen::Matrix<double, 2, 3>;

ParamSpec continuous(std::string name, double neutral, double lo, double hi) {
  return {std::move(name), ParamKind::continuous, neutral, lo, hi};
}

ParamSpec integer(std::string name, double neutral, double lo, double hi) {
  return {std::move(name), ParamKind::integer, neutral, lo, hi};
}

void clamp01(Image& img) { img.pixels() = img.pixels().max(0.0f).min(1.0f); }

// ---------------------------------------------------------------------------
// Filtering and resampling helpers

Plane<float> blur_plane(const Plane<float>& src, double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double norm = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    kernel[k + radius] = std::exp(-0.5 * k * k / (sigma * sigma));
    norm += kernel[k + radius];
  }
  for (double& w : kernel) w /= norm;

  const int h = static_cast<int>(src.rows());
  const int w = static_cast<int>(src.cols());
  Plane<float> tmp(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        acc += kernel[k + radius] * src(y, std::clamp(x + k, 0, w - 1));
      }
      tmp(y, x) = static_cast<float>(acc);
    }
  }
  Plane<float> out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        acc += kernel[k + radius] * tmp(std::clamp(y + k, 0, h - 1), x);
      }
      out(y, x) = static_cast<float>(acc);
    }
  }
  return out;
}

Image blur_image(const Image& img, double sigma) {
  if (sigma <= 0.0) return img;
  Image out(img.width(), img.height());
  for (int c = 0; c < Image::kChannels; ++c) out.channel(c) = blur_plane(img.channel(c), sigma);
  return out;
}

// Bilinear lookup with edge replication; (x, y) in pixel-index coordinates.
float sample_clamped(const ConstChannelMap<float>& ch, double x, double y) {
  const double w = static_cast<double>(ch.cols());
  const double h = static_cast<double>(ch.rows());
  x = std::clamp(x, 0.0, w - 1.0);
  y = std::clamp(y, 0.0, h - 1.0);
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const int x1 = std::min(x0 + 1, static_cast<int>(w) - 1);
  const int y1 = std::min(y0 + 1, static_cast<int>(h) - 1);
  const double tx = x - x0;
  const double ty = y - y0;
  const double top = (1.0 - tx) * ch(y0, x0) + tx * ch(y0, x1);
  const double bottom = (1.0 - tx) * ch(y1, x0) + tx * ch(y1, x1);
  return static_cast<float>((1.0 - ty) * top + ty * bottom);
}

// Resamples image and mask through `inverse`, which maps destination
// coordinates to source coordinates (pixel i covers [i, i+1)). Image samples
// are bilinear, mask samples nearest-neighbour; anything outside the source
// frame is black / false.
Sample warp_affine(const Image& img, const Mask& mask, const Affine& inverse) {
  if (inverse == Affine::Identity()) return {img, mask};

  const int w = img.width();
  const int h = img.height();
  Image out(w, h);
  Mask out_mask = Mask::Constant(h, w, false);

  auto fetch = [&](int x, int y, int c) -> double {
    if (x < 0 || y < 0 || x >= w || y >= h) return 0.0;
    return img.at(x, y, c);
  };

  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      const Eigen::Vector2d src = inverse * Eigen::Vector3d(j + 0.5, i + 0.5, 1.0);

      const double ix = std::floor(src.x());
      const double iy = std::floor(src.y());
      if (ix >= 0 && iy >= 0 && ix < w && iy < h) {
        out_mask(i, j) = mask(static_cast<Eigen::Index>(iy), static_cast<Eigen::Index>(ix));
      }

      const double fx = src.x() - 0.5;
      const double fy = src.y() - 0.5;
      if (fx <= -1.0 || fy <= -1.0 || fx >= w || fy >= h) continue;
      const int x0 = static_cast<int>(std::floor(fx));
      const int y0 = static_cast<int>(std::floor(fy));
      const double tx = fx - x0;
      const double ty = fy - y0;
      for (int c = 0; c < Image::kChannels; ++c) {
        const double top = (1.0 - tx) * fetch(x0, y0, c) + tx * fetch(x0 + 1, y0, c);
        const double bottom = (1.0 - tx) * fetch(x0, y0 + 1, c) + tx * fetch(x0 + 1, y0 + 1, c);
        out.at(j, i, c) = static_cast<float>((1.0 - ty) * top + ty * bottom);
      }
    }
  }
  clamp01(out);
  return {std::move(out), std::move(out_mask)};
}

// Blends `value` into the image wherever `alpha` is set, scaled by `opacity`.
void composite(Image& img, const Plane<float>& alpha, float value, float opacity) {
  for (int c = 0; c < Image::kChannels; ++c) {
    auto ch = img.channel(c);
    ch = ch * (1.0f - alpha * opacity) + value * alpha * opacity;
  }
}

double radians(double degrees) { return degrees * std::numbers::pi / 180.0; }

// ---------------------------------------------------------------------------
// Perturbations. Each receives parameters already rounded per schema.

using Params = std::span<const double>;

Sample gaussian_blur(Params p, const Image& img, const Mask& mask, Rng&) {
  return {blur_image(img, p[0]), mask};
}

Sample motion_blur(Params p, const Image& img, const Mask& mask, Rng&) {
  const double length = p[0];
  if (length <= 0.0) return {img, mask};
  const double theta = radians(p[1]);
  const double ux = std::cos(theta);
  const double uy = std::sin(theta);
  const int taps = static_cast<int>(std::ceil(length)) + 1;

  Image out(img.width(), img.height());
  for (int c = 0; c < Image::kChannels; ++c) {
    const auto src = img.channel(c);
    auto dst = out.channel(c);
    for (int y = 0; y < img.height(); ++y) {
      for (int x = 0; x < img.width(); ++x) {
        double acc = 0.0;
        for (int k = 0; k < taps; ++k) {
          const double t = -0.5 * length + length * k / (taps - 1);
          acc += sample_clamped(src, x + t * ux, y + t * uy);
        }
        dst(y, x) = static_cast<float>(acc / taps);
      }
    }
  }
  clamp01(out);
  return {std::move(out), mask};
}

Sample gaussian_noise(Params p, const Image& img, const Mask& mask, Rng& rng) {
  const double mean = p[0];
  const double sigma = p[1];
  if (mean == 0.0 && sigma == 0.0) return {img, mask};
  Image out = img;
  if (sigma > 0.0) {
    std::normal_distribution<double> normal(mean, sigma);
    float* v = out.pixels().data();
    for (Eigen::Index i = 0; i < out.pixels().size(); ++i) v[i] += static_cast<float>(normal(rng));
  } else {
    out.pixels() += static_cast<float>(mean);
  }
  clamp01(out);
  return {std::move(out), mask};
}

Sample impulse_noise(Params p, const Image& img, const Mask& mask, Rng& rng) {
  const double amount = p[0];
  const double salt_ratio = p[1];
  if (amount <= 0.0) return {img, mask};
  Image out = img;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (Eigen::Index i = 0; i < out.pixel_count(); ++i) {
    if (unit(rng) < amount) {
      out.pixels().row(i).setConstant(unit(rng) < salt_ratio ? 1.0f : 0.0f);
    }
  }
  return {std::move(out), mask};
}

Sample brightness(Params p, const Image& img, const Mask& mask, Rng&) {
  if (p[0] == 0.0) return {img, mask};
  Image out = img;
  out.pixels() += static_cast<float>(p[0]);
  clamp01(out);
  return {std::move(out), mask};
}

Sample contrast(Params p, const Image& img, const Mask& mask, Rng&) {
  const double factor = p[0];
  if (factor == 1.0 || img.empty()) return {img, mask};
  const double mid = luminance(img).template cast<double>().mean();
  Image out = img;
  out.pixels() = (mid + factor * (img.pixels().cast<double>() - mid)).cast<float>();
  clamp01(out);
  return {std::move(out), mask};
}

Sample fog(Params p, const Image& img, const Mask& mask, Rng& rng) {
  const double intensity = p[0];
  const double airlight = p[1];
  const double turbulence = p[2];
  if (intensity <= 0.0) return {img, mask};
  const Plane<float> noise = value_noise(img.width(), img.height(), 16, rng);
  const Plane<float> t =
      static_cast<float>(intensity) * (1.0f - static_cast<float>(turbulence) * noise);
  Image out = img;
  for (int c = 0; c < Image::kChannels; ++c) {
    auto ch = out.channel(c);
    ch = ch * (1.0f - t) + static_cast<float>(airlight) * t;
  }
  clamp01(out);
  return {std::move(out), mask};
}

// floor(expected) plus one more with probability frac(expected).
long random_count(double expected, Rng& rng) {
  const double whole = std::floor(expected);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  return static_cast<long>(whole) + (unit(rng) < expected - whole ? 1 : 0);
}

Sample rain(Params p, const Image& img, const Mask& mask, Rng& rng) {
  const double opaqueness = p[0];
  const int size = static_cast<int>(p[1]);
  const double density = p[2];
  const double blur = p[3];
  const double theta = radians(p[4]);
  const int length = static_cast<int>(p[5]);
  constexpr float kDropValue = 200.0f / 255.0f;

  const int w = img.width();
  const int h = img.height();
  const long drops = random_count(density * w * h, rng);
  Image out = img;
  if (drops > 0) {
    Plane<float> alpha = Plane<float>::Zero(h, w);
    std::uniform_real_distribution<double> ux(0.0, w);
    std::uniform_real_distribution<double> uy(-static_cast<double>(length), h);
    const double dx = std::sin(theta);
    const double dy = std::cos(theta);
    for (long d = 0; d < drops; ++d) {
      const double x0 = ux(rng);
      const double y0 = uy(rng);
      for (int t = 0; t <= length; ++t) {
        const int iy = static_cast<int>(std::floor(y0 + t * dy));
        if (iy < 0 || iy >= h) continue;
        const int ix = static_cast<int>(std::floor(x0 + t * dx));
        for (int k = 0; k < size; ++k) {
          const int px = ix + k - (size - 1) / 2;
          if (px >= 0 && px < w) alpha(iy, px) = 1.0f;
        }
      }
    }
    composite(out, alpha, kDropValue, static_cast<float>(opaqueness));
  }
  out = blur_image(out, blur);
  clamp01(out);
  return {std::move(out), mask};
}

Sample snow(Params p, const Image& img, const Mask& mask, Rng& rng) {
  const double density = p[0];
  const double radius = p[1] / 2.0;
  const double opacity = p[2];
  constexpr float kFlakeValue = 0.95f;

  const int w = img.width();
  const int h = img.height();
  const long flakes = random_count(density * w * h, rng);
  if (flakes == 0) return {img, mask};
  Plane<float> alpha = Plane<float>::Zero(h, w);
  std::uniform_real_distribution<double> ux(0.0, w);
  std::uniform_real_distribution<double> uy(0.0, h);
  const int reach = static_cast<int>(std::ceil(radius));
  for (long f = 0; f < flakes; ++f) {
    const double cx = ux(rng);
    const double cy = uy(rng);
    const int bx = static_cast<int>(std::floor(cx));
    const int by = static_cast<int>(std::floor(cy));
    for (int y = by - reach; y <= by + reach; ++y) {
      for (int x = bx - reach; x <= bx + reach; ++x) {
        if (x < 0 || y < 0 || x >= w || y >= h) continue;
        const double ddx = x + 0.5 - cx;
        const double ddy = y + 0.5 - cy;
        if (x == bx && y == by) {
          alpha(y, x) = 1.0f;
        } else if (ddx * ddx + ddy * ddy <= radius * radius) {
          alpha(y, x) = 1.0f;
        }
      }
    }
  }
  Image out = img;
  composite(out, alpha, kFlakeValue, static_cast<float>(opacity));
  clamp01(out);
  return {std::move(out), mask};
}

Sample affine(Params p, const Image& img, const Mask& mask, Rng&) {
  const double w = img.width();
  const double h = img.height();
  const Eigen::Vector2d shift(p[0], p[1]);
  const double theta = radians(p[2]);
  const double scale = p[3];
  const double shear = p[4];

  Eigen::Matrix2d rotation;
  rotation << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
  Eigen::Matrix2d shearing;
  shearing << 1.0, shear, 0.0, 1.0;
  const Eigen::Matrix2d forward = rotation * shearing * scale;
  const Eigen::Matrix2d backward = forward.inverse();
  const Eigen::Vector2d center(w / 2.0, h / 2.0);

  // src = center + backward * (dst - center - shift)
  Affine inverse;
  inverse.leftCols<2>() = backward;
  inverse.col(2) = center - backward * (center + shift);
  return warp_affine(img, mask, inverse);
}

Sample zoom(Params p, const Image& img, const Mask& mask, Rng&) {
  const double w = img.width();
  const double h = img.height();
  const Eigen::Vector2d focus(p[0] * w, p[1] * h);
  const double scale = p[2];
  const Eigen::Vector2d center(w / 2.0, h / 2.0);

  // src = focus + (dst - center) / scale
  Affine inverse;
  inverse.leftCols<2>() = Eigen::Matrix2d::Identity() / scale;
  inverse.col(2) = focus - center / scale;
  return warp_affine(img, mask, inverse);
}

Sample padding(Params p, const Image& img, const Mask& mask, Rng&) {
  const double w = img.width();
  const double h = img.height();
  const double px = p[0];
  const double py = p[1];

  // Content is shrunk into [px*w, (1-px)*w] x [py*h, (1-py)*h].
  Affine inverse = Affine::Zero();
  inverse(0, 0) = 1.0 / (1.0 - 2.0 * px);
  inverse(1, 1) = 1.0 / (1.0 - 2.0 * py);
  inverse(0, 2) = -px * w / (1.0 - 2.0 * px);
  inverse(1, 2) = -py * h / (1.0 - 2.0 * py);
  return warp_affine(img, mask, inverse);
}

using Impl = Sample (*)(Params, const Image&, const Mask&, Rng&);

const std::map<std::string, Impl, std::less<>>& implementations() {
  static const std::map<std::string, Impl, std::less<>> table{
      {"gaussian_blur", &gaussian_blur}, {"motion_blur", &motion_blur},
      {"gaussian_noise", &gaussian_noise}, {"impulse_noise", &impulse_noise},
      {"brightness", &brightness},       {"contrast", &contrast},
      {"fog", &fog},                     {"rain", &rain},
      {"snow", &snow},                   {"affine", &affine},
      {"zoom", &zoom},                   {"padding", &padding},
  };
  return table;
}

std::string_view kind_name(ParamKind kind) {
  return kind == ParamKind::integer ? "integer" : "continuous";
}

}  // namespace

// ---------------------------------------------------------------------------

Registry::Registry(std::vector<PerturbationSpec> specs, std::set<std::string> disabled)
    : specs_(std::move(specs)), disabled_(std::move(disabled)) {
  std::set<std::string> names;
  for (const auto& spec : specs_) {
    if (!names.insert(spec.name).second) {
      throw std::invalid_argument("duplicate perturbation name: " + spec.name);
    }
    for (const auto& param : spec.params) {
      if (!(param.hard_min <= param.neutral && param.neutral <= param.hard_max)) {
        throw std::invalid_argument("parameter " + spec.name + "." + param.name +
                                    " has neutral value outside its hard range");
      }
    }
  }
  for (const auto& name : disabled_) {
    if (!names.contains(name)) throw UnknownPerturbation("cannot disable unknown perturbation: " + name);
  }
}

std::size_t Registry::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < specs_.size(); ++i) {
    if (specs_[i].name == name) return i;
  }
  throw UnknownPerturbation("unknown perturbation: " + name);
}

bool Registry::contains(const std::string& name) const {
  return std::any_of(specs_.begin(), specs_.end(), [&](const auto& s) { return s.name == name; });
}

Registry Registry::with_disabled(const std::set<std::string>& names) const {
  std::set<std::string> all = disabled_;
  all.insert(names.begin(), names.end());
  return Registry(specs_, std::move(all));
}

Eigen::Index Registry::param_count() const {
  Eigen::Index n = 0;
  for (const auto& spec : specs_) n += spec.dim();
  return n;
}

// Only one "strength" parameter per perturbation is neutral at zero effect;
// shape parameters sit at their most severe value, so calibrating the
// strength parameter bounds the worst shape.
const Registry& builtin_registry() {
  static const Registry registry({
      {"gaussian_blur", {continuous("radius", 0.0, 0.0, 4.0)}, false},
      {"motion_blur",
       {continuous("length", 0.0, 0.0, 15.0), continuous("angle", 0.0, 0.0, 180.0)},
       false},
      {"gaussian_noise",
       {continuous("mean", 0.0, -0.05, 0.05), continuous("sigma", 0.0, 0.0, 0.3)},
       false},
      {"impulse_noise",
       {continuous("amount", 0.0, 0.0, 0.2), continuous("salt_ratio", 0.5, 0.0, 1.0)},
       false},
      {"brightness", {continuous("delta", 0.0, -0.5, 0.5)}, false},
      {"contrast", {continuous("factor", 1.0, 0.0, 2.0)}, false},
      {"fog",
       {continuous("intensity", 0.0, 0.0, 1.0), continuous("airlight", 1.0, 0.85, 1.0),
        continuous("turbulence", 0.0, 0.0, 1.0)},
       false},
      {"rain",
       {continuous("opaqueness", 1.0, 0.1, 1.0), integer("size", 3.0, 1.0, 3.0),
        continuous("density", 0.0, 0.0, 0.02), continuous("blur", 0.0, 0.0, 2.0),
        continuous("angle", 0.0, -45.0, 45.0), integer("speed", 30.0, 2.0, 30.0)},
       false},
      {"snow",
       {continuous("density", 0.0, 0.0, 0.05), integer("flake_size", 4.0, 1.0, 4.0),
        continuous("opacity", 1.0, 0.1, 1.0)},
       false},
      {"affine",
       {continuous("dx", 0.0, -16.0, 16.0), continuous("dy", 0.0, -16.0, 16.0),
        continuous("angle", 0.0, -30.0, 30.0), continuous("scale", 1.0, 0.6, 1.4),
        continuous("shear", 0.0, -0.3, 0.3)},
       true},
      {"zoom",
       {continuous("cx", 0.5, 0.25, 0.75), continuous("cy", 0.5, 0.25, 0.75),
        continuous("scale", 1.0, 1.0, 2.5)},
       true},
      {"padding", {continuous("pad_x", 0.0, 0.0, 0.3), continuous("pad_y", 0.0, 0.0, 0.3)}, true},
  });
  return registry;
}

ParamVector neutral_params(const PerturbationSpec& spec) {
  ParamVector v(spec.dim());
  for (Eigen::Index i = 0; i < spec.dim(); ++i) v(i) = spec.params[i].neutral;
  return v;
}

Sample apply(const PerturbationSpec& spec, const ParamVector& params, const Image& img,
             const Mask& mask, std::uint64_t seed) {
  const auto& table = implementations();
  const auto it = table.find(spec.name);
  if (it == table.end()) throw UnknownPerturbation("no implementation for perturbation: " + spec.name);
  if (params.size() != spec.dim()) {
    throw std::invalid_argument(spec.name + " expects " + std::to_string(spec.dim()) +
                                " parameters, got " + std::to_string(params.size()));
  }
  if (!same_shape(img, mask)) throw DimensionError(spec.name + ": image and mask dimensions differ");

  std::vector<double> values(params.size());
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const ParamSpec& ps = spec.params[i];
    const double v = params(i);
    if (!std::isfinite(v) || v < ps.hard_min || v > ps.hard_max) {
      throw std::out_of_range(spec.name + "." + ps.name + " = " + std::to_string(v) +
                              " outside [" + std::to_string(ps.hard_min) + ", " +
                              std::to_string(ps.hard_max) + "]");
    }
    values[i] = ps.kind == ParamKind::integer ? std::round(v) : v;
  }

  Rng rng(seed);
  return it->second(values, img, mask, rng);
}

nlohmann::ordered_json registry_to_json(const Registry& registry) {
  nlohmann::ordered_json doc;
  doc["perturbations"] = nlohmann::ordered_json::array();
  for (const auto& spec : registry.specs()) {
    nlohmann::ordered_json entry;
    entry["name"] = spec.name;
    entry["geometric"] = spec.geometric;
    entry["params"] = nlohmann::ordered_json::array();
    for (const auto& p : spec.params) {
      entry["params"].push_back({{"name", p.name},
                                 {"kind", kind_name(p.kind)},
                                 {"neutral", p.neutral},
                                 {"hard_min", p.hard_min},
                                 {"hard_max", p.hard_max}});
    }
    doc["perturbations"].push_back(std::move(entry));
  }
  doc["disabled"] = nlohmann::ordered_json::array();
  for (const auto& name : registry.disabled()) doc["disabled"].push_back(name);
  return doc;
}

Registry registry_from_json(const nlohmann::ordered_json& doc) {
  const Registry& builtin = builtin_registry();
  std::vector<PerturbationSpec> specs;
  for (const auto& entry : doc.at("perturbations")) {
    PerturbationSpec spec;
    spec.name = entry.at("name").get<std::string>();
    const PerturbationSpec& reference = builtin.spec(spec.name);
    spec.geometric = entry.value("geometric", reference.geometric);
    if (spec.geometric != reference.geometric) {
      throw std::invalid_argument(spec.name + ": geometric flag differs from the implementation");
    }
    const auto& params = entry.at("params");
    if (params.size() != reference.params.size()) {
      throw std::invalid_argument(spec.name + ": parameter schema differs from the implementation");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      const ParamSpec& ref = reference.params[i];
      ParamSpec p;
      p.name = params[i].at("name").get<std::string>();
      p.kind = params[i].value("kind", std::string(kind_name(ref.kind))) == "integer"
                   ? ParamKind::integer
                   : ParamKind::continuous;
      p.neutral = params[i].value("neutral", ref.neutral);
      p.hard_min = params[i].value("hard_min", ref.hard_min);
      p.hard_max = params[i].value("hard_max", ref.hard_max);
      if (p.name != ref.name || p.kind != ref.kind || p.neutral != ref.neutral) {
        throw std::invalid_argument(spec.name + "." + p.name +
                                    ": name, kind and neutral value must match the implementation");
      }
      if (p.hard_min < ref.hard_min || p.hard_max > ref.hard_max) {
        throw std::invalid_argument(spec.name + "." + p.name + ": hard range may only be narrowed");
      }
      spec.params.push_back(std::move(p));
    }
    specs.push_back(std::move(spec));
  }
  if (specs.size() != Registry::kSize) {
    throw std::invalid_argument("registry must list exactly " + std::to_string(Registry::kSize) +
                                " perturbations");
  }
  std::set<std::string> disabled;
  if (doc.contains("disabled")) {
    for (const auto& name : doc.at("disabled")) disabled.insert(name.get<std::string>());
  }
  return Registry(std::move(specs), std::move(disabled));
}

}  // namespace segfalsify
