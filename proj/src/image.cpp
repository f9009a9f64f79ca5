#include "segfalsify/image.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace segfalsify {

void validate_image(const Image& img) {
  const auto& px = img.pixels();
  if (!px.allFinite() || (px < 0.0f).any() || (px > 1.0f).any()) {
    throw std::invalid_argument("image values must lie in [0,1]");
  }
}

Image image_from_rgb8(int width, int height, std::span<const std::uint8_t> rgb) {
  if (rgb.size() != static_cast<std::size_t>(width) * height * Image::kChannels) {
    throw DimensionError("RGB8 buffer length does not match image dimensions");
  }
  Image img(width, height);
  float* out = img.pixels().data();
  for (std::size_t i = 0; i < rgb.size(); ++i) out[i] = static_cast<float>(rgb[i]) / 255.0f;
  return img;
}

std::vector<std::uint8_t> image_to_rgb8(const Image& img) {
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(img.pixels().size()));
  const float* in = img.pixels().data();
  for (std::size_t i = 0; i < rgb.size(); ++i) {
    const float v = std::clamp(in[i], 0.0f, 1.0f);
    rgb[i] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
  }
  return rgb;
}

}  // namespace segfalsify

#include "segfalsify/texture.hpp"

namespace segfalsify {

Plane<float> value_noise(int width, int height, int cell, std::mt19937_64& rng) {
  const int gx = width / cell + 2;
  const int gy = height / cell + 2;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::ArrayXXd lattice(gy, gx);
  for (int y = 0; y < gy; ++y) {
    for (int x = 0; x < gx; ++x) lattice(y, x) = unit(rng);
  }
  auto fade = [](double t) { return t * t * (3.0 - 2.0 * t); };
  Plane<float> out(height, width);
  for (int y = 0; y < height; ++y) {
    const double fy = static_cast<double>(y) / cell;
    const int y0 = static_cast<int>(fy);
    const double ty = fade(fy - y0);
    for (int x = 0; x < width; ++x) {
      const double fx = static_cast<double>(x) / cell;
      const int x0 = static_cast<int>(fx);
      const double tx = fade(fx - x0);
      const double top = (1.0 - tx) * lattice(y0, x0) + tx * lattice(y0, x0 + 1);
      const double bottom = (1.0 - tx) * lattice(y0 + 1, x0) + tx * lattice(y0 + 1, x0 + 1);
      out(y, x) = static_cast<float>((1.0 - ty) * top + ty * bottom);
    }
  }
  return out;
}

}  // namespace segfalsify
