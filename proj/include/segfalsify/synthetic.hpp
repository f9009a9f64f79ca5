#pragma once

#include "segfalsify/io.hpp"
#include "segfalsify/perturb.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace segfalsify {

/// Scene families for the synthetic track dataset.
enum class SceneStyle { standard, dark, bright, textured };

SceneStyle parse_scene_style(const std::string& name);
std::string to_string(SceneStyle style);

struct SyntheticOptions {
  int width = 96;
  int height = 64;
  SceneStyle style = SceneStyle::standard;
};

/// A dim, softly textured background crossed by one bright band of width
/// 6-10 px that follows a random quadratic curve; the mask is the band.
/// Pixel values are quantised to multiples of 1/255 so that a PPM round trip
/// is lossless.
Sample make_synthetic_sample(std::uint64_t seed, const SyntheticOptions& options = {});

std::vector<Sample> make_synthetic_dataset(int n, std::uint64_t seed, const SyntheticOptions& options = {});

/// Writes `n` samples as img_NNNN.ppm / img_NNNN.rle plus manifest.csv into
/// `dir`; returns the manifest path. "mixed" cycles through all styles.
std::string write_synthetic_dataset(const std::string& dir, int n, std::uint64_t seed,
                                    const std::string& style = "standard");

}  // namespace segfalsify
