#pragma once

#include "segfalsify/image.hpp"

#include <random>

namespace segfalsify {

/// Smooth lattice noise in [0,1]: uniform values on a grid with `cell`
/// pixel spacing, interpolated with a smoothstep fade.
Plane<float> value_noise(int width, int height, int cell, std::mt19937_64& rng);

}  // namespace segfalsify
