#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace segfalsify {

/// Row-major 2-D array, one element per pixel (height rows, width columns).
template <typename Scalar>
using Plane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// One row per pixel (row-major pixel order), one column per channel. The
/// storage is therefore exactly interleaved RGB.
template <typename Scalar>
using PixelArray = Eigen::Array<Scalar, Eigen::Dynamic, 3, Eigen::RowMajor>;

using ChannelStride = Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using ChannelMap = Eigen::Map<Plane<Scalar>, 0, ChannelStride>;
template <typename Scalar>
using ConstChannelMap = Eigen::Map<const Plane<Scalar>, 0, ChannelStride>;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// RGB image with values in [0,1].
template <typename Scalar>
class BasicImage {
 public:
  static constexpr int kChannels = 3;

  BasicImage() = default;
  BasicImage(int width, int height, Scalar fill = Scalar(0))
      : width_(width), height_(height),
        pixels_(PixelArray<Scalar>::Constant(checked_count(width, height), kChannels, fill)) {}
  BasicImage(int width, int height, PixelArray<Scalar> pixels)
      : width_(width), height_(height), pixels_(std::move(pixels)) {
    if (pixels_.rows() != checked_count(width, height)) {
      throw DimensionError("image data length does not match " + std::to_string(width) +
                           "x" + std::to_string(height));
    }
  }

  int width() const { return width_; }
  int height() const { return height_; }
  Eigen::Index pixel_count() const { return pixels_.rows(); }
  bool empty() const { return pixels_.rows() == 0; }

  const PixelArray<Scalar>& pixels() const { return pixels_; }
  PixelArray<Scalar>& pixels() { return pixels_; }

  Scalar& at(int x, int y, int c) { return pixels_(Eigen::Index(y) * width_ + x, c); }
  Scalar at(int x, int y, int c) const { return pixels_(Eigen::Index(y) * width_ + x, c); }

  /// Strided height x width view of one colour channel.
  ChannelMap<Scalar> channel(int c) {
    return ChannelMap<Scalar>(pixels_.data() + c, height_, width_,
                              ChannelStride(Eigen::Index(kChannels) * width_, kChannels));
  }
  ConstChannelMap<Scalar> channel(int c) const {
    return ConstChannelMap<Scalar>(pixels_.data() + c, height_, width_,
                                   ChannelStride(Eigen::Index(kChannels) * width_, kChannels));
  }

  std::span<const Scalar> data() const {
    return {pixels_.data(), static_cast<std::size_t>(pixels_.size())};
  }

  bool operator==(const BasicImage& other) const {
    return width_ == other.width_ && height_ == other.height_ &&
           (pixels_ == other.pixels_).all();
  }

 private:
  static Eigen::Index checked_count(int width, int height) {
    if (width < 0 || height < 0) throw DimensionError("negative image dimension");
    return Eigen::Index(width) * height;
  }

  int width_ = 0;
  int height_ = 0;
  PixelArray<Scalar> pixels_;
};

using Image = BasicImage<float>;

/// Binary label mask, height x width.
using Mask = Plane<bool>;

/// Per-pixel foreground probability, height x width.
template <typename Scalar>
using BasicProbMap = Plane<Scalar>;
using ProbMap = BasicProbMap<float>;

template <typename A, typename B>
bool same_shape(const A& a, const B& b) {
  return a.rows() == b.rows() && a.cols() == b.cols();
}

inline bool same_shape(const Image& img, const Mask& mask) {
  return mask.rows() == img.height() && mask.cols() == img.width();
}

/// Rec. 601 luma of every pixel as a height x width plane.
template <typename Scalar>
Plane<Scalar> luminance(const BasicImage<Scalar>& img) {
  const Eigen::Matrix<Scalar, 3, 1> weights(Scalar(0.299), Scalar(0.587), Scalar(0.114));
  Eigen::Array<Scalar, Eigen::Dynamic, 1> luma = (img.pixels().matrix() * weights).array();
  return Eigen::Map<Plane<Scalar>>(luma.data(), img.height(), img.width());
}

/// Throws unless every channel value is finite and within [0,1].
void validate_image(const Image& img);

Image image_from_rgb8(int width, int height, std::span<const std::uint8_t> rgb);
std::vector<std::uint8_t> image_to_rgb8(const Image& img);

}  // namespace segfalsify
