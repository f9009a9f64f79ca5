#pragma once

#include "segfalsify/image.hpp"
#include "segfalsify/perturb.hpp"

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace segfalsify {

/// Malformed input file; the message names the file and byte offset.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& file, std::size_t offset, const std::string& what)
      : std::runtime_error(file + ": byte " + std::to_string(offset) + ": " + what),
        file_(file), offset_(offset) {}

  const std::string& file() const { return file_; }
  std::size_t offset() const { return offset_; }

 private:
  std::string file_;
  std::size_t offset_;
};

// Binary PPM (P6, maxval 255).
Image decode_ppm(std::span<const std::uint8_t> bytes, const std::string& name = "<memory>");
std::vector<std::uint8_t> encode_ppm(const Image& img);
Image read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Image& img);

// Mask run-length text: "width height" then one "start length" line per run
// of true pixels (row-major flat indices, ascending, non-overlapping).
Mask decode_rle(std::string_view text, const std::string& name = "<memory>");
std::string encode_rle(const Mask& mask);
Mask read_rle(const std::string& path);
void write_rle(const std::string& path, const Mask& mask);

struct ManifestEntry {
  std::string id;
  std::string image_path;  // resolved against the manifest's directory
  std::string mask_path;
};

/// CSV with header `image_id,image_path,mask_path`.
std::vector<ManifestEntry> read_manifest(const std::string& path);
void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);

struct Dataset {
  std::vector<std::string> ids;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  std::size_t index_of(const std::string& id) const;
};

Dataset load_dataset(const std::string& manifest_path);

}  // namespace segfalsify
