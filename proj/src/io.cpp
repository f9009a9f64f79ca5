#include "segfalsify/io.hpp"

#include <cctype>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

namespace fs = std::filesystem;

namespace segfalsify {

namespace {

std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// Tokenizer over a byte buffer that reports offsets.
class Cursor {
 public:
  Cursor(std::span<const std::uint8_t> bytes, const std::string& name) : bytes_(bytes), name_(name) {}

  std::size_t offset() const { return pos_; }
  bool at_end() const { return pos_ >= bytes_.size(); }

  void skip_space(bool comments) {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (comments && bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  std::uint64_t number(const char* what, bool comments = false) {
    skip_space(comments);
    const std::size_t start = pos_;
    std::uint64_t value = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_] - '0');
      if (value > (1ULL << 40)) fail(start, std::string(what) + " is too large");
      ++pos_;
    }
    if (pos_ == start) fail(start, std::string("expected ") + what);
    return value;
  }

  std::uint8_t byte() { return bytes_[pos_++]; }
  void advance(std::size_t n) { pos_ += n; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::span<const std::uint8_t> rest() const { return bytes_.subspan(pos_); }

  [[noreturn]] void fail(std::size_t at, const std::string& what) const {
    throw FormatError(name_, at, what);
  }

 private:
  std::span<const std::uint8_t> bytes_;
  const std::string& name_;
  std::size_t pos_ = 0;
};

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace

Image decode_ppm(std::span<const std::uint8_t> bytes, const std::string& name) {
  Cursor cur(bytes, name);
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') cur.fail(0, "missing P6 magic");
  cur.advance(2);
  const std::size_t width_at = cur.offset();
  const auto width = cur.number("width", true);
  const auto height = cur.number("height", true);
  const std::size_t maxval_at = cur.offset();
  const auto maxval = cur.number("maxval", true);
  if (width == 0 || height == 0) cur.fail(width_at, "zero image dimension");
  if (width > (1u << 16) || height > (1u << 16)) cur.fail(width_at, "image dimension too large");
  if (maxval != 255) cur.fail(maxval_at, "maxval must be 255, got " + std::to_string(maxval));
  if (cur.at_end() || !std::isspace(cur.byte())) cur.fail(cur.offset(), "expected whitespace after maxval");
  const std::size_t need = width * height * 3;
  if (cur.remaining() < need) {
    cur.fail(cur.offset(), "truncated pixel data: need " + std::to_string(need) + " bytes, have " +
                               std::to_string(cur.remaining()));
  }
  return image_from_rgb8(static_cast<int>(width), static_cast<int>(height), cur.rest().first(need));
}

std::vector<std::uint8_t> encode_ppm(const Image& img) {
  const std::string header =
      "P6\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  const auto rgb = image_to_rgb8(img);
  out.insert(out.end(), rgb.begin(), rgb.end());
  return out;
}

Image read_ppm(const std::string& path) {
  const auto bytes = read_bytes(path);
  return decode_ppm(bytes, path);
}

void write_ppm(const std::string& path, const Image& img) { write_bytes(path, encode_ppm(img)); }

Mask decode_rle(std::string_view text, const std::string& name) {
  const std::span<const std::uint8_t> bytes(reinterpret_cast<const std::uint8_t*>(text.data()),
                                            text.size());
  Cursor cur(bytes, name);
  const std::size_t dims_at = cur.offset();
  const auto width = cur.number("width");
  const auto height = cur.number("height");
  if (width > (1u << 16) || height > (1u << 16)) cur.fail(dims_at, "mask dimension too large");
  const std::uint64_t total = width * height;
  Mask mask = Mask::Constant(static_cast<Eigen::Index>(height), static_cast<Eigen::Index>(width), false);
  std::uint64_t next_free = 0;
  for (;;) {
    cur.skip_space(false);
    if (cur.at_end()) break;
    const std::size_t run_at = cur.offset();
    const auto start = cur.number("run start");
    const auto length = cur.number("run length");
    if (length == 0) cur.fail(run_at, "zero-length run");
    if (start < next_free) cur.fail(run_at, "runs overlap or are not ascending");
    if (start + length > total) cur.fail(run_at, "run exceeds mask of " + std::to_string(total) + " pixels");
    for (std::uint64_t i = start; i < start + length; ++i) mask.data()[i] = true;
    next_free = start + length;
  }
  return mask;
}

std::string encode_rle(const Mask& mask) {
  std::string out = std::to_string(mask.cols()) + " " + std::to_string(mask.rows()) + "\n";
  const Eigen::Index n = mask.size();
  Eigen::Index i = 0;
  while (i < n) {
    if (!mask.data()[i]) {
      ++i;
      continue;
    }
    const Eigen::Index start = i;
    while (i < n && mask.data()[i]) ++i;
    out += std::to_string(start) + " " + std::to_string(i - start) + "\n";
  }
  return out;
}

Mask read_rle(const std::string& path) {
  const auto bytes = read_bytes(path);
  return decode_rle(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()), path);
}

void write_rle(const std::string& path, const Mask& mask) {
  const std::string text = encode_rle(mask);
  write_bytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path);
  const fs::path base = fs::path(path).parent_path();
  std::string line;
  std::size_t offset = 0;
  auto next = [&]() {
    if (!std::getline(in, line)) return false;
    offset += line.size() + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };
  if (!next() || line != "image_id,image_path,mask_path") {
    throw FormatError(path, 0, "manifest header must be image_id,image_path,mask_path");
  }
  std::vector<ManifestEntry> entries;
  std::set<std::string> ids;
  for (std::size_t row_at = offset; next(); row_at = offset) {
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != 3 || fields[0].empty()) throw FormatError(path, row_at, "expected 3 fields");
    if (!ids.insert(fields[0]).second) throw FormatError(path, row_at, "duplicate image id " + fields[0]);
    auto resolve = [&](const std::string& p) {
      const fs::path fp(p);
      return (fp.is_absolute() ? fp : base / fp).string();
    };
    entries.push_back({fields[0], resolve(fields[1]), resolve(fields[2])});
  }
  return entries;
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest " + path);
  out << "image_id,image_path,mask_path\n";
  for (const auto& e : entries) out << e.id << ',' << e.image_path << ',' << e.mask_path << '\n';
}

std::size_t Dataset::index_of(const std::string& id) const {
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] == id) return i;
  }
  throw std::out_of_range("unknown image id " + id);
}

Dataset load_dataset(const std::string& manifest_path) {
  Dataset ds;
  for (const auto& entry : read_manifest(manifest_path)) {
    Image img = read_ppm(entry.image_path);
    Mask mask = read_rle(entry.mask_path);
    if (!same_shape(img, mask)) {
      throw DimensionError(entry.id + ": mask " + std::to_string(mask.cols()) + "x" +
                           std::to_string(mask.rows()) + " does not match image " +
                           std::to_string(img.width()) + "x" + std::to_string(img.height()));
    }
    ds.ids.push_back(entry.id);
    ds.samples.push_back({std::move(img), std::move(mask)});
  }
  return ds;
}

}  // namespace segfalsify
