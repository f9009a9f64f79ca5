#include "segfalsify/protocol.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <string>

namespace segfalsify::protocol {

namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b) {
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
         std::uint32_t(b[3]) << 24;
}

template <std::size_t N>
void expect_magic(std::span<const std::uint8_t> frame, const std::array<std::uint8_t, N>& magic,
                  const char* what) {
  if (frame.size() < N || !std::equal(magic.begin(), magic.end(), frame.begin())) {
    throw ProtocolError(std::string("bad ") + what + " magic");
  }
}

}  // namespace

std::vector<std::uint8_t> encode_handshake(std::uint16_t version) {
  std::vector<std::uint8_t> out(kHandshakeMagic.begin(), kHandshakeMagic.end());
  put_u16(out, version);
  return out;
}

std::uint16_t decode_handshake(std::span<const std::uint8_t> frame) {
  if (frame.size() != kHandshakeSize) throw ProtocolError("handshake frame has wrong size");
  expect_magic(frame, kHandshakeMagic, "handshake");
  return static_cast<std::uint16_t>(frame[4] | frame[5] << 8);
}

std::vector<std::uint8_t> encode_request(const Image& img) {
  std::vector<std::uint8_t> out(kRequestMagic.begin(), kRequestMagic.end());
  put_u32(out, static_cast<std::uint32_t>(img.width()));
  put_u32(out, static_cast<std::uint32_t>(img.height()));
  out.push_back(Image::kChannels);
  const auto rgb = image_to_rgb8(img);
  out.insert(out.end(), rgb.begin(), rgb.end());
  return out;
}

Image decode_request(std::span<const std::uint8_t> frame) {
  if (frame.size() < kRequestHeaderSize) throw ProtocolError("truncated request header");
  expect_magic(frame, kRequestMagic, "request");
  const auto width = get_u32(frame.subspan(4));
  const auto height = get_u32(frame.subspan(8));
  if (frame[12] != Image::kChannels) throw ProtocolError("request must carry 3 channels");
  const std::size_t need = std::size_t(width) * height * Image::kChannels;
  if (frame.size() != kRequestHeaderSize + need) throw ProtocolError("request payload has wrong size");
  return image_from_rgb8(static_cast<int>(width), static_cast<int>(height),
                         frame.subspan(kRequestHeaderSize));
}

std::vector<std::uint8_t> encode_response(const ProbMap& map) {
  std::vector<std::uint8_t> out(kResponseMagic.begin(), kResponseMagic.end());
  put_u32(out, static_cast<std::uint32_t>(map.cols()));
  put_u32(out, static_cast<std::uint32_t>(map.rows()));
  out.reserve(out.size() + map.size() * sizeof(float));
  for (Eigen::Index i = 0; i < map.size(); ++i) {
    put_u32(out, std::bit_cast<std::uint32_t>(map.data()[i]));
  }
  return out;
}

ResponseHeader decode_response_header(std::span<const std::uint8_t> header) {
  if (header.size() != kResponseHeaderSize) throw ProtocolError("response header has wrong size");
  expect_magic(header, kResponseMagic, "response");
  return {get_u32(header.subspan(4)), get_u32(header.subspan(8))};
}

ProbMap decode_response_payload(const ResponseHeader& header, std::span<const std::uint8_t> payload) {
  if (payload.size() != header.payload_size()) throw ProtocolError("response payload has wrong size");
  ProbMap map(static_cast<Eigen::Index>(header.height), static_cast<Eigen::Index>(header.width));
  for (Eigen::Index i = 0; i < map.size(); ++i) {
    const float v = std::bit_cast<float>(get_u32(payload.subspan(4 * static_cast<std::size_t>(i))));
    if (!std::isfinite(v) || v < 0.0f || v > 1.0f) {
      throw ProtocolError("response value " + std::to_string(v) + " at pixel " + std::to_string(i) +
                          " is outside [0,1]");
    }
    map.data()[i] = v;
  }
  return map;
}

}  // namespace segfalsify::protocol
