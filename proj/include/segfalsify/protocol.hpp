#pragma once

#include "segfalsify/image.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace segfalsify::protocol {

// Frames exchanged with a model process over its stdin/stdout. All integers
// are little-endian.
//
//   handshake  "FALH" | u16 version                       (both directions)
//   request    "FALQ" | u32 width | u32 height | u8 channels (=3) | RGB8 pixels
//   response   "FALR" | u32 width | u32 height | f32 probabilities, row-major

inline constexpr std::array<std::uint8_t, 4> kHandshakeMagic{'F', 'A', 'L', 'H'};
inline constexpr std::array<std::uint8_t, 4> kRequestMagic{'F', 'A', 'L', 'Q'};
inline constexpr std::array<std::uint8_t, 4> kResponseMagic{'F', 'A', 'L', 'R'};
inline constexpr std::uint16_t kVersion = 1;

inline constexpr std::size_t kHandshakeSize = 6;
inline constexpr std::size_t kRequestHeaderSize = 13;
inline constexpr std::size_t kResponseHeaderSize = 12;

class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::uint8_t> encode_handshake(std::uint16_t version = kVersion);
/// Returns the peer's version.
std::uint16_t decode_handshake(std::span<const std::uint8_t> frame);

std::vector<std::uint8_t> encode_request(const Image& img);
Image decode_request(std::span<const std::uint8_t> frame);

struct ResponseHeader {
  std::uint32_t width = 0;
  std::uint32_t height = 0;

  std::size_t payload_size() const { return std::size_t(width) * height * sizeof(float); }
};

std::vector<std::uint8_t> encode_response(const ProbMap& map);
ResponseHeader decode_response_header(std::span<const std::uint8_t> header);
/// Payload must hold width*height floats; each must be finite and in [0,1].
ProbMap decode_response_payload(const ResponseHeader& header, std::span<const std::uint8_t> payload);

}  // namespace segfalsify::protocol
