#pragma once

// Message framing. Wire layout (little-endian):
//   u32 length   payload size in bytes
//   u32 tag
//   u64 epoch    sender's logical (Lamport) clock at send
//   payload      f32 values (f64 when the transport runs in double wire mode)

#include <array>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "gdml/error.hpp"

namespace gdml {

inline constexpr std::size_t kFrameHeaderBytes = 16;

enum class Tag : std::uint32_t {
  Loss = 1,
  Grad = 2,
  Stop = 3,
  HvRequest = 4,
  Hv = 5,
  Direction = 6,
  LineSearchTrial = 7,
  LineSearchDelta = 8,
  Step = 9,
  Copy = 10,
  User = 100,
};

inline std::string to_string(Tag t) {
  switch (t) {
    case Tag::Loss: return "loss";
    case Tag::Grad: return "grad";
    case Tag::Stop: return "stop";
    case Tag::HvRequest: return "hv-request";
    case Tag::Hv: return "hv";
    case Tag::Direction: return "direction";
    case Tag::LineSearchTrial: return "ls-trial";
    case Tag::LineSearchDelta: return "ls-delta";
    case Tag::Step: return "step";
    case Tag::Copy: return "copy";
    case Tag::User: return "user";
  }
  return "tag" + std::to_string(static_cast<std::uint32_t>(t));
}

enum class WirePrecision { F32, F64 };

inline std::size_t bytes_per_element(WirePrecision p) { return p == WirePrecision::F32 ? 4 : 8; }

inline std::uint64_t frame_bytes(std::size_t elements, WirePrecision p) {
  return kFrameHeaderBytes + elements * bytes_per_element(p);
}

// Rounds every value to what the receiver will decode.
inline std::vector<double> quantize(std::span<const double> v, WirePrecision p) {
  std::vector<double> out(v.begin(), v.end());
  if (p == WirePrecision::F32)
    for (double& x : out) x = static_cast<double>(static_cast<float>(x));
  return out;
}

inline double quantize(double x, WirePrecision p) {
  return p == WirePrecision::F32 ? static_cast<double>(static_cast<float>(x)) : x;
}

struct Frame {
  Tag tag = Tag::User;
  std::uint64_t epoch = 0;
  std::vector<double> payload;  // already quantized to wire precision
  double depart_time = 0.0;     // simulated transport only; never on the wire
};

namespace wire {

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<unsigned char>(v >> (8 * k)));
}
inline void put_u64(std::vector<unsigned char>& out, std::uint64_t v) {
  for (int k = 0; k < 8; ++k) out.push_back(static_cast<unsigned char>(v >> (8 * k)));
}
inline std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(p[k]) << (8 * k);
  return v;
}
inline std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(p[k]) << (8 * k);
  return v;
}

}  // namespace wire

inline std::vector<unsigned char> encode_frame(const Frame& f, WirePrecision p) {
  std::vector<unsigned char> out;
  const std::size_t payload_bytes = f.payload.size() * bytes_per_element(p);
  out.reserve(kFrameHeaderBytes + payload_bytes);
  wire::put_u32(out, static_cast<std::uint32_t>(payload_bytes));
  wire::put_u32(out, static_cast<std::uint32_t>(f.tag));
  wire::put_u64(out, f.epoch);
  for (double x : f.payload) {
    if (p == WirePrecision::F32) {
      float v = static_cast<float>(x);
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      wire::put_u32(out, bits);
    } else {
      std::uint64_t bits;
      std::memcpy(&bits, &x, 8);
      wire::put_u64(out, bits);
    }
  }
  return out;
}

struct FrameHeader {
  std::uint32_t length = 0;
  Tag tag = Tag::User;
  std::uint64_t epoch = 0;
};

inline FrameHeader decode_header(std::span<const unsigned char, kFrameHeaderBytes> h) {
  return {wire::get_u32(h.data()), static_cast<Tag>(wire::get_u32(h.data() + 4)), wire::get_u64(h.data() + 8)};
}

inline std::vector<double> decode_payload(std::span<const unsigned char> bytes, WirePrecision p) {
  const std::size_t w = bytes_per_element(p);
  if (bytes.size() % w != 0) throw TransportError("frame payload length is not a multiple of the element size");
  std::vector<double> out(bytes.size() / w);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (p == WirePrecision::F32) {
      std::uint32_t bits = wire::get_u32(bytes.data() + 4 * i);
      float v;
      std::memcpy(&v, &bits, 4);
      out[i] = v;
    } else {
      std::uint64_t bits = wire::get_u64(bytes.data() + 8 * i);
      std::memcpy(&out[i], &bits, 8);
    }
  }
  return out;
}

}  // namespace gdml
