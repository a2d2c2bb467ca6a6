#pragma once

#include <cstdint>
#include <cstring>
#include <string>

#include "aim/common.hpp"

// Little-endian byte packing shared by the dataset and checkpoint formats.
namespace aim::serial {

inline void put_u16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::string& out, float v) {
  static_assert(sizeof(float) == 4);
  uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

// Bounds-checked cursor over an in-memory file image. `context` prefixes the
// truncation error so callers can tell which format was being parsed.
struct ByteReader {
  const std::string& buf;
  std::string context;
  size_t pos = 0;

  ByteReader(const std::string& b, std::string ctx) : buf(b), context(std::move(ctx)) {}

  void need(size_t n) const { check(pos + n <= buf.size(), context + ": truncated file"); }
  bool done() const { return pos == buf.size(); }

  uint16_t u16() {
    need(2);
    uint16_t v = static_cast<uint16_t>(static_cast<uint8_t>(buf[pos]) |
                                       (static_cast<uint16_t>(static_cast<uint8_t>(buf[pos + 1])) << 8));
    pos += 2;
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(buf[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(buf[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  float f32() {
    uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string bytes(size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

}  // namespace aim::serial
