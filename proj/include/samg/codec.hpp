#pragma once

#include <openssl/evp.h>
#include <openssl/sha.h>

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "samg/types.hpp"

namespace samg::codec {

inline std::string base64_encode(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) return {};
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), bytes.data(), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

inline std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.empty()) return {};
  if (text.size() % 4 != 0) throw Error(Error::Kind::kFormat, "base64 payload length is not a multiple of 4");
  std::vector<std::uint8_t> out(3 * text.size() / 4);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(text.data()), static_cast<int>(text.size()));
  if (n < 0) throw Error(Error::Kind::kFormat, "invalid base64 payload");
  std::size_t pad = 0;
  if (text.back() == '=') ++pad;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[SHA256_DIGEST_LENGTH];
  SHA256(reinterpret_cast<const unsigned char*>(data.data()), data.size(), digest);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * SHA256_DIGEST_LENGTH);
  for (unsigned char b : digest) {
    out.push_back(kHex[b >> 4]);
    out.push_back(kHex[b & 0xF]);
  }
  return out;
}

/// Packs a mask into a row-major, MSB-first 1-bit-per-pixel bitfield.
inline std::vector<std::uint8_t> pack_bits(const BinaryMask& mask) {
  const auto bits = mask.bits();
  std::vector<std::uint8_t> out((bits.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < bits.size(); ++i)
    if (bits[i]) out[i / 8] |= static_cast<std::uint8_t>(0x80u >> (i % 8));
  return out;
}

inline BinaryMask unpack_bits(std::span<const std::uint8_t> packed, int width, int height) {
  BinaryMask mask(width, height);
  const std::size_t n = static_cast<std::size_t>(width) * height;
  if (packed.size() != (n + 7) / 8) throw Error(Error::Kind::kFormat, "mask bitfield length does not match its dimensions");
  for (std::size_t i = 0; i < n; ++i)
    if (packed[i / 8] & (0x80u >> (i % 8))) mask.set(static_cast<int>(i / width), static_cast<int>(i % width));
  return mask;
}

}  // namespace samg::codec
