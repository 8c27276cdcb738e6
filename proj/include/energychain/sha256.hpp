#pragma once

#include <openssl/evp.h>

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace energychain {

using Digest = std::array<std::uint8_t, 32>;

inline Digest Sha256(std::string_view bytes) {
  Digest out{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 || len != out.size()) {
    throw std::runtime_error("sha256: EVP_Digest failed");
  }
  return out;
}

inline std::string ToHex(const Digest& digest) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(digest.size() * 2, '0');
  for (std::size_t i = 0; i < digest.size(); ++i) {
    out[2 * i] = kHex[digest[i] >> 4];
    out[2 * i + 1] = kHex[digest[i] & 0x0f];
  }
  return out;
}

inline std::string Sha256Hex(std::string_view bytes) { return ToHex(Sha256(bytes)); }

/// True when the hex rendering of the digest starts with `zeros` '0' characters.
inline bool HasLeadingHexZeros(const Digest& digest, int zeros) {
  for (int i = 0; i < zeros; ++i) {
    const std::uint8_t byte = digest[static_cast<std::size_t>(i / 2)];
    const std::uint8_t nibble = (i % 2 == 0) ? (byte >> 4) : (byte & 0x0f);
    if (nibble != 0) return false;
  }
  return true;
}

inline bool IsLowerHex(std::string_view s, std::size_t length) {
  if (s.size() != length) return false;
  for (char c : s)
    if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) return false;
  return true;
}

}  // namespace energychain
