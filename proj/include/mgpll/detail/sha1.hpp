#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "mgpll/errors.hpp"

namespace mgpll::detail {

// Compact SHA-1 (RFC 3174), used only to fingerprint experiment inputs the
// way git does; not a security boundary. Verified against the standard test
// vectors in the unit tests.
class Sha1 {
 public:
  void update(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    total_ += len;
    while (len > 0) {
      const std::size_t take = std::min(len, std::size_t(64) - fill_);
      std::memcpy(buffer_.data() + fill_, p, take);
      fill_ += take;
      p += take;
      len -= take;
      if (fill_ == 64) {
        process_block();
        fill_ = 0;
      }
    }
  }

  std::string hex_digest() {
    const std::uint64_t bit_len = total_ * 8;
    unsigned char pad = 0x80;
    update(&pad, 1);
    const unsigned char zero = 0x00;
    while (fill_ != 56) update(&zero, 1);
    unsigned char len_be[8];
    for (int i = 0; i < 8; ++i) len_be[i] = static_cast<unsigned char>(bit_len >> (56 - 8 * i));
    update(len_be, 8);

    static const char* hexd = "0123456789abcdef";
    std::string out;
    out.reserve(40);
    for (std::uint32_t word : h_) {
      for (int i = 28; i >= 0; i -= 4) out += hexd[(word >> i) & 0xF];
    }
    return out;
  }

 private:
  static std::uint32_t rol(std::uint32_t v, int s) { return (v << s) | (v >> (32 - s)); }

  void process_block() {
    std::uint32_t w[80];
    for (int i = 0; i < 16; ++i) {
      w[i] = (std::uint32_t(buffer_[4 * i]) << 24) | (std::uint32_t(buffer_[4 * i + 1]) << 16) |
             (std::uint32_t(buffer_[4 * i + 2]) << 8) | std::uint32_t(buffer_[4 * i + 3]);
    }
    for (int i = 16; i < 80; ++i) w[i] = rol(w[i - 3] ^ w[i - 8] ^ w[i - 14] ^ w[i - 16], 1);

    std::uint32_t a = h_[0], b = h_[1], c = h_[2], d = h_[3], e = h_[4];
    for (int i = 0; i < 80; ++i) {
      std::uint32_t f, k;
      if (i < 20) {
        f = (b & c) | (~b & d);
        k = 0x5A827999;
      } else if (i < 40) {
        f = b ^ c ^ d;
        k = 0x6ED9EBA1;
      } else if (i < 60) {
        f = (b & c) | (b & d) | (c & d);
        k = 0x8F1BBCDC;
      } else {
        f = b ^ c ^ d;
        k = 0xCA62C1D6;
      }
      const std::uint32_t t = rol(a, 5) + f + e + k + w[i];
      e = d;
      d = c;
      c = rol(b, 30);
      b = a;
      a = t;
    }
    h_[0] += a;
    h_[1] += b;
    h_[2] += c;
    h_[3] += d;
    h_[4] += e;
  }

  std::array<std::uint32_t, 5> h_{0x67452301, 0xEFCDAB89, 0x98BADCFE, 0x10325476, 0xC3D2E1F0};
  std::array<unsigned char, 64> buffer_{};
  std::size_t fill_ = 0;
  std::uint64_t total_ = 0;
};

inline std::string sha1_hex(const std::string& data) {
  Sha1 h;
  h.update(data.data(), data.size());
  return h.hex_digest();
}

// Hash of "blob <len>\0<content>", matching `git hash-object`.
inline std::string git_blob_sha1(const std::string& content) {
  Sha1 h;
  const std::string header = "blob " + std::to_string(content.size());
  h.update(header.data(), header.size() + 1);  // include the trailing NUL
  h.update(content.data(), content.size());
  return h.hex_digest();
}

inline std::string git_blob_sha1_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("git_blob_sha1_file: cannot open " + path.string());
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return git_blob_sha1(content);
}

}  // namespace mgpll::detail
