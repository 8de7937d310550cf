#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace csmn {

inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Raw-id bucketing, version "idhash-v1":
//   * a token that is a plain decimal integer already inside [0, vocab)
//     maps to itself, so generated datasets with dense 0-based ids stay
//     collision free;
//   * anything else is FNV-1a 64 reduced modulo vocab.
// The policy is part of the dataset contract; changing it invalidates
// existing vocabularies.
inline std::size_t hash_id(std::string_view token, std::size_t vocab) {
  if (vocab == 0) throw std::invalid_argument("hash_id: vocab must be >= 1");
  if (!token.empty() && token.size() <= 18) {
    bool digits = true;
    std::uint64_t value = 0;
    for (char c : token) {
      if (c < '0' || c > '9') {
        digits = false;
        break;
      }
      value = value * 10 + static_cast<std::uint64_t>(c - '0');
    }
    if (digits && value < vocab) return static_cast<std::size_t>(value);
  }
  return static_cast<std::size_t>(fnv1a64(token) % vocab);
}

inline std::size_t hash_id(std::uint64_t raw, std::size_t vocab) {
  return hash_id(std::to_string(raw), vocab);
}

// Content hash of a file, used by run manifests.
inline std::string file_content_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("file_content_hash: cannot open " + path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    h = fnv1a64(std::string_view(buf, static_cast<std::size_t>(in.gcount())), h);
    if (!in) break;
  }
  char out[17];
  std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(h));
  return std::string(out);
}

}  // namespace csmn
