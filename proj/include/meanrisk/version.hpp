#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace meanrisk {

inline constexpr std::string_view kVersion = "0.1.0";

// FNV-1a 64-bit hash, used to fingerprint run configurations in output
// provenance headers. Deterministic across runs and platforms.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t value);

}  // namespace meanrisk
