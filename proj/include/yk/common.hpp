#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace yk {

inline constexpr const char* kVersion = "1.0.0";

/// Raised for malformed or inconsistent run configuration. CLI exit code 2.
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised for invalid inputs outside the config file (bad paths, refusal to
/// overwrite, unusable geometry). CLI exit code 3.
struct input_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Raised when a numerical guarantee is violated (lost norm, failed
/// convergence, ambiguous sign). CLI exit code 4.
struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Counter-based random numbers.
//
// Every random draw is a pure function of (seed, stream, counter), so results
// do not depend on evaluation order or thread count.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Deterministic 64-bit value for a (seed, stream, counter) triple.
inline std::uint64_t rng_u64(std::uint64_t seed, std::uint64_t stream,
                             std::uint64_t counter) {
  std::uint64_t h = splitmix64(seed ^ 0x6a09e667f3bcc909ull);
  h = splitmix64(h ^ stream);
  h = splitmix64(h ^ counter);
  return h;
}

/// Uniform double in [0, 1).
inline double rng_u01(std::uint64_t seed, std::uint64_t stream,
                      std::uint64_t counter) {
  return static_cast<double>(rng_u64(seed, stream, counter) >> 11) *
         0x1.0p-53;
}

/// Uniform double in [-1, 1).
inline double rng_sym(std::uint64_t seed, std::uint64_t stream,
                      std::uint64_t counter) {
  return 2.0 * rng_u01(seed, stream, counter) - 1.0;
}

// ---------------------------------------------------------------------------
// Hashing and number formatting for reproducible artifacts.
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

/// Locale-independent decimal rendering with 12 significant digits.
inline std::string fmt_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) v = 0.0;  // normalize -0
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v,
                           std::chars_format::general, 12);
  return std::string(buf, res.ptr);
}

inline std::string fmt_int(long long v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace yk
