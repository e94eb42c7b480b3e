// SPDX-License-Identifier: Apache-2.0
//
// Shared basics: error types, round-trip double formatting, seed mixing,
// and a slot-deterministic parallel map.

#ifndef KINDISC_COMMON_HPP
#define KINDISC_COMMON_HPP

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <future>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace kindisc {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Malformed expression structure (arity, parameter-slot mismatch, ...).
class StructuralError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Expression text that does not conform to the grammar.
class ParseError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Invalid run configuration; carries the offending field path.
class ConfigError : public std::runtime_error {
public:
  ConfigError(std::string field, const std::string& message)
      : std::runtime_error(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

private:
  std::string field_;
};

/// Failure while orchestrating a discovery run.
class PipelineError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Shortest text that parses back to exactly the same double.
inline std::string format_double(double value) {
  std::array<char, 40> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  if (ec != std::errc{}) throw std::runtime_error("format_double: to_chars failed");
  return std::string(buf.data(), ptr);
}

inline double parse_double(std::string_view text) {
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size())
    throw ParseError("bad numeric literal: '" + std::string(text) + "'");
  return value;
}

/// splitmix64 finalizer; used to derive independent stream seeds from a
/// master seed plus salts so replay does not depend on execution order.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t salt) {
  return mix_seed(base ^ mix_seed(salt));
}

inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t s1, std::uint64_t s2) {
  return mix_seed(mix_seed(base, s1), s2);
}

inline std::uint64_t hash_string(std::string_view s) {
  // FNV-1a, enough to salt seeds with series names.
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

/// Runs body(i) for i in [0, n). Each index writes only its own slots, so the
/// result is identical for any thread count.
template <class Body>
void parallel_for(std::size_t n, int threads, Body&& body) {
  if (n == 0) return;
  const int workers = std::max(1, std::min<int>(threads, static_cast<int>(n)));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::future<void>> tasks;
  tasks.reserve(static_cast<std::size_t>(workers));
  const std::size_t chunk = (n + static_cast<std::size_t>(workers) - 1) / static_cast<std::size_t>(workers);
  for (int w = 0; w < workers; ++w) {
    const std::size_t lo = static_cast<std::size_t>(w) * chunk;
    const std::size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    tasks.push_back(std::async(std::launch::async, [lo, hi, &body] {
      for (std::size_t i = lo; i < hi; ++i) body(i);
    }));
  }
  for (auto& t : tasks) t.get();
}

}  // namespace kindisc

#endif  // KINDISC_COMMON_HPP
