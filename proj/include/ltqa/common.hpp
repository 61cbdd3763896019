#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace ltqa {

// Error hierarchy. The CLI maps ValidationError/FormatError to exit code 1 and
// IoError/TransportError to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

// Unparseable payload. Keeps the raw body around for diagnostics.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::string raw = {})
      : Error(what), raw_(std::move(raw)) {}
  const std::string& raw() const noexcept { return raw_; }

 private:
  std::string raw_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class TransportError : public Error {
 public:
  using Error::Error;
};

// Exact non-negative-denominator rational. Used for accuracies, mixing
// weights and ablation deltas so that nothing is rounded before rendering.
struct Ratio {
  std::int64_t num = 0;
  std::int64_t den = 1;

  Ratio() = default;
  Ratio(std::int64_t n, std::int64_t d);

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  Ratio reduced() const;

  // Decimal rendering with round-half-away-from-zero at `places` digits.
  std::string fixed(int places) const;
  // "+9.2" style signed rendering.
  std::string signed_fixed(int places) const;

  friend Ratio operator-(const Ratio& a, const Ratio& b);
  friend Ratio operator+(const Ratio& a, const Ratio& b);
  friend Ratio operator*(const Ratio& a, const Ratio& b);
  friend bool operator==(const Ratio& a, const Ratio& b);
  friend std::strong_ordering operator<=>(const Ratio& a, const Ratio& b);
};

// Parses "3", "0.25", "-1.5", "1/4".
Ratio parse_ratio(std::string_view text);

// round(r * n) with halves rounded up, computed exactly.
std::int64_t round_product(const Ratio& r, std::int64_t n);

// Seeded generator with platform-independent helpers. std distributions are
// implementation-defined, so sampling is done by hand on top of mt19937_64.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  // Uniform double in [0, 1).
  double uniform();
  double normal();

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace ltqa
