#include "ltqa/common.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

namespace ltqa {

namespace {

using i128 = __int128;

std::int64_t narrow(i128 v) {
  if (v > INT64_MAX || v < INT64_MIN) throw ValidationError("rational overflow");
  return static_cast<std::int64_t>(v);
}

Ratio make(i128 n, i128 d) {
  if (d < 0) {
    n = -n;
    d = -d;
  }
  i128 a = n < 0 ? -n : n;
  i128 b = d;
  while (b != 0) {
    i128 t = a % b;
    a = b;
    b = t;
  }
  if (a > 1) {
    n /= a;
    d /= a;
  }
  return Ratio(narrow(n), narrow(d));
}

}  // namespace

Ratio::Ratio(std::int64_t n, std::int64_t d) : num(n), den(d) {
  if (d == 0) throw ValidationError("rational with zero denominator");
  if (d < 0) {
    num = -n;
    den = -d;
  }
}

Ratio Ratio::reduced() const { return make(num, den); }

std::string Ratio::fixed(int places) const {
  i128 scale = 1;
  for (int i = 0; i < places; ++i) scale *= 10;
  bool negative = num < 0;
  i128 n = negative ? -static_cast<i128>(num) : static_cast<i128>(num);
  i128 scaled = (2 * n * scale + den) / (2 * static_cast<i128>(den));
  i128 whole = scaled / scale;
  i128 frac = scaled % scale;
  std::string out = negative && scaled != 0 ? "-" : "";
  out += std::to_string(static_cast<long long>(whole));
  if (places > 0) {
    std::string digits = std::to_string(static_cast<long long>(frac));
    out += '.';
    out += std::string(static_cast<std::size_t>(places) - digits.size(), '0');
    out += digits;
  }
  return out;
}

std::string Ratio::signed_fixed(int places) const {
  std::string body = fixed(places);
  if (body.front() != '-') body.insert(body.begin(), '+');
  return body;
}

Ratio operator-(const Ratio& a, const Ratio& b) {
  return make(static_cast<i128>(a.num) * b.den - static_cast<i128>(b.num) * a.den,
              static_cast<i128>(a.den) * b.den);
}

Ratio operator+(const Ratio& a, const Ratio& b) {
  return make(static_cast<i128>(a.num) * b.den + static_cast<i128>(b.num) * a.den,
              static_cast<i128>(a.den) * b.den);
}

Ratio operator*(const Ratio& a, const Ratio& b) {
  return make(static_cast<i128>(a.num) * b.num, static_cast<i128>(a.den) * b.den);
}

bool operator==(const Ratio& a, const Ratio& b) {
  return static_cast<i128>(a.num) * b.den == static_cast<i128>(b.num) * a.den;
}

std::strong_ordering operator<=>(const Ratio& a, const Ratio& b) {
  i128 lhs = static_cast<i128>(a.num) * b.den;
  i128 rhs = static_cast<i128>(b.num) * a.den;
  if (lhs < rhs) return std::strong_ordering::less;
  if (lhs > rhs) return std::strong_ordering::greater;
  return std::strong_ordering::equal;
}

Ratio parse_ratio(std::string_view text) {
  auto bad = [&] { return ValidationError("not a rational number: '" + std::string(text) + "'"); };
  if (text.empty()) throw bad();
  if (auto slash = text.find('/'); slash != std::string_view::npos) {
    Ratio n = parse_ratio(text.substr(0, slash));
    Ratio d = parse_ratio(text.substr(slash + 1));
    if (n.den != 1 || d.den != 1 || d.num == 0) throw bad();
    return make(n.num, d.num);
  }
  std::size_t pos = 0;
  bool negative = false;
  if (text[0] == '-' || text[0] == '+') {
    negative = text[0] == '-';
    pos = 1;
  }
  i128 n = 0;
  i128 d = 1;
  bool seen_point = false;
  bool seen_digit = false;
  for (; pos < text.size(); ++pos) {
    char c = text[pos];
    if (c == '.' && !seen_point) {
      seen_point = true;
    } else if (c >= '0' && c <= '9') {
      seen_digit = true;
      n = n * 10 + (c - '0');
      if (seen_point) d *= 10;
      if (n > INT64_MAX || d > INT64_MAX) throw bad();
    } else {
      throw bad();
    }
  }
  if (!seen_digit) throw bad();
  return make(negative ? -n : n, d);
}

std::int64_t round_product(const Ratio& r, std::int64_t n) {
  i128 num = 2 * static_cast<i128>(r.num) * n + r.den;
  i128 den = 2 * static_cast<i128>(r.den);
  i128 q = num / den;
  if (num % den != 0 && num < 0) --q;
  return narrow(q);
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("Rng::below(0)");
  // Rejection sampling keeps the result exactly uniform.
  std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n + 1) % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x > limit);
  return x % n;
}

double Rng::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xF];
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

}  // namespace ltqa
