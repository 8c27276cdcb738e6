#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <compare>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace energychain {

/// Fixed-point decimal quantity stored as an integer count of 10^-Scale units.
/// The tag keeps energy, price and currency from mixing at compile time.
template <typename Tag, int Scale>
class FixedDecimal {
 public:
  static constexpr std::int64_t kDenominator = [] {
    std::int64_t d = 1;
    for (int i = 0; i < Scale; ++i) d *= 10;
    return d;
  }();

  constexpr FixedDecimal() = default;

  static constexpr FixedDecimal FromRaw(std::int64_t raw) {
    FixedDecimal q;
    q.raw_ = raw;
    return q;
  }
  static constexpr FixedDecimal FromWhole(std::int64_t whole) { return FromRaw(whole * kDenominator); }

  /// Converts a JSON-style floating value; fails when it carries more than
  /// Scale fraction digits or does not fit.
  static std::optional<FixedDecimal> FromDouble(double value) {
    if (!std::isfinite(value)) return std::nullopt;
    const double scaled = value * static_cast<double>(kDenominator);
    if (std::fabs(scaled) > 9.0e15) return std::nullopt;
    const double rounded = std::round(scaled);
    if (std::fabs(scaled - rounded) > 1e-6 * std::max(1.0, std::fabs(scaled))) return std::nullopt;
    return FromRaw(static_cast<std::int64_t>(rounded));
  }

  /// Parses "12", "12.5", "-0.125". At most Scale fraction digits.
  static std::optional<FixedDecimal> Parse(std::string_view text) {
    if (text.empty()) return std::nullopt;
    bool negative = false;
    if (text.front() == '-' || text.front() == '+') {
      negative = text.front() == '-';
      text.remove_prefix(1);
    }
    const auto dot = text.find('.');
    const std::string_view whole = text.substr(0, dot);
    const std::string_view frac = dot == std::string_view::npos ? std::string_view{} : text.substr(dot + 1);
    if (whole.empty() && frac.empty()) return std::nullopt;
    if (dot != std::string_view::npos && frac.empty()) return std::nullopt;
    if (frac.size() > static_cast<std::size_t>(Scale)) return std::nullopt;
    auto all_digits = [](std::string_view s) {
      for (char c : s)
        if (c < '0' || c > '9') return false;
      return true;
    };
    if (!all_digits(whole) || !all_digits(frac)) return std::nullopt;
    if (whole.size() > 15) return std::nullopt;

    std::int64_t w = 0;
    if (!whole.empty()) std::from_chars(whole.data(), whole.data() + whole.size(), w);
    std::int64_t f = 0;
    for (std::size_t i = 0; i < static_cast<std::size_t>(Scale); ++i) {
      f = f * 10 + (i < frac.size() ? frac[i] - '0' : 0);
    }
    const std::int64_t raw = w * kDenominator + f;
    return FromRaw(negative ? -raw : raw);
  }

  constexpr std::int64_t raw() const { return raw_; }
  double to_double() const { return static_cast<double>(raw_) / static_cast<double>(kDenominator); }

  /// Shortest decimal rendering: "8", "8.5", "0.125".
  std::string to_string() const {
    std::string out = raw_ < 0 ? "-" : "";
    const std::int64_t mag = raw_ < 0 ? -raw_ : raw_;
    out += std::to_string(mag / kDenominator);
    std::int64_t frac = mag % kDenominator;
    if (frac != 0) {
      std::string digits(static_cast<std::size_t>(Scale), '0');
      for (int i = Scale - 1; i >= 0; --i) {
        digits[static_cast<std::size_t>(i)] = static_cast<char>('0' + frac % 10);
        frac /= 10;
      }
      while (!digits.empty() && digits.back() == '0') digits.pop_back();
      out += '.';
      out += digits;
    }
    return out;
  }

  constexpr auto operator<=>(const FixedDecimal&) const = default;

  constexpr FixedDecimal& operator+=(FixedDecimal o) {
    raw_ += o.raw_;
    return *this;
  }
  constexpr FixedDecimal& operator-=(FixedDecimal o) {
    raw_ -= o.raw_;
    return *this;
  }
  friend constexpr FixedDecimal operator+(FixedDecimal a, FixedDecimal b) { return a += b; }
  friend constexpr FixedDecimal operator-(FixedDecimal a, FixedDecimal b) { return a -= b; }

 private:
  std::int64_t raw_ = 0;
};

struct EnergyTag {};
struct PriceTag {};
struct MoneyTag {};

/// kWh at milli-kWh resolution.
using Energy = FixedDecimal<EnergyTag, 3>;
/// Currency per kWh at milli-unit resolution.
using Price = FixedDecimal<PriceTag, 3>;
/// Currency at micro-unit resolution so that Energy x Price is exact.
using Money = FixedDecimal<MoneyTag, 6>;

inline constexpr Money operator*(Energy units, Price ppu) { return Money::FromRaw(units.raw() * ppu.raw()); }

}  // namespace energychain
