// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <compare>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>

namespace polyscore {

/// Exact musical time in beats (quarter note = 1 beat). Always in lowest
/// terms with a positive denominator.
class RationalTime {
public:
    constexpr RationalTime() = default;
    constexpr RationalTime(std::int64_t whole) : num_(whole), den_(1) {}  // NOLINT(google-explicit-constructor)
    RationalTime(std::int64_t num, std::int64_t den) : num_(num), den_(den) { normalize(); }

    [[nodiscard]] constexpr std::int64_t num() const { return num_; }
    [[nodiscard]] constexpr std::int64_t den() const { return den_; }

    [[nodiscard]] double to_double() const { return static_cast<double>(num_) / static_cast<double>(den_); }
    [[nodiscard]] std::string to_string() const;
    /// Parses "n", "n/d" or a negative form of either.
    static RationalTime parse(const std::string& text);

    [[nodiscard]] bool is_integer() const { return den_ == 1; }
    [[nodiscard]] std::int64_t floor() const;
    /// Fractional part in [0, 1).
    [[nodiscard]] RationalTime frac() const { return *this - RationalTime(floor()); }

    friend RationalTime operator+(const RationalTime& a, const RationalTime& b);
    friend RationalTime operator-(const RationalTime& a, const RationalTime& b);
    friend RationalTime operator*(const RationalTime& a, const RationalTime& b);
    friend RationalTime operator/(const RationalTime& a, const RationalTime& b);
    RationalTime operator-() const { return RationalTime(-num_, den_); }
    RationalTime& operator+=(const RationalTime& o) { return *this = *this + o; }
    RationalTime& operator-=(const RationalTime& o) { return *this = *this - o; }

    friend bool operator==(const RationalTime& a, const RationalTime& b) = default;
    friend std::strong_ordering operator<=>(const RationalTime& a, const RationalTime& b);

private:
    void normalize();

    std::int64_t num_ = 0;
    std::int64_t den_ = 1;
};

std::int64_t checked_lcm(std::int64_t a, std::int64_t b);

struct RationalHash {
    std::size_t operator()(const RationalTime& r) const noexcept {
        return std::hash<std::int64_t>{}(r.num()) * 1000003u ^ std::hash<std::int64_t>{}(r.den());
    }
};

}  // namespace polyscore
