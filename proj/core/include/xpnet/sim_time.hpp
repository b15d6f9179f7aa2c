#pragma once

#include <compare>
#include <cstdint>
#include <limits>

namespace xpnet {

// Virtual time in integer nanoseconds. Used both for instants and durations.
struct SimTime {
  std::uint64_t ns = 0;

  constexpr auto operator<=>(const SimTime&) const = default;

  constexpr SimTime& operator+=(SimTime d) {
    ns += d.ns;
    return *this;
  }

  static constexpr SimTime Max() {
    return SimTime{std::numeric_limits<std::uint64_t>::max()};
  }

  constexpr double micros() const { return static_cast<double>(ns) / 1e3; }
  constexpr double millis() const { return static_cast<double>(ns) / 1e6; }
};

constexpr SimTime Nanos(std::uint64_t n) { return SimTime{n}; }
constexpr SimTime Micros(std::uint64_t us) { return SimTime{us * 1000}; }
constexpr SimTime Millis(std::uint64_t ms) { return SimTime{ms * 1000000}; }

// Saturates at SimTime::Max() instead of wrapping.
constexpr SimTime operator+(SimTime a, SimTime b) {
  return a.ns > SimTime::Max().ns - b.ns ? SimTime::Max() : SimTime{a.ns + b.ns};
}

// Saturates at zero.
constexpr SimTime operator-(SimTime a, SimTime b) {
  return a.ns > b.ns ? SimTime{a.ns - b.ns} : SimTime{0};
}

constexpr SimTime operator*(SimTime a, std::uint64_t k) { return SimTime{a.ns * k}; }

}  // namespace xpnet
