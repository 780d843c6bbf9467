#pragma once

// Shared primitives: voltage intervals, fault types, deterministic RNG
// streams and round-trip-exact number formatting.

#include <charconv>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dnt {

/// Closed voltage interval [lo, hi].
struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    bool contains(double v) const { return v >= lo && v <= hi; }
    double width() const { return hi - lo; }
    double mid() const { return 0.5 * (lo + hi); }
};

/// Raised when a voltage leaves the region where the device behaviour is
/// defined (the adversary is assumed to know these limits and avoid them).
class MalfunctionError : public std::runtime_error {
  public:
    explicit MalfunctionError(const std::string& what) : std::runtime_error(what) {}
};

/// Raised when a query would exceed the ledger budget.
class BudgetExhaustedError : public std::runtime_error {
  public:
    explicit BudgetExhaustedError(const std::string& what) : std::runtime_error(what) {}
};

// ---------------------------------------------------------------------------
// Deterministic RNG streams
// ---------------------------------------------------------------------------

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}
}  // namespace detail

/// Derives an independent seed from a master seed, a stream tag and an index.
/// Train/sample/init streams stay decoupled so thread scheduling cannot
/// change results.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index) {
    return detail::splitmix64(detail::splitmix64(master ^ (stream * 0x9e3779b97f4a7c15ULL)) + index);
}

using Rng = std::mt19937_64;

// ---------------------------------------------------------------------------
// Number formatting (shortest round-trip form, for CSV files)
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{}) {
        throw std::runtime_error("not a number: '" + std::string(s) + "'");
    }
    return v;
}

}  // namespace dnt
