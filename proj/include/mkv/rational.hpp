#pragma once

#include <boost/rational.hpp>

#include <cstdint>
#include <string>

namespace mkv {

using Rational = boost::rational<std::int64_t>;

/// A rational number or +infinity. Exponent parameters such as r live here so
/// that r = inf and r = 1 are represented exactly.
struct ExtRational {
    bool infinite = false;
    Rational value{0};

    ExtRational() = default;
    ExtRational(Rational v) : value(v) {}
    ExtRational(std::int64_t v) : value(v) {}
    static ExtRational inf() {
        ExtRational e;
        e.infinite = true;
        return e;
    }

    double to_double() const;
    std::string str() const;

    friend bool operator==(const ExtRational& a, const ExtRational& b) {
        return a.infinite == b.infinite && (a.infinite || a.value == b.value);
    }
};

double to_double(const Rational& q);
std::string to_string(const Rational& q);

/// Parses "1/3", "0.25", "2", "inf". Decimals are converted exactly
/// (0.25 -> 1/4). Throws ConfigError on malformed input.
ExtRational parse_ext_rational(const std::string& text);
Rational parse_rational(const std::string& text);

/// Hoelder conjugate reciprocal 1/r_bar = 1 - 1/r (r = inf gives 1, r = 1 gives 0).
Rational conjugate_reciprocal(const ExtRational& r);

} // namespace mkv
