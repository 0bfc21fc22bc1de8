#include "mkv/rational.hpp"
#include "mkv/common.hpp"

#include <cctype>
#include <limits>

namespace mkv {

double to_double(const Rational& q) {
    return static_cast<double>(q.numerator()) / static_cast<double>(q.denominator());
}

std::string to_string(const Rational& q) {
    if (q.denominator() == 1) return std::to_string(q.numerator());
    return std::to_string(q.numerator()) + "/" + std::to_string(q.denominator());
}

double ExtRational::to_double() const {
    return infinite ? std::numeric_limits<double>::infinity() : mkv::to_double(value);
}

std::string ExtRational::str() const { return infinite ? "inf" : to_string(value); }

namespace {

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

Rational parse_decimal(const std::string& s) {
    if (s.empty()) throw ConfigError("empty number");
    std::size_t i = 0;
    bool neg = false;
    if (s[i] == '+' || s[i] == '-') {
        neg = s[i] == '-';
        ++i;
    }
    std::int64_t num = 0, den = 1;
    bool seen_digit = false, seen_point = false;
    for (; i < s.size(); ++i) {
        char c = s[i];
        if (c == '.') {
            if (seen_point) throw ConfigError("malformed number: " + s);
            seen_point = true;
            continue;
        }
        if (!std::isdigit(static_cast<unsigned char>(c))) throw ConfigError("malformed number: " + s);
        seen_digit = true;
        if (num > std::numeric_limits<std::int64_t>::max() / 10 - 10 || (seen_point && den > 1'000'000'000'000'000LL))
            throw ConfigError("number has too many digits: " + s);
        num = num * 10 + (c - '0');
        if (seen_point) den *= 10;
    }
    if (!seen_digit) throw ConfigError("malformed number: " + s);
    return Rational(neg ? -num : num, den);
}

} // namespace

ExtRational parse_ext_rational(const std::string& text) {
    std::string s = trim(text);
    if (s == "inf" || s == "+inf" || s == "infinity") return ExtRational::inf();
    auto slash = s.find('/');
    if (slash == std::string::npos) return ExtRational(parse_decimal(s));
    Rational a = parse_decimal(trim(s.substr(0, slash)));
    Rational b = parse_decimal(trim(s.substr(slash + 1)));
    if (b.numerator() == 0) throw ConfigError("zero denominator: " + s);
    return ExtRational(a / b);
}

Rational parse_rational(const std::string& text) {
    ExtRational e = parse_ext_rational(text);
    if (e.infinite) throw ConfigError("infinite value not allowed here: " + text);
    return e.value;
}

Rational conjugate_reciprocal(const ExtRational& r) {
    if (r.infinite) return Rational(1);
    if (r.value < 1) throw ConfigError("Hoelder exponent must be >= 1, got " + r.str());
    return Rational(1) - Rational(1) / r.value;
}

} // namespace mkv
