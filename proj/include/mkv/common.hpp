#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace mkv {

inline constexpr int kMaxDim = 3;

/// Point or vector in R^d, d <= 3. Unused trailing components stay zero so
/// that norms and dot products need no dimension argument.
using Point = std::array<double, kMaxDim>;

inline double norm2(const Point& x) { return x[0] * x[0] + x[1] * x[1] + x[2] * x[2]; }
inline double norm(const Point& x) { return std::sqrt(norm2(x)); }

inline Point operator-(const Point& a, const Point& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Point operator+(const Point& a, const Point& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Point operator*(double s, const Point& a) { return {s * a[0], s * a[1], s * a[2]}; }

/// Raised when a kernel is evaluated at its singular point.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Raised when adaptive quadrature misses its tolerance.
class QuadratureError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid parameters or configuration documents.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

} // namespace mkv
