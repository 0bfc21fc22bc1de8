#pragma once

// Independent reference computations used by the unit and acceptance tests.
// Nothing here calls into the library's quadrature code.

#include "mkv/kernel_catalog.hpp"

#include <cmath>
#include <numbers>
#include <utility>
#include <vector>

namespace oracle {

using mkv::Point;
using mkv::operator*;
using mkv::operator-;
using mkv::operator+;

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on P_n.
inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int n) {
    std::vector<double> x(n), w(n);
    for (int i = 0; i < n; ++i) {
        double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = z;
            for (int k = 2; k <= n; ++k) {
                double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            if (n == 1) p0 = 1.0, p1 = z;
            dp = n * (z * p1 - p0) / (z * z - 1.0);
            double dz = p1 / dp;
            z -= dz;
            if (std::abs(dz) < 1e-16) break;
        }
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    return {x, w};
}

/// Composite Gauss-Legendre rule on [a, b] with `panels` panels of `order` nodes.
struct Rule {
    std::vector<double> x, w;
};

inline Rule composite(double a, double b, int panels, int order) {
    auto [gx, gw] = gauss_legendre(order);
    Rule r;
    double h = (b - a) / panels;
    for (int p = 0; p < panels; ++p) {
        double c = a + (p + 0.5) * h;
        for (int i = 0; i < order; ++i) {
            r.x.push_back(c + 0.5 * h * gx[i]);
            r.w.push_back(0.5 * h * gw[i]);
        }
    }
    return r;
}

/// Bump density exp(-1/(1-t^2)) normalised over the unit ball, by direct
/// radial Gauss-Legendre.
inline double bump_mass(int d, double radius_scale = 1.0) {
    Rule r = composite(0.0, 1.0, 64, 20);
    double area = d == 1 ? 2.0 : d == 2 ? 2.0 * std::numbers::pi : 4.0 * std::numbers::pi;
    double s = 0.0;
    for (std::size_t i = 0; i < r.x.size(); ++i) {
        double t = r.x[i];
        s += r.w[i] * std::exp(-1.0 / (1.0 - t * t)) * std::pow(t, d - 1);
    }
    return area * s * std::pow(radius_scale, d);
}

inline double bump(double t) { return t >= 1.0 ? 0.0 : std::exp(-1.0 / (1.0 - t * t)); }

/// Brute-force K*V^N(x): full tensor-product quadrature of K(z) V^N(x - z) in
/// polar/spherical coordinates centred on the kernel singularity at z = 0,
/// with the radial variable substituted as rho = t^2 (or t^power in d = 1)
/// to smooth algebraic behaviour at the origin.
/// `mult` scales the number of panels in every direction.
inline Point mollified_kernel(const mkv::KernelSpec& spec, const mkv::MollifierParams& m, const Point& x,
                              int mult = 4) {
    const int d = spec.dim;
    const double eps = m.scaled_radius();
    const double cd = 1.0 / bump_mass(d);
    auto V = [&](double dist) { return cd * std::pow(eps, -d) * bump(dist / eps); };
    auto k = [&](double rho) { return mkv::kernel_profile(spec, rho); };
    const double r = mkv::norm(x);
    Point out{0.0, 0.0, 0.0};

    if (d == 1) {
        // substitute |z| = t^p on each side of the origin
        const double p = 4.0;
        for (int side : {-1, 1}) {
            // z = side * rho, rho in [0, inf); V(x - z) nonzero for |x - z| < eps
            double lo = std::max(0.0, side * x[0] - eps), hi = side * x[0] + eps;
            if (hi <= lo) continue;
            Rule rule = composite(std::pow(lo, 1.0 / p), std::pow(hi, 1.0 / p), 16 * mult, 20);
            for (std::size_t i = 0; i < rule.x.size(); ++i) {
                double t = rule.x[i], rho = std::pow(t, p);
                if (rho <= 0.0) continue;
                double jac = p * std::pow(t, p - 1.0);
                out[0] += rule.w[i] * jac * side * k(rho) * V(std::abs(x[0] - side * rho));
            }
        }
        return out;
    }

    const double rho_lo = std::max(0.0, r - eps), rho_hi = r + eps;
    Rule rr = composite(std::sqrt(rho_lo), std::sqrt(rho_hi), 8 * mult, 12);

    if (d == 2) {
        double phi = std::atan2(x[1], x[0]);
        double half = r > eps ? std::asin(eps / r) : std::numbers::pi;
        Rule ra = composite(phi - half, phi + half, 8 * mult, 12);
        for (std::size_t i = 0; i < rr.x.size(); ++i) {
            double rho = rr.x[i] * rr.x[i];
            if (rho <= 0.0) continue;
            double wr = rr.w[i] * 2.0 * rr.x[i] * rho * k(rho);
            for (std::size_t j = 0; j < ra.x.size(); ++j) {
                double c = std::cos(ra.x[j]), s = std::sin(ra.x[j]);
                double dx = x[0] - rho * c, dy = x[1] - rho * s;
                double v = V(std::sqrt(dx * dx + dy * dy));
                if (v == 0.0) continue;
                out[0] += wr * ra.w[j] * v * c;
                out[1] += wr * ra.w[j] * v * s;
            }
        }
        return out;
    }

    // d = 3: polar axis e along x, azimuth by the periodic trapezoid rule
    Point e = r > 0.0 ? (1.0 / r) * x : Point{0.0, 0.0, 1.0};
    Point a = std::abs(e[0]) < 0.9 ? Point{1.0, 0.0, 0.0} : Point{0.0, 1.0, 0.0};
    double ad = a[0] * e[0] + a[1] * e[1] + a[2] * e[2];
    Point e1 = a - ad * e;
    e1 = (1.0 / mkv::norm(e1)) * e1;
    Point e2{e[1] * e1[2] - e[2] * e1[1], e[2] * e1[0] - e[0] * e1[2], e[0] * e1[1] - e[1] * e1[0]};
    double bmax = r > eps ? std::asin(eps / r) : std::numbers::pi;
    Rule rb = composite(0.0, bmax, 6 * mult, 12);
    const int ng = 32;
    for (std::size_t i = 0; i < rr.x.size(); ++i) {
        double rho = rr.x[i] * rr.x[i];
        if (rho <= 0.0) continue;
        double wr = rr.w[i] * 2.0 * rr.x[i] * rho * rho * k(rho);
        for (std::size_t j = 0; j < rb.x.size(); ++j) {
            double cb = std::cos(rb.x[j]), sb = std::sin(rb.x[j]);
            double dist2 = r * r - 2.0 * r * rho * cb + rho * rho;
            double v = V(std::sqrt(std::max(0.0, dist2)));
            if (v == 0.0) continue;
            double wb = wr * rb.w[j] * sb * v;
            for (int g = 0; g < ng; ++g) {
                double gam = 2.0 * std::numbers::pi * g / ng;
                double wg = wb * 2.0 * std::numbers::pi / ng;
                double c1 = sb * std::cos(gam), c2 = sb * std::sin(gam);
                for (int q = 0; q < 3; ++q) out[q] += wg * (cb * e[q] + c1 * e1[q] + c2 * e2[q]);
            }
        }
    }
    return out;
}

} // namespace oracle
