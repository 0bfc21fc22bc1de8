#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <queue>
#include <vector>

namespace mkv {

struct QuadratureResult {
    double value = 0.0;
    double error = 0.0;
    double l1 = 0.0;   // integral of |f|
    bool converged = false;
};

namespace detail {

// Gauss-Kronrod 7/15 abscissae and weights.
inline constexpr std::array<double, 8> kXgk = {
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851, 0.864864423359769072789712788640926,
    0.741531185599394439863864773280788, 0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.0};
inline constexpr std::array<double, 8> kWgk = {
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204, 0.104790010322250183839876322541518,
    0.140653259715525918745189590510238, 0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
inline constexpr std::array<double, 4> kWg = {0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                                              0.381830050505118944950369775488975, 0.417959183673469387755102040816327};

struct Panel {
    double a, b, value, error, l1;
    bool operator<(const Panel& o) const { return error < o.error; }
};

template <class F>
Panel gk15(F& f, double a, double b) {
    const double c = 0.5 * (a + b), h = 0.5 * (b - a);
    double fc = f(c);
    double k = fc * kWgk[7], g = fc * kWg[3], l1 = std::abs(fc) * kWgk[7];
    for (int j = 0; j < 7; ++j) {
        double dx = h * kXgk[j];
        double f1 = f(c - dx), f2 = f(c + dx);
        k += kWgk[j] * (f1 + f2);
        l1 += kWgk[j] * (std::abs(f1) + std::abs(f2));
        if (j % 2 == 1) g += kWg[j / 2] * (f1 + f2);
    }
    return {a, b, k * h, std::abs((k - g) * h), l1 * std::abs(h)};
}

} // namespace detail

/// Globally adaptive Gauss-Kronrod 7/15 on [a, b]. Stops when the summed error
/// estimate drops below max(abs_tol, rel_tol * |I|) or after max_panels panels.
template <class F>
QuadratureResult integrate_adaptive(F&& f, double a, double b, double rel_tol, double abs_tol = 0.0,
                                    int max_panels = 4000) {
    QuadratureResult out;
    if (!(b > a)) {
        out.converged = true;
        return out;
    }
    std::priority_queue<detail::Panel> heap;
    heap.push(detail::gk15(f, a, b));
    double value = heap.top().value, error = heap.top().error, l1 = heap.top().l1;
    int panels = 1;
    while (error > std::max(abs_tol, rel_tol * std::abs(value)) && panels < max_panels) {
        detail::Panel worst = heap.top();
        heap.pop();
        double mid = 0.5 * (worst.a + worst.b);
        if (!(mid > worst.a && mid < worst.b)) {
            heap.push(worst);
            break;
        }
        detail::Panel left = detail::gk15(f, worst.a, mid), right = detail::gk15(f, mid, worst.b);
        value += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        l1 += left.l1 + right.l1 - worst.l1;
        heap.push(left);
        heap.push(right);
        panels += 1;
    }
    // re-sum to shed accumulated cancellation in the running totals
    value = error = l1 = 0.0;
    while (!heap.empty()) {
        value += heap.top().value;
        error += heap.top().error;
        l1 += heap.top().l1;
        heap.pop();
    }
    out.value = value;
    out.error = error;
    out.l1 = l1;
    out.converged = error <= std::max(abs_tol, rel_tol * std::abs(value));
    return out;
}

} // namespace mkv
