#include "mkv/rates.hpp"

#include <cmath>
#include <iomanip>
#include <sstream>

namespace mkv {

Rational chi_r(int d, const ExtRational& r) {
    if (r.infinite) return Rational(d);
    Rational v = Rational(d) * (Rational(1) - Rational(2) / r.value);
    return v > 0 ? v : Rational(0);
}

Rational alpha_upper_bound(int d, const ExtRational& r) {
    Rational half_minus = r.infinite ? Rational(1, 2) : Rational(1, 2) - Rational(1) / r.value;
    Rational extra = Rational(2 * d) * half_minus;
    if (extra < 0) extra = 0;
    return Rational(1) / (Rational(d) + extra);
}

std::optional<std::string> check_alpha(int d, const ExtRational& r, const Rational& alpha) {
    Rational bound = alpha_upper_bound(d, r);
    if (alpha > 0 && alpha < bound) return std::nullopt;
    std::ostringstream os;
    os << "assumption (A_alpha) violated: need 0 < alpha < 1/(d + max(0, 2d(1/2 - 1/r))) = " << to_string(bound)
       << " (~" << to_double(bound) << ") for d=" << d << ", r=" << r.str() << "; got alpha=" << to_string(alpha);
    return os.str();
}

RateExponents exponents(int d, const ExtRational& r, const Rational& zeta, const Rational& alpha,
                        const Rational& epsilon_slack) {
    if (d < 1) throw ConfigError("dimension must be positive");
    if (!r.infinite && r.value < 1) throw ConfigError("r must satisfy r >= 1, got " + r.str());
    if (!(zeta > 0 && zeta <= 1)) throw ConfigError("zeta must lie in (0, 1], got " + to_string(zeta));
    if (epsilon_slack < 0) throw ConfigError("epsilon slack must be nonnegative");
    if (auto msg = check_alpha(d, r, alpha)) throw ConfigError(*msg);

    RateExponents e;
    e.d = d;
    e.r = r;
    e.zeta = zeta;
    e.alpha = alpha;
    e.chi_r = chi_r(d, r);
    Rational a = alpha * zeta;
    Rational b = Rational(1, 2) * (Rational(1) - alpha * (Rational(d) + e.chi_r));
    e.rho = std::min(a, b);
    e.epsilon_slack = epsilon_slack;
    e.v1 = e.rho - epsilon_slack;
    Rational inv_rbar = conjugate_reciprocal(r);
    e.v2 = Rational(d) * alpha * inv_rbar;
    e.v2_proof = Rational(2) * e.v2;
    e.v3 = zeta / 2;
    return e;
}

Rational optimal_alpha(int d, const ExtRational& r, const Rational& zeta) {
    Rational a = Rational(1) / (Rational(2) * zeta + Rational(d) + chi_r(d, r));
    if (check_alpha(d, r, a)) throw ConfigError("optimal alpha falls outside the admissible window");
    return a;
}

Rational coupled_h_exponent(const RateExponents& e) {
    if (e.v3 <= 0) throw ConfigError("v3 must be positive");
    return -(e.rho + e.v2) / e.v3;
}

double coupled_h(double N, const RateExponents& e) { return std::pow(N, to_double(coupled_h_exponent(e))); }

Rational cost_exponent(const RateExponents& e) {
    if (e.v1 <= 0 || e.v3 <= 0) throw ConfigError("cost exponent needs v1 > 0 and v3 > 0");
    return Rational(2) / e.v1 + Rational(1) / e.v3 + e.v2 / (e.v1 * e.v3);
}

double predicted_error(double N, double h, const RateExponents& e, double C) {
    return C * (std::pow(N, -to_double(e.v1)) + std::pow(N, to_double(e.v2)) * std::pow(h, to_double(e.v3)));
}

FitResult fit_loglog(const std::vector<std::pair<double, double>>& points) {
    if (points.size() < 3) throw ConfigError("log-log fit needs at least 3 points");
    const double n = static_cast<double>(points.size());
    double sx = 0.0, sy = 0.0;
    for (auto [x, y] : points) {
        if (!(x > 0.0) || !(y > 0.0) || !std::isfinite(x) || !std::isfinite(y))
            throw ConfigError("log-log fit needs strictly positive finite data");
        sx += std::log(x);
        sy += std::log(y);
    }
    const double mx = sx / n, my = sy / n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (auto [x, y] : points) {
        double dx = std::log(x) - mx, dy = std::log(y) - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (!(sxx > 0.0)) throw ConfigError("log-log fit needs at least two distinct abscissae");
    FitResult f;
    f.points = points;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double ssr = 0.0;
    for (auto [x, y] : points) {
        double res = std::log(y) - (f.intercept + f.slope * std::log(x));
        ssr += res * res;
    }
    f.stderr_slope = std::sqrt(ssr / (n - 2.0) / sxx);
    f.r_squared = syy > 0.0 ? 1.0 - ssr / syy : 1.0;
    return f;
}

RateTable rate_table(const KernelSpec& spec, const Rational& slack, const std::optional<Rational>& alpha) {
    RateTable t;
    t.kernel_class = spec.id();
    t.assumptions = assumptions_for(spec, slack);
    const int d = spec.dim;
    t.optimal_alpha = optimal_alpha(d, t.assumptions.r, t.assumptions.zeta);
    t.exponents = exponents(d, t.assumptions.r, t.assumptions.zeta, alpha.value_or(t.optimal_alpha));
    t.coupled_h_exponent = coupled_h_exponent(t.exponents);
    t.cost_exponent = cost_exponent(t.exponents);
    if (spec.is_harmonic() || spec.variant == KernelVariant::RieszGradient) {
        std::ostringstream os;
        os << "stated value (6d+5) = " << 6 * d + 5;
        if (d == 2) os << " and 11 for d=2";
        os << "; formula gives " << to_string(t.cost_exponent) << " (unreconciled)";
        t.stated_cost_note = os.str();
    }
    return t;
}

std::string format_rate_table(const RateTable& t) {
    const RateExponents& e = t.exponents;
    std::ostringstream os;
    auto row = [&](const std::string& k, const std::string& v) { os << std::left << std::setw(22) << k << v << "\n"; };
    row("kernel", t.kernel_class);
    row("d", std::to_string(e.d));
    row("r", e.r.str());
    row("zeta", to_string(e.zeta));
    row("alpha", to_string(e.alpha));
    row("alpha*", to_string(t.optimal_alpha));
    row("chi_r", to_string(e.chi_r));
    row("rho", to_string(e.rho));
    row("v1", to_string(e.v1));
    row("v2", to_string(e.v2));
    row("v2_proof", to_string(e.v2_proof));
    row("v3", to_string(e.v3));
    row("coupled h exponent", to_string(t.coupled_h_exponent));
    row("cost exponent", to_string(t.cost_exponent));
    if (t.stated_cost_note) row("cost note", *t.stated_cost_note);
    return os.str();
}

} // namespace mkv
