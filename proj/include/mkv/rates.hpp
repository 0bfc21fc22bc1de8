#pragma once

// Closed-form convergence exponents, the optimal mollifier exponent, the N-h
// coupling, the cost model and log-log slope fitting.

#include "mkv/kernel_catalog.hpp"
#include "mkv/rational.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace mkv {

struct RateExponents {
    int d = 1;
    ExtRational r;
    Rational zeta{1};
    Rational alpha{1, 3};
    Rational chi_r{0};
    Rational rho{0};
    Rational epsilon_slack{0};
    Rational v1{0};       // rho - epsilon_slack
    Rational v2{0};       // d alpha / r_bar (statement form)
    Rational v2_proof{0}; // 2 d alpha / r_bar (form reached at the end of the proof)
    Rational v3{0};       // zeta / 2
};

/// chi_r = max(0, d (1 - 2/r)); r = inf gives d.
Rational chi_r(int d, const ExtRational& r);

/// Upper bound of the admissible window 0 < alpha < 1/(d + max(0, 2d(1/2 - 1/r))).
Rational alpha_upper_bound(int d, const ExtRational& r);

/// Empty when alpha is admissible, otherwise a message naming the violated bound.
std::optional<std::string> check_alpha(int d, const ExtRational& r, const Rational& alpha);

/// Throws ConfigError when the inputs are out of range or alpha violates the window.
RateExponents exponents(int d, const ExtRational& r, const Rational& zeta, const Rational& alpha,
                        const Rational& epsilon_slack = Rational(0));

/// alpha* = 1/(2 zeta + d + chi_r), which equalises the two branches of rho.
Rational optimal_alpha(int d, const ExtRational& r, const Rational& zeta);

/// Exponent of the coupling h = N^{-(v1 + v2)/v3}, with v1 taken at zero slack.
Rational coupled_h_exponent(const RateExponents& e);
double coupled_h(double N, const RateExponents& e);

/// 2/v1 + 1/v3 + v2/(v1 v3).
Rational cost_exponent(const RateExponents& e);

/// C (N^{-v1} + N^{v2} h^{v3}).
double predicted_error(double N, double h, const RateExponents& e, double C = 1.0);

struct FitResult {
    double slope = 0.0;
    double intercept = 0.0;
    double stderr_slope = 0.0;
    double r_squared = 1.0;
    std::vector<std::pair<double, double>> points;
};

/// Least-squares line through (log x, log y). Requires >= 3 points with x, y > 0.
FitResult fit_loglog(const std::vector<std::pair<double, double>>& points);

/// Exponent table for a kernel class at its optimal alpha.
struct RateTable {
    std::string kernel_class;
    KernelAssumptions assumptions;
    RateExponents exponents;
    Rational optimal_alpha{0};
    Rational coupled_h_exponent{0};
    Rational cost_exponent{0};
    /// Stated cost exponent for Riesz-type classes, which differs from the
    /// formula value (6d+5 stated, 6d+6 computed).
    std::optional<std::string> stated_cost_note;
};

/// Uses assumptions_for(spec, slack) and alpha = optimal_alpha (or the given alpha).
RateTable rate_table(const KernelSpec& spec, const Rational& slack = Rational(0),
                     const std::optional<Rational>& alpha = std::nullopt);

/// Aligned plain-text rendering of a rate table.
std::string format_rate_table(const RateTable& t);

} // namespace mkv
