#include "doctest.h"

#include "mkv/rates.hpp"

#include <cmath>
#include <random>

using namespace mkv;

namespace {

const ExtRational kInfR = ExtRational::inf();

KernelSpec spec_of(KernelVariant v, int d) {
    KernelSpec k;
    k.variant = v;
    k.dim = d;
    if (v == KernelVariant::RieszGradient) k.s = d - 2.0;
    return k;
}

} // namespace

TEST_CASE("exponents for the worked examples") {
    auto bl = exponents(1, ExtRational(1), Rational(1), Rational(1, 3));
    CHECK(bl.chi_r == Rational(0));
    CHECK(bl.rho == Rational(1, 3));
    CHECK(bl.v2 == Rational(0));
    CHECK(bl.v3 == Rational(1, 2));

    auto ks = exponents(2, kInfR, Rational(1), Rational(1, 6));
    CHECK(ks.chi_r == Rational(2));
    CHECK(ks.rho == Rational(1, 6));
    CHECK(ks.v2 == Rational(1, 3));
    CHECK(ks.v2_proof == Rational(2, 3));
    CHECK(ks.v3 == Rational(1, 2));

    auto tiny = exponents(2, kInfR, Rational(1), Rational(1, 1000000));
    CHECK(tiny.rho == Rational(1, 1000000));

    auto slack = exponents(1, ExtRational(1), Rational(1), Rational(1, 3), Rational(1, 100));
    CHECK(slack.v1 == Rational(1, 3) - Rational(1, 100));
    CHECK(slack.rho == Rational(1, 3));
}

TEST_CASE("chi_r limits") {
    CHECK(chi_r(3, kInfR) == Rational(3));
    CHECK(chi_r(3, ExtRational(1)) == Rational(0));
    CHECK(chi_r(2, ExtRational(2)) == Rational(0));
    CHECK(chi_r(2, ExtRational(4)) == Rational(1));
}

TEST_CASE("alpha window is enforced with the bound in the message") {
    CHECK_FALSE(check_alpha(1, ExtRational(1), Rational(9, 10)));
    auto m1 = check_alpha(1, ExtRational(1), Rational(11, 10));
    REQUIRE(m1);
    CHECK(m1->find("= 1 ") != std::string::npos);
    auto m2 = check_alpha(2, kInfR, Rational(3, 10));
    REQUIRE(m2);
    CHECK(m2->find("1/4") != std::string::npos);
    CHECK_THROWS_AS(exponents(2, kInfR, Rational(1), Rational(3, 10)), ConfigError);
    CHECK_THROWS_AS(exponents(2, kInfR, Rational(0), Rational(1, 10)), ConfigError);
    CHECK_THROWS_AS(exponents(2, ExtRational(Rational(1, 2)), Rational(1), Rational(1, 10)), ConfigError);
}

TEST_CASE("optimal alpha closed forms") {
    for (int d = 1; d <= 3; ++d) {
        CHECK(optimal_alpha(d, ExtRational(1), Rational(1)) == Rational(1, d + 2));
        CHECK(optimal_alpha(d, kInfR, Rational(1)) == Rational(1, 2 * (d + 1)));
        CHECK(optimal_alpha(d, ExtRational(1), Rational(1, 2)) == Rational(1, d + 1));
    }
}

TEST_CASE("optimal alpha maximises rho and respects the window") {
    std::mt19937_64 g(42);
    for (int d = 1; d <= 3; ++d) {
        for (ExtRational r : {ExtRational(1), ExtRational(2), ExtRational(4), kInfR}) {
            for (Rational zeta : {Rational(1, 4), Rational(1, 2), Rational(99, 100), Rational(1)}) {
                Rational a_star = optimal_alpha(d, r, zeta);
                CHECK(a_star < alpha_upper_bound(d, r));
                Rational best = exponents(d, r, zeta, a_star).rho;
                Rational bound = alpha_upper_bound(d, r);
                std::uniform_int_distribution<std::int64_t> ui(1, 9999);
                for (int i = 0; i < 100; ++i) {
                    Rational a = bound * Rational(ui(g), 10000);
                    CHECK(exponents(d, r, zeta, a).rho <= best);
                }
            }
        }
    }
}

TEST_CASE("rho is monotone in zeta and, below alpha*, in alpha") {
    for (int d = 1; d <= 3; ++d) {
        for (ExtRational r : {ExtRational(1), ExtRational(3), kInfR}) {
            Rational prev = -1;
            for (int k = 1; k <= 10; ++k) {
                Rational rho = exponents(d, r, Rational(k, 10), Rational(1, 100)).rho;
                CHECK(rho >= prev);
                prev = rho;
            }
            Rational a_star = optimal_alpha(d, r, Rational(1));
            prev = -1;
            for (int k = 1; k <= 20; ++k) {
                Rational rho = exponents(d, r, Rational(1), a_star * Rational(k, 20)).rho;
                CHECK(rho >= prev);
                prev = rho;
            }
        }
    }
}

TEST_CASE("coupled h") {
    auto bl = exponents(1, ExtRational(1), Rational(1), Rational(1, 3));
    CHECK(coupled_h(1e6, bl) == doctest::Approx(1e-4).epsilon(1e-12));
    CHECK(coupled_h_exponent(bl) == Rational(-2, 3));

    RateExponents eq;
    eq.rho = eq.v1 = Rational(1, 2);
    eq.v2 = 0;
    eq.v3 = Rational(1, 2);
    CHECK(coupled_h_exponent(eq) == Rational(-1));

    auto coul = exponents(2, kInfR, Rational(1), Rational(1, 6));
    CHECK(coupled_h_exponent(coul) == Rational(-1));

    for (double N : {10.0, 500.0, 4000.0, 1e6}) {
        for (const auto& e : {bl, coul, exponents(3, ExtRational(3), Rational(1, 2), Rational(1, 10))}) {
            double h = coupled_h(N, e);
            double t1 = std::pow(N, -to_double(e.v1));
            double t2 = std::pow(N, to_double(e.v2)) * std::pow(h, to_double(e.v3));
            CHECK(t1 == doctest::Approx(t2).epsilon(1e-12));
            CHECK(predicted_error(N, h, e, 3.0) == doctest::Approx(6.0 * t1).epsilon(1e-12));
        }
    }
}

TEST_CASE("cost exponent") {
    CHECK(cost_exponent(exponents(1, ExtRational(1), Rational(1), Rational(1, 3))) == Rational(8));
    for (int d = 2; d <= 3; ++d) {
        auto e = exponents(d, kInfR, Rational(1), Rational(1, 2 * (d + 1)));
        CHECK(cost_exponent(e) == Rational(6 * d + 6));
    }
    auto e = exponents(2, ExtRational(1), Rational(1, 2), Rational(1, 5));
    CHECK(cost_exponent(e) == Rational(2) / e.v1 + Rational(1) / e.v3);
}

TEST_CASE("predicted error arithmetic") {
    auto bl = exponents(1, ExtRational(1), Rational(1), Rational(1, 3));
    CHECK(predicted_error(1e4, 1e-4, bl) == doctest::Approx(std::pow(10.0, -4.0 / 3.0) + 1e-2).epsilon(1e-12));
    double a = predicted_error(1e4, 1e-2, bl) - std::pow(1e4, -1.0 / 3.0);
    double b = predicted_error(1e4, 0.5e-2, bl) - std::pow(1e4, -1.0 / 3.0);
    CHECK(b / a == doctest::Approx(std::pow(2.0, -0.5)).epsilon(1e-12));
}

TEST_CASE("log-log fitting") {
    std::vector<std::pair<double, double>> exact;
    for (double x : {1.0, 2.0, 4.0, 8.0, 16.0}) exact.push_back({x, 3.0 * std::pow(x, -0.5)});
    auto f = fit_loglog(exact);
    CHECK(f.slope == doctest::Approx(-0.5).epsilon(1e-12));
    CHECK(std::abs(f.slope + 0.5) < 1e-12);
    CHECK(f.stderr_slope < 1e-12);
    CHECK(f.r_squared == doctest::Approx(1.0));

    std::vector<std::pair<double, double>> flat{{1.0, 2.0}, {2.0, 2.0}, {5.0, 2.0}};
    CHECK(fit_loglog(flat).slope == 0.0);

    // 5% log-normal noise: the slope lands within 3 standard errors in most draws
    std::mt19937_64 g(9);
    std::normal_distribution<double> z(0.0, 0.05);
    int hits = 0;
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::pair<double, double>> pts;
        for (double x : {1.0, 2.0, 4.0, 8.0, 16.0, 32.0}) pts.push_back({x, std::pow(x, -1.0 / 3.0) * std::exp(z(g))});
        auto fit = fit_loglog(pts);
        if (std::abs(fit.slope + 1.0 / 3.0) <= 3.0 * fit.stderr_slope) ++hits;
    }
    CHECK(hits >= 190);

    CHECK_THROWS_AS(fit_loglog({{1.0, 1.0}, {2.0, 2.0}}), ConfigError);
    CHECK_THROWS_AS(fit_loglog({{1.0, 1.0}, {2.0, 0.0}, {3.0, 1.0}}), ConfigError);
    CHECK_THROWS_AS(fit_loglog({{-1.0, 1.0}, {2.0, 1.0}, {3.0, 1.0}}), ConfigError);
}

TEST_CASE("rate tables per kernel class") {
    for (int d = 1; d <= 3; ++d) {
        auto t = rate_table(spec_of(KernelVariant::BoundedLipschitzDemo, d));
        CHECK(t.optimal_alpha == Rational(1, d + 2));
        CHECK(t.exponents.v1 == Rational(1, d + 2));
        CHECK(t.exponents.v2 == Rational(0));
        CHECK(t.exponents.v3 == Rational(1, 2));
        CHECK_FALSE(t.stated_cost_note);
    }
    for (int d = 2; d <= 3; ++d) {
        auto t = rate_table(spec_of(KernelVariant::RieszGradient, d));
        CHECK(t.optimal_alpha == Rational(1, 2 * (d + 1)));
        CHECK(t.exponents.v1 == Rational(1, 2 * (d + 1)));
        CHECK(t.exponents.v2 == Rational(d, 2 * (d + 1)));
        CHECK(t.cost_exponent == Rational(6 * d + 6));
        REQUIRE(t.stated_cost_note);
        CHECK(t.stated_cost_note->find(std::to_string(6 * d + 5)) != std::string::npos);
        CHECK(t.stated_cost_note->find("unreconciled") != std::string::npos);
    }
    auto ks = rate_table(spec_of(KernelVariant::KellerSegel, 2));
    CHECK(ks.exponents.rho == Rational(1, 6));
    CHECK(ks.exponents.v2 == Rational(1, 3));
    CHECK(ks.stated_cost_note->find("11") != std::string::npos);
    CHECK(format_rate_table(ks).find("1/6") != std::string::npos);

    auto slackened = rate_table(spec_of(KernelVariant::KellerSegel, 2), Rational(1, 100));
    CHECK(slackened.exponents.zeta == Rational(99, 100));
}
