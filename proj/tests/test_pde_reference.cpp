#include "doctest.h"
#include "oracles.hpp"

#include "mkv/pde_reference.hpp"

#include <cmath>
#include <numbers>
#include <random>

using namespace mkv;

namespace {

constexpr double kPi = std::numbers::pi;

double gauss1(double x, double mu, double var) { return std::exp(-0.5 * (x - mu) * (x - mu) / var) / std::sqrt(2 * kPi * var); }

KernelSpec keller_segel(double chi = 1.0) {
    KernelSpec k;
    k.variant = KernelVariant::KellerSegel;
    k.dim = 2;
    k.chi = chi;
    return k;
}

KernelSpec lipschitz(int d) {
    KernelSpec k;
    k.variant = KernelVariant::BoundedLipschitzDemo;
    k.dim = d;
    return k;
}

KernelSpec zero_kernel(int d) {
    KernelSpec k;
    k.dim = d;
    return k;
}

GridField gaussian_grid(int d, int n, double L, double var) {
    return sample_on_grid(d, n, L, [&](const Point& x) {
        return std::exp(-0.5 * norm2(x) / var) / std::pow(2 * kPi * var, 0.5 * d);
    });
}

double linf(const GridField& a, const GridField& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values[i] - b.values[i]));
    return m;
}

double l2(const GridField& a) {
    double s = 0;
    for (double v : a.values) s += v * v;
    return std::sqrt(s * a.cell_volume());
}

double l1_diff(const GridField& a, const GridField& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a.values[i] - b.values[i]);
    return s * a.cell_volume();
}

double mixture1(double y) { return 0.6 * gauss1(y, -1.0, 0.5) + 0.4 * gauss1(y, 1.5, 0.3); }

} // namespace

TEST_CASE("heat step: constants, Fourier modes and Gaussians") {
    auto c = sample_on_grid(1, 64, 3.0, [](const Point&) { return 0.7; });
    CHECK(linf(heat_step(c, 0.4), c) < 1e-15);

    const double k = kPi * 3.0 / 3.0;
    auto m = sample_on_grid(1, 64, 3.0, [&](const Point& x) { return 1.0 + 0.5 * std::cos(k * x[0]); });
    auto hm = heat_step(m, 0.05);
    auto expect = sample_on_grid(1, 64, 3.0, [&](const Point& x) { return 1.0 + 0.5 * std::exp(-k * k * 0.05) * std::cos(k * x[0]); });
    CHECK(linf(hm, expect) < 1e-14);
    CHECK(hm.time == doctest::Approx(0.05));

    auto g = gaussian_grid(1, 256, 10.0, 0.5);
    auto hg = heat_step(g, 0.3);
    CHECK(linf(hg, gaussian_grid(1, 256, 10.0, 1.1)) < 1e-8);
    CHECK(hg.integral() == doctest::Approx(g.integral()).epsilon(1e-14));

    auto g2 = gaussian_grid(2, 64, 8.0, 0.7);
    CHECK(linf(heat_step(g2, 0.25), gaussian_grid(2, 64, 8.0, 1.2)) < 1e-8);
}

TEST_CASE("bounded Lipschitz convolution matches direct quadrature") {
    auto u = sample_on_grid(1, 256, 10.0, [](const Point& x) { return mixture1(x[0]); });
    KernelOperator analytic(lipschitz(1), 256, 10.0, KernelTransformMode::AnalyticSymbol);
    KernelOperator moll(lipschitz(1), 256, 10.0, KernelTransformMode::MollifiedGrid);
    auto ba = analytic.apply(u);
    auto bm = moll.apply(u);
    auto rule = oracle::composite(-14.0, 14.0, 400, 8);
    double scale = 0.0;
    for (double v : ba[0].values) scale = std::max(scale, std::abs(v));
    std::mt19937_64 gen(5);
    std::uniform_int_distribution<int> pick(64, 192);
    for (int t = 0; t < 10; ++t) {
        int j = pick(gen);
        double x = u.coord(j), ref = 0.0;
        for (std::size_t q = 0; q < rule.x.size(); ++q) {
            double z = x - rule.x[q];
            ref += rule.w[q] * (-z * std::exp(-0.5 * z * z)) * mixture1(rule.x[q]);
        }
        CHECK(std::abs(ba[0].values[j] - ref) <= 1e-5 * std::abs(ref) + 1e-12);
        // solver-scale mollification with eps ~ 2 spacing
        CHECK(std::abs(bm[0].values[j] - ref) <= 5e-3 * scale);
    }
}

TEST_CASE("bounded Lipschitz convolution in two dimensions") {
    const double var = 0.6;
    auto u = gaussian_grid(2, 64, 8.0, var);
    KernelOperator op(lipschitz(2), 64, 8.0, KernelTransformMode::AnalyticSymbol);
    auto b = op.apply(u);
    // K*g = grad(exp(-|.|^2/2) * g), and exp(-|.|^2/2) * N(0, var I) = exp(-|x|^2/(2s)) / s with s = 1 + var
    for (int j : {20, 29, 37, 41}) {
        Point x{u.coord(j), u.coord(j + 3), 0.0};
        double s = 1.0 + var;
        double pot = std::exp(-0.5 * norm2(x) / s) / s;
        double expect0 = -x[0] / s * pot;
        std::size_t flat = static_cast<std::size_t>(j) * 64 + static_cast<std::size_t>(j + 3);
        CHECK(b[0].values[flat] == doctest::Approx(expect0).epsilon(1e-9));
    }
}

TEST_CASE("Keller-Segel: narrow bump far field equals K, analytic symbol constant") {
    auto u = gaussian_grid(2, 128, 8.0, 0.04);
    KernelOperator moll(keller_segel(), 128, 8.0, KernelTransformMode::MollifiedGrid);
    auto b = moll.apply(u);
    int checked = 0;
    for (std::size_t i = 0; i < u.size(); i += 97) {
        Point x = u.node(i);
        double r = norm(x);
        if (r < 2.0 || r > 6.0) continue;
        Point K = eval_kernel(keller_segel(), x);
        CHECK(std::hypot(b[0].values[i] - K[0], b[1].values[i] - K[1]) <= 1e-3 * norm(K));
        ++checked;
    }
    CHECK(checked > 20);

    // periodic analytic symbol against the free-space result near the bump
    auto w = gaussian_grid(2, 256, 16.0, 0.3);
    KernelOperator a2(keller_segel(), 256, 16.0, KernelTransformMode::AnalyticSymbol);
    KernelOperator m2(keller_segel(), 256, 16.0, KernelTransformMode::MollifiedGrid);
    auto pa = a2.apply(w), pm = m2.apply(w);
    for (std::size_t i = 0; i < w.size(); i += 131) {
        Point x = w.node(i);
        double r = norm(x);
        if (r < 0.5 || r > 1.5) continue;
        double ref = std::hypot(pm[0].values[i], pm[1].values[i]);
        CHECK(std::hypot(pa[0].values[i] - pm[0].values[i], pa[1].values[i] - pm[1].values[i]) <= 2e-2 * ref);
    }
}

TEST_CASE("odd kernel on an even field gives an odd drift") {
    const int n = 64;
    auto u = gaussian_grid(2, n, 6.0, 0.5);
    KernelOperator op(keller_segel(), n, 6.0, KernelTransformMode::MollifiedGrid);
    auto b = op.apply(u);
    for (int j0 = 1; j0 < n; ++j0)
        for (int j1 = 1; j1 < n; ++j1) {
            std::size_t a = static_cast<std::size_t>(j0) * n + j1;
            std::size_t m = static_cast<std::size_t>(n - j0) * n + (n - j1);
            CHECK(std::abs(b[0].values[a] + b[0].values[m]) < 1e-10);
            CHECK(std::abs(b[1].values[a] + b[1].values[m]) < 1e-10);
        }
}

TEST_CASE("nonlinear step: trivial cases") {
    auto u = gaussian_grid(1, 64, 6.0, 0.5);
    KernelOperator zero(zero_kernel(1), 64, 6.0, KernelTransformMode::MollifiedGrid);
    CHECK(linf(nonlinear_step(u, zero, 0.1, true), u) == 0.0);

    auto c = sample_on_grid(2, 32, 4.0, [](const Point&) { return 1.0 / 64.0; });
    KernelOperator ks(keller_segel(), 32, 4.0, KernelTransformMode::AnalyticSymbol);
    CHECK(linf(nonlinear_step(c, ks, 0.1, true), c) < 1e-15);

    auto g = gaussian_grid(2, 32, 4.0, 0.3);
    auto g1 = nonlinear_step(g, ks, 0.01, true);
    CHECK(g1.integral() == doctest::Approx(g.integral()).epsilon(1e-14));
}

TEST_CASE("one splitting step has local error O(dt^2)") {
    auto u = sample_on_grid(1, 128, 8.0, [](const Point& x) { return mixture1(x[0]); });
    KernelOperator op(lipschitz(1), 128, 8.0, KernelTransformMode::AnalyticSymbol);
    auto full = [&](const GridField& v, double dt) { return nonlinear_step(heat_step(v, dt), op, dt, true); };
    std::vector<double> err;
    for (double dt : {0.01, 0.005}) err.push_back(l1_diff(full(u, dt), full(full(u, dt / 2), dt / 2)));
    CHECK(std::log2(err[0] / err[1]) >= 1.8);
}

TEST_CASE("driftless solve reproduces the heat flow of a Gaussian") {
    PdeConfig cfg;
    cfg.kernel = zero_kernel(1);
    cfg.n = 256;
    cfg.L = 12.0;
    cfg.T = 0.5;
    cfg.dt = 0.01;
    auto u0 = gaussian_grid(1, 256, 12.0, 1.0);
    auto res = solve_mild(u0, cfg);
    REQUIRE(res.snapshots.size() == 1);
    CHECK(res.snapshots[0].time == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(linf(res.snapshots[0], gaussian_grid(1, 256, 12.0, 2.0)) <= 1e-6);
    CHECK(res.drift_sup == 0.0);
    CHECK(res.warnings.empty());
}

TEST_CASE("Keller-Segel subcritical: mass, boundedness, self-convergence") {
    PdeConfig cfg;
    cfg.kernel = keller_segel(1.0);
    cfg.n = 64;
    cfg.L = 8.0;
    cfg.T = 0.1;
    cfg.dt = 1e-4;
    cfg.snapshot_times = {0.05, 0.1};
    auto u0 = gaussian_grid(2, 64, 8.0, 0.5);
    auto res = solve_mild(u0, cfg);
    CHECK(res.steps >= 1000);
    CHECK(res.max_mass_error <= 1e-10);
    CHECK(res.snapshots.size() == 2);
    double umax = 0;
    for (const auto& s : res.snapshots)
        for (double v : s.values) umax = std::max(umax, v);
    CHECK(std::isfinite(umax));
    CHECK(res.drift_sup > 0.0);
    CHECK(std::isfinite(res.drift_sup));
    CHECK(res.self_convergence_l1 < 1e-3);
    // attraction: the peak grows relative to pure diffusion
    double heat_peak = 1.0 / (2 * kPi * (0.5 + 0.2));
    CHECK(umax > heat_peak);
}

TEST_CASE("dt halving contracts the self-convergence distance") {
    PdeConfig cfg;
    cfg.kernel = lipschitz(1);
    cfg.mode = KernelTransformMode::AnalyticSymbol;
    cfg.n = 128;
    cfg.L = 8.0;
    cfg.T = 0.5;
    cfg.self_convergence = false;
    auto u0 = sample_on_grid(1, 128, 8.0, [](const Point& x) { return mixture1(x[0]); });
    std::vector<GridField> sol;
    for (double dt : {0.02, 0.01, 0.005}) {
        cfg.dt = dt;
        sol.push_back(solve_mild(u0, cfg).snapshots.back());
    }
    double e1 = l1_diff(sol[0], sol[1]), e2 = l1_diff(sol[1], sol[2]);
    CHECK(e1 / e2 >= 1.8);
}

TEST_CASE("parity preserved in time") {
    PdeConfig cfg;
    cfg.kernel = keller_segel(2.0);
    cfg.n = 64;
    cfg.L = 6.0;
    cfg.T = 0.05;
    cfg.dt = 1e-3;
    cfg.self_convergence = false;
    auto res = solve_mild(gaussian_grid(2, 64, 6.0, 0.5), cfg);
    const auto& u = res.snapshots.back();
    for (int j0 = 1; j0 < 64; ++j0)
        for (int j1 = 1; j1 < 64; ++j1)
            CHECK(std::abs(u.values[j0 * 64 + j1] - u.values[(64 - j0) * 64 + (64 - j1)]) < 1e-9);
}

TEST_CASE("heat-kernel gradient inequality on band-limited fields") {
    std::mt19937_64 gen(17);
    std::normal_distribution<double> z;
    double worst = 0;
    for (int d : {1, 2}) {
        for (int trial = 0; trial < 20; ++trial) {
            auto f = GridField::zeros(d, 64, kPi);
            std::vector<std::array<double, 4>> modes;
            for (int m = 0; m < 6; ++m) modes.push_back({z(gen), std::floor(5 * std::abs(z(gen))), std::floor(5 * std::abs(z(gen))), z(gen)});
            for (std::size_t i = 0; i < f.size(); ++i) {
                Point x = f.node(i);
                for (const auto& m : modes) f.values[i] += m[0] * std::cos(m[1] * x[0] + (d == 2 ? m[2] * x[1] : 0.0) + m[3]);
            }
            for (double t : {0.01, 0.1, 1.0}) {
                auto grad = spectral_gradient(heat_step(f, t));
                double s = 0;
                for (const auto& g : grad) s += std::pow(l2(g), 2);
                if (l2(f) > 0) worst = std::max(worst, std::sqrt(t) * std::sqrt(s) / l2(f));
            }
        }
    }
    CHECK(worst <= 1.0);
    CHECK(worst <= 1.0 / std::sqrt(2.0 * std::exp(1.0)) + 1e-12);
}

TEST_CASE("Gaussian gradient bound with c = 4") {
    for (int d : {1, 2}) {
        for (double t : {0.01, 0.1, 1.0}) {
            auto grid = GridField::zeros(d, d == 1 ? 2048 : 256, 6.0);
            GaussianParams g2{2.0, t}, g4{4.0, t};
            double C = 0;
            for (std::size_t i = 0; i < grid.size(); ++i) {
                Point x = grid.node(i);
                double den = g4.density(x, d);
                if (den < 1e-300) continue;
                C = std::max(C, std::sqrt(t) * norm(g2.gradient(x, d)) / den);
            }
            double bound = std::pow(2.0, 0.5 * d) * std::exp(-0.5);
            CHECK(C <= bound * (1 + 1e-12));
            CHECK(C >= 0.95 * bound);
        }
    }
}

TEST_CASE("solver configuration errors and aborts") {
    PdeConfig cfg;
    cfg.kernel.variant = KernelVariant::KellerSegel;
    cfg.kernel.dim = 3;
    CHECK_FALSE(cfg.errors().empty());
    cfg.kernel = keller_segel();
    cfg.n = 100;
    CHECK_FALSE(cfg.errors().empty());
    cfg.n = 32;
    CHECK(cfg.errors().empty());
    KernelSpec tr;
    tr.variant = KernelVariant::TruncatedRiesz;
    tr.dim = 1;
    PdeConfig t2;
    t2.kernel = tr;
    t2.mode = KernelTransformMode::AnalyticSymbol;
    CHECK_FALSE(t2.errors().empty());
    CHECK_THROWS_AS(parse_transform_mode("fft"), ConfigError);

    // CFL
    PdeConfig big;
    big.kernel = keller_segel(1.0);
    big.n = 32;
    big.L = 4.0;
    big.T = 1.0;
    big.dt = 0.5;
    CHECK_THROWS_AS(solve_mild(gaussian_grid(2, 32, 4.0, 0.2), big), ConfigError);

    // unnormalized input
    auto u = gaussian_grid(2, 32, 4.0, 0.2);
    for (double& v : u.values) v *= 2;
    big.dt = 1e-3;
    CHECK_THROWS_AS(solve_mild(u, big), ConfigError);

    // impossible self-convergence tolerance
    PdeConfig sc;
    sc.kernel = lipschitz(1);
    sc.n = 64;
    sc.L = 6.0;
    sc.T = 0.2;
    sc.dt = 0.05;
    sc.self_convergence_tol = 1e-14;
    CHECK_THROWS_AS(solve_mild(gaussian_grid(1, 64, 6.0, 0.5), sc), SolverAbort);

    // strongly supercritical, under-resolved collapse goes negative
    PdeConfig blow;
    blow.kernel = keller_segel(200.0);
    blow.n = 16;
    blow.L = 2.0;
    blow.T = 0.05;
    blow.dt = 2e-5;
    blow.self_convergence = false;
    CHECK_THROWS_AS(solve_mild(gaussian_grid(2, 16, 2.0, 0.1), blow), SolverAbort);
}
