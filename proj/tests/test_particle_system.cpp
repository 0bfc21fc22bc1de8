#include "doctest.h"
#include "oracles.hpp"

#include "mkv/particle_system.hpp"
#include "mkv/rng.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

using namespace mkv;

namespace {

KernelSpec zero_kernel(int d) {
    KernelSpec k;
    k.variant = KernelVariant::Zero;
    k.dim = d;
    return k;
}

KernelSpec lipschitz(int d) {
    KernelSpec k;
    k.variant = KernelVariant::BoundedLipschitzDemo;
    k.dim = d;
    return k;
}

SimConfig base_config(const KernelSpec& k, std::int64_t N, double alpha = 1.0 / 3.0) {
    SimConfig c;
    c.d = k.dim;
    c.N = N;
    c.kernel = k;
    c.mollifier = MollifierParams::make(k.dim, alpha, N);
    c.initial = InitialDensity::gaussian(k.dim, {}, 1.0);
    c.h = 0.01;
    c.T = 0.1;
    c.seed = 7;
    return c;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// two-sided Kolmogorov-Smirnov statistic against N(mu, var)
double ks_statistic(std::vector<double> xs, double mu, double var) {
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double D = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        double F = normal_cdf((xs[i] - mu) / std::sqrt(var));
        D = std::max({D, (i + 1) / n - F, F - i / n});
    }
    return D;
}

} // namespace

TEST_CASE("philox4x32-10 known-answer vectors") {
    auto a = philox4x32_10({0, 0, 0, 0}, {0, 0});
    CHECK(a == Philox4x32Counter{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
    auto b = philox4x32_10({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu});
    CHECK(b == Philox4x32Counter{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
    auto c = philox4x32_10({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u});
    CHECK(c == Philox4x32Counter{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("stream normals are standard") {
    const int n = 200000;
    double s = 0, s2 = 0;
    std::array<double, 1> z{};
    for (int i = 0; i < n; ++i) {
        stream_normals(3, static_cast<std::uint64_t>(i), RngPurpose::Noise, 5, 1, z);
        s += z[0];
        s2 += z[0] * z[0];
    }
    CHECK(std::abs(s / n) < 5.0 / std::sqrt(n));
    CHECK(std::abs(s2 / n - 1.0) < 5.0 * std::sqrt(2.0 / n));
    CHECK(derive_seed(1, 0) != derive_seed(1, 1));
    CHECK(derive_seed(1, 0) != derive_seed(2, 0));
}

TEST_CASE("config validation reports every error") {
    SimConfig c = base_config(zero_kernel(1), 10);
    CHECK(c.errors().empty());
    c.N = 0;
    c.h = -1.0;
    c.A = 0.0;
    c.noise_substeps = 0;
    c.snapshot_times = {0.5};
    auto e = c.errors();
    CHECK(e.size() >= 5);
    SimConfig w = base_config(zero_kernel(1), 10);
    CHECK(w.warnings().size() == 1);
    w.drift_sup_estimate = 1.0;
    w.A = 1.5;
    CHECK(w.warnings().size() == 1);
    w.A = 3.0;
    CHECK(w.warnings().empty());
    SimConfig dup = base_config(zero_kernel(1), 3);
    dup.stream_ids = {1, 1, 2};
    CHECK_FALSE(dup.errors().empty());
    CHECK_THROWS_AS(init_ensemble(dup), ConfigError);
}

TEST_CASE("step count and horizon") {
    SimConfig c = base_config(zero_kernel(1), 4);
    c.T = 0.5;
    c.h = 0.03;
    CHECK(c.steps() == 17);
    CHECK(c.step() * 17 == doctest::Approx(0.5).epsilon(1e-15));
    c.T = 0.0;
    CHECK(c.steps() == 0);
    auto tab = build_tabulated_kernel(c.kernel, c.mollifier);
    auto init = init_ensemble(c);
    auto out = simulate(c, tab);
    REQUIRE(out.size() == 1);
    CHECK(out[0].x == init.x);
    CHECK(out[0].time == 0.0);
}

TEST_CASE("determinism and seed sensitivity") {
    SimConfig c = base_config(lipschitz(1), 50);
    auto tab = build_tabulated_kernel(c.kernel, c.mollifier);
    auto a = simulate(c, tab);
    auto b = simulate(c, tab);
    CHECK(a.back().x == b.back().x);
    c.seed = 8;
    auto d = simulate(c, tab);
    CHECK(a.back().x != d.back().x);
}

TEST_CASE("swapping stream ids swaps trajectories exactly") {
    SimConfig c = base_config(lipschitz(2), 30);
    c.T = 0.05;
    auto tab = build_tabulated_kernel(c.kernel, c.mollifier);
    c.stream_ids.resize(30);
    std::iota(c.stream_ids.begin(), c.stream_ids.end(), std::uint64_t{100});
    auto a = simulate(c, tab).back();
    SimConfig s = c;
    std::swap(s.stream_ids[3], s.stream_ids[17]);
    auto b = simulate(s, tab).back();
    for (int i = 0; i < 30; ++i) {
        int j = i == 3 ? 17 : i == 17 ? 3 : i;
        CHECK(a.position(i) == b.position(j));
    }
}

TEST_CASE("drift of one and two particles") {
    SimConfig c = base_config(lipschitz(1), 1);
    auto tab1 = build_tabulated_kernel(c.kernel, c.mollifier);
    EnsembleState s;
    s.d = 1;
    s.N = 1;
    s.x = {0.3};
    CHECK(drift_field(s, tab1, {10.0})[0] == 0.0);

    SimConfig c2 = base_config(lipschitz(1), 2);
    auto tab2 = build_tabulated_kernel(c2.kernel, c2.mollifier);
    s.N = 2;
    s.x = {0.3, -0.9};
    auto b = drift_field(s, tab2, {10.0});
    double expect = oracle::mollified_kernel(c2.kernel, c2.mollifier, {1.2, 0.0, 0.0})[0] / 2.0;
    // off-node multilinear interpolation
    CHECK(b[0] == doctest::Approx(expect).epsilon(2e-3));
    CHECK(b[1] == -b[0]);
}

TEST_CASE("far-apart particles see the bare kernel") {
    KernelSpec ks;
    ks.variant = KernelVariant::KellerSegel;
    ks.dim = 2;
    SimConfig c = base_config(ks, 3, 0.25);
    auto tab = build_tabulated_kernel(c.kernel, c.mollifier);
    EnsembleState s;
    s.d = 2;
    s.N = 3;
    s.x = {0.0, 0.0, 3.0, 0.0, 0.0, 4.0};
    auto b = drift_field(s, tab, {1e6});
    for (int i = 0; i < 3; ++i) {
        Point expect{};
        for (int k = 0; k < 3; ++k)
            if (k != i) expect = expect + (1.0 / 3.0) * eval_kernel(ks, s.position(i) - s.position(k));
        CHECK(b[i * 2] == doctest::Approx(expect[0]).epsilon(1e-6));
        CHECK(b[i * 2 + 1] == doctest::Approx(expect[1]).epsilon(1e-6));
    }
}

TEST_CASE("cutoff saturates and is counted") {
    SimConfig c = base_config(lipschitz(1), 2);
    auto tab = build_tabulated_kernel(c.kernel, c.mollifier);
    EnsembleState s;
    s.d = 1;
    s.N = 2;
    s.x = {0.5, -0.5};
    SimStats st;
    auto b = drift_field(s, tab, {1e-3}, &st);
    CHECK(b[0] == -1e-3);
    CHECK(b[1] == 1e-3);
    CHECK(st.clamp_events == 2);
    CHECK(st.clamp_checks == 2);
    CHECK(st.clamp_fraction() == 1.0);
    CHECK(st.max_abs_raw_drift > 1e-3);
}

TEST_CASE("zero-noise dynamics: attraction contracts, repulsion separates") {
    SimConfig c = base_config(lipschitz(1), 2);
    c.zero_noise = true;
    c.T = 1.0;
    c.h = 0.01;
    auto tab = build_tabulated_kernel(c.kernel, c.mollifier);
    EnsembleState s;
    s.d = 1;
    s.N = 2;
    s.x = {0.5, -0.5};
    s.seed = c.seed;
    for (int k = 0; k < 100; ++k) em_step(s, c, tab);
    CHECK(s.x[0] - s.x[1] < 1.0);
    CHECK(s.x[0] + s.x[1] == doctest::Approx(0.0).epsilon(1e-14));

    KernelSpec rep;
    rep.variant = KernelVariant::RieszGradient;
    rep.dim = 2;
    rep.s = 0.0;
    rep.sign = Interaction::Repulsive;
    SimConfig r = base_config(rep, 2);
    r.zero_noise = true;
    auto tab2 = build_tabulated_kernel(r.kernel, r.mollifier);
    EnsembleState q;
    q.d = 2;
    q.N = 2;
    q.x = {0.2, 0.0, -0.2, 0.0};
    q.seed = r.seed;
    for (int k = 0; k < 50; ++k) em_step(q, r, tab2);
    CHECK(q.x[0] - q.x[2] > 0.4);
    CHECK(q.x[1] == 0.0);
}

TEST_CASE("driftless ensemble is Gaussian with variance sigma0^2 + 2T") {
    SimConfig c = base_config(zero_kernel(1), 10000);
    c.T = 0.5;
    c.h = 0.05;
    auto tab = build_tabulated_kernel(c.kernel, c.mollifier);
    auto s = simulate(c, tab).back();
    double m = std::accumulate(s.x.begin(), s.x.end(), 0.0) / s.N;
    double v = 0.0;
    for (double x : s.x) v += (x - m) * (x - m);
    v /= (s.N - 1);
    CHECK(std::abs(m) < 4.0 * std::sqrt(2.0 / s.N));
    CHECK(std::abs(v - 2.0) < 4.0 * 2.0 * std::sqrt(2.0 / s.N));
    // 1% critical value of the KS statistic
    CHECK(ks_statistic(s.x, 0.0, 2.0) < 1.628 / std::sqrt(static_cast<double>(s.N)));
    CHECK(std::abs(s.time - 0.5) < 1e-15);
}

TEST_CASE("noise substeps share the Brownian path across step sizes") {
    SimConfig coarse = base_config(zero_kernel(1), 20);
    coarse.h = 0.02;
    coarse.T = 0.2;
    coarse.noise_substeps = 2;
    SimConfig fine = coarse;
    fine.h = 0.01;
    fine.noise_substeps = 1;
    auto tab = build_tabulated_kernel(coarse.kernel, coarse.mollifier);
    auto a = simulate(coarse, tab).back();
    auto b = simulate(fine, tab).back();
    for (std::size_t i = 0; i < a.x.size(); ++i) CHECK(a.x[i] == doctest::Approx(b.x[i]).epsilon(1e-12));
}

TEST_CASE("snapshots at requested grid times") {
    SimConfig c = base_config(zero_kernel(1), 5);
    c.T = 0.1;
    c.h = 0.01;
    c.snapshot_times = {0.0, 0.05, 0.1};
    auto tab = build_tabulated_kernel(c.kernel, c.mollifier);
    auto out = simulate(c, tab);
    REQUIRE(out.size() == 3);
    CHECK(out[0].step == 0);
    CHECK(out[1].step == 5);
    CHECK(out[2].step == 10);
    c.snapshot_times = {0.055};
    CHECK_FALSE(c.errors().empty());
}

TEST_CASE("mollified empirical measure") {
    SimConfig c = base_config(zero_kernel(1), 1000);
    auto tab = build_tabulated_kernel(c.kernel, c.mollifier);
    auto s = init_ensemble(c);
    const double eps = c.mollifier.scaled_radius();
    int n = 2;
    while (12.0 / n > eps / 8.0) n *= 2;
    auto g = GridField::zeros(1, n, 6.0);
    auto res = mollified_empirical_measure(s, c.mollifier, g);
    CHECK(res.leakage < 1e-12);
    CHECK_FALSE(res.leakage_warning);
    CHECK(res.field.integral() == doctest::Approx(1.0).epsilon(1e-12));
    for (double v : res.field.values) CHECK(v >= 0.0);

    auto narrow = GridField::zeros(1, n / 4, 1.5);
    auto cut = mollified_empirical_measure(s, c.mollifier, narrow);
    CHECK(cut.leakage > 0.05);
    CHECK(cut.leakage_warning);
    CHECK(cut.field.integral() == doctest::Approx(1.0 - cut.leakage).epsilon(1e-12));

    auto coarse = GridField::zeros(1, 8, 6.0);
    CHECK_THROWS_AS(mollified_empirical_measure(s, c.mollifier, coarse), ConfigError);
}

TEST_CASE("histogram density and standard error") {
    std::vector<Point> pts;
    for (int i = 0; i < 4000; ++i) pts.push_back({-0.9 + 1.8 * ((i % 9) + 0.5) / 9.0, 0.0, 0.0});
    pts.push_back({5.0, 0.0, 0.0});
    auto g = GridField::zeros(1, 10, 1.0);
    auto est = histogram_density(pts, g);
    CHECK(est.samples == 4001);
    CHECK(est.outside == 1);
    CHECK(est.density.integral() == doctest::Approx(4000.0 / 4001.0).epsilon(1e-14));
    for (std::size_t i = 0; i < est.counts.size(); ++i) {
        double p = est.counts[i] / 4001.0;
        CHECK(est.stderr_.values[i] == doctest::Approx(std::sqrt(p * (1 - p) / 4001.0) / 0.2).epsilon(1e-12));
    }
}

TEST_CASE("replica estimate and Gaussian domination for the driftless system") {
    SimConfig c = base_config(zero_kernel(1), 20);
    c.T = 0.2;
    c.h = 0.05;
    auto tab = build_tabulated_kernel(c.kernel, c.mollifier);
    auto g = GridField::zeros(1, 40, 5.0);
    auto pooled = replica_density_estimate(c, tab, -1, 200, 11, 0.2, g, 2);
    CHECK(pooled.samples == 4000);
    auto single = replica_density_estimate(c, tab, 0, 200, 11, 0.2, g, 1);
    CHECK(single.samples == 200);
    auto again = replica_density_estimate(c, tab, 0, 200, 11, 0.2, g, 3);
    CHECK(single.counts == again.counts);
    // the law is N(0, 1 + 2t); the bound g_c * u0 is N(0, 1 + c t)
    auto rep = gaussian_domination_check(pooled, c.initial, 0.2, 3.0, 20);
    CHECK(rep.cells_used > 5);
    CHECK(rep.R > 0.8);
    CHECK(rep.R < 1.5);
    CHECK_THROWS_AS(gaussian_domination_check(pooled, c.initial, 0.2, 2.0), ConfigError);
}

TEST_CASE("initial densities") {
    auto mix = InitialDensity::mixture(1, {{1.0, {-1.0, 0, 0}, 0.25}, {3.0, {1.0, 0, 0}, 0.25}});
    CHECK(mix.mean()[0] == doctest::Approx(0.5));
    CHECK(mix.variance() == doctest::Approx(0.25 + 1.0 - 0.25));
    double m = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) m += mix.sample(4, static_cast<std::uint64_t>(i))[0];
    CHECK(std::abs(m / n - 0.5) < 5.0 * std::sqrt(1.0 / n));
    CHECK(mix.smoothed({0.3, 0, 0}, 0.0) == doctest::Approx(mix.density({0.3, 0, 0})));

    auto f = GridField::zeros(1, 64, 4.0);
    for (std::size_t i = 0; i < f.size(); ++i) f.values[i] = std::exp(-0.5 * f.node(i)[0] * f.node(i)[0]);
    auto u = InitialDensity::from_field(f);
    double num = 0, den = 0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        num += f.values[i] * f.node(i)[0];
        den += f.values[i];
    }
    CHECK(u.mean()[0] == doctest::Approx(num / den).epsilon(1e-12));
    double s = 0, s2 = 0;
    for (int i = 0; i < n; ++i) {
        double x = u.sample(9, static_cast<std::uint64_t>(i))[0];
        s += x;
        s2 += x * x;
    }
    CHECK(std::abs(s / n - u.mean()[0]) < 5.0 * std::sqrt(u.variance() / n));
    CHECK(std::abs(s2 / n - u.variance()) < 0.05);
    CHECK(u.smoothed({0.0, 0, 0}, 0.5) == doctest::Approx(std::exp(0.0) / std::sqrt(2 * M_PI * 1.5)).epsilon(1e-2));

    auto bad = f;
    bad.values[3] = -1.0;
    CHECK_THROWS_AS(InitialDensity::from_field(bad), ConfigError);
    CHECK_THROWS_AS(InitialDensity::from_field(GridField::zeros(1, 8, 1.0)), ConfigError);
}

TEST_CASE("table mismatch is rejected") {
    SimConfig c = base_config(lipschitz(1), 10);
    SimConfig other = base_config(lipschitz(1), 20);
    auto tab = build_tabulated_kernel(other.kernel, other.mollifier);
    CHECK_THROWS_AS(simulate(c, tab), ConfigError);
}

TEST_CASE("snapshot dump") {
    SimConfig c = base_config(zero_kernel(2), 3);
    c.snapshot_times = {0.0, 0.1};
    auto tab = build_tabulated_kernel(c.kernel, c.mollifier);
    auto snaps = simulate(c, tab);
    auto file = std::filesystem::temp_directory_path() / "mkv_dump_test.txt";
    write_snapshot_dump(file, "run", 0, snaps);
    write_snapshot_dump(file, "run", 1, snaps, true);
    std::ifstream is(file);
    std::string line;
    int lines = 0;
    std::getline(is, line);
    CHECK(line == "run_id replica time index x1 x2");
    while (std::getline(is, line)) ++lines;
    CHECK(lines == 12);
    std::filesystem::remove(file);
}
