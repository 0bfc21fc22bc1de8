#include "mkv/metrics.hpp"

#include "mkv/pde_reference.hpp"
#include "mkv/rng.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

namespace mkv {

double lp_norm(const GridField& f, double p) {
    if (!(p >= 1.0)) throw ConfigError("L^p norm needs p >= 1");
    if (std::isinf(p)) {
        double m = 0.0;
        for (double v : f.values) m = std::max(m, std::abs(v));
        return m;
    }
    double s = 0.0;
    if (p == 1.0) {
        for (double v : f.values) s += std::abs(v);
        return s * f.cell_volume();
    }
    if (p == 2.0) {
        for (double v : f.values) s += v * v;
        return std::sqrt(s * f.cell_volume());
    }
    for (double v : f.values) s += std::pow(std::abs(v), p);
    return std::pow(s * f.cell_volume(), 1.0 / p);
}

L1LrNorm l1_lr_parts(const GridField& f, double r) {
    if (!(r >= 1.0)) throw ConfigError("L^1 cap L^r norm needs r >= 1");
    L1LrNorm n;
    n.l1 = lp_norm(f, 1.0);
    n.lr = r == 1.0 ? n.l1 : lp_norm(f, r);
    return n;
}

double l1_lr_norm(const GridField& f, double r) { return l1_lr_parts(f, r).value(); }

GridField difference(const GridField& a, const GridField& b) {
    require_same_grid(a, b);
    GridField out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.values[i] -= b.values[i];
    return out;
}

double theorem1_error(const std::vector<GridField>& mu_series, const std::vector<GridField>& u_series, double r,
                      std::vector<L1LrNorm>* per_snapshot) {
    if (mu_series.size() != u_series.size())
        throw ConfigError("snapshot count mismatch: " + std::to_string(mu_series.size()) + " vs " +
                          std::to_string(u_series.size()));
    double worst = 0.0;
    if (per_snapshot) per_snapshot->clear();
    for (std::size_t k = 0; k < mu_series.size(); ++k) {
        if (std::abs(mu_series[k].time - u_series[k].time) > 1e-9 * std::max(1.0, std::abs(u_series[k].time)))
            throw ConfigError("snapshot time mismatch at index " + std::to_string(k));
        auto parts = l1_lr_parts(difference(mu_series[k], u_series[k]), r);
        worst = std::max(worst, parts.value());
        if (per_snapshot) per_snapshot->push_back(parts);
    }
    return worst;
}

GridField cell_average(const GridField& u, int factor) {
    if (factor < 1 || u.n % factor != 0) throw ConfigError("coarsening factor must divide the grid size");
    const int nc = u.n / factor;
    const double w = factor * u.spacing();
    SpectralBox box(u.d, u.n, u.L);
    std::vector<std::complex<double>> uh(box.spec_size());
    box.forward(u.values.data(), uh.data());
    const double norm = 1.0 / static_cast<double>(box.real_size());
    for (std::size_t k = 0; k < uh.size(); ++k) {
        Point xi = box.wavevector(k);
        double m = 1.0;
        for (int a = 0; a < u.d; ++a) {
            double z = 0.5 * xi[a] * w;
            m *= z == 0.0 ? 1.0 : std::sin(z) / z;
        }
        uh[k] *= m * norm;
    }
    GridField smooth = u;
    box.inverse(uh.data(), smooth.values.data());
    GridField out = GridField::zeros(u.d, nc, u.L, u.time);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::size_t rem = i, src = 0, stride = 1;
        for (int a = u.d - 1; a >= 0; --a) {
            std::size_t J = rem % static_cast<std::size_t>(nc);
            rem /= static_cast<std::size_t>(nc);
            src += J * static_cast<std::size_t>(factor) * stride;
            stride *= static_cast<std::size_t>(u.n);
        }
        out.values[i] = smooth.values[src];
    }
    return out;
}

Theorem2Result theorem2_error(const GridField& estimate, const GridField& u, const InitialDensity& u0, double t, double c,
                              double p, const std::vector<std::uint64_t>* counts, std::uint64_t min_count) {
    require_same_grid(estimate, u);
    const int d = u.d;
    if (!(c > 2.0)) throw ConfigError("the Gaussian-weighted error needs c > 2");
    if (!(p > 1.0) || (d > 1 && !(p < static_cast<double>(d) / (d - 1))))
        throw ConfigError("the Gaussian-weighted error needs 1 < p < d/(d-1)");
    if (!(t > 0.0)) throw ConfigError("the Gaussian-weighted error needs t > 0");
    if (counts && counts->size() != u.size()) throw ConfigError("count vector does not match the grid");
    Theorem2Result res;
    res.weighted = GridField::zeros(u.d, u.n, u.L, t);
    for (std::size_t i = 0; i < u.size(); ++i) {
        if (counts && (*counts)[i] < min_count) continue;
        double base = u0.smoothed(u.node(i), (c / p) * t);
        if (!(base > 0.0)) continue;
        double weight = std::pow(base, 1.0 / p);
        if (!(weight >= 1e-300)) continue;
        double e = std::abs(estimate.values[i] - u.values[i]) / weight;
        res.weighted.values[i] = e;
        res.error = std::max(res.error, e);
        res.cells_used += 1;
    }
    return res;
}

double moment_over_replicas(const std::vector<double>& errors, double m) {
    if (errors.empty()) throw ConfigError("moment over an empty replica set");
    if (!(m >= 1.0)) throw ConfigError("moment order m must be >= 1");
    double s = 0.0;
    if (m == 1.0) {
        for (double e : errors) s += e;
        return s / static_cast<double>(errors.size());
    }
    for (double e : errors) s += std::pow(std::abs(e), m);
    return std::pow(s / static_cast<double>(errors.size()), 1.0 / m);
}

BootstrapInterval bootstrap_moment(const std::vector<double>& errors, double m, std::uint64_t seed, int resamples,
                                   double level) {
    BootstrapInterval out;
    out.estimate = moment_over_replicas(errors, m);
    out.resamples = resamples;
    if (resamples < 1) {
        out.lo = out.hi = out.estimate;
        return out;
    }
    const std::size_t n = errors.size();
    std::vector<double> stats(static_cast<std::size_t>(resamples));
    std::vector<double> sample(n);
    std::vector<double> u(n);
    for (int b = 0; b < resamples; ++b) {
        stream_uniforms(seed, static_cast<std::uint64_t>(b), RngPurpose::Bootstrap, 0, static_cast<int>(n), u);
        for (std::size_t i = 0; i < n; ++i)
            sample[i] = errors[std::min(n - 1, static_cast<std::size_t>(u[i] * static_cast<double>(n)))];
        stats[static_cast<std::size_t>(b)] = moment_over_replicas(sample, m);
    }
    std::sort(stats.begin(), stats.end());
    auto quantile = [&](double q) {
        double pos = q * (stats.size() - 1);
        auto lo = static_cast<std::size_t>(std::floor(pos));
        auto hi = std::min(stats.size() - 1, lo + 1);
        return stats[lo] + (pos - static_cast<double>(lo)) * (stats[hi] - stats[lo]);
    };
    out.lo = quantile(0.5 * (1.0 - level));
    out.hi = quantile(1.0 - 0.5 * (1.0 - level));
    return out;
}

double median(std::vector<double> v) {
    if (v.empty()) throw ConfigError("median of an empty list");
    std::sort(v.begin(), v.end());
    std::size_t k = v.size() / 2;
    return v.size() % 2 ? v[k] : 0.5 * (v[k - 1] + v[k]);
}

bool ErrorRecord::valid() const {
    auto ok = [](double v) { return std::isfinite(v) && v >= 0.0; };
    if (N < 1 || !ok(h) || !ok(m) || !ok(sup_t_error) || !ok(runtime_seconds) || !ok(clamp_fraction)) return false;
    for (const auto* vec : {&snapshot_times, &snapshot_errors, &snapshot_l1, &snapshot_lr})
        for (double v : *vec)
            if (!ok(v)) return false;
    if (thm2_error && !ok(*thm2_error)) return false;
    return true;
}

} // namespace mkv
