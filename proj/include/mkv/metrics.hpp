#pragma once

// Grid norms and the error functionals of the propagation-of-chaos theorems.

#include "mkv/grid_field.hpp"
#include "mkv/particle_system.hpp"

#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

namespace mkv {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Cell-volume weighted L^p norm; max |f| for p = infinity.
double lp_norm(const GridField& f, double p);

struct L1LrNorm {
    double l1 = 0.0;
    double lr = 0.0;
    double value() const { return l1 > lr ? l1 : lr; }
};

/// ||f||_{L^1 cap L^r} realised as max(||f||_1, ||f||_r).
L1LrNorm l1_lr_parts(const GridField& f, double r);
double l1_lr_norm(const GridField& f, double r);

GridField difference(const GridField& a, const GridField& b);

/// max over snapshots of ||mu_t - u_t||_{L^1 cap L^r}; snapshots must share
/// grids and times.
double theorem1_error(const std::vector<GridField>& mu_series, const std::vector<GridField>& u_series, double r,
                      std::vector<L1LrNorm>* per_snapshot = nullptr);

/// Averages of u over the cells of side factor * spacing centred at every
/// factor-th node (exact for the trigonometric interpolant of u).
GridField cell_average(const GridField& u, int factor);

struct Theorem2Result {
    double error = 0.0;
    int cells_used = 0;
    GridField weighted; // |estimate - u| / weight, zero on excluded cells
};

/// max over cells of |estimate - u| / (g_{c/p}(t) * u0)^{1/p}. Cells whose weight
/// is below 1e-300 are excluded, as are cells with fewer than min_count samples
/// when counts are given. Requires c > 2 and 1 < p < d/(d-1).
Theorem2Result theorem2_error(const GridField& estimate, const GridField& u, const InitialDensity& u0, double t, double c,
                              double p, const std::vector<std::uint64_t>* counts = nullptr,
                              std::uint64_t min_count = 20);

/// (mean e^m)^{1/m}.
double moment_over_replicas(const std::vector<double>& errors, double m);

struct BootstrapInterval {
    double estimate = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    int resamples = 0;
};

/// Percentile bootstrap of moment_over_replicas (counter-based resampling).
BootstrapInterval bootstrap_moment(const std::vector<double>& errors, double m, std::uint64_t seed,
                                   int resamples = 200, double level = 0.95);

double median(std::vector<double> v);

struct ErrorRecord {
    std::int64_t N = 0;
    double h = 0.0;
    int replica = 0;
    double m = 1.0;
    double sup_t_error = 0.0;
    std::vector<double> snapshot_times;
    std::vector<double> snapshot_errors;
    std::vector<double> snapshot_l1;
    std::vector<double> snapshot_lr;
    std::optional<double> thm2_error;
    double runtime_seconds = 0.0;
    double clamp_fraction = 0.0;

    /// Every entry finite and nonnegative.
    bool valid() const;
};

} // namespace mkv
