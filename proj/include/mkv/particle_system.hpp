#pragma once

// Euler-Maruyama scheme for the mollified interacting particle system
//   X^i_{t+h} = X^i_t + h F_A((1/N) sum_k K*V^N(X^i_t - X^k_t)) + sqrt(2) dW^i,
// the (mollified) empirical measure, and replica-based single-particle
// density estimates.

#include "mkv/common.hpp"
#include "mkv/grid_field.hpp"
#include "mkv/kernel_catalog.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mkv {

// ---------------------------------------------------------------------------
// Initial law

enum class InitialVariant { IsotropicGaussian, GaussianMixture, GridFieldSampler };

struct MixtureComponent {
    double weight = 1.0;
    Point center{};
    double variance = 1.0;
};

class InitialDensity {
public:
    static InitialDensity gaussian(int d, const Point& center, double variance);
    static InitialDensity mixture(int d, std::vector<MixtureComponent> components);
    /// Piecewise-constant density on the cells centred at the field's nodes.
    /// Throws ConfigError when the field is negative, non-finite or has zero mass.
    static InitialDensity from_field(const GridField& field);

    InitialVariant variant() const { return variant_; }
    int dim() const { return d_; }
    const std::vector<MixtureComponent>& components() const { return components_; }
    const GridField& field() const { return field_; }

    double density(const Point& x) const;
    /// (g * u0)(x) for the centred Gaussian g with per-coordinate variance s2.
    double smoothed(const Point& x, double s2) const;
    /// Average of smoothed(., s2) over the cube of side `width` centred at x.
    double smoothed_cell_average(const Point& x, double width, double s2) const;
    /// Exact draw for stream `stream` under `seed`.
    Point sample(std::uint64_t seed, std::uint64_t stream) const;
    /// Mean and per-coordinate variance of the law.
    Point mean() const;
    double variance() const;

    std::string describe() const;

private:
    InitialVariant variant_ = InitialVariant::IsotropicGaussian;
    int d_ = 1;
    std::vector<MixtureComponent> components_; // a Gaussian is a one-component mixture
    GridField field_;
    std::vector<double> cdf_;
};

// ---------------------------------------------------------------------------
// Configuration and state

struct SimConfig {
    std::int64_t N = 1;
    double h = 0.01;
    double T = 1.0;
    int d = 1;
    double A = 1e6;
    MollifierParams mollifier;
    KernelSpec kernel;
    std::uint64_t seed = 0;
    InitialDensity initial = InitialDensity::gaussian(1, {}, 1.0);
    std::vector<double> snapshot_times; // empty: {T}
    /// Each step's Brownian increment is the sum of this many fine increments,
    /// indexed on the fine grid, so runs with h and h/2 can share the path.
    int noise_substeps = 1;
    bool zero_noise = false;                 // test mode: deterministic dynamics
    std::vector<std::uint64_t> stream_ids;   // per particle; default i
    std::optional<double> drift_sup_estimate; // ||K*u||_{T,inf} from the reference solver

    /// Number of steps, round(T/h) (0 when T = 0).
    std::int64_t steps() const;
    /// Step actually used: T / steps().
    double step() const;
    std::vector<std::int64_t> snapshot_steps() const;
    std::uint64_t stream_of(std::int64_t i) const;

    /// Hard errors (all of them, not just the first).
    std::vector<std::string> errors() const;
    /// Soft problems such as A < 2 ||K*u||_{T,inf}.
    std::vector<std::string> warnings() const;
};

struct EnsembleState {
    int d = 1;
    std::int64_t N = 0;
    std::vector<double> x; // row-major N x d
    double time = 0.0;
    std::int64_t step = 0;
    std::uint64_t seed = 0;

    Point position(std::int64_t i) const;
};

struct SimStats {
    std::uint64_t clamp_events = 0;   // drift components that hit +-A
    std::uint64_t clamp_checks = 0;   // drift components evaluated
    double max_abs_raw_drift = 0.0;
    double clamp_fraction() const {
        return clamp_checks ? static_cast<double>(clamp_events) / static_cast<double>(clamp_checks) : 0.0;
    }
    void merge(const SimStats& o);
};

EnsembleState init_ensemble(const SimConfig& cfg);

/// Row i = F_A((1/N) sum_k K*V^N(X_i - X_k)), exact pairwise loop. The pair term
/// is evaluated once per unordered pair (the kernels are odd); the terms of each
/// row are accumulated in increasing k, with particles ordered by stream id.
std::vector<double> drift_field(const EnsembleState& s, const TabulatedKernel& tab, const CutoffSpec& cutoff,
                                SimStats* stats = nullptr, const std::vector<std::uint64_t>* order_keys = nullptr);

/// One Euler-Maruyama step from a grid time.
void em_step(EnsembleState& s, const SimConfig& cfg, const TabulatedKernel& tab, SimStats* stats = nullptr);

/// Throws ConfigError if the table was not built for cfg's kernel, N and alpha.
void require_matching_table(const SimConfig& cfg, const TabulatedKernel& tab);

/// Runs to T, returning deep copies at the snapshot times.
std::vector<EnsembleState> simulate(const SimConfig& cfg, const TabulatedKernel& tab, SimStats* stats = nullptr);

// ---------------------------------------------------------------------------
// Measures and density estimates

struct MeasureResult {
    GridField field;
    double leakage = 0.0; // fraction of bump mass that falls outside the box
    bool leakage_warning = false;
};

/// (1/N) sum_i V^N(x - X_i) on the nodes of `geometry` (its values are ignored),
/// each bump rescaled so its node sum times the cell volume is 1; the grid
/// integral is then 1 - leakage. Requires spacing <= scaled mollifier radius / 4.
MeasureResult mollified_empirical_measure(const EnsembleState& s, const MollifierParams& m, const GridField& geometry);

struct DensityEstimate {
    GridField density;  // counts / (samples * cell volume)
    GridField stderr_;  // binomial standard error per cell
    std::vector<std::uint64_t> counts;
    std::uint64_t samples = 0;
    std::uint64_t outside = 0;
};

/// Histogram density of point samples on cells centred at the nodes of `geometry`.
DensityEstimate histogram_density(const std::vector<Point>& samples, const GridField& geometry);

/// Runs M independent systems (seeds derived from master_seed) and histograms
/// X_t^i over replicas. particle_index < 0 pools every particle of every replica.
DensityEstimate replica_density_estimate(const SimConfig& cfg, const TabulatedKernel& tab, std::int64_t particle_index,
                                         int M, std::uint64_t master_seed, double t, const GridField& geometry,
                                         int workers = 1, SimStats* stats = nullptr);

struct DominationReport {
    double R = 0.0;
    int cells_used = 0;
    GridField ratio; // estimate / (g_c * u0), zero where the count threshold fails
};

/// R = max over cells with >= min_count samples of estimate / (g_c(t) * u0),
/// with g_c the centred Gaussian of covariance c t I. Requires c > 2.
DominationReport gaussian_domination_check(const DensityEstimate& est, const InitialDensity& u0, double t, double c,
                                           std::uint64_t min_count = 20);

/// Columnar text dump: run_id replica time index x_1 .. x_d per line.
void write_snapshot_dump(const std::filesystem::path& file, const std::string& run_id, int replica,
                         const std::vector<EnsembleState>& snapshots, bool append = false);

} // namespace mkv
