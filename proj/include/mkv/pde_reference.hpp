#pragma once

// Pseudospectral reference solver for
//   du/dt = Laplace(u) - div(u K*u)
// on the periodic box [-L, L)^d, d in {1, 2}: exact heat step plus an explicit
// Euler flux step, combined by Lie (or Strang) splitting.

#include "mkv/common.hpp"
#include "mkv/grid_field.hpp"
#include "mkv/kernel_catalog.hpp"

#include <complex>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace mkv {

/// Raised when the solver leaves its resolved regime (negativity or failed
/// self-convergence).
class SolverAbort : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// g_c(t, x) = (2 pi c t)^{-d/2} exp(-|x|^2 / (2 c t)).
struct GaussianParams {
    double c = 2.0;
    double t = 1.0;
    double density(const Point& x, int d) const;
    /// Gradient of g_c(t, .) at x.
    Point gradient(const Point& x, int d) const;
};

enum class KernelTransformMode { AnalyticSymbol, MollifiedGrid };
enum class Splitting { Lie, Strang };

std::string to_string(KernelTransformMode m);
KernelTransformMode parse_transform_mode(const std::string& s);

struct PdeConfig {
    KernelSpec kernel;
    double dt = 1e-3;
    double T = 1.0;
    double L = 8.0;
    int n = 256;
    bool dealias = true;
    KernelTransformMode mode = KernelTransformMode::MollifiedGrid;
    Splitting splitting = Splitting::Lie;
    std::vector<double> snapshot_times; // empty: {T}
    bool self_convergence = true;       // also run at dt/2
    double self_convergence_tol = 1e-2; // L1 distance allowed between the dt and dt/2 runs
    double negativity_abort = -1e-3;
    double mollifier_support = 1.0;     // R of the solver-scale bump (MollifiedGrid)

    int dim() const { return kernel.dim; }
    double spacing() const { return 2.0 * L / n; }
    std::int64_t steps() const;
    double step() const;
    /// Solver-scale mollifier: alpha = 1, M = round(R / (2 spacing)).
    MollifierParams solver_mollifier() const;
    std::vector<std::string> errors() const;
};

/// Real FFTs on one periodic box with angular wavenumbers pi j / L.
class SpectralBox {
public:
    SpectralBox(int d, int n, double L);
    ~SpectralBox();
    SpectralBox(const SpectralBox&) = delete;
    SpectralBox& operator=(const SpectralBox&) = delete;

    int dim() const { return d_; }
    int n() const { return n_; }
    double L() const { return L_; }
    std::size_t real_size() const { return real_size_; }
    std::size_t spec_size() const { return spec_size_; }
    /// Wavevector of half-spectrum entry k (Nyquist entries carry +pi n/(2L)).
    Point wavevector(std::size_t k) const;
    /// True for entries on a Nyquist plane (their odd derivatives are dropped).
    bool nyquist(std::size_t k) const;
    /// Inside the 2/3 band on every axis.
    bool in_band(std::size_t k) const;

    void forward(const double* in, std::complex<double>* out) const;
    /// Unnormalized inverse; divide by real_size() to invert forward().
    void inverse(const std::complex<double>* in, double* out) const;

private:
    int d_, n_;
    double L_;
    std::size_t real_size_, spec_size_;
    void* fwd_ = nullptr;
    void* inv_ = nullptr;
};

/// K* as a Fourier multiplier. AnalyticSymbol acts on the periodic box;
/// MollifiedGrid convolves on a zero-padded box of twice the width, which is
/// the free-space convolution of the grid function.
class KernelOperator {
public:
    KernelOperator(const KernelSpec& spec, int n, double L, KernelTransformMode mode, double mollifier_support = 1.0);

    bool is_zero() const { return zero_; }
    KernelTransformMode mode() const { return mode_; }
    /// Component a of K*u on the nodes of u.
    std::vector<GridField> apply(const GridField& u) const;

private:
    KernelSpec spec_;
    KernelTransformMode mode_;
    int d_, n_;
    double L_;
    bool zero_ = false;
    std::unique_ptr<SpectralBox> box_; // doubled box in MollifiedGrid mode
    std::vector<std::vector<std::complex<double>>> symbol_;
};

/// Closed-form Fourier symbol of K (angular convention, f^(xi) = int f e^{-i xi.x}).
/// Throws ConfigError for kernels without one.
std::vector<std::complex<double>> analytic_symbol(const KernelSpec& spec, const Point& xi);

/// Radial profile of K*V^M used by MollifiedGrid mode, exact outside the
/// support for harmonic kernels.
double solver_mollified_profile(const KernelSpec& spec, const MollifierParams& m, double r);

GridField heat_step(const GridField& u, double dt);
std::vector<GridField> spectral_gradient(const GridField& u);

/// Spectral divergence of a vector field, optionally restricted to the 2/3 band.
GridField spectral_divergence(const std::vector<GridField>& F, bool dealias);

struct NonlinearStepInfo {
    double drift_sup = 0.0; // max |(K*u)_a| over nodes and components
};

/// u - dt div(u K*u).
GridField nonlinear_step(const GridField& u, const KernelOperator& op, double dt, bool dealias,
                         NonlinearStepInfo* info = nullptr);

/// dt bound spacing / (pi max|K*u0|), infinite when K*u0 = 0.
double cfl_bound(const GridField& u0, const KernelOperator& op);

struct PdeResult {
    std::vector<GridField> snapshots;
    double dt = 0.0;                    // step of the returned run
    std::int64_t steps = 0;
    double self_convergence_l1 = 0.0;   // max over snapshots of ||u^{dt} - u^{dt/2}||_L1
    double drift_sup = 0.0;             // ||K*u||_{T,inf}
    double min_value = 0.0;
    double max_mass_error = 0.0;        // max_t |int u_t - int u_0|
    double boundary_max = 0.0;          // max |u| on the box faces over the run
    double cfl = 0.0;
    std::vector<std::string> warnings;
};

/// Snapshots at cfg's grid times of the run at step dt/2 when self-convergence
/// is enabled (otherwise at dt). Throws SolverAbort on negativity below
/// cfg.negativity_abort or a self-convergence distance above the tolerance.
PdeResult solve_mild(const GridField& u0, const PdeConfig& cfg);

/// Samples a density at the grid nodes.
template <class F>
GridField sample_on_grid(int d, int n, double L, F&& f) {
    GridField g = GridField::zeros(d, n, L);
    for (std::size_t i = 0; i < g.size(); ++i) g.values[i] = f(g.node(i));
    return g;
}

} // namespace mkv
