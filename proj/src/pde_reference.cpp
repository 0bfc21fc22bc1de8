#include "mkv/pde_reference.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <cstring>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>

namespace mkv {

namespace {

std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

int signed_index(int j, int n) { return j <= n / 2 ? j : j - n; }

double l1_distance(const GridField& a, const GridField& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a.values[i] - b.values[i]);
    return s * a.cell_volume();
}

double boundary_max(const GridField& u) {
    double m = 0.0;
    std::size_t n = static_cast<std::size_t>(u.n);
    for (std::size_t i = 0; i < u.size(); ++i) {
        std::size_t rem = i;
        bool face = false;
        for (int a = 0; a < u.d; ++a) {
            std::size_t j = rem % n;
            rem /= n;
            if (j == 0 || j == n - 1) face = true;
        }
        if (face) m = std::max(m, std::abs(u.values[i]));
    }
    return m;
}

} // namespace

// ---------------------------------------------------------------------------

double GaussianParams::density(const Point& x, int d) const {
    double v = c * t;
    return std::exp(-0.5 * norm2(x) / v) / std::pow(2.0 * std::numbers::pi * v, 0.5 * d);
}

Point GaussianParams::gradient(const Point& x, int d) const {
    return (-density(x, d) / (c * t)) * x;
}

std::string to_string(KernelTransformMode m) {
    return m == KernelTransformMode::AnalyticSymbol ? "analytic_symbol" : "mollified_grid";
}

KernelTransformMode parse_transform_mode(const std::string& s) {
    if (s == "analytic_symbol") return KernelTransformMode::AnalyticSymbol;
    if (s == "mollified_grid") return KernelTransformMode::MollifiedGrid;
    throw ConfigError("unknown kernel_transform_mode '" + s + "' (expected analytic_symbol or mollified_grid)");
}

std::int64_t PdeConfig::steps() const {
    if (T == 0.0) return 0;
    return std::max<std::int64_t>(1, std::llround(T / dt));
}

double PdeConfig::step() const {
    auto k = steps();
    return k == 0 ? dt : T / static_cast<double>(k);
}

MollifierParams PdeConfig::solver_mollifier() const {
    auto M = std::max<std::int64_t>(1, std::llround(mollifier_support / (2.0 * spacing())));
    return MollifierParams::make(dim(), 1.0, M, mollifier_support);
}

std::vector<std::string> PdeConfig::errors() const {
    std::vector<std::string> e;
    if (dim() == 3) e.push_back("the reference solver supports d in {1, 2}; d = 3 grids are rejected");
    else if (dim() < 1 || dim() > 3) e.push_back("dimension must be 1 or 2");
    try {
        kernel.validate();
    } catch (const ConfigError& err) {
        e.push_back(err.what());
    }
    if (n < 8 || (n & (n - 1)) != 0) e.push_back("grid size n must be a power of two >= 8");
    if (!(L > 0.0)) e.push_back("box half-width L must be positive");
    if (!(dt > 0.0)) e.push_back("solver step dt must be positive");
    if (!(T >= 0.0)) e.push_back("horizon T must be nonnegative");
    if (!(self_convergence_tol > 0.0)) e.push_back("self_convergence_tol must be positive");
    if (mode == KernelTransformMode::AnalyticSymbol && kernel.variant != KernelVariant::Zero &&
        kernel.variant != KernelVariant::BoundedLipschitzDemo && kernel.variant != KernelVariant::KellerSegel &&
        !(kernel.variant == KernelVariant::RieszGradient && kernel.dim == 2))
        e.push_back("no analytic symbol for kernel " + kernel.id() + "; use mollified_grid");
    for (double t : snapshot_times) {
        if (!(t >= 0.0 && t <= T * (1.0 + 1e-12))) e.push_back("snapshot time " + std::to_string(t) + " outside [0, T]");
        else if (steps() > 0 && std::abs(t / step() - std::round(t / step())) > 1e-6)
            e.push_back("snapshot time " + std::to_string(t) + " is not a solver grid time");
    }
    return e;
}

// ---------------------------------------------------------------------------
// SpectralBox

SpectralBox::SpectralBox(int d, int n, double L) : d_(d), n_(n), L_(L) {
    if (d < 1 || d > 2) throw ConfigError("spectral box supports d in {1, 2}");
    real_size_ = d == 1 ? static_cast<std::size_t>(n) : static_cast<std::size_t>(n) * n;
    spec_size_ = (d == 1 ? 1 : static_cast<std::size_t>(n)) * static_cast<std::size_t>(n / 2 + 1);
    std::vector<double> r(real_size_);
    std::vector<std::complex<double>> c(spec_size_);
    int dims[2] = {n, n};
    std::lock_guard<std::mutex> lock(planner_mutex());
    fwd_ = fftw_plan_dft_r2c(d, dims, r.data(), reinterpret_cast<fftw_complex*>(c.data()),
                             FFTW_ESTIMATE | FFTW_UNALIGNED);
    inv_ = fftw_plan_dft_c2r(d, dims, reinterpret_cast<fftw_complex*>(c.data()), r.data(),
                             FFTW_ESTIMATE | FFTW_UNALIGNED);
}

SpectralBox::~SpectralBox() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    if (fwd_) fftw_destroy_plan(static_cast<fftw_plan>(fwd_));
    if (inv_) fftw_destroy_plan(static_cast<fftw_plan>(inv_));
}

Point SpectralBox::wavevector(std::size_t k) const {
    const std::size_t half = static_cast<std::size_t>(n_ / 2 + 1);
    const double f = std::numbers::pi / L_;
    Point xi{};
    if (d_ == 1) {
        xi[0] = f * static_cast<double>(k);
    } else {
        xi[0] = f * signed_index(static_cast<int>(k / half), n_);
        xi[1] = f * static_cast<double>(k % half);
    }
    return xi;
}

bool SpectralBox::nyquist(std::size_t k) const {
    const std::size_t half = static_cast<std::size_t>(n_ / 2 + 1);
    const std::size_t ny = static_cast<std::size_t>(n_ / 2);
    if (d_ == 1) return k == ny;
    return k / half == ny || k % half == ny;
}

bool SpectralBox::in_band(std::size_t k) const {
    const std::size_t half = static_cast<std::size_t>(n_ / 2 + 1);
    const int cut = n_ / 3;
    if (d_ == 1) return static_cast<int>(k) <= cut;
    return std::abs(signed_index(static_cast<int>(k / half), n_)) <= cut && static_cast<int>(k % half) <= cut;
}

void SpectralBox::forward(const double* in, std::complex<double>* out) const {
    fftw_execute_dft_r2c(static_cast<fftw_plan>(fwd_), const_cast<double*>(in), reinterpret_cast<fftw_complex*>(out));
}

void SpectralBox::inverse(const std::complex<double>* in, double* out) const {
    std::vector<std::complex<double>> tmp(in, in + spec_size_);
    fftw_execute_dft_c2r(static_cast<fftw_plan>(inv_), reinterpret_cast<fftw_complex*>(tmp.data()), out);
}

// ---------------------------------------------------------------------------
// Kernel symbols

std::vector<std::complex<double>> analytic_symbol(const KernelSpec& spec, const Point& xi) {
    const int d = spec.dim;
    std::vector<std::complex<double>> out(static_cast<std::size_t>(d), {0.0, 0.0});
    const double k2 = norm2(xi);
    const std::complex<double> I(0.0, 1.0);
    switch (spec.variant) {
    case KernelVariant::Zero: return out;
    case KernelVariant::BoundedLipschitzDemo: {
        // K = grad exp(-|x|^2/2)
        double g = std::pow(2.0 * std::numbers::pi, 0.5 * d) * std::exp(-0.5 * k2);
        for (int a = 0; a < d; ++a) out[a] = I * xi[a] * g;
        return out;
    }
    case KernelVariant::KellerSegel:
    case KernelVariant::RieszGradient: {
        if (d != 2) break;
        // K = c grad log|x| with log|x|^ = -2 pi / |xi|^2
        double c = spec.variant == KernelVariant::KellerSegel ? -spec.chi
                   : spec.sign == Interaction::Attractive    ? -1.0
                                                             : 1.0;
        if (k2 == 0.0) return out;
        for (int a = 0; a < d; ++a) out[a] = c * I * xi[a] * (-2.0 * std::numbers::pi / k2);
        return out;
    }
    default: break;
    }
    throw ConfigError("no analytic symbol for kernel " + spec.id() + "; use mollified_grid");
}

double solver_mollified_profile(const KernelSpec& spec, const MollifierParams& m, double r) {
    if (r == 0.0 || spec.variant == KernelVariant::Zero) return 0.0;
    if (spec.is_harmonic() && r >= m.scaled_radius()) return kernel_profile(spec, r);
    if (r >= spec.support_radius() + m.scaled_radius()) return 0.0;
    return mollified_profile_quadrature(spec, m, r, 1e-10);
}

KernelOperator::KernelOperator(const KernelSpec& spec, int n, double L, KernelTransformMode mode,
                               double mollifier_support)
    : spec_(spec), mode_(mode), d_(spec.dim), n_(n), L_(L) {
    spec.validate();
    if (d_ > 2) throw ConfigError("the reference solver supports d in {1, 2}");
    zero_ = spec.variant == KernelVariant::Zero;
    if (zero_) return;
    if (mode == KernelTransformMode::AnalyticSymbol) {
        box_ = std::make_unique<SpectralBox>(d_, n, L);
        const std::size_t S = box_->spec_size();
        symbol_.assign(static_cast<std::size_t>(d_), std::vector<std::complex<double>>(S));
        for (std::size_t k = 0; k < S; ++k) {
            auto s = analytic_symbol(spec, box_->wavevector(k));
            for (int a = 0; a < d_; ++a) symbol_[a][k] = box_->nyquist(k) ? 0.0 : s[a];
        }
        return;
    }

    // sampled K*V^M on the offsets of the padded grid
    box_ = std::make_unique<SpectralBox>(d_, 2 * n, 2.0 * L);
    symbol_.assign(static_cast<std::size_t>(d_), std::vector<std::complex<double>>(box_->spec_size()));
    const double dx = 2.0 * L / n;
    PdeConfig tmp;
    tmp.kernel = spec;
    tmp.L = L;
    tmp.n = n;
    tmp.mollifier_support = mollifier_support;
    const MollifierParams m = tmp.solver_mollifier();
    const double eps = m.scaled_radius();
    const int P = 2 * n;
    const double r_max = dx * n * std::sqrt(static_cast<double>(d_));

    // radial profile: exact per distinct |offset|^2 inside eps for harmonic
    // kernels, otherwise a Catmull-Rom table
    std::map<long, double> exact;
    std::vector<double> table;
    const double dr = dx / 8.0;
    const bool harmonic = spec.is_harmonic();
    if (!harmonic) {
        double r_end = std::min(r_max, spec.support_radius() + eps) + 3.0 * dr;
        auto cnt = static_cast<std::size_t>(std::ceil(r_end / dr)) + 3;
        table.resize(cnt);
        for (std::size_t j = 0; j < cnt; ++j) table[j] = solver_mollified_profile(spec, m, dr * static_cast<double>(j));
    }
    auto profile = [&](long q2) -> double {
        double r = dx * std::sqrt(static_cast<double>(q2));
        if (q2 == 0) return 0.0;
        if (harmonic) {
            if (r >= eps) return kernel_profile(spec, r);
            auto it = exact.find(q2);
            if (it != exact.end()) return it->second;
            double v = solver_mollified_profile(spec, m, r);
            exact.emplace(q2, v);
            return v;
        }
        double t = r / dr;
        auto j = static_cast<std::size_t>(t);
        if (j + 2 >= table.size()) return 0.0;
        double w = t - static_cast<double>(j);
        double p0 = j == 0 ? -table[1] : table[j - 1], p1 = table[j], p2 = table[j + 1], p3 = table[j + 2];
        return p1 + 0.5 * w * (p2 - p0 + w * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 + w * (3.0 * (p1 - p2) + p3 - p0)));
    };

    std::vector<std::vector<double>> G(static_cast<std::size_t>(d_), std::vector<double>(box_->real_size(), 0.0));
    for (std::size_t flat = 0; flat < box_->real_size(); ++flat) {
        std::array<long, 2> off{};
        std::size_t rem = flat;
        bool edge = false;
        for (int a = d_ - 1; a >= 0; --a) {
            long i = static_cast<long>(rem % static_cast<std::size_t>(P));
            rem /= static_cast<std::size_t>(P);
            if (i == n) edge = true;
            off[a] = i < n ? i : i - P;
        }
        if (edge) continue; // offsets of exactly 2L never occur between nodes
        long q2 = 0;
        for (int a = 0; a < d_; ++a) q2 += off[a] * off[a];
        if (q2 == 0) continue;
        double f = profile(q2) / std::sqrt(static_cast<double>(q2));
        for (int a = 0; a < d_; ++a) G[a][flat] = f * static_cast<double>(off[a]);
    }
    const double vol = std::pow(dx, d_);
    for (int a = 0; a < d_; ++a) {
        box_->forward(G[a].data(), symbol_[a].data());
        for (auto& s : symbol_[a]) s *= vol;
    }
}

std::vector<GridField> KernelOperator::apply(const GridField& u) const {
    if (u.d != d_ || u.n != n_ || u.L != L_) throw ConfigError("grid mismatch between field and kernel operator");
    std::vector<GridField> out(static_cast<std::size_t>(d_), GridField::zeros(d_, n_, L_, u.time));
    if (zero_) return out;
    if (mode_ == KernelTransformMode::AnalyticSymbol) {
        std::vector<std::complex<double>> uh(box_->spec_size()), w(box_->spec_size());
        box_->forward(u.values.data(), uh.data());
        const double norm = 1.0 / static_cast<double>(box_->real_size());
        for (int a = 0; a < d_; ++a) {
            for (std::size_t k = 0; k < w.size(); ++k) w[k] = symbol_[a][k] * uh[k] * norm;
            box_->inverse(w.data(), out[a].values.data());
        }
        return out;
    }
    const int P = 2 * n_;
    std::vector<double> pad(box_->real_size(), 0.0);
    for (std::size_t flat = 0; flat < u.size(); ++flat) {
        std::size_t i0 = d_ == 1 ? flat : flat / static_cast<std::size_t>(n_);
        std::size_t dst = d_ == 1 ? flat : i0 * static_cast<std::size_t>(P) + flat % static_cast<std::size_t>(n_);
        pad[dst] = u.values[flat];
    }
    std::vector<std::complex<double>> uh(box_->spec_size()), w(box_->spec_size());
    box_->forward(pad.data(), uh.data());
    const double norm = 1.0 / static_cast<double>(box_->real_size());
    for (int a = 0; a < d_; ++a) {
        for (std::size_t k = 0; k < w.size(); ++k) w[k] = symbol_[a][k] * uh[k] * norm;
        box_->inverse(w.data(), pad.data());
        for (std::size_t flat = 0; flat < u.size(); ++flat) {
            std::size_t i0 = d_ == 1 ? flat : flat / static_cast<std::size_t>(n_);
            std::size_t src = d_ == 1 ? flat : i0 * static_cast<std::size_t>(P) + flat % static_cast<std::size_t>(n_);
            out[a].values[flat] = pad[src];
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Sub-steps

namespace {

GridField heat_impl(const SpectralBox& box, const GridField& u, double dt) {
    std::vector<std::complex<double>> uh(box.spec_size());
    box.forward(u.values.data(), uh.data());
    const double norm = 1.0 / static_cast<double>(box.real_size());
    for (std::size_t k = 0; k < uh.size(); ++k) uh[k] *= std::exp(-norm2(box.wavevector(k)) * dt) * norm;
    GridField out = u;
    box.inverse(uh.data(), out.values.data());
    out.time = u.time + dt;
    return out;
}

GridField divergence_impl(const SpectralBox& box, const std::vector<GridField>& F, bool dealias) {
    const std::complex<double> I(0.0, 1.0);
    std::vector<std::complex<double>> acc(box.spec_size(), 0.0), fh(box.spec_size());
    for (std::size_t a = 0; a < F.size(); ++a) {
        box.forward(F[a].values.data(), fh.data());
        for (std::size_t k = 0; k < fh.size(); ++k) {
            if (box.nyquist(k) || (dealias && !box.in_band(k))) continue;
            acc[k] += I * box.wavevector(k)[a] * fh[k];
        }
    }
    const double norm = 1.0 / static_cast<double>(box.real_size());
    for (auto& c : acc) c *= norm;
    GridField out = F.front();
    box.inverse(acc.data(), out.values.data());
    return out;
}

GridField nonlinear_impl(const SpectralBox& box, const GridField& u, const KernelOperator& op, double dt, bool dealias,
                         NonlinearStepInfo* info) {
    if (op.is_zero()) {
        if (info) info->drift_sup = 0.0;
        GridField out = u;
        out.time = u.time + dt;
        return out;
    }
    std::vector<GridField> b = op.apply(u);
    double sup = 0.0;
    for (auto& comp : b)
        for (std::size_t i = 0; i < comp.size(); ++i) {
            sup = std::max(sup, std::abs(comp.values[i]));
            comp.values[i] *= u.values[i];
        }
    if (info) info->drift_sup = sup;
    GridField div = divergence_impl(box, b, dealias);
    GridField out = u;
    for (std::size_t i = 0; i < out.size(); ++i) out.values[i] -= dt * div.values[i];
    out.time = u.time + dt;
    return out;
}

} // namespace

GridField heat_step(const GridField& u, double dt) {
    SpectralBox box(u.d, u.n, u.L);
    return heat_impl(box, u, dt);
}

std::vector<GridField> spectral_gradient(const GridField& u) {
    SpectralBox box(u.d, u.n, u.L);
    const std::complex<double> I(0.0, 1.0);
    std::vector<std::complex<double>> uh(box.spec_size()), w(box.spec_size());
    box.forward(u.values.data(), uh.data());
    const double norm = 1.0 / static_cast<double>(box.real_size());
    std::vector<GridField> out(static_cast<std::size_t>(u.d), u);
    for (int a = 0; a < u.d; ++a) {
        for (std::size_t k = 0; k < w.size(); ++k) w[k] = box.nyquist(k) ? 0.0 : I * box.wavevector(k)[a] * uh[k] * norm;
        box.inverse(w.data(), out[a].values.data());
    }
    return out;
}

GridField spectral_divergence(const std::vector<GridField>& F, bool dealias) {
    if (F.empty()) throw ConfigError("divergence of an empty vector field");
    SpectralBox box(F.front().d, F.front().n, F.front().L);
    return divergence_impl(box, F, dealias);
}

GridField nonlinear_step(const GridField& u, const KernelOperator& op, double dt, bool dealias,
                         NonlinearStepInfo* info) {
    SpectralBox box(u.d, u.n, u.L);
    return nonlinear_impl(box, u, op, dt, dealias, info);
}

double cfl_bound(const GridField& u0, const KernelOperator& op) {
    if (op.is_zero()) return std::numeric_limits<double>::infinity();
    double sup = 0.0;
    for (const auto& c : op.apply(u0))
        for (double v : c.values) sup = std::max(sup, std::abs(v));
    if (sup == 0.0) return std::numeric_limits<double>::infinity();
    return u0.spacing() / (std::numbers::pi * sup);
}

// ---------------------------------------------------------------------------
// Driver

namespace {

struct RunOutput {
    std::vector<GridField> snapshots;
    double drift_sup = 0.0, min_value = 0.0, mass_err = 0.0, boundary = 0.0;
};

RunOutput run_fixed(const GridField& u0, const PdeConfig& cfg, const KernelOperator& op, std::int64_t steps,
                    double dt) {
    SpectralBox box(u0.d, u0.n, u0.L);
    std::vector<std::int64_t> snaps;
    if (cfg.snapshot_times.empty()) snaps.push_back(steps);
    else
        for (double t : cfg.snapshot_times) snaps.push_back(steps == 0 ? 0 : std::llround(t / (cfg.T / steps)));
    RunOutput out;
    GridField u = u0;
    u.time = 0.0;
    const double mass0 = u0.integral();
    out.min_value = *std::min_element(u.values.begin(), u.values.end());
    out.boundary = boundary_max(u);
    std::size_t next = 0;
    auto emit = [&](std::int64_t k) {
        while (next < snaps.size() && snaps[next] == k) {
            out.snapshots.push_back(u);
            ++next;
        }
    };
    emit(0);
    for (std::int64_t k = 1; k <= steps; ++k) {
        NonlinearStepInfo info;
        if (cfg.splitting == Splitting::Lie) {
            u = heat_impl(box, u, dt);
            u = nonlinear_impl(box, u, op, dt, cfg.dealias, &info);
        } else {
            u = heat_impl(box, u, 0.5 * dt);
            u = nonlinear_impl(box, u, op, dt, cfg.dealias, &info);
            u = heat_impl(box, u, 0.5 * dt);
        }
        u.time = static_cast<double>(k) * dt;
        out.drift_sup = std::max(out.drift_sup, info.drift_sup);
        double mn = *std::min_element(u.values.begin(), u.values.end());
        out.min_value = std::min(out.min_value, mn);
        out.mass_err = std::max(out.mass_err, std::abs(u.integral() - mass0));
        out.boundary = std::max(out.boundary, boundary_max(u));
        if (mn < cfg.negativity_abort)
            throw SolverAbort("reference solution went negative (min u = " + std::to_string(mn) + " at t = " +
                              std::to_string(u.time) + "); grid or step under-resolved");
        if (!std::isfinite(mn)) throw SolverAbort("reference solution is not finite at t = " + std::to_string(u.time));
        emit(k);
    }
    if (!op.is_zero())
        for (const auto& c : op.apply(u))
            for (double v : c.values) out.drift_sup = std::max(out.drift_sup, std::abs(v));
    return out;
}

} // namespace

PdeResult solve_mild(const GridField& u0, const PdeConfig& cfg) {
    auto errs = cfg.errors();
    if (!errs.empty()) throw ConfigError("invalid PDE config: " + errs.front());
    if (u0.d != cfg.dim() || u0.n != cfg.n || u0.L != cfg.L) throw ConfigError("grid mismatch between u0 and the PDE config");
    double mass = u0.integral();
    for (double v : u0.values)
        if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("u0 must be finite and nonnegative");
    if (std::abs(mass - 1.0) > 1e-6) throw ConfigError("u0 must be normalized (mass " + std::to_string(mass) + ")");

    KernelOperator op(cfg.kernel, cfg.n, cfg.L, cfg.mode, cfg.mollifier_support);
    PdeResult res;
    res.cfl = cfl_bound(u0, op);
    if (cfg.step() > res.cfl)
        throw ConfigError("solver step " + std::to_string(cfg.step()) + " exceeds the CFL bound " + std::to_string(res.cfl));

    const std::int64_t steps = cfg.steps();
    RunOutput coarse = run_fixed(u0, cfg, op, steps, cfg.step());
    if (cfg.self_convergence && steps > 0) {
        RunOutput fine = run_fixed(u0, cfg, op, 2 * steps, 0.5 * cfg.step());
        for (std::size_t i = 0; i < fine.snapshots.size(); ++i)
            res.self_convergence_l1 = std::max(res.self_convergence_l1, l1_distance(coarse.snapshots[i], fine.snapshots[i]));
        if (res.self_convergence_l1 > cfg.self_convergence_tol)
            throw SolverAbort("self-convergence check failed: ||u^dt - u^{dt/2}||_L1 = " +
                              std::to_string(res.self_convergence_l1) + " > " + std::to_string(cfg.self_convergence_tol));
        coarse = std::move(fine);
        res.dt = 0.5 * cfg.step();
        res.steps = 2 * steps;
    } else {
        res.dt = cfg.step();
        res.steps = steps;
    }
    res.snapshots = std::move(coarse.snapshots);
    res.drift_sup = coarse.drift_sup;
    res.min_value = coarse.min_value;
    res.max_mass_error = coarse.mass_err;
    res.boundary_max = coarse.boundary;
    if (res.boundary_max > 1e-8) {
        std::ostringstream os;
        os << "solution reaches " << std::setprecision(3) << res.boundary_max
           << " on the box faces; enlarge L for a free-space reference";
        res.warnings.push_back(os.str());
    }
    return res;
}

} // namespace mkv
