#include "mkv/particle_system.hpp"

#include "mkv/parallel.hpp"
#include "mkv/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

namespace mkv {

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double gaussian_pdf(const Point& x, const Point& c, double var, int d) {
    double r2 = 0.0;
    for (int a = 0; a < d; ++a) r2 += (x[a] - c[a]) * (x[a] - c[a]);
    return std::exp(-0.5 * r2 / var) / std::pow(2.0 * std::numbers::pi * var, 0.5 * d);
}

// Cell index of x along one axis for cells centred at the nodes, -1 outside.
int cell_of(double x, const GridField& g) {
    double t = std::floor((x + g.L) / g.spacing() + 0.5);
    if (!(t >= 0.0 && t < g.n)) return -1;
    return static_cast<int>(t);
}

} // namespace

// ---------------------------------------------------------------------------
// InitialDensity

InitialDensity InitialDensity::gaussian(int d, const Point& center, double variance) {
    if (d < 1 || d > kMaxDim) throw ConfigError("initial density dimension must be in {1,2,3}");
    if (!(variance > 0.0)) throw ConfigError("Gaussian initial density needs a positive variance");
    InitialDensity u;
    u.variant_ = InitialVariant::IsotropicGaussian;
    u.d_ = d;
    u.components_ = {{1.0, center, variance}};
    return u;
}

InitialDensity InitialDensity::mixture(int d, std::vector<MixtureComponent> components) {
    if (d < 1 || d > kMaxDim) throw ConfigError("initial density dimension must be in {1,2,3}");
    if (components.empty()) throw ConfigError("Gaussian mixture needs at least one component");
    double total = 0.0;
    for (const auto& c : components) {
        if (!(c.weight > 0.0) || !(c.variance > 0.0))
            throw ConfigError("mixture components need positive weights and variances");
        total += c.weight;
    }
    for (auto& c : components) c.weight /= total;
    InitialDensity u;
    u.variant_ = InitialVariant::GaussianMixture;
    u.d_ = d;
    u.components_ = std::move(components);
    return u;
}

InitialDensity InitialDensity::from_field(const GridField& field) {
    double mass = 0.0;
    for (double v : field.values) {
        if (!std::isfinite(v) || v < 0.0) throw ConfigError("grid initial density must be finite and nonnegative");
        mass += v;
    }
    mass *= field.cell_volume();
    if (!(mass > 0.0) || !std::isfinite(mass)) throw ConfigError("grid initial density is not normalizable (zero mass)");
    InitialDensity u;
    u.variant_ = InitialVariant::GridFieldSampler;
    u.d_ = field.d;
    u.field_ = field;
    for (double& v : u.field_.values) v /= mass;
    u.cdf_.resize(field.values.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < field.values.size(); ++i) {
        acc += u.field_.values[i] * field.cell_volume();
        u.cdf_[i] = acc;
    }
    return u;
}

double InitialDensity::density(const Point& x) const {
    if (variant_ != InitialVariant::GridFieldSampler) {
        double s = 0.0;
        for (const auto& c : components_) s += c.weight * gaussian_pdf(x, c.center, c.variance, d_);
        return s;
    }
    std::array<int, kMaxDim> idx{};
    for (int a = 0; a < d_; ++a) {
        idx[a] = cell_of(x[a], field_);
        if (idx[a] < 0) return 0.0;
    }
    return field_.values[field_.flat_index(idx)];
}

double InitialDensity::smoothed(const Point& x, double s2) const {
    if (!(s2 > 0.0)) return density(x);
    if (variant_ != InitialVariant::GridFieldSampler) {
        double s = 0.0;
        for (const auto& c : components_) s += c.weight * gaussian_pdf(x, c.center, c.variance + s2, d_);
        return s;
    }
    // box cells convolved with the Gaussian; cells beyond 9 sigma contribute < 1e-18
    const double sig = std::sqrt(s2), dx = field_.spacing();
    std::array<int, kMaxDim> lo{}, hi{};
    std::array<std::vector<double>, kMaxDim> w;
    for (int a = 0; a < d_; ++a) {
        lo[a] = std::max(0, static_cast<int>(std::floor((x[a] - 9.0 * sig + field_.L) / dx)) - 1);
        hi[a] = std::min(field_.n - 1, static_cast<int>(std::ceil((x[a] + 9.0 * sig + field_.L) / dx)) + 1);
        for (int j = lo[a]; j <= hi[a]; ++j) {
            double c = field_.coord(j);
            w[a].push_back(normal_cdf((x[a] - c + 0.5 * dx) / sig) - normal_cdf((x[a] - c - 0.5 * dx) / sig));
        }
    }
    double s = 0.0;
    std::array<int, kMaxDim> idx{};
    std::function<void(int, double)> rec = [&](int a, double prod) {
        if (a == d_) {
            s += prod * field_.values[field_.flat_index(idx)];
            return;
        }
        for (int j = lo[a]; j <= hi[a]; ++j) {
            idx[a] = j;
            rec(a + 1, prod * w[a][j - lo[a]]);
        }
    };
    if (lo[0] <= hi[0]) rec(0, 1.0);
    return s;
}

double InitialDensity::smoothed_cell_average(const Point& x, double width, double s2) const {
    if (variant_ != InitialVariant::GridFieldSampler) {
        double s = 0.0;
        for (const auto& c : components_) {
            double sig = std::sqrt(c.variance + s2), prod = 1.0;
            for (int a = 0; a < d_; ++a)
                prod *= (normal_cdf((x[a] + 0.5 * width - c.center[a]) / sig) -
                         normal_cdf((x[a] - 0.5 * width - c.center[a]) / sig)) /
                        width;
            s += c.weight * prod;
        }
        return s;
    }
    // 4-point Gauss-Legendre per axis
    static const double gx[4] = {-0.861136311594053, -0.339981043584856, 0.339981043584856, 0.861136311594053};
    static const double gw[4] = {0.347854845137454, 0.652145154862546, 0.652145154862546, 0.347854845137454};
    int total = 1;
    for (int a = 0; a < d_; ++a) total *= 4;
    double s = 0.0;
    for (int k = 0; k < total; ++k) {
        Point y = x;
        double wt = 1.0;
        int rem = k;
        for (int a = 0; a < d_; ++a) {
            y[a] += 0.5 * width * gx[rem % 4];
            wt *= 0.5 * gw[rem % 4];
            rem /= 4;
        }
        s += wt * smoothed(y, s2);
    }
    return s;
}

Point InitialDensity::sample(std::uint64_t seed, std::uint64_t stream) const {
    Point x{};
    if (variant_ != InitialVariant::GridFieldSampler) {
        std::size_t comp = 0;
        if (components_.size() > 1) {
            std::array<double, 1> u{};
            stream_uniforms(seed, stream, RngPurpose::Init, 1, 1, u);
            double acc = 0.0;
            for (comp = 0; comp + 1 < components_.size(); ++comp) {
                acc += components_[comp].weight;
                if (u[0] < acc) break;
            }
        }
        std::array<double, kMaxDim> z{};
        stream_normals(seed, stream, RngPurpose::Init, 0, d_, z);
        const auto& c = components_[comp];
        double s = std::sqrt(c.variance);
        for (int a = 0; a < d_; ++a) x[a] = c.center[a] + s * z[a];
        return x;
    }
    std::array<double, kMaxDim + 1> u{};
    stream_uniforms(seed, stream, RngPurpose::Init, 2, d_ + 1, u);
    double target = u[0] * cdf_.back();
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), target);
    std::size_t flat = std::min<std::size_t>(static_cast<std::size_t>(it - cdf_.begin()), cdf_.size() - 1);
    Point c = field_.node(flat);
    for (int a = 0; a < d_; ++a) x[a] = c[a] + (u[a + 1] - 0.5) * field_.spacing();
    return x;
}

Point InitialDensity::mean() const {
    Point m{};
    if (variant_ != InitialVariant::GridFieldSampler) {
        for (const auto& c : components_)
            for (int a = 0; a < d_; ++a) m[a] += c.weight * c.center[a];
        return m;
    }
    for (std::size_t i = 0; i < field_.values.size(); ++i) {
        Point x = field_.node(i);
        for (int a = 0; a < d_; ++a) m[a] += field_.values[i] * field_.cell_volume() * x[a];
    }
    return m;
}

double InitialDensity::variance() const {
    Point m = mean();
    double s = 0.0;
    if (variant_ != InitialVariant::GridFieldSampler) {
        for (const auto& c : components_) s += c.weight * (c.variance + c.center[0] * c.center[0]);
        return s - m[0] * m[0];
    }
    double dx = field_.spacing();
    for (std::size_t i = 0; i < field_.values.size(); ++i) {
        Point x = field_.node(i);
        s += field_.values[i] * field_.cell_volume() * (x[0] * x[0] + dx * dx / 12.0);
    }
    return s - m[0] * m[0];
}

std::string InitialDensity::describe() const {
    std::ostringstream os;
    os << std::setprecision(17);
    switch (variant_) {
    case InitialVariant::IsotropicGaussian:
        os << "gaussian(var=" << components_[0].variance << ")";
        break;
    case InitialVariant::GaussianMixture: os << "mixture(" << components_.size() << ")"; break;
    case InitialVariant::GridFieldSampler: os << "grid(n=" << field_.n << ",L=" << field_.L << ")"; break;
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// SimConfig

std::int64_t SimConfig::steps() const {
    if (T == 0.0) return 0;
    return std::max<std::int64_t>(1, std::llround(T / h));
}

double SimConfig::step() const {
    std::int64_t n = steps();
    return n == 0 ? h : T / static_cast<double>(n);
}

std::vector<std::int64_t> SimConfig::snapshot_steps() const {
    std::vector<std::int64_t> out;
    const std::int64_t n = steps();
    if (snapshot_times.empty()) return {n};
    for (double t : snapshot_times) {
        std::int64_t k = n == 0 ? 0 : std::llround(t / step());
        out.push_back(k);
    }
    return out;
}

std::uint64_t SimConfig::stream_of(std::int64_t i) const {
    return stream_ids.empty() ? static_cast<std::uint64_t>(i) : stream_ids[static_cast<std::size_t>(i)];
}

std::vector<std::string> SimConfig::errors() const {
    std::vector<std::string> e;
    if (N < 1) e.push_back("particle count N must be >= 1");
    if (!(h > 0.0)) e.push_back("time step h must be positive");
    if (!(T >= 0.0)) e.push_back("horizon T must be nonnegative");
    if (!(A > 0.0)) e.push_back("cutoff threshold A must be positive");
    if (noise_substeps < 1) e.push_back("noise_substeps must be >= 1");
    if (d != kernel.dim) e.push_back("kernel dimension differs from d");
    if (d != mollifier.dim) e.push_back("mollifier dimension differs from d");
    if (d != initial.dim()) e.push_back("initial density dimension differs from d");
    if (mollifier.N != N) e.push_back("mollifier N differs from the particle count");
    try {
        kernel.validate();
    } catch (const ConfigError& err) {
        e.push_back(err.what());
    }
    if (!stream_ids.empty()) {
        if (static_cast<std::int64_t>(stream_ids.size()) != N) e.push_back("stream_ids must list one id per particle");
        std::set<std::uint64_t> uniq(stream_ids.begin(), stream_ids.end());
        if (uniq.size() != stream_ids.size()) e.push_back("stream_ids must be distinct");
    }
    if (h > 0.0 && T > 0.0) {
        double ratio = T / h;
        double steps_d = static_cast<double>(steps());
        if (std::abs(ratio - steps_d) > 1e-12 * ratio) {
            // tolerated: h is adjusted to T/steps; only flagged when the adjustment is large
            if (std::abs(ratio - steps_d) > 0.5) e.push_back("T/h is not close to an integer");
        }
    }
    for (double t : snapshot_times) {
        if (!(t >= 0.0 && t <= T * (1.0 + 1e-12))) {
            e.push_back("snapshot time " + std::to_string(t) + " outside [0, T]");
            continue;
        }
        if (steps() > 0) {
            double k = t / step();
            if (std::abs(k - std::round(k)) > 1e-6) e.push_back("snapshot time " + std::to_string(t) + " is not a grid time");
        }
    }
    if (!std::is_sorted(snapshot_times.begin(), snapshot_times.end())) e.push_back("snapshot times must be sorted");
    return e;
}

std::vector<std::string> SimConfig::warnings() const {
    std::vector<std::string> w;
    if (!drift_sup_estimate) {
        w.push_back("no estimate of ||K*u||_{T,inf} available; cutoff A=" + std::to_string(A) + " not validated");
    } else if (A < 2.0 * *drift_sup_estimate) {
        w.push_back("cutoff A=" + std::to_string(A) + " is below 2 ||K*u||_{T,inf} = " +
                    std::to_string(2.0 * *drift_sup_estimate));
    }
    return w;
}

Point EnsembleState::position(std::int64_t i) const {
    Point p{};
    for (int a = 0; a < d; ++a) p[a] = x[static_cast<std::size_t>(i) * d + a];
    return p;
}

void SimStats::merge(const SimStats& o) {
    clamp_events += o.clamp_events;
    clamp_checks += o.clamp_checks;
    max_abs_raw_drift = std::max(max_abs_raw_drift, o.max_abs_raw_drift);
}

// ---------------------------------------------------------------------------
// Dynamics

EnsembleState init_ensemble(const SimConfig& cfg) {
    auto errs = cfg.errors();
    if (!errs.empty()) throw ConfigError("invalid simulation config: " + errs.front());
    EnsembleState s;
    s.d = cfg.d;
    s.N = cfg.N;
    s.seed = cfg.seed;
    s.x.resize(static_cast<std::size_t>(cfg.N) * cfg.d);
    for (std::int64_t i = 0; i < cfg.N; ++i) {
        Point p = cfg.initial.sample(cfg.seed, cfg.stream_of(i));
        for (int a = 0; a < cfg.d; ++a) s.x[static_cast<std::size_t>(i) * cfg.d + a] = p[a];
    }
    return s;
}

namespace {

template <int D>
void pair_sum(const TabulatedKernel& tab, const std::vector<Point>& y, const Point& self, std::vector<double>& acc) {
    const std::size_t N = y.size();
    for (std::size_t a = 0; a < N; ++a) {
        double* ra = &acc[a * D];
        for (int c = 0; c < D; ++c) ra[c] += self[c];
        const Point ya = y[a];
        for (std::size_t b = a + 1; b < N; ++b) {
            Point p = tab.eval_fixed<D>(ya - y[b]);
            double* rb = &acc[b * D];
            for (int c = 0; c < D; ++c) {
                ra[c] += p[c];
                rb[c] -= p[c];
            }
        }
    }
}

} // namespace

std::vector<double> drift_field(const EnsembleState& s, const TabulatedKernel& tab, const CutoffSpec& cutoff,
                                SimStats* stats, const std::vector<std::uint64_t>* order_keys) {
    const int d = s.d;
    const auto N = static_cast<std::size_t>(s.N);
    std::vector<double> out(N * d, 0.0);
    if (N == 0) return out;

    std::vector<std::size_t> perm(N);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    if (order_keys && !order_keys->empty())
        std::stable_sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) { return (*order_keys)[a] < (*order_keys)[b]; });

    std::vector<double> acc(N * d, 0.0);
    if (tab.spec().variant != KernelVariant::Zero) {
        std::vector<Point> y(N);
        for (std::size_t a = 0; a < N; ++a) y[a] = s.position(static_cast<std::int64_t>(perm[a]));
        const Point self = tab.eval({0.0, 0.0, 0.0});
        switch (d) {
        case 1: pair_sum<1>(tab, y, self, acc); break;
        case 2: pair_sum<2>(tab, y, self, acc); break;
        default: pair_sum<3>(tab, y, self, acc); break;
        }
    }

    const double invN = 1.0 / static_cast<double>(N);
    SimStats local;
    for (std::size_t a = 0; a < N; ++a) {
        std::size_t i = perm[a];
        for (int c = 0; c < d; ++c) {
            double raw = acc[a * d + c] * invN;
            double clamped = std::max(-cutoff.A, std::min(cutoff.A, raw));
            local.clamp_checks += 1;
            if (clamped != raw) local.clamp_events += 1;
            local.max_abs_raw_drift = std::max(local.max_abs_raw_drift, std::abs(raw));
            out[i * d + c] = clamped;
        }
    }
    if (stats) stats->merge(local);
    return out;
}

void require_matching_table(const SimConfig& cfg, const TabulatedKernel& tab) {
    if (tab.spec().id() != cfg.kernel.id() || tab.mollifier().N != cfg.N || tab.mollifier().alpha != cfg.mollifier.alpha ||
        tab.dim() != cfg.d)
        throw ConfigError("kernel table mismatch: table built for " + tab.spec().id() + " N=" +
                          std::to_string(tab.mollifier().N) + ", config wants " + cfg.kernel.id() +
                          " N=" + std::to_string(cfg.N));
}

void em_step(EnsembleState& s, const SimConfig& cfg, const TabulatedKernel& tab, SimStats* stats) {
    const double h = cfg.step();
    const int d = s.d;
    const int k = cfg.noise_substeps;
    const double fine_sd = std::sqrt(h / k) * std::numbers::sqrt2;
    std::vector<double> drift = drift_field(s, tab, CutoffSpec{cfg.A}, stats, &cfg.stream_ids);
    std::array<double, kMaxDim> z{};
    for (std::int64_t i = 0; i < s.N; ++i) {
        double* xi = &s.x[static_cast<std::size_t>(i) * d];
        const double* bi = &drift[static_cast<std::size_t>(i) * d];
        for (int a = 0; a < d; ++a) xi[a] += h * bi[a];
        if (cfg.zero_noise) continue;
        const std::uint64_t stream = cfg.stream_of(i);
        for (int j = 0; j < k; ++j) {
            auto fine = static_cast<std::uint64_t>(s.step) * static_cast<std::uint64_t>(k) + static_cast<std::uint64_t>(j);
            stream_normals(s.seed, stream, RngPurpose::Noise, fine, d, z);
            for (int a = 0; a < d; ++a) xi[a] += fine_sd * z[a];
        }
    }
    s.step += 1;
    s.time = static_cast<double>(s.step) * h;
}

std::vector<EnsembleState> simulate(const SimConfig& cfg, const TabulatedKernel& tab, SimStats* stats) {
    require_matching_table(cfg, tab);
    EnsembleState s = init_ensemble(cfg);
    std::vector<std::int64_t> snaps = cfg.snapshot_steps();
    std::vector<EnsembleState> out;
    std::size_t next = 0;
    auto emit = [&] {
        while (next < snaps.size() && snaps[next] == s.step) {
            out.push_back(s);
            ++next;
        }
    };
    emit();
    const std::int64_t n = cfg.steps();
    while (s.step < n) {
        em_step(s, cfg, tab, stats);
        emit();
    }
    if (n == 0) s.time = 0.0;
    return out;
}

// ---------------------------------------------------------------------------
// Measures

MeasureResult mollified_empirical_measure(const EnsembleState& s, const MollifierParams& m, const GridField& geometry) {
    if (geometry.d != s.d) throw ConfigError("measure grid dimension differs from the ensemble");
    const double eps = m.scaled_radius();
    const double dx = geometry.spacing();
    if (dx > 0.25 * eps * (1.0 + 1e-12))
        throw ConfigError("measure grid spacing " + std::to_string(dx) + " does not resolve the mollifier (need <= " +
                          std::to_string(0.25 * eps) + ")");
    MeasureResult res;
    res.field = GridField::zeros(geometry.d, geometry.n, geometry.L, s.time);
    const int d = s.d;
    const double invN = 1.0 / static_cast<double>(s.N);
    double leak = 0.0;
    const double cell = res.field.cell_volume();
    std::array<int, kMaxDim> lo{}, hi{};
    std::vector<std::pair<std::size_t, double>> stencil;
    for (std::int64_t i = 0; i < s.N; ++i) {
        Point p = s.position(i);
        for (int a = 0; a < d; ++a) {
            lo[a] = static_cast<int>(std::ceil((p[a] - eps + geometry.L) / dx));
            hi[a] = static_cast<int>(std::floor((p[a] + eps + geometry.L) / dx));
        }
        double inside = 0.0, total = 0.0;
        // iterate over the (virtual, unclipped) node cube around the particle
        std::array<int, kMaxDim> cur = lo;
        bool done = false;
        for (int a = 0; a < d; ++a)
            if (hi[a] < lo[a]) done = true;
        while (!done) {
            double r2 = 0.0;
            bool in_box = true;
            for (int a = 0; a < d; ++a) {
                double xa = -geometry.L + cur[a] * dx;
                r2 += (xa - p[a]) * (xa - p[a]);
                if (cur[a] < 0 || cur[a] >= geometry.n) in_box = false;
            }
            double v = mollifier_radial(m, std::sqrt(r2));
            if (v > 0.0) {
                stencil.emplace_back(in_box ? res.field.flat_index(cur) : std::size_t(-1), v);
                total += v;
                if (in_box) inside += v;
            }
            int a = d - 1;
            while (a >= 0) {
                if (++cur[a] <= hi[a]) break;
                cur[a] = lo[a];
                --a;
            }
            if (a < 0) done = true;
        }
        if (total > 0.0) {
            // grid-normalised bump: its node sum times the cell volume is exactly 1
            const double scale = invN / (total * cell);
            for (auto [k, v] : stencil)
                if (k != std::size_t(-1)) res.field.values[k] += v * scale;
            leak += (total - inside) / total;
        }
        stencil.clear();
    }
    res.leakage = leak * invN;
    res.leakage_warning = res.leakage > 1e-3;
    return res;
}

DensityEstimate histogram_density(const std::vector<Point>& samples, const GridField& geometry) {
    DensityEstimate est;
    est.density = GridField::zeros(geometry.d, geometry.n, geometry.L, geometry.time);
    est.stderr_ = est.density;
    est.counts.assign(est.density.size(), 0);
    std::array<int, kMaxDim> idx{};
    for (const Point& p : samples) {
        bool ok = true;
        for (int a = 0; a < geometry.d; ++a) {
            idx[a] = cell_of(p[a], geometry);
            if (idx[a] < 0) ok = false;
        }
        est.samples += 1;
        if (!ok) {
            est.outside += 1;
            continue;
        }
        est.counts[est.density.flat_index(idx)] += 1;
    }
    const double vol = est.density.cell_volume();
    const double S = static_cast<double>(est.samples);
    for (std::size_t i = 0; i < est.counts.size(); ++i) {
        double p = S > 0 ? static_cast<double>(est.counts[i]) / S : 0.0;
        est.density.values[i] = p / vol;
        est.stderr_.values[i] = S > 0 ? std::sqrt(p * (1.0 - p) / S) / vol : 0.0;
    }
    return est;
}

DensityEstimate replica_density_estimate(const SimConfig& cfg, const TabulatedKernel& tab, std::int64_t particle_index,
                                         int M, std::uint64_t master_seed, double t, const GridField& geometry,
                                         int workers, SimStats* stats) {
    if (M < 1) throw ConfigError("replica count must be positive");
    if (particle_index >= cfg.N) throw ConfigError("particle index out of range");
    SimConfig base = cfg;
    base.snapshot_times = {t};
    struct Partial {
        std::vector<Point> points;
        SimStats stats;
    };
    auto results = parallel_map(static_cast<std::size_t>(M), workers, [&](std::size_t r) {
        SimConfig c = base;
        c.seed = derive_seed(master_seed, r);
        Partial part;
        auto snaps = simulate(c, tab, &part.stats);
        const EnsembleState& s = snaps.back();
        if (particle_index >= 0) {
            part.points.push_back(s.position(particle_index));
        } else {
            for (std::int64_t i = 0; i < s.N; ++i) part.points.push_back(s.position(i));
        }
        return part;
    });
    std::vector<Point> all;
    for (auto& p : results) {
        all.insert(all.end(), p.points.begin(), p.points.end());
        if (stats) stats->merge(p.stats);
    }
    DensityEstimate est = histogram_density(all, geometry);
    est.density.time = est.stderr_.time = t;
    return est;
}

DominationReport gaussian_domination_check(const DensityEstimate& est, const InitialDensity& u0, double t, double c,
                                           std::uint64_t min_count) {
    if (!(c > 2.0)) throw ConfigError("Gaussian domination needs c > 2");
    DominationReport rep;
    rep.ratio = GridField::zeros(est.density.d, est.density.n, est.density.L, t);
    const double w = est.density.spacing();
    for (std::size_t i = 0; i < est.counts.size(); ++i) {
        if (est.counts[i] < min_count) continue;
        double g = u0.smoothed_cell_average(est.density.node(i), w, c * t);
        if (!(g > 1e-300)) continue;
        double ratio = est.density.values[i] / g;
        rep.ratio.values[i] = ratio;
        rep.R = std::max(rep.R, ratio);
        rep.cells_used += 1;
    }
    if (rep.cells_used == 0) throw ConfigError("Gaussian domination check: no cell reaches the count threshold");
    return rep;
}

void write_snapshot_dump(const std::filesystem::path& file, const std::string& run_id, int replica,
                         const std::vector<EnsembleState>& snapshots, bool append) {
    std::ofstream os(file, append ? std::ios::app : std::ios::trunc);
    if (!os) throw ConfigError("cannot write snapshot dump " + file.string());
    os << std::setprecision(17);
    if (!append) {
        os << "run_id replica time index";
        if (!snapshots.empty())
            for (int a = 0; a < snapshots.front().d; ++a) os << " x" << a + 1;
        os << "\n";
    }
    for (const auto& s : snapshots)
        for (std::int64_t i = 0; i < s.N; ++i) {
            os << run_id << ' ' << replica << ' ' << s.time << ' ' << i;
            for (int a = 0; a < s.d; ++a) os << ' ' << s.x[static_cast<std::size_t>(i) * s.d + a];
            os << '\n';
        }
}

} // namespace mkv
