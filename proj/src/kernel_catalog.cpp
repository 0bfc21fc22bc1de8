#include "mkv/kernel_catalog.hpp"
#include "mkv/quadrature.hpp"

#include <boost/math/quadrature/tanh_sinh.hpp>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>
#include <unordered_map>

namespace mkv {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double sphere_area(int dim) {
    switch (dim) {
    case 1: return 2.0;
    case 2: return 2.0 * std::numbers::pi;
    case 3: return 4.0 * std::numbers::pi;
    default: throw ConfigError("dimension must be 1, 2 or 3");
    }
}

double unit_bump(double t) {
    if (t >= 1.0) return 0.0;
    return std::exp(-1.0 / (1.0 - t * t));
}

boost::math::quadrature::tanh_sinh<double>& tanh_sinh_rule() {
    thread_local boost::math::quadrature::tanh_sinh<double> rule(12);
    return rule;
}

// Endpoint-singular integrands (an unbounded kernel profile at a = 0) go to
// tanh-sinh; everything else to adaptive Gauss-Kronrod with an absolute floor.
template <class F>
QuadratureResult integrate_inner(F&& f, double a, double b, double tol, double abs_tol, bool singular_at_a) {
    QuadratureResult q;
    if (!(b > a)) return q;
    if (singular_at_a && a == 0.0 && b > 1e-9) {
        std::size_t levels = 0;
        q.value = tanh_sinh_rule().integrate(f, a, b, tol, &q.error, &q.l1, &levels);
        return q;
    }
    return integrate_adaptive(f, a, b, tol, abs_tol);
}

void check_quadrature(const QuadratureResult& q, double floor, const KernelSpec& spec, double r, const char* stage) {
    if (!std::isfinite(q.value) || q.error > 1e-6 * q.l1 + floor) {
        std::ostringstream os;
        os << "quadrature did not reach relative tolerance 1e-6 (" << stage << ") for kernel " << spec.id()
           << " at r=" << r << ": value=" << q.value << " error=" << q.error << " l1=" << q.l1;
        throw QuadratureError(os.str());
    }
}

} // namespace

std::string to_string(KernelVariant v) {
    switch (v) {
    case KernelVariant::Zero: return "zero";
    case KernelVariant::BoundedLipschitzDemo: return "bounded_lipschitz";
    case KernelVariant::RieszGradient: return "riesz";
    case KernelVariant::KellerSegel: return "keller_segel";
    case KernelVariant::TruncatedRiesz: return "truncated_riesz";
    case KernelVariant::TabulatedCustom: return "tabulated_custom";
    }
    return "?";
}

KernelVariant parse_kernel_variant(const std::string& name) {
    for (auto v : {KernelVariant::Zero, KernelVariant::BoundedLipschitzDemo, KernelVariant::RieszGradient,
                   KernelVariant::KellerSegel, KernelVariant::TruncatedRiesz, KernelVariant::TabulatedCustom})
        if (to_string(v) == name) return v;
    throw ConfigError("unknown kernel variant '" + name + "'");
}

std::string to_string(FarFieldRule r) {
    switch (r) {
    case FarFieldRule::AnalyticEqualToK: return "analytic-equal-to-K";
    case FarFieldRule::AnalyticClosedForm: return "analytic-closed-form";
    case FarFieldRule::ExtrapolateSmooth: return "extrapolate-smooth";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// KernelSpec

void KernelSpec::validate() const {
    if (dim < 1 || dim > kMaxDim) throw ConfigError("kernel dimension must be in {1,2,3}");
    switch (variant) {
    case KernelVariant::RieszGradient:
        if (dim < 2) throw ConfigError("RieszGradient requires d >= 2");
        if (!(s >= 0.0 && s <= dim - 2.0)) throw ConfigError("RieszGradient requires 0 <= s <= d-2");
        break;
    case KernelVariant::KellerSegel:
        if (dim != 2) throw ConfigError("KellerSegel kernel is defined for d = 2");
        if (!(chi > 0.0)) throw ConfigError("KellerSegel strength chi must be positive");
        break;
    case KernelVariant::TruncatedRiesz:
        if (!(alpha_sing > 1.0 && alpha_sing < 2.0)) throw ConfigError("TruncatedRiesz requires alpha_sing in (1,2)");
        break;
    case KernelVariant::TabulatedCustom:
        if (profile.size() < 2 || !(profile_dr > 0.0))
            throw ConfigError("TabulatedCustom needs at least two profile samples and a positive spacing");
        if (profile.front() != 0.0) throw ConfigError("TabulatedCustom profile must vanish at r = 0");
        for (double v : profile)
            if (!std::isfinite(v)) throw ConfigError("TabulatedCustom profile must be finite");
        break;
    default: break;
    }
}

bool KernelSpec::is_singular() const {
    return variant == KernelVariant::RieszGradient || variant == KernelVariant::KellerSegel ||
           variant == KernelVariant::TruncatedRiesz;
}

bool KernelSpec::is_harmonic() const {
    if (variant == KernelVariant::KellerSegel) return true;
    if (variant == KernelVariant::RieszGradient) return s == dim - 2.0;
    return false;
}

double KernelSpec::support_radius() const {
    switch (variant) {
    case KernelVariant::Zero: return 0.0;
    case KernelVariant::TruncatedRiesz: return 2.0;
    case KernelVariant::TabulatedCustom: return profile_dr * static_cast<double>(profile.size() - 1);
    default: return kInf;
    }
}

std::string KernelSpec::id() const {
    std::ostringstream os;
    os << std::setprecision(17) << to_string(variant) << "_d" << dim;
    switch (variant) {
    case KernelVariant::RieszGradient:
        os << "_s" << s << (sign == Interaction::Attractive ? "_att" : "_rep");
        break;
    case KernelVariant::KellerSegel: os << "_chi" << chi; break;
    case KernelVariant::TruncatedRiesz: os << "_a" << alpha_sing; break;
    case KernelVariant::TabulatedCustom: {
        // FNV-1a over the profile bytes
        std::uint64_t h = 1469598103934665603ULL;
        auto mix = [&](const void* p, std::size_t n) {
            auto* b = static_cast<const unsigned char*>(p);
            for (std::size_t i = 0; i < n; ++i) h = (h ^ b[i]) * 1099511628211ULL;
        };
        mix(profile.data(), profile.size() * sizeof(double));
        mix(&profile_dr, sizeof profile_dr);
        os << "_h" << std::hex << h << std::dec;
        break;
    }
    default: break;
    }
    return os.str();
}

double smooth_cutoff(double r) {
    auto psi = [](double t) { return t > 0.0 ? std::exp(-1.0 / t) : 0.0; };
    if (r <= 1.0) return 1.0;
    if (r >= 2.0) return 0.0;
    double a = psi(2.0 - r), b = psi(r - 1.0);
    return a / (a + b);
}

double kernel_profile(const KernelSpec& spec, double r) {
    switch (spec.variant) {
    case KernelVariant::Zero: return 0.0;
    case KernelVariant::BoundedLipschitzDemo: return -r * std::exp(-0.5 * r * r);
    case KernelVariant::RieszGradient: {
        // grad |x|^{-s} = -s x/|x|^{s+2}; for s = 0 the potential is -log|x| with gradient -x/|x|^2
        double mag = spec.s > 0.0 ? spec.s * std::pow(r, -spec.s - 1.0) : 1.0 / r;
        return spec.sign == Interaction::Attractive ? -mag : mag;
    }
    case KernelVariant::KellerSegel: return -spec.chi * std::pow(r, 1.0 - spec.dim);
    case KernelVariant::TruncatedRiesz: return std::pow(r, 1.0 - spec.alpha_sing) * smooth_cutoff(r);
    case KernelVariant::TabulatedCustom: {
        double t = r / spec.profile_dr;
        auto j = static_cast<std::size_t>(t);
        if (j + 1 >= spec.profile.size()) return 0.0;
        double w = t - static_cast<double>(j);
        return (1.0 - w) * spec.profile[j] + w * spec.profile[j + 1];
    }
    }
    return 0.0;
}

Point eval_kernel(const KernelSpec& spec, const Point& x) {
    double r = norm(x);
    if (r == 0.0) {
        if (spec.is_singular()) throw DomainError("kernel " + spec.id() + " evaluated at its singular point");
        return {0.0, 0.0, 0.0};
    }
    double k = kernel_profile(spec, r);
    return (k / r) * x;
}

KernelAssumptions assumptions_for(const KernelSpec& spec, Rational slack) {
    KernelAssumptions a;
    auto exact = [](double v) {
        // exponents built from the kernel parameters; decimals are kept exactly
        std::ostringstream os;
        os << std::setprecision(15) << v;
        return parse_ext_rational(os.str());
    };
    switch (spec.variant) {
    case KernelVariant::Zero:
    case KernelVariant::BoundedLipschitzDemo:
    case KernelVariant::TabulatedCustom:
        a.p = ExtRational::inf();
        a.q = ExtRational::inf();
        a.r = ExtRational(1);
        a.zeta = Rational(1);
        return a;
    case KernelVariant::RieszGradient:
    case KernelVariant::KellerSegel: {
        double s = spec.variant == KernelVariant::KellerSegel ? spec.dim - 2.0 : spec.s;
        ExtRational lim = exact(spec.dim / (s + 1.0));
        a.p = lim;
        a.p_open = true;
        a.q = lim;
        a.q_open = true;
        break;
    }
    case KernelVariant::TruncatedRiesz:
        a.p = exact(spec.dim / (spec.alpha_sing - 1.0));
        a.p_open = true;
        a.q = ExtRational::inf();
        break;
    }
    a.r = ExtRational::inf();
    a.zeta = Rational(1) - slack;
    return a;
}

// ---------------------------------------------------------------------------
// Mollifier

double bump_normalization(int dim) {
    static const std::array<double, 3> cache = [] {
        std::array<double, 3> c{};
        boost::math::quadrature::tanh_sinh<double> rule;
        for (int d = 1; d <= 3; ++d) {
            auto f = [d](double t) { return unit_bump(t) * std::pow(t, d - 1); };
            double integral = rule.integrate(f, 0.0, 1.0, 1e-15);
            c[d - 1] = 1.0 / (sphere_area(d) * integral);
        }
        return c;
    }();
    if (dim < 1 || dim > 3) throw ConfigError("dimension must be 1, 2 or 3");
    return cache[dim - 1];
}

MollifierParams MollifierParams::make(int dim, double alpha, std::int64_t N, double support_radius) {
    if (dim < 1 || dim > kMaxDim) throw ConfigError("mollifier dimension must be in {1,2,3}");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw ConfigError("mollifier exponent alpha must lie in (0,1]");
    if (N < 1) throw ConfigError("particle count N must be positive");
    if (!(support_radius > 0.0)) throw ConfigError("mollifier support radius must be positive");
    MollifierParams m;
    m.dim = dim;
    m.alpha = alpha;
    m.N = N;
    m.support_radius = support_radius;
    m.normalization = bump_normalization(dim);
    return m;
}

double MollifierParams::scaled_radius() const {
    return support_radius * std::pow(static_cast<double>(N), -alpha);
}

double MollifierParams::amplitude() const { return std::pow(static_cast<double>(N), dim * alpha); }

double MollifierParams::second_moment() const {
    static const std::array<double, 3> unit = [] {
        std::array<double, 3> c{};
        boost::math::quadrature::tanh_sinh<double> rule;
        for (int d = 1; d <= 3; ++d) {
            auto f = [d](double t) { return unit_bump(t) * std::pow(t, d + 1); };
            c[d - 1] = bump_normalization(d) * sphere_area(d) * rule.integrate(f, 0.0, 1.0, 1e-15) / d;
        }
        return c;
    }();
    double eps = scaled_radius();
    return unit[dim - 1] * eps * eps;
}

double base_bump(const MollifierParams& m, const Point& x) {
    double t = norm(x) / m.support_radius;
    return m.normalization * std::pow(m.support_radius, -m.dim) * unit_bump(t);
}

double mollifier_eval(const MollifierParams& m, const Point& x) {
    double n = static_cast<double>(m.N);
    return std::pow(n, m.dim * m.alpha) * base_bump(m, std::pow(n, m.alpha) * x);
}

double mollifier_radial(const MollifierParams& m, double r) {
    double eps = m.scaled_radius();
    double t = r / eps;
    if (t >= 1.0) return 0.0;
    return m.normalization * std::pow(eps, -m.dim) * unit_bump(t);
}

// ---------------------------------------------------------------------------
// Cutoff

Point cutoff_apply(const CutoffSpec& c, const Point& v) {
    Point out{};
    for (int i = 0; i < kMaxDim; ++i) out[i] = std::max(-c.A, std::min(c.A, v[i]));
    return out;
}

// ---------------------------------------------------------------------------
// Singular quadrature of K*V^N

double mollified_profile_quadrature(const KernelSpec& spec, const MollifierParams& m, double r, double rel_tol) {
    if (r == 0.0 || spec.variant == KernelVariant::Zero) return 0.0;
    const double eps = m.scaled_radius();
    const int d = spec.dim;
    const double tol = std::max(rel_tol, 1e-14);

    auto weight = [&](double rho) { return kernel_profile(spec, rho) * std::pow(rho, d - 1); };

    // Magnitude scale of the result, used as an absolute floor so that
    // negligible grazing chords do not drive the refinement.
    double peak = 0.0;
    const double lo_r = std::max(0.0, r - eps), hi_r = r + eps;
    for (int j = 0; j <= 32; ++j) {
        double rho = lo_r + (hi_r - lo_r) * (j + 0.5) / 33.0;
        peak = std::max(peak, std::abs(weight(rho)));
    }
    const double vmax = mollifier_radial(m, 0.0);
    const double angular = std::pow(std::min(1.0, eps / r), d - 1);
    const double scale = peak * 2.0 * eps * vmax * sphere_area(d) * angular;
    const double outer_floor = 1e-3 * tol * scale;
    // values far below the kernel's own magnitude near the mollifier scale are noise
    double kmag = 0.0;
    for (int j = 1; j <= 64; ++j) kmag = std::max(kmag, std::abs(kernel_profile(spec, (r + eps) * j / 64.0)));
    const double check_floor = 1e-9 * scale + 1e-14 * kmag;

    if (d == 1) {
        // K(z) = k(|z|) sign(z): f(r) = int_0^inf k(rho) [V(r - rho) - V(r + rho)] drho
        const bool sing = spec.is_singular();
        auto f1 = [&](double rho) { return kernel_profile(spec, rho) * mollifier_radial(m, std::abs(r - rho)); };
        auto f2 = [&](double rho) { return kernel_profile(spec, rho) * mollifier_radial(m, r + rho); };
        QuadratureResult a = integrate_inner(f1, std::max(0.0, r - eps), r + eps, tol, 0.0, sing);
        QuadratureResult b = integrate_inner(f2, 0.0, std::max(0.0, eps - r), tol, 0.0, sing);
        QuadratureResult total{a.value - b.value, a.error + b.error, a.l1 + b.l1, true};
        check_quadrature(total, check_floor, spec, r, "radial");
        return total.value;
    }

    // Polar (d=2) or spherical (d=3) coordinates z = rho*omega around the
    // singular point; the chord of the mollifier ball along omega bounds rho.
    // The Jacobian rho^{d-1} keeps rho^{d-1} k(rho) bounded for every catalog kernel.
    // Outer variable: theta in [0, lim] (d = 2) or cos(theta) in [lim, 1] (d = 3)
    double lim;
    if (d == 2) lim = r > eps ? std::asin(eps / r) : std::numbers::pi;
    else lim = r > eps ? std::sqrt(1.0 - (eps / r) * (eps / r)) : -1.0;
    const double range = d == 2 ? lim : 1.0 - lim;
    const double inner_floor = outer_floor / range;

    double inner_error = 0.0;
    auto chord_integral = [&](double c) {
        double s2 = std::max(0.0, 1.0 - c * c);
        double disc = eps * eps - r * r * s2;
        if (disc <= 0.0) return 0.0;
        double sq = std::sqrt(disc);
        double lo = std::max(0.0, r * c - sq), hi = r * c + sq;
        if (!(hi > lo)) return 0.0;
        auto g = [&](double rho) {
            double dist2 = std::max(0.0, r * r - 2.0 * r * rho * c + rho * rho);
            return weight(rho) * mollifier_radial(m, std::sqrt(dist2));
        };
        QuadratureResult q = integrate_adaptive(g, lo, hi, tol, inner_floor);
        inner_error = std::max(inner_error, q.error);
        return q.value;
    };

    QuadratureResult outer;
    double factor;
    if (d == 2) {
        auto h = [&](double theta) { return std::cos(theta) * chord_integral(std::cos(theta)); };
        outer = integrate_adaptive(h, 0.0, lim, tol, outer_floor);
        factor = 2.0;
    } else {
        auto h = [&](double c) { return c * chord_integral(c); };
        outer = integrate_adaptive(h, lim, 1.0, tol, outer_floor);
        factor = 2.0 * std::numbers::pi;
    }
    outer.error += inner_error * range;
    outer.value *= factor;
    outer.error *= factor;
    outer.l1 *= factor;
    check_quadrature(outer, check_floor, spec, r, "angular");
    return outer.value;
}

Point mollified_kernel_quadrature(const KernelSpec& spec, const MollifierParams& m, const Point& x, double rel_tol) {
    double r = norm(x);
    if (r == 0.0) return {0.0, 0.0, 0.0};
    double f = mollified_profile_quadrature(spec, m, r, rel_tol);
    return (f / r) * x;
}

// ---------------------------------------------------------------------------
// TabulatedKernel

namespace {

FarFieldRule far_rule_for(const KernelSpec& spec) {
    if (spec.variant == KernelVariant::Zero || spec.is_harmonic()) return FarFieldRule::AnalyticEqualToK;
    if (std::isfinite(spec.support_radius())) return FarFieldRule::AnalyticClosedForm;
    return FarFieldRule::ExtrapolateSmooth;
}

} // namespace

TabulatedKernel build_tabulated_kernel(const KernelSpec& spec, const MollifierParams& m, const TableResolution& res) {
    spec.validate();
    if (m.dim != spec.dim) throw ConfigError("mollifier and kernel dimensions differ");
    if (res.cells_per_radius < 16) throw ConfigError("table must resolve the mollifier with >= 16 cells per radius");
    if (res.extent_factor < 3.0) throw ConfigError("table must cover at least 3x the mollifier radius");

    TabulatedKernel tab;
    tab.spec_ = spec;
    tab.mollifier_ = m;
    tab.dim_ = spec.dim;
    const double eps = m.scaled_radius();
    tab.dx_ = eps / res.cells_per_radius;
    tab.inv_dx_ = 1.0 / tab.dx_;
    double half_width = std::max(res.extent_factor * eps, res.min_half_width);
    tab.half_ = static_cast<int>(std::ceil(half_width / tab.dx_ - 1e-9));
    tab.nodes_ = 2 * tab.half_ + 1;
    tab.far_rule_ = far_rule_for(spec);
    tab.m2_ = m.second_moment();
    tab.quad_order_ = 15;

    // Every catalog kernel is radial-vector, so K*V^N(x) = f(|x|) x/|x| with a
    // radial V. Node values only depend on the integer |idx|^2, which bounds
    // the number of quadratures by d * half^2.
    const int d = tab.dim_;
    const int h = tab.half_;
    std::vector<std::int64_t> keys;
    if (d == 1) {
        for (std::int64_t i = 0; i <= h; ++i) keys.push_back(i * i);
    } else if (d == 2) {
        for (std::int64_t i = 0; i <= h; ++i)
            for (std::int64_t j = 0; j <= i; ++j) keys.push_back(i * i + j * j);
    } else {
        for (std::int64_t i = 0; i <= h; ++i)
            for (std::int64_t j = 0; j <= i; ++j)
                for (std::int64_t k = 0; k <= j; ++k) keys.push_back(i * i + j * j + k * k);
    }
    std::sort(keys.begin(), keys.end());
    keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
    std::unordered_map<std::int64_t, double> profile_at_key;
    profile_at_key.reserve(keys.size() * 2);
    for (auto key : keys) {
        double r = std::sqrt(static_cast<double>(key)) * tab.dx_;
        profile_at_key[key] = mollified_profile_quadrature(spec, m, r, res.rel_tol);
    }

    std::size_t count = 1;
    for (int a = 0; a < d; ++a) count *= static_cast<std::size_t>(tab.nodes_);
    tab.values_.assign(count * d, 0.0);
    std::array<int, kMaxDim> idx{};
    for (std::size_t flat = 0; flat < count; ++flat) {
        std::size_t rem = flat;
        for (int a = d - 1; a >= 0; --a) {
            idx[a] = static_cast<int>(rem % tab.nodes_) - h;
            rem /= tab.nodes_;
        }
        std::int64_t key = 0;
        for (int a = 0; a < d; ++a) key += static_cast<std::int64_t>(idx[a]) * idx[a];
        if (key == 0) continue;
        double r = std::sqrt(static_cast<double>(key)) * tab.dx_;
        double scale = profile_at_key.at(key) / r;
        for (int a = 0; a < d; ++a) tab.values_[flat * d + a] = scale * (idx[a] * tab.dx_);
    }

    // Radial profile for the region outside the near-field box.
    if (tab.far_rule_ != FarFieldRule::AnalyticEqualToK) {
        double corner = std::sqrt(static_cast<double>(d)) * tab.half_width();
        tab.far_radius_ = tab.far_rule_ == FarFieldRule::AnalyticClosedForm
                              ? spec.support_radius() + eps
                              : std::max(40.0 * eps, corner * 1.01);
        tab.profile_dr_ = eps / 64.0;
        auto n = static_cast<std::size_t>(std::ceil(tab.far_radius_ / tab.profile_dr_)) + 3;
        tab.profile_.resize(n);
        for (std::size_t j = 0; j < n; ++j)
            tab.profile_[j] = mollified_profile_quadrature(spec, m, j * tab.profile_dr_, res.rel_tol);
    }
    tab.finalize();
    return tab;
}

bool TabulatedKernel::in_table(const Point& x) const {
    const double hw = half_width();
    for (int a = 0; a < dim_; ++a)
        if (!(std::abs(x[a]) <= hw)) return false;
    return true;
}

Point TabulatedKernel::node_value(const std::array<int, kMaxDim>& idx) const {
    std::size_t flat = 0;
    for (int a = 0; a < dim_; ++a) flat = flat * nodes_ + static_cast<std::size_t>(idx[a]);
    Point v{};
    for (int a = 0; a < dim_; ++a) v[a] = values_[flat * dim_ + a];
    return v;
}

double TabulatedKernel::extrapolated_profile(double r) const {
    // K*V = K + (m2/2) Lap K + O(eps^4); for K = g(r) x, Lap K = (g'' + (d+1) g'/r) x
    auto g = [&](double s) { return kernel_profile(spec_, s) / s; };
    double dr = 1e-3 * r;
    double g0 = g(r), gp = g(r + dr), gm = g(r - dr);
    double g1 = (gp - gm) / (2.0 * dr);
    double g2 = (gp - 2.0 * g0 + gm) / (dr * dr);
    return r * (g0 + 0.5 * m2_ * (g2 + (dim_ + 1) * g1 / r));
}

void TabulatedKernel::finalize() {
    blend_outer_ = half_width();
    blend_inner_ = std::max(0.5 * blend_outer_, blend_outer_ - mollifier_.scaled_radius());
    far_profile_.clear();
    far_end_ = 0.0;
    inv_profile_dr_ = profile_dr_ > 0.0 ? 1.0 / profile_dr_ : 0.0;
    if (far_rule_ == FarFieldRule::ExtrapolateSmooth && profile_dr_ > 0.0) {
        // tabulate the extrapolated far field out to where K underflows (at most 64 far radii)
        double end = far_radius_;
        while (end < 64.0 * far_radius_ && std::abs(kernel_profile(spec_, end)) > 1e-300) end += far_radius_;
        auto n = static_cast<std::size_t>(std::ceil((end - far_radius_) / profile_dr_)) + 4;
        far_profile_.resize(n);
        for (std::size_t j = 0; j < n; ++j)
            far_profile_[j] = extrapolated_profile(far_radius_ + (static_cast<double>(j) - 1.0) * profile_dr_);
        far_end_ = far_radius_ + static_cast<double>(n - 4) * profile_dr_;
    }
}

Point TabulatedKernel::eval(const Point& x) const {
    switch (dim_) {
    case 1: return eval_fixed<1>(x);
    case 2: return eval_fixed<2>(x);
    default: return eval_fixed<3>(x);
    }
}

Point TabulatedKernel::interpolate(const Point& x) const {
    switch (dim_) {
    case 1: return interpolate_fixed<1>(x);
    case 2: return interpolate_fixed<2>(x);
    default: return interpolate_fixed<3>(x);
    }
}

Point TabulatedKernel::far_field_exact(const Point& x, double r) const {
    if (far_rule_ == FarFieldRule::AnalyticEqualToK) return eval_kernel(spec_, x);
    return (extrapolated_profile(r) / r) * x;
}

std::string TabulatedKernel::cache_key(const KernelSpec& spec, const MollifierParams& m, const TableResolution& res) {
    std::ostringstream os;
    os << std::setprecision(17) << spec.id() << "_N" << m.N << "_a" << m.alpha << "_R" << m.support_radius << "_c"
       << res.cells_per_radius << "_e" << res.extent_factor << "_w" << res.min_half_width << "_t" << res.rel_tol;
    std::string key = os.str();
    for (char& ch : key)
        if (ch == '/' || ch == ' ') ch = '_';
    return key + ".kvnt";
}

namespace {

template <class T>
void put(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw ConfigError("truncated kernel table file");
    return v;
}

void put_spec(std::ostream& os, const KernelSpec& s) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(s.variant));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(s.dim));
    put<double>(os, s.s);
    put<std::uint32_t>(os, s.sign == Interaction::Attractive ? 0u : 1u);
    put<double>(os, s.chi);
    put<double>(os, s.alpha_sing);
    put<double>(os, s.profile_dr);
    put<std::uint64_t>(os, s.profile.size());
    os.write(reinterpret_cast<const char*>(s.profile.data()), static_cast<std::streamsize>(s.profile.size() * sizeof(double)));
}

KernelSpec get_spec(std::istream& is) {
    KernelSpec s;
    s.variant = static_cast<KernelVariant>(get<std::uint32_t>(is));
    s.dim = static_cast<int>(get<std::uint32_t>(is));
    s.s = get<double>(is);
    s.sign = get<std::uint32_t>(is) == 0u ? Interaction::Attractive : Interaction::Repulsive;
    s.chi = get<double>(is);
    s.alpha_sing = get<double>(is);
    s.profile_dr = get<double>(is);
    s.profile.resize(get<std::uint64_t>(is));
    is.read(reinterpret_cast<char*>(s.profile.data()), static_cast<std::streamsize>(s.profile.size() * sizeof(double)));
    if (!is) throw ConfigError("truncated kernel table file");
    return s;
}

} // namespace

// Layout: "KVNT", u32 version, u32 d, u64 N, f64 alpha, u64 dims[d], f64 spacing,
// then prod(dims)*d f64 values (row-major, components last), then a trailer with
// the far-field profile and provenance.
void TabulatedKernel::save(const std::filesystem::path& file) const {
    std::ofstream os(file, std::ios::binary | std::ios::trunc);
    if (!os) throw ConfigError("cannot write kernel table " + file.string());
    os.write("KVNT", 4);
    put<std::uint32_t>(os, kFormatVersion);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(dim_));
    put<std::uint64_t>(os, static_cast<std::uint64_t>(mollifier_.N));
    put<double>(os, mollifier_.alpha);
    for (int a = 0; a < dim_; ++a) put<std::uint64_t>(os, static_cast<std::uint64_t>(nodes_));
    put<double>(os, dx_);
    os.write(reinterpret_cast<const char*>(values_.data()), static_cast<std::streamsize>(values_.size() * sizeof(double)));
    // trailer
    put<std::uint32_t>(os, static_cast<std::uint32_t>(far_rule_));
    put<double>(os, far_radius_);
    put<double>(os, profile_dr_);
    put<std::uint64_t>(os, profile_.size());
    os.write(reinterpret_cast<const char*>(profile_.data()), static_cast<std::streamsize>(profile_.size() * sizeof(double)));
    put<double>(os, m2_);
    put<double>(os, mollifier_.support_radius);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(quad_order_));
    put_spec(os, spec_);
    if (!os) throw ConfigError("failed writing kernel table " + file.string());
}

TabulatedKernel TabulatedKernel::load(const std::filesystem::path& file) {
    std::ifstream is(file, std::ios::binary);
    if (!is) throw ConfigError("cannot open kernel table " + file.string());
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "KVNT", 4) != 0) throw ConfigError("not a kernel table (bad magic): " + file.string());
    auto version = get<std::uint32_t>(is);
    if (version != kFormatVersion) throw ConfigError("unsupported kernel table version " + std::to_string(version));
    TabulatedKernel t;
    t.dim_ = static_cast<int>(get<std::uint32_t>(is));
    if (t.dim_ < 1 || t.dim_ > kMaxDim) throw ConfigError("kernel table has invalid dimension");
    auto N = static_cast<std::int64_t>(get<std::uint64_t>(is));
    double alpha = get<double>(is);
    std::uint64_t nodes = 0;
    for (int a = 0; a < t.dim_; ++a) {
        auto n = get<std::uint64_t>(is);
        if (a > 0 && n != nodes) throw ConfigError("kernel table must be cubic");
        nodes = n;
    }
    if (nodes % 2 == 0) throw ConfigError("kernel table must have an odd node count");
    t.nodes_ = static_cast<int>(nodes);
    t.half_ = t.nodes_ / 2;
    t.dx_ = get<double>(is);
    t.inv_dx_ = 1.0 / t.dx_;
    std::size_t count = 1;
    for (int a = 0; a < t.dim_; ++a) count *= nodes;
    t.values_.resize(count * t.dim_);
    is.read(reinterpret_cast<char*>(t.values_.data()), static_cast<std::streamsize>(t.values_.size() * sizeof(double)));
    if (!is) throw ConfigError("truncated kernel table file");
    t.far_rule_ = static_cast<FarFieldRule>(get<std::uint32_t>(is));
    t.far_radius_ = get<double>(is);
    t.profile_dr_ = get<double>(is);
    t.profile_.resize(get<std::uint64_t>(is));
    is.read(reinterpret_cast<char*>(t.profile_.data()), static_cast<std::streamsize>(t.profile_.size() * sizeof(double)));
    t.m2_ = get<double>(is);
    double support = get<double>(is);
    t.quad_order_ = static_cast<int>(get<std::uint32_t>(is));
    t.spec_ = get_spec(is);
    t.mollifier_ = MollifierParams::make(t.dim_, alpha, N, support);
    t.finalize();
    return t;
}

bool operator==(const TabulatedKernel& a, const TabulatedKernel& b) {
    return a.dim_ == b.dim_ && a.half_ == b.half_ && a.dx_ == b.dx_ && a.values_ == b.values_ &&
           a.far_rule_ == b.far_rule_ && a.profile_ == b.profile_ && a.far_radius_ == b.far_radius_ &&
           a.spec_.id() == b.spec_.id() && a.mollifier_.N == b.mollifier_.N && a.mollifier_.alpha == b.mollifier_.alpha;
}

TabulatedKernel load_or_build_tabulated_kernel(const KernelSpec& spec, const MollifierParams& m,
                                               const TableResolution& res,
                                               const std::optional<std::filesystem::path>& cache_dir) {
    if (!cache_dir) return build_tabulated_kernel(spec, m, res);
    std::filesystem::create_directories(*cache_dir);
    auto file = *cache_dir / TabulatedKernel::cache_key(spec, m, res);
    if (std::filesystem::exists(file)) {
        try {
            return TabulatedKernel::load(file);
        } catch (const ConfigError&) {
            // stale or partial cache entry: rebuild below
        }
    }
    TabulatedKernel tab = build_tabulated_kernel(spec, m, res);
    auto tmp = file;
    tmp += ".tmp";
    tab.save(tmp);
    std::filesystem::rename(tmp, file);
    return tab;
}

} // namespace mkv
