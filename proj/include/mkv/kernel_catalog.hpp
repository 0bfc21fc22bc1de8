#pragma once

// Interaction kernels, the mollifier family V^N, the drift cutoff F_A and the
// tabulated mollified kernel K*V^N used by the particle drift.

#include "mkv/common.hpp"
#include "mkv/rational.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mkv {

enum class KernelVariant {
    Zero,                 // K = 0, the driftless benchmark
    BoundedLipschitzDemo, // K(x) = -x exp(-|x|^2/2)
    RieszGradient,        // K = +-grad |x|^{-s}  (s = 0: +-grad(-log|x|))
    KellerSegel,          // K(x) = -chi x / |x|^d, d = 2
    TruncatedRiesz,       // K(x) = x / |x|^a * cut(|x|), a in (1,2)
    TabulatedCustom,      // K(x) = k(|x|) x/|x| with k piecewise linear, zero past the last sample
};

enum class Interaction { Attractive, Repulsive };

std::string to_string(KernelVariant v);
KernelVariant parse_kernel_variant(const std::string& name);

struct KernelSpec {
    KernelVariant variant = KernelVariant::Zero;
    int dim = 1;
    double s = 1.0;                        // RieszGradient exponent
    Interaction sign = Interaction::Attractive; // RieszGradient
    double chi = 1.0;                      // KellerSegel strength
    double alpha_sing = 1.5;               // TruncatedRiesz exponent
    std::vector<double> profile;           // TabulatedCustom: k(j * profile_dr), j = 0..
    double profile_dr = 0.0;

    /// Throws ConfigError naming the violated constraint.
    void validate() const;

    bool is_singular() const;
    /// Gradient of a potential that is harmonic away from 0 (Coulomb type).
    /// For these K*V = K outside the support of a radial V.
    bool is_harmonic() const;
    /// Radius of the support of K, infinity when K is not compactly supported.
    double support_radius() const;
    /// K is smooth outside this radius.
    double singular_radius() const { return 0.0; }

    /// Stable identifier used for cache keys and provenance.
    std::string id() const;
};

/// Radial profile k with K(x) = k(|x|) x/|x|. Every catalog kernel has this form.
double kernel_profile(const KernelSpec& spec, double r);

/// Raw kernel value. Throws DomainError at x = 0 for singular variants.
Point eval_kernel(const KernelSpec& spec, const Point& x);

/// Smooth radial cutoff: 1 on [0,1], 0 on [2,inf).
double smooth_cutoff(double r);

struct KernelAssumptions {
    ExtRational p;          // integrability exponent on the unit ball
    bool p_open = false;    // p is a strict upper limit (p < value)
    ExtRational q;          // integrability exponent outside the unit ball
    bool q_open = false;    // q is a strict lower limit (q > value)
    ExtRational r;
    Rational zeta{1};
};

/// Parameters entering the rate calculator. Singular kernels take r = inf and
/// zeta = 1 - slack.
KernelAssumptions assumptions_for(const KernelSpec& spec, Rational slack = Rational(1, 100));

// ---------------------------------------------------------------------------
// Mollifier

struct MollifierParams {
    int dim = 1;
    double alpha = 1.0 / 3.0;
    std::int64_t N = 1;
    double support_radius = 1.0;
    double normalization = 0.0; // c_d: integral of the unscaled bump over its support is 1

    static MollifierParams make(int dim, double alpha, std::int64_t N, double support_radius = 1.0);

    /// Support radius of V^N, i.e. support_radius * N^{-alpha}.
    double scaled_radius() const;
    /// N^{d alpha}
    double amplitude() const;
    /// Per-coordinate second moment of V^N.
    double second_moment() const;
};

/// c_d such that c_d * exp(-1/(1-|x|^2)) integrates to 1 over the unit ball in R^d.
double bump_normalization(int dim);

/// Base bump V(x) = c_d R^{-d} exp(-1/(1-|x/R|^2)) for |x| < R, else 0.
double base_bump(const MollifierParams& m, const Point& x);
/// V^N(x) = N^{d alpha} V(N^alpha x)
double mollifier_eval(const MollifierParams& m, const Point& x);
/// V^N as a function of |x|.
double mollifier_radial(const MollifierParams& m, double r);

// ---------------------------------------------------------------------------
// Cutoff F_A

struct CutoffSpec {
    double A = 1.0;
};

/// Componentwise clamp to [-A, A].
Point cutoff_apply(const CutoffSpec& c, const Point& v);

// ---------------------------------------------------------------------------
// Mollified kernel K * V^N

enum class FarFieldRule {
    AnalyticEqualToK,  // K*V^N = K outside the mollifier support (harmonic kernels)
    AnalyticClosedForm, // radial profile up to supp K + eps, exactly zero beyond
    ExtrapolateSmooth, // radial profile up to far_radius, then K + (m2/2) Lap K
};

std::string to_string(FarFieldRule r);

struct TableResolution {
    int cells_per_radius = 16; // near-field cells per scaled mollifier radius (>= 16)
    double extent_factor = 3.0; // near-field half-width in units of the scaled radius (>= 3)
    double min_half_width = 0.0; // optional absolute lower bound on the half-width
    double rel_tol = 1e-10;     // target relative tolerance of the adaptive quadrature
};

/// K*V^N(x) computed directly by adaptive quadrature in polar/spherical
/// coordinates centred on the singular point. Throws QuadratureError when the
/// error estimate exceeds 1e-6 relative.
Point mollified_kernel_quadrature(const KernelSpec& spec, const MollifierParams& m, const Point& x,
                                  double rel_tol = 1e-10);

/// Radial profile f with K*V^N(x) = f(|x|) x/|x|.
double mollified_profile_quadrature(const KernelSpec& spec, const MollifierParams& m, double r,
                                    double rel_tol = 1e-10);

class TabulatedKernel {
public:
    static constexpr std::uint32_t kFormatVersion = 1;

    TabulatedKernel() = default;

    const KernelSpec& spec() const { return spec_; }
    const MollifierParams& mollifier() const { return mollifier_; }
    int dim() const { return dim_; }
    int nodes_per_dim() const { return nodes_; }
    int half_nodes() const { return half_; }
    double spacing() const { return dx_; }
    double half_width() const { return half_ * dx_; }
    FarFieldRule far_rule() const { return far_rule_; }
    double far_radius() const { return far_radius_; }
    int quadrature_order() const { return quad_order_; }

    /// Node coordinate along one axis, index in [0, nodes_per_dim).
    double node_coord(int i) const { return (i - half_) * dx_; }
    /// Stored value at a multi-index (unused trailing indices ignored).
    Point node_value(const std::array<int, kMaxDim>& idx) const;
    const std::vector<double>& values() const { return values_; }

    /// Multilinear interpolation for |x| <= blend_inner(), the far-field rule for
    /// |x| >= blend_outer(), and a smoothstep blend of the two in between.
    Point eval(const Point& x) const;
    /// Plain multilinear interpolation of the stored nodes (x inside the box).
    Point interpolate(const Point& x) const;
    /// eval and interpolate with the dimension fixed at compile time (D = dim()).
    template <int D>
    Point eval_fixed(const Point& x) const;
    template <int D>
    Point interpolate_fixed(const Point& x) const;
    double blend_inner() const { return blend_inner_; }
    double blend_outer() const { return blend_outer_; }

    /// True when x lies inside the near-field box.
    bool in_table(const Point& x) const;

    void save(const std::filesystem::path& file) const;
    static TabulatedKernel load(const std::filesystem::path& file);

    /// Cache key: (kernel, N, alpha, resolution).
    static std::string cache_key(const KernelSpec& spec, const MollifierParams& m, const TableResolution& res);

    friend TabulatedKernel build_tabulated_kernel(const KernelSpec&, const MollifierParams&, const TableResolution&);
    friend bool operator==(const TabulatedKernel& a, const TabulatedKernel& b);

private:
    template <int D>
    Point far_field(const Point& x, double r) const;
    Point far_field_exact(const Point& x, double r) const;
    void finalize();
    double profile_at(double r) const;
    double extrapolated_profile(double r) const;

    KernelSpec spec_;
    MollifierParams mollifier_;
    int dim_ = 1;
    int half_ = 0;
    int nodes_ = 1;
    double dx_ = 1.0;
    double inv_dx_ = 1.0;
    std::vector<double> values_; // row-major node index, then vector component
    FarFieldRule far_rule_ = FarFieldRule::AnalyticEqualToK;
    std::vector<double> profile_; // f(j * profile_dr_)
    double profile_dr_ = 0.0;
    double far_radius_ = 0.0;
    double m2_ = 0.0;
    int quad_order_ = 15;
    double blend_inner_ = 0.0;
    double blend_outer_ = 0.0;
    std::vector<double> far_profile_; // extrapolated profile from far_radius_ - dr, spacing profile_dr_
    double far_end_ = 0.0;
    double inv_profile_dr_ = 0.0;
};

inline double TabulatedKernel::profile_at(double r) const {
    // Catmull-Rom on the uniform radial grid; f is odd in r, which supplies the ghost at -dr.
    double t = r * inv_profile_dr_;
    auto j = static_cast<std::int64_t>(t);
    auto n = static_cast<std::int64_t>(profile_.size());
    if (j + 2 >= n) return profile_[n - 1];
    double w = t - static_cast<double>(j);
    double p0 = j == 0 ? -profile_[1] : profile_[j - 1];
    double p1 = profile_[j], p2 = profile_[j + 1], p3 = profile_[j + 2];
    return p1 + 0.5 * w * (p2 - p0 + w * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 + w * (3.0 * (p1 - p2) + p3 - p0)));
}

template <int D>
Point TabulatedKernel::far_field(const Point& x, double r) const {
    auto radial = [&](double f) -> Point {
        if constexpr (D == 1) return {x[0] < 0.0 ? -f : f, 0.0, 0.0};
        else return (f / r) * x;
    };
    switch (far_rule_) {
    case FarFieldRule::AnalyticEqualToK: return far_field_exact(x, r);
    case FarFieldRule::AnalyticClosedForm:
        if (r >= far_radius_) return {0.0, 0.0, 0.0};
        return radial(profile_at(r));
    case FarFieldRule::ExtrapolateSmooth: {
        if (r < far_radius_) return radial(profile_at(r));
        if (r < far_end_) {
            double t = (r - far_radius_) * inv_profile_dr_;
            auto j = static_cast<std::size_t>(t);
            double w = t - static_cast<double>(j);
            const double* q = &far_profile_[j];
            double v = q[1] + 0.5 * w * (q[2] - q[0] + w * (2.0 * q[0] - 5.0 * q[1] + 4.0 * q[2] - q[3] +
                                                             w * (3.0 * (q[1] - q[2]) + q[3] - q[0])));
            return radial(v);
        }
        return far_field_exact(x, r);
    }
    }
    return {0.0, 0.0, 0.0};
}

template <int D>
Point TabulatedKernel::interpolate_fixed(const Point& x) const {
    std::array<int, kMaxDim> i0{};
    std::array<double, kMaxDim> w{};
    for (int a = 0; a < D; ++a) {
        double t = (x[a] + half_ * dx_) * inv_dx_;
        double nearest = t >= 0.0 ? static_cast<double>(static_cast<std::int64_t>(t + 0.5)) : std::round(t);
        if (std::abs(t - nearest) < 1e-9) t = nearest; // nodes reproduce stored values exactly
        int i = static_cast<int>(t);
        i = std::clamp(i, 0, nodes_ - 2);
        i0[a] = i;
        w[a] = t - i;
    }
    Point out{};
    constexpr int corners = 1 << D;
    for (int c = 0; c < corners; ++c) {
        double weight = 1.0;
        std::size_t flat = 0;
        for (int a = 0; a < D; ++a) {
            int bit = (c >> a) & 1;
            weight *= bit ? w[a] : 1.0 - w[a];
            flat = flat * nodes_ + static_cast<std::size_t>(i0[a] + bit);
        }
        for (int a = 0; a < D; ++a) out[a] += weight * values_[flat * D + a];
    }
    return out;
}

template <int D>
Point TabulatedKernel::eval_fixed(const Point& x) const {
    const double outer = blend_outer_, inner = blend_inner_;
    if constexpr (D == 1) {
        // radial kernels are odd in 1D: K(x) = f(|x|) sign(x)
        const double r = std::abs(x[0]);
        if (r <= inner) return interpolate_fixed<1>(x);
        if (r >= outer) return far_field<1>(x, r);
        const double t = (outer - r) / (outer - inner);
        const double w = t * t * (3.0 - 2.0 * t);
        return w * interpolate_fixed<1>(x) + (1.0 - w) * far_field<1>(x, r);
    } else {
        double r2 = 0.0;
        for (int a = 0; a < D; ++a) r2 += x[a] * x[a];
        if (r2 >= outer * outer) return far_field<D>(x, std::sqrt(r2));
        if (r2 <= inner * inner) return interpolate_fixed<D>(x);
        // overlap shell: smoothstep from the table to the far-field rule
        const double r = std::sqrt(r2);
        const double t = (outer - r) / (outer - inner);
        const double w = t * t * (3.0 - 2.0 * t);
        return w * interpolate_fixed<D>(x) + (1.0 - w) * far_field<D>(x, r);
    }
}

TabulatedKernel build_tabulated_kernel(const KernelSpec& spec, const MollifierParams& m,
                                       const TableResolution& res = {});

/// Loads the table from `cache_dir` when present, otherwise builds and stores it.
TabulatedKernel load_or_build_tabulated_kernel(const KernelSpec& spec, const MollifierParams& m,
                                               const TableResolution& res,
                                               const std::optional<std::filesystem::path>& cache_dir);

/// Convenience wrapper matching the free-function form used elsewhere.
inline Point mollified_kernel_eval(const TabulatedKernel& tab, const Point& x) { return tab.eval(x); }

} // namespace mkv
