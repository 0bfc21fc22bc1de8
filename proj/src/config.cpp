#include "mkv/config.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace mkv {

namespace {

class Reader {
public:
    std::vector<std::string> errors;

    template <class T>
    void get(const Json& obj, const char* key, T& out, const std::string& where) {
        if (!obj.is_object() || !obj.contains(key)) return;
        try {
            out = obj.at(key).get<T>();
        } catch (const std::exception&) {
            errors.push_back(where + "." + key + ": wrong type");
        }
    }

    template <class T>
    void require(const Json& obj, const char* key, T& out, const std::string& where) {
        if (!obj.is_object() || !obj.contains(key)) {
            errors.push_back(where + "." + key + ": missing");
            return;
        }
        get(obj, key, out, where);
    }

    Rational rational(const Json& v, const std::string& where) {
        try {
            if (v.is_string()) return parse_rational(v.get<std::string>());
            if (v.is_number_integer()) return Rational(v.get<std::int64_t>());
            if (v.is_number()) {
                std::ostringstream os;
                os << std::setprecision(15) << v.get<double>();
                return parse_rational(os.str());
            }
        } catch (const ConfigError& e) {
            errors.push_back(where + ": " + e.what());
            return Rational(0);
        }
        errors.push_back(where + ": expected a number or a fraction string");
        return Rational(0);
    }

    ExtRational ext_rational(const Json& v, const std::string& where) {
        if (v.is_string()) {
            try {
                return parse_ext_rational(v.get<std::string>());
            } catch (const ConfigError& e) {
                errors.push_back(where + ": " + e.what());
                return ExtRational(1);
            }
        }
        return ExtRational(rational(v, where));
    }
};

Point read_point(Reader& rd, const Json& v, int d, const std::string& where) {
    Point p{};
    if (v.is_null()) return p;
    if (!v.is_array() || static_cast<int>(v.size()) != d) {
        rd.errors.push_back(where + ": expected an array of " + std::to_string(d) + " numbers");
        return p;
    }
    for (int a = 0; a < d; ++a) {
        if (!v[a].is_number()) {
            rd.errors.push_back(where + ": non-numeric entry");
            return p;
        }
        p[a] = v[a].get<double>();
    }
    return p;
}

KernelSpec read_kernel(Reader& rd, const Json& k, int d) {
    KernelSpec spec;
    spec.dim = d;
    if (!k.is_object()) {
        rd.errors.push_back("kernel: missing section");
        return spec;
    }
    std::string variant;
    rd.require(k, "variant", variant, "kernel");
    if (!variant.empty()) {
        try {
            spec.variant = parse_kernel_variant(variant);
        } catch (const ConfigError& e) {
            rd.errors.push_back(std::string("kernel.variant: ") + e.what());
        }
    }
    rd.get(k, "chi", spec.chi, "kernel");
    rd.get(k, "s", spec.s, "kernel");
    rd.get(k, "alpha_sing", spec.alpha_sing, "kernel");
    rd.get(k, "profile", spec.profile, "kernel");
    rd.get(k, "profile_dr", spec.profile_dr, "kernel");
    std::string sign = "attractive";
    rd.get(k, "sign", sign, "kernel");
    if (sign == "attractive")
        spec.sign = Interaction::Attractive;
    else if (sign == "repulsive")
        spec.sign = Interaction::Repulsive;
    else
        rd.errors.push_back("kernel.sign: expected attractive or repulsive");
    return spec;
}

InitialDensity read_initial(Reader& rd, const Json& u, int d, const std::filesystem::path& base) {
    auto fallback = InitialDensity::gaussian(d, {}, 1.0);
    if (u.is_null()) return fallback;
    std::string type = "gaussian";
    rd.get(u, "type", type, "initial");
    try {
        if (type == "gaussian") {
            double var = 1.0;
            rd.get(u, "variance", var, "initial");
            Point c = read_point(rd, u.value("center", Json()), d, "initial.center");
            return InitialDensity::gaussian(d, c, var);
        }
        if (type == "mixture") {
            std::vector<MixtureComponent> comps;
            const Json& list = u.value("components", Json::array());
            if (!list.is_array() || list.empty()) {
                rd.errors.push_back("initial.components: expected a non-empty array");
                return fallback;
            }
            for (std::size_t i = 0; i < list.size(); ++i) {
                MixtureComponent c;
                std::string where = "initial.components[" + std::to_string(i) + "]";
                rd.get(list[i], "weight", c.weight, where);
                rd.get(list[i], "variance", c.variance, where);
                c.center = read_point(rd, list[i].value("center", Json()), d, where + ".center");
                comps.push_back(c);
            }
            return InitialDensity::mixture(d, std::move(comps));
        }
        if (type == "grid") {
            std::string file;
            rd.require(u, "file", file, "initial");
            if (file.empty()) return fallback;
            std::filesystem::path p(file);
            if (p.is_relative()) p = base / p;
            GridField g = GridField::load(p);
            if (g.d != d) {
                rd.errors.push_back("initial.file: grid dimension does not match d");
                return fallback;
            }
            return InitialDensity::from_field(g);
        }
        rd.errors.push_back("initial.type: expected gaussian, mixture or grid");
    } catch (const std::exception& e) {
        rd.errors.push_back(std::string("initial: ") + e.what());
    }
    return fallback;
}

std::string join(const std::vector<std::string>& v) {
    std::string s;
    for (const auto& e : v) s += "\n  " + e;
    return s;
}

Json hashed_document(const Json& doc) {
    Json d = doc;
    d.erase("workers");
    d.erase("output_dir");
    return d;
}

} // namespace

ExperimentConfig parse_config(const Json& doc, const std::filesystem::path& base_dir) {
    if (!doc.is_object()) throw ConfigError("configuration document must be an object");
    Reader rd;
    ExperimentConfig cfg;
    cfg.document = doc;
    rd.get(doc, "name", cfg.name, "config");
    rd.require(doc, "d", cfg.d, "config");
    if (cfg.d < 1 || cfg.d > 3) {
        rd.errors.push_back("config.d: must be 1, 2 or 3");
        cfg.d = 1;
    }
    cfg.kernel = read_kernel(rd, doc.value("kernel", Json()), cfg.d);
    try {
        cfg.kernel.validate();
    } catch (const ConfigError& e) {
        rd.errors.push_back(std::string("kernel: ") + e.what());
    }
    auto assumptions = assumptions_for(cfg.kernel, Rational(1, 100));
    cfg.r = assumptions.r;
    cfg.zeta = assumptions.zeta;
    if (doc.contains("r")) cfg.r = rd.ext_rational(doc["r"], "config.r");
    if (doc.contains("zeta")) cfg.zeta = rd.rational(doc["zeta"], "config.zeta");
    cfg.initial = read_initial(rd, doc.value("initial", Json()), cfg.d, base_dir);
    rd.require(doc, "T", cfg.T, "config");

    const Json& sw = doc.value("sweep", Json::object());
    std::string mode = "coupled";
    rd.get(sw, "mode", mode, "sweep");
    if (mode == "coupled")
        cfg.sweep.mode = SweepMode::Coupled;
    else if (mode == "grid")
        cfg.sweep.mode = SweepMode::Grid;
    else
        rd.errors.push_back("sweep.mode: expected coupled or grid");
    rd.require(sw, "N", cfg.sweep.N, "sweep");
    rd.get(sw, "h", cfg.sweep.h, "sweep");
    rd.get(sw, "h_scale", cfg.sweep.h_scale, "sweep");
    rd.get(sw, "replicas", cfg.sweep.replicas, "sweep");
    rd.get(sw, "m", cfg.sweep.m, "sweep");
    if (sw.contains("alpha") && !(sw["alpha"].is_string() && sw["alpha"] == "optimal"))
        cfg.sweep.alpha = rd.rational(sw["alpha"], "sweep.alpha");
    if (sw.contains("A") && !(sw["A"].is_string() && sw["A"] == "auto")) {
        double A = 0.0;
        rd.get(sw, "A", A, "sweep");
        cfg.sweep.A = A;
    }
    rd.get(sw, "A_factor", cfg.sweep.A_factor, "sweep");
    std::string policy = "warn";
    rd.get(sw, "A_policy", policy, "sweep");
    if (policy != "warn" && policy != "error") rd.errors.push_back("sweep.A_policy: expected warn or error");
    cfg.sweep.A_strict = policy == "error";
    if (sw.contains("slack")) cfg.sweep.slack = rd.rational(sw["slack"], "sweep.slack");
    if (sw.contains("plateau_h")) {
        double ph = 0.0;
        rd.get(sw, "plateau_h", ph, "sweep");
        cfg.sweep.plateau_h = ph;
    }
    rd.get(sw, "common_noise", cfg.sweep.common_noise, "sweep");
    rd.get(sw, "snapshots", cfg.sweep.snapshots, "sweep");

    const Json& mg = doc.value("measure_grid", Json::object());
    rd.get(mg, "n", cfg.measure.n, "measure_grid");
    rd.get(mg, "L", cfg.measure.L, "measure_grid");

    const Json& pd = doc.value("pde", Json::object());
    cfg.pde.grid = cfg.measure;
    rd.get(pd, "n", cfg.pde.grid.n, "pde");
    rd.get(pd, "L", cfg.pde.grid.L, "pde");
    rd.get(pd, "dt", cfg.pde.dt, "pde");
    rd.get(pd, "self_convergence_tol", cfg.pde.self_convergence_tol, "pde");
    rd.get(pd, "mollifier_support", cfg.pde.mollifier_support, "pde");
    std::string pmode = to_string(cfg.pde.mode);
    rd.get(pd, "mode", pmode, "pde");
    try {
        cfg.pde.mode = parse_transform_mode(pmode);
    } catch (const ConfigError& e) {
        rd.errors.push_back(std::string("pde.mode: ") + e.what());
    }
    std::string split = "lie";
    rd.get(pd, "splitting", split, "pde");
    if (split == "lie")
        cfg.pde.splitting = Splitting::Lie;
    else if (split == "strang")
        cfg.pde.splitting = Splitting::Strang;
    else
        rd.errors.push_back("pde.splitting: expected lie or strang");

    if (doc.contains("thm2")) {
        const Json& t2 = doc["thm2"];
        cfg.thm2.enabled = true;
        rd.get(t2, "enabled", cfg.thm2.enabled, "thm2");
        cfg.thm2.t = cfg.T;
        rd.get(t2, "t", cfg.thm2.t, "thm2");
        rd.get(t2, "replicas", cfg.thm2.replicas, "thm2");
        rd.get(t2, "c", cfg.thm2.c, "thm2");
        rd.get(t2, "p", cfg.thm2.p, "thm2");
        rd.get(t2, "coarsen", cfg.thm2.coarsen, "thm2");
        rd.get(t2, "seeds", cfg.thm2.seeds, "thm2");
        rd.get(t2, "min_count", cfg.thm2.min_count, "thm2");
        rd.get(t2, "particle_index", cfg.thm2.particle_index, "thm2");
        rd.get(t2, "allow_small", cfg.thm2.allow_small, "thm2");
    }

    rd.get(doc, "seed", cfg.seed, "config");
    rd.get(doc, "output_dir", cfg.output_dir, "config");
    rd.get(doc, "workers", cfg.workers, "config");
    const Json& lim = doc.value("limits", Json::object());
    rd.get(lim, "max_wall_seconds", cfg.limits.max_wall_seconds, "limits");
    rd.get(lim, "max_memory_mb", cfg.limits.max_memory_mb, "limits");
    rd.get(lim, "op_budget", cfg.limits.op_budget, "limits");
    const Json& tb = doc.value("table", Json::object());
    rd.get(tb, "cells_per_radius", cfg.table.cells_per_radius, "table");
    rd.get(tb, "extent_factor", cfg.table.extent_factor, "table");

    if (doc.contains("bands")) {
        const Json& bl = doc["bands"];
        if (!bl.is_array()) rd.errors.push_back("bands: expected an array");
        for (std::size_t i = 0; bl.is_array() && i < bl.size(); ++i) {
            Band b;
            std::string where = "bands[" + std::to_string(i) + "]";
            rd.get(bl[i], "axis", b.axis, where);
            rd.get(bl[i], "m", b.m, where);
            rd.get(bl[i], "tol", b.tol, where);
            rd.get(bl[i], "quantity", b.quantity, where);
            if (bl[i].contains("target")) {
                double t = 0.0;
                rd.get(bl[i], "target", t, where);
                b.target = t;
            }
            if (b.axis != "N" && b.axis != "h") rd.errors.push_back(where + ".axis: expected N or h");
            if (b.quantity != "error" && b.quantity != "measure_l2")
                rd.errors.push_back(where + ".quantity: expected error or measure_l2");
            cfg.bands.push_back(b);
        }
    }

    if (!rd.errors.empty()) throw ConfigError("malformed configuration:" + join(rd.errors));
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot open config " + file.string());
    Json doc;
    try {
        doc = Json::parse(in, nullptr, true, true);
    } catch (const Json::parse_error& e) {
        throw ConfigError("config " + file.string() + " is not valid JSON: " + e.what());
    }
    return parse_config(doc, file.parent_path().empty() ? std::filesystem::path(".") : file.parent_path());
}

void apply_overrides(ExperimentConfig& cfg, std::optional<std::uint64_t> seed, std::optional<int> workers) {
    if (seed) {
        cfg.seed = *seed;
        cfg.document["seed"] = *seed;
    }
    if (workers) {
        cfg.workers = *workers;
        cfg.document["workers"] = *workers;
    }
}

std::vector<double> snapshot_times(const ExperimentConfig& cfg) {
    int S = std::max(1, cfg.sweep.snapshots);
    std::vector<double> t(static_cast<std::size_t>(S) + 1);
    for (int k = 0; k <= S; ++k) t[static_cast<std::size_t>(k)] = cfg.T * k / S;
    return t;
}

PdeConfig pde_config(const ExperimentConfig& cfg) {
    PdeConfig p;
    p.kernel = cfg.kernel;
    p.T = cfg.T;
    p.L = cfg.pde.grid.L;
    p.n = cfg.pde.grid.n;
    p.mode = cfg.pde.mode;
    p.splitting = cfg.pde.splitting;
    p.self_convergence_tol = cfg.pde.self_convergence_tol;
    p.mollifier_support = cfg.pde.mollifier_support;
    auto times = snapshot_times(cfg);
    if (cfg.thm2.enabled) times.push_back(cfg.thm2.t);
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end(),
                            [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)); }),
                times.end());
    p.snapshot_times = times;
    // smallest step <= the requested dt that lands on every snapshot time
    int S = std::max(1, cfg.sweep.snapshots);
    std::int64_t per = static_cast<std::int64_t>(std::ceil(cfg.T / (S * cfg.pde.dt) - 1e-9));
    per = std::max<std::int64_t>(per, 1);
    p.dt = cfg.T > 0.0 ? cfg.T / static_cast<double>(per * S) : cfg.pde.dt;
    return p;
}

namespace {

bool on_grid(double t, double step) {
    double k = t / step;
    return std::abs(k - std::round(k)) <= 1e-9 * std::max(1.0, k);
}

} // namespace

ValidationReport validate_config(const ExperimentConfig& cfg, bool override_budget) {
    ValidationReport rep;
    const int d = cfg.d;
    const int S = cfg.sweep.snapshots;
    auto err = [&](const std::string& s) { rep.errors.push_back(s); };
    auto warn = [&](const std::string& s) { rep.warnings.push_back(s); };

    if (!(cfg.T > 0.0) || !std::isfinite(cfg.T)) err("T must be positive and finite");
    if (S < 1) err("sweep.snapshots must be >= 1");
    if (cfg.sweep.replicas < 1) err("sweep.replicas must be >= 1");
    if (cfg.sweep.N.empty()) err("sweep.N must list at least one particle count");
    for (auto N : cfg.sweep.N)
        if (N < 1) err("sweep.N entries must be >= 1");
    for (double m : cfg.sweep.m)
        if (!(m >= 1.0)) err("sweep.m entries must be >= 1");
    if (cfg.sweep.m.empty()) err("sweep.m must list at least one moment order");
    if (cfg.workers < 1) err("workers must be >= 1");
    if (cfg.sweep.A && !(*cfg.sweep.A > 0.0)) err("sweep.A must be positive");
    if (!(cfg.sweep.A_factor > 2.0)) err("sweep.A_factor must exceed 2 (A >= 2 ||K*u||_{T,inf})");
    if (cfg.kernel.dim != d) err("kernel dimension differs from d");

    Rational alpha{0};
    bool exponents_ok = false;
    try {
        alpha = cfg.sweep.alpha ? *cfg.sweep.alpha : optimal_alpha(d, cfg.r, cfg.zeta);
        if (auto msg = check_alpha(d, cfg.r, alpha)) {
            err("(A_alpha) violated: " + *msg);
        } else {
            rep.exponents = exponents(d, cfg.r, cfg.zeta, alpha, cfg.sweep.slack);
            exponents_ok = true;
        }
    } catch (const ConfigError& e) {
        err(std::string("rate exponents: ") + e.what());
    }

    // (N, h) pairs
    std::vector<std::pair<std::int64_t, double>> pairs;
    std::vector<bool> plateau;
    if (cfg.sweep.mode == SweepMode::Coupled) {
        if (!cfg.sweep.h.empty()) warn("sweep.h is ignored in coupled mode");
        if (!(cfg.sweep.h_scale > 0.0)) err("sweep.h_scale must be positive");
        if (exponents_ok && cfg.T > 0.0 && S >= 1 && cfg.sweep.h_scale > 0.0) {
            if (rep.exponents.v3 <= Rational(0)) err("coupled mode needs v3 > 0");
            for (auto N : cfg.sweep.N) {
                if (N < 1 || rep.exponents.v3 <= Rational(0)) continue;
                double hc = cfg.sweep.h_scale * coupled_h(static_cast<double>(N), rep.exponents);
                auto per = static_cast<std::int64_t>(std::ceil(cfg.T / (hc * S) - 1e-9));
                per = std::max<std::int64_t>(per, 1);
                pairs.emplace_back(N, cfg.T / static_cast<double>(per * S));
                plateau.push_back(false);
            }
        }
    } else {
        if (cfg.sweep.h.empty()) err("sweep.h must list at least one step in grid mode");
        auto hs = cfg.sweep.h;
        if (cfg.sweep.plateau_h) hs.push_back(*cfg.sweep.plateau_h);
        for (std::size_t j = 0; j < hs.size(); ++j) {
            double h = hs[j];
            if (!(h > 0.0)) {
                err("sweep.h entries must be positive");
                continue;
            }
            if (cfg.T > 0.0 && !on_grid(cfg.T, h)) {
                err("h | T violated: h = " + std::to_string(h) + " does not divide T = " + std::to_string(cfg.T));
                continue;
            }
            for (auto N : cfg.sweep.N) {
                pairs.emplace_back(N, h);
                plateau.push_back(j + 1 == hs.size() && cfg.sweep.plateau_h.has_value());
            }
        }
    }

    std::vector<std::int64_t> step_counts;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        PlannedCell c;
        c.N = pairs[i].first;
        c.steps = std::max<std::int64_t>(1, std::llround(cfg.T / pairs[i].second));
        c.h = cfg.T / static_cast<double>(c.steps);
        c.plateau = plateau[i];
        c.alpha = alpha;
        if (S >= 1 && c.steps % S != 0)
            err("snapshot count " + std::to_string(S) + " does not divide T/h = " + std::to_string(c.steps) +
                " (h = " + std::to_string(c.h) + ")");
        if (c.N >= 1 && alpha > Rational(0)) {
            c.mollifier = MollifierParams::make(d, to_double(alpha), c.N);
            double eps = c.mollifier.scaled_radius();
            double dx = 2.0 * cfg.measure.L / cfg.measure.n;
            if (dx > eps / 4.0 * (1.0 + 1e-12))
                err("measure grid too coarse for N = " + std::to_string(c.N) + ": spacing " + std::to_string(dx) +
                    " exceeds eps/4 = " + std::to_string(eps / 4.0));
        }
        step_counts.push_back(c.steps);
        rep.cells.push_back(c);
    }

    // common Brownian paths across h (Grid mode)
    if (cfg.sweep.mode == SweepMode::Grid && cfg.sweep.common_noise && !step_counts.empty()) {
        std::int64_t l = 1;
        bool overflow = false;
        for (auto s : step_counts) {
            l = std::lcm(l, s);
            if (l > 100000000) overflow = true;
        }
        if (overflow) {
            err("common_noise: the step counts have no common refinement below 1e8 steps");
        } else {
            for (auto& c : rep.cells) c.noise_substeps = static_cast<int>(l / c.steps);
        }
    }

    // grids
    auto pow2 = [](int n) { return n > 0 && (n & (n - 1)) == 0; };
    if (!pow2(cfg.measure.n)) err("measure_grid.n must be a power of two");
    if (!(cfg.measure.L > 0.0)) err("measure_grid.L must be positive");
    if (cfg.pde.grid.L != cfg.measure.L) err("pde.L must equal measure_grid.L");
    if (cfg.pde.grid.n <= 0 || cfg.measure.n % cfg.pde.grid.n != 0)
        err("measure_grid.n must be a multiple of pde.n");
    for (const auto& e : pde_config(cfg).errors()) err("pde: " + e);
    if (!(cfg.pde.dt > 0.0)) err("pde.dt must be positive");

    // thm2 run
    if (cfg.thm2.enabled) {
        const auto& t2 = cfg.thm2;
        if (t2.replicas < 1000 && !t2.allow_small)
            err("thm2.replicas = " + std::to_string(t2.replicas) + " is below the 1000-replica budget (set allow_small)");
        if (t2.replicas < 1) err("thm2.replicas must be >= 1");
        if (!(t2.c > 2.0)) err("thm2.c must exceed 2");
        if (!(t2.p > 1.0) || (d > 1 && !(t2.p < static_cast<double>(d) / (d - 1))))
            err("thm2.p must satisfy 1 < p < d/(d-1)");
        if (!(t2.t > 0.0) || t2.t > cfg.T * (1.0 + 1e-12)) err("thm2.t must lie in (0, T]");
        if (t2.coarsen < 1 || cfg.pde.grid.n % t2.coarsen != 0) err("thm2.coarsen must divide pde.n");
        if (t2.seeds.empty()) err("thm2.seeds must list at least one seed");
        for (const auto& c : rep.cells) {
            if (t2.t > 0.0 && !on_grid(t2.t, c.h)) err("thm2.t is not a step time for h = " + std::to_string(c.h));
            if (t2.particle_index >= c.N) err("thm2.particle_index out of range for N = " + std::to_string(c.N));
        }
    }

    // budget and memory
    for (const auto& c : rep.cells) {
        double N = static_cast<double>(c.N);
        rep.op_count += N * N * static_cast<double>(c.steps) * cfg.sweep.replicas;
        if (cfg.thm2.enabled)
            rep.op_count += N * N * std::llround(cfg.thm2.t / c.h) * static_cast<double>(cfg.thm2.replicas) *
                            static_cast<double>(cfg.thm2.seeds.size());
    }
    if (rep.op_count > cfg.limits.op_budget) {
        std::ostringstream os;
        os << "operation estimate sum N^2 (T/h) M = " << rep.op_count << " exceeds the budget "
           << cfg.limits.op_budget;
        if (override_budget)
            warn(os.str() + " (overridden)");
        else
            err(os.str() + " (pass the budget override flag to run anyway)");
    }
    {
        double snaps = S + 1.0;
        double pde_bytes = 3.0 * snaps * std::pow(cfg.pde.grid.n, d) * 8.0;
        double meas_bytes = snaps * std::pow(cfg.measure.n, d) * 8.0;
        std::int64_t Nmax = 1;
        for (auto N : cfg.sweep.N) Nmax = std::max(Nmax, N);
        double state_bytes = snaps * static_cast<double>(Nmax) * d * 8.0 * 2.0;
        double nodes = 2.0 * cfg.table.extent_factor * cfg.table.cells_per_radius + 1.0;
        double table_bytes = std::pow(nodes, d) * d * 8.0;
        rep.memory_mb =
            (pde_bytes + cfg.workers * (meas_bytes + state_bytes) + cfg.sweep.N.size() * table_bytes) / 1e6;
        if (rep.memory_mb > cfg.limits.max_memory_mb) {
            std::ostringstream os;
            os << "memory estimate " << rep.memory_mb << " MB exceeds limits.max_memory_mb = "
               << cfg.limits.max_memory_mb;
            err(os.str());
        }
    }
    if (cfg.limits.max_wall_seconds < 0.0) err("limits.max_wall_seconds must be >= 0");
    return rep;
}

std::string config_hash(const ExperimentConfig& cfg) {
    std::string s = hashed_document(cfg.document).dump();
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) h = (h ^ c) * 1099511628211ULL;
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

} // namespace mkv
