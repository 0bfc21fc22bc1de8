#include "mkv/harness.hpp"

#include "mkv/parallel.hpp"
#include "mkv/rng.hpp"

#include <fftw3.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <thread>

namespace mkv {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Utilities

Json read_json_file(const fs::path& file) {
    std::ifstream in(file);
    if (!in) throw ConfigError("cannot open " + file.string());
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ConfigError(file.string() + " is not valid JSON: " + e.what());
    }
}

void write_json_file(const fs::path& file, const Json& j) {
    if (file.has_parent_path()) fs::create_directories(file.parent_path());
    fs::path tmp = file;
    tmp += ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw ConfigError("cannot write " + tmp.string());
        out << j.dump(2) << "\n";
    }
    fs::rename(tmp, file);
}

std::optional<fs::path> cache_dir_from_env() {
    const char* v = std::getenv("MKV_CACHE_DIR");
    if (!v || !*v) return std::nullopt;
    return fs::path(v);
}

Json environment_fingerprint() {
    Json e;
#ifdef __VERSION__
    e["compiler"] = __VERSION__;
#endif
    e["cxx_standard"] = static_cast<long>(__cplusplus);
    e["fftw"] = std::string(fftw_version);
    e["hardware_threads"] = std::thread::hardware_concurrency();
#ifdef NDEBUG
    e["assertions"] = false;
#else
    e["assertions"] = true;
#endif
    return e;
}

namespace {

std::string utc_now() {
    std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

Json rational_json(const Rational& q) { return {{"fraction", to_string(q)}, {"value", to_double(q)}}; }

Json exponents_json(const RateExponents& e) {
    return {{"d", e.d},
            {"r", e.r.str()},
            {"zeta", rational_json(e.zeta)},
            {"alpha", rational_json(e.alpha)},
            {"chi_r", rational_json(e.chi_r)},
            {"rho", rational_json(e.rho)},
            {"epsilon_slack", rational_json(e.epsilon_slack)},
            {"v1", rational_json(e.v1)},
            {"v2", rational_json(e.v2)},
            {"v2_proof", rational_json(e.v2_proof)},
            {"v3", rational_json(e.v3)}};
}

Json hashed_config(const ExperimentConfig& cfg) {
    Json d = cfg.document;
    d.erase("workers");
    d.erase("output_dir");
    return d;
}

void log_line(const RunOptions& opt, const std::string& s) {
    if (opt.log) opt.log(s);
}

struct CellKey {
    std::int64_t N;
    std::int64_t steps;
    int replica;
    bool operator<(const CellKey& o) const {
        return std::tie(N, steps, replica) < std::tie(o.N, o.steps, o.replica);
    }
};

CellKey key_of(const Json& line) {
    return {line.at("N").get<std::int64_t>(), line.at("steps").get<std::int64_t>(), line.at("replica").get<int>()};
}

std::vector<Json> read_lines(const fs::path& file) {
    std::vector<Json> out;
    std::ifstream in(file);
    std::string s;
    while (std::getline(in, s)) {
        if (s.empty()) continue;
        try {
            out.push_back(Json::parse(s));
        } catch (const Json::parse_error&) {
            // a torn final line from an interrupted writer is dropped
        }
    }
    return out;
}

double resolve_A(const ExperimentConfig& cfg, double drift_sup) {
    if (cfg.sweep.A) return *cfg.sweep.A;
    return drift_sup > 0.0 ? cfg.sweep.A_factor * drift_sup : 1.0;
}

std::vector<std::string> check_A(const ExperimentConfig& cfg, double A, double drift_sup) {
    std::vector<std::string> w;
    if (A < 2.0 * drift_sup) {
        std::ostringstream os;
        os << "cutoff A = " << A << " is below 2 ||K*u||_{T,inf} = " << 2.0 * drift_sup
           << "; the cutoff may act on the drift";
        if (cfg.sweep.A_strict) throw ConfigError(os.str());
        w.push_back(os.str());
    }
    return w;
}

SimConfig sim_config(const ExperimentConfig& cfg, const PlannedCell& c, double A, double drift_sup) {
    SimConfig sc;
    sc.N = c.N;
    sc.h = c.h;
    sc.T = cfg.T;
    sc.d = cfg.d;
    sc.A = A;
    sc.mollifier = c.mollifier;
    sc.kernel = cfg.kernel;
    sc.initial = cfg.initial;
    sc.snapshot_times = snapshot_times(cfg);
    sc.noise_substeps = c.noise_substeps;
    sc.drift_sup_estimate = drift_sup;
    return sc;
}

class TableStore {
public:
    TableStore(const ExperimentConfig& cfg, std::optional<fs::path> cache) : cfg_(cfg), cache_(std::move(cache)) {}
    const TabulatedKernel& get(const PlannedCell& c) {
        auto key = std::make_pair(c.N, to_string(c.alpha));
        auto it = tables_.find(key);
        if (it == tables_.end())
            it = tables_.emplace(key, load_or_build_tabulated_kernel(cfg_.kernel, c.mollifier, cfg_.table, cache_))
                     .first;
        return it->second;
    }

private:
    const ExperimentConfig& cfg_;
    std::optional<fs::path> cache_;
    std::map<std::pair<std::int64_t, std::string>, TabulatedKernel> tables_;
};

Json run_cell(const ExperimentConfig& cfg, const PlannedCell& c, int replica, const TabulatedKernel& tab,
              const Reference& ref, double A, const std::string& hash) {
    auto start = std::chrono::steady_clock::now();
    Json line{{"schema_version", kSchemaVersion}, {"config_hash", hash}, {"N", c.N},       {"steps", c.steps},
              {"h", c.h},                        {"replica", replica},  {"plateau", c.plateau}};
    try {
        SimConfig sc = sim_config(cfg, c, A, ref.pde.drift_sup);
        sc.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(replica));
        SimStats stats;
        auto snaps = simulate(sc, tab, &stats);
        if (snaps.size() != ref.on_measure.size()) throw std::runtime_error("snapshot count mismatch");
        const double r = cfg.r.to_double();
        ErrorRecord rec;
        rec.N = c.N;
        rec.h = c.h;
        rec.replica = replica;
        double leakage = 0.0, l2 = 0.0;
        for (std::size_t k = 0; k < snaps.size(); ++k) {
            MeasureResult mu = mollified_empirical_measure(snaps[k], c.mollifier, ref.on_measure[k]);
            mu.field.time = ref.on_measure[k].time;
            auto parts = l1_lr_parts(difference(mu.field, ref.on_measure[k]), r);
            rec.snapshot_times.push_back(ref.on_measure[k].time);
            rec.snapshot_errors.push_back(parts.value());
            rec.snapshot_l1.push_back(parts.l1);
            rec.snapshot_lr.push_back(parts.lr);
            rec.sup_t_error = std::max(rec.sup_t_error, parts.value());
            leakage = std::max(leakage, mu.leakage);
            l2 = std::max(l2, lp_norm(mu.field, 2.0));
        }
        rec.clamp_fraction = stats.clamp_fraction();
        rec.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (!rec.valid()) throw std::runtime_error("non-finite or negative error entries");
        line["status"] = "ok";
        line["sup_t_error"] = rec.sup_t_error;
        line["initial_error"] = rec.snapshot_errors.front();
        line["snapshot_times"] = rec.snapshot_times;
        line["snapshot_errors"] = rec.snapshot_errors;
        line["snapshot_l1"] = rec.snapshot_l1;
        line["snapshot_lr"] = rec.snapshot_lr;
        line["clamp_fraction"] = rec.clamp_fraction;
        line["max_abs_raw_drift"] = stats.max_abs_raw_drift;
        line["max_leakage"] = leakage;
        line["sup_measure_l2"] = l2;
        line["ops"] = static_cast<double>(c.N) * static_cast<double>(c.N) * static_cast<double>(c.steps);
        line["runtime_seconds"] = rec.runtime_seconds;
    } catch (const std::exception& e) {
        line["status"] = "quarantined";
        line["error"] = e.what();
        line["runtime_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    return line;
}

Json reference_summary(const ExperimentConfig& cfg, const Reference& ref) {
    return {{"n", cfg.pde.grid.n},
            {"L", cfg.pde.grid.L},
            {"mode", to_string(cfg.pde.mode)},
            {"dt", ref.pde.dt},
            {"steps", ref.pde.steps},
            {"self_convergence_l1", ref.pde.self_convergence_l1},
            {"drift_sup", ref.pde.drift_sup},
            {"min_value", ref.pde.min_value},
            {"max_mass_error", ref.pde.max_mass_error},
            {"boundary_max", ref.pde.boundary_max},
            {"cfl", ref.pde.cfl},
            {"warnings", ref.pde.warnings}};
}

Json plan_json(const ValidationReport& plan) {
    Json cells = Json::array();
    for (const auto& c : plan.cells)
        cells.push_back({{"N", c.N},
                         {"h", c.h},
                         {"steps", c.steps},
                         {"plateau", c.plateau},
                         {"alpha", to_string(c.alpha)},
                         {"epsilon", c.mollifier.scaled_radius()},
                         {"noise_substeps", c.noise_substeps}});
    return {{"cells", cells}, {"op_count", plan.op_count}, {"memory_mb", plan.memory_mb}};
}

Json fit_json(const std::string& axis, const std::string& quantity, double m, const Json& series,
              const std::vector<std::pair<double, double>>& pts, double predicted, const Json& extra = Json()) {
    Json f{{"axis", axis}, {"quantity", quantity}, {"m", m}, {"series", series}, {"predicted", predicted}};
    Json p = Json::array();
    for (auto& [x, y] : pts) p.push_back({x, y});
    f["points"] = p;
    if (!extra.is_null()) f.update(extra);
    try {
        FitResult r = fit_loglog(pts);
        f["slope"] = r.slope;
        f["intercept"] = r.intercept;
        f["stderr"] = r.stderr_slope;
        f["r_squared"] = r.r_squared;
    } catch (const ConfigError& e) {
        f["slope"] = nullptr;
        f["reason"] = e.what();
    }
    return f;
}

} // namespace

Json rate_table_json(const RateTable& t) {
    Json j{{"kernel_class", t.kernel_class},
           {"r", t.assumptions.r.str()},
           {"zeta", rational_json(t.assumptions.zeta)},
           {"exponents", exponents_json(t.exponents)},
           {"optimal_alpha", rational_json(t.optimal_alpha)},
           {"coupled_h_exponent", rational_json(t.coupled_h_exponent)},
           {"cost_exponent", rational_json(t.cost_exponent)}};
    if (t.stated_cost_note) j["stated_cost_note"] = *t.stated_cost_note;
    return j;
}

// ---------------------------------------------------------------------------
// Reference

GridField spectral_resample(const GridField& u, int n_new) {
    if (n_new == u.n) return u;
    if (n_new < u.n || n_new % u.n != 0) throw ConfigError("resample target must be a multiple of the grid size");
    SpectralBox src(u.d, u.n, u.L), dst(u.d, n_new, u.L);
    std::vector<std::complex<double>> a(src.spec_size()), b(dst.spec_size());
    src.forward(u.values.data(), a.data());
    const double norm = 1.0 / static_cast<double>(src.real_size());
    const int n = u.n, hs = n / 2 + 1, hd = n_new / 2 + 1;
    if (u.d == 1) {
        for (int k = 0; k < n / 2; ++k) b[static_cast<std::size_t>(k)] = a[static_cast<std::size_t>(k)] * norm;
    } else {
        for (int i0 = 0; i0 < n; ++i0) {
            if (i0 == n / 2) continue;
            int j0 = i0 < n / 2 ? i0 : i0 - n;
            int t0 = j0 >= 0 ? j0 : j0 + n_new;
            for (int i1 = 0; i1 < n / 2; ++i1)
                b[static_cast<std::size_t>(t0) * hd + i1] = a[static_cast<std::size_t>(i0) * hs + i1] * norm;
        }
    }
    GridField out = GridField::zeros(u.d, n_new, u.L, u.time);
    dst.inverse(b.data(), out.values.data());
    return out;
}

Reference solve_reference(const ExperimentConfig& cfg) {
    Reference ref;
    const int n = cfg.pde.grid.n;
    const double L = cfg.pde.grid.L;
    if (cfg.initial.variant() == InitialVariant::GridFieldSampler) {
        const GridField& f = cfg.initial.field();
        if (f.n != n || f.L != L) throw ConfigError("a grid initial density must live on the PDE grid");
        ref.u0_pde = f;
    } else {
        ref.u0_pde = sample_on_grid(cfg.d, n, L, [&](const Point& x) { return cfg.initial.density(x); });
    }
    double mass = ref.u0_pde.integral();
    if (!(mass > 0.0)) throw ConfigError("initial density has no mass on the PDE box");
    for (double& v : ref.u0_pde.values) v /= mass;
    PdeConfig pc = pde_config(cfg);
    ref.pde = solve_mild(ref.u0_pde, pc);
    for (double t : snapshot_times(cfg)) {
        const GridField* match = nullptr;
        for (const auto& s : ref.pde.snapshots)
            if (std::abs(s.time - t) <= 1e-9 * std::max(1.0, t)) match = &s;
        if (!match) throw ConfigError("reference has no snapshot at t = " + std::to_string(t));
        GridField g = spectral_resample(*match, cfg.measure.n);
        g.time = t;
        ref.on_measure.push_back(std::move(g));
    }
    return ref;
}

// ---------------------------------------------------------------------------
// Sweep record

Json build_sweep_record(const ExperimentConfig& cfg, const ValidationReport& plan, const Json& reference_summary,
                        const std::vector<Json>& lines) {
    Json rec;
    rec["kind"] = "sweep";
    rec["schema_version"] = kSchemaVersion;
    rec["name"] = cfg.name;
    rec["config_hash"] = config_hash(cfg);
    rec["config"] = hashed_config(cfg);
    rec["environment"] = environment_fingerprint();
    rec["reference"] = reference_summary;
    rec["plan"] = plan_json(plan);

    const RateExponents& ex = plan.exponents;
    const double predN = -to_double(ex.v1);
    const double predH = to_double(ex.v3);
    Json pred{{"exponents", exponents_json(ex)},
              {"coupled_h_exponent", rational_json(coupled_h_exponent(ex))},
              {"cost_exponent", rational_json(cost_exponent(ex))},
              {"N_slope", predN},
              {"h_slope", predH}};
    try {
        RateTable t = rate_table(cfg.kernel, cfg.sweep.slack, cfg.sweep.alpha);
        pred["rate_table"] = rate_table_json(t);
        pred["rate_table_text"] = format_rate_table(t);
    } catch (const ConfigError& e) {
        pred["rate_table_error"] = e.what();
    }
    rec["predicted"] = pred;

    std::map<CellKey, Json> by_key;
    for (const auto& l : lines) by_key[key_of(l)] = l;
    Json cells = Json::array(), quarantined = Json::array();
    for (auto& [k, l] : by_key) {
        cells.push_back(l);
        if (l.value("status", "") != "ok") quarantined.push_back({{"N", k.N}, {"steps", k.steps}, {"replica", k.replica},
                                                                  {"error", l.value("error", "")}});
    }
    rec["cells"] = cells;
    rec["quarantined"] = quarantined;
    const std::size_t expected = plan.cells.size() * static_cast<std::size_t>(cfg.sweep.replicas);
    rec["cells_expected"] = expected;
    rec["cells_done"] = by_key.size();
    rec["complete"] = by_key.size() == expected;

    // aggregates per (N, h)
    Json aggs = Json::array();
    std::map<std::pair<std::int64_t, std::int64_t>, Json> agg_of;
    std::uint64_t boot_master = derive_seed(cfg.seed, 0xB0075742ULL);
    for (std::size_t ci = 0; ci < plan.cells.size(); ++ci) {
        const auto& c = plan.cells[ci];
        std::vector<double> err, init, l2, clamp, half;
        double leak = 0.0;
        int q = 0;
        for (const auto& [k, l] : by_key) {
            if (k.N != c.N || k.steps != c.steps) continue;
            if (l.value("status", "") != "ok") {
                ++q;
                continue;
            }
            err.push_back(l.at("sup_t_error").get<double>());
            init.push_back(l.at("initial_error").get<double>());
            l2.push_back(l.at("sup_measure_l2").get<double>());
            clamp.push_back(l.at("clamp_fraction").get<double>());
            leak = std::max(leak, l.at("max_leakage").get<double>());
            auto se = l.at("snapshot_errors").get<std::vector<double>>();
            double even = 0.0;
            for (std::size_t s = 0; s < se.size(); s += 2) even = std::max(even, se[s]);
            double all = l.at("sup_t_error").get<double>();
            half.push_back(all > 0.0 ? (all - even) / all : 0.0);
        }
        Json a{{"N", c.N}, {"h", c.h}, {"steps", c.steps}, {"plateau", c.plateau}, {"replicas_ok", err.size()},
               {"replicas_quarantined", q}};
        if (!err.empty()) {
            Json moments = Json::array();
            for (std::size_t mi = 0; mi < cfg.sweep.m.size(); ++mi) {
                double m = cfg.sweep.m[mi];
                auto bi = bootstrap_moment(err, m, derive_seed(boot_master, ci * 64 + mi));
                moments.push_back({{"m", m}, {"moment", bi.estimate}, {"ci_lo", bi.lo}, {"ci_hi", bi.hi},
                                   {"resamples", bi.resamples}});
            }
            a["moments"] = moments;
            a["initial_error_mean"] = moment_over_replicas(init, 1.0);
            a["measure_l2_mean"] = moment_over_replicas(l2, 1.0);
            a["clamp_fraction_mean"] = moment_over_replicas(clamp, 1.0);
            a["max_leakage"] = leak;
            a["snapshot_halving_change"] = moment_over_replicas(half, 1.0);
        }
        agg_of[{c.N, c.steps}] = a;
        aggs.push_back(a);
    }
    rec["aggregates"] = aggs;

    auto moment_of = [](const Json& a, double m) -> std::optional<double> {
        if (!a.contains("moments")) return std::nullopt;
        for (const auto& mm : a["moments"])
            if (mm["m"].get<double>() == m) return mm["moment"].get<double>();
        return std::nullopt;
    };

    // fits
    Json fits = Json::array();
    std::set<double> hs;
    std::set<std::int64_t> Ns;
    for (const auto& c : plan.cells)
        if (!c.plateau) {
            hs.insert(c.h);
            Ns.insert(c.N);
        }
    if (cfg.sweep.mode == SweepMode::Coupled) {
        for (double m : cfg.sweep.m) {
            std::vector<std::pair<double, double>> pts;
            for (const auto& c : plan.cells)
                if (auto v = moment_of(agg_of[{c.N, c.steps}], m)) pts.emplace_back(static_cast<double>(c.N), *v);
            fits.push_back(fit_json("N", "error", m, nullptr, pts, predN));
        }
        std::vector<std::pair<double, double>> pts;
        for (const auto& c : plan.cells)
            if (agg_of[{c.N, c.steps}].contains("measure_l2_mean"))
                pts.emplace_back(static_cast<double>(c.N), agg_of[{c.N, c.steps}]["measure_l2_mean"].get<double>());
        fits.push_back(fit_json("N", "measure_l2", 1.0, nullptr, pts, 0.0));
    } else {
        if (Ns.size() >= 2) {
            for (double h : hs) {
                for (double m : cfg.sweep.m) {
                    std::vector<std::pair<double, double>> pts;
                    for (const auto& c : plan.cells)
                        if (!c.plateau && c.h == h)
                            if (auto v = moment_of(agg_of[{c.N, c.steps}], m))
                                pts.emplace_back(static_cast<double>(c.N), *v);
                    fits.push_back(fit_json("N", "error", m, {{"h", h}}, pts, predN));
                }
                std::vector<std::pair<double, double>> pts;
                for (const auto& c : plan.cells)
                    if (!c.plateau && c.h == h && agg_of[{c.N, c.steps}].contains("measure_l2_mean"))
                        pts.emplace_back(static_cast<double>(c.N),
                                         agg_of[{c.N, c.steps}]["measure_l2_mean"].get<double>());
                fits.push_back(fit_json("N", "measure_l2", 1.0, {{"h", h}}, pts, 0.0));
            }
        }
        if (hs.size() >= 2) {
            for (auto N : Ns) {
                for (double m : cfg.sweep.m) {
                    std::optional<double> plateau;
                    for (const auto& c : plan.cells)
                        if (c.plateau && c.N == N) plateau = moment_of(agg_of[{c.N, c.steps}], m);
                    std::vector<std::pair<double, double>> pts;
                    Json dropped = Json::array();
                    for (const auto& c : plan.cells) {
                        if (c.plateau || c.N != N) continue;
                        auto v = moment_of(agg_of[{c.N, c.steps}], m);
                        if (!v) continue;
                        double y = plateau ? *v - *plateau : *v;
                        if (y > 0.0)
                            pts.emplace_back(c.h, y);
                        else
                            dropped.push_back(c.h);
                    }
                    Json extra{{"plateau_subtracted", plateau.has_value()}, {"dropped_h", dropped}};
                    if (plateau) extra["plateau"] = *plateau;
                    fits.push_back(fit_json("h", "error", m, {{"N", N}}, pts, predH, extra));
                }
            }
        }
    }
    rec["fits"] = fits;

    // verdicts
    Json verdicts = Json::array();
    for (const auto& b : cfg.bands) {
        bool any = false;
        for (const auto& f : fits) {
            if (f["axis"] != b.axis || f["quantity"] != b.quantity || f["m"].get<double>() != b.m) continue;
            any = true;
            double target = b.target ? *b.target : f["predicted"].get<double>();
            Json v{{"axis", b.axis}, {"quantity", b.quantity}, {"m", b.m}, {"series", f["series"]},
                   {"target", target}, {"tol", b.tol}, {"band", {target - b.tol, target + b.tol}}};
            if (f["slope"].is_null()) {
                v["slope"] = nullptr;
                v["pass"] = false;
                v["reason"] = f.value("reason", "fit unavailable");
            } else {
                double s = f["slope"].get<double>();
                v["slope"] = s;
                v["pass"] = std::abs(s - target) <= b.tol;
            }
            verdicts.push_back(v);
        }
        if (!any) {
            double target = b.target ? *b.target : (b.axis == "N" ? predN : predH);
            verdicts.push_back({{"axis", b.axis}, {"quantity", b.quantity}, {"m", b.m}, {"series", nullptr},
                                {"target", target}, {"tol", b.tol}, {"band", {target - b.tol, target + b.tol}},
                                {"slope", nullptr}, {"pass", false}, {"reason", "no matching fit"}});
        }
    }
    rec["verdicts"] = verdicts;
    return rec;
}

Json strip_volatile(const Json& record) {
    if (record.is_object()) {
        Json out = Json::object();
        for (auto it = record.begin(); it != record.end(); ++it) {
            if (it.key() == "volatile" || it.key() == "runtime_seconds") continue;
            out[it.key()] = strip_volatile(it.value());
        }
        return out;
    }
    if (record.is_array()) {
        Json out = Json::array();
        for (const auto& v : record) out.push_back(strip_volatile(v));
        return out;
    }
    return record;
}

// ---------------------------------------------------------------------------
// Sweep

SweepOutcome run_sweep(const ExperimentConfig& cfg, const RunOptions& opt) {
    const auto wall_start = std::chrono::steady_clock::now();
    const std::string started = utc_now();
    ValidationReport plan = validate_config(cfg, opt.override_budget);
    if (!plan.ok()) {
        std::string msg = "configuration failed validation:";
        for (const auto& e : plan.errors) msg += "\n  " + e;
        throw ConfigError(msg);
    }
    const std::string hash = config_hash(cfg);
    log_line(opt, "solving the PDE reference");
    Reference ref = solve_reference(cfg);
    const double A = resolve_A(cfg, ref.pde.drift_sup);
    std::vector<std::string> warnings = plan.warnings;
    for (auto& w : check_A(cfg, A, ref.pde.drift_sup)) warnings.push_back(w);
    for (auto& w : ref.pde.warnings) warnings.push_back("pde: " + w);

    fs::path out_dir(cfg.output_dir);
    fs::create_directories(out_dir);
    fs::path results = out_dir / "results.jsonl";
    std::vector<Json> lines;
    std::set<CellKey> done;
    if (opt.resume && fs::exists(results)) {
        for (auto& l : read_lines(results)) {
            if (l.value("config_hash", "") != hash)
                throw ConfigError("results file " + results.string() + " belongs to a different configuration");
            if (done.insert(key_of(l)).second) lines.push_back(l);
        }
        // rewrite without torn or duplicate lines
        std::ofstream rewrite(results, std::ios::trunc);
        for (const auto& l : lines) rewrite << l.dump() << "\n";
    } else {
        std::ofstream truncate(results, std::ios::trunc);
    }

    struct Work {
        std::size_t cell;
        int replica;
    };
    std::vector<Work> todo;
    for (std::size_t ci = 0; ci < plan.cells.size(); ++ci)
        for (int r = 0; r < cfg.sweep.replicas; ++r)
            if (!done.count({plan.cells[ci].N, plan.cells[ci].steps, r})) todo.push_back({ci, r});
    log_line(opt, std::to_string(done.size()) + " cells already done, " + std::to_string(todo.size()) + " to run");

    TableStore tables(cfg, opt.cache_dir ? opt.cache_dir : cache_dir_from_env());
    std::ofstream out(results, std::ios::app);
    std::size_t processed = 0;
    bool interrupted = false;
    const std::size_t batch = static_cast<std::size_t>(std::max(1, cfg.workers));
    for (std::size_t start = 0; start < todo.size(); start += batch) {
        std::size_t end = std::min(todo.size(), start + batch);
        if (opt.max_cells) end = std::min<std::size_t>(end, start + static_cast<std::size_t>(std::max<std::int64_t>(
                                                                      0, *opt.max_cells - static_cast<std::int64_t>(processed))));
        if (end <= start) {
            interrupted = true;
            break;
        }
        if (cfg.limits.max_wall_seconds > 0.0 &&
            std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count() >
                cfg.limits.max_wall_seconds) {
            warnings.push_back("stopped at the wall-time limit");
            interrupted = true;
            break;
        }
        std::vector<const TabulatedKernel*> tabs;
        for (std::size_t i = start; i < end; ++i) tabs.push_back(&tables.get(plan.cells[todo[i].cell]));
        auto batch_lines = parallel_map(end - start, cfg.workers, [&](std::size_t j) {
            const Work& w = todo[start + j];
            return run_cell(cfg, plan.cells[w.cell], w.replica, *tabs[j], ref, A, hash);
        });
        for (auto& l : batch_lines) {
            out << l.dump() << "\n";
            out.flush();
            log_line(opt, "N=" + std::to_string(l["N"].get<std::int64_t>()) + " steps=" +
                              std::to_string(l["steps"].get<std::int64_t>()) + " replica=" +
                              std::to_string(l["replica"].get<int>()) + " " + l["status"].get<std::string>());
            lines.push_back(std::move(l));
        }
        processed += end - start;
    }
    out.close();
    if (processed < todo.size()) interrupted = true;

    // the record is always rebuilt from the file so fresh and resumed runs agree
    Json rec = build_sweep_record(cfg, plan, reference_summary(cfg, ref), read_lines(results));
    rec["A"] = A;
    rec["warnings"] = warnings;
    rec["interrupted"] = interrupted;
    rec["volatile"] = {{"started", started},
                       {"finished", utc_now()},
                       {"wall_seconds",
                        std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count()}};
    write_json_file(out_dir / "record.json", rec);

    SweepOutcome o;
    o.record = rec;
    bool partial = !rec["complete"].get<bool>() || !rec["quarantined"].empty();
    o.exit_code = partial ? kExitPartial : kExitOk;
    return o;
}

// ---------------------------------------------------------------------------
// Weighted density error (thm2)

SweepOutcome run_thm2(const ExperimentConfig& cfg, const RunOptions& opt) {
    const auto wall_start = std::chrono::steady_clock::now();
    const std::string started = utc_now();
    if (!cfg.thm2.enabled) throw ConfigError("the configuration has no enabled thm2 section");
    ValidationReport plan = validate_config(cfg, opt.override_budget);
    if (!plan.ok()) {
        std::string msg = "configuration failed validation:";
        for (const auto& e : plan.errors) msg += "\n  " + e;
        throw ConfigError(msg);
    }
    const auto& t2 = cfg.thm2;
    log_line(opt, "solving the PDE reference");
    Reference ref = solve_reference(cfg);
    const double A = resolve_A(cfg, ref.pde.drift_sup);
    std::vector<std::string> warnings = plan.warnings;
    for (auto& w : check_A(cfg, A, ref.pde.drift_sup)) warnings.push_back(w);

    const GridField* ut = nullptr;
    for (const auto& s : ref.pde.snapshots)
        if (std::abs(s.time - t2.t) <= 1e-9 * std::max(1.0, t2.t)) ut = &s;
    if (!ut) throw ConfigError("reference has no snapshot at thm2.t");
    GridField u_avg = cell_average(*ut, t2.coarsen);
    GridField geometry = GridField::zeros(cfg.d, cfg.pde.grid.n / t2.coarsen, cfg.pde.grid.L, t2.t);

    fs::path out_dir(cfg.output_dir);
    fs::create_directories(out_dir);
    std::ofstream out(out_dir / "thm2.jsonl", std::ios::trunc);
    TableStore tables(cfg, opt.cache_dir ? opt.cache_dir : cache_dir_from_env());

    Json cells = Json::array();
    Json summary = Json::array();
    std::vector<double> med_err, med_R, med_floor;
    for (const auto& c : plan.cells) {
        if (c.plateau) continue;
        const TabulatedKernel& tab = tables.get(c);
        SimConfig sc = sim_config(cfg, c, A, ref.pde.drift_sup);
        sc.T = t2.t;
        sc.snapshot_times = {t2.t};
        std::vector<double> errs, Rs, floors;
        for (auto s : t2.seeds) {
            auto t0 = std::chrono::steady_clock::now();
            SimStats stats;
            DensityEstimate est = replica_density_estimate(sc, tab, t2.particle_index, t2.replicas,
                                                           derive_seed(cfg.seed, s), t2.t, geometry, cfg.workers,
                                                           &stats);
            Theorem2Result th = theorem2_error(est.density, u_avg, cfg.initial, t2.t, t2.c, t2.p, &est.counts,
                                               t2.min_count);
            DominationReport dom = gaussian_domination_check(est, cfg.initial, t2.t, t2.c, t2.min_count);
            // same weighted norm applied to the per-cell binomial standard error
            GridField zero = GridField::zeros(est.stderr_.d, est.stderr_.n, est.stderr_.L, t2.t);
            Theorem2Result floor = theorem2_error(est.stderr_, zero, cfg.initial, t2.t, t2.c, t2.p, &est.counts,
                                                  t2.min_count);
            int sparse = 0;
            for (auto n : est.counts)
                if (n < t2.min_count) ++sparse;
            Json line{{"N", c.N},
                      {"h", c.h},
                      {"steps", c.steps},
                      {"seed", s},
                      {"samples", est.samples},
                      {"outside", est.outside},
                      {"error", th.error},
                      {"noise_floor", floor.error},
                      {"cells_used", th.cells_used},
                      {"cells_total", est.counts.size()},
                      {"insufficient_cells", sparse},
                      {"min_count", t2.min_count},
                      {"R", dom.R},
                      {"R_cells_used", dom.cells_used},
                      {"clamp_fraction", stats.clamp_fraction()},
                      {"runtime_seconds",
                       std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}};
            out << line.dump() << "\n";
            out.flush();
            log_line(opt, "thm2 N=" + std::to_string(c.N) + " seed=" + std::to_string(s) + " error=" +
                              std::to_string(th.error) + " R=" + std::to_string(dom.R) + " (" +
                              std::to_string(sparse) + " cells below min_count)");
            cells.push_back(line);
            errs.push_back(th.error);
            Rs.push_back(dom.R);
            floors.push_back(floor.error);
        }
        med_err.push_back(median(errs));
        med_R.push_back(median(Rs));
        med_floor.push_back(median(floors));
        summary.push_back({{"N", c.N},
                           {"h", c.h},
                           {"median_error", med_err.back()},
                           {"median_noise_floor", med_floor.back()},
                           {"median_R", med_R.back()}});
    }

    Json verdicts = Json::array();
    bool decreasing = med_err.size() >= 2;
    for (std::size_t i = 1; i < med_err.size(); ++i) decreasing = decreasing && med_err[i] < med_err[i - 1];
    verdicts.push_back({{"name", "weighted_error_strictly_decreasing"},
                        {"band", "median error strictly decreasing along the sweep"},
                        {"pass", decreasing}});
    double Rmean = 0.0;
    for (double r : med_R) Rmean += r;
    Rmean = med_R.empty() ? 0.0 : Rmean / static_cast<double>(med_R.size());
    double worst = 0.0;
    for (double r : med_R) worst = std::max(worst, std::abs(r / Rmean - 1.0));
    verdicts.push_back({{"name", "domination_ratio_stable"},
                        {"band", {-0.25, 0.25}},
                        {"value", worst},
                        {"R_mean", Rmean},
                        {"pass", !med_R.empty() && Rmean > 0.0 && worst <= 0.25}});

    Json rec{{"kind", "thm2"},
             {"schema_version", kSchemaVersion},
             {"name", cfg.name},
             {"config_hash", config_hash(cfg)},
             {"config", hashed_config(cfg)},
             {"environment", environment_fingerprint()},
             {"reference", reference_summary(cfg, ref)},
             {"A", A},
             {"t", t2.t},
             {"c", t2.c},
             {"p", t2.p},
             {"replicas", t2.replicas},
             {"particle_index", t2.particle_index},
             {"cells", cells},
             {"summary", summary},
             {"verdicts", verdicts},
             {"warnings", warnings},
             {"complete", true},
             {"volatile",
              {{"started", started},
               {"finished", utc_now()},
               {"wall_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count()}}}};
    write_json_file(out_dir / "thm2_record.json", rec);
    return {rec, kExitOk};
}

// ---------------------------------------------------------------------------
// Report

namespace {

std::string fmt(double v, int prec = 4) {
    std::ostringstream os;
    os << std::setprecision(prec) << v;
    return os.str();
}

std::string fmt_json(const Json& v) {
    if (v.is_null()) return "-";
    if (v.is_number()) return fmt(v.get<double>());
    if (v.is_string()) return v.get<std::string>();
    return v.dump();
}

std::string series_label(const Json& s) {
    if (s.is_null()) return "";
    std::string out;
    for (auto it = s.begin(); it != s.end(); ++it) out += it.key() + "=" + fmt_json(it.value());
    return out;
}

void write_plot(const fs::path& dir, const Json& f, std::ostringstream& text) {
    std::string name = "fit_" + f["axis"].get<std::string>() + "_" + f["quantity"].get<std::string>() + "_m" +
                       fmt(f["m"].get<double>());
    std::string series = series_label(f["series"]);
    std::replace(series.begin(), series.end(), '=', '_');
    if (!series.empty()) name += "_" + series;
    fs::create_directories(dir);
    std::ofstream out(dir / (name + ".dat"));
    out << "# log_x log_y fit_line\n";
    for (const auto& p : f["points"]) {
        double lx = std::log(p[0].get<double>()), ly = std::log(p[1].get<double>());
        double fit = f["slope"].is_null() ? std::nan("")
                                          : f["intercept"].get<double>() + f["slope"].get<double>() * lx;
        out << std::setprecision(10) << lx << " " << ly << " " << fit << "\n";
    }
    text << "  plot data: " << (dir / (name + ".dat")).string() << "\n";
}

ReportOutput report_thm2(const Json& rec, bool check) {
    std::ostringstream t;
    ReportOutput o;
    t << "Weighted density run '" << rec.value("name", "") << "' (config " << rec.value("config_hash", "") << ")\n";
    t << "t = " << fmt_json(rec["t"]) << ", c = " << fmt_json(rec["c"]) << ", p = " << fmt_json(rec["p"])
      << ", replicas = " << fmt_json(rec["replicas"]) << "\n";
    if (rec["cells"].empty()) {
        t << "no cells\n";
        o.text = t.str();
        o.exit_code = kExitPartial;
        return o;
    }
    t << std::left << std::setw(8) << "N" << std::setw(12) << "h" << std::setw(10) << "seed" << std::setw(14)
      << "error" << std::setw(10) << "R" << std::setw(8) << "cells" << "sparse\n";
    for (const auto& c : rec["cells"])
        t << std::setw(8) << fmt_json(c["N"]) << std::setw(12) << fmt_json(c["h"]) << std::setw(10)
          << c["seed"].get<std::uint64_t>() << std::setw(14) << fmt_json(c["error"]) << std::setw(10)
          << fmt_json(c["R"]) << std::setw(8) << fmt_json(c["cells_used"]) << fmt_json(c["insufficient_cells"])
          << "\n";
    t << "medians:\n";
    for (const auto& s : rec["summary"])
        t << "  N=" << fmt_json(s["N"]) << " error=" << fmt_json(s["median_error"])
          << " noise floor=" << fmt_json(s.value("median_noise_floor", Json())) << " R=" << fmt_json(s["median_R"])
          << "\n";
    bool pass = true;
    for (const auto& v : rec["verdicts"]) {
        t << "verdict " << v["name"].get<std::string>() << " [" << fmt_json(v["band"]) << "]: "
          << (v["pass"].get<bool>() ? "PASS" : "FAIL") << "\n";
        pass = pass && v["pass"].get<bool>();
    }
    o.text = t.str();
    if (check && !pass) o.exit_code = kExitBandFailure;
    return o;
}

} // namespace

ReportOutput report(const Json& rec, const std::optional<fs::path>& plot_dir, bool check) {
    if (rec.value("kind", "sweep") == "thm2") return report_thm2(rec, check);
    std::ostringstream t;
    ReportOutput o;
    t << "Sweep '" << rec.value("name", "") << "' (config " << rec.value("config_hash", "") << ")\n";
    const Json cells = rec.value("cells", Json::array());
    if (cells.empty()) {
        t << "no cells: the record holds no completed (N, h, replica) runs\n";
        o.text = t.str();
        o.exit_code = kExitPartial;
        return o;
    }
    if (rec.contains("reference")) {
        const auto& r = rec["reference"];
        t << "reference: n=" << fmt_json(r["n"]) << " L=" << fmt_json(r["L"]) << " mode=" << fmt_json(r["mode"])
          << " dt=" << fmt_json(r["dt"]) << " self-convergence L1=" << fmt_json(r["self_convergence_l1"])
          << " ||K*u||_inf=" << fmt_json(r["drift_sup"]) << " mass error=" << fmt_json(r["max_mass_error"]) << "\n";
    }
    t << "cells: " << fmt_json(rec["cells_done"]) << " of " << fmt_json(rec["cells_expected"])
      << (rec.value("complete", false) ? " (complete)" : " (partial)") << ", quarantined "
      << rec.value("quarantined", Json::array()).size() << "\n\n";

    t << std::left << std::setw(8) << "N" << std::setw(12) << "h" << std::setw(6) << "M";
    t << std::setw(8) << "m" << std::setw(12) << "moment" << std::setw(24) << "95% CI" << std::setw(12) << "init.err"
      << std::setw(12) << "|mu|_L2" << "clamp\n";
    for (const auto& a : rec["aggregates"]) {
        std::string hlabel = fmt_json(a["h"]) + (a.value("plateau", false) ? "*" : "");
        if (!a.contains("moments")) {
            t << std::setw(8) << fmt_json(a["N"]) << std::setw(12) << hlabel << std::setw(6) << "0" << "missing\n";
            continue;
        }
        for (const auto& m : a["moments"])
            t << std::setw(8) << fmt_json(a["N"]) << std::setw(12) << hlabel << std::setw(6)
              << fmt_json(a["replicas_ok"]) << std::setw(8) << fmt_json(m["m"]) << std::setw(12)
              << fmt_json(m["moment"]) << std::setw(24)
              << ("[" + fmt_json(m["ci_lo"]) + ", " + fmt_json(m["ci_hi"]) + "]") << std::setw(12)
              << fmt_json(a["initial_error_mean"]) << std::setw(12) << fmt_json(a["measure_l2_mean"])
              << fmt_json(a["clamp_fraction_mean"]) << "\n";
    }
    bool any_plateau = false;
    for (const auto& a : rec["aggregates"]) any_plateau = any_plateau || a.value("plateau", false);
    if (any_plateau) t << "(* plateau run, excluded from h fits)\n";
    t << "\n";

    const auto& pred = rec["predicted"];
    t << "predicted exponents: v1=" << pred["exponents"]["v1"]["fraction"].get<std::string>()
      << " v2=" << pred["exponents"]["v2"]["fraction"].get<std::string>()
      << " v3=" << pred["exponents"]["v3"]["fraction"].get<std::string>()
      << " alpha=" << pred["exponents"]["alpha"]["fraction"].get<std::string>()
      << " cost=" << pred["cost_exponent"]["fraction"].get<std::string>() << "\n";
    t << "fits (log-log slopes):\n";
    for (const auto& f : rec["fits"]) {
        t << "  " << f["quantity"].get<std::string>() << " vs " << f["axis"].get<std::string>() << " m="
          << fmt_json(f["m"]);
        std::string s = series_label(f["series"]);
        if (!s.empty()) t << " (" << s << ")";
        t << ": slope " << fmt_json(f["slope"]);
        if (!f["slope"].is_null()) t << " +- " << fmt_json(f["stderr"]);
        t << ", predicted " << fmt_json(f["predicted"]);
        if (f.value("plateau_subtracted", false)) t << ", plateau " << fmt_json(f["plateau"]) << " subtracted";
        if (f.contains("reason")) t << " [" << f["reason"].get<std::string>() << "]";
        t << "\n";
        if (plot_dir) write_plot(*plot_dir, f, t);
    }
    bool pass = true;
    for (const auto& v : rec.value("verdicts", Json::array())) {
        t << "verdict " << v["quantity"].get<std::string>() << " vs " << v["axis"].get<std::string>()
          << " m=" << fmt_json(v["m"]) << ": slope " << fmt_json(v["slope"]) << " in [" << fmt_json(v["band"][0])
          << ", " << fmt_json(v["band"][1]) << "]: " << (v["pass"].get<bool>() ? "PASS" : "FAIL") << "\n";
        pass = pass && v["pass"].get<bool>();
    }
    if (rec["fits"].size() > 0)
        t << "note: slopes at desk-scale N carry finite-N bias; the predicted exponents are asymptotic.\n";

    // cost model: wall time per N^2 (T/h) operation
    double lo = kInfinity, hi = 0.0;
    for (const auto& c : cells) {
        if (c.value("status", "") != "ok" || !c.contains("runtime_seconds") || !c.contains("ops")) continue;
        double ratio = c["runtime_seconds"].get<double>() / c["ops"].get<double>();
        lo = std::min(lo, ratio);
        hi = std::max(hi, ratio);
    }
    if (hi > 0.0)
        t << "cost model: seconds per N^2 (T/h) between " << fmt(lo) << " and " << fmt(hi) << " (spread "
          << fmt(hi / lo) << (hi / lo <= 3.0 ? ", within" : ", outside") << " a factor 3)\n";
    double halving = 0.0;
    int nh = 0;
    for (const auto& a : rec["aggregates"])
        if (a.contains("snapshot_halving_change")) {
            halving = std::max(halving, a["snapshot_halving_change"].get<double>());
            ++nh;
        }
    if (nh) t << "snapshot density: halving the snapshot set lowers sup_t error by at most " << fmt(100 * halving)
              << "%\n";

    if (pred.contains("rate_table_text")) t << "\nrate table:\n" << pred["rate_table_text"].get<std::string>();
    for (const auto& w : rec.value("warnings", Json::array())) t << "warning: " << w.get<std::string>() << "\n";
    o.text = t.str();
    if (!rec.value("complete", false) || !rec.value("quarantined", Json::array()).empty()) o.exit_code = kExitPartial;
    if (check && !pass) o.exit_code = kExitBandFailure;
    return o;
}

} // namespace mkv
