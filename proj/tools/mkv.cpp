#include "mkv/harness.hpp"
#include "mkv/rng.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <iostream>

using namespace mkv;
namespace fs = std::filesystem;

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    bool override_budget = false;
    bool quiet = false;
};

ExperimentConfig load(const Common& c) {
    ExperimentConfig cfg = load_config(c.config);
    apply_overrides(cfg, c.seed, c.workers);
    return cfg;
}

RunOptions options(const Common& c) {
    RunOptions o;
    o.override_budget = c.override_budget;
    if (!c.quiet) o.log = [](const std::string& s) { std::cerr << s << "\n"; };
    return o;
}

void add_common(CLI::App* app, Common& c) {
    app->add_option("config", c.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    app->add_option("--seed", c.seed, "master seed override");
    app->add_option("--workers", c.workers, "worker threads")->check(CLI::PositiveNumber);
    app->add_flag("--override-budget", c.override_budget, "run even when the operation estimate exceeds the budget");
    app->add_flag("-q,--quiet", c.quiet, "no progress lines");
}

int cmd_validate(const Common& c) {
    ExperimentConfig cfg = load(c);
    ValidationReport rep = validate_config(cfg, c.override_budget);
    std::cout << "config " << cfg.name << " (hash " << config_hash(cfg) << ")\n";
    for (const auto& cell : rep.cells)
        std::cout << "  N=" << cell.N << " h=" << cell.h << " steps=" << cell.steps << " eps="
                  << cell.mollifier.scaled_radius() << (cell.plateau ? " (plateau)" : "") << "\n";
    std::cout << "operation estimate " << rep.op_count << ", memory estimate " << rep.memory_mb << " MB\n";
    for (const auto& w : rep.warnings) std::cout << "warning: " << w << "\n";
    for (const auto& e : rep.errors) std::cout << "error: " << e << "\n";
    return rep.ok() ? kExitOk : kExitValidation;
}

int cmd_solve_pde(const Common& c, const std::string& out) {
    ExperimentConfig cfg = load(c);
    auto t0 = std::chrono::steady_clock::now();
    Reference ref = solve_reference(cfg);
    fs::path dir = out.empty() ? fs::path(cfg.output_dir) / "pde" : fs::path(out);
    fs::create_directories(dir);
    Json snaps = Json::array();
    for (std::size_t k = 0; k < ref.pde.snapshots.size(); ++k) {
        const auto& s = ref.pde.snapshots[k];
        std::string name = "u_" + std::to_string(k) + ".grid";
        s.save(dir / name);
        snaps.push_back({{"time", s.time}, {"file", name}, {"mass", s.integral()}});
    }
    Json j{{"dt", ref.pde.dt},
           {"steps", ref.pde.steps},
           {"self_convergence_l1", ref.pde.self_convergence_l1},
           {"drift_sup", ref.pde.drift_sup},
           {"min_value", ref.pde.min_value},
           {"max_mass_error", ref.pde.max_mass_error},
           {"boundary_max", ref.pde.boundary_max},
           {"cfl", ref.pde.cfl},
           {"warnings", ref.pde.warnings},
           {"snapshots", snaps},
           {"runtime_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}};
    write_json_file(dir / "pde.json", j);
    std::cout << j.dump(2) << "\n";
    return kExitOk;
}

int cmd_simulate(const Common& c, std::int64_t N, std::optional<double> h, int replica, const std::string& dump) {
    ExperimentConfig cfg = load(c);
    cfg.sweep.N = {N};
    if (h) {
        cfg.sweep.mode = SweepMode::Grid;
        cfg.sweep.h = {*h};
        cfg.sweep.plateau_h.reset();
    }
    cfg.thm2.enabled = false;
    ValidationReport rep = validate_config(cfg, true);
    if (!rep.ok()) {
        for (const auto& e : rep.errors) std::cerr << "error: " << e << "\n";
        return kExitValidation;
    }
    const PlannedCell& cell = rep.cells.front();
    SimConfig sc;
    sc.N = cell.N;
    sc.h = cell.h;
    sc.T = cfg.T;
    sc.d = cfg.d;
    sc.mollifier = cell.mollifier;
    sc.kernel = cfg.kernel;
    sc.initial = cfg.initial;
    sc.snapshot_times = snapshot_times(cfg);
    sc.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(replica));
    if (cfg.sweep.A) {
        sc.A = *cfg.sweep.A;
    } else {
        Reference ref = solve_reference(cfg);
        sc.drift_sup_estimate = ref.pde.drift_sup;
        sc.A = ref.pde.drift_sup > 0.0 ? cfg.sweep.A_factor * ref.pde.drift_sup : 1.0;
    }
    for (const auto& w : sc.warnings()) std::cerr << "warning: " << w << "\n";
    auto t0 = std::chrono::steady_clock::now();
    TabulatedKernel tab = load_or_build_tabulated_kernel(cfg.kernel, cell.mollifier, cfg.table, cache_dir_from_env());
    SimStats stats;
    auto snaps = simulate(sc, tab, &stats);
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::string run_id = cfg.name + "_N" + std::to_string(N) + "_s" + std::to_string(cell.steps);
    if (!dump.empty()) {
        write_snapshot_dump(dump, run_id, replica, snaps);
        write_json_file(dump + ".json", {{"run_id", run_id},
                                         {"config_hash", config_hash(cfg)},
                                         {"N", N},
                                         {"h", cell.h},
                                         {"replica", replica},
                                         {"seed", sc.seed},
                                         {"A", sc.A},
                                         {"epsilon", cell.mollifier.scaled_radius()}});
    }
    const auto& last = snaps.back();
    Point mean{};
    for (std::int64_t i = 0; i < last.N; ++i) mean = mean + last.position(i);
    mean = (1.0 / static_cast<double>(last.N)) * mean;
    Json j{{"run_id", run_id},
           {"N", N},
           {"h", cell.h},
           {"steps", cell.steps},
           {"A", sc.A},
           {"final_time", last.time},
           {"mean", std::vector<double>(mean.begin(), mean.begin() + cfg.d)},
           {"clamp_fraction", stats.clamp_fraction()},
           {"max_abs_raw_drift", stats.max_abs_raw_drift},
           {"runtime_seconds", secs}};
    std::cout << j.dump(2) << "\n";
    return kExitOk;
}

int cmd_sweep(const Common& c, bool resume, std::optional<std::int64_t> max_cells) {
    ExperimentConfig cfg = load(c);
    RunOptions o = options(c);
    o.resume = resume;
    o.max_cells = max_cells;
    SweepOutcome out = run_sweep(cfg, o);
    std::cout << report(out.record, fs::path(cfg.output_dir) / "plots", false).text;
    return out.exit_code;
}

int cmd_thm2(const Common& c) {
    ExperimentConfig cfg = load(c);
    SweepOutcome out = run_thm2(cfg, options(c));
    std::cout << report(out.record, std::nullopt, false).text;
    return out.exit_code;
}

int cmd_rates(const std::string& config, const std::string& kernel, int d, double chi, double s,
              const std::string& sign, const std::string& alpha, const std::string& slack, bool json) {
    KernelSpec spec;
    std::optional<Rational> a;
    Rational sl = slack.empty() ? Rational(0) : parse_rational(slack);
    if (!config.empty()) {
        ExperimentConfig cfg = load_config(config);
        spec = cfg.kernel;
        a = cfg.sweep.alpha;
        if (slack.empty()) sl = cfg.sweep.slack;
    } else {
        spec.variant = parse_kernel_variant(kernel);
        spec.dim = d;
        spec.chi = chi;
        spec.s = s;
        spec.sign = sign == "repulsive" ? Interaction::Repulsive : Interaction::Attractive;
        if (spec.variant == KernelVariant::TabulatedCustom) {
            spec.profile = {0.0, 0.0};
            spec.profile_dr = 1.0;
        }
    }
    if (!alpha.empty()) a = parse_rational(alpha);
    spec.validate();
    RateTable t = rate_table(spec, sl, a);
    std::cout << format_rate_table(t);
    if (json) std::cout << rate_table_json(t).dump(2) << "\n";
    return kExitOk;
}

int cmd_report(const std::string& path, bool check, const std::string& plots) {
    fs::path p(path);
    if (fs::is_directory(p)) p = fs::exists(p / "record.json") ? p / "record.json" : p / "thm2_record.json";
    Json rec = read_json_file(p);
    std::optional<fs::path> plot_dir;
    if (!plots.empty()) plot_dir = fs::path(plots);
    ReportOutput out = report(rec, plot_dir, check);
    std::cout << out.text;
    return out.exit_code;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"mollified interacting particle systems: sweeps, reference solutions and rate checks"};
    app.require_subcommand(1);

    Common c;
    auto* v = app.add_subcommand("validate", "check a config and print the planned cells");
    add_common(v, c);

    std::string pde_out;
    auto* sp = app.add_subcommand("solve-pde", "solve the reference PDE and write its snapshots");
    add_common(sp, c);
    sp->add_option("--out", pde_out, "output directory");

    std::int64_t simN = 1000;
    std::optional<double> simh;
    int sim_rep = 0;
    std::string dump;
    auto* sim = app.add_subcommand("simulate", "run one particle system");
    add_common(sim, c);
    sim->add_option("--N", simN, "particle count")->check(CLI::PositiveNumber);
    sim->add_option("--step", simh, "step (default: coupled h for N)");
    sim->add_option("--replica", sim_rep, "replica index");
    sim->add_option("--dump", dump, "snapshot dump file");

    bool resume = false;
    std::optional<std::int64_t> max_cells;
    auto* sw = app.add_subcommand("sweep", "run an N-h sweep with replicas");
    add_common(sw, c);
    sw->add_flag("--resume", resume, "skip cells already in the results file");
    sw->add_option("--max-cells", max_cells, "stop after this many cells");

    auto* t2 = app.add_subcommand("thm2", "replica density estimates and the Gaussian-weighted error");
    add_common(t2, c);

    std::string r_config, r_kernel = "keller_segel", r_sign = "attractive", r_alpha, r_slack;
    int r_d = 2;
    double r_chi = 1.0, r_s = 0.0;
    bool r_json = false;
    auto* rt = app.add_subcommand("rates", "print the exponent table of a kernel class");
    rt->add_option("--config", r_config, "take the kernel from a config")->check(CLI::ExistingFile);
    rt->add_option("--kernel", r_kernel, "zero, bounded_lipschitz, riesz, keller_segel, truncated_riesz");
    rt->add_option("--d", r_d, "dimension");
    rt->add_option("--chi", r_chi, "Keller-Segel strength");
    rt->add_option("--s", r_s, "Riesz exponent");
    rt->add_option("--sign", r_sign, "attractive or repulsive");
    rt->add_option("--alpha", r_alpha, "mollifier exponent (default optimal)");
    rt->add_option("--slack", r_slack, "rate slack epsilon");
    rt->add_flag("--json", r_json, "also print the machine-readable record");

    std::string rep_path, plots;
    bool check = false;
    auto* rp = app.add_subcommand("report", "summarise a run record");
    rp->add_option("record", rep_path, "record.json or output directory")->required();
    rp->add_flag("--check", check, "exit 4 when a verdict fails its band");
    rp->add_option("--plots", plots, "directory for plot data");

    CLI11_PARSE(app, argc, argv);
    try {
        if (v->parsed()) return cmd_validate(c);
        if (sp->parsed()) return cmd_solve_pde(c, pde_out);
        if (sim->parsed()) return cmd_simulate(c, simN, simh, sim_rep, dump);
        if (sw->parsed()) return cmd_sweep(c, resume, max_cells);
        if (t2->parsed()) return cmd_thm2(c);
        if (rt->parsed()) return cmd_rates(r_config, r_kernel, r_d, r_chi, r_s, r_sign, r_alpha, r_slack, r_json);
        if (rp->parsed()) return cmd_report(rep_path, check, plots);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
