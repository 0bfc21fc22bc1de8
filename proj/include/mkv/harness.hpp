#pragma once

// Sweep orchestration: shared PDE reference, replica runs per (N, h),
// line-delimited results with resume, run records, weighted density runs and reports.

#include "mkv/config.hpp"
#include "mkv/metrics.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace mkv {

inline constexpr int kSchemaVersion = 1;

enum ExitCode : int { kExitOk = 0, kExitValidation = 2, kExitPartial = 3, kExitBandFailure = 4 };

/// Trigonometric interpolation of a periodic grid field onto n_new nodes per axis
/// (n_new a multiple of u.n). The Nyquist mode is dropped.
GridField spectral_resample(const GridField& u, int n_new);

struct Reference {
    PdeResult pde;
    GridField u0_pde;                     // initial density on the PDE grid
    std::vector<GridField> on_measure;    // snapshots at snapshot_times(cfg) on the measure grid
};

/// Solves the PDE once for the whole sweep.
Reference solve_reference(const ExperimentConfig& cfg);

struct RunOptions {
    bool resume = false;
    bool override_budget = false;
    std::optional<std::int64_t> max_cells; // stop after this many (N, h, replica) cells
    std::optional<std::filesystem::path> cache_dir;
    std::function<void(const std::string&)> log;
};

struct SweepOutcome {
    Json record;
    int exit_code = kExitOk;
};

/// Runs (or resumes) the sweep, appending one line per (N, h, replica) to
/// <output_dir>/results.jsonl and writing <output_dir>/record.json.
SweepOutcome run_sweep(const ExperimentConfig& cfg, const RunOptions& opt = {});

/// Rebuilds the record from the configuration and a results file.
Json build_sweep_record(const ExperimentConfig& cfg, const ValidationReport& plan, const Json& reference_summary,
                        const std::vector<Json>& lines);

/// Record with the volatile parts (timestamps, runtimes) removed.
Json strip_volatile(const Json& record);

/// Gaussian-weighted density experiment over the sweep's (N, h) pairs and thm2.seeds.
SweepOutcome run_thm2(const ExperimentConfig& cfg, const RunOptions& opt = {});

struct ReportOutput {
    std::string text;
    int exit_code = kExitOk;
};

/// Tables and plot columns for a run record. Plot files go to plot_dir when given.
/// With check, failed verdicts give exit code 4; a record without cells gives 3.
ReportOutput report(const Json& record, const std::optional<std::filesystem::path>& plot_dir, bool check);

/// Machine-readable rate table.
Json rate_table_json(const RateTable& t);

Json environment_fingerprint();

/// Cache directory from MKV_CACHE_DIR, if set.
std::optional<std::filesystem::path> cache_dir_from_env();

Json read_json_file(const std::filesystem::path& file);
void write_json_file(const std::filesystem::path& file, const Json& j);

} // namespace mkv
