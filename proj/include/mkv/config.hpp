#pragma once

// Experiment configuration documents (JSON) and their validation.

#include "mkv/kernel_catalog.hpp"
#include "mkv/particle_system.hpp"
#include "mkv/pde_reference.hpp"
#include "mkv/rates.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mkv {

using Json = nlohmann::json;

enum class SweepMode { Coupled, Grid };

struct SweepSpec {
    SweepMode mode = SweepMode::Coupled;
    std::vector<std::int64_t> N;
    std::vector<double> h;           // Grid mode
    double h_scale = 1.0;            // Coupled mode: h = h_scale * N^{-(v1+v2)/v3}
    int replicas = 8;
    std::vector<double> m{1.0};
    std::optional<Rational> alpha;   // empty: optimal alpha
    std::optional<double> A;         // empty: A_factor * ||K*u||_{T,inf} from the reference
    double A_factor = 3.0;
    bool A_strict = false;           // A < 2 ||K*u|| is an error instead of a warning
    Rational slack{0};
    std::optional<double> plateau_h; // Grid mode: extra run excluded from the h fit
    bool common_noise = true;        // Grid mode: share Brownian paths across h
    int snapshots = 32;
};

struct GridSpec {
    int n = 256;
    double L = 8.0;
};

struct PdeSpec {
    GridSpec grid;
    double dt = 1e-3;
    KernelTransformMode mode = KernelTransformMode::MollifiedGrid;
    Splitting splitting = Splitting::Lie;
    double self_convergence_tol = 1e-2;
    double mollifier_support = 1.0;
};

struct Thm2Spec {
    bool enabled = false;
    double t = 0.0;
    int replicas = 1000;
    double c = 2.5;
    double p = 1.5;
    int coarsen = 8;
    std::vector<std::uint64_t> seeds{1};
    std::uint64_t min_count = 20;
    std::int64_t particle_index = -1; // < 0: pool every particle
    bool allow_small = false;         // permit fewer than 1000 replicas
};

struct Limits {
    double max_wall_seconds = 0.0; // 0: unlimited
    double max_memory_mb = 4096.0;
    double op_budget = 1e13;       // sum of N^2 (T/h) M
};

/// Acceptance band for a fitted slope. `target` empty means the predicted exponent.
struct Band {
    std::string axis = "N"; // "N" or "h"
    double m = 1.0;
    std::optional<double> target;
    double tol = 0.15;
    std::string quantity = "error"; // "error" or "measure_l2"
};

struct ExperimentConfig {
    std::string name = "experiment";
    KernelSpec kernel;
    int d = 1;
    ExtRational r;
    Rational zeta{1};
    InitialDensity initial = InitialDensity::gaussian(1, {}, 1.0);
    double T = 1.0;
    SweepSpec sweep;
    GridSpec measure;
    PdeSpec pde;
    Thm2Spec thm2;
    std::uint64_t seed = 0;
    std::string output_dir = "out";
    Limits limits;
    TableResolution table;
    int workers = 1;
    std::vector<Band> bands;
    Json document; // effective document (seed and workers applied)
};

/// Parses a document; every malformed field is reported in one ConfigError.
ExperimentConfig parse_config(const Json& doc, const std::filesystem::path& base_dir = ".");
ExperimentConfig load_config(const std::filesystem::path& file);

/// One (N, h) pair of a sweep.
struct PlannedCell {
    std::int64_t N = 0;
    double h = 0.0;           // T / steps
    std::int64_t steps = 0;
    int noise_substeps = 1;
    bool plateau = false;     // Grid mode extra run at plateau_h
    Rational alpha{0};
    MollifierParams mollifier;
};

struct ValidationReport {
    std::vector<std::string> errors;
    std::vector<std::string> warnings;
    std::vector<PlannedCell> cells;
    RateExponents exponents;
    double op_count = 0.0;
    double memory_mb = 0.0;
    bool ok() const { return errors.empty(); }
};

/// Checks (A_alpha), h | T, snapshot alignment, grid resolution, budget and
/// memory; all failures are collected.
ValidationReport validate_config(const ExperimentConfig& cfg, bool override_budget = false);

/// Snapshot times k T / S, k = 0..S.
std::vector<double> snapshot_times(const ExperimentConfig& cfg);

PdeConfig pde_config(const ExperimentConfig& cfg);

/// FNV-1a over the canonical dump of the effective document, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

/// Rewrites the seed / worker count and refreshes the effective document.
void apply_overrides(ExperimentConfig& cfg, std::optional<std::uint64_t> seed, std::optional<int> workers);

} // namespace mkv
