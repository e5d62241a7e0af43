#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "billiard/eigensolver.hpp"
#include "billiard/spectral_stats.hpp"

namespace billiard {

/// Experiment description: the lambda set, the spectral windows, and the
/// per-module parameters with their desk-scale defaults. Loaded from a
/// plain-text "key = value" file with [section] headers.
struct ExperimentConfig {
    // [experiment]
    std::vector<double> lambdas{0.135, 0.14, 0.145, 0.15, 0.155, 0.16, 0.165, 0.175,
                                0.18,  0.19, 0.2,   0.21, 0.22,  0.23, 0.24};
    std::vector<double> k_centers{100.0, 200.0};
    std::vector<double> window_half_widths{10.0, 5.0};
    Parity parity = Parity::odd;  // parity used for Husimi / measures
    uint64_t seed = 1;
    std::string cache_dir = "cache";
    int jobs = 0;

    // [classical]
    uint64_t orbit_collisions = 100000000ULL;
    long rho_samples = 4096;
    int footprint_steps = 10000;
    double chaotic_cell_threshold = 0.5;
    long transport_ensemble = 100000;
    uint64_t transport_cap = 1000000ULL;

    // [solver]
    SolverOptions solver;

    // [measures]
    int states_per_window = 150;
    double separation_threshold = 0.0;
    int correlation_window = 20;

    // [fit]
    bool fit_pool_parities = true;

    // [report]
    std::string report_dir = "report";
    double ps_lambda = 0.15;
    int ps_window_index = 0;
    int ps_bins = 40;

    static ExperimentConfig from_file(const std::string& path);
    void validate() const;
};

enum class Stage { classical, spectrum, husimi, separate, measures, fit, report };

Stage stage_from_name(const std::string& name);
const char* stage_name(Stage stage);

struct StageReport {
    int computed = 0;    // work items actually run
    int cache_hits = 0;  // work items served from cache
    double wall_seconds = 0.0;
};

/// Run one pipeline stage for every (lambda, window) work item in the
/// config. Idempotent: items whose cache entries match the config hash are
/// not recomputed. Throws MissingStageError when an upstream stage has not
/// produced its entries.
StageReport run_stage(const ExperimentConfig& config, Stage stage);

/// Emit the three plot-ready CSV bundles (ps_fit.csv, a_vs_c.csv,
/// beta_vs_a.csv) into config.report_dir.
StageReport report_figures(const ExperimentConfig& config);

// --- cache ---------------------------------------------------------------

/// One cached artifact: a plain-text header (kind, metadata, hashes) and a
/// raw little-endian float64 payload.
struct CacheEntry {
    std::string kind;
    std::string name;  // file stem, unique per config hash
    std::vector<std::pair<std::string, std::string>> meta;
    std::vector<double> payload;

    void set(const std::string& key, const std::string& value);
    void set_num(const std::string& key, double value);
    std::optional<std::string> get(const std::string& key) const;
    double num(const std::string& key) const;  // throws if missing
};

class CacheStore {
public:
    explicit CacheStore(std::string dir);

    const std::string& dir() const { return dir_; }
    bool contains(const std::string& name) const;
    /// Atomic write (temp file + rename) plus a .meta provenance record.
    void save(const CacheEntry& entry, double wall_seconds, uint64_t seed) const;
    /// Loads and verifies the stored payload hash; throws NumericalError on
    /// corruption, returns nullopt when the entry does not exist.
    std::optional<CacheEntry> load(const std::string& name) const;

private:
    std::string dir_;
};

uint64_t fnv1a64(const std::string& text);
std::string hash_hex(const std::string& text);

/// Process-wide runtime knobs: pins BLAS to one thread (the solvers
/// parallelize over k themselves) and sets the OpenMP default.
void init_runtime(int jobs);

}  // namespace billiard
