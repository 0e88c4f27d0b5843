#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "leveldot/ensembles.hpp"
#include "leveldot/spectral.hpp"
#include "leveldot/theory.hpp"

namespace leveldot {

struct TauGrid {
    double min = 1e-3;
    double max = 10.0;
    std::size_t points = 200;
    std::string spacing = "geometric";  // or "linear"

    std::vector<double> values() const;
    friend bool operator==(const TauGrid&, const TauGrid&) = default;
};

/// tau interval left out of the z-score statistics, for one class or all.
struct ExcludeRange {
    double from = 0.0;
    double to = 0.0;
    std::optional<SymmetryClass> cls;
    friend bool operator==(const ExcludeRange&, const ExcludeRange&) = default;
};

/// Expected plateau-to-minimum ratio for one class.
struct RatioExpectation {
    SymmetryClass cls = SymmetryClass::U;
    double target = 2.0;
    double tolerance = 0.2;
    friend bool operator==(const RatioExpectation&, const RatioExpectation&) = default;
};

struct CompareSettings {
    Formula theory = Formula::FullCrossover;
    double z_threshold = 3.0;
    double max_outlier_fraction = 0.02;
    double tau_min = 0.0;
    double tau_max = std::numeric_limits<double>::infinity();
    std::vector<ExcludeRange> exclude;
    std::vector<RatioExpectation> ratios;
    /// Interpolate theory onto the Monte Carlo grid (linear in log tau)
    /// instead of requiring identical grids.
    bool interpolate = false;

    friend bool operator==(const CompareSettings&, const CompareSettings&) = default;
};

struct ExperimentConfig {
    std::string name = "custom";
    /// class, n, lambda, epsilon0 and bath; g comes from `gammas`.
    EnsembleSpec ensemble;
    /// Classes to run; a single entry equal to ensemble.cls by default.
    std::vector<SymmetryClass> classes{SymmetryClass::U};
    std::vector<double> gammas{46.0};
    TauGrid tau;
    std::size_t samples = 2000;
    std::uint64_t seed = 1;
    std::size_t block_size = 16;
    double late_tau0 = 2.0;
    double late_tau1 = 5.0;
    std::size_t verify_every = 0;
    std::vector<Formula> theory{Formula::FullCrossover};
    double theory_rel_tol = 1e-6;
    double theory_abs_tol = 1e-9;
    CompareSettings compare;
    std::string output_dir;

    /// Throws ConfigError on inconsistent values.
    void validate() const;
    friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// Parses the JSON config format (comments allowed). Unknown keys, wrong
/// types and invalid values raise ConfigError with the offending line.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string serialize_config(const ExperimentConfig& config);

/// EnsembleSpec on its own, in the same format as the config's "ensemble".
std::string serialize_ensemble(const EnsembleSpec& spec);
EnsembleSpec parse_ensemble(std::string_view text);

/// FNV-1a of the compact serialized config, 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

struct PresetInfo {
    std::string name;
    std::string description;
};
std::vector<PresetInfo> list_presets();
/// Throws ConfigError for unknown names.
ExperimentConfig preset(std::string_view name);

std::string version_string();

struct RunContext {
    std::filesystem::path out_dir;
    unsigned workers = 1;
    bool resume = true;
    /// Stop simulate after this many new blocks per sweep (tests).
    std::size_t max_new_blocks = std::numeric_limits<std::size_t>::max();
    std::function<void(const std::string&)> log;
};

/// Directory a run writes to: the explicit override if given, else
/// $LEVELDOT_OUTPUT_ROOT (default "runs") joined with the config's
/// output_dir or name.
std::filesystem::path resolve_output_dir(const ExperimentConfig& config,
                                         const std::optional<std::filesystem::path>& override_dir);

std::string mc_file_name(SymmetryClass cls, double gamma);
std::string theory_file_name(Formula formula, SymmetryClass cls, double gamma);

struct SimulateResult {
    std::vector<SurvivalCurve> curves;
    std::vector<std::filesystem::path> files;
    bool complete = true;
};

/// Monte Carlo for every class and gamma; one CSV per curve plus the
/// resolved config. Interrupted runs resume from the checkpoint files.
SimulateResult run_simulate(const ExperimentConfig& config, const RunContext& ctx);

struct TheoryResult {
    std::vector<TheoryCurve> curves;
    std::vector<std::filesystem::path> files;
    std::size_t failed_points = 0;
};

/// Theory curves for each requested formula, class and gamma, and a table
/// of the infinite-time residence probability with the Golden Rule value.
TheoryResult run_theory(const ExperimentConfig& config, const RunContext& ctx);

struct PointComparison {
    double tau = 0.0;
    double theory = 0.0;
    double mc = 0.0;
    double sem = 0.0;
    double z = 0.0;
    bool used = false;
};

struct CurveComparison {
    SymmetryClass cls = SymmetryClass::U;
    double gamma = 0.0;
    Formula formula = Formula::FullCrossover;
    std::vector<PointComparison> points;
    std::size_t used = 0;
    std::size_t outliers = 0;
    double outlier_fraction = 0.0;
    double max_abs_z = 0.0;
    double p_off = 0.0, p_off_err = 0.0;
    double p_pl = 0.0, p_pl_err = 0.0;
    double ratio = 0.0, ratio_err = 0.0;
    double p_res_mc = 0.0, p_res_mc_err = 0.0;
    double p_res_theory = 0.0;
    bool outliers_ok = false;
    std::optional<bool> ratio_ok;
    bool pass = false;
};

struct ComparisonReport {
    std::string config_hash;
    std::uint64_t seed = 0;
    CompareSettings settings;
    std::vector<CurveComparison> curves;
    bool pass = false;
};

/// Pairs curves by class and gamma and computes z-scores and derived
/// observables. Throws ConfigError when a pair is missing or grids differ
/// without interpolation.
ComparisonReport compare_curves(const std::vector<SurvivalCurve>& mc,
                                const std::vector<TheoryCurve>& theory,
                                const CompareSettings& settings);

/// Post-decay minimum (5-point running mean, before the late window) and
/// late plateau of a Monte Carlo curve with their uncertainties.
struct DipAndPlateau {
    double p_off, p_off_err, p_pl, p_pl_err, ratio, ratio_err;
};
DipAndPlateau dip_and_plateau(const SurvivalCurve& c);

std::string report_json(const ComparisonReport& report);

/// Reads the listed files, compares and writes report.json into out_dir.
ComparisonReport run_compare(const std::vector<std::filesystem::path>& mc_files,
                             const std::vector<std::filesystem::path>& theory_files,
                             const CompareSettings& settings, const std::filesystem::path& out_dir,
                             const std::string& config_hash = {});

struct SweepRow {
    double gamma = 0.0;
    double p_late = 0.0, p_late_err = 0.0;
    double p_plateau = 0.0, p_plateau_err = 0.0;
    double p_res_theory = 0.0;
    double fgr = 0.0;
    std::size_t samples = 0;
};

struct SweepTable {
    std::vector<SweepRow> rows;
    std::filesystem::path file;
    bool complete = true;
};

/// run_simulate over the config's gammas with gamma = 0 added, then the
/// late-time residence table (sweep.csv).
SweepTable run_sweep(const ExperimentConfig& config, const RunContext& ctx);

/// Lines of a CSV that are not '#' comments.
std::string csv_body(const std::filesystem::path& file);

}  // namespace leveldot
