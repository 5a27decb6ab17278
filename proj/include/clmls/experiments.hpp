#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "clmls/experiment_config.hpp"
#include "clmls/simulation.hpp"
#include "clmls/theory.hpp"

namespace clmls {

/// One noise level / step size of an experiment.
struct ScenarioPoint {
    std::string label;  // "" for single-point experiments, e.g. "snr30" or "mu0.05" otherwise
    Scenario scenario;
    AlgorithmParams params;
    std::optional<double> snr_db;
};

/// Expands the SNR or mu sweep of `config` into scenario points.
/// Linear-phase constraints are used everywhere except exp3, which gets a
/// single DC-gain constraint following the active system.
std::vector<ScenarioPoint> build_scenarios(const ExperimentConfig& config);

struct CurveOutput {
    std::string name;  // file stem
    std::string label;
    RunResult result;
    VectorXd reference;  // w_o of the first segment
    std::optional<TheoryTrace> theory;
    std::optional<SteadyStatePrediction> steady_state;
    std::optional<StepSizeMatch> match;
    std::string match_target;  // algorithm whose plateau was matched
    double sigma_v2 = 0.0;
};

struct ExperimentReport {
    ExperimentConfig config;
    std::vector<CurveOutput> curves;
    std::vector<std::string> warnings;
};

/// Runs every (scenario point, algorithm) pair. Progress goes to `log` when
/// non-null. Throws EnsembleDivergedError if any ensemble diverges entirely.
ExperimentReport run_experiment(const ExperimentConfig& config, std::ostream* log = nullptr);

/// CSV with columns iteration,msd_db,emse[,theory_msd_db,theory_emse].
std::string curve_csv(const CurveOutput& curve);

/// Writes <name>.csv per curve, summary.json, config_echo.ini and plot.gp.
/// Throws std::ios_base::failure on I/O errors.
void write_report(const ExperimentReport& report, const std::filesystem::path& out_dir);

struct PredictReport {
    TheoryTrace trace;
    SteadyStatePrediction steady_state;
    double reference_norm2 = 1.0;
    double sigma_v2 = 0.0;
    std::vector<std::string> warnings;
};

/// Theory-only run for a single-point config with a constrained algorithm.
/// Throws ConfigError for sweeps or scheduled systems.
PredictReport predict(const ExperimentConfig& config);

/// predict.csv (iteration,msd_db,msd,emse) and steady_state.csv (quantity,value).
void write_predict(const PredictReport& report, const ExperimentConfig& config, const std::filesystem::path& out_dir);

}  // namespace clmls
