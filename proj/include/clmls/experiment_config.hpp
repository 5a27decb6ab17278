#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "clmls/filter_kernels.hpp"

namespace clmls {

enum class ExperimentId { Exp1, Exp2Snr, Exp2Mu, Exp3, Custom };

const char* experiment_name(ExperimentId id) noexcept;

/**
 * Parsed and validated experiment description.
 *
 * File format: INI-style `key = value` lines grouped under `[experiment]`,
 * `[params]`, `[scenario]` and `[output]`; `#` or `;` start a comment. Lists
 * are comma separated. Every field has a default, so an empty
 * `[experiment]` section with an `id` is a complete configuration.
 */
struct ExperimentConfig {
    ExperimentId id = ExperimentId::Exp1;
    std::vector<Algorithm> algorithms;
    std::size_t filter_length = 10;
    std::size_t horizon = 5000;
    std::size_t trials = 500;
    std::uint64_t base_seed = 1;
    std::uint64_t system_seed = 7;

    AlgorithmParams params;
    std::optional<double> budget;  // l1 budget t; default follows the reference solution

    std::string input = "white";  // white | ar1
    double rho = 0.0;
    std::optional<double> sigma_v2;
    std::vector<double> snr_db;
    std::vector<double> mu_list;
    bool match_step_sizes = true;

    std::string out_dir = "results";
    unsigned threads = 0;

    /// Defaults that were filled in rather than read, e.g. "trials = 500".
    std::vector<std::string> applied_defaults;
    /// Non-fatal remarks from validation.
    std::vector<std::string> warnings;

    /// Noise level given as SNR rather than sigma_v2.
    bool uses_snr() const noexcept { return !snr_db.empty(); }
};

/// Parses text; `source` names the input in error messages.
/// Throws ConfigError carrying the offending line (0 for whole-file problems).
ExperimentConfig parse_config(std::istream& in, const std::string& source = "<config>");
ExperimentConfig load_config(const std::string& path);

/// INI text that reproduces `config` exactly when parsed.
std::string config_echo(const ExperimentConfig& config);

/// Commented template listing every key with its default.
std::string config_template(ExperimentId id);

}  // namespace clmls
