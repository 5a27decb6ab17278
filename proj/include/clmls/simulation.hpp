#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "clmls/constraint_algebra.hpp"
#include "clmls/filter_kernels.hpp"
#include "clmls/signal_model.hpp"

namespace clmls {

/// Floor applied to every dB value so that exact matches stay finite.
inline constexpr double kDbFloor = -400.0;

/// 10 log10(x) floored at kDbFloor.
double to_db(double power_ratio) noexcept;

/// 10 log10(||w_opt - w||^2 / ||w_opt||^2); throws std::invalid_argument for w_opt = 0.
double normalized_msd_db(const VectorXd& w, const VectorXd& w_opt);

/// Unit-norm system with w_i = w_{L-1-i}, drawn from a seeded Gaussian.
VectorXd random_symmetric_system(Eigen::Index filter_length, std::uint64_t seed);

/// 0% / 50% / 90% sparse schedule switching at floor(N/3) and floor(2N/3).
/// Zero positions are nested, so taps active in a sparser segment are active
/// in every earlier one; each segment is rescaled to unit norm.
SystemSchedule sparse_system_schedule(Eigen::Index filter_length, std::size_t horizon, std::uint64_t seed);

/// Tapped-delay-line regressor and desired-signal generator.
class SignalSource {
public:
    SignalSource(const SignalModel& model, std::uint64_t seed);

    /// Writes u(n) and d(n) and advances n.
    void next(VectorXd& u, double& d);

    std::size_t time() const noexcept { return n_; }

private:
    double next_stream_sample();

    const SignalModel* model_;
    std::mt19937_64 rng_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    VectorXd line_;
    double last_ = 0.0;
    double noise_std_;
    std::size_t n_ = 0;
};

struct Signals {
    std::vector<VectorXd> inputs;
    std::vector<double> desired;
};

Signals generate_signals(const SignalModel& model, std::size_t length, std::uint64_t seed);

/// Everything a Monte-Carlo run needs besides the algorithm.
///
/// For scheduled systems the constraint values follow the active system
/// (z_k = C^T w_k), and the reference solution and default l1 budget are
/// recomputed at every switch.
struct Scenario {
    SignalModel model;
    std::optional<ConstraintSet> constraints;
    VectorXd w_init;  // empty -> zeros
};

struct Window {
    std::size_t begin = 0;
    std::size_t end = 0;
};

/// Final 10% of [0, horizon).
Window final_window(std::size_t horizon) noexcept;

struct MonteCarloOptions {
    std::size_t trials = 500;
    std::size_t horizon = 5000;
    std::uint64_t base_seed = 1;
    unsigned threads = 0;  // 0 -> hardware concurrency
    std::vector<Window> windows;  // empty -> {final_window(horizon)}
    std::optional<double> budget;  // l1 budget override; default follows the reference solution
};

struct RunResult {
    Algorithm algorithm = Algorithm::Clmls;
    AlgorithmParams params;
    std::size_t trials = 0;
    std::size_t diverged_trials = 0;
    std::uint64_t seed = 0;

    std::vector<double> msd;      // E[||w_o - w(n)||^2 / ||w_o||^2]
    std::vector<double> msd_db;
    std::vector<double> msd_se;   // standard error of msd across trials
    std::vector<double> emse;     // E[(w_o - w(n))^T R (w_o - w(n))]

    std::vector<Window> windows;
    std::vector<double> window_msd;     // mean msd over each window
    std::vector<double> window_msd_se;  // standard error of that mean across trials
    std::vector<double> window_emse;

    std::size_t degenerate_fallbacks = 0;
    std::size_t budget_clamps = 0;
    double max_constraint_residual = 0.0;  // sampled every 100 iterations, scaled by 1 + ||z||_inf
    std::string first_divergence;

    std::size_t completed_trials() const noexcept { return trials - diverged_trials; }
    /// Plateau of window `k` in dB.
    double window_msd_db(std::size_t k = 0) const { return to_db(window_msd.at(k)); }
};

/// Every trial of an ensemble diverged.
class EnsembleDivergedError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Throws EnsembleDivergedError when every trial diverged.
RunResult run_monte_carlo(const Scenario& scenario, Algorithm algorithm, const AlgorithmParams& params,
                          const MonteCarloOptions& options);

/// First n with curve_db[n] <= plateau_db + margin_db, or curve_db.size() if never.
std::size_t iterations_to_plateau(const std::vector<double>& curve_db, double plateau_db, double margin_db = 3.0);

class StepSizeMatchError : public std::runtime_error {
public:
    StepSizeMatchError(double mu_low, double plateau_low_db, double mu_high, double plateau_high_db,
                       const std::string& what)
        : std::runtime_error(what)
        , mu_low(mu_low)
        , plateau_low_db(plateau_low_db)
        , mu_high(mu_high)
        , plateau_high_db(plateau_high_db)
    {
    }

    double mu_low;
    double plateau_low_db;
    double mu_high;
    double plateau_high_db;
};

struct StepSizeMatch {
    double mu = 0.0;
    double plateau_db = 0.0;
    std::size_t evaluations = 0;
};

struct SearchBounds {
    double mu_low = 1e-4;
    double mu_high = 0.1;
};

/// Halves mu from `bounds.mu_high` until the simulated plateau (first window
/// of `options`) falls below the reference, then bisects on log(mu) until it
/// is within `tolerance_db`. Every evaluation reuses the same seeds.
StepSizeMatch match_step_size(double reference_msd_db, Algorithm algorithm, const Scenario& scenario,
                              const AlgorithmParams& params, const MonteCarloOptions& options,
                              const SearchBounds& bounds, double tolerance_db = 0.25);

}  // namespace clmls
