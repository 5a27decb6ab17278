#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "clmls/constraint_algebra.hpp"

namespace clmls {

enum class Algorithm {
    Lms,
    Lmls,
    Clms,
    Clmls,
    L1Clms,
    L1Wclms,
    L1Clmls,
    L1Wclmls,
};

/// Lower-case config/CSV names: "lms", "lmls", "clms", "clmls", "l1-clms", ...
std::string_view algorithm_name(Algorithm alg) noexcept;
std::optional<Algorithm> parse_algorithm(std::string_view name) noexcept;
const std::vector<Algorithm>& all_algorithms() noexcept;

bool is_constrained(Algorithm alg) noexcept;
bool is_sparse(Algorithm alg) noexcept;
bool is_reweighted(Algorithm alg) noexcept;
/// True for the logarithmic-cost members (g(e) = a e^3 / (1 + a e^2)).
bool uses_log_cost(Algorithm alg) noexcept;

struct FilterState {
    VectorXd w;
    std::size_t n = 0;
};

struct AlgorithmParams {
    double mu = 0.05;
    double alpha = 1.0;
    /// l1 budget. Plain variants constrain sign(w)^T w, reweighted ones
    /// (2/pi) sum atan(beta |w_j|).
    double t = 0.0;
    double beta_slope = 10.0;
    /// Largest per-tap budget correction the reweighted variants apply in one
    /// step; <= 0 selects 1 / beta_slope. The plain l1 variants ignore it.
    double budget_step_limit = 0.0;
};

/// Quantities of one sparse-constrained step.
struct SparseStepAux {
    VectorXd s;        // sign / reweighted direction
    MatrixXd p_prime;  // (I - P s s^T / ||P s||^2) P
    double e_l1 = 0.0; // budget deviation actually corrected this step
    VectorXd f_l1;     // e_l1 * P s / ||P s||^2
    /// Reweighted variants only: the raw deviation t - t(n) exceeded the step
    /// limit and e_l1 was scaled down.
    bool clamped = false;
};

struct SparseStepResult {
    FilterState state;
    SparseStepAux aux;
};

/// Threshold on ||P s||^2 below which the sparse step is undefined.
inline constexpr double kDegenerateDirectionThreshold = 1e-12;

/// g(e) = alpha e^3 / (1 + alpha e^2)
double error_nonlinearity(double e, double alpha) noexcept;

FilterState lms_step(const FilterState& state, const VectorXd& u, double d, const AlgorithmParams& params);
FilterState lmls_step(const FilterState& state, const VectorXd& u, double d, const AlgorithmParams& params);

FilterState clms_step(const FilterState& state, const VectorXd& u, double d, const AlgorithmParams& params,
                      const ConstraintSet& cs);
FilterState clmls_step(const FilterState& state, const VectorXd& u, double d, const AlgorithmParams& params,
                       const ConstraintSet& cs);

// The sparse steps throw DegenerateDirectionError when ||P s||^2 < 1e-12;
// callers are expected to fall back to the matching plain constrained step.
SparseStepResult l1_clms_step(const FilterState& state, const VectorXd& u, double d,
                              const AlgorithmParams& params, const ConstraintSet& cs);
SparseStepResult l1_wclms_step(const FilterState& state, const VectorXd& u, double d,
                               const AlgorithmParams& params, const ConstraintSet& cs);
SparseStepResult l1_clmls_step(const FilterState& state, const VectorXd& u, double d,
                               const AlgorithmParams& params, const ConstraintSet& cs);
SparseStepResult l1_wclmls_step(const FilterState& state, const VectorXd& u, double d,
                                const AlgorithmParams& params, const ConstraintSet& cs);

/// Elementwise sign with sign(0) = 0.
VectorXd sign_direction(const VectorXd& w);

/// s_j = (2 beta / pi) sign(w_j) / (beta^2 w_j^2 + 1), the gradient of reweighted_l1_norm().
VectorXd reweighted_direction(const VectorXd& w, double beta_slope);

/// (2/pi) sum_j atan(beta |w_j|)
double reweighted_l1_norm(const VectorXd& w, double beta_slope);

/// Default budget for an algorithm given the target solution: ||w_o||_1 or
/// its reweighted counterpart. Zero for non-sparse algorithms.
double default_budget(Algorithm alg, const VectorXd& w_opt, double beta_slope);

/**
 * In-place adaptive filter used by the Monte-Carlo runner.
 *
 * Performs the same arithmetic as the *_step functions without allocating
 * per sample, falls back to the plain constrained update on a degenerate
 * sparse direction, and keeps event counters.
 */
class AdaptiveFilter {
public:
    /// `cs` must outlive the filter and is required for constrained algorithms.
    AdaptiveFilter(Algorithm alg, const AlgorithmParams& params, const ConstraintSet* cs, VectorXd w0);

    /// Throws DivergenceError on a non-finite error or weight.
    void update(const VectorXd& u, double d);

    /// Switch to a new constraint right-hand side / budget (time-varying
    /// systems) and re-project the weights onto the new feasible set.
    void retarget(const ConstraintSet* cs, double budget);

    const VectorXd& weights() const noexcept { return w_; }
    std::size_t iteration() const noexcept { return n_; }
    Algorithm algorithm() const noexcept { return alg_; }
    const AlgorithmParams& params() const noexcept { return params_; }
    const ConstraintSet* constraints() const noexcept { return cs_; }

    std::size_t degenerate_fallbacks() const noexcept { return degenerate_; }
    std::size_t budget_clamps() const noexcept { return clamps_; }

private:
    Algorithm alg_;
    AlgorithmParams params_;
    const ConstraintSet* cs_;
    VectorXd w_;
    std::size_t n_ = 0;
    std::size_t degenerate_ = 0;
    std::size_t clamps_ = 0;
    VectorXd tmp_;
    VectorXd s_;
    VectorXd ps_;
    VectorXd pu_;
};

}  // namespace clmls
