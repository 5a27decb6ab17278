#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "clmls/constraint_algebra.hpp"

namespace clmls {

enum class InputKind { White, Ar1 };

/// Piecewise-constant true system: systems[k] is active on [starts[k], starts[k+1]).
struct SystemSchedule {
    std::vector<VectorXd> systems;
    std::vector<std::size_t> starts;

    std::size_t segment_at(std::size_t n) const noexcept;
    const VectorXd& system_at(std::size_t n) const noexcept { return systems[segment_at(n)]; }
};

/**
 * Second-order description of a system-identification scenario.
 *
 * The regressor is a tapped delay line over a unit-variance scalar stream
 * (white, or AR(1) with coefficient `rho` normalized to unit variance), so
 * R(i,j) = rho^|i-j| (identity for white input). d(n) = w_sys^T u(n) + v(n)
 * with v white Gaussian of variance `sigma_v2`.
 */
struct SignalModel {
    MatrixXd r;
    InputKind input_kind = InputKind::White;
    double rho = 0.0;
    double sigma_v2 = 0.0;
    VectorXd w_sys;
    std::optional<SystemSchedule> schedule;

    Eigen::Index filter_length() const noexcept { return w_sys.size(); }
    VectorXd cross_correlation() const { return r * w_sys; }
};

SignalModel white_input_model(const VectorXd& w_sys, double sigma_v2);
SignalModel ar1_input_model(const VectorXd& w_sys, double rho, double sigma_v2);

/// Noise variance giving the requested SNR, SNR = w^T R w / sigma_v^2.
double noise_variance_for_snr(const SignalModel& model, double snr_db);

/// argmin (w - h)^T R (w - h) subject to C^T w = z, with h = R^{-1} p:
///   w_o = h + R^{-1} C (C^T R^{-1} C)^{-1} (z - C^T h)
/// Throws RankError when R or C^T R^{-1} C is singular.
VectorXd optimal_constrained_wiener(const SignalModel& model, const ConstraintSet& cs);

}  // namespace clmls
