#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "clmls/constraint_algebra.hpp"
#include "clmls/filter_kernels.hpp"
#include "clmls/signal_model.hpp"

namespace clmls {

/// Zero-mean Gaussian estimation error of variance sigma_e2 fed through the
/// logarithmic-cost non-linearity with parameter alpha.
struct GaussianErrorModel {
    double sigma_e2 = 0.0;
    double alpha = 1.0;
};

/// Nodes and weights integrating against the standard normal density.
struct GaussHermiteRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// Golub-Welsch rule with `n` points; exact for polynomials of degree < 2n.
GaussHermiteRule gauss_hermite_rule(std::size_t n);

/// h_G = E[e g(e)] / E[e^2] = E[alpha e^4 / (1 + alpha e^2)] / sigma_e2, in [0, 1).
double h_g(const GaussianErrorModel& model);

/// h_U = E[g(e)^2] = E[alpha^2 e^6 / (1 + alpha e^2)^2], in [0, sigma_e2).
double h_u(const GaussianErrorModel& model);

struct VarianceTransition {
    MatrixXd f;      // L^2 x L^2
    VectorXd drive;  // mu^2 hU vec(P R P)
};

/// Weighted-variance map Sigma -> Sigma - 2 mu hG Sigma P R P in column-stacked
/// coordinates: F = I - 2 mu hG ((P R P)^T kron I), drive = mu^2 hU (P kron P) vec(R).
VarianceTransition variance_transition(const MatrixXd& r, const MatrixXd& p, double mu, double hg, double hu);

struct TheoryTrace {
    std::vector<double> msd;    // E||w_o - w(n)||^2,   n = 0..N
    std::vector<double> emse;   // E||w_o - w(n)||_R^2, n = 0..N
    MatrixXd weight_correlation; // Phi(N)
};

/// Iterates vec Phi(n+1) = F(n)^T vec Phi(n) + mu^2 hU(n) gamma with hG/hU
/// evaluated at sigma_e^2(n) = tr(R Phi(n)) + sigma_v^2. The initial deviation
/// w_o - w0 is projected onto range(P) first.
/// Throws DivergenceError at the first non-finite tr(Phi).
TheoryTrace transient_predictor(const SignalModel& scenario, const ConstraintSet& cs, const AlgorithmParams& params,
                                const VectorXd& w0, std::size_t iterations);

struct SteadyStatePrediction {
    double emse = 0.0;          // zeta(inf), minus root
    double msd = 0.0;           // xi(inf)
    double beta_factor = 0.0;   // gamma^T S^+ vec(R)
    double hg_ss = 0.0;         // 3 alpha sigma_e^2
    double hu_ss = 0.0;         // 15 alpha^2 sigma_e^6
    double discriminant = 0.0;  // 1 - 10 alpha mu beta sigma_v^2
    bool valid = true;          // false when the discriminant is negative
};

/// Closed-form steady state under the small-alpha*sigma_e^2 approximation
/// (h_G ~ 3 alpha sigma_e^2, h_U ~ 15 alpha^2 sigma_e^6). A negative
/// discriminant is reported through `valid`, with emse and msd set to NaN.
SteadyStatePrediction steady_state_emse(const SignalModel& scenario, const ConstraintSet& cs,
                                        const AlgorithmParams& params);

}  // namespace clmls
