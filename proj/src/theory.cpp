#include "clmls/theory.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/Eigenvalues>

#include "clmls/errors.hpp"

namespace clmls {

namespace {

// Below this value of t = alpha * sigma_e^2 the integrands are analytic in a
// wide strip around the real axis and Gauss-Hermite converges to machine
// precision. Above it the poles at +-i/sqrt(t) approach the axis, so the
// erfc-based expressions are used instead; they are cancellation-free there.
constexpr double kQuadratureSwitch = 0.5;
constexpr std::size_t kHermitePoints = 160;

const GaussHermiteRule& default_rule()
{
    static const GaussHermiteRule rule = gauss_hermite_rule(kHermitePoints);
    return rule;
}

void check_model(const GaussianErrorModel& model)
{
    if (!(model.sigma_e2 >= 0.0) || !std::isfinite(model.sigma_e2)) {
        throw std::invalid_argument("error variance must be finite and non-negative, got "
                                    + std::to_string(model.sigma_e2));
    }
    if (!(model.alpha > 0.0)) {
        throw std::invalid_argument("alpha must be positive, got " + std::to_string(model.alpha));
    }
}

// Moments of a standard normal x with t = alpha sigma_e^2:
//   G(t) = E[t x^4 / (1 + t x^2)]          (h_G = G)
//   U(t) = E[t^2 x^6 / (1 + t x^2)^2]      (h_U = sigma_e^2 U)
struct ScaledMoments {
    double g;
    double u;
};

ScaledMoments moments_by_quadrature(double t)
{
    const auto& rule = default_rule();
    double g = 0.0;
    double u = 0.0;
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
        const double x2 = rule.nodes[i] * rule.nodes[i];
        const double y = t * x2;
        const double ratio = y / (1.0 + y);
        g += rule.weights[i] * x2 * ratio;
        u += rule.weights[i] * x2 * ratio * ratio;
    }
    return {g, u};
}

ScaledMoments moments_closed_form(double t)
{
    // With a = 1/(2t):
    //   I0 = E[1/(1+t x^2)]   = sqrt(pi a) e^a erfc(sqrt a)
    //   I1 = E[1/(1+t x^2)^2] = I0/2 - a I0 + a
    const double a = 0.5 / t;
    const double i0 = std::sqrt(std::numbers::pi * a) * std::exp(a) * std::erfc(std::sqrt(a));
    const double i1 = 0.5 * i0 - a * i0 + a;
    return {1.0 - (1.0 - i0) / t, 1.0 - (2.0 - 3.0 * i0 + i1) / t};
}

ScaledMoments scaled_moments(double t)
{
    return t <= kQuadratureSwitch ? moments_by_quadrature(t) : moments_closed_form(t);
}

MatrixXd pseudo_inverse_sym(const MatrixXd& m)
{
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(m);
    const VectorXd& lambda = eig.eigenvalues();
    const double cutoff = 1e-10 * std::max(lambda.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
    VectorXd inv = VectorXd::Zero(lambda.size());
    for (Eigen::Index i = 0; i < lambda.size(); ++i) {
        if (std::abs(lambda(i)) > cutoff) {
            inv(i) = 1.0 / lambda(i);
        }
    }
    return eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
}

void check_square(const MatrixXd& r, const MatrixXd& p)
{
    if (r.rows() != r.cols() || p.rows() != p.cols() || r.rows() != p.rows()) {
        throw DimensionError("R and P must be square matrices of equal size");
    }
}

}  // namespace

GaussHermiteRule gauss_hermite_rule(std::size_t n)
{
    if (n == 0) {
        throw std::invalid_argument("Gauss-Hermite rule needs at least one point");
    }
    // Jacobi matrix of the probabilists' Hermite polynomials.
    const auto size = static_cast<Eigen::Index>(n);
    MatrixXd jacobi = MatrixXd::Zero(size, size);
    for (Eigen::Index k = 1; k < size; ++k) {
        jacobi(k, k - 1) = jacobi(k - 1, k) = std::sqrt(static_cast<double>(k));
    }
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(jacobi);
    GaussHermiteRule rule;
    rule.nodes.resize(n);
    rule.weights.resize(n);
    for (Eigen::Index i = 0; i < size; ++i) {
        rule.nodes[static_cast<std::size_t>(i)] = eig.eigenvalues()(i);
        const double v0 = eig.eigenvectors()(0, i);
        rule.weights[static_cast<std::size_t>(i)] = v0 * v0;
    }
    return rule;
}

double h_g(const GaussianErrorModel& model)
{
    check_model(model);
    if (model.sigma_e2 == 0.0) {
        return 0.0;
    }
    return scaled_moments(model.alpha * model.sigma_e2).g;
}

double h_u(const GaussianErrorModel& model)
{
    check_model(model);
    if (model.sigma_e2 == 0.0) {
        return 0.0;
    }
    return model.sigma_e2 * scaled_moments(model.alpha * model.sigma_e2).u;
}

VarianceTransition variance_transition(const MatrixXd& r, const MatrixXd& p, double mu, double hg, double hu)
{
    check_square(r, p);
    const auto l = r.rows();
    const MatrixXd prp = p * r * p;
    VarianceTransition out;
    out.f = MatrixXd::Identity(l * l, l * l) - 2.0 * mu * hg * kron(prp.transpose(), MatrixXd::Identity(l, l));
    out.drive = (mu * mu * hu) * (kron(p, p) * vec(r));
    return out;
}

TheoryTrace transient_predictor(const SignalModel& scenario, const ConstraintSet& cs, const AlgorithmParams& params,
                                const VectorXd& w0, std::size_t iterations)
{
    if (iterations < 1) {
        throw std::invalid_argument("transient_predictor needs at least one iteration");
    }
    const auto l = scenario.filter_length();
    if (cs.filter_length() != l || w0.size() != l || scenario.r.rows() != l) {
        throw DimensionError("scenario, constraint set and initial weights disagree on the filter length");
    }

    const MatrixXd& p = cs.projector();
    const MatrixXd& r = scenario.r;
    const VectorXd deviation0 = p * (optimal_constrained_wiener(scenario, cs) - w0);

    // F(n)^T = I - 2 mu hG(n) K with K = (P R P) kron I; gamma = vec(P R P).
    const MatrixXd prp = p * r * p;
    const MatrixXd k = kron(prp, MatrixXd::Identity(l, l));
    const VectorXd gamma = kron(p, p) * vec(r);
    const double mu = params.mu;

    TheoryTrace trace;
    trace.msd.reserve(iterations + 1);
    trace.emse.reserve(iterations + 1);

    MatrixXd phi = deviation0 * deviation0.transpose();
    VectorXd sigma = vec(phi);
    VectorXd next(sigma.size());
    for (std::size_t n = 0;; ++n) {
        const double msd = phi.trace();
        const double emse = (r * phi).trace();
        if (!std::isfinite(msd) || !std::isfinite(emse)) {
            throw DivergenceError(n, "theoretical weight-error correlation diverged");
        }
        trace.msd.push_back(msd);
        trace.emse.push_back(emse);
        if (n == iterations) {
            break;
        }

        const GaussianErrorModel error_model{std::max(emse, 0.0) + scenario.sigma_v2, params.alpha};
        const double hg = h_g(error_model);
        const double hu = h_u(error_model);
        next = sigma;
        next.noalias() -= (2.0 * mu * hg) * (k * sigma);
        next.noalias() += (mu * mu * hu) * gamma;

        phi = unvec(next);
        phi = 0.5 * (phi + phi.transpose()).eval();
        sigma = vec(phi);
    }
    trace.weight_correlation = phi;
    return trace;
}

SteadyStatePrediction steady_state_emse(const SignalModel& scenario, const ConstraintSet& cs,
                                        const AlgorithmParams& params)
{
    const auto l = scenario.filter_length();
    if (cs.filter_length() != l || scenario.r.rows() != l) {
        throw DimensionError("scenario and constraint set disagree on the filter length");
    }
    const MatrixXd& p = cs.projector();
    const MatrixXd& r = scenario.r;
    const MatrixXd identity = MatrixXd::Identity(l, l);

    // S = (P R P) kron I is singular on the constraint directions; its
    // pseudo-inverse is (P R P)^+ kron I.
    const MatrixXd s_pinv = kron(pseudo_inverse_sym(p * r * p), identity);
    const VectorXd gamma = kron(p, p) * vec(r);
    const double beta = gamma.dot(s_pinv * vec(r));
    const double beta_identity = gamma.dot(s_pinv * vec(identity));

    const double s2 = scenario.sigma_v2;
    const double q = 5.0 * params.alpha * params.mu * beta;

    SteadyStatePrediction out;
    out.beta_factor = beta;
    out.discriminant = 1.0 - 2.0 * q * s2;
    if (out.discriminant < 0.0) {
        out.valid = false;
        out.emse = std::numeric_limits<double>::quiet_NaN();
        out.msd = std::numeric_limits<double>::quiet_NaN();
        out.hg_ss = std::numeric_limits<double>::quiet_NaN();
        out.hu_ss = std::numeric_limits<double>::quiet_NaN();
        return out;
    }
    // (1 - q s2 - sqrt(1 - 2 q s2)) / q, rationalized so that q -> 0 is benign.
    out.emse = q * s2 * s2 / (1.0 - q * s2 + std::sqrt(out.discriminant));
    const double sigma_e2 = out.emse + s2;
    out.msd = 2.5 * params.mu * params.alpha * sigma_e2 * sigma_e2 * beta_identity;
    out.hg_ss = 3.0 * params.alpha * sigma_e2;
    out.hu_ss = 15.0 * params.alpha * params.alpha * sigma_e2 * sigma_e2 * sigma_e2;
    return out;
}

}  // namespace clmls
