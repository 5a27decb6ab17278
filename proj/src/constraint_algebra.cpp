#include "clmls/constraint_algebra.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "clmls/errors.hpp"

namespace clmls {

namespace {

// cond(C^T C) = cond(C)^2 must stay below 1e12.
constexpr double kMinSingularRatio = 1e-6;

}  // namespace

double ConstraintSet::residual(const VectorXd& w) const
{
    if (w.size() != c_.rows()) {
        throw DimensionError("residual: weight length " + std::to_string(w.size()) + " != filter length "
                             + std::to_string(c_.rows()));
    }
    return (c_.transpose() * w - z_).cwiseAbs().maxCoeff();
}

VectorXd ConstraintSet::project(const VectorXd& w) const
{
    if (w.size() != c_.rows()) {
        throw DimensionError("project: weight length " + std::to_string(w.size()) + " != filter length "
                             + std::to_string(c_.rows()));
    }
    return p_ * w + f_;
}

ConstraintSet ConstraintSet::with_values(const VectorXd& z) const
{
    if (z.size() != c_.cols()) {
        throw DimensionError("with_values: expected " + std::to_string(c_.cols()) + " constraint values, got "
                             + std::to_string(z.size()));
    }
    ConstraintSet out = *this;
    out.z_ = z;
    // f = C (C^T C)^{-1} z = U S^{-1} V^T z
    out.f_ = u_ * (v_.transpose() * z).cwiseQuotient(sigma_);
    return out;
}

ConstraintSet build_constraint_set(const MatrixXd& c, const VectorXd& z)
{
    const auto rows = c.rows();
    const auto cols = c.cols();
    if (cols == 0) {
        throw DimensionError("constraint matrix has no columns (K = 0)");
    }
    if (cols >= rows) {
        throw DimensionError("need fewer constraints than taps: K = " + std::to_string(cols)
                             + ", L = " + std::to_string(rows));
    }
    if (z.size() != cols) {
        throw DimensionError("constraint values have length " + std::to_string(z.size()) + ", expected K = "
                             + std::to_string(cols));
    }
    if (!c.allFinite() || !z.allFinite()) {
        throw std::invalid_argument("constraint matrix and values must be finite");
    }

    Eigen::JacobiSVD<MatrixXd> svd(c, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const VectorXd& sv = svd.singularValues();
    const double largest = sv(0);
    Eigen::Index rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
        if (largest > 0.0 && sv(i) > kMinSingularRatio * largest) {
            ++rank;
        }
    }
    if (rank < cols) {
        const auto deficient = static_cast<std::size_t>(cols - rank);
        throw RankError(deficient, static_cast<std::size_t>(cols),
                        "constraint matrix is rank deficient: " + std::to_string(deficient) + " of "
                            + std::to_string(cols) + " columns are linearly dependent (cond(C^T C) >= 1e12)");
    }

    ConstraintSet cs;
    cs.c_ = c;
    cs.z_ = z;
    cs.u_ = svd.matrixU();
    cs.sigma_ = sv;
    cs.v_ = svd.matrixV();

    MatrixXd p = MatrixXd::Identity(rows, rows);
    p.noalias() -= cs.u_ * cs.u_.transpose();
    cs.p_ = 0.5 * (p + p.transpose());
    cs.f_ = cs.u_ * (cs.v_.transpose() * z).cwiseQuotient(sv);
    return cs;
}

ConstraintSet linear_phase_constraints(Eigen::Index filter_length)
{
    if (filter_length < 2) {
        throw DimensionError("linear-phase constraints need L >= 2, got " + std::to_string(filter_length));
    }
    const Eigen::Index half = filter_length / 2;
    MatrixXd c = MatrixXd::Zero(filter_length, half);
    for (Eigen::Index i = 0; i < half; ++i) {
        c(i, i) = 1.0;
        c(filter_length - 1 - i, i) = -1.0;
    }
    // For odd L the middle row stays zero.
    return build_constraint_set(c, VectorXd::Zero(half));
}

ConstraintSet beamforming_constraints(const MatrixXd& steering_vectors, const VectorXd& gains)
{
    return build_constraint_set(steering_vectors, gains);
}

RealSteering ula_steering_real(Eigen::Index num_sensors,
                               std::span<const double> angles_rad,
                               std::span<const std::complex<double>> gains,
                               double spacing)
{
    if (num_sensors < 1) {
        throw DimensionError("array needs at least one sensor");
    }
    if (angles_rad.size() != gains.size()) {
        throw DimensionError("one gain per look direction is required");
    }
    const auto looks = static_cast<Eigen::Index>(angles_rad.size());
    RealSteering out{MatrixXd::Zero(2 * num_sensors, 2 * looks), VectorXd::Zero(2 * looks)};
    for (Eigen::Index k = 0; k < looks; ++k) {
        const double phase_step = 2.0 * std::numbers::pi * spacing * std::sin(angles_rad[k]);
        for (Eigen::Index m = 0; m < num_sensors; ++m) {
            const double re = std::cos(phase_step * static_cast<double>(m));
            const double im = -std::sin(phase_step * static_cast<double>(m));
            // Re(a^H w) = Re(a)^T Re(w) + Im(a)^T Im(w)
            out.steering(m, 2 * k) = re;
            out.steering(num_sensors + m, 2 * k) = im;
            // Im(a^H w) = Re(a)^T Im(w) - Im(a)^T Re(w)
            out.steering(m, 2 * k + 1) = -im;
            out.steering(num_sensors + m, 2 * k + 1) = re;
        }
        out.gains(2 * k) = gains[k].real();
        out.gains(2 * k + 1) = gains[k].imag();
    }
    return out;
}

VectorXd vec(const MatrixXd& m)
{
    return Eigen::Map<const VectorXd>(m.data(), m.size());
}

MatrixXd unvec(const VectorXd& v)
{
    const auto n = static_cast<Eigen::Index>(std::llround(std::sqrt(static_cast<double>(v.size()))));
    if (n * n != v.size()) {
        throw DimensionError("unvec: length " + std::to_string(v.size()) + " is not a perfect square");
    }
    return Eigen::Map<const MatrixXd>(v.data(), n, n);
}

MatrixXd kron(const MatrixXd& a, const MatrixXd& b)
{
    MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
        }
    }
    return out;
}

}  // namespace clmls
