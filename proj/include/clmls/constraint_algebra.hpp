#pragma once

#include <complex>
#include <span>

#include <Eigen/Dense>

namespace clmls {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/**
 * Linear equality constraints C^T w = z together with the quantities the
 * constrained updates need:
 *
 *   P = I - C (C^T C)^{-1} C^T   orthogonal projector onto null(C^T)
 *   f = C (C^T C)^{-1} z         minimum-norm point of the feasible set
 *
 * so that w -> P w + f maps any vector onto {w : C^T w = z}.
 *
 * Instances are immutable once built; use build_constraint_set() or one of
 * the named constructors below.
 */
class ConstraintSet {
public:
    const MatrixXd& constraint_matrix() const noexcept { return c_; }
    const VectorXd& constraint_values() const noexcept { return z_; }
    const MatrixXd& projector() const noexcept { return p_; }
    const VectorXd& offset() const noexcept { return f_; }

    Eigen::Index filter_length() const noexcept { return c_.rows(); }
    Eigen::Index num_constraints() const noexcept { return c_.cols(); }

    /// ||C^T w - z||_inf
    double residual(const VectorXd& w) const;

    /// Tolerance scale 1 + ||z||_inf used by every feasibility check.
    double residual_scale() const noexcept { return 1.0 + (z_.size() ? z_.cwiseAbs().maxCoeff() : 0.0); }

    /// w -> P w + f
    VectorXd project(const VectorXd& w) const;

    /// Same C, different right-hand side. Reuses P and the factorization.
    ConstraintSet with_values(const VectorXd& z) const;

private:
    friend ConstraintSet build_constraint_set(const MatrixXd& c, const VectorXd& z);

    ConstraintSet() = default;

    MatrixXd c_;
    VectorXd z_;
    MatrixXd p_;
    VectorXd f_;
    // Thin SVD factors of C, kept so with_values() can recompute f.
    MatrixXd u_;
    VectorXd sigma_;
    MatrixXd v_;
};

/// Throws DimensionError when K == 0, K >= L or z has the wrong length, and
/// RankError when cond(C^T C) >= 1e12.
ConstraintSet build_constraint_set(const MatrixXd& c, const VectorXd& z);

/// Symmetric impulse response w_i = w_{L-1-i}. Even L: [I; -J]; odd L: [I; 0; -J].
ConstraintSet linear_phase_constraints(Eigen::Index filter_length);

ConstraintSet beamforming_constraints(const MatrixXd& steering_vectors, const VectorXd& gains);

/// Real-valued form of a uniform linear array's steering constraints.
///
/// Complex weights over `num_sensors` elements are represented by the real
/// vector [Re w; Im w] of length 2*num_sensors. Each look direction with
/// complex gain g contributes two real constraints (real and imaginary parts
/// of a^H w = g), i.e. the columns [Re a; Im a] and [-Im a; Re a].
/// `spacing` is the element spacing in wavelengths.
struct RealSteering {
    MatrixXd steering;  // 2M x 2K
    VectorXd gains;     // 2K
};

RealSteering ula_steering_real(Eigen::Index num_sensors,
                               std::span<const double> angles_rad,
                               std::span<const std::complex<double>> gains,
                               double spacing = 0.5);

/// Column-stacking vectorization.
VectorXd vec(const MatrixXd& m);

/// Inverse of vec() for a square matrix.
MatrixXd unvec(const VectorXd& v);

/// Kronecker product; block (i,j) is a(i,j) * b.
MatrixXd kron(const MatrixXd& a, const MatrixXd& b);

}  // namespace clmls
