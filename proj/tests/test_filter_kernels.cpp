#include <cmath>
#include <functional>
#include <random>

#include "doctest.h"

#include "clmls/errors.hpp"
#include "clmls/filter_kernels.hpp"

using namespace clmls;

namespace {

VectorXd randn(Eigen::Index n, std::mt19937_64& rng)
{
    std::normal_distribution<double> normal;
    VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        v(i) = normal(rng);
    }
    return v;
}

ConstraintSet first_tap_fixed(double value)
{
    MatrixXd c(2, 1);
    c << 1, 0;
    return build_constraint_set(c, VectorXd::Constant(1, value));
}

ConstraintSet random_constraints(Eigen::Index l, Eigen::Index k, std::mt19937_64& rng)
{
    MatrixXd c(l, k);
    for (Eigen::Index j = 0; j < k; ++j) {
        c.col(j) = randn(l, rng);
    }
    return build_constraint_set(c, randn(k, rng));
}

// Euclidean projection of v onto {x : A^T x = b}, solved through the KKT system
//   [ I   A ] [x]   [v]
//   [ A^T 0 ] [l] = [b]
VectorXd affine_projection_oracle(const VectorXd& v, const MatrixXd& a, const VectorXd& b)
{
    const auto l = v.size();
    const auto k = a.cols();
    MatrixXd kkt = MatrixXd::Zero(l + k, l + k);
    kkt.topLeftCorner(l, l).setIdentity();
    kkt.topRightCorner(l, k) = a;
    kkt.bottomLeftCorner(k, l) = a.transpose();
    VectorXd rhs(l + k);
    rhs << v, b;
    return kkt.fullPivLu().solve(rhs).head(l);
}

using SparseFn = SparseStepResult (*)(const FilterState&, const VectorXd&, double, const AlgorithmParams&,
                                      const ConstraintSet&);

}  // namespace

TEST_CASE("error non-linearity hand values")
{
    CHECK(error_nonlinearity(0.0, 0.3) == 0.0);
    CHECK(error_nonlinearity(0.0, 1e6) == 0.0);
    CHECK(error_nonlinearity(1.0, 1.0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(error_nonlinearity(10.0, 1.0) == doctest::Approx(1000.0 / 101.0).epsilon(1e-15));
}

TEST_CASE("error non-linearity properties")
{
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> loge(-6.0, 3.0);
    std::uniform_real_distribution<double> loga(-4.0, 4.0);
    for (int i = 0; i < 5000; ++i) {
        const double e = std::pow(10.0, loge(rng)) * (i % 2 ? 1.0 : -1.0);
        const double a = std::pow(10.0, loga(rng));
        const double g = error_nonlinearity(e, a);
        CHECK(error_nonlinearity(-e, a) == -g);
        CHECK(std::abs(g) <= std::min(std::abs(e), a * std::abs(e * e * e)) * (1.0 + 1e-15));
        CHECK(error_nonlinearity(e + std::abs(e) * 1e-3, a) >= g);
    }
    // Small-error cubic regime and large-error LMS-like regime.
    CHECK(error_nonlinearity(1e-4, 2.0) == doctest::Approx(2.0 * 1e-12).epsilon(1e-7));
    CHECK(error_nonlinearity(1e4, 1.0) == doctest::Approx(1e4).epsilon(1e-7));
}

TEST_CASE("unconstrained steps")
{
    AlgorithmParams p;
    p.mu = 0.5;
    p.alpha = 1.0;
    const FilterState s0{VectorXd::Zero(1), 0};
    const VectorXd u = VectorXd::Ones(1);

    const FilterState lmls = lmls_step(s0, u, 1.0, p);
    CHECK(lmls.w(0) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(lmls.n == 1);

    const FilterState lms = lms_step(s0, u, 1.0, p);
    CHECK(lms.w(0) == doctest::Approx(0.5).epsilon(1e-15));

    // Zero error leaves the weights alone.
    const FilterState s1{VectorXd::Constant(1, 2.0), 4};
    CHECK(lms_step(s1, u, 2.0, p).w == s1.w);
    CHECK(lmls_step(s1, u, 2.0, p).w == s1.w);
}

TEST_CASE("constrained steps: hand computations")
{
    const auto cs = first_tap_fixed(1.0);
    AlgorithmParams p;
    p.mu = 0.1;
    p.alpha = 1.0;
    const VectorXd u = VectorXd::Ones(2);

    SUBCASE("zero-error feasible fixed point")
    {
        const FilterState s{(VectorXd(2) << 1, 0).finished(), 0};
        CHECK(clmls_step(s, u, 1.0, p, cs).w == s.w);
        CHECK(clms_step(s, u, 1.0, p, cs).w == s.w);
    }
    SUBCASE("CLMLS, e = -2")
    {
        const FilterState s{(VectorXd(2) << 1, 1).finished(), 0};
        const auto next = clmls_step(s, u, 0.0, p, cs);
        CHECK(next.w(0) == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(next.w(1) == doctest::Approx(0.84).epsilon(1e-14));
    }
    SUBCASE("CLMS, e = -2")
    {
        const FilterState s{(VectorXd(2) << 1, 1).finished(), 0};
        const auto next = clms_step(s, u, 0.0, p, cs);
        CHECK(next.w(0) == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(next.w(1) == doctest::Approx(0.8).epsilon(1e-14));
    }
}

TEST_CASE("zero step size is the feasibility projection")
{
    std::mt19937_64 rng(2);
    const auto cs = random_constraints(6, 2, rng);
    AlgorithmParams p;
    p.mu = 0.0;
    const VectorXd w = randn(6, rng);
    const VectorXd u = randn(6, rng);
    const auto once = clmls_step({w, 0}, u, 0.7, p, cs);
    CHECK((once.w - cs.project(w)).cwiseAbs().maxCoeff() <= 1e-14);
    const auto twice = clms_step(once, u, 0.7, p, cs);
    CHECK((twice.w - once.w).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("CLMLS approaches CLMS for large alpha")
{
    std::mt19937_64 rng(3);
    const auto cs = random_constraints(5, 2, rng);
    AlgorithmParams p;
    p.mu = 0.05;
    p.alpha = 1e9;
    for (int i = 0; i < 50; ++i) {
        const FilterState s{cs.project(randn(5, rng)), 0};
        const VectorXd u = randn(5, rng);
        const double d = randn(1, rng)(0);
        const VectorXd a = clmls_step(s, u, d, p, cs).w;
        const VectorXd b = clms_step(s, u, d, p, cs).w;
        CHECK((a - b).norm() <= 1e-6 * b.norm());
        const double e = 1.0 + i;
        CHECK(std::abs(error_nonlinearity(e, 1e9) - e) <= 1e-6 * e);
    }
}

TEST_CASE("constraint preservation over many random steps")
{
    std::mt19937_64 rng(4);
    for (Algorithm alg : all_algorithms()) {
        if (!is_constrained(alg)) {
            continue;
        }
        CAPTURE(algorithm_name(alg));
        const auto cs = random_constraints(8, 3, rng);
        AlgorithmParams p;
        p.mu = 0.02;
        p.alpha = 1.0;
        p.t = 2.0;
        AdaptiveFilter filter(alg, p, &cs, cs.project(randn(8, rng)));
        const VectorXd w_true = cs.project(randn(8, rng));
        double worst = 0.0;
        for (int n = 0; n < 1000; ++n) {
            const VectorXd u = randn(8, rng);
            filter.update(u, w_true.dot(u) + 0.1 * randn(1, rng)(0));
            worst = std::max(worst, cs.residual(filter.weights()));
        }
        CHECK(worst <= 1e-10 * cs.residual_scale());
    }
}

TEST_CASE("plain l1 steps equal the projection onto both linearized constraints")
{
    std::mt19937_64 rng(5);
    const SparseFn fns[] = {l1_clms_step, l1_clmls_step};
    for (SparseFn fn : fns) {
        for (int trial = 0; trial < 100; ++trial) {
            const auto cs = random_constraints(4, 1, rng);
            AlgorithmParams p;
            p.mu = 0.1;
            p.alpha = 1.0;
            p.t = 1.0 + std::abs(randn(1, rng)(0));
            const FilterState s{cs.project(randn(4, rng)), 7};
            const VectorXd u = randn(4, rng);
            const double d = randn(1, rng)(0);
            const auto out = fn(s, u, d, p, cs);

            const VectorXd sign = sign_direction(s.w);
            CHECK(out.aux.s == sign);
            CHECK(cs.residual(out.state.w) <= 1e-9);
            CHECK(std::abs(sign.dot(out.state.w) - p.t) <= 1e-9);
            CHECK(out.aux.e_l1 == doctest::Approx(p.t - sign.dot(s.w)).epsilon(1e-12));

            const double e = d - s.w.dot(u);
            const double g = fn == l1_clmls_step ? error_nonlinearity(e, p.alpha) : e;
            MatrixXd a(4, 2);
            a << cs.constraint_matrix(), sign;
            VectorXd b(2);
            b << cs.constraint_values(), p.t;
            const VectorXd oracle = affine_projection_oracle(s.w + p.mu * g * u, a, b);
            CHECK((out.state.w - oracle).cwiseAbs().maxCoeff() <= 1e-10 * (1.0 + oracle.norm()));
            CHECK(out.state.n == 8);
        }
    }
}

TEST_CASE("sparse auxiliary quantities")
{
    std::mt19937_64 rng(6);
    const SparseFn fns[] = {l1_clms_step, l1_wclms_step, l1_clmls_step, l1_wclmls_step};
    for (SparseFn fn : fns) {
        const auto cs = random_constraints(6, 2, rng);
        AlgorithmParams p;
        p.t = 1.5;
        const FilterState s{cs.project(randn(6, rng)), 0};
        const auto out = fn(s, randn(6, rng), 0.3, p, cs);
        const MatrixXd& pp = out.aux.p_prime;
        CHECK((pp * cs.constraint_matrix()).cwiseAbs().maxCoeff() <= 1e-10);
        for (int i = 0; i < 10; ++i) {
            const VectorXd v = cs.projector() * randn(6, rng);
            CHECK(std::abs(out.aux.s.dot(pp * v)) <= 1e-10 * (1.0 + v.norm()));
        }
        const VectorXd ps = cs.projector() * out.aux.s;
        CHECK((out.aux.f_l1 - out.aux.e_l1 * ps / ps.squaredNorm()).cwiseAbs().maxCoeff() <= 1e-12);
        // The linearized budget moves by exactly the corrected deviation.
        CHECK(std::abs(out.aux.s.dot(out.state.w) - out.aux.s.dot(s.w) - out.aux.e_l1) <= 1e-9);
    }
}

TEST_CASE("reweighted step corrects the full deviation unless clamped")
{
    std::mt19937_64 rng(7);
    int unclamped = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const auto cs = random_constraints(5, 1, rng);
        AlgorithmParams p;
        p.mu = 0.05;
        p.beta_slope = 2.0;
        const FilterState s{cs.project(randn(5, rng)), 0};
        p.t = reweighted_l1_norm(s.w, p.beta_slope) + 0.01 * randn(1, rng)(0);
        const auto out = l1_wclmls_step(s, randn(5, rng), 0.2, p, cs);
        const double deviation = p.t - reweighted_l1_norm(s.w, p.beta_slope);
        const VectorXd ps = cs.projector() * out.aux.s;
        const double largest = std::abs(deviation) * ps.cwiseAbs().maxCoeff() / ps.squaredNorm();
        if (out.aux.clamped) {
            CHECK(largest > 1.0 / p.beta_slope);
            CHECK(out.aux.f_l1.cwiseAbs().maxCoeff() == doctest::Approx(1.0 / p.beta_slope).epsilon(1e-12));
            CHECK(std::abs(out.aux.e_l1) < std::abs(deviation));
        } else {
            ++unclamped;
            CHECK(out.aux.e_l1 == doctest::Approx(deviation).epsilon(1e-12));
        }
    }
    CHECK(unclamped > 100);
}

TEST_CASE("on-budget feasible zero-error points are fixed")
{
    const auto cs = first_tap_fixed(1.0);
    AlgorithmParams p;
    p.t = 1.5;
    const FilterState s{(VectorXd(2) << 1, 0.5).finished(), 0};
    const VectorXd u = (VectorXd(2) << 0.3, -0.7).finished();
    const double d = s.w.dot(u);
    for (SparseFn fn : {l1_clms_step, l1_clmls_step}) {
        const auto out = fn(s, u, d, p, cs);
        CHECK(out.aux.e_l1 == 0.0);
        CHECK((out.state.w - s.w).cwiseAbs().maxCoeff() <= 1e-15);
    }
    p.t = reweighted_l1_norm(s.w, p.beta_slope);
    for (SparseFn fn : {l1_wclms_step, l1_wclmls_step}) {
        const auto out = fn(s, u, d, p, cs);
        CHECK((out.state.w - s.w).cwiseAbs().maxCoeff() <= 1e-14);
    }
}

TEST_CASE("l1 log-cost steps approach the LMS-cost ones for large alpha")
{
    std::mt19937_64 rng(8);
    const auto cs = random_constraints(6, 2, rng);
    AlgorithmParams p;
    p.alpha = 1e9;
    p.t = 3.0;
    for (int i = 0; i < 20; ++i) {
        const FilterState s{cs.project(randn(6, rng)), 0};
        const VectorXd u = randn(6, rng);
        const double d = 2.0 + randn(1, rng)(0);
        const VectorXd a = l1_clmls_step(s, u, d, p, cs).state.w;
        const VectorXd b = l1_clms_step(s, u, d, p, cs).state.w;
        CHECK((a - b).norm() <= 1e-6 * b.norm());
        const VectorXd aw = l1_wclmls_step(s, u, d, p, cs).state.w;
        const VectorXd bw = l1_wclms_step(s, u, d, p, cs).state.w;
        CHECK((aw - bw).norm() <= 1e-6 * bw.norm());
    }
}

TEST_CASE("reweighted direction")
{
    SUBCASE("zero weights are degenerate")
    {
        CHECK(reweighted_direction(VectorXd::Zero(4), 10.0).cwiseAbs().maxCoeff() == 0.0);
        const auto cs = build_constraint_set(MatrixXd::Ones(4, 1), VectorXd::Zero(1));
        AlgorithmParams p;
        p.t = 1.0;
        CHECK_THROWS_AS(l1_wclmls_step({VectorXd::Zero(4), 0}, VectorXd::Ones(4), 1.0, p, cs),
                        DegenerateDirectionError);
        CHECK_THROWS_AS(l1_clms_step({VectorXd::Zero(4), 0}, VectorXd::Ones(4), 1.0, p, cs), DegenerateDirectionError);
    }
    SUBCASE("steep slope leaves active taps unshrunk")
    {
        VectorXd w = VectorXd::Zero(3);
        w(1) = 0.7;
        double prev = reweighted_direction(w, 1.0)(1);
        for (double beta : {10.0, 1e2, 1e4, 1e6}) {
            const double sj = reweighted_direction(w, beta)(1);
            CHECK(sj < prev);
            prev = sj;
        }
        CHECK(prev < 1e-5);
    }
    SUBCASE("shallow slope is proportional to the sign")
    {
        VectorXd w(4);
        w << 0.5, -2.0, 0.0, 1.0;
        const double beta = 1e-5;
        const VectorXd s = reweighted_direction(w, beta);
        const VectorXd expected = (2.0 * beta / 3.141592653589793) * sign_direction(w);
        CHECK((s - expected).cwiseAbs().maxCoeff() <= 1e-9 * expected.cwiseAbs().maxCoeff());
    }
    SUBCASE("direction is the gradient of the reweighted norm")
    {
        std::mt19937_64 rng(9);
        const VectorXd w = randn(5, rng);
        const VectorXd s = reweighted_direction(w, 3.0);
        for (Eigen::Index j = 0; j < 5; ++j) {
            VectorXd hi = w;
            VectorXd lo = w;
            hi(j) += 1e-6;
            lo(j) -= 1e-6;
            const double fd = (reweighted_l1_norm(hi, 3.0) - reweighted_l1_norm(lo, 3.0)) / 2e-6;
            CHECK(s(j) == doctest::Approx(fd).epsilon(1e-6));
        }
    }
}

TEST_CASE("sign direction uses sign(0) = 0")
{
    VectorXd w(4);
    w << -0.1, 0.0, 3.0, -0.0;
    CHECK(sign_direction(w) == (VectorXd(4) << -1, 0, 1, 0).finished());
}

TEST_CASE("step errors")
{
    const auto cs = first_tap_fixed(1.0);
    AlgorithmParams p;
    const FilterState s{(VectorXd(2) << 1, 0).finished(), 41};
    CHECK_THROWS_AS(clmls_step(s, VectorXd::Ones(3), 0.0, p, cs), DimensionError);
    CHECK_THROWS_AS(lms_step(s, VectorXd::Ones(1), 0.0, p), DimensionError);
    const auto cs3 = linear_phase_constraints(3);
    CHECK_THROWS_AS(clms_step(s, VectorXd::Ones(2), 0.0, p, cs3), DimensionError);
    try {
        clmls_step(s, VectorXd::Ones(2), std::nan(""), p, cs);
        FAIL("expected DivergenceError");
    } catch (const DivergenceError& e) {
        CHECK(e.iteration() == 41);
    }
    p.mu = 1e300;
    CHECK_THROWS_AS(lms_step(s, VectorXd::Constant(2, 1e10), -1e10, p), DivergenceError);
}

TEST_CASE("in-place filter matches the pure step functions")
{
    std::mt19937_64 rng(10);
    for (Algorithm alg : all_algorithms()) {
        CAPTURE(algorithm_name(alg));
        const auto cs = random_constraints(6, 2, rng);
        AlgorithmParams p;
        p.mu = 0.03;
        p.alpha = 2.0;
        p.t = 2.5;
        p.beta_slope = 4.0;
        const VectorXd w0 = is_constrained(alg) ? cs.project(randn(6, rng)) : randn(6, rng);
        AdaptiveFilter filter(alg, p, is_constrained(alg) ? &cs : nullptr, w0);
        FilterState ref{w0, 0};
        for (int n = 0; n < 200; ++n) {
            const VectorXd u = randn(6, rng);
            const double d = randn(1, rng)(0);
            filter.update(u, d);
            switch (alg) {
            case Algorithm::Lms: ref = lms_step(ref, u, d, p); break;
            case Algorithm::Lmls: ref = lmls_step(ref, u, d, p); break;
            case Algorithm::Clms: ref = clms_step(ref, u, d, p, cs); break;
            case Algorithm::Clmls: ref = clmls_step(ref, u, d, p, cs); break;
            case Algorithm::L1Clms: ref = l1_clms_step(ref, u, d, p, cs).state; break;
            case Algorithm::L1Wclms: ref = l1_wclms_step(ref, u, d, p, cs).state; break;
            case Algorithm::L1Clmls: ref = l1_clmls_step(ref, u, d, p, cs).state; break;
            case Algorithm::L1Wclmls: ref = l1_wclmls_step(ref, u, d, p, cs).state; break;
            }
        }
        CHECK((filter.weights() - ref.w).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + ref.w.norm()));
        CHECK(filter.iteration() == ref.n);
        CHECK(filter.degenerate_fallbacks() == 0);
    }
}

TEST_CASE("in-place filter falls back on a degenerate direction")
{
    const auto cs = build_constraint_set(MatrixXd::Ones(4, 1), VectorXd::Zero(1));
    AlgorithmParams p;
    p.t = 1.0;
    p.mu = 0.1;
    AdaptiveFilter filter(Algorithm::L1Clmls, p, &cs, VectorXd::Zero(4));
    const VectorXd u = (VectorXd(4) << 1, -1, 0.5, 0.2).finished();
    filter.update(u, 2.0);
    CHECK(filter.degenerate_fallbacks() == 1);
    const VectorXd expected = clmls_step({VectorXd::Zero(4), 0}, u, 2.0, p, cs).w;
    CHECK((filter.weights() - expected).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("retarget re-projects onto the new constraint values")
{
    const auto cs = build_constraint_set(MatrixXd::Ones(3, 1), VectorXd::Constant(1, 1.0));
    const auto moved = cs.with_values(VectorXd::Constant(1, -2.0));
    AdaptiveFilter filter(Algorithm::L1Clms, AlgorithmParams{}, &cs, cs.project(VectorXd::Zero(3)));
    filter.retarget(&moved, 4.0);
    CHECK(moved.residual(filter.weights()) <= 1e-14);
    CHECK(filter.params().t == 4.0);
    CHECK(filter.constraints() == &moved);
}

TEST_CASE("algorithm names round-trip")
{
    for (Algorithm a : all_algorithms()) {
        CHECK(parse_algorithm(algorithm_name(a)) == a);
    }
    CHECK_FALSE(parse_algorithm("nlms").has_value());
    CHECK(all_algorithms().size() == 8);
    CHECK(default_budget(Algorithm::Clmls, VectorXd::Ones(3), 10.0) == 0.0);
    CHECK(default_budget(Algorithm::L1Clms, (VectorXd(2) << 1, -2).finished(), 10.0) == 3.0);
}
