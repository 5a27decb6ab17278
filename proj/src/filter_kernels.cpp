#include "clmls/filter_kernels.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <utility>

#include "clmls/errors.hpp"

namespace clmls {

namespace {

constexpr std::array<std::pair<Algorithm, std::string_view>, 8> kNames{{
    {Algorithm::Lms, "lms"},
    {Algorithm::Lmls, "lmls"},
    {Algorithm::Clms, "clms"},
    {Algorithm::Clmls, "clmls"},
    {Algorithm::L1Clms, "l1-clms"},
    {Algorithm::L1Wclms, "l1-wclms"},
    {Algorithm::L1Clmls, "l1-clmls"},
    {Algorithm::L1Wclmls, "l1-wclmls"},
}};

void check_dims(const FilterState& state, const VectorXd& u, const ConstraintSet* cs)
{
    if (u.size() != state.w.size()) {
        throw DimensionError("input vector has length " + std::to_string(u.size()) + ", weights have length "
                             + std::to_string(state.w.size()));
    }
    if (cs != nullptr && cs->filter_length() != state.w.size()) {
        throw DimensionError("constraint set is for L = " + std::to_string(cs->filter_length())
                             + ", weights have length " + std::to_string(state.w.size()));
    }
}

double a_priori_error(const FilterState& state, const VectorXd& u, double d)
{
    const double e = d - state.w.dot(u);
    if (!std::isfinite(e)) {
        throw DivergenceError(state.n, "non-finite estimation error");
    }
    return e;
}

void check_finite(const VectorXd& w, std::size_t n)
{
    if (!w.allFinite()) {
        throw DivergenceError(n, "non-finite filter weight");
    }
}

void fill_sign(const VectorXd& w, VectorXd& s)
{
    s.resize(w.size());
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        s(i) = w(i) > 0.0 ? 1.0 : (w(i) < 0.0 ? -1.0 : 0.0);
    }
}

void fill_reweighted(const VectorXd& w, double beta, VectorXd& s)
{
    s.resize(w.size());
    const double scale = 2.0 * beta / std::numbers::pi;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        const double sgn = w(i) > 0.0 ? 1.0 : (w(i) < 0.0 ? -1.0 : 0.0);
        s(i) = scale * sgn / (beta * beta * w(i) * w(i) + 1.0);
    }
}

struct SparseScratch {
    VectorXd s;
    VectorXd ps;
    VectorXd pu;
    VectorXd tmp;
};

struct SparseOutcome {
    bool applied = false;
    double projected_norm2 = 0.0;
    double e_l1 = 0.0;
    bool clamped = false;
};

// w(n+1) = P (w + gain * P' u) + f + f_l1, in place. Leaves w untouched when
// the direction is degenerate.
SparseOutcome sparse_update(VectorXd& w, const VectorXd& u, double gain, const AlgorithmParams& params,
                            bool reweighted, const ConstraintSet& cs, SparseScratch& sc)
{
    const MatrixXd& p = cs.projector();
    if (reweighted) {
        fill_reweighted(w, params.beta_slope, sc.s);
    } else {
        fill_sign(w, sc.s);
    }
    sc.ps.noalias() = p * sc.s;
    SparseOutcome out;
    out.projected_norm2 = sc.ps.squaredNorm();
    if (!(out.projected_norm2 >= kDegenerateDirectionThreshold)) {
        return out;
    }

    const double budget_now = reweighted ? reweighted_l1_norm(w, params.beta_slope) : sc.s.dot(w);
    double e_l1 = params.t - budget_now;
    if (reweighted) {
        const double limit = params.budget_step_limit > 0.0 ? params.budget_step_limit : 1.0 / params.beta_slope;
        const double largest = std::abs(e_l1) * sc.ps.cwiseAbs().maxCoeff() / out.projected_norm2;
        if (largest > limit) {
            e_l1 *= limit / largest;
            out.clamped = true;
        }
    }

    sc.pu.noalias() = p * u;
    const double coupling = sc.s.dot(sc.pu) / out.projected_norm2;
    sc.tmp = w;
    sc.tmp.noalias() += gain * sc.pu;
    sc.tmp.noalias() -= (gain * coupling) * sc.ps;
    w.noalias() = p * sc.tmp;
    w += cs.offset();
    w.noalias() += (e_l1 / out.projected_norm2) * sc.ps;

    out.applied = true;
    out.e_l1 = e_l1;
    return out;
}

FilterState constrained_step(const FilterState& state, const VectorXd& u, double d, const AlgorithmParams& params,
                             const ConstraintSet& cs, bool log_cost)
{
    check_dims(state, u, &cs);
    const double e = a_priori_error(state, u, d);
    const double g = log_cost ? error_nonlinearity(e, params.alpha) : e;
    FilterState next{cs.projector() * (state.w + params.mu * g * u) + cs.offset(), state.n + 1};
    check_finite(next.w, state.n);
    return next;
}

FilterState unconstrained_step(const FilterState& state, const VectorXd& u, double d,
                               const AlgorithmParams& params, bool log_cost)
{
    check_dims(state, u, nullptr);
    const double e = a_priori_error(state, u, d);
    const double g = log_cost ? error_nonlinearity(e, params.alpha) : e;
    FilterState next{state.w + params.mu * g * u, state.n + 1};
    check_finite(next.w, state.n);
    return next;
}

SparseStepResult sparse_step(const FilterState& state, const VectorXd& u, double d, const AlgorithmParams& params,
                             const ConstraintSet& cs, bool log_cost, bool reweighted)
{
    check_dims(state, u, &cs);
    const double e = a_priori_error(state, u, d);
    const double g = log_cost ? error_nonlinearity(e, params.alpha) : e;

    SparseScratch sc;
    VectorXd w = state.w;
    const SparseOutcome outcome = sparse_update(w, u, params.mu * g, params, reweighted, cs, sc);
    if (!outcome.applied) {
        throw DegenerateDirectionError(outcome.projected_norm2);
    }
    check_finite(w, state.n);

    SparseStepResult result;
    result.state = FilterState{std::move(w), state.n + 1};
    const auto size = state.w.size();
    result.aux.s = sc.s;
    result.aux.p_prime = (MatrixXd::Identity(size, size) - sc.ps * sc.s.transpose() / outcome.projected_norm2)
                         * cs.projector();
    result.aux.e_l1 = outcome.e_l1;
    result.aux.f_l1 = (outcome.e_l1 / outcome.projected_norm2) * sc.ps;
    result.aux.clamped = outcome.clamped;
    return result;
}

}  // namespace

std::string_view algorithm_name(Algorithm alg) noexcept
{
    for (const auto& [a, name] : kNames) {
        if (a == alg) {
            return name;
        }
    }
    return "unknown";
}

std::optional<Algorithm> parse_algorithm(std::string_view name) noexcept
{
    for (const auto& [a, n] : kNames) {
        if (n == name) {
            return a;
        }
    }
    return std::nullopt;
}

const std::vector<Algorithm>& all_algorithms() noexcept
{
    static const std::vector<Algorithm> algs = [] {
        std::vector<Algorithm> v;
        for (const auto& entry : kNames) {
            v.push_back(entry.first);
        }
        return v;
    }();
    return algs;
}

bool is_constrained(Algorithm alg) noexcept
{
    return alg != Algorithm::Lms && alg != Algorithm::Lmls;
}

bool is_sparse(Algorithm alg) noexcept
{
    return alg == Algorithm::L1Clms || alg == Algorithm::L1Wclms || alg == Algorithm::L1Clmls
           || alg == Algorithm::L1Wclmls;
}

bool is_reweighted(Algorithm alg) noexcept
{
    return alg == Algorithm::L1Wclms || alg == Algorithm::L1Wclmls;
}

bool uses_log_cost(Algorithm alg) noexcept
{
    return alg == Algorithm::Lmls || alg == Algorithm::Clmls || alg == Algorithm::L1Clmls
           || alg == Algorithm::L1Wclmls;
}

double error_nonlinearity(double e, double alpha) noexcept
{
    const double e2 = e * e;
    return alpha * e2 * e / (1.0 + alpha * e2);
}

FilterState lms_step(const FilterState& state, const VectorXd& u, double d, const AlgorithmParams& params)
{
    return unconstrained_step(state, u, d, params, false);
}

FilterState lmls_step(const FilterState& state, const VectorXd& u, double d, const AlgorithmParams& params)
{
    return unconstrained_step(state, u, d, params, true);
}

FilterState clms_step(const FilterState& state, const VectorXd& u, double d, const AlgorithmParams& params,
                      const ConstraintSet& cs)
{
    return constrained_step(state, u, d, params, cs, false);
}

FilterState clmls_step(const FilterState& state, const VectorXd& u, double d, const AlgorithmParams& params,
                       const ConstraintSet& cs)
{
    return constrained_step(state, u, d, params, cs, true);
}

SparseStepResult l1_clms_step(const FilterState& state, const VectorXd& u, double d,
                              const AlgorithmParams& params, const ConstraintSet& cs)
{
    return sparse_step(state, u, d, params, cs, false, false);
}

SparseStepResult l1_wclms_step(const FilterState& state, const VectorXd& u, double d,
                               const AlgorithmParams& params, const ConstraintSet& cs)
{
    return sparse_step(state, u, d, params, cs, false, true);
}

SparseStepResult l1_clmls_step(const FilterState& state, const VectorXd& u, double d,
                               const AlgorithmParams& params, const ConstraintSet& cs)
{
    return sparse_step(state, u, d, params, cs, true, false);
}

SparseStepResult l1_wclmls_step(const FilterState& state, const VectorXd& u, double d,
                                const AlgorithmParams& params, const ConstraintSet& cs)
{
    return sparse_step(state, u, d, params, cs, true, true);
}

VectorXd sign_direction(const VectorXd& w)
{
    VectorXd s;
    fill_sign(w, s);
    return s;
}

VectorXd reweighted_direction(const VectorXd& w, double beta_slope)
{
    VectorXd s;
    fill_reweighted(w, beta_slope, s);
    return s;
}

double reweighted_l1_norm(const VectorXd& w, double beta_slope)
{
    double acc = 0.0;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
        acc += std::atan(beta_slope * std::abs(w(i)));
    }
    return 2.0 / std::numbers::pi * acc;
}

double default_budget(Algorithm alg, const VectorXd& w_opt, double beta_slope)
{
    if (!is_sparse(alg)) {
        return 0.0;
    }
    return is_reweighted(alg) ? reweighted_l1_norm(w_opt, beta_slope) : w_opt.lpNorm<1>();
}

AdaptiveFilter::AdaptiveFilter(Algorithm alg, const AlgorithmParams& params, const ConstraintSet* cs, VectorXd w0)
    : alg_(alg)
    , params_(params)
    , cs_(cs)
    , w_(std::move(w0))
{
    if (is_constrained(alg_)) {
        if (cs_ == nullptr) {
            throw std::invalid_argument(std::string(algorithm_name(alg_)) + " needs a constraint set");
        }
        if (cs_->filter_length() != w_.size()) {
            throw DimensionError("constraint set length does not match initial weights");
        }
    }
    tmp_.resize(w_.size());
}

void AdaptiveFilter::retarget(const ConstraintSet* cs, double budget)
{
    if (is_constrained(alg_)) {
        if (cs == nullptr || cs->filter_length() != w_.size()) {
            throw DimensionError("retarget: constraint set does not match the filter");
        }
        cs_ = cs;
        tmp_.noalias() = cs_->projector() * w_;
        w_ = tmp_ + cs_->offset();
    }
    params_.t = budget;
}

void AdaptiveFilter::update(const VectorXd& u, double d)
{
    if (u.size() != w_.size()) {
        throw DimensionError("input vector has length " + std::to_string(u.size()) + ", weights have length "
                             + std::to_string(w_.size()));
    }
    const double e = d - w_.dot(u);
    if (!std::isfinite(e)) {
        throw DivergenceError(n_, "non-finite estimation error");
    }
    const double g = uses_log_cost(alg_) ? error_nonlinearity(e, params_.alpha) : e;
    const double gain = params_.mu * g;

    bool done = false;
    if (is_sparse(alg_)) {
        SparseScratch sc{std::move(s_), std::move(ps_), std::move(pu_), std::move(tmp_)};
        const SparseOutcome outcome = sparse_update(w_, u, gain, params_, is_reweighted(alg_), *cs_, sc);
        s_ = std::move(sc.s);
        ps_ = std::move(sc.ps);
        pu_ = std::move(sc.pu);
        tmp_ = std::move(sc.tmp);
        if (outcome.applied) {
            clamps_ += outcome.clamped ? 1 : 0;
            done = true;
        } else {
            ++degenerate_;
        }
    }
    if (!done) {
        if (is_constrained(alg_)) {
            tmp_ = w_;
            tmp_.noalias() += gain * u;
            w_.noalias() = cs_->projector() * tmp_;
            w_ += cs_->offset();
        } else {
            w_.noalias() += gain * u;
        }
    }
    if (!w_.allFinite()) {
        throw DivergenceError(n_, "non-finite filter weight");
    }
    ++n_;
}

}  // namespace clmls
