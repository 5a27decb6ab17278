#include "clmls/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "clmls/errors.hpp"

namespace clmls {

namespace {

constexpr std::size_t kTrialsPerChunk = 16;
constexpr std::size_t kResidualCheckPeriod = 100;

}  // namespace

// ---------------------------------------------------------------------------
// Signal model

std::size_t SystemSchedule::segment_at(std::size_t n) const noexcept
{
    std::size_t k = 0;
    while (k + 1 < starts.size() && starts[k + 1] <= n) {
        ++k;
    }
    return k;
}

SignalModel white_input_model(const VectorXd& w_sys, double sigma_v2)
{
    if (sigma_v2 < 0.0) {
        throw std::invalid_argument("noise variance must be non-negative");
    }
    SignalModel m;
    m.r = MatrixXd::Identity(w_sys.size(), w_sys.size());
    m.input_kind = InputKind::White;
    m.sigma_v2 = sigma_v2;
    m.w_sys = w_sys;
    return m;
}

SignalModel ar1_input_model(const VectorXd& w_sys, double rho, double sigma_v2)
{
    if (!(std::abs(rho) < 1.0)) {
        throw std::invalid_argument("AR(1) coefficient must satisfy |rho| < 1");
    }
    if (sigma_v2 < 0.0) {
        throw std::invalid_argument("noise variance must be non-negative");
    }
    const auto l = w_sys.size();
    SignalModel m;
    m.r.resize(l, l);
    for (Eigen::Index i = 0; i < l; ++i) {
        for (Eigen::Index j = 0; j < l; ++j) {
            m.r(i, j) = std::pow(rho, static_cast<double>(std::abs(i - j)));
        }
    }
    m.input_kind = InputKind::Ar1;
    m.rho = rho;
    m.sigma_v2 = sigma_v2;
    m.w_sys = w_sys;
    return m;
}

double noise_variance_for_snr(const SignalModel& model, double snr_db)
{
    const double signal_power = model.w_sys.dot(model.r * model.w_sys);
    return signal_power * std::pow(10.0, -snr_db / 10.0);
}

VectorXd optimal_constrained_wiener(const SignalModel& model, const ConstraintSet& cs)
{
    const auto l = model.filter_length();
    if (model.r.rows() != l || model.r.cols() != l || cs.filter_length() != l) {
        throw DimensionError("optimal_constrained_wiener: dimensions disagree");
    }
    Eigen::LDLT<MatrixXd> r_fact(model.r);
    const VectorXd pivots = r_fact.vectorD();
    if (r_fact.info() != Eigen::Success || !(pivots.minCoeff() > 1e-14 * pivots.cwiseAbs().maxCoeff())) {
        throw RankError(1, static_cast<std::size_t>(l), "input covariance R is singular");
    }
    const MatrixXd& c = cs.constraint_matrix();
    const VectorXd h = r_fact.solve(model.cross_correlation());
    const MatrixXd r_inv_c = r_fact.solve(c);
    Eigen::LDLT<MatrixXd> gram(c.transpose() * r_inv_c);
    if (gram.info() != Eigen::Success || gram.rcond() < 1e-14) {
        throw RankError(1, static_cast<std::size_t>(c.cols()), "C^T R^{-1} C is singular");
    }
    return h + r_inv_c * gram.solve(cs.constraint_values() - c.transpose() * h);
}

// ---------------------------------------------------------------------------
// Signals

double to_db(double power_ratio) noexcept
{
    if (!(power_ratio > 0.0)) {
        return std::isnan(power_ratio) ? power_ratio : kDbFloor;
    }
    return std::max(10.0 * std::log10(power_ratio), kDbFloor);
}

double normalized_msd_db(const VectorXd& w, const VectorXd& w_opt)
{
    const double ref = w_opt.squaredNorm();
    if (!(ref > 0.0)) {
        throw std::invalid_argument("normalized MSD needs a nonzero reference solution");
    }
    if (w.size() != w_opt.size()) {
        throw DimensionError("normalized_msd_db: length mismatch");
    }
    return to_db((w_opt - w).squaredNorm() / ref);
}

VectorXd random_symmetric_system(Eigen::Index filter_length, std::uint64_t seed)
{
    if (filter_length < 1) {
        throw DimensionError("system length must be positive");
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    VectorXd w(filter_length);
    for (Eigen::Index i = 0; i < (filter_length + 1) / 2; ++i) {
        w(i) = normal(rng);
        w(filter_length - 1 - i) = w(i);
    }
    return w / w.norm();
}

SystemSchedule sparse_system_schedule(Eigen::Index filter_length, std::size_t horizon, std::uint64_t seed)
{
    if (filter_length < 1) {
        throw DimensionError("system length must be positive");
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    VectorXd base(filter_length);
    for (Eigen::Index i = 0; i < filter_length; ++i) {
        base(i) = normal(rng);
    }
    std::vector<Eigen::Index> order(static_cast<std::size_t>(filter_length));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::shuffle(order.begin(), order.end(), rng);

    SystemSchedule schedule;
    const double levels[] = {0.0, 0.5, 0.9};
    for (double level : levels) {
        const auto zeros = static_cast<std::size_t>(std::floor(level * static_cast<double>(filter_length) + 0.5));
        VectorXd w = base;
        for (std::size_t k = 0; k < zeros; ++k) {
            w(order[k]) = 0.0;
        }
        schedule.systems.push_back(w / w.norm());
    }
    schedule.starts = {0, horizon / 3, 2 * horizon / 3};
    return schedule;
}

SignalSource::SignalSource(const SignalModel& model, std::uint64_t seed)
    : model_(&model)
    , rng_(seed)
    , line_(VectorXd::Zero(model.filter_length()))
    , noise_std_(std::sqrt(model.sigma_v2))
{
    // Start from a stationary, fully populated delay line.
    last_ = normal_(rng_);
    const auto l = line_.size();
    if (l > 0) {
        line_(l - 1) = last_;
        for (Eigen::Index i = l - 2; i >= 0; --i) {
            line_(i) = next_stream_sample();
        }
    }
}

double SignalSource::next_stream_sample()
{
    const double xi = normal_(rng_);
    if (model_->input_kind == InputKind::Ar1) {
        const double rho = model_->rho;
        last_ = rho * last_ + std::sqrt(1.0 - rho * rho) * xi;
    } else {
        last_ = xi;
    }
    return last_;
}

void SignalSource::next(VectorXd& u, double& d)
{
    u = line_;
    const VectorXd& w = model_->schedule ? model_->schedule->system_at(n_) : model_->w_sys;
    d = w.dot(u) + noise_std_ * normal_(rng_);
    // Shift for the next call.
    for (Eigen::Index i = line_.size() - 1; i > 0; --i) {
        line_(i) = line_(i - 1);
    }
    if (line_.size() > 0) {
        line_(0) = next_stream_sample();
    }
    ++n_;
}

Signals generate_signals(const SignalModel& model, std::size_t length, std::uint64_t seed)
{
    if (length < 1) {
        throw std::invalid_argument("signal length must be at least 1");
    }
    SignalSource source(model, seed);
    Signals out;
    out.inputs.reserve(length);
    out.desired.reserve(length);
    VectorXd u;
    double d = 0.0;
    for (std::size_t n = 0; n < length; ++n) {
        source.next(u, d);
        out.inputs.push_back(u);
        out.desired.push_back(d);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Monte-Carlo runner

Window final_window(std::size_t horizon) noexcept
{
    const std::size_t len = std::max<std::size_t>(1, horizon / 10);
    return {horizon - std::min(len, horizon), horizon};
}

namespace {

// Per-segment quantities shared by all trials.
struct Segment {
    std::size_t start = 0;
    std::optional<ConstraintSet> cs;
    VectorXd reference;
    double reference_norm2 = 1.0;
    double budget = 0.0;
};

std::vector<Segment> prepare_segments(const Scenario& scenario, Algorithm algorithm, const AlgorithmParams& params,
                                      const MonteCarloOptions& options)
{
    const SignalModel& model = scenario.model;
    std::vector<VectorXd> systems;
    std::vector<std::size_t> starts;
    if (model.schedule) {
        systems = model.schedule->systems;
        starts = model.schedule->starts;
    } else {
        systems = {model.w_sys};
        starts = {0};
    }

    std::vector<Segment> segments;
    for (std::size_t k = 0; k < systems.size(); ++k) {
        Segment seg;
        seg.start = starts[k];
        SignalModel local = model;
        local.w_sys = systems[k];
        local.schedule.reset();
        if (is_constrained(algorithm)) {
            if (!scenario.constraints) {
                throw std::invalid_argument(std::string(algorithm_name(algorithm)) + " needs constraints");
            }
            seg.cs = model.schedule ? scenario.constraints->with_values(
                                          scenario.constraints->constraint_matrix().transpose() * systems[k])
                                    : *scenario.constraints;
            seg.reference = optimal_constrained_wiener(local, *seg.cs);
        } else {
            seg.reference = local.r.ldlt().solve(local.cross_correlation());
        }
        seg.reference_norm2 = seg.reference.squaredNorm();
        if (!(seg.reference_norm2 > 0.0)) {
            throw std::invalid_argument("reference solution is zero; normalized MSD is undefined");
        }
        seg.budget = options.budget ? *options.budget : default_budget(algorithm, seg.reference, params.beta_slope);
        segments.push_back(std::move(seg));
    }
    return segments;
}

struct ChunkResult {
    std::vector<double> msd_sum;
    std::vector<double> msd_sq_sum;
    std::vector<double> emse_sum;
    std::size_t completed = 0;
    std::size_t diverged = 0;
    std::size_t degenerate = 0;
    std::size_t clamps = 0;
    double max_residual = 0.0;
    std::string first_divergence;
    // Per completed trial, per window: mean msd and mean emse.
    std::vector<std::vector<double>> window_msd;
    std::vector<std::vector<double>> window_emse;
};

}  // namespace

RunResult run_monte_carlo(const Scenario& scenario, Algorithm algorithm, const AlgorithmParams& params,
                          const MonteCarloOptions& options)
{
    if (options.trials < 1) {
        throw std::invalid_argument("at least one trial is required");
    }
    if (options.horizon < 1) {
        throw std::invalid_argument("horizon must be at least one iteration");
    }
    const std::size_t horizon = options.horizon;
    const auto l = scenario.model.filter_length();
    const std::vector<Window> windows =
        options.windows.empty() ? std::vector<Window>{final_window(horizon)} : options.windows;
    for (const auto& win : windows) {
        if (win.begin >= win.end || win.end > horizon) {
            throw std::invalid_argument("averaging window outside the horizon");
        }
    }

    const std::vector<Segment> segments = prepare_segments(scenario, algorithm, params, options);
    const MatrixXd& r = scenario.model.r;

    const std::size_t chunks = (options.trials + kTrialsPerChunk - 1) / kTrialsPerChunk;
    std::vector<ChunkResult> results(chunks);

    auto run_trial = [&](std::size_t trial, ChunkResult& acc, std::vector<double>& msd, std::vector<double>& emse) {
        const std::uint64_t seed = options.base_seed + trial;
        SignalSource source(scenario.model, seed);
        AlgorithmParams local_params = params;
        local_params.t = segments[0].budget;
        VectorXd w0 = scenario.w_init.size() ? scenario.w_init : VectorXd::Zero(l);
        if (segments[0].cs) {
            w0 = segments[0].cs->project(w0);
        }
        AdaptiveFilter filter(algorithm, local_params, segments[0].cs ? &*segments[0].cs : nullptr, std::move(w0));

        VectorXd u(l);
        VectorXd dev(l);
        double d = 0.0;
        std::size_t seg = 0;
        double max_residual = 0.0;
        try {
            for (std::size_t n = 0; n < horizon; ++n) {
                if (seg + 1 < segments.size() && segments[seg + 1].start == n) {
                    ++seg;
                    filter.retarget(segments[seg].cs ? &*segments[seg].cs : nullptr, segments[seg].budget);
                }
                const Segment& s = segments[seg];
                dev = s.reference - filter.weights();
                msd[n] = dev.squaredNorm() / s.reference_norm2;
                emse[n] = dev.dot(r * dev);
                if (s.cs && (n % kResidualCheckPeriod == 0 || n + 1 == horizon)) {
                    max_residual = std::max(max_residual, s.cs->residual(filter.weights()) / s.cs->residual_scale());
                }
                source.next(u, d);
                filter.update(u, d);
            }
        } catch (const DivergenceError& err) {
            ++acc.diverged;
            if (acc.first_divergence.empty()) {
                acc.first_divergence = "trial " + std::to_string(trial) + ": " + err.what();
            }
            return;
        }

        ++acc.completed;
        acc.degenerate += filter.degenerate_fallbacks();
        acc.clamps += filter.budget_clamps();
        acc.max_residual = std::max(acc.max_residual, max_residual);
        for (std::size_t n = 0; n < horizon; ++n) {
            acc.msd_sum[n] += msd[n];
            acc.msd_sq_sum[n] += msd[n] * msd[n];
            acc.emse_sum[n] += emse[n];
        }
        std::vector<double> wm;
        std::vector<double> we;
        for (const auto& win : windows) {
            double sm = 0.0;
            double se = 0.0;
            for (std::size_t n = win.begin; n < win.end; ++n) {
                sm += msd[n];
                se += emse[n];
            }
            const auto len = static_cast<double>(win.end - win.begin);
            wm.push_back(sm / len);
            we.push_back(se / len);
        }
        acc.window_msd.push_back(std::move(wm));
        acc.window_emse.push_back(std::move(we));
    };

    std::atomic<std::size_t> next_chunk{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&]() {
        std::vector<double> msd(horizon);
        std::vector<double> emse(horizon);
        for (;;) {
            const std::size_t c = next_chunk.fetch_add(1);
            if (c >= chunks) {
                return;
            }
            try {
                ChunkResult& acc = results[c];
                acc.msd_sum.assign(horizon, 0.0);
                acc.msd_sq_sum.assign(horizon, 0.0);
                acc.emse_sum.assign(horizon, 0.0);
                const std::size_t first = c * kTrialsPerChunk;
                const std::size_t last = std::min(options.trials, first + kTrialsPerChunk);
                for (std::size_t trial = first; trial < last; ++trial) {
                    run_trial(trial, acc, msd, emse);
                }
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) {
                    failure = std::current_exception();
                }
                next_chunk = chunks;
                return;
            }
        }
    };

    unsigned threads = options.threads ? options.threads : std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, chunks));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned i = 0; i < threads; ++i) {
            pool.emplace_back(worker);
        }
        for (auto& t : pool) {
            t.join();
        }
    }
    if (failure) {
        std::rethrow_exception(failure);
    }

    // Deterministic reduction in chunk order.
    RunResult out;
    out.algorithm = algorithm;
    out.params = params;
    out.params.t = segments[0].budget;
    out.trials = options.trials;
    out.seed = options.base_seed;
    out.windows = windows;
    std::vector<double> msd_sum(horizon, 0.0);
    std::vector<double> msd_sq_sum(horizon, 0.0);
    std::vector<double> emse_sum(horizon, 0.0);
    std::vector<std::vector<double>> trial_window_msd;
    std::vector<std::vector<double>> trial_window_emse;
    std::size_t completed = 0;
    for (auto& chunk : results) {
        completed += chunk.completed;
        out.diverged_trials += chunk.diverged;
        out.degenerate_fallbacks += chunk.degenerate;
        out.budget_clamps += chunk.clamps;
        out.max_constraint_residual = std::max(out.max_constraint_residual, chunk.max_residual);
        if (out.first_divergence.empty()) {
            out.first_divergence = chunk.first_divergence;
        }
        if (chunk.completed == 0) {
            continue;
        }
        for (std::size_t n = 0; n < horizon; ++n) {
            msd_sum[n] += chunk.msd_sum[n];
            msd_sq_sum[n] += chunk.msd_sq_sum[n];
            emse_sum[n] += chunk.emse_sum[n];
        }
        for (auto& v : chunk.window_msd) {
            trial_window_msd.push_back(std::move(v));
        }
        for (auto& v : chunk.window_emse) {
            trial_window_emse.push_back(std::move(v));
        }
    }
    if (completed == 0) {
        throw EnsembleDivergedError("all " + std::to_string(options.trials) + " trials of "
                                 + std::string(algorithm_name(algorithm)) + " diverged; first: "
                                 + out.first_divergence);
    }

    const auto count = static_cast<double>(completed);
    out.msd.resize(horizon);
    out.msd_db.resize(horizon);
    out.msd_se.resize(horizon);
    out.emse.resize(horizon);
    for (std::size_t n = 0; n < horizon; ++n) {
        const double mean = msd_sum[n] / count;
        out.msd[n] = mean;
        out.msd_db[n] = to_db(mean);
        out.emse[n] = emse_sum[n] / count;
        const double var = completed > 1 ? std::max(0.0, (msd_sq_sum[n] - count * mean * mean) / (count - 1.0)) : 0.0;
        out.msd_se[n] = std::sqrt(var / count);
    }
    for (std::size_t k = 0; k < windows.size(); ++k) {
        double sum = 0.0;
        double sum_e = 0.0;
        for (std::size_t t = 0; t < trial_window_msd.size(); ++t) {
            sum += trial_window_msd[t][k];
            sum_e += trial_window_emse[t][k];
        }
        const double mean = sum / count;
        double ss = 0.0;
        for (const auto& v : trial_window_msd) {
            ss += (v[k] - mean) * (v[k] - mean);
        }
        out.window_msd.push_back(mean);
        out.window_emse.push_back(sum_e / count);
        out.window_msd_se.push_back(completed > 1 ? std::sqrt(ss / (count - 1.0) / count) : 0.0);
    }
    return out;
}

std::size_t iterations_to_plateau(const std::vector<double>& curve_db, double plateau_db, double margin_db)
{
    for (std::size_t n = 0; n < curve_db.size(); ++n) {
        if (curve_db[n] <= plateau_db + margin_db) {
            return n;
        }
    }
    return curve_db.size();
}

StepSizeMatch match_step_size(double reference_msd_db, Algorithm algorithm, const Scenario& scenario,
                              const AlgorithmParams& params, const MonteCarloOptions& options,
                              const SearchBounds& bounds, double tolerance_db)
{
    if (!(bounds.mu_low > 0.0) || !(bounds.mu_high > bounds.mu_low)) {
        throw std::invalid_argument("step-size search needs 0 < mu_low < mu_high");
    }
    StepSizeMatch match;
    auto plateau = [&](double mu) {
        AlgorithmParams p = params;
        p.mu = mu;
        ++match.evaluations;
        try {
            return run_monte_carlo(scenario, algorithm, p, options).window_msd_db(0);
        } catch (const EnsembleDivergedError&) {
            // Too large a step: treat as an arbitrarily high plateau.
            return std::numeric_limits<double>::infinity();
        }
    };

    // Over a finite horizon the plateau is U-shaped in mu: too small a step
    // never converges. Scan down from mu_high by halving until the plateau
    // drops below the target; that brackets the crossing on the increasing
    // branch.
    double hi = bounds.mu_high;
    double f_hi = plateau(hi);
    if (std::abs(f_hi - reference_msd_db) <= tolerance_db) {
        match.mu = hi;
        match.plateau_db = f_hi;
        return match;
    }
    double lo = hi;
    double f_lo = f_hi;
    if (f_hi < reference_msd_db) {
        std::ostringstream msg;
        msg << "cannot match " << algorithm_name(algorithm) << " to a plateau of " << reference_msd_db
            << " dB: the largest step mu = " << hi << " already gives " << f_hi << " dB";
        throw StepSizeMatchError(hi, f_hi, hi, f_hi, msg.str());
    }
    while (f_lo > reference_msd_db) {
        if (lo <= bounds.mu_low) {
            std::ostringstream msg;
            msg << "cannot match " << algorithm_name(algorithm) << " to a plateau of " << reference_msd_db
                << " dB: mu = " << lo << " gives " << f_lo << " dB, mu = " << bounds.mu_high << " gives "
                << plateau(bounds.mu_high) << " dB";
            throw StepSizeMatchError(lo, f_lo, bounds.mu_high, f_hi, msg.str());
        }
        hi = lo;
        f_hi = f_lo;
        lo = std::max(0.5 * lo, bounds.mu_low);
        f_lo = plateau(lo);
        if (std::abs(f_lo - reference_msd_db) <= tolerance_db) {
            match.mu = lo;
            match.plateau_db = f_lo;
            return match;
        }
    }
    for (int iter = 0; iter < 60; ++iter) {
        const double mid = std::sqrt(lo * hi);
        const double f_mid = plateau(mid);
        if (std::abs(f_mid - reference_msd_db) <= tolerance_db) {
            match.mu = mid;
            match.plateau_db = f_mid;
            return match;
        }
        if (f_mid < reference_msd_db) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
            f_hi = f_mid;
        }
    }
    std::ostringstream msg;
    msg << "step-size bisection for " << algorithm_name(algorithm) << " did not reach " << tolerance_db
        << " dB; final bracket [" << lo << ", " << hi << "] gives [" << f_lo << ", " << f_hi << "] dB";
    throw StepSizeMatchError(lo, f_lo, hi, f_hi, msg.str());
}

}  // namespace clmls
