// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails. Criterion numbers given on the command
// line restrict the run to those criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "clmls/constraint_algebra.hpp"
#include "clmls/experiment_config.hpp"
#include "clmls/experiments.hpp"
#include "clmls/filter_kernels.hpp"
#include "clmls/simulation.hpp"
#include "clmls/theory.hpp"

using namespace clmls;
namespace fs = std::filesystem;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double v)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng)
{
    std::normal_distribution<double> normal;
    MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < rows; ++i) {
            m(i, j) = normal(rng);
        }
    }
    return m;
}

ExperimentConfig config_from(const std::string& text)
{
    std::istringstream in(text);
    return parse_config(in, "acceptance");
}

// 1. Feasibility of every constrained algorithm over 1e5 steps.
Verdict constraint_preservation()
{
    const auto t0 = std::chrono::steady_clock::now();
    const Eigen::Index l = 10;
    const Eigen::Index k = 5;
    std::mt19937_64 rng(2024);
    double worst = 0.0;
    std::string worst_alg;
    for (Algorithm alg : all_algorithms()) {
        if (!is_constrained(alg)) {
            continue;
        }
        const ConstraintSet cs = build_constraint_set(gaussian_matrix(l, k, rng), gaussian_matrix(k, 1, rng));
        const VectorXd w_sys = gaussian_matrix(l, 1, rng);
        const SignalModel model = white_input_model(w_sys, 0.01);
        AlgorithmParams p;
        p.mu = 0.01;
        p.t = default_budget(alg, optimal_constrained_wiener(model, cs), p.beta_slope);
        AdaptiveFilter filter(alg, p, &cs, cs.project(VectorXd::Zero(l)));
        SignalSource src(model, 99);
        VectorXd u;
        double d = 0.0;
        double max_res = 0.0;
        for (int n = 0; n < 100000; ++n) {
            src.next(u, d);
            filter.update(u, d);
            max_res = std::max(max_res, cs.residual(filter.weights()) / cs.residual_scale());
        }
        if (max_res >= worst) {
            worst = max_res;
            worst_alg = algorithm_name(alg);
        }
    }
    const double elapsed = seconds_since(t0);
    return {worst <= 1e-10 && elapsed < 10.0,
            "max scaled residual " + fmt("%.3g", worst) + " (" + worst_alg + "), " + fmt("%.2f", elapsed) + " s"};
}

// 2. Vec-space transition against the direct matrix formula.
Verdict variance_relation()
{
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const MatrixXd a = gaussian_matrix(3, 3, rng);
        const MatrixXd r = a * a.transpose() + 0.1 * MatrixXd::Identity(3, 3);
        const ConstraintSet cs = build_constraint_set(gaussian_matrix(3, 1 + i % 2, rng), gaussian_matrix(1 + i % 2, 1, rng));
        const MatrixXd& p = cs.projector();
        const double mu = 0.2 * unit(rng);
        const double hg = unit(rng);
        const double hu = unit(rng);
        const MatrixXd b = gaussian_matrix(3, 3, rng);
        const MatrixXd sigma = b + b.transpose();
        const VarianceTransition vt = variance_transition(r, p, mu, hg, hu);
        const MatrixXd direct = sigma - 2.0 * mu * hg * sigma * p * r * p;
        worst = std::max(worst, (unvec(vt.f * vec(sigma)) - direct).cwiseAbs().maxCoeff());
    }
    const double elapsed = seconds_since(t0);
    return {worst <= 1e-12 && elapsed < 1.0,
            "max deviation " + fmt("%.3g", worst) + ", " + fmt("%.3f", elapsed) + " s"};
}

// 3. h_G and h_U against sampled expectations and their small-alpha limits.
Verdict moment_functionals()
{
    std::mt19937_64 rng(17);
    std::normal_distribution<double> normal;
    const std::size_t samples = 10000000;
    std::vector<double> z(samples);
    for (double& v : z) {
        v = normal(rng);
    }
    bool ok = true;
    double worst = 0.0;
    for (double alpha : {0.1, 1.0, 10.0}) {
        for (double s2 : {0.01, 1.0}) {
            const double s = std::sqrt(s2);
            double eg = 0.0;
            double gg = 0.0;
            for (double v : z) {
                const double e = s * v;
                const double g = error_nonlinearity(e, alpha);
                eg += e * g;
                gg += g * g;
            }
            const double hg_mc = eg / static_cast<double>(samples) / s2;
            const double hu_mc = gg / static_cast<double>(samples);
            const GaussianErrorModel m{s2, alpha};
            const double dg = std::abs(h_g(m) / hg_mc - 1.0);
            const double du = std::abs(h_u(m) / hu_mc - 1.0);
            worst = std::max({worst, dg, du});
            ok = ok && dg <= 0.01 && du <= 0.01;
        }
    }
    double worst_limit = 0.0;
    const double alpha = 1e-4;
    for (double s2 : {0.01, 1.0}) {
        const GaussianErrorModel m{s2, alpha};
        const double dg = std::abs(h_g(m) / (3.0 * alpha * s2) - 1.0);
        const double du = std::abs(h_u(m) / (15.0 * alpha * alpha * s2 * s2 * s2) - 1.0);
        worst_limit = std::max({worst_limit, dg, du});
        ok = ok && dg <= 0.02 && du <= 0.02;
    }
    return {ok, "max relative gap to sampling " + fmt("%.4f", worst) + ", to small-alpha limits "
                    + fmt("%.2e", worst_limit)};
}

// 4. Transient theory against the simulated ensemble over an SNR sweep.
Verdict theory_vs_simulation()
{
    const auto t0 = std::chrono::steady_clock::now();
    const auto cfg = config_from("[experiment]\nid = exp2-snr\ntrials = 500\nhorizon = 5000\n"
                                 "[params]\nmu = 0.05\n[scenario]\nsnr_db = 20, 25, 30\n");
    const auto report = run_experiment(cfg);
    bool ok = report.curves.size() == 3;
    std::string detail;
    for (const auto& c : report.curves) {
        if (!c.theory) {
            return {false, c.name + ": no theoretical curve"};
        }
        const std::size_t start = cfg.horizon / 20;
        double worst = 0.0;
        const double ref2 = c.reference.squaredNorm();
        for (std::size_t n = start; n < cfg.horizon; ++n) {
            worst = std::max(worst, std::abs(c.result.msd_db[n] - to_db(c.theory->msd[n] / ref2)));
        }
        ok = ok && worst <= 1.0;
        detail += c.label + " " + fmt("%.2f", worst) + " dB; ";
    }
    const double elapsed = seconds_since(t0);
    ok = ok && elapsed < 300.0;
    return {ok, "max |simulated - theory| past 5%: " + detail + fmt("%.1f", elapsed) + " s"};
}

// 5. Simulated steady-state EMSE against the closed form.
Verdict steady_state_closed_form()
{
    const auto cfg = config_from("[experiment]\nid = exp2-mu\ntrials = 500\nhorizon = 20000\n"
                                 "[scenario]\nsnr_db = 20\nmu_list = 0.03, 0.05, 0.1\n");
    const auto report = run_experiment(cfg);
    bool ok = report.curves.size() == 3;
    std::string detail;
    for (const auto& c : report.curves) {
        if (!c.steady_state || !c.steady_state->valid) {
            return {false, c.name + ": closed form unavailable"};
        }
        const double sim = c.result.window_emse[0];
        const double gap = std::abs(sim / c.steady_state->emse - 1.0);
        ok = ok && gap <= 0.10;
        detail += c.label + " sim " + fmt("%.4g", sim) + " vs " + fmt("%.4g", c.steady_state->emse) + " ("
                  + fmt("%.1f", 100.0 * gap) + "%); ";
    }
    return {ok, detail};
}

// 6. Matched-plateau convergence race, CLMLS against CLMS.
Verdict performance_ordering()
{
    bool ok = true;
    std::string detail;
    for (int seed : {1, 2, 3}) {
        const auto cfg = config_from("[experiment]\nid = exp1\nalgorithms = clms, clmls\ntrials = 500\nseed = "
                                     + std::to_string(seed) + "\n");
        const auto report = run_experiment(cfg);
        const CurveOutput* clms = nullptr;
        const CurveOutput* clmls = nullptr;
        for (const auto& c : report.curves) {
            (c.result.algorithm == Algorithm::Clms ? clms : clmls) = &c;
        }
        if (!clms || !clmls || !clms->match) {
            return {false, "seed " + std::to_string(seed) + ": step-size matching failed"};
        }
        const double p_clmls = clmls->result.window_msd_db(0);
        const double p_clms = clms->result.window_msd_db(0);
        const std::size_t n_clmls = iterations_to_plateau(clmls->result.msd_db, p_clmls);
        const std::size_t n_clms = iterations_to_plateau(clms->result.msd_db, p_clms);
        const bool matched = std::abs(p_clmls - p_clms) <= 0.25;
        ok = ok && matched && n_clmls < n_clms;
        detail += "seed " + std::to_string(seed) + ": plateaus " + fmt("%.2f", p_clmls) + "/" + fmt("%.2f", p_clms)
                  + " dB, mu_clms " + fmt("%.4g", clms->result.params.mu) + ", iterations " + std::to_string(n_clmls)
                  + " vs " + std::to_string(n_clms) + "; ";
    }
    return {ok, detail};
}

// 7. Sparse ordering in the 90% segment.
Verdict sparse_ordering()
{
    const auto cfg = config_from("[experiment]\nid = exp3\ntrials = 200\n");
    const auto report = run_experiment(cfg);
    std::map<Algorithm, const RunResult*> by_alg;
    for (const auto& c : report.curves) {
        by_alg[c.result.algorithm] = &c.result;
    }
    const std::size_t seg = 2;
    bool ok = true;
    std::string detail;
    const std::pair<Algorithm, Algorithm> pairs[] = {{Algorithm::L1Wclmls, Algorithm::L1Wclms},
                                                     {Algorithm::L1Clmls, Algorithm::L1Clms}};
    for (const auto& [better, worse] : pairs) {
        const RunResult& a = *by_alg.at(better);
        const RunResult& b = *by_alg.at(worse);
        const double margin = b.window_msd[seg] - a.window_msd[seg];
        const double se = std::hypot(a.window_msd_se[seg], b.window_msd_se[seg]);
        ok = ok && margin > 2.0 * se;
        detail += std::string(algorithm_name(better)) + " " + fmt("%.2f", a.window_msd_db(seg)) + " dB vs "
                  + std::string(algorithm_name(worse)) + " " + fmt("%.2f", b.window_msd_db(seg)) + " dB, margin/SE "
                  + fmt("%.1f", margin / se) + "; ";
    }
    return {ok, detail};
}

// 8. Large-alpha step limit and vanishing steady state without noise.
Verdict limit_consistency()
{
    std::mt19937_64 rng(8);
    double worst = 0.0;
    for (int i = 0; i < 200; ++i) {
        const ConstraintSet cs = build_constraint_set(gaussian_matrix(10, 5, rng), gaussian_matrix(5, 1, rng));
        FilterState state{cs.project(gaussian_matrix(10, 1, rng)), 0};
        const VectorXd u = gaussian_matrix(10, 1, rng);
        double d = state.w.dot(u) + 0.5;
        AlgorithmParams p;
        p.mu = 0.05;
        p.alpha = 1e9;
        const VectorXd a = clmls_step(state, u, d, p, cs).w;
        const VectorXd b = clms_step(state, u, d, p, cs).w;
        worst = std::max(worst, (a - b).norm() / b.norm());
    }
    const SignalModel base = white_input_model(random_symmetric_system(10, 7), 0.0);
    const ConstraintSet cs = linear_phase_constraints(10);
    AlgorithmParams p;
    double prev = INFINITY;
    bool decreasing = true;
    double last = 0.0;
    for (double s2 : {1e-2, 1e-4, 1e-6, 1e-8}) {
        SignalModel m = base;
        m.sigma_v2 = s2;
        last = steady_state_emse(m, cs, p).emse;
        decreasing = decreasing && last < prev;
        prev = last;
    }
    SignalModel silent = base;
    const double zero_noise = steady_state_emse(silent, cs, p).emse;
    const bool ok = worst <= 1e-6 && decreasing && last < 1e-12 && zero_noise == 0.0;
    return {ok, "max relative step gap " + fmt("%.2e", worst) + ", zeta at sigma_v2=1e-8 " + fmt("%.2e", last)
                    + ", at 0 " + fmt("%.1e", zero_noise)};
}

// 9. Identical configurations give byte-identical CSV files.
Verdict determinism()
{
    const fs::path root = fs::temp_directory_path() / ("clmls_acceptance_" + std::to_string(::getpid()));
    const std::vector<std::string> configs = {
        "[experiment]\nid = exp1\ntrials = 40\nhorizon = 2000\n",
        "[experiment]\nid = exp2-snr\ntrials = 40\nhorizon = 1000\n",
        "[experiment]\nid = exp2-mu\ntrials = 40\nhorizon = 1000\n",
        "[experiment]\nid = exp3\ntrials = 40\nhorizon = 3000\n",
    };
    bool ok = true;
    std::size_t files = 0;
    std::string detail;
    for (std::size_t i = 0; i < configs.size(); ++i) {
        auto cfg = config_from(configs[i]);
        const fs::path a = root / (std::to_string(i) + "a");
        const fs::path b = root / (std::to_string(i) + "b");
        cfg.threads = 1;
        write_report(run_experiment(cfg), a);
        cfg.threads = 0;
        write_report(run_experiment(cfg), b);
        for (const auto& entry : fs::directory_iterator(a)) {
            if (entry.path().extension() != ".csv") {
                continue;
            }
            std::ifstream fa(entry.path(), std::ios::binary);
            std::ifstream fb(b / entry.path().filename(), std::ios::binary);
            std::stringstream sa;
            std::stringstream sb;
            sa << fa.rdbuf();
            sb << fb.rdbuf();
            ++files;
            if (sa.str() != sb.str() || sa.str().empty()) {
                ok = false;
                detail += entry.path().filename().string() + " differs; ";
            }
        }
    }
    fs::remove_all(root);
    ok = ok && files > 0;
    return {ok, std::to_string(files) + " CSV files compared across runs with 1 and all threads" + (detail.empty() ? "" : ": " + detail)};
}

}  // namespace

int main(int argc, char** argv)
{
    const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria = {
        {"constraint preservation", constraint_preservation},
        {"variance relation", variance_relation},
        {"moment functionals", moment_functionals},
        {"theory vs simulation", theory_vs_simulation},
        {"steady-state closed form", steady_state_closed_form},
        {"performance ordering", performance_ordering},
        {"sparse ordering", sparse_ordering},
        {"limit consistency", limit_consistency},
        {"determinism", determinism},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) {
        selected.insert(std::atoi(argv[i]));
    }

    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i + 1);
        if (!selected.empty() && !selected.count(id)) {
            continue;
        }
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        failures += v.pass ? 0 : 1;
        std::printf("%s criterion %d (%s): %s\n", v.pass ? "PASS" : "FAIL", id, criteria[i].first, v.detail.c_str());
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
