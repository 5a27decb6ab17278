#include "clmls/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "json.hpp"

#include "clmls/errors.hpp"

namespace clmls {

namespace {

std::string short_number(double v)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

std::string fixed(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

SignalModel base_model(const ExperimentConfig& config, const VectorXd& w_sys, double sigma_v2)
{
    return config.input == "ar1" ? ar1_input_model(w_sys, config.rho, sigma_v2) : white_input_model(w_sys, sigma_v2);
}

Scenario make_scenario(const ExperimentConfig& config, std::optional<double> snr_db)
{
    const auto l = static_cast<Eigen::Index>(config.filter_length);
    Scenario s;
    if (config.id == ExperimentId::Exp3) {
        SystemSchedule schedule = sparse_system_schedule(l, config.horizon, config.system_seed);
        s.model = base_model(config, schedule.systems[0], 0.0);
        s.model.schedule = std::move(schedule);
        const MatrixXd ones = MatrixXd::Ones(l, 1);
        s.constraints = build_constraint_set(ones, ones.transpose() * s.model.w_sys);
    } else {
        s.model = base_model(config, random_symmetric_system(l, config.system_seed), 0.0);
        s.constraints = linear_phase_constraints(l);
    }
    s.model.sigma_v2 = snr_db ? noise_variance_for_snr(s.model, *snr_db) : config.sigma_v2.value_or(0.0);
    return s;
}

struct Job {
    Algorithm algorithm;
    std::optional<Algorithm> match_to;
};

std::vector<Job> plan_jobs(const ExperimentConfig& config)
{
    std::vector<Job> jobs;
    for (Algorithm a : config.algorithms) {
        Job job{a, std::nullopt};
        if (config.match_step_sizes && config.id == ExperimentId::Exp1) {
            const auto wants = [&](Algorithm partner) {
                return std::find(config.algorithms.begin(), config.algorithms.end(), partner)
                       != config.algorithms.end();
            };
            if (a == Algorithm::Lms && wants(Algorithm::Lmls)) {
                job.match_to = Algorithm::Lmls;
            } else if (a == Algorithm::Clms && wants(Algorithm::Clmls)) {
                job.match_to = Algorithm::Clmls;
            }
        }
        jobs.push_back(job);
    }
    return jobs;
}

std::vector<Window> windows_for(const ExperimentConfig& config)
{
    if (config.id != ExperimentId::Exp3) {
        return {final_window(config.horizon)};
    }
    const std::size_t n = config.horizon;
    const std::size_t bounds[] = {0, n / 3, 2 * n / 3, n};
    std::vector<Window> out;
    for (int k = 0; k < 3; ++k) {
        const Window w = final_window(bounds[k + 1] - bounds[k]);
        out.push_back({bounds[k] + w.begin, bounds[k] + w.end});
    }
    return out;
}

}  // namespace

std::vector<ScenarioPoint> build_scenarios(const ExperimentConfig& config)
{
    std::vector<ScenarioPoint> points;
    const bool snr_sweep = config.snr_db.size() > 1;
    const bool mu_sweep = config.mu_list.size() > 1 || (config.mu_list.size() == 1 && !snr_sweep);
    if (snr_sweep) {
        for (double snr : config.snr_db) {
            ScenarioPoint p{"snr" + short_number(snr), make_scenario(config, snr), config.params, snr};
            if (config.mu_list.size() == 1) {
                p.params.mu = config.mu_list[0];
            }
            points.push_back(std::move(p));
        }
    } else if (mu_sweep) {
        const std::optional<double> snr = config.snr_db.empty() ? std::nullopt : std::optional(config.snr_db[0]);
        const Scenario base = make_scenario(config, snr);
        for (double mu : config.mu_list) {
            ScenarioPoint p{config.mu_list.size() > 1 ? "mu" + short_number(mu) : "", base, config.params, snr};
            p.params.mu = mu;
            points.push_back(std::move(p));
        }
    } else {
        const std::optional<double> snr = config.snr_db.empty() ? std::nullopt : std::optional(config.snr_db[0]);
        points.push_back({"", make_scenario(config, snr), config.params, snr});
    }
    return points;
}

ExperimentReport run_experiment(const ExperimentConfig& config, std::ostream* log)
{
    ExperimentReport report;
    report.config = config;

    MonteCarloOptions options;
    options.trials = config.trials;
    options.horizon = config.horizon;
    options.base_seed = config.base_seed;
    options.threads = config.threads;
    options.windows = windows_for(config);
    options.budget = config.budget;

    const std::vector<Job> jobs = plan_jobs(config);
    for (const ScenarioPoint& point : build_scenarios(config)) {
        std::map<Algorithm, CurveOutput> done;
        // Reference algorithms first so that matched ones can target their plateau.
        for (int pass = 0; pass < 2; ++pass) {
            for (const Job& job : jobs) {
                if ((pass == 0) == job.match_to.has_value()) {
                    continue;
                }
                CurveOutput curve;
                curve.label = point.label;
                curve.name = std::string(algorithm_name(job.algorithm)) + (point.label.empty() ? "" : "_" + point.label);
                curve.sigma_v2 = point.scenario.model.sigma_v2;
                AlgorithmParams params = point.params;

                if (job.match_to) {
                    const CurveOutput& target = done.at(*job.match_to);
                    const double target_db = target.result.window_msd_db(0);
                    if (log) {
                        *log << "matching " << algorithm_name(job.algorithm) << " to the "
                             << algorithm_name(*job.match_to) << " plateau of " << target_db << " dB\n";
                    }
                    try {
                        curve.match = match_step_size(target_db, job.algorithm, point.scenario, params, options,
                                                      SearchBounds{params.mu / 1000.0, params.mu});
                        curve.match_target = algorithm_name(*job.match_to);
                        params.mu = curve.match->mu;
                    } catch (const StepSizeMatchError& err) {
                        report.warnings.push_back(std::string("step-size matching failed, running at the configured mu: ")
                                                  + err.what());
                    }
                }

                if (log) {
                    *log << "running " << curve.name << " (mu = " << params.mu << ", " << options.trials
                         << " trials x " << options.horizon << " iterations)\n";
                }
                curve.result = run_monte_carlo(point.scenario, job.algorithm, params, options);
                if (curve.result.diverged_trials > 0) {
                    report.warnings.push_back(curve.name + ": " + std::to_string(curve.result.diverged_trials)
                                              + " diverged trials excluded; first: " + curve.result.first_divergence);
                }

                const SignalModel& model = point.scenario.model;
                if (is_constrained(job.algorithm)) {
                    SignalModel first = model;
                    if (first.schedule) {
                        first.w_sys = first.schedule->systems[0];
                    }
                    curve.reference = optimal_constrained_wiener(first, *point.scenario.constraints);
                } else {
                    curve.reference = model.r.ldlt().solve(model.cross_correlation());
                }

                if (job.algorithm == Algorithm::Clmls && !model.schedule) {
                    const ConstraintSet& cs = *point.scenario.constraints;
                    const VectorXd w0 = cs.project(VectorXd::Zero(model.filter_length()));
                    try {
                        curve.theory = transient_predictor(model, cs, params, w0, config.horizon);
                    } catch (const DivergenceError& err) {
                        report.warnings.push_back(curve.name + ": theoretical recursion diverged: " + err.what());
                    }
                    curve.steady_state = steady_state_emse(model, cs, params);
                    if (!curve.steady_state->valid) {
                        report.warnings.push_back(curve.name
                                                  + ": negative discriminant, steady-state closed form undefined");
                    }
                }
                done.emplace(job.algorithm, std::move(curve));
            }
        }
        for (const Job& job : jobs) {
            report.curves.push_back(std::move(done.at(job.algorithm)));
        }
    }
    return report;
}

std::string curve_csv(const CurveOutput& curve)
{
    const RunResult& r = curve.result;
    const bool theory = curve.theory.has_value();
    const double ref2 = curve.reference.squaredNorm();
    std::string out = theory ? "iteration,msd_db,emse,theory_msd_db,theory_emse\n" : "iteration,msd_db,emse\n";
    out.reserve(out.size() + r.msd_db.size() * (theory ? 64 : 36));
    char buf[160];
    for (std::size_t n = 0; n < r.msd_db.size(); ++n) {
        int len = 0;
        if (theory) {
            len = std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g,%.10g,%.10g\n", n, r.msd_db[n], r.emse[n],
                                to_db(curve.theory->msd[n] / ref2), curve.theory->emse[n]);
        } else {
            len = std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g\n", n, r.msd_db[n], r.emse[n]);
        }
        out.append(buf, static_cast<std::size_t>(len));
    }
    return out;
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::ios_base::failure("cannot open '" + path.string() + "' for writing");
    }
    out << text;
    out.close();
    if (!out) {
        throw std::ios_base::failure("failed writing '" + path.string() + "'");
    }
}

void ensure_directory(const std::filesystem::path& dir)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir)) {
        throw std::ios_base::failure("cannot create output directory '" + dir.string() + "': " + ec.message());
    }
}

nlohmann::json finite_or_null(double v)
{
    return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

std::string summary_json(const ExperimentReport& report)
{
    using nlohmann::json;
    json j;
    j["experiment"] = experiment_name(report.config.id);
    j["base_seed"] = report.config.base_seed;
    j["trials"] = report.config.trials;
    j["horizon"] = report.config.horizon;
    j["plateau_window"] = "final 10% of each segment";
    j["warnings"] = report.warnings;
    j["config"] = config_echo(report.config);
    json curves = json::array();
    for (const auto& c : report.curves) {
        json e;
        e["name"] = c.name;
        e["algorithm"] = algorithm_name(c.result.algorithm);
        e["mu"] = c.result.params.mu;
        e["alpha"] = c.result.params.alpha;
        e["sigma_v2"] = c.sigma_v2;
        e["trials"] = c.result.trials;
        e["diverged_trials"] = c.result.diverged_trials;
        e["degenerate_fallbacks"] = c.result.degenerate_fallbacks;
        e["budget_clamps"] = c.result.budget_clamps;
        e["max_constraint_residual"] = c.result.max_constraint_residual;
        json windows = json::array();
        for (std::size_t k = 0; k < c.result.windows.size(); ++k) {
            windows.push_back({{"begin", c.result.windows[k].begin},
                               {"end", c.result.windows[k].end},
                               {"msd_db", c.result.window_msd_db(k)},
                               {"msd", c.result.window_msd[k]},
                               {"msd_standard_error", c.result.window_msd_se[k]},
                               {"emse", c.result.window_emse[k]}});
        }
        e["plateaus"] = windows;
        if (c.match) {
            e["matched_step_size"] = {{"target", c.match_target},
                                      {"mu", c.match->mu},
                                      {"plateau_db", c.match->plateau_db},
                                      {"evaluations", c.match->evaluations}};
        }
        if (c.steady_state) {
            const auto& s = *c.steady_state;
            const double ref2 = c.reference.squaredNorm();
            e["theory_steady_state"] = {{"valid", s.valid},
                                        {"emse", finite_or_null(s.emse)},
                                        {"msd", finite_or_null(s.msd)},
                                        {"msd_db", finite_or_null(s.valid ? to_db(s.msd / ref2) : s.msd)},
                                        {"discriminant", s.discriminant},
                                        {"beta_factor", s.beta_factor}};
        }
        if (c.theory) {
            e["theory_recursion_final"] = {{"emse", c.theory->emse.back()}, {"msd", c.theory->msd.back()}};
        }
        curves.push_back(std::move(e));
    }
    j["curves"] = curves;
    return j.dump(2) + "\n";
}

std::string plot_script(const ExperimentReport& report)
{
    std::ostringstream os;
    os << "# gnuplot " << experiment_name(report.config.id) << " learning curves\n"
       << "set datafile separator ','\n"
       << "set terminal pngcairo size 900,600\n"
       << "set output 'learning_curves.png'\n"
       << "set xlabel 'iteration'\n"
       << "set ylabel 'normalized MSD (dB)'\n"
       << "set key top right\n"
       << "set grid\n";
    if (report.config.id == ExperimentId::Exp3) {
        const std::size_t n = report.config.horizon;
        os << "set arrow from " << n / 3 << ", graph 0 to " << n / 3 << ", graph 1 nohead dt 3\n"
           << "set arrow from " << 2 * n / 3 << ", graph 0 to " << 2 * n / 3 << ", graph 1 nohead dt 3\n";
    }
    os << "plot \\\n";
    std::vector<std::string> lines;
    for (const auto& c : report.curves) {
        std::string title = c.name;
        for (auto& ch : title) {
            if (ch == '_') {
                ch = ' ';
            }
        }
        lines.push_back("  '" + c.name + ".csv' using 1:2 every 10 with lines lw 2 title '" + title + "'");
        if (c.theory) {
            lines.push_back("  '" + c.name + ".csv' using 1:4 every 10 with lines dt 2 lw 2 title '" + title
                            + " (theory)'");
        }
    }
    for (std::size_t i = 0; i < lines.size(); ++i) {
        os << lines[i] << (i + 1 < lines.size() ? ", \\\n" : "\n");
    }
    return os.str();
}

}  // namespace

void write_report(const ExperimentReport& report, const std::filesystem::path& out_dir)
{
    ensure_directory(out_dir);
    for (const auto& c : report.curves) {
        write_file(out_dir / (c.name + ".csv"), curve_csv(c));
    }
    write_file(out_dir / "summary.json", summary_json(report));
    write_file(out_dir / "config_echo.ini", config_echo(report.config));
    write_file(out_dir / "plot.gp", plot_script(report));
}

PredictReport predict(const ExperimentConfig& config)
{
    if (config.id == ExperimentId::Exp3) {
        throw ConfigError(0, "predict: the theory covers fixed systems only; exp3 switches systems");
    }
    if (config.snr_db.size() > 1 || config.mu_list.size() > 1) {
        throw ConfigError(0, "predict needs a single scenario point; reduce snr_db or mu_list to one value");
    }
    const auto points = build_scenarios(config);
    const ScenarioPoint& point = points.front();
    const Scenario& s = point.scenario;
    const ConstraintSet& cs = *s.constraints;

    PredictReport out;
    const VectorXd w0 = cs.project(VectorXd::Zero(s.model.filter_length()));
    out.trace = transient_predictor(s.model, cs, point.params, w0, config.horizon);
    out.steady_state = steady_state_emse(s.model, cs, point.params);
    out.reference_norm2 = optimal_constrained_wiener(s.model, cs).squaredNorm();
    out.sigma_v2 = s.model.sigma_v2;
    if (!out.steady_state.valid) {
        out.warnings.push_back("discriminant " + fixed(out.steady_state.discriminant)
                               + " < 0: steady-state closed form undefined for this mu");
    }
    return out;
}

void write_predict(const PredictReport& report, const ExperimentConfig& config, const std::filesystem::path& out_dir)
{
    ensure_directory(out_dir);
    std::string curve = "iteration,msd_db,msd,emse\n";
    char buf[160];
    for (std::size_t n = 0; n < report.trace.msd.size(); ++n) {
        const int len = std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g,%.10g\n", n,
                                      to_db(report.trace.msd[n] / report.reference_norm2), report.trace.msd[n],
                                      report.trace.emse[n]);
        curve.append(buf, static_cast<std::size_t>(len));
    }
    write_file(out_dir / "predict.csv", curve);

    const auto& s = report.steady_state;
    const double recursion_emse = report.trace.emse.back();
    std::ostringstream os;
    os << "quantity,value\n";
    for (const auto& w : report.warnings) {
        os << "warning," << w << "\n";
    }
    os << "valid," << (s.valid ? "true" : "false") << "\n"
       << "discriminant," << fixed(s.discriminant) << "\n"
       << "beta_factor," << fixed(s.beta_factor) << "\n"
       << "closed_form_emse," << fixed(s.emse) << "\n"
       << "closed_form_msd," << fixed(s.msd) << "\n"
       << "closed_form_msd_db," << fixed(s.valid ? to_db(s.msd / report.reference_norm2) : s.msd) << "\n"
       << "recursion_final_emse," << fixed(recursion_emse) << "\n"
       << "recursion_final_msd," << fixed(report.trace.msd.back()) << "\n"
       << "relative_gap_emse," << fixed(s.valid ? std::abs(recursion_emse - s.emse) / s.emse : s.emse) << "\n"
       << "alpha_sigma_e2," << fixed(config.params.alpha * (recursion_emse + report.sigma_v2)) << "\n";
    write_file(out_dir / "steady_state.csv", os.str());
    write_file(out_dir / "config_echo.ini", config_echo(config));
}

}  // namespace clmls
