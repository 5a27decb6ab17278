#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "clmls/errors.hpp"
#include "clmls/experiment_config.hpp"
#include "clmls/experiments.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitDivergence = 2;
constexpr int kExitIo = 3;

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> trials;
    std::optional<std::string> out_dir;
    std::optional<unsigned> threads;
};

clmls::ExperimentConfig load(const std::string& path, const Overrides& o)
{
    if (!std::filesystem::exists(path)) {
        throw std::ios_base::failure("config file '" + path + "' does not exist");
    }
    clmls::ExperimentConfig cfg = clmls::load_config(path);
    if (o.seed) {
        cfg.base_seed = *o.seed;
    }
    if (o.trials) {
        if (*o.trials < 1) {
            throw clmls::ConfigError(0, "--trials must be at least 1");
        }
        cfg.trials = *o.trials;
    }
    if (o.out_dir) {
        cfg.out_dir = *o.out_dir;
    }
    if (o.threads) {
        cfg.threads = *o.threads;
    }
    return cfg;
}

int cmd_validate(const std::string& path, const Overrides& o)
{
    const auto cfg = load(path, o);
    std::cout << path << ": valid " << clmls::experiment_name(cfg.id) << " configuration\n";
    for (const auto& d : cfg.applied_defaults) {
        std::cout << "  default applied: " << d << "\n";
    }
    for (const auto& w : cfg.warnings) {
        std::cout << "  warning: " << w << "\n";
    }
    return kExitOk;
}

int cmd_run(const std::string& path, const Overrides& o)
{
    const auto cfg = load(path, o);
    for (const auto& w : cfg.warnings) {
        std::cerr << "warning: " << w << "\n";
    }
    const auto report = clmls::run_experiment(cfg, &std::cerr);
    clmls::write_report(report, cfg.out_dir);
    for (const auto& w : report.warnings) {
        std::cerr << "warning: " << w << "\n";
    }
    for (const auto& c : report.curves) {
        std::cout << c.name << ": mu = " << c.result.params.mu << ", plateau " << c.result.window_msd_db(0) << " dB";
        if (c.result.windows.size() > 1) {
            for (std::size_t k = 1; k < c.result.windows.size(); ++k) {
                std::cout << " / " << c.result.window_msd_db(k) << " dB";
            }
        }
        std::cout << "\n";
    }
    std::cout << "results written to " << cfg.out_dir << "\n";
    return kExitOk;
}

int cmd_predict(const std::string& path, const Overrides& o)
{
    const auto cfg = load(path, o);
    const auto report = clmls::predict(cfg);
    clmls::write_predict(report, cfg, cfg.out_dir);
    for (const auto& w : report.warnings) {
        std::cerr << "warning: " << w << "\n";
    }
    std::cout << "predicted steady-state EMSE " << report.steady_state.emse << ", recursion after " << cfg.horizon
              << " iterations " << report.trace.emse.back() << "\n";
    std::cout << "results written to " << cfg.out_dir << "\n";
    return kExitOk;
}

int cmd_init(const std::string& id_name, const std::string& path)
{
    std::istringstream probe("[experiment]\nid = " + id_name + "\n");
    const auto id = clmls::parse_config(probe, "--experiment").id;
    const std::string text = clmls::config_template(id);
    if (path.empty() || path == "-") {
        std::cout << text;
        return kExitOk;
    }
    if (std::filesystem::exists(path)) {
        throw std::ios_base::failure("refusing to overwrite existing file '" + path + "'");
    }
    std::ofstream out(path);
    if (!(out << text)) {
        throw std::ios_base::failure("cannot write '" + path + "'");
    }
    std::cout << "wrote " << path << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Constrained least-mean logarithmic square adaptive filtering experiments"};
    app.require_subcommand(1);

    std::string config_path;
    std::string experiment = "exp1";
    Overrides o;
    std::uint64_t seed = 0;
    std::size_t trials = 0;
    std::string out_dir;
    unsigned threads = 0;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("-c,--config", config_path, "experiment configuration file")->required();
        sub->add_option("--seed", seed, "base RNG seed (trial i uses seed + i)");
        sub->add_option("--trials", trials, "number of Monte-Carlo trials");
        sub->add_option("--out-dir", out_dir, "output directory");
        sub->add_option("--threads", threads, "worker threads (0 = all cores)");
    };
    auto* run = app.add_subcommand("run", "run an experiment and write CSV, summary and plot script");
    auto* validate = app.add_subcommand("validate", "check a configuration without running it");
    auto* predict = app.add_subcommand("predict", "theory-only learning curve and steady state");
    auto* init = app.add_subcommand("init", "print or write a commented configuration template");
    add_common(run);
    add_common(validate);
    add_common(predict);
    init->add_option("-e,--experiment", experiment, "exp1 | exp2-snr | exp2-mu | exp3 | custom");
    init->add_option("-c,--config", config_path, "file to create (default: stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    auto sub = app.get_subcommands().front();
    if (sub != init) {
        if (sub->count("--seed")) {
            o.seed = seed;
        }
        if (sub->count("--trials")) {
            o.trials = trials;
        }
        if (sub->count("--out-dir")) {
            o.out_dir = out_dir;
        }
        if (sub->count("--threads")) {
            o.threads = threads;
        }
    }

    try {
        if (sub == run) {
            return cmd_run(config_path, o);
        }
        if (sub == validate) {
            return cmd_validate(config_path, o);
        }
        if (sub == predict) {
            return cmd_predict(config_path, o);
        }
        return cmd_init(experiment, config_path);
    } catch (const clmls::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const clmls::EnsembleDivergedError& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const clmls::DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return kExitDivergence;
    } catch (const std::ios_base::failure& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kExitIo;
    } catch (const clmls::RankError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDivergence;
    }
}
