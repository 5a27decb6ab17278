#include "clmls/experiment_config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "clmls/errors.hpp"

namespace clmls {

namespace {

struct Entry {
    std::string value;
    std::size_t line;
};

std::string trim(std::string_view s)
{
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

std::string lower(std::string s)
{
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

std::vector<std::string> split_list(const std::string& value)
{
    std::vector<std::string> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

const std::map<std::string, std::set<std::string>>& known_keys()
{
    static const std::map<std::string, std::set<std::string>> keys = {
        {"experiment", {"id", "algorithms", "filter_length", "horizon", "trials", "seed", "system_seed"}},
        {"params", {"mu", "alpha", "beta_slope", "budget", "budget_step_limit"}},
        {"scenario", {"input", "rho", "sigma_v2", "snr_db", "mu_list", "match_step_sizes"}},
        {"output", {"out_dir", "threads"}},
    };
    return keys;
}

class Reader {
public:
    Reader(std::map<std::string, Entry> entries, std::string source)
        : entries_(std::move(entries))
        , source_(std::move(source))
    {
    }

    bool has(const std::string& key) const { return entries_.count(key) != 0; }

    [[noreturn]] void fail(const std::string& key, const std::string& message) const
    {
        const auto it = entries_.find(key);
        const std::size_t line = it == entries_.end() ? 0 : it->second.line;
        throw ConfigError(line, where(line) + key + ": " + message);
    }

    std::string where(std::size_t line) const
    {
        return line ? source_ + ":" + std::to_string(line) + ": " : source_ + ": ";
    }

    double number(const std::string& key, const std::string& text) const
    {
        double v = 0.0;
        const char* begin = text.data();
        const char* end = begin + text.size();
        const auto [ptr, ec] = std::from_chars(begin, end, v);
        if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
            fail(key, "expected a finite number, got '" + text + "'");
        }
        return v;
    }

    double real(const std::string& key) const { return number(key, entries_.at(key).value); }

    std::uint64_t integer(const std::string& key, std::uint64_t min_value) const
    {
        const std::string& text = entries_.at(key).value;
        std::uint64_t v = 0;
        const char* begin = text.data();
        const char* end = begin + text.size();
        const auto [ptr, ec] = std::from_chars(begin, end, v);
        if (ec != std::errc() || ptr != end) {
            fail(key, "expected a non-negative integer, got '" + text + "'");
        }
        if (v < min_value) {
            fail(key, "must be at least " + std::to_string(min_value));
        }
        return v;
    }

    std::vector<double> reals(const std::string& key) const
    {
        std::vector<double> out;
        for (const auto& item : split_list(entries_.at(key).value)) {
            out.push_back(number(key, item));
        }
        if (out.empty()) {
            fail(key, "list is empty");
        }
        return out;
    }

    bool boolean(const std::string& key) const
    {
        const std::string v = lower(entries_.at(key).value);
        if (v == "true" || v == "yes" || v == "1") {
            return true;
        }
        if (v == "false" || v == "no" || v == "0") {
            return false;
        }
        fail(key, "expected true or false, got '" + entries_.at(key).value + "'");
    }

    const std::string& text(const std::string& key) const { return entries_.at(key).value; }

private:
    std::map<std::string, Entry> entries_;
    std::string source_;
};

// Shortest text that parses back to the same double.
std::string format_double(double v)
{
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

std::string format_list(const std::vector<double>& values)
{
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        out += (i ? ", " : "") + format_double(values[i]);
    }
    return out;
}

std::string algorithm_list()
{
    std::string out;
    for (Algorithm a : all_algorithms()) {
        out += (out.empty() ? "" : ", ") + std::string(algorithm_name(a));
    }
    return out;
}

struct Defaults {
    std::vector<Algorithm> algorithms;
    std::size_t filter_length;
    std::size_t horizon;
    double mu;
    double sigma_v2;
    std::vector<double> snr_db;
    std::vector<double> mu_list;
};

Defaults defaults_for(ExperimentId id)
{
    switch (id) {
    case ExperimentId::Exp1:
        return {{Algorithm::Lms, Algorithm::Lmls, Algorithm::Clms, Algorithm::Clmls}, 10, 5000, 0.05, 0.01, {}, {}};
    case ExperimentId::Exp2Snr:
        return {{Algorithm::Clmls}, 10, 5000, 0.05, 0.0, {30.0, 25.0, 20.0}, {}};
    case ExperimentId::Exp2Mu:
        return {{Algorithm::Clmls}, 10, 5000, 0.05, 0.01, {}, {0.03, 0.05, 0.1}};
    case ExperimentId::Exp3:
        return {{Algorithm::L1Clms, Algorithm::L1Wclms, Algorithm::L1Clmls, Algorithm::L1Wclmls},
                30,
                9000,
                0.01,
                0.1,
                {},
                {}};
    case ExperimentId::Custom:
        break;
    }
    return {{Algorithm::Clmls}, 10, 5000, 0.05, 0.01, {}, {}};
}

ExperimentId parse_experiment_id(const Reader& reader)
{
    const std::string v = lower(reader.text("id"));
    if (v == "exp1") return ExperimentId::Exp1;
    if (v == "exp2-snr") return ExperimentId::Exp2Snr;
    if (v == "exp2-mu") return ExperimentId::Exp2Mu;
    if (v == "exp3") return ExperimentId::Exp3;
    if (v == "custom") return ExperimentId::Custom;
    reader.fail("id", "unknown experiment '" + reader.text("id") + "'; valid: exp1, exp2-snr, exp2-mu, exp3, custom");
}

}  // namespace

const char* experiment_name(ExperimentId id) noexcept
{
    switch (id) {
    case ExperimentId::Exp1: return "exp1";
    case ExperimentId::Exp2Snr: return "exp2-snr";
    case ExperimentId::Exp2Mu: return "exp2-mu";
    case ExperimentId::Exp3: return "exp3";
    case ExperimentId::Custom: return "custom";
    }
    return "custom";
}

ExperimentConfig parse_config(std::istream& in, const std::string& source)
{
    std::map<std::string, Entry> entries;
    std::string section;
    std::string raw;
    std::size_t line_no = 0;
    const auto prefix = [&](std::size_t line) { return source + ":" + std::to_string(line) + ": "; };

    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = raw;
        const auto comment = line.find_first_of("#;");
        if (comment != std::string::npos) {
            line.erase(comment);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        if (line.front() == '[') {
            if (line.back() != ']') {
                throw ConfigError(line_no, prefix(line_no) + "unterminated section header");
            }
            section = lower(trim(line.substr(1, line.size() - 2)));
            if (!known_keys().count(section)) {
                throw ConfigError(line_no, prefix(line_no) + "unknown section [" + section
                                               + "]; valid: [experiment], [params], [scenario], [output]");
            }
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(line_no, prefix(line_no) + "expected 'key = value'");
        }
        if (section.empty()) {
            throw ConfigError(line_no, prefix(line_no) + "key outside of any section");
        }
        const std::string key = lower(trim(line.substr(0, eq)));
        const std::string value = trim(line.substr(eq + 1));
        if (!known_keys().at(section).count(key)) {
            std::string valid;
            for (const auto& k : known_keys().at(section)) {
                valid += (valid.empty() ? "" : ", ") + k;
            }
            throw ConfigError(line_no, prefix(line_no) + "unknown key '" + key + "' in [" + section + "]; valid: " + valid);
        }
        if (value.empty()) {
            throw ConfigError(line_no, prefix(line_no) + key + ": missing value");
        }
        if (entries.count(key)) {
            throw ConfigError(line_no, prefix(line_no) + key + ": duplicate key (first set on line "
                                           + std::to_string(entries.at(key).line) + ")");
        }
        entries.emplace(key, Entry{value, line_no});
    }
    if (in.bad()) {
        throw ConfigError(0, source + ": read error");
    }

    const Reader r(std::move(entries), source);
    ExperimentConfig cfg;
    if (!r.has("id")) {
        throw ConfigError(0, source + ": [experiment] id is required (exp1, exp2-snr, exp2-mu, exp3, custom)");
    }
    cfg.id = parse_experiment_id(r);
    const Defaults def = defaults_for(cfg.id);

    auto note_default = [&](const std::string& key, const std::string& value) {
        cfg.applied_defaults.push_back(key + " = " + value);
    };

    if (r.has("algorithms")) {
        for (const auto& name : split_list(r.text("algorithms"))) {
            const auto alg = parse_algorithm(lower(name));
            if (!alg) {
                r.fail("algorithms", "unknown algorithm '" + name + "'; valid: " + algorithm_list());
            }
            cfg.algorithms.push_back(*alg);
        }
        if (cfg.algorithms.empty()) {
            r.fail("algorithms", "list is empty");
        }
    } else {
        cfg.algorithms = def.algorithms;
        std::string names;
        for (Algorithm a : def.algorithms) {
            names += (names.empty() ? "" : ", ") + std::string(algorithm_name(a));
        }
        note_default("algorithms", names);
    }

    if (r.has("filter_length")) {
        cfg.filter_length = r.integer("filter_length", 2);
    } else {
        cfg.filter_length = def.filter_length;
        note_default("filter_length", std::to_string(def.filter_length));
    }
    if (r.has("horizon")) {
        cfg.horizon = r.integer("horizon", 1);
    } else {
        cfg.horizon = def.horizon;
        note_default("horizon", std::to_string(def.horizon));
    }
    if (r.has("trials")) {
        cfg.trials = r.integer("trials", 1);
    } else {
        note_default("trials", std::to_string(cfg.trials));
    }
    if (r.has("seed")) {
        cfg.base_seed = r.integer("seed", 0);
    } else {
        note_default("seed", std::to_string(cfg.base_seed));
    }
    if (r.has("system_seed")) {
        cfg.system_seed = r.integer("system_seed", 0);
    }

    cfg.params.mu = r.has("mu") ? r.real("mu") : def.mu;
    if (!r.has("mu")) {
        note_default("mu", format_double(def.mu));
    }
    if (cfg.params.mu < 0.0) {
        r.fail("mu", "must be non-negative");
    }
    if (r.has("alpha")) {
        cfg.params.alpha = r.real("alpha");
        if (!(cfg.params.alpha > 0.0)) {
            r.fail("alpha", "must be positive");
        }
    }
    if (r.has("beta_slope")) {
        cfg.params.beta_slope = r.real("beta_slope");
        if (!(cfg.params.beta_slope > 0.0)) {
            r.fail("beta_slope", "must be positive");
        }
    }
    if (r.has("budget")) {
        cfg.budget = r.real("budget");
    }
    if (r.has("budget_step_limit")) {
        cfg.params.budget_step_limit = r.real("budget_step_limit");
        if (cfg.params.budget_step_limit < 0.0) {
            r.fail("budget_step_limit", "must be non-negative (0 selects 1/beta_slope)");
        }
    }

    if (r.has("input")) {
        cfg.input = lower(r.text("input"));
        if (cfg.input != "white" && cfg.input != "ar1") {
            r.fail("input", "expected white or ar1, got '" + r.text("input") + "'");
        }
    }
    if (r.has("rho")) {
        cfg.rho = r.real("rho");
        if (!(std::abs(cfg.rho) < 1.0)) {
            r.fail("rho", "must satisfy |rho| < 1");
        }
        if (cfg.input != "ar1") {
            cfg.warnings.push_back("rho is ignored for white input");
        }
    }

    if (r.has("sigma_v2") && r.has("snr_db")) {
        r.fail("snr_db", "sigma_v2 and snr_db are mutually exclusive; set only one");
    }
    if (r.has("sigma_v2")) {
        cfg.sigma_v2 = r.real("sigma_v2");
        if (*cfg.sigma_v2 < 0.0) {
            r.fail("sigma_v2", "must be non-negative");
        }
    } else if (r.has("snr_db")) {
        cfg.snr_db = r.reals("snr_db");
    } else if (!def.snr_db.empty()) {
        cfg.snr_db = def.snr_db;
        note_default("snr_db", format_list(def.snr_db));
    } else {
        cfg.sigma_v2 = def.sigma_v2;
        note_default("sigma_v2", format_double(def.sigma_v2));
    }

    if (r.has("mu_list")) {
        cfg.mu_list = r.reals("mu_list");
        for (double mu : cfg.mu_list) {
            if (mu < 0.0) {
                r.fail("mu_list", "step sizes must be non-negative");
            }
        }
    } else if (!def.mu_list.empty()) {
        cfg.mu_list = def.mu_list;
        note_default("mu_list", format_list(def.mu_list));
    }
    if (r.has("match_step_sizes")) {
        cfg.match_step_sizes = r.boolean("match_step_sizes");
    }

    if (r.has("out_dir")) {
        cfg.out_dir = r.text("out_dir");
    }
    if (r.has("threads")) {
        cfg.threads = static_cast<unsigned>(r.integer("threads", 0));
    }

    // Cross-field checks.
    if (cfg.snr_db.size() > 1 && cfg.mu_list.size() > 1) {
        r.fail("mu_list", "sweeping both snr_db and mu_list is not supported");
    }
    if (cfg.id == ExperimentId::Exp2Mu && cfg.snr_db.size() > 1) {
        r.fail("snr_db", "exp2-mu needs a single noise level");
    }
    if (cfg.id == ExperimentId::Exp2Snr && !cfg.mu_list.empty()) {
        r.fail("mu_list", "exp2-snr sweeps SNR at a single mu; use [params] mu");
    }
    if ((cfg.id == ExperimentId::Exp2Snr || cfg.id == ExperimentId::Exp2Mu)) {
        for (Algorithm a : cfg.algorithms) {
            if (a != Algorithm::Clmls) {
                r.fail("algorithms", "theory overlays exist only for clmls");
            }
        }
    }
    if (cfg.id != ExperimentId::Exp3) {
        const std::size_t half = cfg.filter_length / 2;
        if (half < 1) {
            r.fail("filter_length", "linear-phase constraints need at least 2 taps");
        }
    }
    if (cfg.id == ExperimentId::Exp3 && cfg.horizon < 3) {
        r.fail("horizon", "exp3 needs at least one iteration per sparsity segment");
    }
    return cfg;
}

ExperimentConfig load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw std::ios_base::failure("cannot open config file '" + path + "'");
    }
    return parse_config(in, path);
}

std::string config_echo(const ExperimentConfig& c)
{
    std::ostringstream os;
    os << "[experiment]\n";
    os << "id = " << experiment_name(c.id) << "\n";
    os << "algorithms = ";
    for (std::size_t i = 0; i < c.algorithms.size(); ++i) {
        os << (i ? ", " : "") << algorithm_name(c.algorithms[i]);
    }
    os << "\n";
    os << "filter_length = " << c.filter_length << "\n";
    os << "horizon = " << c.horizon << "\n";
    os << "trials = " << c.trials << "\n";
    os << "seed = " << c.base_seed << "\n";
    os << "system_seed = " << c.system_seed << "\n";
    os << "\n[params]\n";
    os << "mu = " << format_double(c.params.mu) << "\n";
    os << "alpha = " << format_double(c.params.alpha) << "\n";
    os << "beta_slope = " << format_double(c.params.beta_slope) << "\n";
    if (c.budget) {
        os << "budget = " << format_double(*c.budget) << "\n";
    }
    os << "budget_step_limit = " << format_double(c.params.budget_step_limit) << "\n";
    os << "\n[scenario]\n";
    os << "input = " << c.input << "\n";
    if (c.input == "ar1") {
        os << "rho = " << format_double(c.rho) << "\n";
    }
    if (c.sigma_v2) {
        os << "sigma_v2 = " << format_double(*c.sigma_v2) << "\n";
    }
    if (!c.snr_db.empty()) {
        os << "snr_db = " << format_list(c.snr_db) << "\n";
    }
    if (!c.mu_list.empty()) {
        os << "mu_list = " << format_list(c.mu_list) << "\n";
    }
    os << "match_step_sizes = " << (c.match_step_sizes ? "true" : "false") << "\n";
    os << "\n[output]\n";
    os << "out_dir = " << c.out_dir << "\n";
    os << "threads = " << c.threads << "\n";
    return os.str();
}

std::string config_template(ExperimentId id)
{
    const Defaults def = defaults_for(id);
    std::string algs;
    for (Algorithm a : def.algorithms) {
        algs += (algs.empty() ? "" : ", ") + std::string(algorithm_name(a));
    }
    const AlgorithmParams p;
    std::ostringstream os;
    os << "# Experiment configuration. Every key is optional except id;\n"
       << "# the value shown is the default used when the key is absent.\n\n"
       << "[experiment]\n"
       << "id = " << experiment_name(id) << "    # exp1 | exp2-snr | exp2-mu | exp3 | custom\n"
       << "algorithms = " << algs << "\n"
       << "# valid algorithms: " << algorithm_list() << "\n"
       << "filter_length = " << def.filter_length << "\n"
       << "horizon = " << def.horizon << "    # iterations per trial\n"
       << "trials = 500\n"
       << "seed = 1    # trial i uses seed + i\n"
       << "system_seed = 7    # draws the unknown system\n\n"
       << "[params]\n"
       << "mu = " << format_double(def.mu) << "\n"
       << "alpha = " << format_double(p.alpha) << "    # logarithmic-cost parameter\n"
       << "beta_slope = " << format_double(p.beta_slope) << "    # reweighted l1 slope\n"
       << "# budget = 1.0    # l1 budget t; default is the l1 norm of the reference solution\n"
       << "budget_step_limit = 0    # max |l1 correction| per step for reweighted variants; 0 -> 1/beta_slope\n\n"
       << "[scenario]\n"
       << "input = white    # white | ar1\n"
       << "# rho = 0.5    # AR(1) coefficient\n";
    if (!def.snr_db.empty()) {
        os << "snr_db = " << format_list(def.snr_db) << "    # exclusive with sigma_v2\n";
    } else {
        os << "sigma_v2 = " << format_double(def.sigma_v2) << "    # exclusive with snr_db\n";
    }
    if (!def.mu_list.empty()) {
        os << "mu_list = " << format_list(def.mu_list) << "\n";
    } else {
        os << "# mu_list = 0.03, 0.05, 0.1\n";
    }
    os << "match_step_sizes = true    # exp1: tune lms/clms mu to the lmls/clmls plateau\n\n"
       << "[output]\n"
       << "out_dir = results\n"
       << "threads = 0    # 0 -> all cores\n";
    return os.str();
}

}  // namespace clmls
