// hiv3cm command-line driver: analyze, simulate, montecarlo, disagreement.
//
// Exit codes: 0 success, 2 config/validation error, 3 integration failure,
// 4 Monte-Carlo run finished with failed trials.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include <openssl/evp.h>

#include "CLI11.hpp"
#include "hiv3cm/hiv3cm.hpp"

namespace fs = std::filesystem;
using hiv3cm::io::json;

namespace
{

enum ExitCode : int
{
    ok                  = 0,
    config_error        = 2,
    integration_failure = 3,
    trial_failures      = 4,
};

struct Globals {
    std::optional<std::uint64_t> seed;
    unsigned workers = hiv3cm::default_workers();
    std::string out_dir = ".";
};

class UsageError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

std::string sha256_hex(const std::string& data)
{
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr);
    std::ostringstream os;
    for (unsigned i = 0; i < len; ++i) {
        os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
    }
    return os.str();
}

std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw UsageError("cannot read " + path);
    }
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

json read_json(const std::string& path)
{
    try {
        return json::parse(read_file(path));
    }
    catch (const json::parse_error& e) {
        throw UsageError(path + ": " + e.what());
    }
}

/// Writes output files and remembers their checksums for the manifest.
class OutputSet
{
public:
    explicit OutputSet(fs::path dir)
        : m_dir(std::move(dir))
    {
        fs::create_directories(m_dir);
    }

    void write(const fs::path& name, const std::string& content)
    {
        const fs::path path = name.is_absolute() ? name : m_dir / name;
        if (path.has_parent_path()) {
            fs::create_directories(path.parent_path());
        }
        std::ofstream out(path, std::ios::binary);
        out << content;
        if (!out) {
            throw std::runtime_error("cannot write " + path.string());
        }
        m_checksums[name.string()] = sha256_hex(content);
    }

    void write_manifest(const std::string& command, const json& config, std::optional<std::uint64_t> seed,
                        std::chrono::system_clock::time_point started)
    {
        const auto finished = std::chrono::system_clock::now();
        const std::time_t t = std::chrono::system_clock::to_time_t(started);
        char stamp[32];
        std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
        json m = {{"tool", "hiv3cm"},
                  {"version", hiv3cm::version},
                  {"command", command},
                  {"config", config},
                  {"prng", hiv3cm::Rng::identity},
                  {"started_utc", stamp},
                  {"wall_clock_seconds", std::chrono::duration<double>(finished - started).count()},
                  {"outputs", m_checksums}};
        m["master_seed"] = seed ? json(*seed) : json(nullptr);
        std::ofstream out(m_dir / (command + ".manifest.json"), std::ios::binary);
        out << m.dump(2) << '\n';
    }

private:
    fs::path m_dir;
    std::map<std::string, std::string> m_checksums;
};

// ---- parameter sources shared by analyze and simulate ----

struct ParameterFlags {
    std::string preset;
    std::string config;
    std::optional<double> lambda, mu, k, delta, p, c;

    void add_to(CLI::App* cmd)
    {
        cmd->add_option("--preset", preset, "Named parameter set (table1-means)");
        cmd->add_option("--config", config, "JSON file with a \"parameters\" object");
        cmd->add_option("--lambda", lambda, "T-cell growth rate (cells/uL/day)");
        cmd->add_option("--mu", mu, "T-cell death rate (1/day)");
        cmd->add_option("--k", k, "Infection rate (uL/day)");
        cmd->add_option("--delta", delta, "Infected T-cell death rate (1/day)");
        cmd->add_option("--p", p, "Virion production rate (1/day)");
        cmd->add_option("--c", c, "Viral clearance rate (1/day)");
    }

    hiv3cm::Parameters resolve(const json* file) const
    {
        std::map<std::string, std::optional<double>> values{{"lambda", {}}, {"mu", {}}, {"k", {}},
                                                            {"delta", {}},  {"p", {}},  {"c", {}}};
        if (!preset.empty()) {
            if (preset != "table1-means") {
                throw UsageError("unknown preset \"" + preset + "\"");
            }
            constexpr auto q = hiv3cm::table1_means();
            values = {{"lambda", q.lambda}, {"mu", q.mu}, {"k", q.k}, {"delta", q.delta}, {"p", q.p}, {"c", q.c}};
        }
        if (file && file->contains("parameters")) {
            const json& pj = (*file)["parameters"];
            if (!pj.is_object()) {
                throw hiv3cm::io::ConfigError("parameters", "expected an object");
            }
            for (const auto& item : pj.items()) {
                if (!values.count(item.key())) {
                    throw hiv3cm::io::ConfigError("parameters." + item.key(), "unknown key");
                }
                if (!item.value().is_number()) {
                    throw hiv3cm::io::ConfigError("parameters." + item.key(), "expected a number");
                }
                values[item.key()] = item.value().get<double>();
            }
        }
        const std::pair<const char*, const std::optional<double>*> flags[] = {
            {"lambda", &lambda}, {"mu", &mu}, {"k", &k}, {"delta", &delta}, {"p", &p}, {"c", &c}};
        for (const auto& [name, flag] : flags) {
            if (*flag) {
                values[name] = **flag;
            }
        }
        for (const auto& [name, v] : values) {
            if (!v) {
                throw hiv3cm::InvalidInput(name, "missing (give --" + name + ", --preset or --config)");
            }
        }
        hiv3cm::Parameters q{*values["lambda"], *values["mu"], *values["k"],
                             *values["delta"],  *values["p"],  *values["c"]};
        hiv3cm::validate(q);
        return q;
    }
};

int cmd_analyze(const Globals& g, const ParameterFlags& flags)
{
    const auto started = std::chrono::system_clock::now();
    std::optional<json> file;
    if (!flags.config.empty()) {
        file = read_json(flags.config);
        hiv3cm::io::detail::reject_unknown(*file, "", {"parameters"});
    }
    const auto q   = flags.resolve(file ? &*file : nullptr);
    const auto rep = hiv3cm::classify(q);
    const json doc = hiv3cm::io::report_document(q, rep);

    OutputSet out(g.out_dir);
    out.write("stability_report.json", doc.dump(2) + "\n");
    out.write_manifest("analyze", {{"parameters", hiv3cm::io::to_json(q)}}, g.seed, started);
    std::cout << doc.dump(2) << '\n';
    return ok;
}

struct SimulateFlags {
    ParameterFlags params;
    std::optional<double> t0, i0, v0, t_end;
    std::optional<std::string> method;
    std::optional<double> dt, rel_tol, abs_tol;
    std::optional<std::int64_t> max_steps, record_stride;
    std::string output = "trajectory.csv";
};

int cmd_simulate(const Globals& g, const SimulateFlags& f)
{
    const auto started = std::chrono::system_clock::now();
    std::optional<json> file;
    if (!f.params.config.empty()) {
        file = read_json(f.params.config);
        hiv3cm::io::detail::reject_unknown(*file, "", {"parameters", "init", "t_end", "integrator"});
    }
    const auto q = f.params.resolve(file ? &*file : nullptr);

    hiv3cm::State init{1000.0, 0.0, 0.001};
    double t_end = 100.0;
    hiv3cm::IntegratorConfig cfg;
    if (file) {
        if (file->contains("init")) {
            init = hiv3cm::io::state_from_json((*file)["init"], "init");
        }
        if (file->contains("t_end")) {
            t_end = hiv3cm::io::detail::number((*file)["t_end"], "t_end");
        }
        if (file->contains("integrator")) {
            cfg = hiv3cm::io::integrator_from_json((*file)["integrator"]);
        }
    }
    init.t_cells  = f.t0.value_or(init.t_cells);
    init.infected = f.i0.value_or(init.infected);
    init.virions  = f.v0.value_or(init.virions);
    t_end         = f.t_end.value_or(t_end);
    if (f.method) {
        cfg.method = hiv3cm::io::integrator_from_json({{"method", *f.method}}).method;
    }
    cfg.dt            = f.dt.value_or(cfg.dt);
    cfg.rel_tol       = f.rel_tol.value_or(cfg.rel_tol);
    cfg.abs_tol       = f.abs_tol.value_or(cfg.abs_tol);
    cfg.max_steps     = f.max_steps.value_or(cfg.max_steps);
    cfg.record_stride = f.record_stride.value_or(cfg.record_stride);

    hiv3cm::Trajectory traj;
    try {
        traj = hiv3cm::integrate(q, init, t_end, cfg);
    }
    catch (const hiv3cm::IntegrationError& e) {
        std::cerr << "integration failed: " << e.kind() << ": " << e.what() << '\n';
        return integration_failure;
    }

    OutputSet out(g.out_dir);
    out.write(f.output, hiv3cm::io::trajectory_csv(traj));
    const json echo = {{"parameters", hiv3cm::io::to_json(q)},
                       {"init", hiv3cm::io::to_json(init)},
                       {"t_end", t_end},
                       {"integrator", hiv3cm::io::to_json(cfg)}};
    out.write_manifest("simulate", echo, g.seed, started);
    const auto& last = traj.samples.back();
    std::cout << "wrote " << traj.samples.size() << " samples; final t=" << last.t << " T=" << last.state.t_cells
              << " I=" << last.state.infected << " V=" << last.state.virions << '\n';
    return ok;
}

hiv3cm::ExperimentConfig load_experiment(const Globals& g, const std::string& path)
{
    auto cfg = hiv3cm::io::experiment_config_from_json(read_json(path));
    if (g.seed) {
        cfg.master_seed = *g.seed;
    }
    return cfg;
}

struct MonteCarloFlags {
    std::string config;
    bool per_cell = false;
    std::string per_trial;
};

int cmd_montecarlo(const Globals& g, const MonteCarloFlags& f)
{
    const auto started = std::chrono::system_clock::now();
    const auto cfg     = load_experiment(g, f.config);
    if (f.per_cell && !std::holds_alternative<hiv3cm::IcGrid>(cfg.initial)) {
        throw hiv3cm::io::ConfigError("grid", "--per-cell needs a grid in the config");
    }
    const auto records = hiv3cm::run_trials(cfg, g.workers);
    const auto est     = hiv3cm::aggregate(cfg, records);

    OutputSet out(g.out_dir);
    out.write("estimate.json", hiv3cm::io::estimate_document(est).dump(2) + "\n");
    if (f.per_cell) {
        out.write("sweep.csv", hiv3cm::io::sweep_csv(est));
    }
    if (!f.per_trial.empty()) {
        out.write(f.per_trial, hiv3cm::io::per_trial_csv(records));
    }
    out.write_manifest("montecarlo", hiv3cm::io::to_json(cfg), cfg.master_seed, started);

    for (const auto& w : est.warnings) {
        std::cerr << "warning: " << w << '\n';
    }
    std::cout << "trials=" << est.n_trials << " extinct=" << est.n_extinct << " p_extinct=" << est.p_extinct
              << " 95% CI [" << est.ci_low << ", " << est.ci_high << "] failed=" << est.n_failed << '\n';
    return est.n_failed > 0 ? trial_failures : ok;
}

int cmd_disagreement(const Globals& g, const std::string& config)
{
    const auto started = std::chrono::system_clock::now();
    const auto cfg     = load_experiment(g, config);
    const auto summary = hiv3cm::criterion_disagreement(cfg, g.workers);

    OutputSet out(g.out_dir);
    out.write("disagreement.json", hiv3cm::io::disagreement_document(summary).dump(2) + "\n");
    out.write_manifest("disagreement", hiv3cm::io::to_json(cfg), cfg.master_seed, started);
    std::cout << "trials=" << summary.n_trials << " R>1 but below threshold=" << summary.r_above_v_below
              << " R<=1 but above threshold=" << summary.r_below_v_above << " failed=" << summary.n_failed << '\n';
    return summary.n_failed > 0 ? trial_failures : ok;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Three-component in-host HIV model: stability analysis, simulation and persistence estimates"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_version_flag("--version", hiv3cm::version);

    Globals g;
    app.add_option("--seed", g.seed, "Master seed (overrides the config file)");
    app.add_option("--workers", g.workers, "Worker threads")->check(CLI::PositiveNumber);
    app.add_option("--out-dir", g.out_dir, "Directory for output files");

    ParameterFlags analyze_flags;
    auto* analyze = app.add_subcommand("analyze", "Reproduction number, equilibria and local stability");
    analyze_flags.add_to(analyze);

    SimulateFlags sim;
    auto* simulate = app.add_subcommand("simulate", "Integrate one trajectory to CSV (t,T,I,V)");
    sim.params.add_to(simulate);
    simulate->add_option("--T0", sim.t0, "Initial healthy T-cells (cells/uL)");
    simulate->add_option("--I0", sim.i0, "Initial infected T-cells (cells/uL)");
    simulate->add_option("--V0", sim.v0, "Initial virions (copies/uL)");
    simulate->add_option("--t-end", sim.t_end, "Horizon (days)");
    simulate->add_option("--method", sim.method, "rk4 or rk45");
    simulate->add_option("--dt", sim.dt, "Step for rk4 (days)");
    simulate->add_option("--rel-tol", sim.rel_tol, "Relative tolerance for rk45");
    simulate->add_option("--abs-tol", sim.abs_tol, "Absolute tolerance for rk45");
    simulate->add_option("--max-steps", sim.max_steps, "Step budget");
    simulate->add_option("--record-stride", sim.record_stride, "Store every n-th accepted step");
    simulate->add_option("--output", sim.output, "CSV file name inside --out-dir");

    MonteCarloFlags mc;
    auto* montecarlo = app.add_subcommand("montecarlo", "Estimate extinction probability from a config file");
    montecarlo->add_option("--config", mc.config, "Experiment config (JSON)")->required();
    montecarlo->add_flag("--per-cell", mc.per_cell, "Also write sweep.csv with per-cell estimates");
    montecarlo->add_option("--per-trial", mc.per_trial, "Write per-trial CSV to this path");

    std::string dis_config;
    auto* disagreement = app.add_subcommand("disagreement", "Trials where R and the finite-time test disagree");
    disagreement->add_option("--config", dis_config, "Experiment config (JSON)")->required();

    try {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : config_error;
    }

    try {
        if (*analyze) {
            return cmd_analyze(g, analyze_flags);
        }
        if (*simulate) {
            return cmd_simulate(g, sim);
        }
        if (*montecarlo) {
            return cmd_montecarlo(g, mc);
        }
        return cmd_disagreement(g, dis_config);
    }
    catch (const hiv3cm::InvalidInput& e) {
        std::cerr << "invalid input: " << e.what() << '\n';
        return config_error;
    }
    catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return config_error;
    }
    catch (const json::exception& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return config_error;
    }
}
