#ifndef HIV3CM_IO_HPP_
#define HIV3CM_IO_HPP_

#include <charconv>
#include <set>
#include <string>
#include <system_error>
#include <vector>

#include <nlohmann/json.hpp>

#include "hiv3cm/integrator.hpp"
#include "hiv3cm/model.hpp"
#include "hiv3cm/montecarlo.hpp"
#include "hiv3cm/stochastic.hpp"

namespace hiv3cm::io
{

using nlohmann::json;

/// Malformed or unknown configuration content; field() holds the json path.
class ConfigError : public InvalidInput
{
public:
    using InvalidInput::InvalidInput;
};

/// Shortest decimal text that parses back to exactly the same double.
inline std::string format_double(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

namespace detail
{

inline void require_object(const json& j, const std::string& path)
{
    if (!j.is_object()) {
        throw ConfigError(path, "expected an object");
    }
}

inline void reject_unknown(const json& j, const std::string& path, std::initializer_list<const char*> allowed)
{
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& item : j.items()) {
        if (!ok.count(item.key())) {
            throw ConfigError(path.empty() ? item.key() : path + "." + item.key(), "unknown key");
        }
    }
}

/// Runs a domain validator and re-scopes its error under the json path.
template <class F>
void scoped(const std::string& path, F&& check)
{
    try {
        check();
    }
    catch (const ConfigError&) {
        throw;
    }
    catch (const InvalidInput& e) {
        throw ConfigError(path.empty() ? e.field() : path + "." + e.field(), e.message());
    }
}

inline double number(const json& j, const std::string& path)
{
    if (!j.is_number()) {
        throw ConfigError(path, "expected a number");
    }
    return j.get<double>();
}

inline std::int64_t integer(const json& j, const std::string& path)
{
    if (!j.is_number_integer()) {
        throw ConfigError(path, "expected an integer");
    }
    return j.get<std::int64_t>();
}

inline std::string text(const json& j, const std::string& path)
{
    if (!j.is_string()) {
        throw ConfigError(path, "expected a string");
    }
    return j.get<std::string>();
}

inline const json& at(const json& j, const char* key, const std::string& path)
{
    const auto it = j.find(key);
    if (it == j.end()) {
        throw ConfigError(path.empty() ? key : path + "." + key, "missing required key");
    }
    return *it;
}

inline std::vector<double> numbers(const json& j, const std::string& path)
{
    if (!j.is_array()) {
        throw ConfigError(path, "expected an array of numbers");
    }
    std::vector<double> out;
    for (std::size_t i = 0; i < j.size(); ++i) {
        out.push_back(number(j[i], path + "[" + std::to_string(i) + "]"));
    }
    return out;
}

} // namespace detail

// ---- parameters and states ----

inline json to_json(const Parameters& q)
{
    return {{"lambda", q.lambda}, {"mu", q.mu}, {"k", q.k}, {"delta", q.delta}, {"p", q.p}, {"c", q.c}};
}

inline Parameters parameters_from_json(const json& j, const std::string& path = "parameters")
{
    using namespace detail;
    require_object(j, path);
    reject_unknown(j, path, {"lambda", "mu", "k", "delta", "p", "c"});
    Parameters q;
    q.lambda = number(at(j, "lambda", path), path + ".lambda");
    q.mu     = number(at(j, "mu", path), path + ".mu");
    q.k      = number(at(j, "k", path), path + ".k");
    q.delta  = number(at(j, "delta", path), path + ".delta");
    q.p      = number(at(j, "p", path), path + ".p");
    q.c      = number(at(j, "c", path), path + ".c");
    scoped(path, [&] { validate(q); });
    return q;
}

inline json to_json(const State& s)
{
    return {{"T", s.t_cells}, {"I", s.infected}, {"V", s.virions}};
}

inline State state_from_json(const json& j, const std::string& path)
{
    using namespace detail;
    require_object(j, path);
    reject_unknown(j, path, {"T", "I", "V"});
    State s{number(at(j, "T", path), path + ".T"), number(at(j, "I", path), path + ".I"),
            number(at(j, "V", path), path + ".V")};
    scoped(path, [&] { validate_initial(s); });
    return s;
}

// ---- integrator ----

inline json to_json(const IntegratorConfig& c)
{
    return {{"method", to_string(c.method)}, {"dt", c.dt},
            {"rel_tol", c.rel_tol},          {"abs_tol", c.abs_tol},
            {"max_steps", c.max_steps},      {"record_stride", c.record_stride}};
}

inline IntegratorConfig integrator_from_json(const json& j, const std::string& path = "integrator")
{
    using namespace detail;
    require_object(j, path);
    reject_unknown(j, path, {"method", "dt", "rel_tol", "abs_tol", "max_steps", "record_stride"});
    IntegratorConfig c;
    if (j.contains("method")) {
        const auto m = text(j["method"], path + ".method");
        if (m == "rk4") {
            c.method = Method::FixedRK4;
        }
        else if (m == "rk45") {
            c.method = Method::AdaptiveRK45;
        }
        else {
            throw ConfigError(path + ".method", "expected \"rk4\" or \"rk45\"");
        }
    }
    if (j.contains("dt")) {
        c.dt = number(j["dt"], path + ".dt");
    }
    if (j.contains("rel_tol")) {
        c.rel_tol = number(j["rel_tol"], path + ".rel_tol");
    }
    if (j.contains("abs_tol")) {
        c.abs_tol = number(j["abs_tol"], path + ".abs_tol");
    }
    if (j.contains("max_steps")) {
        c.max_steps = integer(j["max_steps"], path + ".max_steps");
    }
    if (j.contains("record_stride")) {
        c.record_stride = integer(j["record_stride"], path + ".record_stride");
    }
    scoped(path, [&] { validate(c); });
    return c;
}

// ---- distributions and scenarios ----

inline json to_json(const Distribution& dist)
{
    return std::visit(
        [](const auto& d) -> json {
            using D = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<D, Constant>) {
                return {{"type", "constant"}, {"value", d.value}};
            }
            else if constexpr (std::is_same_v<D, Uniform>) {
                return {{"type", "uniform"}, {"lo", d.lo}, {"hi", d.hi}};
            }
            else if constexpr (std::is_same_v<D, Triangular>) {
                return {{"type", "triangular"}, {"lo", d.lo}, {"mode", d.mode}, {"hi", d.hi}};
            }
            else {
                return {{"type", "truncated_normal"}, {"mean", d.mean}, {"sd", d.sd}, {"lo", d.lo}, {"hi", d.hi}};
            }
        },
        dist);
}

inline Distribution distribution_from_json(const json& j, const std::string& path)
{
    using namespace detail;
    require_object(j, path);
    const auto type = text(at(j, "type", path), path + ".type");
    auto num        = [&](const char* key) { return number(at(j, key, path), path + "." + key); };
    if (type == "constant") {
        reject_unknown(j, path, {"type", "value"});
        return Constant{num("value")};
    }
    if (type == "uniform") {
        reject_unknown(j, path, {"type", "lo", "hi"});
        return Uniform{num("lo"), num("hi")};
    }
    if (type == "triangular") {
        reject_unknown(j, path, {"type", "lo", "mode", "hi"});
        return Triangular{num("lo"), num("mode"), num("hi")};
    }
    if (type == "truncated_normal") {
        reject_unknown(j, path, {"type", "mean", "sd", "lo", "hi"});
        return TruncatedNormal{num("mean"), num("sd"), num("lo"), num("hi")};
    }
    throw ConfigError(path + ".type", "unknown distribution type \"" + type + "\"");
}

inline json to_json(const Scenario& s)
{
    json dists = {{"k", to_json(s.k)}, {"p", to_json(s.p)}, {"mu", to_json(s.mu)}, {"delta", to_json(s.delta)},
                  {"c", to_json(s.c)}};
    if (s.lambda) {
        dists["lambda"] = to_json(*s.lambda);
    }
    return {{"base", to_string(s.tag)},
            {"lambda_rule", s.lambda_rule == LambdaRule::TenTimesMu ? "ten_times_mu" : "independent"},
            {"distributions", dists}};
}

/**
 * Accepts either a built-in name ("uniform_triangular", "truncated_normal") or an
 * object {base, lambda_rule, sd, distributions} that starts from a built-in (or
 * "custom") and overrides pieces of it.
 */
inline Scenario scenario_from_json(const json& j, const std::string& path = "scenario")
{
    using namespace detail;
    auto builtin = [&](const std::string& name, const std::string& where) -> Scenario {
        if (name == "uniform_triangular") {
            return uniform_triangular_scenario();
        }
        if (name == "truncated_normal") {
            return truncated_normal_scenario();
        }
        if (name == "custom") {
            Scenario s;
            s.tag = ScenarioTag::Custom;
            return s;
        }
        throw ConfigError(where, "unknown scenario \"" + name + "\"");
    };
    if (j.is_string()) {
        const auto name = j.get<std::string>();
        if (name == "custom") {
            throw ConfigError(path, "a custom scenario must list its distributions");
        }
        return builtin(name, path);
    }
    require_object(j, path);
    reject_unknown(j, path, {"base", "lambda_rule", "sd", "distributions"});
    const std::string base = text(at(j, "base", path), path + ".base");
    Scenario s             = builtin(base, path + ".base");

    if (j.contains("sd")) {
        if (s.tag != ScenarioTag::TruncatedNormal) {
            throw ConfigError(path + ".sd", "sd overrides apply to the truncated_normal base only");
        }
        const json& sdj = j["sd"];
        require_object(sdj, path + ".sd");
        reject_unknown(sdj, path + ".sd", {"lambda", "mu", "k", "delta", "p"});
        StandardDeviations sd;
        auto take = [&](const char* key, double& field) {
            if (sdj.contains(key)) {
                field = number(sdj[key], path + ".sd." + key);
            }
        };
        take("lambda", sd.lambda);
        take("mu", sd.mu);
        take("k", sd.k);
        take("delta", sd.delta);
        take("p", sd.p);
        s = truncated_normal_scenario(sd);
    }
    if (j.contains("lambda_rule")) {
        const auto rule = text(j["lambda_rule"], path + ".lambda_rule");
        if (rule == "ten_times_mu") {
            s.lambda_rule = LambdaRule::TenTimesMu;
            s.lambda.reset();
        }
        else if (rule == "independent") {
            s.lambda_rule = LambdaRule::Independent;
        }
        else {
            throw ConfigError(path + ".lambda_rule", "expected \"ten_times_mu\" or \"independent\"");
        }
    }
    if (j.contains("distributions")) {
        const json& dj = j["distributions"];
        const auto dpath = path + ".distributions";
        require_object(dj, dpath);
        reject_unknown(dj, dpath, {"lambda", "mu", "k", "delta", "p", "c"});
        auto take = [&](const char* key, Distribution& field) {
            if (dj.contains(key)) {
                field = distribution_from_json(dj[key], dpath + "." + key);
            }
        };
        take("k", s.k);
        take("p", s.p);
        take("mu", s.mu);
        take("delta", s.delta);
        take("c", s.c);
        if (dj.contains("lambda")) {
            s.lambda = distribution_from_json(dj["lambda"], dpath + ".lambda");
        }
    }
    scoped(path, [&] { validate(s); });
    return s;
}

// ---- criterion ----

inline json to_json(const PersistenceCriterion& c)
{
    if (const auto* ft = std::get_if<FiniteTime>(&c)) {
        return {{"type", "finite_time"}, {"horizon_days", ft->horizon}, {"threshold", ft->threshold}};
    }
    return {{"type", "asymptotic_r"}};
}

inline PersistenceCriterion criterion_from_json(const json& j, const std::string& path = "criterion")
{
    using namespace detail;
    require_object(j, path);
    const auto type = text(at(j, "type", path), path + ".type");
    if (type == "asymptotic_r") {
        reject_unknown(j, path, {"type"});
        return AsymptoticR{};
    }
    if (type == "finite_time") {
        reject_unknown(j, path, {"type", "horizon_days", "threshold"});
        FiniteTime ft;
        if (j.contains("horizon_days")) {
            ft.horizon = number(j["horizon_days"], path + ".horizon_days");
        }
        if (j.contains("threshold")) {
            ft.threshold = number(j["threshold"], path + ".threshold");
        }
        scoped(path, [&] { validate(PersistenceCriterion{ft}); });
        return ft;
    }
    throw ConfigError(path + ".type", "expected \"asymptotic_r\" or \"finite_time\"");
}

// ---- experiment config ----

inline json to_json(const IcGrid& g)
{
    return {{"t0_values", g.t0_values}, {"v0_values", g.v0_values}, {"i0", g.i0}};
}

inline IcGrid grid_from_json(const json& j, const std::string& path = "grid")
{
    using namespace detail;
    if (j.is_string()) {
        if (j.get<std::string>() != "standard") {
            throw ConfigError(path, "the only named grid is \"standard\"");
        }
        return IcGrid::standard();
    }
    require_object(j, path);
    reject_unknown(j, path, {"t0_values", "v0_values", "i0"});
    IcGrid g;
    g.t0_values = numbers(at(j, "t0_values", path), path + ".t0_values");
    g.v0_values = numbers(at(j, "v0_values", path), path + ".v0_values");
    if (j.contains("i0")) {
        g.i0 = number(j["i0"], path + ".i0");
    }
    return g;
}

/// Normalized, fully expanded form; experiment_config_from_json() reads it back unchanged.
inline json to_json(const ExperimentConfig& cfg)
{
    json j = {{"scenario", to_json(cfg.scenario)},
              {"criterion", to_json(cfg.criterion)},
              {"trials", cfg.trials},
              {"master_seed", cfg.master_seed},
              {"integrator", to_json(cfg.integrator)}};
    if (const auto* s = std::get_if<State>(&cfg.initial)) {
        j["init"] = to_json(*s);
    }
    else {
        j["grid"] = to_json(std::get<IcGrid>(cfg.initial));
    }
    return j;
}

inline ExperimentConfig experiment_config_from_json(const json& j)
{
    using namespace detail;
    require_object(j, "");
    reject_unknown(j, "", {"scenario", "criterion", "trials", "master_seed", "init", "grid", "integrator"});
    ExperimentConfig cfg;
    cfg.scenario  = scenario_from_json(at(j, "scenario", ""));
    cfg.criterion = criterion_from_json(at(j, "criterion", ""));
    cfg.trials    = integer(at(j, "trials", ""), "trials");
    if (j.contains("master_seed")) {
        if (!j["master_seed"].is_number_unsigned()) {
            throw ConfigError("master_seed", "expected a nonnegative integer");
        }
        cfg.master_seed = j["master_seed"].get<std::uint64_t>();
    }
    const bool has_init = j.contains("init"), has_grid = j.contains("grid");
    if (has_init == has_grid) {
        throw ConfigError("init", "exactly one of \"init\" and \"grid\" is required");
    }
    cfg.initial = has_init ? InitialCondition{state_from_json(j["init"], "init")}
                           : InitialCondition{grid_from_json(j["grid"])};
    if (j.contains("integrator")) {
        cfg.integrator = integrator_from_json(j["integrator"]);
    }
    scoped("", [&] { validate(cfg); });
    return cfg;
}

// ---- output documents ----

inline json complex_list(const Roots3& roots)
{
    json arr = json::array();
    for (const auto& z : roots) {
        arr.push_back({{"re", z.real()}, {"im", z.imag()}});
    }
    return arr;
}

inline json to_json(const CubicCoefficients& a)
{
    return {{"a1", a.a1}, {"a2", a.a2}, {"a3", a.a3}};
}

inline json report_document(const Parameters& q, const StabilityReport& rep)
{
    return {{"parameters", to_json(q)},
            {"r", rep.r},
            {"extinction_eq", to_json(rep.extinction_eq)},
            {"persistence_eq", to_json(rep.persistence_eq)},
            {"persistence_eq_admissible", rep.persistence_eq_admissible},
            {"coefficients_at_extinction", to_json(rep.coefficients_at_extinction)},
            {"coefficients_at_persistence", to_json(rep.coefficients_at_persistence)},
            {"routh_hurwitz_persistence", routh_hurwitz_stable(rep.coefficients_at_persistence)},
            {"eigenvalues_at_extinction", complex_list(rep.eigenvalues_at_extinction)},
            {"eigenvalues_at_persistence", complex_list(rep.eigenvalues_at_persistence)},
            {"stable_equilibrium", to_string(rep.stable_equilibrium)}};
}

inline json tally_json(const Tally& t)
{
    const Interval ci = t.ci();
    return {{"trials", t.trials},       {"failed", t.failed},  {"extinct", t.extinct},
            {"p_extinct", t.p_extinct()}, {"ci_low", ci.lo}, {"ci_high", ci.hi}};
}

/// Contains no timestamps, so identical runs give byte-identical text.
inline json estimate_document(const PersistenceEstimate& est)
{
    json j = {{"scenario", to_string(est.provenance.scenario)},
              {"criterion", to_json(est.provenance.criterion)},
              {"trials", est.n_trials},
              {"failed", est.n_failed},
              {"extinct", est.n_extinct},
              {"persist", est.n_persist},
              {"p_extinct", est.p_extinct},
              {"ci_low", est.ci_low},
              {"ci_high", est.ci_high},
              {"master_seed", est.provenance.master_seed},
              {"prng", est.provenance.prng},
              {"requested_trials", est.requested},
              {"dropped_trials", est.dropped}};
    if (est.cell_mean_p_extinct) {
        j["p_extinct_cell_mean"] = *est.cell_mean_p_extinct;
        json t0 = json::array(), v0 = json::array();
        for (const auto& m : est.by_t0) {
            json e  = tally_json(m.tally);
            e["T0"] = m.value;
            t0.push_back(e);
        }
        for (const auto& m : est.by_v0) {
            json e  = tally_json(m.tally);
            e["V0"] = m.value;
            v0.push_back(e);
        }
        j["marginal_by_T0"] = t0;
        j["marginal_by_V0"] = v0;
    }
    j["warnings"] = est.warnings;
    return j;
}

inline json exemplar_json(const DisagreementExemplar& e)
{
    return {{"trial_index", e.trial_index}, {"parameters", to_json(e.params)}, {"init", to_json(e.init)},
            {"r", e.r},                     {"v_at_horizon", e.v_at_horizon}};
}

inline json disagreement_document(const DisagreementSummary& d)
{
    json above = json::array(), below = json::array();
    for (const auto& e : d.r_above_v_below_examples) {
        above.push_back(exemplar_json(e));
    }
    for (const auto& e : d.r_below_v_above_examples) {
        below.push_back(exemplar_json(e));
    }
    const auto ratio = [&](std::int64_t n) {
        return d.n_trials == 0 ? 0.0 : static_cast<double>(n) / static_cast<double>(d.n_trials);
    };
    return {{"scenario", to_string(d.provenance.scenario)},
            {"criterion", to_json(d.provenance.criterion)},
            {"trials", d.n_trials},
            {"failed", d.n_failed},
            {"asymptotic_extinct", d.asymptotic_extinct},
            {"finite_extinct", d.finite_extinct},
            {"p_extinct_asymptotic", ratio(d.asymptotic_extinct)},
            {"p_extinct_finite", ratio(d.finite_extinct)},
            {"r_above_one_v_below_threshold", {{"count", d.r_above_v_below}, {"exemplars", above}}},
            {"r_at_most_one_v_above_threshold", {{"count", d.r_below_v_above}, {"exemplars", below}}},
            {"master_seed", d.provenance.master_seed},
            {"prng", d.provenance.prng}};
}

// ---- CSV ----

inline std::string trajectory_csv(const Trajectory& traj)
{
    std::string out = "t,T,I,V\n";
    for (const auto& s : traj.samples) {
        out += format_double(s.t) + ',' + format_double(s.state.t_cells) + ',' + format_double(s.state.infected) +
               ',' + format_double(s.state.virions) + '\n';
    }
    return out;
}

inline std::string sweep_csv(const PersistenceEstimate& est)
{
    std::string out = "T0,V0,trials,extinct,p_extinct,ci_low,ci_high\n";
    for (const auto& c : est.cells) {
        const Interval ci = c.tally.ci();
        out += format_double(c.init.t_cells) + ',' + format_double(c.init.virions) + ',' +
               std::to_string(c.tally.trials) + ',' + std::to_string(c.tally.extinct) + ',' +
               format_double(c.tally.p_extinct()) + ',' + format_double(ci.lo) + ',' + format_double(ci.hi) + '\n';
    }
    return out;
}

/// One row per trial: trial_index,R,v_at_horizon,persisted (failed trials carry status "failed").
inline std::string per_trial_csv(const std::vector<TrialRecord>& records)
{
    std::string out = "trial_index,R,v_at_horizon,persisted\n";
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        out += std::to_string(i) + ',';
        if (r.failed) {
            out += ",,failed\n";
            continue;
        }
        out += format_double(r.r) + ',' + (std::isnan(r.v_at_horizon) ? std::string() : format_double(r.v_at_horizon)) +
               ',' + (r.persisted ? "1" : "0") + '\n';
    }
    return out;
}

} // namespace hiv3cm::io

#endif // HIV3CM_IO_HPP_
