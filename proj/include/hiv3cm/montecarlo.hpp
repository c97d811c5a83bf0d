#ifndef HIV3CM_MONTECARLO_HPP_
#define HIV3CM_MONTECARLO_HPP_

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "hiv3cm/integrator.hpp"
#include "hiv3cm/model.hpp"
#include "hiv3cm/stochastic.hpp"

namespace hiv3cm
{

/// Persist iff R > 1.
struct AsymptoticR {
    bool operator==(const AsymptoticR&) const = default;
};

/// Persist iff V(horizon) >= threshold (inclusive).
struct FiniteTime {
    double horizon   = 100.0;
    double threshold = 50.0;
    bool operator==(const FiniteTime&) const = default;
};

using PersistenceCriterion = std::variant<AsymptoticR, FiniteTime>;

inline void validate(const PersistenceCriterion& criterion)
{
    if (auto ft = std::get_if<FiniteTime>(&criterion)) {
        if (!(ft->horizon > 0.0) || !std::isfinite(ft->horizon)) {
            throw InvalidInput("horizon_days", "must be positive and finite");
        }
        if (!(ft->threshold > 0.0) || !std::isfinite(ft->threshold)) {
            throw InvalidInput("threshold", "must be positive and finite");
        }
    }
}

inline bool persists_at(const FiniteTime& criterion, double v_at_horizon)
{
    return v_at_horizon >= criterion.threshold;
}

class IntegrationFailed : public std::runtime_error
{
public:
    IntegrationFailed(std::string kind, const std::string& what)
        : std::runtime_error(what)
        , m_kind(std::move(kind))
    {
    }
    const std::string& kind() const noexcept
    {
        return m_kind;
    }

private:
    std::string m_kind;
};

struct TrialOutcome {
    bool persisted = false;
    double r       = 0.0;
    std::optional<double> v_at_horizon;
    std::uint64_t trial_index = 0;
    Parameters params;
};

/**
 * @brief Classifies one parameter set.
 *
 * AsymptoticR evaluates R only and never touches init. FiniteTime integrates to the
 * horizon; integrator errors are rethrown as IntegrationFailed.
 */
inline TrialOutcome run_trial(const Parameters& params, const State& init, const PersistenceCriterion& criterion,
                              const IntegratorConfig& integrator, std::uint64_t trial_index = 0)
{
    TrialOutcome out;
    out.trial_index = trial_index;
    out.params      = params;
    out.r           = reproduction_number(params);
    if (std::holds_alternative<AsymptoticR>(criterion)) {
        out.persisted = out.r > 1.0;
        return out;
    }
    const auto& ft = std::get<FiniteTime>(criterion);
    try {
        const State end  = state_at(params, init, ft.horizon, integrator);
        out.v_at_horizon = end.virions;
        out.persisted    = persists_at(ft, end.virions);
    }
    catch (const IntegrationError& e) {
        throw IntegrationFailed(e.kind(), e.what());
    }
    return out;
}

/// Rectangular grid of starting states, T0-major: cell = t0_index * v0_values.size() + v0_index.
struct IcGrid {
    std::vector<double> t0_values;
    std::vector<double> v0_values;
    double i0 = 0.0;

    bool operator==(const IcGrid&) const = default;

    std::size_t cells() const
    {
        return t0_values.size() * v0_values.size();
    }

    State cell_state(std::size_t cell) const
    {
        return {t0_values[cell / v0_values.size()], i0, v0_values[cell % v0_values.size()]};
    }

    /// T0 in {100, 200, ..., 1000}, V0 in {100, ..., 500}, I0 = 0: 50 cells.
    static IcGrid standard()
    {
        IcGrid g;
        for (int i = 1; i <= 10; ++i) {
            g.t0_values.push_back(100.0 * i);
        }
        for (int i = 1; i <= 5; ++i) {
            g.v0_values.push_back(100.0 * i);
        }
        return g;
    }
};

using InitialCondition = std::variant<State, IcGrid>;

struct ExperimentConfig {
    Scenario scenario                = uniform_triangular_scenario();
    PersistenceCriterion criterion   = AsymptoticR{};
    std::int64_t trials              = 1000;
    std::uint64_t master_seed        = 0;
    InitialCondition initial         = State{1000.0, 0.0, 0.001};
    IntegratorConfig integrator;

    bool operator==(const ExperimentConfig&) const = default;
};

inline void validate(const ExperimentConfig& cfg)
{
    validate(cfg.scenario);
    validate(cfg.criterion);
    validate(cfg.integrator);
    if (cfg.trials < 1) {
        throw InvalidInput("trials", "must be at least 1");
    }
    if (auto s = std::get_if<State>(&cfg.initial)) {
        validate_initial(*s);
    }
    else {
        const auto& g = std::get<IcGrid>(cfg.initial);
        if (g.t0_values.empty() || g.v0_values.empty()) {
            throw InvalidInput("grid", "t0_values and v0_values must be nonempty");
        }
        for (double v : g.t0_values) {
            if (!(v > 0.0) || !std::isfinite(v)) {
                throw InvalidInput("t0_values", "grid values must be positive");
            }
        }
        for (double v : g.v0_values) {
            if (!(v > 0.0) || !std::isfinite(v)) {
                throw InvalidInput("v0_values", "grid values must be positive");
            }
        }
        if (!(g.i0 >= 0.0) || !std::isfinite(g.i0)) {
            throw InvalidInput("i0", "must be nonnegative");
        }
        if (static_cast<std::uint64_t>(cfg.trials) < g.cells()) {
            throw InvalidInput("trials", "must be at least the number of grid cells");
        }
    }
}

struct Interval {
    double lo = 0.0;
    double hi = 1.0;
};

/// Wilson score interval for a binomial proportion (z = 1.96 gives 95%).
inline Interval wilson_interval(std::int64_t successes, std::int64_t n, double z = 1.959963984540054)
{
    if (n <= 0) {
        return {0.0, 1.0};
    }
    const double nn     = static_cast<double>(n);
    const double phat   = static_cast<double>(successes) / nn;
    const double z2     = z * z;
    const double denom  = 1.0 + z2 / nn;
    const double centre = (phat + z2 / (2.0 * nn)) / denom;
    const double half   = z * std::sqrt(phat * (1.0 - phat) / nn + z2 / (4.0 * nn * nn)) / denom;
    Interval ci{std::max(0.0, centre - half), std::min(1.0, centre + half)};
    // guard the rounding at the ends so the point estimate is always enclosed
    if (successes == 0) {
        ci.lo = 0.0;
    }
    if (successes == n) {
        ci.hi = 1.0;
    }
    ci.lo = std::min(ci.lo, phat);
    ci.hi = std::max(ci.hi, phat);
    return ci;
}

/// How trials map onto starting states.
struct TrialLayout {
    std::int64_t used     = 0; // trials actually run
    std::int64_t per_cell = 0; // zero when a single initial state is used
    std::size_t cells     = 1;

    static TrialLayout of(const ExperimentConfig& cfg)
    {
        TrialLayout l;
        if (auto g = std::get_if<IcGrid>(&cfg.initial)) {
            l.cells    = g->cells();
            l.per_cell = cfg.trials / static_cast<std::int64_t>(l.cells);
            l.used     = l.per_cell * static_cast<std::int64_t>(l.cells);
        }
        else {
            l.used = cfg.trials;
        }
        return l;
    }

    std::size_t cell_of(std::int64_t trial) const
    {
        return per_cell == 0 ? 0 : static_cast<std::size_t>(trial / per_cell);
    }
};

inline State initial_state_for(const ExperimentConfig& cfg, const TrialLayout& layout, std::int64_t trial)
{
    if (auto s = std::get_if<State>(&cfg.initial)) {
        return *s;
    }
    return std::get<IcGrid>(cfg.initial).cell_state(layout.cell_of(trial));
}

/// Compact per-trial result held for every trial of a run.
struct TrialRecord {
    bool failed    = false;
    bool persisted = false;
    double r       = 0.0;
    double v_at_horizon = std::numeric_limits<double>::quiet_NaN();
    const char* failure = nullptr;
};

inline unsigned default_workers()
{
    return std::max(1u, std::thread::hardware_concurrency());
}

/**
 * @brief Runs every trial of cfg, one record per trial index.
 *
 * Trial i draws its parameters from SeedSpec(master_seed, i). Workers pull fixed-size
 * chunks of indices; records land at their own index so the result is independent of
 * the worker count and scheduling.
 */
inline std::vector<TrialRecord> run_trials(const ExperimentConfig& cfg, unsigned workers = 1)
{
    validate(cfg);
    const TrialLayout layout = TrialLayout::of(cfg);
    std::vector<TrialRecord> records(static_cast<std::size_t>(layout.used));

    auto run_one = [&](std::int64_t i) {
        TrialRecord& rec = records[static_cast<std::size_t>(i)];
        try {
            const Parameters q = sample_parameters(cfg.scenario, {cfg.master_seed, static_cast<std::uint64_t>(i)});
            const TrialOutcome out =
                run_trial(q, initial_state_for(cfg, layout, i), cfg.criterion, cfg.integrator, static_cast<std::uint64_t>(i));
            rec.persisted = out.persisted;
            rec.r         = out.r;
            if (out.v_at_horizon) {
                rec.v_at_horizon = *out.v_at_horizon;
            }
        }
        catch (const IntegrationFailed&) {
            rec.failed  = true;
            rec.failure = "IntegrationFailed";
        }
        catch (const RejectionBudgetExceeded&) {
            rec.failed  = true;
            rec.failure = "RejectionBudgetExceeded";
        }
        catch (const InvalidInput&) {
            rec.failed  = true;
            rec.failure = "InvalidParameters";
        }
    };

    constexpr std::int64_t chunk = 64;
    std::atomic<std::int64_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::int64_t begin = next.fetch_add(chunk);
            if (begin >= layout.used) {
                return;
            }
            const std::int64_t end = std::min(layout.used, begin + chunk);
            for (std::int64_t i = begin; i < end; ++i) {
                run_one(i);
            }
        }
    };

    workers = std::max(1u, workers);
    if (workers == 1) {
        worker();
    }
    else {
        std::vector<std::jthread> pool;
        pool.reserve(workers);
        for (unsigned w = 0; w < workers; ++w) {
            pool.emplace_back(worker);
        }
    }
    return records;
}

struct Tally {
    std::int64_t trials  = 0; // completed trials
    std::int64_t extinct = 0;
    std::int64_t failed  = 0;

    double p_extinct() const
    {
        return trials == 0 ? 0.0 : static_cast<double>(extinct) / static_cast<double>(trials);
    }
    Interval ci() const
    {
        return wilson_interval(extinct, trials);
    }
};

struct CellEstimate {
    std::size_t cell = 0;
    State init;
    Tally tally;
};

struct MarginalEstimate {
    double value = 0.0; // T0 or V0 of this slice
    Tally tally;
};

struct Provenance {
    std::uint64_t master_seed = 0;
    ScenarioTag scenario      = ScenarioTag::Custom;
    PersistenceCriterion criterion;
    std::string prng = Rng::identity;
};

struct PersistenceEstimate {
    std::int64_t requested = 0;
    std::int64_t dropped   = 0; // grid remainder not run
    std::int64_t n_trials  = 0; // completed: n_extinct + n_persist
    std::int64_t n_extinct = 0;
    std::int64_t n_persist = 0;
    std::int64_t n_failed  = 0;
    double p_extinct = 0.0;
    double ci_low    = 0.0;
    double ci_high   = 1.0;
    std::vector<CellEstimate> cells;
    std::vector<MarginalEstimate> by_t0;
    std::vector<MarginalEstimate> by_v0;
    std::optional<double> cell_mean_p_extinct; // unweighted average over cells
    Provenance provenance;
    std::vector<std::string> warnings;
};

/// Order-independent reduction of trial records into counts and intervals.
inline PersistenceEstimate aggregate(const ExperimentConfig& cfg, const std::vector<TrialRecord>& records)
{
    const TrialLayout layout = TrialLayout::of(cfg);
    PersistenceEstimate est;
    est.requested  = cfg.trials;
    est.dropped    = cfg.trials - layout.used;
    est.provenance = {cfg.master_seed, cfg.scenario.tag, cfg.criterion, Rng::identity};

    const auto* grid = std::get_if<IcGrid>(&cfg.initial);
    std::vector<Tally> per_cell(layout.cells);
    for (std::size_t i = 0; i < records.size(); ++i) {
        Tally& t = per_cell[layout.cell_of(static_cast<std::int64_t>(i))];
        if (records[i].failed) {
            ++t.failed;
            continue;
        }
        ++t.trials;
        if (!records[i].persisted) {
            ++t.extinct;
        }
    }
    for (const Tally& t : per_cell) {
        est.n_trials += t.trials;
        est.n_extinct += t.extinct;
        est.n_failed += t.failed;
    }
    est.n_persist = est.n_trials - est.n_extinct;
    est.p_extinct = est.n_trials == 0 ? 0.0 : static_cast<double>(est.n_extinct) / static_cast<double>(est.n_trials);
    const Interval ci = wilson_interval(est.n_extinct, est.n_trials);
    est.ci_low        = ci.lo;
    est.ci_high       = ci.hi;

    if (grid) {
        const std::size_t nv = grid->v0_values.size();
        est.by_t0.resize(grid->t0_values.size());
        est.by_v0.resize(nv);
        for (std::size_t i = 0; i < grid->t0_values.size(); ++i) {
            est.by_t0[i].value = grid->t0_values[i];
        }
        for (std::size_t j = 0; j < nv; ++j) {
            est.by_v0[j].value = grid->v0_values[j];
        }
        double sum = 0.0;
        for (std::size_t c = 0; c < layout.cells; ++c) {
            est.cells.push_back({c, grid->cell_state(c), per_cell[c]});
            sum += per_cell[c].p_extinct();
            for (Tally* m : {&est.by_t0[c / nv].tally, &est.by_v0[c % nv].tally}) {
                m->trials += per_cell[c].trials;
                m->extinct += per_cell[c].extinct;
                m->failed += per_cell[c].failed;
            }
        }
        est.cell_mean_p_extinct = sum / static_cast<double>(layout.cells);
        if (est.dropped > 0) {
            est.warnings.push_back(std::to_string(est.dropped) + " trial(s) dropped: " + std::to_string(cfg.trials) +
                                   " is not a multiple of " + std::to_string(layout.cells) + " grid cells");
        }
    }
    if (est.n_failed > 0) {
        est.warnings.push_back(std::to_string(est.n_failed) + " trial(s) failed");
    }
    return est;
}

inline PersistenceEstimate estimate(const ExperimentConfig& cfg, unsigned workers = 1)
{
    return aggregate(cfg, run_trials(cfg, workers));
}

/// Estimate over an initial-condition grid, with per-cell and marginal breakdowns.
inline PersistenceEstimate ic_sweep(const ExperimentConfig& cfg, unsigned workers = 1)
{
    if (!std::holds_alternative<IcGrid>(cfg.initial)) {
        throw InvalidInput("grid", "an initial-condition sweep needs a grid");
    }
    return estimate(cfg, workers);
}

struct DisagreementExemplar {
    std::uint64_t trial_index = 0;
    Parameters params;
    State init;
    double r            = 0.0;
    double v_at_horizon = 0.0;
};

struct DisagreementSummary {
    std::int64_t n_trials = 0; // completed
    std::int64_t n_failed = 0;
    std::int64_t asymptotic_extinct = 0; // R <= 1
    std::int64_t finite_extinct     = 0; // V(horizon) < threshold
    std::int64_t r_above_v_below = 0; // R > 1 but V(horizon) < threshold
    std::int64_t r_below_v_above = 0; // R <= 1 but V(horizon) >= threshold
    std::vector<DisagreementExemplar> r_above_v_below_examples;
    std::vector<DisagreementExemplar> r_below_v_above_examples;
    Provenance provenance;
};

inline constexpr std::size_t max_exemplars = 10;

/**
 * @brief Compares the R criterion with the finite-time criterion on the same draws.
 *
 * Exemplars are the lowest trial indices in each disagreement direction.
 */
inline DisagreementSummary criterion_disagreement(const ExperimentConfig& cfg, unsigned workers = 1)
{
    if (!std::holds_alternative<FiniteTime>(cfg.criterion)) {
        throw InvalidInput("criterion", "disagreement analysis needs a finite_time criterion");
    }
    const auto records       = run_trials(cfg, workers);
    const TrialLayout layout = TrialLayout::of(cfg);
    DisagreementSummary out;
    out.provenance = {cfg.master_seed, cfg.scenario.tag, cfg.criterion, Rng::identity};

    for (std::size_t i = 0; i < records.size(); ++i) {
        const TrialRecord& rec = records[i];
        if (rec.failed) {
            ++out.n_failed;
            continue;
        }
        ++out.n_trials;
        const bool r_persist = rec.r > 1.0;
        if (!r_persist) {
            ++out.asymptotic_extinct;
        }
        if (!rec.persisted) {
            ++out.finite_extinct;
        }
        if (r_persist == rec.persisted) {
            continue;
        }
        auto& bucket = r_persist ? out.r_above_v_below_examples : out.r_below_v_above_examples;
        ++(r_persist ? out.r_above_v_below : out.r_below_v_above);
        if (bucket.size() < max_exemplars) {
            const auto idx = static_cast<std::uint64_t>(i);
            bucket.push_back({idx, sample_parameters(cfg.scenario, {cfg.master_seed, idx}),
                              initial_state_for(cfg, layout, static_cast<std::int64_t>(i)), rec.r, rec.v_at_horizon});
        }
    }
    return out;
}

} // namespace hiv3cm

#endif // HIV3CM_MONTECARLO_HPP_
