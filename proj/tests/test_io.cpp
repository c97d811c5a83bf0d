#include <charconv>
#include <cstring>
#include <random>

#include <gtest/gtest.h>

#include "hiv3cm/io.hpp"

using namespace hiv3cm;
using nlohmann::json;

namespace
{

std::string field_of(const std::function<void()>& fn)
{
    try {
        fn();
    }
    catch (const io::ConfigError& e) {
        return e.field();
    }
    return "<no error>";
}

ExperimentConfig random_config(std::mt19937_64& gen)
{
    std::uniform_real_distribution<double> u(0.0, 1.0);
    ExperimentConfig cfg;
    switch (gen() % 3) {
    case 0:
        cfg.scenario = uniform_triangular_scenario();
        break;
    case 1: {
        StandardDeviations sd;
        sd.p         = 100.0 + 3000.0 * u(gen);
        cfg.scenario = truncated_normal_scenario(sd);
        break;
    }
    default:
        cfg.scenario.tag         = ScenarioTag::Custom;
        cfg.scenario.lambda_rule = LambdaRule::Independent;
        cfg.scenario.k      = Uniform{1e-4 * u(gen), 1e-3 + u(gen)};
        cfg.scenario.p      = Triangular{1.0, 2.0 + u(gen), 5.0};
        cfg.scenario.mu     = Constant{0.01 + u(gen)};
        cfg.scenario.delta  = TruncatedNormal{0.3, 0.1 * (1.0 + u(gen)), 0.1, 0.9};
        cfg.scenario.lambda = Constant{u(gen)};
        cfg.scenario.c      = Constant{3.0};
    }
    if (gen() % 2) {
        cfg.criterion = FiniteTime{1.0 + 200.0 * u(gen), 0.5 + 100.0 * u(gen)};
    }
    cfg.trials      = 50 + static_cast<std::int64_t>(gen() % 100000);
    cfg.master_seed = gen();
    if (gen() % 2) {
        cfg.initial = State{1000.0 * u(gen), u(gen), 1e-3 * u(gen)};
    }
    else {
        IcGrid g = IcGrid::standard();
        g.i0     = u(gen);
        g.v0_values.push_back(123.456 + u(gen));
        cfg.initial = g;
    }
    cfg.integrator.method        = gen() % 2 ? Method::FixedRK4 : Method::AdaptiveRK45;
    cfg.integrator.dt            = 1e-3 + u(gen);
    cfg.integrator.rel_tol       = 1e-9 * (1.0 + u(gen));
    cfg.integrator.abs_tol       = 1e-11 * (1.0 + u(gen));
    cfg.integrator.max_steps     = 1 + static_cast<std::int64_t>(gen() % 1000000);
    cfg.integrator.record_stride = 1 + static_cast<std::int64_t>(gen() % 50);
    return cfg;
}

json minimal_config()
{
    return json::parse(R"({"scenario": "uniform_triangular",
                           "criterion": {"type": "finite_time", "horizon_days": 60, "threshold": 50},
                           "trials": 100, "init": {"T": 1000, "I": 0, "V": 0.001}})");
}

} // namespace

TEST(FormatDouble, RoundTripsExactly)
{
    std::mt19937_64 gen(3);
    for (int i = 0; i < 100000; ++i) {
        std::uint64_t bits = gen();
        double x;
        std::memcpy(&x, &bits, sizeof x);
        if (!std::isfinite(x)) {
            continue;
        }
        const std::string s = io::format_double(x);
        double back         = 0.0;
        std::from_chars(s.data(), s.data() + s.size(), back);
        ASSERT_EQ(std::memcmp(&x, &back, sizeof x), 0) << s;
    }
    EXPECT_EQ(io::format_double(0.001), "0.001");
    EXPECT_EQ(io::format_double(1000.0), "1000");
}

TEST(Config, RoundTripsThroughNormalizedEcho)
{
    std::mt19937_64 gen(17);
    for (int i = 0; i < 500; ++i) {
        const ExperimentConfig cfg = random_config(gen);
        const json echo            = io::to_json(cfg);
        const ExperimentConfig back = io::experiment_config_from_json(json::parse(echo.dump()));
        ASSERT_EQ(back, cfg) << echo.dump(2);
        ASSERT_EQ(io::to_json(back).dump(), echo.dump());
    }
}

TEST(Config, MinimalDocumentUsesDefaults)
{
    const auto cfg = io::experiment_config_from_json(minimal_config());
    EXPECT_EQ(cfg.scenario, uniform_triangular_scenario());
    EXPECT_EQ(cfg.criterion, PersistenceCriterion(FiniteTime{60.0, 50.0}));
    EXPECT_EQ(cfg.trials, 100);
    EXPECT_EQ(cfg.master_seed, 0u);
    EXPECT_EQ(std::get<State>(cfg.initial), (State{1000, 0, 0.001}));
    EXPECT_EQ(cfg.integrator, IntegratorConfig{});
}

TEST(Config, FiniteTimeDefaultsToDay100)
{
    auto j         = minimal_config();
    j["criterion"] = {{"type", "finite_time"}};
    const auto cfg = io::experiment_config_from_json(j);
    EXPECT_EQ(cfg.criterion, PersistenceCriterion(FiniteTime{100.0, 50.0}));
}

TEST(Config, NamedGridAndScenarioOverrides)
{
    auto j = minimal_config();
    j.erase("init");
    j["grid"]     = "standard";
    j["trials"]   = 500;
    j["scenario"] = json::parse(R"({"base": "truncated_normal", "sd": {"p": 500},
                                    "distributions": {"c": {"type": "uniform", "lo": 2, "hi": 4}}})");
    const auto cfg = io::experiment_config_from_json(j);
    EXPECT_EQ(std::get<IcGrid>(cfg.initial), IcGrid::standard());
    EXPECT_EQ(std::get<TruncatedNormal>(cfg.scenario.p).sd, 500.0);
    EXPECT_EQ(cfg.scenario.c, Distribution(Uniform{2.0, 4.0}));
    EXPECT_EQ(cfg.scenario.tag, ScenarioTag::TruncatedNormal);
}

TEST(Config, UnknownKeysAreHardErrors)
{
    auto j = minimal_config();
    j["criterion"]["treshold"] = 50;
    EXPECT_EQ(field_of([&] { io::experiment_config_from_json(j); }), "criterion.treshold");

    j = minimal_config();
    j["trails"] = 5;
    EXPECT_EQ(field_of([&] { io::experiment_config_from_json(j); }), "trails");

    j = minimal_config();
    j["init"]["v"] = 1;
    EXPECT_EQ(field_of([&] { io::experiment_config_from_json(j); }), "init.v");

    j = minimal_config();
    j["integrator"] = {{"rtol", 1e-6}};
    EXPECT_EQ(field_of([&] { io::experiment_config_from_json(j); }), "integrator.rtol");

    j             = minimal_config();
    j["scenario"] = {{"base", "truncated_normal"}, {"distributions", {{"kk", {{"type", "constant"}, {"value", 1}}}}}};
    EXPECT_EQ(field_of([&] { io::experiment_config_from_json(j); }), "scenario.distributions.kk");
}

TEST(Config, ValidationErrorsNameTheField)
{
    auto j = minimal_config();
    j["trials"] = 0;
    EXPECT_EQ(field_of([&] { io::experiment_config_from_json(j); }), "trials");

    j = minimal_config();
    j["criterion"]["threshold"] = -1;
    EXPECT_EQ(field_of([&] { io::experiment_config_from_json(j); }), "criterion.threshold");

    j = minimal_config();
    j["init"]["V"] = -1;
    EXPECT_EQ(field_of([&] { io::experiment_config_from_json(j); }), "init.V");

    j = minimal_config();
    j["integrator"] = {{"dt", 0}};
    EXPECT_EQ(field_of([&] { io::experiment_config_from_json(j); }), "integrator.dt");

    j = minimal_config();
    j["grid"] = "standard";
    EXPECT_EQ(field_of([&] { io::experiment_config_from_json(j); }), "init");

    j = minimal_config();
    j.erase("init");
    j["grid"]   = "standard";
    j["trials"] = 49;
    EXPECT_EQ(field_of([&] { io::experiment_config_from_json(j); }), "trials");

    j = minimal_config();
    j["scenario"] = "normal";
    EXPECT_EQ(field_of([&] { io::experiment_config_from_json(j); }), "scenario");

    j = minimal_config();
    j["scenario"] = {{"base", "uniform_triangular"}, {"distributions", {{"lambda", {{"type", "constant"}, {"value", 1}}}}}};
    EXPECT_EQ(field_of([&] { io::experiment_config_from_json(j); }), "scenario.lambda");

    j = minimal_config();
    j["trials"] = "many";
    EXPECT_EQ(field_of([&] { io::experiment_config_from_json(j); }), "trials");

    j = minimal_config();
    j["master_seed"] = -3;
    EXPECT_EQ(field_of([&] { io::experiment_config_from_json(j); }), "master_seed");
}

TEST(Parameters, JsonRoundTripAndValidation)
{
    const Parameters q = table1_means();
    EXPECT_EQ(io::parameters_from_json(io::to_json(q)), q);
    auto j  = io::to_json(q);
    j["mu"] = -1.0;
    EXPECT_THROW(io::parameters_from_json(j), InvalidInput);
    j = io::to_json(q);
    j.erase("c");
    EXPECT_EQ(field_of([&] { io::parameters_from_json(j); }), "parameters.c");
}

TEST(Documents, EstimateHasSchemaFieldsAndIsStable)
{
    auto cfg    = io::experiment_config_from_json(minimal_config());
    cfg.initial = IcGrid::standard();
    cfg.trials  = 120;
    const auto est = estimate(cfg);
    const json doc = io::estimate_document(est);
    for (const char* key : {"scenario", "criterion", "trials", "failed", "extinct", "persist", "p_extinct", "ci_low",
                            "ci_high", "master_seed", "prng", "requested_trials", "dropped_trials",
                            "p_extinct_cell_mean", "marginal_by_T0", "marginal_by_V0", "warnings"}) {
        EXPECT_TRUE(doc.contains(key)) << key;
    }
    EXPECT_EQ(doc["criterion"]["type"], "finite_time");
    EXPECT_EQ(doc["criterion"]["horizon_days"], 60.0);
    EXPECT_EQ(doc["criterion"]["threshold"], 50.0);
    EXPECT_EQ(doc["scenario"], "uniform_triangular");
    EXPECT_EQ(doc["dropped_trials"], 20);
    EXPECT_EQ(doc["prng"], Rng::identity);
    EXPECT_EQ(doc.dump(), io::estimate_document(estimate(cfg)).dump());
}

TEST(Documents, StabilityReportFields)
{
    const Parameters q = table1_means();
    const json doc     = io::report_document(q, classify(q));
    EXPECT_NEAR(doc["r"].get<double>(), 15.3228, 1e-3);
    EXPECT_EQ(doc["stable_equilibrium"], "persistence");
    EXPECT_EQ(doc["eigenvalues_at_persistence"].size(), 3u);
    EXPECT_TRUE(doc["persistence_eq_admissible"].get<bool>());
    EXPECT_TRUE(doc["routh_hurwitz_persistence"].get<bool>());
    // full precision survives serialization
    EXPECT_EQ(json::parse(doc.dump())["r"].get<double>(), reproduction_number(q));
}

TEST(Csv, TrajectoryHeaderAndRows)
{
    IntegratorConfig cfg;
    cfg.record_stride = 1;
    const auto traj   = integrate(table1_means(), {1000, 0, 0.001}, 1.0, cfg);
    const auto csv    = io::trajectory_csv(traj);
    EXPECT_EQ(csv.rfind("t,T,I,V\n0,1000,0,0.001\n", 0), 0u);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), static_cast<long>(traj.samples.size() + 1));
}

TEST(Csv, SweepAndPerTrial)
{
    auto cfg    = io::experiment_config_from_json(minimal_config());
    cfg.initial = IcGrid::standard();
    cfg.trials  = 100;
    const auto est   = estimate(cfg);
    const auto sweep = io::sweep_csv(est);
    EXPECT_EQ(sweep.rfind("T0,V0,trials,extinct,p_extinct,ci_low,ci_high\n100,100,2,", 0), 0u);
    EXPECT_EQ(std::count(sweep.begin(), sweep.end(), '\n'), 51);

    std::vector<TrialRecord> recs(3);
    recs[0] = {false, true, 2.5, 60.25, nullptr};
    recs[1] = {true, false, 0.0, NAN, "IntegrationFailed"};
    recs[2] = {false, false, 0.5, NAN, nullptr};
    EXPECT_EQ(io::per_trial_csv(recs), "trial_index,R,v_at_horizon,persisted\n0,2.5,60.25,1\n1,,,failed\n2,0.5,,0\n");
}
