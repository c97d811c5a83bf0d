#ifndef HIV3CM_INTEGRATOR_HPP_
#define HIV3CM_INTEGRATOR_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "hiv3cm/model.hpp"

namespace hiv3cm
{

enum class Method
{
    FixedRK4,
    AdaptiveRK45,
};

inline const char* to_string(Method m)
{
    return m == Method::FixedRK4 ? "rk4" : "rk45";
}

struct IntegratorConfig {
    Method method          = Method::AdaptiveRK45;
    double dt              = 0.01;
    double rel_tol         = 1e-8;
    double abs_tol         = 1e-10;
    std::int64_t max_steps = 10'000'000;
    std::int64_t record_stride = 10;

    bool operator==(const IntegratorConfig&) const = default;
};

inline void validate(const IntegratorConfig& cfg)
{
    if (!(cfg.dt > 0.0) || !std::isfinite(cfg.dt)) {
        throw InvalidInput("dt", "must be positive and finite");
    }
    if (!(cfg.rel_tol > 0.0) || !std::isfinite(cfg.rel_tol)) {
        throw InvalidInput("rel_tol", "must be positive and finite");
    }
    if (!(cfg.abs_tol > 0.0) || !std::isfinite(cfg.abs_tol)) {
        throw InvalidInput("abs_tol", "must be positive and finite");
    }
    if (cfg.max_steps < 1) {
        throw InvalidInput("max_steps", "must be at least 1");
    }
    if (cfg.record_stride < 1) {
        throw InvalidInput("record_stride", "must be at least 1");
    }
}

/// Base of the failures an integration can end in.
class IntegrationError : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
    virtual const char* kind() const noexcept = 0;
};

class StepBudgetExceeded : public IntegrationError
{
public:
    explicit StepBudgetExceeded(double t)
        : IntegrationError("step budget exhausted at t = " + std::to_string(t))
    {
    }
    const char* kind() const noexcept override
    {
        return "StepBudgetExceeded";
    }
};

class NonFiniteState : public IntegrationError
{
public:
    explicit NonFiniteState(double t)
        : IntegrationError("non-finite state encountered at t = " + std::to_string(t))
    {
    }
    const char* kind() const noexcept override
    {
        return "NonFiniteState";
    }
};

struct Sample {
    double t = 0.0;
    State state;
};

struct Trajectory {
    std::vector<Sample> samples;
    Parameters params;
    IntegratorConfig config;
};

namespace detail
{

inline State axpy(const State& y, double h, const State& k)
{
    return {y.t_cells + h * k.t_cells, y.infected + h * k.infected, y.virions + h * k.virions};
}

inline bool finite(const State& s)
{
    return std::isfinite(s.t_cells) && std::isfinite(s.infected) && std::isfinite(s.virions);
}

inline State rk4_step(const Parameters& q, const State& y, double h)
{
    const State k1 = rhs_unchecked(q, y);
    const State k2 = rhs_unchecked(q, axpy(y, 0.5 * h, k1));
    const State k3 = rhs_unchecked(q, axpy(y, 0.5 * h, k2));
    const State k4 = rhs_unchecked(q, axpy(y, h, k3));
    const double w = h / 6.0;
    return {y.t_cells + w * (k1.t_cells + 2.0 * k2.t_cells + 2.0 * k3.t_cells + k4.t_cells),
            y.infected + w * (k1.infected + 2.0 * k2.infected + 2.0 * k3.infected + k4.infected),
            y.virions + w * (k1.virions + 2.0 * k2.virions + 2.0 * k3.virions + k4.virions)};
}

// Dormand-Prince 5(4) tableau.
struct DormandPrince {
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                            a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                            a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                            b6 = 11.0 / 84;
    // difference between 5th and embedded 4th order weights
    static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                            e6 = 22.0 / 525, e7 = -1.0 / 40;
};

struct Rk45Result {
    State y;
    State k_last; // f(y) at the new point, reused as the next step's first stage
    double error = 0.0;
};

inline Rk45Result rk45_step(const Parameters& q, const State& y, const State& k1, double h, double rel_tol,
                            double abs_tol)
{
    using T = DormandPrince;
    auto stage = [&](auto fn) {
        return State{fn(&State::t_cells), fn(&State::infected), fn(&State::virions)};
    };
    const State y2 = stage([&](auto m) { return y.*m + h * (T::a21 * k1.*m); });
    const State k2 = rhs_unchecked(q, y2);
    const State y3 = stage([&](auto m) { return y.*m + h * (T::a31 * k1.*m + T::a32 * k2.*m); });
    const State k3 = rhs_unchecked(q, y3);
    const State y4 = stage([&](auto m) { return y.*m + h * (T::a41 * k1.*m + T::a42 * k2.*m + T::a43 * k3.*m); });
    const State k4 = rhs_unchecked(q, y4);
    const State y5 = stage([&](auto m) {
        return y.*m + h * (T::a51 * k1.*m + T::a52 * k2.*m + T::a53 * k3.*m + T::a54 * k4.*m);
    });
    const State k5 = rhs_unchecked(q, y5);
    const State y6 = stage([&](auto m) {
        return y.*m + h * (T::a61 * k1.*m + T::a62 * k2.*m + T::a63 * k3.*m + T::a64 * k4.*m + T::a65 * k5.*m);
    });
    const State k6 = rhs_unchecked(q, y6);
    const State y7 = stage([&](auto m) {
        return y.*m + h * (T::b1 * k1.*m + T::b3 * k3.*m + T::b4 * k4.*m + T::b5 * k5.*m + T::b6 * k6.*m);
    });
    const State k7 = rhs_unchecked(q, y7);

    double err = 0.0;
    for (auto m : {&State::t_cells, &State::infected, &State::virions}) {
        const double e = h * (T::e1 * k1.*m + T::e3 * k3.*m + T::e4 * k4.*m + T::e5 * k5.*m + T::e6 * k6.*m +
                              T::e7 * k7.*m);
        const double scale = abs_tol + rel_tol * std::max(std::abs(y.*m), std::abs(y7.*m));
        err                = std::max(err, std::abs(e) / scale);
    }
    if (!std::isfinite(err)) {
        err = std::numeric_limits<double>::infinity();
    }
    return {y7, k7, err};
}

/// Initial step guess (Hairer, Norsett & Wanner, II.4) limited to the horizon.
inline double initial_step(const Parameters& q, const State& y, const State& f0, double t_end, double rel_tol,
                           double abs_tol)
{
    auto norm = [&](const State& v, const State& ref) {
        double acc = 0.0;
        for (auto m : {&State::t_cells, &State::infected, &State::virions}) {
            const double sc = abs_tol + rel_tol * std::abs(ref.*m);
            acc += (v.*m / sc) * (v.*m / sc);
        }
        return std::sqrt(acc / 3.0);
    };
    const double d0 = norm(y, y);
    const double d1 = norm(f0, y);
    double h0       = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h0              = std::min(h0, t_end);
    const State f1  = rhs_unchecked(q, axpy(y, h0, f0));
    const State df{f1.t_cells - f0.t_cells, f1.infected - f0.infected, f1.virions - f0.virions};
    const double d2 = norm(df, y) / h0;
    const double h1 = (std::max(d1, d2) <= 1e-15) ? std::max(1e-6, h0 * 1e-3)
                                                   : std::pow(0.01 / std::max(d1, d2), 1.0 / 5.0);
    return std::min({100.0 * h0, h1, t_end});
}

/**
 * Steps from t = 0 to t_end, calling record(t, y, accepted_step_index) after each
 * accepted step. The final step is shortened so that the last accepted time is
 * exactly t_end.
 */
template <class Record>
State drive(const Parameters& q, const State& init, double t_end, const IntegratorConfig& cfg, Record&& record)
{
    State y           = init;
    double t          = 0.0;
    std::int64_t step = 0;
    // times within this distance of t_end snap onto it instead of taking a sliver step
    const double snap = 1e-12 * std::max(1.0, t_end);

    if (cfg.method == Method::FixedRK4) {
        while (t < t_end) {
            if (step >= cfg.max_steps) {
                throw StepBudgetExceeded(t);
            }
            double t_next = static_cast<double>(step + 1) * cfg.dt;
            if (t_next >= t_end - snap) {
                t_next = t_end;
            }
            y = rk4_step(q, y, t_next - t);
            if (!finite(y)) {
                throw NonFiniteState(t_next);
            }
            t = t_next;
            ++step;
            record(t, y, step);
        }
        return y;
    }

    State f         = rhs_unchecked(q, y);
    double h        = initial_step(q, y, f, t_end, cfg.rel_tol, cfg.abs_tol);
    std::int64_t attempts = 0;
    constexpr double safety = 0.9, min_factor = 0.2, max_factor = 5.0;
    while (t < t_end) {
        if (attempts >= cfg.max_steps) {
            throw StepBudgetExceeded(t);
        }
        ++attempts;
        bool last = false;
        if (t + h >= t_end - snap) {
            h    = t_end - t;
            last = true;
        }
        const auto res = rk45_step(q, y, f, h, cfg.rel_tol, cfg.abs_tol);
        if (res.error <= 1.0) {
            t = last ? t_end : t + h;
            y = res.y;
            f = res.k_last;
            if (!finite(y) || !finite(f)) {
                throw NonFiniteState(t);
            }
            ++step;
            record(t, y, step);
            const double factor =
                res.error == 0.0 ? max_factor : std::clamp(safety * std::pow(res.error, -0.2), min_factor, max_factor);
            h *= factor;
        }
        else {
            if (!std::isfinite(res.error) && !finite(res.y)) {
                // overflow inside the stages; shrink hard and retry
                h *= min_factor;
            }
            else {
                h *= std::max(min_factor, safety * std::pow(res.error, -0.2));
            }
            if (!(h > 0.0) || t + h == t) {
                throw NonFiniteState(t);
            }
        }
    }
    return y;
}

} // namespace detail

inline void check_inputs(const Parameters& params, const State& init, const IntegratorConfig& cfg)
{
    validate(params);
    validate_initial(init);
    validate(cfg);
}

/**
 * @brief Solves the initial-value problem on [0, t_end].
 *
 * Samples hold t = 0, every record_stride-th accepted step and always the final
 * point at exactly t_end.
 */
inline Trajectory integrate(const Parameters& params, const State& init, double t_end, const IntegratorConfig& cfg)
{
    check_inputs(params, init, cfg);
    if (!(t_end > 0.0) || !std::isfinite(t_end)) {
        throw InvalidInput("t_end", "must be positive and finite");
    }
    Trajectory traj{{}, params, cfg};
    traj.samples.push_back({0.0, init});
    detail::drive(params, init, t_end, cfg, [&](double t, const State& y, std::int64_t step) {
        if (step % cfg.record_stride == 0 || t == t_end) {
            traj.samples.push_back({t, y});
        }
    });
    return traj;
}

/// State at exactly t_query, without storing intermediate samples.
inline State state_at(const Parameters& params, const State& init, double t_query, const IntegratorConfig& cfg)
{
    check_inputs(params, init, cfg);
    if (!(t_query >= 0.0) || !std::isfinite(t_query)) {
        throw InvalidInput("t_query", "must be nonnegative and finite");
    }
    if (t_query == 0.0) {
        return init;
    }
    return detail::drive(params, init, t_query, cfg, [](double, const State&, std::int64_t) {});
}

} // namespace hiv3cm

#endif // HIV3CM_INTEGRATOR_HPP_
