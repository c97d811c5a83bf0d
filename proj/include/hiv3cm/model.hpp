#ifndef HIV3CM_MODEL_HPP_
#define HIV3CM_MODEL_HPP_

#include <array>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <string>

#include "hiv3cm/cubic.hpp"

namespace hiv3cm
{

/**
 * @brief Thrown when a parameter or state violates its domain invariants.
 * field() names the offending quantity so callers can report it.
 */
class InvalidInput : public std::invalid_argument
{
public:
    InvalidInput(std::string field, const std::string& what)
        : std::invalid_argument(field + ": " + what)
        , m_field(std::move(field))
        , m_message(what)
    {
    }

    const std::string& field() const noexcept
    {
        return m_field;
    }

    /// what() without the field prefix.
    const std::string& message() const noexcept
    {
        return m_message;
    }

private:
    std::string m_field;
    std::string m_message;
};

/**
 * @brief Rate constants of the three-component model.
 *
 * Units: lambda cells/uL/day, mu 1/day, k uL/day (per virion), delta 1/day,
 * p virions per infected cell per day, c 1/day.
 */
struct Parameters {
    double lambda = 0.0;
    double mu     = 0.0;
    double k      = 0.0;
    double delta  = 0.0;
    double p      = 0.0;
    double c      = 0.0;

    bool operator==(const Parameters&) const = default;
};

/// Healthy T-cells and infected T-cells in cells/uL, virions in copies/uL.
struct State {
    double t_cells  = 0.0;
    double infected = 0.0;
    double virions  = 0.0;

    bool operator==(const State&) const = default;
};

using Matrix3 = std::array<std::array<double, 3>, 3>;

/// Mean values of the clinical parameter table; lambda/mu = 10 exactly.
constexpr Parameters table1_means()
{
    return {0.1089, 0.01089, 1.179e-3, 0.3660, 1427.0, 3.0};
}

constexpr Parameters table1_minimum()
{
    return {0.043, 0.0043, 1.9e-4, 0.13, 98.0, 3.0};
}

constexpr Parameters table1_maximum()
{
    return {0.2, 0.02, 4.8e-3, 0.8, 7100.0, 3.0};
}

inline void validate(const Parameters& params)
{
    auto check = [](const char* name, double v) {
        if (!std::isfinite(v)) {
            throw InvalidInput(name, "must be finite");
        }
        if (!(v > 0.0)) {
            throw InvalidInput(name, "must be strictly positive");
        }
    };
    check("lambda", params.lambda);
    check("mu", params.mu);
    check("k", params.k);
    check("delta", params.delta);
    check("p", params.p);
    check("c", params.c);
}

inline void validate_finite(const State& state)
{
    if (!std::isfinite(state.t_cells)) {
        throw InvalidInput("T", "must be finite");
    }
    if (!std::isfinite(state.infected)) {
        throw InvalidInput("I", "must be finite");
    }
    if (!std::isfinite(state.virions)) {
        throw InvalidInput("V", "must be finite");
    }
}

/// Initial conditions must additionally be nonnegative.
inline void validate_initial(const State& state)
{
    validate_finite(state);
    if (state.t_cells < 0.0) {
        throw InvalidInput("T", "must be nonnegative");
    }
    if (state.infected < 0.0) {
        throw InvalidInput("I", "must be nonnegative");
    }
    if (state.virions < 0.0) {
        throw InvalidInput("V", "must be nonnegative");
    }
}

/**
 * @brief Vector field of the model, unchecked.
 *
 * Used inside the integrator's inner loop; rhs() is the validating entry point.
 */
constexpr State rhs_unchecked(const Parameters& q, const State& s) noexcept
{
    const double infection = q.k * s.t_cells * s.virions;
    return {q.lambda - q.mu * s.t_cells - infection, infection - q.delta * s.infected,
            q.p * s.infected - q.c * s.virions};
}

inline State rhs(const Parameters& params, const State& state)
{
    validate(params);
    validate_finite(state);
    return rhs_unchecked(params, state);
}

inline Matrix3 jacobian(const Parameters& params, const State& state)
{
    validate(params);
    validate_finite(state);
    const double kv = params.k * state.virions;
    const double kt = params.k * state.t_cells;
    return {{{-kv - params.mu, 0.0, -kt}, {kv, -params.delta, kt}, {0.0, params.p, -params.c}}};
}

inline double reproduction_number(const Parameters& params)
{
    validate(params);
    return params.k * params.p * params.lambda / (params.c * params.delta * params.mu);
}

inline State extinction_equilibrium(const Parameters& params)
{
    validate(params);
    return {params.lambda / params.mu, 0.0, 0.0};
}

struct PersistenceEquilibrium {
    State state;
    bool admissible = false;
};

/**
 * @brief Interior steady state (c delta/(pk), lambda/delta - mu c/(kp), p lambda/(c delta) - mu/k).
 *
 * Returned for every valid parameter set; admissible is true only when all three
 * components are strictly positive, which happens exactly when R > 1.
 */
inline PersistenceEquilibrium persistence_equilibrium(const Parameters& params)
{
    validate(params);
    const auto& q = params;
    State s{q.c * q.delta / (q.p * q.k), q.lambda / q.delta - q.mu * q.c / (q.k * q.p),
            q.p * q.lambda / (q.c * q.delta) - q.mu / q.k};
    return {s, s.t_cells > 0.0 && s.infected > 0.0 && s.virions > 0.0};
}

/// Same equilibrium written through R: (lambda/(mu R), lambda (R-1)/(delta R), mu (R-1)/k).
inline State persistence_equilibrium_r_form(const Parameters& params)
{
    const double r = reproduction_number(params);
    return {params.lambda / (params.mu * r), params.lambda * (r - 1.0) / (params.delta * r),
            params.mu * (r - 1.0) / params.k};
}

/// Closed-form coefficients of det(xI - J) at the persistence equilibrium.
inline CubicCoefficients characteristic_coefficients_persistence(const Parameters& params)
{
    validate(params);
    const auto& q      = params;
    const double klp   = q.k * q.lambda * q.p;
    return {q.c + q.delta + klp / (q.c * q.delta), klp / q.delta + klp / q.c, klp - q.c * q.delta * q.mu};
}

/// Coefficients of det(xI - M) for any 3x3 matrix: -trace, sum of principal minors, -det.
inline CubicCoefficients characteristic_coefficients(const Matrix3& m)
{
    const double trace  = m[0][0] + m[1][1] + m[2][2];
    const double minors = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) + (m[0][0] * m[2][2] - m[0][2] * m[2][0]) +
                          (m[1][1] * m[2][2] - m[1][2] * m[2][1]);
    const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                       m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                       m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    return {-trace, minors, -det};
}

inline Roots3 eigenvalues(const Matrix3& m)
{
    return cubic_roots(characteristic_coefficients(m));
}

/**
 * @brief Routh-Hurwitz test for x^3 + a1 x^2 + a2 x + a3.
 * All roots have negative real part iff a1, a2, a3 > 0 and a1 a2 > a3.
 */
constexpr bool routh_hurwitz_stable(const CubicCoefficients& a) noexcept
{
    return a.a1 > 0.0 && a.a2 > 0.0 && a.a3 > 0.0 && a.a1 * a.a2 > a.a3;
}

enum class StableEquilibrium
{
    Extinction,
    Persistence,
    Boundary,
};

inline const char* to_string(StableEquilibrium e)
{
    switch (e) {
    case StableEquilibrium::Extinction:
        return "extinction";
    case StableEquilibrium::Persistence:
        return "persistence";
    case StableEquilibrium::Boundary:
        return "boundary";
    }
    return "unknown";
}

/// |R - 1| at or below this is reported as Boundary.
inline constexpr double boundary_tolerance = 1e-12;

struct StabilityReport {
    double r = 0.0;
    State extinction_eq;
    State persistence_eq;
    bool persistence_eq_admissible = false;
    CubicCoefficients coefficients_at_extinction;
    CubicCoefficients coefficients_at_persistence;
    Roots3 eigenvalues_at_extinction;
    Roots3 eigenvalues_at_persistence;
    StableEquilibrium stable_equilibrium = StableEquilibrium::Boundary;
};

inline StabilityReport classify(const Parameters& params)
{
    StabilityReport rep;
    rep.r             = reproduction_number(params);
    rep.extinction_eq = extinction_equilibrium(params);

    const auto pp                 = persistence_equilibrium(params);
    rep.persistence_eq            = pp.state;
    rep.persistence_eq_admissible = pp.admissible;

    rep.coefficients_at_extinction  = characteristic_coefficients(jacobian(params, rep.extinction_eq));
    rep.coefficients_at_persistence = characteristic_coefficients_persistence(params);
    rep.eigenvalues_at_extinction   = cubic_roots(rep.coefficients_at_extinction);
    rep.eigenvalues_at_persistence  = cubic_roots(rep.coefficients_at_persistence);

    if (std::abs(rep.r - 1.0) <= boundary_tolerance) {
        rep.stable_equilibrium = StableEquilibrium::Boundary;
    }
    else if (rep.r < 1.0) {
        rep.stable_equilibrium = StableEquilibrium::Extinction;
    }
    else {
        rep.stable_equilibrium = StableEquilibrium::Persistence;
    }
    return rep;
}

} // namespace hiv3cm

#endif // HIV3CM_MODEL_HPP_
