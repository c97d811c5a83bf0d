#ifndef HIV3CM_STOCHASTIC_HPP_
#define HIV3CM_STOCHASTIC_HPP_

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>

#include "hiv3cm/model.hpp"

namespace hiv3cm
{

/**
 * @brief xoshiro256** seeded through SplitMix64.
 *
 * The per-trial stream is a pure function of (master_seed, trial_index): both are
 * hashed with the SplitMix64 finalizer into a 64-bit key which then seeds the
 * four state words via a SplitMix64 sequence. Uniform doubles take the top 53 bits.
 */
class Rng
{
public:
    using result_type = std::uint64_t;

    static constexpr const char* identity =
        "xoshiro256** 1.0; state = splitmix64 sequence from mix64(mix64(master_seed) + mix64(trial_index + 1)); "
        "uniform = (x >> 11) * 2^-53; normal = Marsaglia polar";

    static constexpr std::uint64_t mix64(std::uint64_t z) noexcept
    {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    explicit Rng(std::uint64_t seed) noexcept
    {
        std::uint64_t sm = seed;
        for (auto& w : m_s) {
            sm += 0x9E3779B97F4A7C15ULL;
            w = mix64(sm);
        }
    }

    static Rng for_trial(std::uint64_t master_seed, std::uint64_t trial_index) noexcept
    {
        return Rng(mix64(mix64(master_seed) + mix64(trial_index + 1)));
    }

    static constexpr result_type min() noexcept
    {
        return 0;
    }
    static constexpr result_type max() noexcept
    {
        return std::numeric_limits<result_type>::max();
    }

    result_type operator()() noexcept
    {
        const std::uint64_t result = rotl(m_s[1] * 5, 7) * 9;
        const std::uint64_t t      = m_s[1] << 17;
        m_s[2] ^= m_s[0];
        m_s[3] ^= m_s[1];
        m_s[1] ^= m_s[2];
        m_s[0] ^= m_s[3];
        m_s[2] ^= t;
        m_s[3] = rotl(m_s[3], 45);
        return result;
    }

    /// Uniform on [0, 1).
    double uniform() noexcept
    {
        return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
    }

    double standard_normal() noexcept
    {
        if (m_spare) {
            const double v = *m_spare;
            m_spare.reset();
            return v;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        m_spare        = v * f;
        return u * f;
    }

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept
    {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t m_s[4];
    std::optional<double> m_spare;
};

struct SeedSpec {
    std::uint64_t master_seed = 0;
    std::uint64_t trial_index = 0;
};

struct Constant {
    double value = 0.0;
    bool operator==(const Constant&) const = default;
};

/// Half-open [lo, hi).
struct Uniform {
    double lo = 0.0;
    double hi = 1.0;
    bool operator==(const Uniform&) const = default;
};

struct Triangular {
    double lo   = 0.0;
    double mode = 0.5;
    double hi   = 1.0;
    bool operator==(const Triangular&) const = default;
};

struct TruncatedNormal {
    double mean = 0.0;
    double sd   = 1.0;
    double lo   = -1.0;
    double hi   = 1.0;
    bool operator==(const TruncatedNormal&) const = default;
};

using Distribution = std::variant<Constant, Uniform, Triangular, TruncatedNormal>;

class RejectionBudgetExceeded : public std::runtime_error
{
public:
    RejectionBudgetExceeded()
        : std::runtime_error("truncated normal rejected 10000 consecutive draws")
    {
    }
};

inline constexpr int max_consecutive_rejections = 10'000;

inline void validate(const Distribution& dist, const std::string& name)
{
    auto finite = [&](std::initializer_list<double> xs) {
        for (double x : xs) {
            if (!std::isfinite(x)) {
                throw InvalidInput(name, "distribution parameters must be finite");
            }
        }
    };
    std::visit(
        [&](const auto& d) {
            using D = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<D, Constant>) {
                finite({d.value});
            }
            else if constexpr (std::is_same_v<D, Uniform>) {
                finite({d.lo, d.hi});
                if (!(d.lo < d.hi)) {
                    throw InvalidInput(name, "uniform requires lo < hi");
                }
            }
            else if constexpr (std::is_same_v<D, Triangular>) {
                finite({d.lo, d.mode, d.hi});
                if (!(d.lo < d.hi) || d.mode < d.lo || d.mode > d.hi) {
                    throw InvalidInput(name, "triangular requires lo <= mode <= hi and lo < hi");
                }
            }
            else {
                finite({d.mean, d.sd, d.lo, d.hi});
                if (!(d.sd > 0.0)) {
                    throw InvalidInput(name, "truncated normal requires sd > 0");
                }
                if (!(d.lo < d.hi)) {
                    throw InvalidInput(name, "truncated normal requires lo < hi");
                }
            }
        },
        dist);
}

/// Inverse CDF of the triangular distribution at u in [0, 1).
inline double triangular_quantile(const Triangular& d, double u)
{
    const double width = d.hi - d.lo;
    if (u <= (d.mode - d.lo) / width) {
        return d.lo + std::sqrt(u * width * (d.mode - d.lo));
    }
    return d.hi - std::sqrt((1.0 - u) * width * (d.hi - d.mode));
}

inline double sample(const Distribution& dist, Rng& rng)
{
    return std::visit(
        [&](const auto& d) -> double {
            using D = std::decay_t<decltype(d)>;
            if constexpr (std::is_same_v<D, Constant>) {
                return d.value;
            }
            else if constexpr (std::is_same_v<D, Uniform>) {
                return d.lo + rng.uniform() * (d.hi - d.lo);
            }
            else if constexpr (std::is_same_v<D, Triangular>) {
                return triangular_quantile(d, rng.uniform());
            }
            else {
                for (int i = 0; i < max_consecutive_rejections; ++i) {
                    const double x = d.mean + d.sd * rng.standard_normal();
                    if (x >= d.lo && x <= d.hi) {
                        return x;
                    }
                }
                throw RejectionBudgetExceeded();
            }
        },
        dist);
}

/// Closed-form mean. Empty for the truncated normal, whose mean shifts with the window.
inline std::optional<double> analytic_mean(const Distribution& dist)
{
    if (auto c = std::get_if<Constant>(&dist)) {
        return c->value;
    }
    if (auto u = std::get_if<Uniform>(&dist)) {
        return 0.5 * (u->lo + u->hi);
    }
    if (auto t = std::get_if<Triangular>(&dist)) {
        return (t->lo + t->mode + t->hi) / 3.0;
    }
    return std::nullopt;
}

enum class ScenarioTag
{
    TruncatedNormal,
    UniformTriangular,
    Custom,
};

inline const char* to_string(ScenarioTag tag)
{
    switch (tag) {
    case ScenarioTag::TruncatedNormal:
        return "truncated_normal";
    case ScenarioTag::UniformTriangular:
        return "uniform_triangular";
    case ScenarioTag::Custom:
        return "custom";
    }
    return "unknown";
}

enum class LambdaRule
{
    Independent,
    TenTimesMu,
};

struct Scenario {
    ScenarioTag tag = ScenarioTag::Custom;
    Distribution k;
    Distribution p;
    Distribution mu;
    Distribution delta;
    std::optional<Distribution> lambda; // absent under TenTimesMu
    Distribution c;
    LambdaRule lambda_rule = LambdaRule::Independent;

    bool operator==(const Scenario&) const = default;
};

inline void validate(const Scenario& s)
{
    validate(s.k, "k");
    validate(s.p, "p");
    validate(s.mu, "mu");
    validate(s.delta, "delta");
    if (s.lambda_rule == LambdaRule::Independent) {
        if (!s.lambda) {
            throw InvalidInput("lambda", "independent lambda needs a distribution");
        }
        validate(*s.lambda, "lambda");
    }
    else if (s.lambda) {
        throw InvalidInput("lambda", "lambda is fixed to 10 mu and cannot have its own distribution");
    }
    validate(s.c, "c");
}

/**
 * @brief Draws one parameter set.
 *
 * Draw order is fixed: k, p, mu, delta, then lambda (only under Independent), then c.
 * Under TenTimesMu lambda = 10 mu.
 */
inline Parameters sample_parameters(const Scenario& scenario, SeedSpec seed)
{
    Rng rng = Rng::for_trial(seed.master_seed, seed.trial_index);
    Parameters q;
    q.k      = sample(scenario.k, rng);
    q.p      = sample(scenario.p, rng);
    q.mu     = sample(scenario.mu, rng);
    q.delta  = sample(scenario.delta, rng);
    q.lambda = scenario.lambda_rule == LambdaRule::TenTimesMu ? 10.0 * q.mu : sample(*scenario.lambda, rng);
    q.c      = sample(scenario.c, rng);
    return q;
}

/// Default truncated-normal sd is a quarter of the clinical range.
inline constexpr double default_sd_fraction = 0.25;

struct StandardDeviations {
    double lambda = (table1_maximum().lambda - table1_minimum().lambda) * default_sd_fraction;
    double mu     = (table1_maximum().mu - table1_minimum().mu) * default_sd_fraction;
    double k      = (table1_maximum().k - table1_minimum().k) * default_sd_fraction;
    double delta  = (table1_maximum().delta - table1_minimum().delta) * default_sd_fraction;
    double p      = (table1_maximum().p - table1_minimum().p) * default_sd_fraction;

    bool operator==(const StandardDeviations&) const = default;
};

inline Scenario truncated_normal_scenario(const StandardDeviations& sd = {})
{
    constexpr Parameters lo = table1_minimum(), mean = table1_means(), hi = table1_maximum();
    Scenario s;
    s.tag         = ScenarioTag::TruncatedNormal;
    s.k           = TruncatedNormal{mean.k, sd.k, lo.k, hi.k};
    s.p           = TruncatedNormal{mean.p, sd.p, lo.p, hi.p};
    s.mu          = TruncatedNormal{mean.mu, sd.mu, lo.mu, hi.mu};
    s.delta       = TruncatedNormal{mean.delta, sd.delta, lo.delta, hi.delta};
    s.lambda      = TruncatedNormal{mean.lambda, sd.lambda, lo.lambda, hi.lambda};
    s.c           = Constant{3.0};
    s.lambda_rule = LambdaRule::Independent;
    return s;
}

inline Scenario uniform_triangular_scenario()
{
    Scenario s;
    s.tag         = ScenarioTag::UniformTriangular;
    s.k           = Uniform{1.9e-4, 4.8e-3};
    s.p           = Uniform{98.0, 7100.0};
    s.mu          = Triangular{0.0043, 0.01089, 0.02};
    s.delta       = Triangular{0.13, 0.366, 0.8};
    s.lambda.reset();
    s.c           = Constant{3.0};
    s.lambda_rule = LambdaRule::TenTimesMu;
    return s;
}

inline std::pair<Scenario, Scenario> builtin_scenarios()
{
    return {truncated_normal_scenario(), uniform_triangular_scenario()};
}

} // namespace hiv3cm

#endif // HIV3CM_STOCHASTIC_HPP_
