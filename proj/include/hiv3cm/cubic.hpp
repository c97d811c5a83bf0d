#ifndef HIV3CM_CUBIC_HPP_
#define HIV3CM_CUBIC_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>

namespace hiv3cm
{

/// Monic cubic x^3 + a1 x^2 + a2 x + a3.
struct CubicCoefficients {
    double a1 = 0.0;
    double a2 = 0.0;
    double a3 = 0.0;

    bool operator==(const CubicCoefficients&) const = default;
};

using Complex = std::complex<double>;
using Roots3  = std::array<Complex, 3>;

template <class T>
constexpr T evaluate(const CubicCoefficients& a, T x)
{
    return ((x + a.a1) * x + a.a2) * x + a.a3;
}

namespace detail
{

template <class T>
constexpr T evaluate_derivative(const CubicCoefficients& a, T x)
{
    return (T(3) * x + T(2) * a.a1) * x + a.a2;
}

/// Newton iterations that only ever keep an improvement of |f|.
template <class T>
T polish(const CubicCoefficients& a, T x, int iterations = 8)
{
    double best = std::abs(evaluate(a, x));
    for (int i = 0; i < iterations && best > 0.0; ++i) {
        const T d = evaluate_derivative(a, x);
        if (std::abs(d) == 0.0) {
            break;
        }
        const T next      = x - evaluate(a, x) / d;
        const double resid = std::abs(evaluate(a, next));
        if (!(resid < best)) {
            break;
        }
        x    = next;
        best = resid;
    }
    return x;
}

/// A real root of the cubic; the one of largest magnitude when all three are real.
inline double real_root(const CubicCoefficients& a)
{
    const double shift = a.a1 / 3.0;
    const double p     = a.a2 - a.a1 * shift;
    const double q     = 2.0 * shift * shift * shift - shift * a.a2 + a.a3;
    const double disc  = 0.25 * q * q + p * p * p / 27.0;

    double y = 0.0;
    if (disc > 0.0) {
        // u^3 = -q/2 -+ sqrt(disc), sign chosen to avoid cancellation
        const double u = std::cbrt(-0.5 * q - std::copysign(std::sqrt(disc), q));
        y              = (u != 0.0) ? u - p / (3.0 * u) : 0.0;
    }
    else if (p < 0.0) {
        const double m     = 2.0 * std::sqrt(-p / 3.0);
        const double arg   = std::clamp(3.0 * q / (p * m), -1.0, 1.0);
        const double theta = std::acos(arg) / 3.0;
        double best        = 0.0;
        for (int j = 0; j < 3; ++j) {
            const double x = m * std::cos(theta - 2.0 * std::numbers::pi * j / 3.0) - shift;
            if (j == 0 || std::abs(x) > std::abs(best)) {
                best = x;
            }
        }
        return polish(a, best);
    }
    return polish(a, y - shift);
}

} // namespace detail

/**
 * @brief All three roots of x^3 + a1 x^2 + a2 x + a3.
 *
 * One real root is found in closed form and Newton-polished, the remaining quadratic
 * factor is obtained by forward or backward deflation (whichever is stable for the
 * relative root magnitudes) and every root is polished against the original cubic.
 * Complex pairs are returned as exact conjugates. Output is sorted by real part,
 * then imaginary part, ascending.
 */
inline Roots3 cubic_roots(const CubicCoefficients& a)
{
    const double r = detail::real_root(a);

    double b = a.a1 + r;
    double d = a.a2 + r * b;
    if (r != 0.0 && r * r < std::abs(d)) {
        d = -a.a3 / r;
        b = (d - a.a2) / r;
    }

    Roots3 roots;
    roots[0]          = Complex(r, 0.0);
    const double disc = b * b - 4.0 * d;
    if (disc >= 0.0) {
        const double t = -0.5 * (b + std::copysign(std::sqrt(disc), b));
        const double x1 = t;
        const double x2 = (t != 0.0) ? d / t : 0.0;
        roots[1]        = Complex(detail::polish(a, x1), 0.0);
        roots[2]        = Complex(detail::polish(a, x2), 0.0);
    }
    else {
        Complex z = detail::polish(a, Complex(-0.5 * b, 0.5 * std::sqrt(-disc)));
        if (z.imag() < 0.0) {
            z = std::conj(z);
        }
        roots[1] = z;
        roots[2] = std::conj(z);
    }

    std::sort(roots.begin(), roots.end(), [](const Complex& x, const Complex& y) {
        if (x.real() != y.real()) {
            return x.real() < y.real();
        }
        return x.imag() < y.imag();
    });
    return roots;
}

inline double max_real_part(const Roots3& roots)
{
    return std::max({roots[0].real(), roots[1].real(), roots[2].real()});
}

} // namespace hiv3cm

#endif // HIV3CM_CUBIC_HPP_
