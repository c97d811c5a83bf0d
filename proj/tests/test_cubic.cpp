#include <complex>
#include <random>

#include <gtest/gtest.h>

#include "hiv3cm/cubic.hpp"

using hiv3cm::Complex;
using hiv3cm::CubicCoefficients;
using hiv3cm::cubic_roots;

namespace
{

void expect_root(const Complex& got, Complex want, double tol = 1e-12)
{
    EXPECT_NEAR(got.real(), want.real(), tol);
    EXPECT_NEAR(got.imag(), want.imag(), tol);
}

CubicCoefficients from_roots(Complex r1, Complex r2, Complex r3)
{
    const Complex a1 = -(r1 + r2 + r3);
    const Complex a2 = r1 * r2 + r1 * r3 + r2 * r3;
    const Complex a3 = -(r1 * r2 * r3);
    return {a1.real(), a2.real(), a3.real()};
}

} // namespace

TEST(CubicRoots, ThreeDistinctNegativeRoots)
{
    const auto r = cubic_roots({6, 11, 6});
    expect_root(r[0], -3.0);
    expect_root(r[1], -2.0);
    expect_root(r[2], -1.0);
}

TEST(CubicRoots, TripleZero)
{
    const auto r = cubic_roots({0, 0, 0});
    for (const auto& z : r) {
        expect_root(z, 0.0);
    }
}

TEST(CubicRoots, PureImaginaryPairIsSortedByImaginaryPart)
{
    const auto r = cubic_roots({0, 1, 0});
    expect_root(r[0], {0.0, -1.0});
    expect_root(r[1], 0.0);
    expect_root(r[2], {0.0, 1.0});
}

TEST(CubicRoots, DoubleRoot)
{
    // (x + 1)^2 (x - 2)
    const auto r = cubic_roots({0, -3, -2});
    expect_root(r[0], -1.0, 1e-7);
    expect_root(r[1], -1.0, 1e-7);
    expect_root(r[2], 2.0);
}

TEST(CubicRoots, RandomRootSetsAreRecoveredAndSatisfyResidualBound)
{
    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> u(-50.0, 50.0);
    std::uniform_real_distribution<double> small(-2.0, 2.0);
    for (int trial = 0; trial < 10000; ++trial) {
        Complex r1, r2, r3;
        r1 = u(gen) * (trial % 7 == 0 ? 1e-3 : 1.0);
        if (trial % 2 == 0) {
            const Complex z(u(gen), std::abs(u(gen)) + 1e-3);
            r2 = z;
            r3 = std::conj(z);
        }
        else {
            r2 = u(gen);
            r3 = u(gen) + small(gen);
        }
        const auto a     = from_roots(r1, r2, r3);
        const auto roots = cubic_roots(a);
        const double bound = 1e-9 * std::max(1.0, std::abs(a.a3));
        for (const auto& z : roots) {
            ASSERT_LT(std::abs(hiv3cm::evaluate(a, z)), bound) << "a = " << a.a1 << ", " << a.a2 << ", " << a.a3;
        }
        // Vieta: sum = -a1, product = -a3
        const Complex sum  = roots[0] + roots[1] + roots[2];
        const Complex prod = roots[0] * roots[1] * roots[2];
        ASSERT_NEAR(sum.real(), -a.a1, 1e-9 * std::max(1.0, std::abs(a.a1)));
        ASSERT_NEAR(prod.real(), -a.a3, 1e-8 * std::max(1.0, std::abs(a.a3)));
        // ordering contract
        for (int i = 0; i < 2; ++i) {
            ASSERT_TRUE(roots[i].real() < roots[i + 1].real() ||
                        (roots[i].real() == roots[i + 1].real() && roots[i].imag() <= roots[i + 1].imag()));
        }
    }
}

TEST(CubicRoots, ComplexPairsAreExactConjugates)
{
    const auto a = from_roots(-1.0, Complex(-0.5, 3.0), Complex(-0.5, -3.0));
    const auto r = cubic_roots(a);
    int complex_count = 0;
    for (int i = 0; i < 3; ++i) {
        if (r[i].imag() != 0.0) {
            ++complex_count;
            bool matched = false;
            for (int j = 0; j < 3; ++j) {
                matched = matched || (r[j] == std::conj(r[i]));
            }
            EXPECT_TRUE(matched);
        }
    }
    EXPECT_EQ(complex_count, 2);
}
