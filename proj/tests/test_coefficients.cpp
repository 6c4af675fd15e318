#include "degensemi/coefficients.hpp"

#include <gtest/gtest.h>

using namespace degensemi;

namespace {

CoefficientField example_mutation(int d, std::vector<double> a) {
    std::vector<LineFn> g(static_cast<std::size_t>(d), family::constant_line(1.0));
    std::vector<PointFn> b;
    for (int i = 0; i < d; ++i) b.push_back(family::mutation_drift(i, a));
    return make_coefficient_field(d, 1.0, family::constant_point(1.0), g, b, true);
}

CoefficientField example_separable(int d, double kappa, double omega) {
    std::vector<LineFn> g(static_cast<std::size_t>(d), family::constant_line(1.0));
    std::vector<PointFn> b;
    for (int i = 0; i < d; ++i) b.push_back(family::separable_sqrt_drift(i, kappa, omega, 1.0));
    return make_coefficient_field(d, 1.0, family::constant_point(1.0), g, b, false);
}

CoefficientField scalar_drift(PointFn b, double M = 1.0) {
    return make_coefficient_field(1, M, family::constant_point(1.0), {family::constant_line(1.0)}, {std::move(b)},
                                  false);
}

std::vector<CoefficientField> fixtures() {
    std::vector<CoefficientField> out;
    out.push_back(constant_coefficients(1, 1.0, 1.0, {0.0}));
    out.push_back(constant_coefficients(2, 2.0, 1.5, {0.5, 1.0}));
    out.push_back(example_mutation(2, {0.3, 0.7}));
    out.push_back(example_mutation(3, {1.0, 0.2, 0.5}));
    out.push_back(example_separable(2, 1.0, 0.5));
    out.push_back(scalar_drift([](std::span<const double> x) { return 0.5 + std::sqrt(x[0]); }));
    return out;
}

}  // namespace

TEST(CoefficientField, DerivedConstants) {
    auto cf = make_coefficient_field(
        2, 1.0, [](std::span<const double> x) { return 1.0 + x[0] / 2.0; },
        {family::polynomial_line({1.0, 1.0}), family::constant_line(3.0)},
        {family::constant_point(-0.25), family::constant_point(0.5)}, false);
    EXPECT_DOUBLE_EQ(cf.Gamma0, 1.0);
    EXPECT_DOUBLE_EQ(cf.Gamma_max, 1.5);
    EXPECT_DOUBLE_EQ(cf.gamma0, 1.0);
    EXPECT_DOUBLE_EQ(cf.gamma_max, 3.0);
    EXPECT_DOUBLE_EQ(cf.B, 0.5);
    EXPECT_DOUBLE_EQ(cf.drift_modulus_delta, 0.25);
}

TEST(CoefficientField, RejectsInvalidData) {
    EXPECT_THROW(make_coefficient_field(1, 1.0, family::constant_point(0.0), {family::constant_line(1.0)},
                                        {family::constant_point(0.0)}, false),
                 PreconditionError);
    EXPECT_THROW(make_coefficient_field(1, 1.0, family::constant_point(1.0), {family::polynomial_line({0.0, 1.0})},
                                        {family::constant_point(0.0)}, false),
                 PreconditionError);
    EXPECT_THROW(constant_coefficients(1, 2.0, 1.0, {0.0}, true), PreconditionError);
    EXPECT_THROW(constant_coefficients(2, 1.0, 1.0, {0.0}), PreconditionError);
}

TEST(InwardDrift, ZeroDriftPasses) {
    EXPECT_TRUE(validate_inward_drift(constant_coefficients(1, 1.0, 1.0, {0.0}), 2).pass);
}

TEST(InwardDrift, MutationSelectionDriftPasses) {
    const auto cf = example_mutation(2, {0.4, 1.3});
    EXPECT_TRUE(validate_inward_drift(cf, 17).pass);
}

TEST(InwardDrift, OutwardDriftFailsAtOrigin) {
    const auto v = validate_inward_drift(constant_coefficients(1, 1.0, 1.0, {-1.0}), 5);
    ASSERT_FALSE(v.pass);
    ASSERT_EQ(v.witness.size(), 1u);
    EXPECT_EQ(v.witness[0], 0.0);
    EXPECT_EQ(v.axis, 0);
    EXPECT_EQ(v.value, -1.0);
}

TEST(InwardDrift, QuadraticWeightChecksFarFace) {
    const auto v = validate_inward_drift(constant_coefficients(1, 1.0, 1.0, {0.5}, true), 3);
    ASSERT_FALSE(v.pass);
    EXPECT_EQ(v.witness[0], 1.0);
    EXPECT_TRUE(validate_inward_drift(constant_coefficients(1, 1.0, 1.0, {0.5}, false), 3).pass);
}

TEST(DriftModulus, SeparableExampleBoundedByCTimesM) {
    // |c(s)| ≤ kappa sqrt(s) and |m| ≤ 1 + omega.
    const double kappa = 0.8, omega = 0.5;
    const auto cf = example_separable(2, kappa, omega);
    const auto v = validate_drift_modulus(cf, 32);
    EXPECT_TRUE(v.pass);
    EXPECT_LE(v.C_meas, kappa * (1.0 + omega) + 1e-12);
    EXPECT_GT(v.C_meas, 0.0);
}

TEST(DriftModulus, ConstantDriftIsZero) {
    const auto v = validate_drift_modulus(constant_coefficients(2, 1.0, 1.0, {0.3, 2.0}), 16);
    EXPECT_TRUE(v.pass);
    EXPECT_EQ(v.C_meas, 0.0);
    EXPECT_EQ(v.C_refined, 0.0);
}

TEST(DriftModulus, QuarterPowerFails) {
    const auto cf = scalar_drift([](std::span<const double> x) { return std::pow(x[0], 0.25); });
    const auto v = validate_drift_modulus(cf, 64);
    EXPECT_FALSE(v.pass);
    // Smallest sample is (1/64)^2; ratio there is s^{-1/4}.
    EXPECT_NEAR(v.C_meas, std::pow(1.0 / (64.0 * 64.0), -0.25), 1e-9);
    EXPECT_NEAR(v.C_refined, std::pow(1.0 / (128.0 * 128.0), -0.25), 1e-9);
}

TEST(FrozenDrift, Examples) {
    {
        auto cf = make_coefficient_field(
            2, 1.0, family::constant_point(1.0), {family::constant_line(1.0), family::constant_line(1.0)},
            {[](std::span<const double> x) { return x[1]; }, [](std::span<const double> x) { return x[0]; }}, false);
        const auto b0 = frozen_drift(cf);
        EXPECT_EQ(b0, (std::vector<double>{0.0, 0.0}));
    }
    {
        auto cf = make_coefficient_field(
            2, 1.0, family::constant_point(1.0), {family::constant_line(1.0), family::constant_line(1.0)},
            {family::polynomial({{1.0, {0, 0}}, {1.0, {1, 1}}}), family::constant_point(2.0)}, false);
        EXPECT_EQ(frozen_drift(cf), (std::vector<double>{1.0, 2.0}));
    }
    {
        const std::vector<double> a{0.3, 0.9, 0.6};
        EXPECT_EQ(frozen_drift(example_mutation(3, a)), a);
    }
}

TEST(CoefficientProperties, FrozenDriftNonnegativeOnValidFields) {
    for (const auto& cf : fixtures()) {
        ASSERT_TRUE(validate_inward_drift(cf, 9).pass);
        for (double v : frozen_drift(cf)) EXPECT_GE(v, 0.0);
    }
}

TEST(CoefficientProperties, ModulusMonotoneInDelta) {
    for (const auto& cf : fixtures()) {
        double prev = std::numeric_limits<double>::infinity();
        for (double delta : {0.5, 0.25, 0.1, 0.02}) {
            const double c = validate_drift_modulus(cf, 16, delta * cf.M).C_meas;
            EXPECT_LE(c, prev);
            prev = c;
        }
    }
}

TEST(Families, TabulatedIsMultilinear) {
    // f(x, y) = 1 + 2x + 3y + xy sampled on a 3x3 lattice of [0, 2]^2.
    std::vector<double> vals;
    for (int j = 0; j < 3; ++j)
        for (int i = 0; i < 3; ++i) {
            const double x = i, y = j;
            vals.push_back(1 + 2 * x + 3 * y + x * y);
        }
    const auto f = family::tabulated(2, 3, 2.0, vals);
    const std::vector<double> p{0.3, 1.7};
    EXPECT_NEAR(f(p), 1 + 2 * 0.3 + 3 * 1.7 + 0.3 * 1.7, 1e-14);
    const auto g = family::tabulated_line(2, 1.0, {1.0, 3.0});
    EXPECT_NEAR(g(0.25), 1.5, 1e-15);
}
