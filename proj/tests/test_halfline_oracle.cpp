#include "degensemi/halfline_oracle.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace degensemi;

namespace {

HalflineFunction exp_decay() {
    return {[](double s) { return cplx(std::exp(-s)); }, 0.0, {}};
}

const std::vector<double> kXs{0.0, 0.1, 0.5, 1.0, 2.0, 3.5, 5.0, 8.0};

}  // namespace

TEST(SectorPoint, RootHasPositiveRealPart) {
    for (double th : {0.0, 0.5, 1.5, 2.5, -3.0}) {
        const auto sp = make_sector_point(3.7, th);
        EXPECT_GT(sp.mu.real(), 0.0);
        EXPECT_LE(std::abs(sp.mu * sp.mu - sp.lambda), 1e-14 * sp.magnitude());
        EXPECT_NEAR(sp.theta, th, 1e-14);
    }
    EXPECT_THROW(make_sector_point(cplx(-2.0, 0.0)), PreconditionError);
    EXPECT_THROW(make_sector_point(cplx(0.0, 0.0)), PreconditionError);
}

TEST(BaseResolvent, ConstantsMapToReciprocal) {
    for (double lam : {1.0, 4.0}) {
        const auto r = base_resolvent(make_sector_point(lam, 0.0), constant_function(1.0), kXs);
        for (Eigen::Index i = 0; i < r.values.size(); ++i) EXPECT_NEAR(std::abs(r.values(i) - 1.0 / lam), 0.0, 1e-12);
    }
}

TEST(BaseResolvent, MatchesCollocationForExponential) {
    const auto sp = make_sector_point(1.0, 0.0);
    const auto r = base_resolvent(sp, exp_decay(), kXs);
    oracle::ChebyshevBvp ref(1.0, 1.0, 0.0, [](double s) { return cplx(std::exp(-s)); }, 40.0, 220);
    for (std::size_t i = 0; i < kXs.size(); ++i)
        EXPECT_LE(std::abs(r.values(static_cast<Eigen::Index>(i)) - ref(kXs[i])), 1e-6) << "x=" << kXs[i];
}

TEST(BaseResolvent, NeumannAtOrigin) {
    Rng rng(7);
    const auto sp = make_sector_point(5.0, 1.1);
    for (const auto& u : oracle_probes(sp.mu, 5, rng)) {
        const double x0 = 0.0;
        const auto r = base_resolvent(sp, u, std::span<const double>(&x0, 1));
        EXPECT_LE(std::abs(r.derivative(0)), 1e-6 * std::max(1.0, sup_norm(r.node_rhs)));
    }
}

TEST(BaseResolvent, RejectsNegativeAxis) {
    EXPECT_THROW(base_resolvent(make_sector_point(cplx(-1.0, 0.0)), constant_function(1.0), kXs), PreconditionError);
}

TEST(ScaledResolvent, ScalingIdentity) {
    {
        const auto r = scaled_resolvent(make_sector_point(1.0, 0.0), 2.0, constant_function(1.0), kXs);
        for (Eigen::Index i = 0; i < r.values.size(); ++i) EXPECT_NEAR(std::abs(r.values(i) - 1.0), 0.0, 1e-12);
    }
    {
        const auto r = scaled_resolvent(make_sector_point(4.0, 0.0), 4.0, constant_function(1.0), kXs);
        for (Eigen::Index i = 0; i < r.values.size(); ++i) EXPECT_NEAR(std::abs(r.values(i) - 0.25), 0.0, 1e-12);
    }
    const auto a = scaled_resolvent(make_sector_point(1.0, 0.0), 2.0, exp_decay(), kXs);
    const auto b = base_resolvent(make_sector_point(0.5, 0.0), exp_decay(), kXs);
    EXPECT_LE(sup_norm(CplxVec(a.values - 0.5 * b.values)), 1e-14);
}

TEST(DriftResolvent, ZeroDriftIsSingleTerm) {
    const auto sp = make_sector_point(3.0, 0.4);
    const auto r = drift_resolvent(sp, {2.0, 0.0}, exp_decay(), kXs);
    const auto s = scaled_resolvent(sp, 2.0, exp_decay(), kXs);
    EXPECT_EQ(r.terms, 1);
    EXPECT_LE(sup_norm(CplxVec(r.values - s.values)), 1e-14);
}

TEST(DriftResolvent, MatchesCollocationAtTwiceTheRadius) {
    // R = 8 B² / γ₀ = 8 for B = γ₀ = 1; λ = 16 = 2R.
    const auto sp = make_sector_point(16.0, 0.0);
    const HalflineProblem hp{1.0, 1.0};
    EXPECT_DOUBLE_EQ(drift_series_radius(hp), 8.0);
    const auto r = drift_resolvent(sp, hp, exp_decay(), kXs);
    oracle::ChebyshevBvp ref(16.0, 1.0, 1.0, [](double s) { return cplx(std::exp(-s)); }, 30.0, 220);
    for (std::size_t i = 0; i < kXs.size(); ++i)
        EXPECT_LE(std::abs(r.values(static_cast<Eigen::Index>(i)) - ref(kXs[i])), 1e-6) << "x=" << kXs[i];
    EXPECT_LE(r.contraction, 0.25 + 1e-15);
    EXPECT_LE(collocation_residual(r, sp, hp, 10.0), 1e-6);
}

TEST(DriftResolvent, ThresholdIsStrict) {
    const HalflineProblem hp{2.0, 1.0};  // radius 4
    try {
        drift_resolvent(make_sector_point(4.0, 0.0), hp, exp_decay(), kXs);
        FAIL() << "expected rejection at |lambda| = 8 b^2 / gamma";
    } catch (const PreconditionError& e) {
        EXPECT_NE(std::string(e.what()).find("= 4"), std::string::npos) << e.what();
    }
    EXPECT_NO_THROW(drift_resolvent(make_sector_point(4.0 * (1 + 1e-9), 0.0), hp, exp_decay(), kXs));
    EXPECT_THROW(drift_resolvent(make_sector_point(100.0, kPi / 2), hp, exp_decay(), kXs), PreconditionError);
}

TEST(DriftResolvent, ReportsConvergenceFailure) {
    const auto sp = make_sector_point(9.0, 0.0);
    try {
        drift_resolvent(sp, {1.0, 1.0}, exp_decay(), kXs, 3);
        FAIL() << "expected NumericalError";
    } catch (const NumericalError& e) {
        EXPECT_GT(e.diagnostic(), 1e-10);
    }
}

TEST(DriftResolventProperty, ConstantsAndMonotoneTerms) {
    Rng rng(0xF001);
    for (int trial = 0; trial < 25; ++trial) {
        const HalflineProblem hp{rng.uniform(1.0, 3.0), rng.uniform(0.0, 2.0)};
        const double R = drift_series_radius(hp);
        const auto sp = make_sector_point(rng.uniform(1.05, 20.0) * std::max(R, 0.5), rng.uniform(-1.5, 1.5));
        const double c = rng.uniform(-3.0, 3.0);
        const auto r = drift_resolvent(sp, hp, constant_function(c), kXs);
        for (Eigen::Index i = 0; i < r.values.size(); ++i)
            EXPECT_LE(std::abs(r.values(i) - c / sp.lambda), 1e-12 * std::max(1.0, std::abs(c / sp.lambda)));

        Rng probe_rng = rng.split(static_cast<std::uint64_t>(trial));
        const auto probes = oracle_probes(std::sqrt(sp.lambda / hp.gamma), 2, probe_rng);
        const auto rr = drift_resolvent(sp, hp, probes.back(), kXs);
        for (std::size_t n = 0; n + 1 < rr.term_norms.size(); ++n)
            EXPECT_LE(rr.term_norms[n + 1], rr.contraction * rr.term_norms[n] * (1 + 1e-6) + 1e-14);
        EXPECT_LE(collocation_residual(rr, sp, hp, 10.0 / std::sqrt(sp.magnitude())), 1e-6);
        EXPECT_LE(std::abs(rr.derivative(0)), 1e-6 * std::max(1.0, sup_norm(rr.node_rhs)));  // kXs[0] = 0
    }
}

TEST(OracleSweep, BoundArithmeticAndConstants) {
    // Base resolvent bound at λ = i: 3 / (2 cos(π/4)) ≈ 2.1213.
    const std::vector<double> th{kPi / 2}, mag{1.0};
    const auto sw = oracle_norm_sweep(th, mag, 4);
    ASSERT_FALSE(sw.rows.empty());
    EXPECT_EQ(sw.rows[0].estimate, "resolvent");
    EXPECT_NEAR(sw.rows[0].bound, 2.1213203435596424, 1e-12);
    EXPECT_LE(sw.rows[0].measured, sw.rows[0].bound);

    const auto r = base_resolvent(make_sector_point(100.0, 0.0), constant_function(1.0), kXs);
    EXPECT_NEAR(sup_norm(r.node_values), 0.01, 1e-15);

    // q ≤ 1/(√16 cos 0) = 1/4 < 1/2 at λ = 16, b = γ = 1.
    EXPECT_DOUBLE_EQ(drift_contraction(make_sector_point(16.0, 0.0), {1.0, 1.0}), 0.25);
}

TEST(OracleSweep, BoundsHoldOnSmallSweep) {
    const std::vector<double> th{0.0, kPi / 3, 0.49 * kPi, 3 * kPi / 4}, mag{1.0, 16.0, 256.0};
    const std::vector<double> drifts{0.0, 0.5, 1.0}, gammas{1.0, 2.0};
    const auto sw = oracle_norm_sweep(th, mag, 6, drifts, gammas);
    for (const auto& row : sw.rows) EXPECT_TRUE(row.pass) << row.estimate << " theta=" << row.theta << " mag=" << row.mag << " ratio=" << row.ratio;
}
