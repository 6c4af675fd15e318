#include "degensemi/operator1d.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace degensemi;

namespace {

DiscreteOperator unit_operator(int N, double b, double M = 1.0, double p = 2.0) {
    return assemble_1d(graded_grid(M, N, p), family::constant_line(1.0), b);
}

RealVec random_vec(Eigen::Index n, Rng& rng, double lo = -1.0, double hi = 1.0) {
    RealVec v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.uniform(lo, hi);
    return v;
}

}  // namespace

TEST(Grid, GradedAndCornerGrids) {
    const auto g = graded_grid(2.0, 11, 2.0);
    EXPECT_EQ(g.size(), 11);
    EXPECT_EQ(g[0], 0.0);
    EXPECT_EQ(g[10], 2.0);
    EXPECT_NEAR(g[1], 2.0 / 100.0, 1e-15);
    EXPECT_NO_THROW(validate_grid(g));

    const auto c = corner_grid(8);
    EXPECT_NO_THROW(validate_grid(c));
    const int N = c.size();
    bool has_third = false, has_two_thirds = false;
    for (int j = 0; j < N; ++j) {
        EXPECT_NEAR(c[j] + c[N - 1 - j], 1.0, 1e-15);
        has_third |= std::abs(c[j] - 1.0 / 3.0) < 1e-15;
        has_two_thirds |= std::abs(c[j] - 2.0 / 3.0) < 1e-15;
    }
    EXPECT_TRUE(has_third);
    EXPECT_TRUE(has_two_thirds);
}

TEST(Assemble1d, AnnihilatesConstantsAndIsMMatrix) {
    for (double b : {0.0, 0.3, 1.0, 5.0}) {
        for (double p : {1.0, 2.0}) {
            const auto op = assemble_1d(graded_grid(1.5, 40, p), family::polynomial_line({1.0, 0.5}), b);
            EXPECT_LE(sup_norm(RealVec(op.matrix * RealVec::Ones(op.size()))), 1e-12 * 40 * 40);
            EXPECT_TRUE(check_m_matrix(op.matrix).pass());
            EXPECT_TRUE(check_m_matrix(op.diffusion).pass());
            EXPECT_TRUE(check_m_matrix(op.drift).pass());
            EXPECT_EQ(op.boundary_left[0], b > 0 ? BoundaryKind::entrance : BoundaryKind::absorbing_generator);
            EXPECT_EQ(op.boundary_right[0], BoundaryKind::neumann);
        }
    }
}

TEST(Assemble1d, RejectsInvalidInput) {
    EXPECT_THROW(unit_operator(10, -0.1), PreconditionError);
    EXPECT_THROW(assemble_1d(graded_grid(1.0, 10), family::polynomial_line({0.0, 1.0}), 0.0), PreconditionError);
}

TEST(Assemble1d, BoundaryRows) {
    {
        const auto op = unit_operator(12, 0.0);
        const RealVec u = sample(op.grid1d(), [](double s) { return std::sin(3 * s) + 2; });
        EXPECT_EQ((op.matrix * u)(0), 0.0);
    }
    {
        // b u'(0) with u = x.
        const auto op = unit_operator(12, 1.0);
        const RealVec u = sample(op.grid1d(), [](double s) { return s; });
        EXPECT_NEAR((op.matrix * u)(0), 1.0, 1e-14);
    }
    {
        // Ghost elimination: γ(M) M 2 (u_{N-2} - u_{N-1}) / h².
        const auto op = unit_operator(12, 0.7, 2.0);
        const auto& g = op.grid1d();
        const RealVec u = sample(g, [](double s) { return s * s; });
        const double h = g.spacing(10);
        EXPECT_NEAR((op.matrix * u)(11), 2.0 * 2.0 * (u(10) - u(11)) / (h * h), 1e-12);
    }
}

TEST(Assemble1d, SecondDerivativeOfQuadratic) {
    // γ x u'' with u = x² gives 2x; exact for the three-point formula.
    for (int N : {21, 81}) {
        const auto op = assemble_1d(graded_grid(1.0, N, 1.0), family::constant_line(1.0), 0.0);
        const auto& g = op.grid1d();
        const RealVec out = op.matrix * sample(g, [](double s) { return s * s; });
        for (int j = 1; j + 1 < N; ++j) EXPECT_NEAR(out(j), 2.0 * g[j], 1e-10 * N * N);
    }
    // Centered drift where the Péclet number allows: x u'' + b u' on u = x²
    // is exact (2x + 2bx) at interior nodes with |b| h <= 2x.
    const auto op = assemble_1d(graded_grid(1.0, 41, 1.0), family::constant_line(1.0), 0.5);
    const auto& g = op.grid1d();
    const RealVec out = op.matrix * sample(g, [](double s) { return s * s; });
    for (int j = 1; j + 1 < g.size(); ++j)
        if (0.5 * g.spacing(j) <= 2.0 * g[j]) EXPECT_NEAR(out(j), 2.0 * g[j] + 2 * 0.5 * g[j], 1e-9);
}

TEST(DiscreteResolvent, ConstantsAndImaginaryShift) {
    const auto op = unit_operator(64, 0.5);
    const RealVec one = RealVec::Ones(op.size());
    EXPECT_LE(sup_norm(CplxVec(discrete_resolvent(op, 2.0, one).array() - 0.5)), 1e-12);
    const CplxVec v = discrete_resolvent(op, cplx(0.0, 10.0), one);
    EXPECT_LE(sup_norm(CplxVec(v.array() - 1.0 / cplx(0.0, 10.0))), 1e-12);
    EXPECT_NEAR(std::abs(v(7)), 0.1, 1e-12);
}

TEST(DiscreteResolvent, InversePositivityAgainstDenseInverse) {
    for (double b : {0.0, 1.0}) {
        const auto op = unit_operator(20, b);
        for (double lam : {0.5, 5.0, 50.0}) {
            const Eigen::MatrixXd S = lam * Eigen::MatrixXd::Identity(20, 20) - Eigen::MatrixXd(op.matrix);
            const Eigen::MatrixXd Sinv = S.inverse();
            EXPECT_GE(Sinv.minCoeff(), -1e-12);
            EXPECT_LE((Sinv.rowwise().sum().array() - 1.0 / lam).abs().maxCoeff(), 1e-10);
            Rng rng(11);
            const RealVec f = random_vec(20, rng, 0.0, 1.0);
            const CplxVec u = discrete_resolvent(op, lam, f);
            EXPECT_LE(sup_norm(CplxVec(u - (Sinv * f).cast<cplx>())), 1e-10);
            EXPECT_GE(u.real().minCoeff(), -1e-12);
        }
    }
}

TEST(DiscreteResolvent, ResolventIdentity) {
    const auto op = unit_operator(64, 0.8);
    Rng rng(21);
    const cplx lam(3.0, 7.0), nu(0.5, -2.0);
    for (int k = 0; k < 5; ++k) {
        const RealVec f = random_vec(op.size(), rng);
        const CplxVec Rnu = discrete_resolvent(op, nu, f);
        const CplxVec lhs = discrete_resolvent(op, lam, f) - Rnu;
        const CplxVec rhs = (nu - lam) * discrete_resolvent(op, lam, Rnu);
        EXPECT_LE(sup_norm(CplxVec(lhs - rhs)), 1e-8);
    }
}

TEST(Semigroup, ConservesConstants) {
    const auto op = unit_operator(50, 0.4);
    const RealVec one = RealVec::Ones(op.size());
    for (auto s : {Scheme::expm, Scheme::crank_nicolson, Scheme::implicit_euler}) {
        EXPECT_LE(sup_norm(RealVec(semigroup_step(op, 0.3, one, s, 16).array() - 1.0)), 1e-12);
        EXPECT_EQ(semigroup_step(op, 0.0, one, s, 4), one);
    }
}

TEST(Semigroup, ImplicitEulerIsPositiveContraction) {
    const auto op = unit_operator(64, 1.0);
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        RealVec u0 = random_vec(op.size(), rng);
        u0 /= sup_norm(u0);
        const RealVec u = semigroup_step(op, 0.05, u0, Scheme::implicit_euler, 1);
        EXPECT_LE(sup_norm(u), 1.0 + 1e-12);
    }
    const RealVec pos = random_vec(op.size(), rng, 0.0, 1.0);
    EXPECT_GE(semigroup_step(op, 0.2, pos, Scheme::implicit_euler, 10).minCoeff(), -1e-12);
}

TEST(Semigroup, CrankNicolsonMatchesExpm) {
    const auto op = unit_operator(60, 0.0);
    const RealVec u0 = sample(op.grid1d(), [](double s) { return std::sin(kPi * s / 2.0); });
    const RealVec a = semigroup_step(op, 0.1, u0, Scheme::crank_nicolson, 64);
    const RealVec e = semigroup_step(op, 0.1, u0, Scheme::expm);
    EXPECT_LE(sup_norm(RealVec(a - e)), 1e-6);
    const Eigen::MatrixXd ref = oracle::dense_expm(Eigen::MatrixXd(op.matrix), 0.1);
    EXPECT_LE(sup_norm(RealVec(e - ref * u0)), 1e-12);
}

TEST(Semigroup, CrankNicolsonIsSecondOrder) {
    const auto op = unit_operator(60, 0.0);
    const RealVec u0 = sample(op.grid1d(), [](double s) { return std::cos(kPi * s); });
    const RealVec e = semigroup_step(op, 0.1, u0, Scheme::expm);
    double prev = 0.0;
    for (int steps : {64, 128, 256}) {
        const double err = sup_norm(RealVec(semigroup_step(op, 0.1, u0, Scheme::crank_nicolson, steps) - e));
        if (prev > 0.0) EXPECT_NEAR(prev / err, 4.0, 0.2);
        prev = err;
    }
    EXPECT_LE(prev, 1e-6);
}

TEST(Semigroup, ExpmSizeLimit) {
    const auto op = unit_operator(401, 0.0);
    EXPECT_THROW(semigroup_step(op, 0.1, RealVec::Ones(401), Scheme::expm), PreconditionError);
}

TEST(Dissipativity, RandomVectors) {
    const auto op = unit_operator(64, 0.6);
    Rng rng(99);
    for (int trial = 0; trial < 100; ++trial) {
        const RealVec u = random_vec(op.size(), rng);
        const RealVec Au = op.matrix * u;
        for (double mu : {0.1, 1.0, 10.0}) EXPECT_LE(sup_norm(RealVec(mu * u)), sup_norm(RealVec(mu * u - Au)) * (1 + 1e-14));
    }
}

TEST(WeightedGradient, Examples) {
    const auto g = graded_grid(1.0, 65);
    EXPECT_EQ(weighted_gradient_sup(RealVec(RealVec::Constant(65, 3.0)), g).sup, 0.0);
    const auto lin = weighted_gradient_sup(sample(g, [](double s) { return s; }), g);
    EXPECT_NEAR(lin.sup, 1.0, g.spacing(63));
    EXPECT_EQ(lin.sup, lin.last);

    // √x (√x)' = 1/2 in the interior; on the first interval the chord gives
    // √(h/2) · √h / h = 1/√2 at every resolution.
    for (int N : {33, 65, 129}) {
        const auto gg = graded_grid(1.0, N, 1.0);
        const auto wg = weighted_gradient_sup(sample(gg, [](double s) { return std::sqrt(s); }), gg);
        EXPECT_NEAR(wg.first, std::sqrt(0.5), 1e-12);
        EXPECT_NEAR(wg.sup, wg.first, 1e-12);
        EXPECT_NEAR(wg.last, 0.5, 1.0 / N);
    }
}

TEST(UniformityInB, MeasuredD0) {
    const double B = 1.0;
    std::vector<double> d0;
    const std::vector<double> mags{1.0, 4.0, 16.0, 64.0, 256.0};
    Rng rng(3);
    std::vector<RealVec> probes;
    for (int k = 0; k < 6; ++k) probes.push_back(random_vec(64, rng).array().sign());
    for (double b : {0.0, B / 4, B / 2, 3 * B / 4, B}) {
        const auto op = unit_operator(64, b);
        double best = 0.0;
        for (double m : mags)
            for (double th : {0.0, kPi / 3}) {
                ResolventSolver rs(op.matrix, std::polar(m, th));
                for (const auto& f : probes) best = std::max(best, m * sup_norm(rs.solve(f)) / sup_norm(f));
            }
        d0.push_back(best);
    }
    EXPECT_LE(*std::max_element(d0.begin(), d0.end()) / *std::min_element(d0.begin(), d0.end()), 5.0);
}
