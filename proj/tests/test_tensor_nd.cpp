#include "degensemi/tensor_nd.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

using namespace degensemi;

namespace {

RealVec random_vec(Eigen::Index n, Rng& rng) {
    RealVec v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.uniform(-1.0, 1.0);
    return v;
}

std::vector<Eigen::MatrixXd> dense_factors(const TensorOperator& op) {
    std::vector<Eigen::MatrixXd> out;
    for (const auto& f : op.factors) out.emplace_back(Eigen::MatrixXd(f.matrix));
    return out;
}

RealVec cosine_product(const TensorGrid& g) {
    return sample(g, [](std::span<const double> x) {
        double v = 1.0;
        for (double s : x) v *= std::cos(kPi * s);
        return v;
    });
}

}  // namespace

TEST(TensorOperator, MaterializedMatchesDenseKroneckerSum) {
    const auto op = constant_tensor_operator(graded_grid(1.0, 6), {1.0, 2.0}, {0.5, 0.0});
    const Eigen::MatrixXd ref = oracle::kronecker_sum(dense_factors(op));
    const Eigen::MatrixXd got(op.matrix());
    EXPECT_EQ((ref - got).cwiseAbs().maxCoeff(), 0.0);

    const auto op3 = constant_tensor_operator(graded_grid(1.0, 7), {1.0, 1.5, 0.7}, {0.2, 1.0, 0.0});
    const Eigen::MatrixXd ref3 = oracle::kronecker_sum(dense_factors(op3));
    const Eigen::MatrixXd got3(op3.matrix());
    Rng rng(17);
    for (int k = 0; k < 100; ++k) {
        const int r = rng.below(static_cast<int>(op3.size())), c = rng.below(static_cast<int>(op3.size()));
        EXPECT_EQ(ref3(r, c), got3(r, c));
    }
    EXPECT_LE(sup_norm(RealVec(op3.matrix() * RealVec::Ones(op3.size()))), 1e-12 * 49 * 49);
    EXPECT_TRUE(check_m_matrix(op3.matrix()).pass(1e-12));
}

TEST(TensorSemigroup, TrivialCases) {
    const auto op = constant_tensor_operator(graded_grid(1.0, 10), {1.0, 1.0}, {0.3, 0.6}, false);
    const RealVec one = RealVec::Ones(op.size());
    EXPECT_LE(sup_norm(RealVec(tensor_semigroup(op, 0.7, one).array() - 1.0)), 1e-12);
    Rng rng(1);
    const RealVec u0 = random_vec(op.size(), rng);
    EXPECT_EQ(tensor_semigroup(op, 0.0, u0), u0);
    EXPECT_THROW(tensor_semigroup(op, 0.1, RealVec::Ones(5)), PreconditionError);
}

TEST(TensorSemigroup, MatchesDenseExponentialOfKroneckerSum) {
    {
        const auto op = constant_tensor_operator(graded_grid(1.0, 6), {1.0, 1.0}, {0.0, 0.5});
        const RealVec u0 = cosine_product(op.grid);
        const Eigen::MatrixXd E = oracle::dense_expm(oracle::kronecker_sum(dense_factors(op)), 0.3);
        EXPECT_LE(sup_norm(RealVec(tensor_semigroup(op, 0.3, u0) - E * u0)), 1e-10);
        // Product structure: (T_1 f) ⊗ (T_2 g).
        const RealVec f = sample(op.grid.axes[0], [](double s) { return std::cos(kPi * s); });
        const RealVec Tf = semigroup_step(op.factors[0], 0.3, f, Scheme::expm);
        const RealVec Tg = semigroup_step(op.factors[1], 0.3, f, Scheme::expm);
        RealVec prod(36);
        for (int j = 0; j < 6; ++j)
            for (int i = 0; i < 6; ++i) prod(i + 6 * j) = Tf(i) * Tg(j);
        EXPECT_LE(sup_norm(RealVec(tensor_semigroup(op, 0.3, u0) - prod)), 1e-12);
    }
    {
        const auto op = constant_tensor_operator(graded_grid(1.0, 8), {1.0, 0.5, 2.0}, {0.25, 0.0, 1.0});
        Rng rng(8);
        const RealVec u0 = random_vec(op.size(), rng);
        const Eigen::MatrixXd E = oracle::dense_expm(Eigen::MatrixXd(op.matrix()), 0.05);
        EXPECT_LE(sup_norm(RealVec(tensor_semigroup(op, 0.05, u0, 4) - E * u0)), 1e-10);
    }
    {
        const auto op = constant_tensor_operator(graded_grid(1.0, 24), {1.0, 1.0}, {0.7, 0.1});
        Rng rng(24);
        const RealVec u0 = random_vec(op.size(), rng);
        const Eigen::MatrixXd E = oracle::dense_expm(Eigen::MatrixXd(op.matrix()), 0.1);
        EXPECT_LE(sup_norm(RealVec(tensor_semigroup(op, 0.1, u0) - E * u0)), 1e-10);
    }
}

TEST(TensorSemigroup, AxisSymmetry) {
    const auto g0 = graded_grid(1.0, 9), g1 = graded_grid(1.0, 13);
    const auto a0 = assemble_1d(g0, family::constant_line(1.0), 0.4);
    const auto a1 = assemble_1d(g1, family::constant_line(2.0), 0.1);
    const auto op = make_tensor_operator({a0, a1}, false);
    const auto sw = make_tensor_operator({a1, a0}, false);
    Rng rng(8);
    const RealVec u = random_vec(op.size(), rng);
    RealVec ut(u.size());
    for (int j = 0; j < 13; ++j)
        for (int i = 0; i < 9; ++i) ut(j + 13 * i) = u(i + 9 * j);
    const RealVec a = tensor_semigroup(op, 0.2, u), b = tensor_semigroup(sw, 0.2, ut);
    double err = 0.0;
    for (int j = 0; j < 13; ++j)
        for (int i = 0; i < 9; ++i) err = std::max(err, std::abs(a(i + 9 * j) - b(j + 13 * i)));
    EXPECT_LE(err, 1e-13);
}

TEST(TensorResolvent, ConstantsAndPositivity) {
    const auto op = constant_tensor_operator(graded_grid(1.0, 16), {1.0, 1.0}, {0.5, 0.0});
    const CplxVec v = tensor_resolvent(op, 5.0, RealVec(RealVec::Ones(op.size())));
    EXPECT_LE(sup_norm(CplxVec(v.array() - 0.2)), 1e-12);
    const CplxVec w = tensor_resolvent(op, cplx(2.0, -3.0), RealVec(RealVec::Constant(op.size(), 4.0)));
    EXPECT_LE(sup_norm(CplxVec(w.array() - 4.0 / cplx(2.0, -3.0))), 1e-12);
    Rng rng(4);
    RealVec f = random_vec(op.size(), rng).cwiseAbs();
    EXPECT_GE(tensor_resolvent(op, 0.5, f).real().minCoeff(), -1e-12);
}

TEST(TensorResolvent, MatchesLaplaceTransformOfSemigroup) {
    const auto op = constant_tensor_operator(graded_grid(1.0, 12), {1.0, 1.5}, {0.3, 0.0});
    const RealVec f = cosine_product(op.grid);
    for (cplx lam : {cplx(2.0, 0.0), cplx(4.0, 3.0)}) {
        const CplxVec r = tensor_resolvent(op, lam, f);
        const CplxVec q = oracle::laplace_quadrature(
            lam, [&](double t) { return tensor_semigroup(op, t, f); }, 1e-4, 40.0 / lam.real(), 25);
        EXPECT_LE(sup_norm(CplxVec(r - q)) / sup_norm(r), 2e-3) << lam;
    }
}

TEST(TensorSpectrum, MinkowskiSum) {
    const auto op = constant_tensor_operator(graded_grid(1.0, 10), {1.0, 2.0}, {0.5, 0.2});
    std::vector<std::vector<double>> fe;
    for (const auto& f : op.factors) {
        Eigen::EigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(f.matrix));
        std::vector<double> ev;
        for (auto z : es.eigenvalues()) {
            EXPECT_LE(std::abs(z.imag()), 1e-8);
            ev.push_back(z.real());
        }
        fe.push_back(ev);
    }
    std::vector<double> mink;
    for (double a : fe[0])
        for (double b : fe[1]) mink.push_back(a + b);
    Eigen::EigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(op.matrix()));
    std::vector<double> full;
    for (auto z : es.eigenvalues()) full.push_back(z.real());
    std::sort(mink.begin(), mink.end());
    std::sort(full.begin(), full.end());
    ASSERT_EQ(mink.size(), full.size());
    double scale = 1.0;
    for (double v : full) scale = std::max(scale, std::abs(v));
    for (std::size_t k = 0; k < full.size(); ++k) EXPECT_LE(std::abs(mink[k] - full[k]), 1e-8 * scale);
}

TEST(DirectionalGradient, Examples) {
    const auto op = constant_tensor_operator(graded_grid(1.0, 17), {1.0, 1.0}, {0.0, 0.0}, false);
    EXPECT_EQ(directional_weighted_gradient(RealVec(RealVec::Constant(op.size(), 2.0)), op, 0).sup, 0.0);
    const RealVec x1 = sample(op.grid, [](std::span<const double> x) { return x[1]; });
    const auto wg = directional_weighted_gradient(x1, op, 1);
    EXPECT_NEAR(wg.sup, 1.0, op.grid.axes[1].spacing(15));
    EXPECT_EQ(directional_weighted_gradient(x1, op, 0).sup, 0.0);
}

TEST(DirectionalGradient, SmallTimeScaling) {
    // √t ‖√x_i ∂_i T(t)u‖ / ‖u‖ stays bounded as t → 0.
    const auto op = constant_tensor_operator(graded_grid(1.0, 24), {1.0, 1.0}, {0.5, 0.0}, false);
    const auto ts = logspace(1e-4, 1.0, 12);
    Rng rng(0xF001);
    double worst = 0.0;
    for (int p = 0; p < 20; ++p) {
        const RealVec u = random_vec(op.size(), rng);
        const auto Tu = tensor_semigroup(op, ts, u);
        for (std::size_t k = 0; k < ts.size(); ++k)
            for (int axis = 0; axis < 2; ++axis)
                worst = std::max(worst, std::sqrt(ts[k]) * directional_weighted_gradient(Tu[k], op, axis).sup / sup_norm(u));
    }
    EXPECT_LT(worst, 5.0);
}
