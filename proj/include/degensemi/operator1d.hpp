#pragma once

#include "degensemi/coefficients.hpp"
#include "degensemi/grid.hpp"

#include <Eigen/SparseLU>
#include <unsupported/Eigen/MatrixFunctions>

#include <memory>
#include <sstream>

namespace degensemi {

/// Degenerate weight multiplying the second derivative along each axis.
enum class Weight { x, x_one_minus_x };

/// Classification of the rows sitting on a face of the grid.
enum class BoundaryKind {
    absorbing_generator,  ///< zero drift on a degenerate face: the generator row is zero
    entrance,             ///< inward drift on a degenerate face: one-sided drift row
    neumann,              ///< nondegenerate face with u' = 0, ghost node eliminated
};

inline const char* to_string(BoundaryKind k) {
    switch (k) {
        case BoundaryKind::absorbing_generator: return "absorbing_generator";
        case BoundaryKind::entrance: return "entrance";
        case BoundaryKind::neumann: return "neumann";
    }
    return "?";
}

inline double weight_value(Weight w, double s, double M) {
    return w == Weight::x ? s : s * (M - s);
}

/// Sparse discretization of a degenerate operator on a tensor grid.
///
/// `matrix = diffusion + drift`. Both parts separately have nonnegative
/// off-diagonal entries and zero row sums; `drift` holds the pure upwind
/// first differences and `diffusion` the (possibly Péclet-reduced) second
/// differences.
struct DiscreteOperator {
    TensorGrid grid;
    Weight weight = Weight::x;
    SparseReal matrix;
    SparseReal diffusion;
    SparseReal drift;
    std::vector<BoundaryKind> boundary_left;
    std::vector<BoundaryKind> boundary_right;
    /// Constant drift and diffusion of a one-dimensional operator.
    double b = 0.0;
    LineFn gamma;

    [[nodiscard]] Eigen::Index size() const { return matrix.rows(); }
    [[nodiscard]] int dim() const { return grid.dim(); }
    [[nodiscard]] const Grid1D& grid1d() const { return grid.axes.front(); }
};

/// Local coefficients of one axis at one node: diffusion a ≥ 0 in front of
/// the second derivative and drift beta in front of the first derivative.
struct AxisCoefficients {
    double a = 0.0;
    double beta = 0.0;
};

using CoefficientSampler = std::function<AxisCoefficients(std::span<const double> x, int axis)>;

namespace detail {

struct Stencil {
    // Offsets -1, 0, +1 along one axis.
    double diff[3] = {0.0, 0.0, 0.0};
    double drift[3] = {0.0, 0.0, 0.0};
};

// Three-point stencil at coordinate j of an axis. The centered drift is
// split as upwind drift plus a reduced diffusion (a - |beta| h_up / 2) D2, so
// the sign pattern of both parts is visible.
inline Stencil axis_stencil(const Grid1D& g, int j, Weight w, AxisCoefficients c) {
    Stencil s;
    const int N = g.size();
    const double a = c.a, beta = c.beta;
    if (j == 0) {
        if (beta < -kTolHyp) {
            std::ostringstream os;
            os << "drift " << beta << " points outward at the degenerate face x = 0";
            throw PreconditionError(os.str());
        }
        if (beta > 0.0) {
            const double h = g.spacing(0);
            s.drift[2] = beta / h;
            s.drift[1] = -beta / h;
        }
        return s;
    }
    if (j == N - 1) {
        const double h = g.spacing(N - 2);
        if (w == Weight::x) {
            s.diff[0] = 2.0 * a / (h * h);
            s.diff[1] = -2.0 * a / (h * h);
            return s;
        }
        if (beta > kTolHyp) {
            std::ostringstream os;
            os << "drift " << beta << " points outward at the degenerate face x = 1";
            throw PreconditionError(os.str());
        }
        if (beta < 0.0) {
            s.drift[0] = -beta / h;
            s.drift[1] = beta / h;
        }
        return s;
    }
    const double hm = g.spacing(j - 1), hp = g.spacing(j);
    const double wl = 2.0 / (hm * (hm + hp)), wr = 2.0 / (hp * (hm + hp));
    double a_eff = a;
    if (beta > 0.0) {
        s.drift[2] = beta / hp;
        s.drift[1] = -beta / hp;
        if (beta * hp <= 2.0 * a) a_eff = a - beta * hp / 2.0;
    } else if (beta < 0.0) {
        s.drift[0] = -beta / hm;
        s.drift[1] = beta / hm;
        if (-beta * hm <= 2.0 * a) a_eff = a + beta * hm / 2.0;
    }
    s.diff[0] = a_eff * wl;
    s.diff[2] = a_eff * wr;
    s.diff[1] = -(s.diff[0] + s.diff[2]);
    return s;
}

}  // namespace detail

/// Assembles Σ_i [a_i ∂²_i + beta_i ∂_i] on a tensor grid from pointwise
/// axis coefficients. The weight selects the face treatment at x_i = M.
inline DiscreteOperator assemble_generic(const TensorGrid& grid, Weight w, const CoefficientSampler& coeff) {
    for (const auto& g : grid.axes) validate_grid(g);
    if (w == Weight::x_one_minus_x)
        for (const auto& g : grid.axes)
            if (g.M != 1.0) throw PreconditionError("the x(1-x) weight requires M = 1");
    const Eigen::Index n = grid.size();
    const int d = grid.dim();
    std::vector<Eigen::Triplet<double>> td, tb;
    td.reserve(static_cast<std::size_t>(n * 3 * d));
    tb.reserve(static_cast<std::size_t>(n * 2 * d));
    std::vector<BoundaryKind> left(static_cast<std::size_t>(d), BoundaryKind::absorbing_generator);
    std::vector<BoundaryKind> right(static_cast<std::size_t>(d),
                                    w == Weight::x ? BoundaryKind::neumann : BoundaryKind::absorbing_generator);
    std::vector<double> x;
    for (Eigen::Index row = 0; row < n; ++row) {
        x = grid.point(row);
        for (int i = 0; i < d; ++i) {
            const auto& g = grid.axes[static_cast<std::size_t>(i)];
            const int j = grid.coord(row, i);
            const AxisCoefficients c = coeff(x, i);
            if (!(c.a >= 0.0) || !std::isfinite(c.beta)) throw PreconditionError("invalid axis coefficients");
            const auto s = detail::axis_stencil(g, j, w, c);
            const Eigen::Index stride = grid.stride(i);
            for (int k = 0; k < 3; ++k) {
                const Eigen::Index col = row + (k - 1) * stride;
                if (s.diff[k] != 0.0) td.emplace_back(row, col, s.diff[k]);
                if (s.drift[k] != 0.0) tb.emplace_back(row, col, s.drift[k]);
            }
            if (j == 0 && s.drift[2] > 0.0) left[static_cast<std::size_t>(i)] = BoundaryKind::entrance;
            if (j == g.size() - 1 && w == Weight::x_one_minus_x && s.drift[0] > 0.0)
                right[static_cast<std::size_t>(i)] = BoundaryKind::entrance;
        }
    }
    DiscreteOperator op;
    op.grid = grid;
    op.weight = w;
    op.diffusion.resize(n, n);
    op.drift.resize(n, n);
    op.diffusion.setFromTriplets(td.begin(), td.end());
    op.drift.setFromTriplets(tb.begin(), tb.end());
    op.matrix = op.diffusion + op.drift;
    op.matrix.makeCompressed();
    op.boundary_left = std::move(left);
    op.boundary_right = std::move(right);
    return op;
}

/// Discretizes L = Γ(x) Σ_i [γ_i(x_i) w(x_i) ∂²_i + b_i(x) ∂_i] on `grid`.
inline DiscreteOperator assemble(const CoefficientField& cf, const TensorGrid& grid) {
    if (grid.dim() != cf.d) throw PreconditionError("grid dimension does not match the coefficient field");
    for (const auto& g : grid.axes)
        if (std::abs(g.M - cf.M) > 1e-14 * cf.M) throw PreconditionError("grid edge does not match the cube edge");
    const Weight w = cf.quadratic_weight ? Weight::x_one_minus_x : Weight::x;
    return assemble_generic(grid, w, [&](std::span<const double> x, int i) {
        const double G = cf.Gamma(x);
        const double s = x[static_cast<std::size_t>(i)];
        return AxisCoefficients{G * cf.gamma[static_cast<std::size_t>(i)](s) * weight_value(w, s, cf.M),
                                G * cf.b[static_cast<std::size_t>(i)](x)};
    });
}

/// One-dimensional operator γ(x) x u'' + b u' with u'(M) = 0.
inline DiscreteOperator assemble_1d(const Grid1D& grid, const LineFn& gamma, double b) {
    if (b < 0.0) throw PreconditionError("drift b must be nonnegative");
    for (double s : grid.nodes)
        if (!(gamma(s) > 0.0)) throw PreconditionError("gamma must be positive on every grid node");
    auto op = assemble_generic(TensorGrid({grid}), Weight::x, [&](std::span<const double> x, int) {
        return AxisCoefficients{gamma(x[0]) * x[0], b};
    });
    op.b = b;
    op.gamma = gamma;
    return op;
}

/// Sign-pattern summary of an assembled matrix.
struct MMatrixReport {
    double max_abs_row_sum = 0.0;
    double min_offdiag = 0.0;
    double max_diag = 0.0;

    [[nodiscard]] bool pass(double tol = 1e-12) const {
        return max_abs_row_sum <= tol && min_offdiag >= 0.0 && max_diag <= 0.0;
    }
};

/// Row sums are measured relative to the largest entry of the row.
inline MMatrixReport check_m_matrix(const SparseReal& A) {
    MMatrixReport r;
    for (Eigen::Index i = 0; i < A.outerSize(); ++i) {
        double sum = 0.0, scale = 0.0;
        for (SparseReal::InnerIterator it(A, i); it; ++it) {
            sum += it.value();
            scale = std::max(scale, std::abs(it.value()));
            if (it.col() == it.row())
                r.max_diag = std::max(r.max_diag, it.value());
            else
                r.min_offdiag = std::min(r.min_offdiag, it.value());
        }
        r.max_abs_row_sum = std::max(r.max_abs_row_sum, std::abs(sum) / std::max(1.0, scale));
    }
    return r;
}

// ---------------------------------------------------------------------------
// Resolvent.

inline constexpr double kResolventResidualTol = 1e-10;

/// Factorization of λI − A for one λ, reused across right-hand sides.
class ResolventSolver {
public:
    ResolventSolver(const SparseReal& A, cplx lambda) : A_(A.cast<cplx>()), lambda_(lambda) {
        const Eigen::Index n = A.rows();
        SparseCplx S = (-A.cast<cplx>()).eval();
        SparseCplx I(n, n);
        I.setIdentity();
        S += lambda * I;
        S.makeCompressed();
        lu_.compute(S);
        if (lu_.info() != Eigen::Success) {
            std::ostringstream os;
            os << "sparse LU of (lambda I - A) failed at lambda = " << lambda;
            throw NumericalError(os.str(), std::abs(lu_.determinant()));
        }
    }

    [[nodiscard]] cplx lambda() const { return lambda_; }

    /// Solves (λI − A)u = f and certifies ‖(λI−A)u − f‖∞ ≤ 1e−10‖f‖∞ after
    /// at most two steps of iterative refinement.
    [[nodiscard]] CplxVec solve(const CplxVec& f) const {
        const double fn = sup_norm(f);
        if (!std::isfinite(fn)) throw PreconditionError("right-hand side is not finite");
        if (fn == 0.0) return CplxVec::Zero(f.size());
        CplxVec u = lu_.solve(f);
        double res = 0.0;
        for (int it = 0; it < 3; ++it) {
            const CplxVec r = f - (lambda_ * u - A_ * u);
            res = sup_norm(r);
            if (res <= kResolventResidualTol * fn) return u;
            u += lu_.solve(r);
        }
        std::ostringstream os;
        os << "resolvent residual " << res / fn << " exceeds tolerance at lambda = " << lambda_;
        throw NumericalError(os.str(), res / fn);
    }

    [[nodiscard]] CplxVec solve(const RealVec& f) const { return solve(CplxVec(f.cast<cplx>())); }

private:
    Eigen::SparseMatrix<cplx, Eigen::RowMajor> A_;
    cplx lambda_;
    Eigen::SparseLU<SparseCplx> lu_;
};

inline CplxVec discrete_resolvent(const DiscreteOperator& A, cplx lambda, const CplxVec& f) {
    if (f.size() != A.size()) throw PreconditionError("right-hand side size mismatch");
    return ResolventSolver(A.matrix, lambda).solve(f);
}

inline CplxVec discrete_resolvent(const DiscreteOperator& A, cplx lambda, const RealVec& f) {
    return discrete_resolvent(A, lambda, CplxVec(f.cast<cplx>()));
}

// ---------------------------------------------------------------------------
// Semigroup.

enum class Scheme { expm, crank_nicolson, implicit_euler };

inline constexpr Eigen::Index kMaxDenseExpm = 400;

inline Eigen::MatrixXd dense_exponential(const SparseReal& A, double t) {
    if (A.rows() > kMaxDenseExpm) throw PreconditionError("expm is limited to N <= 400");
    const Eigen::MatrixXd tA = t * Eigen::MatrixXd(A);
    return tA.exp();
}

namespace detail {

inline SparseReal shifted_identity(const SparseReal& A, double alpha) {
    SparseReal I(A.rows(), A.cols());
    I.setIdentity();
    SparseReal S = I + alpha * A;
    S.makeCompressed();
    return S;
}

inline RealVec stepping(const SparseReal& A, double t, const RealVec& u0, Scheme scheme, int steps) {
    if (steps < 1) throw PreconditionError("steps must be >= 1");
    const double dt = t / steps;
    const double theta = scheme == Scheme::implicit_euler ? 1.0 : 0.5;
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    const Eigen::SparseMatrix<double> lhs = shifted_identity(A, -theta * dt);
    lu.compute(lhs);
    if (lu.info() != Eigen::Success) throw NumericalError("sparse LU of the time-stepping matrix failed", dt);
    const SparseReal rhs_op = shifted_identity(A, (1.0 - theta) * dt);
    RealVec u = u0;
    for (int k = 0; k < steps; ++k) {
        const RealVec rhs = theta == 1.0 ? u : RealVec(rhs_op * u);
        u = lu.solve(rhs);
        if (!u.allFinite()) throw NumericalError("time stepping produced non-finite values", dt);
    }
    return u;
}

}  // namespace detail

/// Approximates T(t)u0 = exp(tA)u0.
inline RealVec semigroup_step(const DiscreteOperator& A, double t, const RealVec& u0, Scheme scheme, int steps = 1) {
    if (u0.size() != A.size()) throw PreconditionError("initial datum size mismatch");
    if (!(t > 0.0)) {
        if (t == 0.0) return u0;
        throw PreconditionError("time must be nonnegative");
    }
    if (scheme == Scheme::expm) return dense_exponential(A.matrix, t) * u0;
    return detail::stepping(A.matrix, t, u0, scheme, steps);
}

// ---------------------------------------------------------------------------
// Weighted gradients.

/// Sup over grid midpoints of weight(mid) |Δu / h| along one axis, together
/// with the sup restricted to the first interval x_i ∈ [x_0, x_1] (and the
/// last interval [x_{N-2}, x_{N-1}]).
struct WeightedGradient {
    double sup = 0.0;
    double first = 0.0;
    double last = 0.0;
};

inline double gradient_weight(Weight w, double s, double M) {
    return std::sqrt(std::max(0.0, weight_value(w, s, M)));
}

template <typename Vec>
WeightedGradient directional_weighted_gradient(const Vec& u, const TensorGrid& grid, int axis, Weight w) {
    if (u.size() != grid.size()) throw PreconditionError("array size does not match the grid");
    if (axis < 0 || axis >= grid.dim()) throw PreconditionError("axis out of range");
    const auto& g = grid.axes[static_cast<std::size_t>(axis)];
    const Eigen::Index stride = grid.stride(axis);
    const int N = g.size();
    std::vector<double> wmid(static_cast<std::size_t>(N - 1));
    for (int j = 0; j + 1 < N; ++j)
        wmid[static_cast<std::size_t>(j)] = gradient_weight(w, 0.5 * (g[j] + g[j + 1]), g.M) / g.spacing(j);
    WeightedGradient out;
    for (Eigen::Index n = 0; n < u.size(); ++n) {
        const int j = grid.coord(n, axis);
        if (j + 1 >= N) continue;
        const double v = wmid[static_cast<std::size_t>(j)] * std::abs(u(n + stride) - u(n));
        out.sup = std::max(out.sup, v);
        if (j == 0) out.first = std::max(out.first, v);
        if (j == N - 2) out.last = std::max(out.last, v);
    }
    return out;
}

template <typename Vec>
WeightedGradient weighted_gradient_sup(const Vec& u, const Grid1D& grid, Weight w = Weight::x) {
    return directional_weighted_gradient(u, TensorGrid({grid}), 0, w);
}

/// Samples a function at the nodes of a tensor grid.
inline RealVec sample(const TensorGrid& grid, const PointFn& f) {
    RealVec v(grid.size());
    for (Eigen::Index n = 0; n < v.size(); ++n) v(n) = f(grid.point(n));
    return v;
}

inline RealVec sample(const Grid1D& grid, const LineFn& f) {
    RealVec v(grid.size());
    for (int j = 0; j < grid.size(); ++j) v(j) = f(grid[j]);
    return v;
}

}  // namespace degensemi
