#pragma once

#include "degensemi/operator1d.hpp"

#include <optional>

namespace degensemi {

/// Σ_i I ⊗ ... ⊗ A_i ⊗ ... ⊗ I for one-dimensional factors acting on
/// distinct axes. Axis 0 varies fastest in flattened arrays.
struct TensorOperator {
    std::vector<DiscreteOperator> factors;
    TensorGrid grid;
    Weight weight = Weight::x;
    /// Materialized Kronecker sum with its diffusion and drift parts.
    std::optional<DiscreteOperator> assembled;

    [[nodiscard]] int dim() const { return static_cast<int>(factors.size()); }
    [[nodiscard]] Eigen::Index size() const { return grid.size(); }
    [[nodiscard]] std::vector<int> shape() const {
        std::vector<int> s;
        for (const auto& g : grid.axes) s.push_back(g.size());
        return s;
    }
    [[nodiscard]] const DiscreteOperator& discrete() const {
        if (!assembled) throw PreconditionError("tensor operator has not been materialized");
        return *assembled;
    }
    [[nodiscard]] const SparseReal& matrix() const { return discrete().matrix; }
};

namespace detail {

inline SparseReal kronecker_sum(const TensorGrid& grid, const std::vector<const SparseReal*>& parts) {
    const Eigen::Index n = grid.size();
    std::vector<Eigen::Triplet<double>> trip;
    std::size_t nnz = 0;
    for (const auto* p : parts) nnz += static_cast<std::size_t>(p->nonZeros());
    trip.reserve(nnz * static_cast<std::size_t>(n) / std::max<Eigen::Index>(1, grid.axes.front().size()));
    for (Eigen::Index row = 0; row < n; ++row) {
        for (int i = 0; i < grid.dim(); ++i) {
            const SparseReal& Ai = *parts[static_cast<std::size_t>(i)];
            const int j = grid.coord(row, i);
            const Eigen::Index stride = grid.stride(i);
            for (SparseReal::InnerIterator it(Ai, j); it; ++it)
                trip.emplace_back(row, row + (it.col() - j) * stride, it.value());
        }
    }
    SparseReal S(n, n);
    S.setFromTriplets(trip.begin(), trip.end());
    S.makeCompressed();
    return S;
}

}  // namespace detail

/// Builds the tensor operator; `materialize` assembles the full sparse
/// Kronecker sum (needed by resolvents and oracles, not by the semigroup).
inline TensorOperator make_tensor_operator(std::vector<DiscreteOperator> factors, bool materialize = true) {
    if (factors.empty()) throw PreconditionError("tensor operator needs at least one factor");
    TensorOperator t;
    t.weight = factors.front().weight;
    for (const auto& f : factors) {
        if (f.dim() != 1) throw PreconditionError("tensor factors must be one-dimensional");
        if (f.weight != t.weight) throw PreconditionError("tensor factors must share the weight type");
        t.grid.axes.push_back(f.grid1d());
    }
    t.factors = std::move(factors);
    if (materialize) {
        std::vector<const SparseReal*> m, dif, dr;
        for (const auto& f : t.factors) {
            m.push_back(&f.matrix);
            dif.push_back(&f.diffusion);
            dr.push_back(&f.drift);
        }
        DiscreteOperator op;
        op.grid = t.grid;
        op.weight = t.weight;
        op.matrix = detail::kronecker_sum(t.grid, m);
        op.diffusion = detail::kronecker_sum(t.grid, dif);
        op.drift = detail::kronecker_sum(t.grid, dr);
        for (const auto& f : t.factors) {
            op.boundary_left.push_back(f.boundary_left.front());
            op.boundary_right.push_back(f.boundary_right.front());
        }
        t.assembled = std::move(op);
    }
    return t;
}

/// Constant-coefficient operator Σ_i [γ_i x_i ∂²_i + b_i ∂_i] on the grid
/// `g` in every direction.
inline TensorOperator constant_tensor_operator(const Grid1D& g, const std::vector<double>& gamma,
                                               const std::vector<double>& b, bool materialize = true) {
    if (gamma.size() != b.size()) throw PreconditionError("need one gamma and one drift per axis");
    std::vector<DiscreteOperator> f;
    for (std::size_t i = 0; i < b.size(); ++i) f.push_back(assemble_1d(g, family::constant_line(gamma[i]), b[i]));
    return make_tensor_operator(std::move(f), materialize);
}

namespace detail {

// Applies the dense matrix E along `axis` of the flattened array u.
inline void apply_along_axis(const TensorGrid& grid, int axis, const Eigen::MatrixXd& E, RealVec& u, int jobs) {
    const Eigen::Index inner = grid.stride(axis);
    const Eigen::Index Ni = grid.axes[static_cast<std::size_t>(axis)].size();
    const Eigen::Index outer = grid.size() / (inner * Ni);
    const Eigen::MatrixXd Et = E.transpose();
    parallel_for(static_cast<int>(outer), jobs, [&](int o) {
        Eigen::Map<Eigen::MatrixXd> U(u.data() + static_cast<Eigen::Index>(o) * inner * Ni, inner, Ni);
        const Eigen::MatrixXd V = U * Et;
        U = V;
    });
}

}  // namespace detail

/// T(t)u0 = (⊗_i exp(t A_i)) u0, applied one axis at a time.
inline RealVec tensor_semigroup(const TensorOperator& op, double t, const RealVec& u0, int jobs = 1) {
    if (u0.size() != op.size()) throw PreconditionError("array shape does not match the tensor grid");
    if (t < 0.0) throw PreconditionError("time must be nonnegative");
    if (t == 0.0) return u0;
    RealVec u = u0;
    for (int i = 0; i < op.dim(); ++i)
        detail::apply_along_axis(op.grid, i, dense_exponential(op.factors[static_cast<std::size_t>(i)].matrix, t), u,
                                 jobs);
    return u;
}

/// Multiple times sharing the per-axis work; returns one array per time.
inline std::vector<RealVec> tensor_semigroup(const TensorOperator& op, const std::vector<double>& times,
                                             const RealVec& u0, int jobs = 1) {
    std::vector<RealVec> out(times.size());
    parallel_for(static_cast<int>(times.size()), jobs,
                 [&](int k) { out[static_cast<std::size_t>(k)] = tensor_semigroup(op, times[static_cast<std::size_t>(k)], u0); });
    return out;
}

inline CplxVec tensor_resolvent(const TensorOperator& op, cplx lambda, const CplxVec& f) {
    if (f.size() != op.size()) throw PreconditionError("array shape does not match the tensor grid");
    return discrete_resolvent(op.discrete(), lambda, f);
}

inline CplxVec tensor_resolvent(const TensorOperator& op, cplx lambda, const RealVec& f) {
    return tensor_resolvent(op, lambda, CplxVec(f.cast<cplx>()));
}

template <typename Vec>
WeightedGradient directional_weighted_gradient(const Vec& u, const TensorOperator& op, int axis) {
    return directional_weighted_gradient(u, op.grid, axis, op.weight);
}

}  // namespace degensemi
