#pragma once

#include "degensemi/common.hpp"

#include <vector>

namespace degensemi {

/// Strictly increasing nodes on [0, M] with x_0 = 0 and x_{N-1} = M.
struct Grid1D {
    double M = 1.0;
    double grading = 1.0;
    std::vector<double> nodes;

    [[nodiscard]] int size() const { return static_cast<int>(nodes.size()); }
    [[nodiscard]] double operator[](int j) const { return nodes[static_cast<std::size_t>(j)]; }
    [[nodiscard]] double spacing(int j) const { return (*this)[j + 1] - (*this)[j]; }
};

inline void validate_grid(const Grid1D& g) {
    if (g.size() < 3) throw PreconditionError("grid needs at least 3 nodes");
    if (g.nodes.front() != 0.0 || g.nodes.back() != g.M) throw PreconditionError("grid must span [0, M]");
    for (int j = 0; j + 1 < g.size(); ++j)
        if (!(g.spacing(j) > 0.0)) throw PreconditionError("grid nodes must be strictly increasing");
}

/// x_j = M (j / (N-1))^p: nodes cluster like j^p at the degenerate end.
inline Grid1D graded_grid(double M, int N, double p = 2.0) {
    if (N < 3) throw PreconditionError("grid needs at least 3 nodes");
    if (p < 1.0) throw PreconditionError("grading exponent must be >= 1");
    Grid1D g;
    g.M = M;
    g.grading = p;
    g.nodes.resize(static_cast<std::size_t>(N));
    for (int j = 0; j < N; ++j) g.nodes[static_cast<std::size_t>(j)] = M * std::pow(static_cast<double>(j) / (N - 1), p);
    g.nodes.back() = M;
    return g;
}

/// Grid on [0, 1] with x_{N-1-j} = 1 - x_j and nodes at 1/3, 1/2 and 2/3:
/// graded (x ∝ j²) on [0, 1/3] with m intervals, uniform on [1/3, 1/2] with
/// spacing close to the last graded one, mirrored on [1/2, 1].
inline Grid1D corner_grid(int m) {
    if (m < 2) throw PreconditionError("corner grid needs m >= 2");
    const double third = 1.0 / 3.0, sixth = 1.0 / 6.0;
    std::vector<double> left;
    for (int j = 0; j <= m; ++j) left.push_back(third * (static_cast<double>(j) / m) * (static_cast<double>(j) / m));
    const double h_last = left[static_cast<std::size_t>(m)] - left[static_cast<std::size_t>(m - 1)];
    const int half = std::max(1, static_cast<int>(std::ceil(sixth / h_last)));
    for (int j = 1; j < half; ++j) left.push_back(third + sixth * j / half);
    Grid1D g;
    g.M = 1.0;
    g.grading = 2.0;
    g.nodes = left;
    g.nodes.push_back(0.5);
    for (auto it = left.rbegin(); it != left.rend(); ++it) g.nodes.push_back(1.0 - *it);
    return g;
}

/// Index of the node equal to `value` up to 1e-14, or -1.
inline int find_node(const Grid1D& g, double value) {
    for (int j = 0; j < g.size(); ++j)
        if (std::abs(g[j] - value) <= 1e-14) return j;
    return -1;
}

/// Product grid; axis 0 varies fastest in the flattened index.
struct TensorGrid {
    std::vector<Grid1D> axes;

    TensorGrid() = default;
    explicit TensorGrid(std::vector<Grid1D> a) : axes(std::move(a)) {}

    [[nodiscard]] int dim() const { return static_cast<int>(axes.size()); }
    [[nodiscard]] Eigen::Index size() const {
        Eigen::Index n = 1;
        for (const auto& g : axes) n *= g.size();
        return n;
    }
    [[nodiscard]] Eigen::Index stride(int axis) const {
        Eigen::Index s = 1;
        for (int k = 0; k < axis; ++k) s *= axes[static_cast<std::size_t>(k)].size();
        return s;
    }
    [[nodiscard]] int coord(Eigen::Index n, int axis) const {
        return static_cast<int>((n / stride(axis)) % axes[static_cast<std::size_t>(axis)].size());
    }
    [[nodiscard]] std::vector<double> point(Eigen::Index n) const {
        std::vector<double> x(axes.size());
        for (int k = 0; k < dim(); ++k) x[static_cast<std::size_t>(k)] = axes[static_cast<std::size_t>(k)][coord(n, k)];
        return x;
    }
};

inline TensorGrid uniform_tensor_grid(const Grid1D& g, int d) {
    return TensorGrid(std::vector<Grid1D>(static_cast<std::size_t>(d), g));
}

}  // namespace degensemi
