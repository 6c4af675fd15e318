#pragma once

#include "degensemi/common.hpp"

#include <vector>

namespace degensemi {

/// Gauss–Legendre rule on [-1, 1] together with the matrices needed for
/// panel-wise indefinite integration and differentiation of the
/// interpolating polynomial.
struct GaussLegendre {
    int order = 0;
    std::vector<double> nodes;
    std::vector<double> weights;
    /// integrate(k, j) = ∫_{-1}^{t_k} ℓ_j(t) dt
    Eigen::MatrixXd integrate;
    /// differentiate(k, j) = ℓ_j'(t_k)
    Eigen::MatrixXd differentiate;

    explicit GaussLegendre(int p) : order(p), nodes(static_cast<std::size_t>(p)), weights(static_cast<std::size_t>(p)) {
        for (int i = 0; i < p; ++i) {
            double t = std::cos(kPi * (i + 0.75) / (p + 0.5));
            for (int it = 0; it < 100; ++it) {
                auto [P, dP] = legendre(p, t);
                const double dt = P / dP;
                t -= dt;
                if (std::abs(dt) < 1e-16) break;
            }
            const double dP = legendre(p, t).second;
            nodes[static_cast<std::size_t>(p - 1 - i)] = t;
            weights[static_cast<std::size_t>(p - 1 - i)] = 2.0 / ((1.0 - t * t) * dP * dP);
        }
        // Legendre-basis Vandermonde and its antiderivative / derivative.
        Eigen::MatrixXd V(p, p), Vint(p, p), Vder(p, p);
        for (int k = 0; k < p; ++k) {
            const double t = nodes[static_cast<std::size_t>(k)];
            std::vector<double> P(static_cast<std::size_t>(p + 1)), dP(static_cast<std::size_t>(p + 1));
            P[0] = 1.0;
            dP[0] = 0.0;
            if (p >= 1) {
                P[1] = t;
                dP[1] = 1.0;
            }
            for (int n = 1; n < p; ++n) {
                P[static_cast<std::size_t>(n + 1)] =
                    ((2 * n + 1) * t * P[static_cast<std::size_t>(n)] - n * P[static_cast<std::size_t>(n - 1)]) / (n + 1);
                dP[static_cast<std::size_t>(n + 1)] = dP[static_cast<std::size_t>(n - 1)] + (2 * n + 1) * P[static_cast<std::size_t>(n)];
            }
            for (int j = 0; j < p; ++j) {
                V(k, j) = P[static_cast<std::size_t>(j)];
                Vder(k, j) = dP[static_cast<std::size_t>(j)];
                // ∫_{-1}^t P_j = (P_{j+1}(t) - P_{j-1}(t)) / (2j + 1); P_j(-1) terms cancel.
                Vint(k, j) = j == 0 ? t + 1.0
                                    : (P[static_cast<std::size_t>(j + 1)] - P[static_cast<std::size_t>(j - 1)]) / (2 * j + 1);
            }
        }
        const Eigen::MatrixXd Vinv = V.inverse();
        integrate = Vint * Vinv;
        differentiate = Vder * Vinv;
    }

private:
    static std::pair<double, double> legendre(int n, double t) {
        double p0 = 1.0, p1 = t;
        if (n == 0) return {1.0, 0.0};
        for (int k = 2; k <= n; ++k) {
            const double p2 = ((2 * k - 1) * t * p1 - (k - 1) * p0) / k;
            p0 = p1;
            p1 = p2;
        }
        const double dp = n * (t * p1 - p0) / (t * t - 1.0);
        return {p1, dp};
    }
};

/// Composite panels on [0, s_K]. Nodes are stored panel by panel.
struct PanelGrid {
    std::vector<double> edges;
    std::vector<double> nodes;
    int order = 0;

    [[nodiscard]] int panels() const { return static_cast<int>(edges.size()) - 1; }
    [[nodiscard]] double truncation() const { return edges.back(); }
};

/// Panels of width at most `max_width` covering [0, s_K], refined so that every
/// value in `breakpoints` inside (0, s_K) is a panel edge.
inline PanelGrid make_panel_grid(const GaussLegendre& gl, double s_K, double max_width,
                                 std::vector<double> breakpoints) {
    if (!(s_K > 0.0) || !(max_width > 0.0)) throw PreconditionError("panel grid needs positive extent");
    const int base = static_cast<int>(std::ceil(s_K / max_width));
    std::vector<double> e;
    e.reserve(static_cast<std::size_t>(base) + breakpoints.size() + 1);
    for (int k = 0; k <= base; ++k) e.push_back(s_K * k / base);
    for (double bp : breakpoints)
        if (bp > 0.0 && bp < s_K) e.push_back(bp);
    std::sort(e.begin(), e.end());
    std::vector<double> edges;
    for (double v : e)
        if (edges.empty() || v - edges.back() > 1e-14 * s_K) edges.push_back(v);
    edges.back() = s_K;

    PanelGrid g;
    g.order = gl.order;
    g.edges = std::move(edges);
    g.nodes.reserve(static_cast<std::size_t>(g.panels() * gl.order));
    for (int k = 0; k < g.panels(); ++k) {
        const double a = g.edges[static_cast<std::size_t>(k)], b = g.edges[static_cast<std::size_t>(k + 1)];
        for (double t : gl.nodes) g.nodes.push_back(0.5 * (a + b) + 0.5 * (b - a) * t);
    }
    return g;
}

}  // namespace degensemi
