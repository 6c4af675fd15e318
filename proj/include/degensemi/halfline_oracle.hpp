#pragma once

// Reference resolvent of the half-line operator G^{γ,b} u = γ u'' + b u' on
// [0, ∞) with u'(0) = 0, built from the explicit kernel of (λ - u'')^{-1}
// and the Neumann series in the drift.

#include "degensemi/common.hpp"
#include "degensemi/quadrature.hpp"

#include <memory>
#include <sstream>
#include <string>
#include <vector>

namespace degensemi {

/// Spectral parameter λ = |λ| e^{iθ} with μ² = λ and Re μ > 0.
struct SectorPoint {
    cplx lambda;
    double theta = 0.0;
    cplx mu;

    [[nodiscard]] double magnitude() const { return std::abs(lambda); }
};

inline SectorPoint make_sector_point(cplx lambda) {
    if (!(std::abs(lambda) > 0.0) || (lambda.imag() == 0.0 && lambda.real() <= 0.0))
        throw PreconditionError("lambda on (-inf, 0] is outside the resolvent parametrization");
    SectorPoint sp;
    sp.lambda = lambda;
    sp.theta = std::arg(lambda);
    sp.mu = std::sqrt(lambda);
    if (!(sp.mu.real() > 0.0)) throw PreconditionError("no square root with positive real part");
    return sp;
}

inline SectorPoint make_sector_point(double magnitude, double theta) {
    return make_sector_point(std::polar(magnitude, theta));
}

/// A bounded function on [0, ∞) with a declared limit at infinity. Jumps of
/// `f` must be listed in `breakpoints` so quadrature panels align with them.
struct HalflineFunction {
    std::function<cplx(double)> f;
    cplx limit{0.0, 0.0};
    std::vector<double> breakpoints;
};

inline HalflineFunction constant_function(cplx c) {
    return {[c](double) { return c; }, c, {}};
}

/// Constant-coefficient half-line problem data.
struct HalflineProblem {
    double gamma = 1.0;
    double b = 0.0;
};

/// Values and derivative of a resolvent evaluated at the requested points,
/// plus the panel-node representation used for residual checks.
struct HalflineResult {
    std::vector<double> x;
    CplxVec values;
    CplxVec derivative;
    PanelGrid grid;
    CplxVec node_values;
    CplxVec node_derivative;
    CplxVec node_rhs;  // u sampled at the nodes
    int terms = 1;
    double tail_bound = 0.0;
    double contraction = 0.0;
    std::vector<double> term_norms;  // sup norms of the series terms at the nodes
};

struct HalflineOptions {
    int order = 16;
    double truncation_factor = 40.0;  // s_K = factor / Re μ
    double panel_factor = 0.5;        // panel width = factor / max(Re μ, |Im μ|/2)
};

namespace detail {

struct GridSolve {
    CplxVec node_value, node_deriv;
    CplxVec edge_value, edge_deriv;
};

// Applies (λ - G)^{-1}, λ = mu², to the function with node samples `u` and
// limit `u_inf`, using F(x) = ∫_0^x e^{-μ(x-s)} u ds and
// G(x) = ∫_x^∞ e^{-μ(s-x)} u ds, so that R u = (F + G)/(2μ) + c e^{-μx} and
// (R u)' = (G - F)/2 - μ c e^{-μx} with c = G(0)/(2μ).
inline GridSolve apply_base(const GaussLegendre& gl, const PanelGrid& g, cplx mu, const CplxVec& u, cplx u_inf) {
    const int P = g.panels(), p = g.order;
    CplxVec Fn(P * p), Gn(P * p), Fe(P + 1), Ge(P + 1);
    Fe(0) = 0.0;
    Eigen::VectorXcd v(p), partial(p);
    for (int k = 0; k < P; ++k) {
        const double a = g.edges[static_cast<std::size_t>(k)], b = g.edges[static_cast<std::size_t>(k + 1)];
        const double half = 0.5 * (b - a);
        for (int j = 0; j < p; ++j) {
            const double t = g.nodes[static_cast<std::size_t>(k * p + j)];
            v(j) = std::exp(mu * (t - a)) * u(k * p + j);
        }
        partial = half * (gl.integrate.cast<cplx>() * v);
        cplx total = 0.0;
        for (int j = 0; j < p; ++j) total += half * gl.weights[static_cast<std::size_t>(j)] * v(j);
        for (int j = 0; j < p; ++j) {
            const double t = g.nodes[static_cast<std::size_t>(k * p + j)];
            Fn(k * p + j) = std::exp(-mu * (t - a)) * (Fe(k) + partial(j));
        }
        Fe(k + 1) = std::exp(-mu * (b - a)) * (Fe(k) + total);
    }
    Ge(P) = u_inf / mu;
    for (int k = P - 1; k >= 0; --k) {
        const double a = g.edges[static_cast<std::size_t>(k)], b = g.edges[static_cast<std::size_t>(k + 1)];
        const double half = 0.5 * (b - a);
        for (int j = 0; j < p; ++j) {
            const double t = g.nodes[static_cast<std::size_t>(k * p + j)];
            v(j) = std::exp(mu * (b - t)) * u(k * p + j);
        }
        partial = half * (gl.integrate.cast<cplx>() * v);
        cplx total = 0.0;
        for (int j = 0; j < p; ++j) total += half * gl.weights[static_cast<std::size_t>(j)] * v(j);
        // ∫_t^b e^{-μ(s-t)} u ds = e^{μ(t-b)} ∫_t^b e^{μ(b-s)} u ds
        for (int j = 0; j < p; ++j) {
            const double t = g.nodes[static_cast<std::size_t>(k * p + j)];
            Gn(k * p + j) = std::exp(mu * (t - b)) * (Ge(k + 1) + (total - partial(j)));
        }
        Ge(k) = std::exp(-mu * (b - a)) * (Ge(k + 1) + total);
    }
    const cplx c = Ge(0) / (2.0 * mu);
    GridSolve out;
    out.node_value.resize(P * p);
    out.node_deriv.resize(P * p);
    for (int n = 0; n < P * p; ++n) {
        const double x = g.nodes[static_cast<std::size_t>(n)];
        const cplx ce = c * std::exp(-mu * x);
        out.node_value(n) = (Fn(n) + Gn(n)) / (2.0 * mu) + ce;
        out.node_deriv(n) = 0.5 * (Gn(n) - Fn(n)) - mu * ce;
    }
    out.edge_value.resize(P + 1);
    out.edge_deriv.resize(P + 1);
    for (int k = 0; k <= P; ++k) {
        const double x = g.edges[static_cast<std::size_t>(k)];
        const cplx ce = c * std::exp(-mu * x);
        out.edge_value(k) = (Fe(k) + Ge(k)) / (2.0 * mu) + ce;
        out.edge_deriv(k) = 0.5 * (Ge(k) - Fe(k)) - mu * ce;
    }
    return out;
}

inline const GaussLegendre& gauss_legendre(int order) {
    static thread_local std::vector<std::unique_ptr<GaussLegendre>> cache(64);
    auto& slot = cache.at(static_cast<std::size_t>(order));
    if (!slot) slot = std::make_unique<GaussLegendre>(order);
    return *slot;
}

inline PanelGrid grid_for(cplx mu, const HalflineFunction& u, std::span<const double> x, const HalflineOptions& opt) {
    double s_K = opt.truncation_factor / mu.real();
    for (double xv : x) {
        if (xv < 0.0) throw PreconditionError("evaluation points must be nonnegative");
        s_K = std::max(s_K, xv + 0.5 * opt.truncation_factor / mu.real());
    }
    std::vector<double> bps = u.breakpoints;
    bps.insert(bps.end(), x.begin(), x.end());
    const double width = opt.panel_factor / std::max(mu.real(), 0.5 * std::abs(mu.imag()));
    return make_panel_grid(gauss_legendre(opt.order), s_K, width, std::move(bps));
}

inline CplxVec sample_nodes(const PanelGrid& g, const HalflineFunction& u) {
    CplxVec out(static_cast<Eigen::Index>(g.nodes.size()));
    for (std::size_t n = 0; n < g.nodes.size(); ++n) out(static_cast<Eigen::Index>(n)) = u.f(g.nodes[n]);
    return out;
}

inline void pick_edges(HalflineResult& r, const GridSolve& s, std::span<const double> x) {
    r.x.assign(x.begin(), x.end());
    r.values.resize(static_cast<Eigen::Index>(x.size()));
    r.derivative.resize(static_cast<Eigen::Index>(x.size()));
    for (std::size_t i = 0; i < x.size(); ++i) {
        auto it = std::lower_bound(r.grid.edges.begin(), r.grid.edges.end(), x[i] - 1e-14 * r.grid.truncation());
        const auto k = static_cast<Eigen::Index>(it - r.grid.edges.begin());
        r.values(static_cast<Eigen::Index>(i)) = s.edge_value(k);
        r.derivative(static_cast<Eigen::Index>(i)) = s.edge_deriv(k);
    }
}

}  // namespace detail

/// R(λ, G) u at the points x, G = d²/dx² with u'(0) = 0.
inline HalflineResult base_resolvent(const SectorPoint& sp, const HalflineFunction& u, std::span<const double> x,
                                     const HalflineOptions& opt = {}) {
    HalflineResult r;
    r.grid = detail::grid_for(sp.mu, u, x, opt);
    r.node_rhs = detail::sample_nodes(r.grid, u);
    const auto s = detail::apply_base(detail::gauss_legendre(opt.order), r.grid, sp.mu, r.node_rhs, u.limit);
    r.node_values = s.node_value;
    r.node_derivative = s.node_deriv;
    detail::pick_edges(r, s, x);
    return r;
}

/// R(λ, G^{γ,0}) u = γ^{-1} R(λ/γ, G) u.
inline HalflineResult scaled_resolvent(const SectorPoint& sp, double gamma, const HalflineFunction& u,
                                       std::span<const double> x, const HalflineOptions& opt = {}) {
    if (!(gamma > 0.0)) throw PreconditionError("gamma must be positive");
    auto r = base_resolvent(make_sector_point(sp.lambda / gamma), u, x, opt);
    r.values /= gamma;
    r.derivative /= gamma;
    r.node_values /= gamma;
    r.node_derivative /= gamma;
    return r;
}

/// Contraction estimate of H^b R(λ, G^{γ,0}): b / (sqrt(γ|λ|) cos(θ/2)).
inline double drift_contraction(const SectorPoint& sp, const HalflineProblem& hp) {
    return hp.b / (std::sqrt(hp.gamma * sp.magnitude()) * std::cos(sp.theta / 2.0));
}

/// Admissibility radius 8 b² / γ of the drift Neumann series.
inline double drift_series_radius(const HalflineProblem& hp) { return 8.0 * hp.b * hp.b / hp.gamma; }

/// R(λ, G^{γ,b}) u = R(λ, G^{γ,0}) Σ_n [H^b R(λ, G^{γ,0})]^n u, H^b v = b v'.
inline HalflineResult drift_resolvent(const SectorPoint& sp, const HalflineProblem& hp, const HalflineFunction& u,
                                      std::span<const double> x, int nmax = 200, double tol = 1e-10,
                                      const HalflineOptions& opt = {}) {
    if (!(hp.gamma > 0.0)) throw PreconditionError("gamma must be positive");
    if (hp.b < 0.0) throw PreconditionError("drift must be nonnegative");
    if (hp.b > 0.0) {
        const double R = drift_series_radius(hp);
        if (!(std::abs(sp.theta) < kPi / 2.0) || !(sp.magnitude() > R)) {
            std::ostringstream os;
            os << "drift series needs |theta| < pi/2 and |lambda| > 8 b^2 / gamma = " << R << " (got |lambda| = "
               << sp.magnitude() << ", theta = " << sp.theta << ")";
            throw PreconditionError(os.str());
        }
    }
    const auto& gl = detail::gauss_legendre(opt.order);
    const cplx mu_g = std::sqrt(sp.lambda / hp.gamma);
    HalflineResult r;
    r.grid = detail::grid_for(mu_g, u, x, opt);
    r.node_rhs = detail::sample_nodes(r.grid, u);
    const double q = drift_contraction(sp, hp);
    r.contraction = q;

    CplxVec term = r.node_rhs, total = r.node_rhs;
    cplx term_limit = u.limit, total_limit = u.limit;
    const double unorm = std::max(sup_norm(r.node_rhs), std::abs(u.limit));
    int n = 0;
    double tail = 0.0;
    r.term_norms.push_back(sup_norm(term));
    if (hp.b > 0.0) {
        double qn = 1.0;
        while (true) {
            qn *= q;
            tail = qn / (1.0 - q) * unorm;
            if (tail <= tol) break;
            if (n + 1 >= nmax)
                throw NumericalError("drift Neumann series did not reach tolerance within nmax terms", tail);
            auto s = detail::apply_base(gl, r.grid, mu_g, term, term_limit);
            term = (hp.b / hp.gamma) * s.node_deriv;
            term_limit = 0.0;
            total += term;
            r.term_norms.push_back(sup_norm(term));
            ++n;
        }
    }
    auto s = detail::apply_base(gl, r.grid, mu_g, total, total_limit);
    s.node_value /= hp.gamma;
    s.node_deriv /= hp.gamma;
    s.edge_value /= hp.gamma;
    s.edge_deriv /= hp.gamma;
    r.node_values = s.node_value;
    r.node_derivative = s.node_deriv;
    r.terms = n + 1;
    r.tail_bound = tail;
    detail::pick_edges(r, s, x);
    return r;
}

/// Max over panel nodes in [0, x_max] of |λv - γv'' - bv' - u| / ‖u‖∞, with v''
/// from panel-wise spectral differentiation of the analytic derivative.
inline double collocation_residual(const HalflineResult& r, const SectorPoint& sp, const HalflineProblem& hp,
                                   double x_max) {
    const auto& gl = detail::gauss_legendre(r.grid.order);
    const int p = r.grid.order;
    double worst = 0.0;
    for (int k = 0; k < r.grid.panels(); ++k) {
        const double a = r.grid.edges[static_cast<std::size_t>(k)], b = r.grid.edges[static_cast<std::size_t>(k + 1)];
        if (a > x_max) break;
        const CplxVec dv = r.node_derivative.segment(k * p, p);
        const CplxVec d2 = (2.0 / (b - a)) * (gl.differentiate.cast<cplx>() * dv);
        for (int j = 0; j < p; ++j) {
            const auto n = k * p + j;
            const cplx res = sp.lambda * r.node_values(n) - hp.gamma * d2(j) - hp.b * dv(j) - r.node_rhs(n);
            worst = std::max(worst, std::abs(res));
        }
    }
    const double unorm = sup_norm(r.node_rhs);
    return unorm > 0.0 ? worst / unorm : worst;
}

// ---------------------------------------------------------------------------
// Norm sweep against the closed-form bounds.

struct OracleRow {
    std::string estimate;
    double theta = 0.0;
    double mag = 0.0;
    double gamma = 1.0;
    double b = 0.0;
    double bound = 0.0;
    double measured = 0.0;
    double ratio = 0.0;
    bool pass = true;
};

struct OracleSweep {
    std::vector<OracleRow> rows;
    double slack = 1e-3;
    [[nodiscard]] bool pass() const {
        return std::all_of(rows.begin(), rows.end(), [](const OracleRow& r) { return r.pass; });
    }
};

/// Probe family for sup-norm estimation: the constant, sign patterns aligned
/// with the oscillation of e^{-μs}, and random ±1 steps of width ~1/Re μ.
inline std::vector<HalflineFunction> oracle_probes(cplx mu, int nprobe, Rng& rng) {
    std::vector<HalflineFunction> probes;
    probes.push_back(constant_function(1.0));
    const double len = 1.0 / mu.real();
    const double reach = 16.0 * len;
    {
        // ±1 pattern following the sign of Re e^{-μ s}.
        const double period = mu.imag() != 0.0 ? kPi / std::abs(mu.imag()) : reach;
        std::vector<double> bps;
        for (double s = 0.5 * period; s < reach; s += period) bps.push_back(s);
        probes.push_back({[mu, reach](double s) {
                              if (s >= reach) return cplx(1.0);
                              return cplx(std::real(std::exp(-mu * s)) >= 0.0 ? 1.0 : -1.0);
                          },
                          1.0, bps});
    }
    for (int k = 0; k < nprobe; ++k) {
        const int steps = 4 + rng.below(28);
        std::vector<double> bps;
        std::vector<double> vals;
        for (int j = 1; j <= steps; ++j) bps.push_back(reach * j / steps * rng.uniform(0.6, 1.0));
        std::sort(bps.begin(), bps.end());
        for (int j = 0; j <= steps; ++j) vals.push_back(rng.sign());
        probes.push_back({[bps, vals](double s) {
                              const auto i = std::upper_bound(bps.begin(), bps.end(), s) - bps.begin();
                              return cplx(vals[static_cast<std::size_t>(i)]);
                          },
                          vals.back(), bps});
    }
    return probes;
}

/// Sweeps (θ, |λ|) and compares probe-maximized norms of R(λ, G) and of its
/// derivative, and of R(λ, G^{γ,b}), against the closed-form bounds. Drift
/// rows are emitted only where the Neumann series is admissible.
inline OracleSweep oracle_norm_sweep(std::span<const double> thetas, std::span<const double> magnitudes, int nprobe,
                                     std::span<const double> drifts = {}, std::span<const double> gammas = {},
                                     std::uint64_t seed = 0xF001, int jobs = 1) {
    struct Task {
        double theta, mag, gamma, b;
        bool drift;
    };
    std::vector<Task> tasks;
    for (double th : thetas)
        for (double m : magnitudes) {
            tasks.push_back({th, m, 1.0, 0.0, false});
            for (double g : gammas)
                for (double b : drifts) {
                    if (!(std::abs(th) < kPi / 2.0)) continue;
                    if (b > 0.0 && !(m > 8.0 * b * b / g)) continue;
                    tasks.push_back({th, m, g, b, true});
                }
        }
    std::vector<std::vector<OracleRow>> out(tasks.size());
    Rng master(seed);
    std::vector<Rng> rngs;
    for (std::size_t i = 0; i < tasks.size(); ++i) rngs.push_back(master.split(i));
    constexpr double slack = 1e-3;
    parallel_for(static_cast<int>(tasks.size()), jobs, [&](int ti) {
        const auto& t = tasks[static_cast<std::size_t>(ti)];
        const auto sp = make_sector_point(t.mag, t.theta);
        const double c = std::cos(t.theta / 2.0);
        const cplx mu_eff = std::sqrt(sp.lambda / t.gamma);
        auto probes = oracle_probes(mu_eff, nprobe, rngs[static_cast<std::size_t>(ti)]);
        double mv = 0.0, md = 0.0;
        for (const auto& u : probes) {
            HalflineResult r = t.drift ? drift_resolvent(sp, {t.gamma, t.b}, u, {}) : base_resolvent(sp, u, {});
            mv = std::max(mv, sup_norm(r.node_values));
            md = std::max(md, sup_norm(r.node_derivative));
        }
        OracleRow a, d;
        a.theta = d.theta = t.theta;
        a.mag = d.mag = t.mag;
        a.gamma = d.gamma = t.gamma;
        a.b = d.b = t.b;
        if (!t.drift) {
            a.estimate = "resolvent";
            a.bound = 3.0 / (2.0 * t.mag * c);
            d.estimate = "derivative";
            d.bound = 1.0 / (std::sqrt(t.mag) * c);
        } else {
            a.estimate = "drift-resolvent";
            a.bound = 3.0 / (t.mag * c);
            d.estimate = "drift-derivative";
            d.bound = 2.0 / (std::sqrt(t.gamma * t.mag) * c);
        }
        a.measured = mv;
        d.measured = md;
        for (auto* row : {&a, &d}) {
            row->ratio = row->measured / row->bound;
            row->pass = std::isfinite(row->ratio) && row->ratio <= 1.0 + slack;
        }
        out[static_cast<std::size_t>(ti)] = {a, d};
    });
    OracleSweep sweep;
    sweep.slack = slack;
    for (auto& v : out)
        for (auto& r : v) sweep.rows.push_back(std::move(r));
    return sweep;
}

}  // namespace degensemi
