#pragma once

#include "degensemi/common.hpp"

#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace degensemi {

/// Scalar function on the cube Q^d.
using PointFn = std::function<double(std::span<const double>)>;
/// Scalar function on the edge [0, M].
using LineFn = std::function<double(double)>;

/// Coefficient data of L = Γ(x) Σ_i [γ_i(x_i) w(x_i) ∂²_i + b_i(x) ∂_i], with
/// w(s) = s or w(s) = s(1 - s). The derived constants are filled in by
/// make_coefficient_field from a sampling lattice.
struct CoefficientField {
    int d = 1;
    double M = 1.0;
    PointFn Gamma;
    std::vector<LineFn> gamma;
    std::vector<PointFn> b;
    bool quadratic_weight = false;

    double B = 0.0;
    double gamma0 = 0.0;
    double Gamma0 = 0.0;
    double Gamma_max = 0.0;
    double gamma_max = 0.0;
    double drift_modulus_C = 0.0;
    double drift_modulus_delta = 0.0;

    [[nodiscard]] double weight(double s) const {
        return quadratic_weight ? s * (1.0 - s) : s;
    }
};

inline constexpr double kTolHyp = 1e-12;

namespace detail {

// Visits every point of an n^dim uniform lattice on [0, M]^dim.
inline void for_each_lattice_point(int dim, int n, double M,
                                   const std::function<void(std::span<const double>)>& fn) {
    std::vector<int> idx(static_cast<std::size_t>(dim), 0);
    std::vector<double> x(static_cast<std::size_t>(dim), 0.0);
    if (dim == 0) {
        fn(x);
        return;
    }
    while (true) {
        for (int k = 0; k < dim; ++k)
            x[static_cast<std::size_t>(k)] = M * idx[static_cast<std::size_t>(k)] / (n - 1);
        fn(x);
        int k = 0;
        while (k < dim && ++idx[static_cast<std::size_t>(k)] == n) idx[static_cast<std::size_t>(k++)] = 0;
        if (k == dim) break;
    }
}

inline std::vector<double> insert_coordinate(std::span<const double> rest, int axis, double value) {
    std::vector<double> x(rest.begin(), rest.end());
    x.insert(x.begin() + axis, value);
    return x;
}

}  // namespace detail

/// Samples the coefficients on an ngrid^d lattice and fills γ₀, Γ₀, B.
/// `B_bound`, when given, must dominate the sampled drift.
inline CoefficientField make_coefficient_field(int d, double M, PointFn Gamma,
                                               std::vector<LineFn> gamma, std::vector<PointFn> b,
                                               bool quadratic_weight,
                                               std::optional<double> B_bound = std::nullopt,
                                               std::optional<double> delta = std::nullopt,
                                               int ngrid = 0) {
    if (d < 1 || d > 4) throw PreconditionError("dimension must be in [1, 4]");
    if (!(M > 0.0)) throw PreconditionError("cube edge M must be positive");
    if (static_cast<int>(gamma.size()) != d || static_cast<int>(b.size()) != d)
        throw PreconditionError("need exactly d gamma and d drift functions");
    if (quadratic_weight && std::abs(M - 1.0) > 0.0)
        throw PreconditionError("the x(1-x) weight requires M = 1");

    CoefficientField cf;
    cf.d = d;
    cf.M = M;
    cf.Gamma = std::move(Gamma);
    cf.gamma = std::move(gamma);
    cf.b = std::move(b);
    cf.quadratic_weight = quadratic_weight;

    if (ngrid <= 0) ngrid = d <= 2 ? 33 : (d == 3 ? 17 : 9);
    double Gmin = std::numeric_limits<double>::infinity(), Gmax = 0.0, bmax = 0.0;
    detail::for_each_lattice_point(d, ngrid, M, [&](std::span<const double> x) {
        const double g = cf.Gamma(x);
        Gmin = std::min(Gmin, g);
        Gmax = std::max(Gmax, g);
        for (int i = 0; i < d; ++i) bmax = std::max(bmax, std::abs(cf.b[static_cast<std::size_t>(i)](x)));
    });
    double gmin = std::numeric_limits<double>::infinity(), gmax = 0.0;
    for (int i = 0; i < d; ++i) {
        for (int k = 0; k < 4 * ngrid; ++k) {
            const double v = cf.gamma[static_cast<std::size_t>(i)](M * k / (4 * ngrid - 1));
            gmin = std::min(gmin, v);
            gmax = std::max(gmax, v);
        }
    }
    if (!(Gmin > 0.0)) throw PreconditionError("Gamma must be strictly positive on the cube");
    if (!(gmin > 0.0)) throw PreconditionError("gamma_i must be strictly positive on [0, M]");
    if (B_bound && *B_bound + 1e-12 < bmax) {
        std::ostringstream os;
        os << "declared B = " << *B_bound << " is below sampled max |b_i| = " << bmax;
        throw PreconditionError(os.str());
    }
    cf.Gamma0 = Gmin;
    cf.Gamma_max = Gmax;
    cf.gamma0 = gmin;
    cf.gamma_max = gmax;
    cf.B = B_bound.value_or(bmax);
    cf.drift_modulus_delta = delta.value_or(M / 4.0);
    if (!(cf.drift_modulus_delta > 0.0 && cf.drift_modulus_delta < M))
        throw PreconditionError("drift modulus delta must lie in (0, M)");
    return cf;
}

struct HypothesisVerdict {
    bool pass = true;
    std::vector<double> witness;  // first violating point, empty on pass
    int axis = -1;
    double value = 0.0;            // offending drift component
};

/// Inward-drift condition on the degenerate faces: b_i ≥ 0 where x_i = 0, and
/// for the x(1-x) weight also b_i ≤ 0 where x_i = 1.
inline HypothesisVerdict validate_inward_drift(const CoefficientField& cf, int ngrid) {
    if (ngrid < 2) throw PreconditionError("ngrid must be >= 2");
    HypothesisVerdict v;
    for (int i = 0; i < cf.d && v.pass; ++i) {
        const auto& bi = cf.b[static_cast<std::size_t>(i)];
        detail::for_each_lattice_point(cf.d - 1, ngrid, cf.M, [&](std::span<const double> rest) {
            if (!v.pass) return;
            auto x = detail::insert_coordinate(rest, i, 0.0);
            if (double val = bi(x); val < -kTolHyp) {
                v = {false, x, i, val};
                return;
            }
            if (cf.quadratic_weight) {
                x[static_cast<std::size_t>(i)] = cf.M;
                if (double val = bi(x); val > kTolHyp) v = {false, x, i, val};
            }
        });
    }
    return v;
}

namespace detail {

// max over i and sampled x with x_i < delta of |b_i(x) - b_i(x|x_i=0)| / sqrt(x_i),
// plus the mirrored quantity at x_i = M for the quadratic weight. The x_i
// samples M (k/n)^2 are nested under n -> 2n and under shrinking delta.
inline double drift_modulus(const CoefficientField& cf, int n_axis, int n_rest, double delta) {
    double worst = 0.0;
    for (int i = 0; i < cf.d; ++i) {
        const auto& bi = cf.b[static_cast<std::size_t>(i)];
        for_each_lattice_point(cf.d - 1, n_rest, cf.M, [&](std::span<const double> rest) {
            auto x = insert_coordinate(rest, i, 0.0);
            auto& xi = x[static_cast<std::size_t>(i)];
            xi = 0.0;
            const double b_lo = bi(x);
            xi = cf.M;
            const double b_hi = bi(x);
            for (int k = 1; k <= n_axis; ++k) {
                const double s = cf.M * (static_cast<double>(k) / n_axis) * (static_cast<double>(k) / n_axis);
                if (!(s < delta)) break;
                xi = s;
                worst = std::max(worst, std::abs(bi(x) - b_lo) / std::sqrt(s));
                if (cf.quadratic_weight) {
                    xi = cf.M - s;
                    worst = std::max(worst, std::abs(bi(x) - b_hi) / std::sqrt(s));
                }
            }
        });
    }
    return worst;
}

}  // namespace detail

struct DriftModulusVerdict {
    bool pass = false;
    double C_meas = 0.0;
    double C_refined = 0.0;
};

/// Measures the constant C of |b_i(x) - b_i(x')| ≤ C sqrt(x_i) near the
/// degenerate faces and checks it is stable under one refinement step.
inline DriftModulusVerdict validate_drift_modulus(const CoefficientField& cf, int ngrid,
                                                  std::optional<double> delta = std::nullopt) {
    if (ngrid < 4) throw PreconditionError("ngrid must be >= 4");
    const double dl = delta.value_or(cf.drift_modulus_delta);
    const int n_rest = cf.d <= 2 ? ngrid : std::min(ngrid, 9);
    DriftModulusVerdict v;
    v.C_meas = detail::drift_modulus(cf, ngrid, n_rest, dl);
    v.C_refined = detail::drift_modulus(cf, 2 * ngrid, n_rest, dl);
    v.pass = std::isfinite(v.C_meas) && std::isfinite(v.C_refined) && v.C_refined <= 1.1 * v.C_meas + 1e-14;
    return v;
}

/// The constant drift (b_1(0), ..., b_d(0)) used as the unperturbed operator.
inline std::vector<double> frozen_drift(const CoefficientField& cf) {
    std::vector<double> origin(static_cast<std::size_t>(cf.d), 0.0), out;
    out.reserve(static_cast<std::size_t>(cf.d));
    for (const auto& bi : cf.b) out.push_back(bi(origin));
    return out;
}

// ---------------------------------------------------------------------------
// Built-in coefficient families.

namespace family {

inline PointFn constant_point(double c) {
    return [c](std::span<const double>) { return c; };
}

inline LineFn constant_line(double c) {
    return [c](double) { return c; };
}

/// Σ_k coeff_k Π_j x_j^{exp_kj}.
struct Monomial {
    double coeff = 0.0;
    std::vector<int> exponents;
};

inline PointFn polynomial(std::vector<Monomial> terms) {
    return [terms = std::move(terms)](std::span<const double> x) {
        double s = 0.0;
        for (const auto& t : terms) {
            double m = t.coeff;
            for (std::size_t j = 0; j < t.exponents.size() && j < x.size(); ++j)
                m *= std::pow(x[j], t.exponents[j]);
            s += m;
        }
        return s;
    };
}

/// c_0 + c_1 s + c_2 s^2 + ...
inline LineFn polynomial_line(std::vector<double> c) {
    return [c = std::move(c)](double s) {
        double acc = 0.0;
        for (auto it = c.rbegin(); it != c.rend(); ++it) acc = acc * s + *it;
        return acc;
    };
}

/// Drift of the form c(x_i) m(x^i) with c(s) = kappa sqrt(s (M - s) / M),
/// vanishing on both faces x_i = 0 and x_i = M, and
/// m(x^i) = 1 + omega * mean_{j != i} cos(pi x_j / M).
inline PointFn separable_sqrt_drift(int axis, double kappa, double omega, double M) {
    return [=](std::span<const double> x) {
        const double s = x[static_cast<std::size_t>(axis)];
        const double c = kappa * std::sqrt(std::max(0.0, s * (M - s) / M));
        double m = 1.0;
        if (x.size() > 1) {
            double acc = 0.0;
            for (std::size_t j = 0; j < x.size(); ++j)
                if (static_cast<int>(j) != axis) acc += std::cos(kPi * x[j] / M);
            m += omega * acc / static_cast<double>(x.size() - 1);
        }
        return c * m;
    };
}

/// Mutation-selection drift b_i = c_i(x_i) - c̃(x) x_i (1 - x_i), with
/// c_i(s) = a_i (1 - s) and c̃ = Σ_j c_j(x_j). Requires M = 1 and a_i ≥ 0.
inline PointFn mutation_drift(int axis, std::vector<double> a) {
    return [axis, a = std::move(a)](std::span<const double> x) {
        double ctilde = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) ctilde += a[j] * (1.0 - x[j]);
        const double s = x[static_cast<std::size_t>(axis)];
        return a[static_cast<std::size_t>(axis)] * (1.0 - s) - ctilde * s * (1.0 - s);
    };
}

/// Multilinear interpolation of values tabulated on a uniform n^d lattice of
/// [0, M]^d (first axis fastest).
inline PointFn tabulated(int d, int n, double M, std::vector<double> values) {
    if (n < 2) throw PreconditionError("tabulated field needs at least 2 samples per axis");
    std::size_t expect = 1;
    for (int k = 0; k < d; ++k) expect *= static_cast<std::size_t>(n);
    if (values.size() != expect) throw PreconditionError("tabulated field has wrong number of values");
    return [=, values = std::move(values)](std::span<const double> x) {
        std::vector<int> lo(static_cast<std::size_t>(d));
        std::vector<double> fr(static_cast<std::size_t>(d));
        for (int k = 0; k < d; ++k) {
            const double t = std::clamp(x[static_cast<std::size_t>(k)] / M, 0.0, 1.0) * (n - 1);
            const int i0 = std::min(static_cast<int>(t), n - 2);
            lo[static_cast<std::size_t>(k)] = i0;
            fr[static_cast<std::size_t>(k)] = t - i0;
        }
        double acc = 0.0;
        for (int corner = 0; corner < (1 << d); ++corner) {
            double w = 1.0;
            std::size_t idx = 0, stride = 1;
            for (int k = 0; k < d; ++k) {
                const int bit = (corner >> k) & 1;
                w *= bit ? fr[static_cast<std::size_t>(k)] : 1.0 - fr[static_cast<std::size_t>(k)];
                idx += static_cast<std::size_t>(lo[static_cast<std::size_t>(k)] + bit) * stride;
                stride *= static_cast<std::size_t>(n);
            }
            acc += w * values[idx];
        }
        return acc;
    };
}

inline LineFn tabulated_line(int n, double M, std::vector<double> values) {
    auto f = tabulated(1, n, M, std::move(values));
    return [f](double s) { return f(std::span<const double>(&s, 1)); };
}

}  // namespace family

/// Γ ≡ 1, γ_i ≡ gamma, constant drift components.
inline CoefficientField constant_coefficients(int d, double M, double gamma, std::vector<double> drift,
                                              bool quadratic_weight = false) {
    std::vector<LineFn> g(static_cast<std::size_t>(d), family::constant_line(gamma));
    std::vector<PointFn> b;
    for (double v : drift) b.push_back(family::constant_point(v));
    return make_coefficient_field(d, M, family::constant_point(1.0), std::move(g), std::move(b),
                                  quadratic_weight);
}

}  // namespace degensemi
