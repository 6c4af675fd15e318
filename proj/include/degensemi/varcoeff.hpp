#pragma once

#include "degensemi/norms.hpp"
#include "degensemi/tensor_nd.hpp"

#include <map>
#include <limits>
#include <memory>
#include <sstream>

namespace degensemi {

/// A correction series whose measured contraction factor reached 1/2.
class ContractionError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

// ---------------------------------------------------------------------------
// Partitions of unity.

namespace detail {

inline double mollifier(double t) { return std::abs(t) < 1.0 ? std::exp(-1.0 / (1.0 - t * t)) : 0.0; }

/// Smooth step: 0 for s <= 0, 1 for s >= 1.
inline double smooth_step(double s) {
    if (s <= 0.0) return 0.0;
    if (s >= 1.0) return 1.0;
    const double a = std::exp(-1.0 / s), b = std::exp(-1.0 / (1.0 - s));
    return a / (a + b);
}

}  // namespace detail

/// Smooth bumps φ^i_n on [0, 1] with Σ_i (φ^i_n)² = 1 and their products
/// Φ^𝐢_n(x) = Π_h φ^{i_h}_n(x_h / M) on [0, M]^d.
///
/// The regular family has n - 1 bumps, φ^i supported in [(i-1)/n, (i+1)/n]
/// (the first and last extended to the faces). The corner family has two
/// bumps, φ¹ on [0, 2/3] and φ² on [1/3, 1], each equal to one near its vertex.
struct PartitionOfUnity {
    int n = 2;
    int d = 1;
    double M = 1.0;
    bool corner = false;
    /// Oscillation target for frozen coefficients (0 when unused).
    double epsilon0 = 0.0;

    [[nodiscard]] int bumps() const { return corner ? 2 : n - 1; }

    [[nodiscard]] int patches() const {
        int p = 1;
        for (int k = 0; k < d; ++k) p *= bumps();
        return p;
    }

    /// Unnormalized profile of bump i (1-based) at s ∈ [0, 1].
    [[nodiscard]] double raw(int i, double s) const {
        if (corner) {
            const double step = detail::smooth_step(3.0 * (2.0 / 3.0 - s));
            return i == 1 ? step : detail::smooth_step(3.0 * (s - 1.0 / 3.0));
        }
        const double t = n * s - i;
        if (i == 1 && t < 0.0) return detail::mollifier(0.0);
        if (i == n - 1 && t > 0.0) return detail::mollifier(0.0);
        return detail::mollifier(t);
    }

    [[nodiscard]] double phi(int i, double s) const {
        const double num = raw(i, s);
        if (num == 0.0) return 0.0;
        double den = 0.0;
        for (int j = 1; j <= bumps(); ++j) den += raw(j, s) * raw(j, s);
        return num / std::sqrt(den);
    }

    /// Support interval of bump i intersected with [0, 1].
    [[nodiscard]] std::pair<double, double> support(int i) const {
        if (corner) return i == 1 ? std::pair{0.0, 2.0 / 3.0} : std::pair{1.0 / 3.0, 1.0};
        return {std::max(0.0, (i - 1.0) / n), std::min(1.0, (i + 1.0) / n)};
    }

    /// 1-based bump indices of patch p (axis 0 fastest).
    [[nodiscard]] std::vector<int> multi_index(int p) const {
        std::vector<int> idx(static_cast<std::size_t>(d));
        for (int k = 0; k < d; ++k) {
            idx[static_cast<std::size_t>(k)] = p % bumps() + 1;
            p /= bumps();
        }
        return idx;
    }

    [[nodiscard]] double Phi(int p, std::span<const double> x) const {
        const auto idx = multi_index(p);
        double v = 1.0;
        for (int k = 0; k < d && v != 0.0; ++k) v *= phi(idx[static_cast<std::size_t>(k)], x[static_cast<std::size_t>(k)] / M);
        return v;
    }

    /// Support box of patch p in [0, M]^d as (lower, upper) corners.
    [[nodiscard]] std::pair<std::vector<double>, std::vector<double>> box(int p) const {
        const auto idx = multi_index(p);
        std::vector<double> lo, hi;
        for (int i : idx) {
            auto [a, b] = support(i);
            lo.push_back(a * M);
            hi.push_back(b * M);
        }
        return {lo, hi};
    }

    [[nodiscard]] std::vector<double> box_center(int p) const {
        auto [lo, hi] = box(p);
        for (std::size_t k = 0; k < lo.size(); ++k) lo[k] = 0.5 * (lo[k] + hi[k]);
        return lo;
    }

    /// Φ^𝐢 sampled at every node of the grid, one vector per patch.
    [[nodiscard]] std::vector<RealVec> sample_on(const TensorGrid& grid) const {
        std::vector<RealVec> out(static_cast<std::size_t>(patches()), RealVec(grid.size()));
        for (Eigen::Index k = 0; k < grid.size(); ++k) {
            const auto x = grid.point(k);
            for (int p = 0; p < patches(); ++p) out[static_cast<std::size_t>(p)](k) = Phi(p, x);
        }
        return out;
    }
};

inline PartitionOfUnity make_partition(int n, int d, double M = 1.0) {
    if (n < 2) throw PreconditionError("partition needs n >= 2");
    if (d < 1) throw PreconditionError("partition needs d >= 1");
    return PartitionOfUnity{n, d, M, false, 0.0};
}

inline PartitionOfUnity make_corner_partition(int d) {
    if (d < 1) throw PreconditionError("partition needs d >= 1");
    return PartitionOfUnity{2, d, 1.0, true, 0.0};
}

/// ε₀ = Γ₀² / (4 · 3^d · (Γ₀ + d₁)).
inline double epsilon0(double Gamma0, double d1, int d) {
    return Gamma0 * Gamma0 / (4.0 * std::pow(3.0, d) * (Gamma0 + d1));
}

struct OscillationReport {
    double max_oscillation = 0.0;
    int worst_patch = -1;
    std::vector<double> worst_lo, worst_hi;
};

/// max over patches of the sampled max |Γ(x) - Γ(center)| on the support box.
inline OscillationReport gamma_oscillation(const CoefficientField& cf, const PartitionOfUnity& pou, int samples = 9) {
    OscillationReport r;
    const int s = cf.d <= 2 ? samples : std::min(samples, 5);
    for (int p = 0; p < pou.patches(); ++p) {
        const auto [lo, hi] = pou.box(p);
        const auto c = pou.box_center(p);
        const double Gc = cf.Gamma(c);
        double osc = 0.0;
        detail::for_each_lattice_point(cf.d, s, 1.0, [&](std::span<const double> t) {
            std::vector<double> x(static_cast<std::size_t>(cf.d));
            for (std::size_t k = 0; k < x.size(); ++k) x[k] = lo[k] + t[k] * (hi[k] - lo[k]);
            osc = std::max(osc, std::abs(cf.Gamma(x) - Gc));
        });
        if (osc > r.max_oscillation || r.worst_patch < 0) {
            r.max_oscillation = osc;
            r.worst_patch = p;
            r.worst_lo = lo;
            r.worst_hi = hi;
        }
    }
    return r;
}

namespace detail {

inline std::string box_string(const std::vector<double>& lo, const std::vector<double>& hi) {
    std::ostringstream os;
    for (std::size_t k = 0; k < lo.size(); ++k) os << (k ? " x " : "") << "[" << lo[k] << ", " << hi[k] << "]";
    return os.str();
}

}  // namespace detail

/// Smallest n ≤ n_max whose boxes keep the oscillation of Γ below ε₀
/// computed from the measured resolvent constant d₁.
inline PartitionOfUnity choose_refinement(const CoefficientField& cf, double d1, int n_max = 64) {
    const double eps = epsilon0(cf.Gamma0, d1, cf.d);
    OscillationReport last;
    for (int n = 2; n <= n_max; ++n) {
        auto pou = make_partition(n, cf.d, cf.M);
        pou.epsilon0 = eps;
        last = gamma_oscillation(cf, pou);
        if (last.max_oscillation < eps) return pou;
    }
    std::ostringstream os;
    os << "no refinement n <= " << n_max << " meets the oscillation target " << eps << "; worst box "
       << detail::box_string(last.worst_lo, last.worst_hi) << " has oscillation " << last.max_oscillation;
    throw PreconditionError(os.str());
}

/// max |λ| ‖R(λ, A)‖∞ over the sector points λ = r e^{iθ}.
inline double sector_resolvent_constant(const SparseReal& A, const std::vector<double>& thetas,
                                        const std::vector<double>& mags, int jobs = 1) {
    double d1 = 0.0;
    Rng rng(0xF001);
    for (double th : thetas)
        for (double r : mags) {
            const cplx lam = std::polar(r, th);
            const ResolventSolver R(A, lam);
            d1 = std::max(d1, r * inf_norm([&R](const CplxVec& v) { return R.solve(v); }, A.rows(), rng, 16, jobs));
        }
    return d1;
}

/// Default sector sweep: θ ∈ {0, π/6, π/3, 0.49π}, |λ| ∈ {1, 4, ..., 1024}.
inline double sector_resolvent_constant(const SparseReal& A, int jobs = 1) {
    return sector_resolvent_constant(A, {0.0, kPi / 6, kPi / 3, 0.49 * kPi}, {1.0, 4.0, 16.0, 64.0, 256.0, 1024.0}, jobs);
}

// ---------------------------------------------------------------------------
// Defect correction: with an approximate resolvent S and the defect
// δ = (λ - A) S - I, the exact discrete resolvent is S Σ_k (-δ)^k.

struct SeriesDiagnostics {
    int terms = 0;
    double defect_norm = 0.0;   ///< measured ‖δ‖∞ (exact up to kExactNormLimit unknowns)
    double max_ratio = 0.0;     ///< largest observed ‖δ g_k‖ / ‖g_k‖ along the iteration
    double tail_bound = 0.0;    ///< relative bound on the neglected terms
    double residual = 0.0;      ///< ‖(λ - A)u - f‖∞ / ‖f‖∞
    std::vector<double> term_norms;
};

struct CorrectedSolution {
    CplxVec solution;
    SeriesDiagnostics diagnostics;
};

class DefectCorrection {
public:
    /// `defect_map`, when given, evaluates δ directly in place of (λ - A) S - I.
    DefectCorrection(const SparseReal& A, cplx lambda, LinearMap approx, std::string label, std::uint64_t seed = 0xF001,
                     int jobs = 1, LinearMap defect_map = {})
        : A_(A.cast<cplx>()),
          lambda_(lambda),
          S_(std::move(approx)),
          delta_(std::move(defect_map)),
          label_(std::move(label)) {
        Rng rng(seed);
        defect_norm_ = inf_norm([this](const CplxVec& g) { return defect(g); }, A.rows(), rng, 16, jobs);
    }

    [[nodiscard]] cplx lambda() const { return lambda_; }
    [[nodiscard]] double defect_norm() const { return defect_norm_; }
    [[nodiscard]] bool admissible() const { return defect_norm_ < 0.5; }

    [[nodiscard]] CplxVec approximate(const CplxVec& g) const { return S_(g); }

    /// δ g = (λ - A) S g - g.
    [[nodiscard]] CplxVec defect(const CplxVec& g) const {
        if (delta_) return delta_(g);
        const CplxVec s = S_(g);
        return CplxVec(lambda_ * s - A_ * s - g);
    }

    /// S Σ_k (-δ)^k f, summed until a term drops below tol ‖f‖∞.
    [[nodiscard]] CorrectedSolution solve(const CplxVec& f, double tol = 1e-13, int nmax = 200) const {
        if (!admissible()) {
            std::ostringstream os;
            os << label_ << ": measured defect norm " << defect_norm_ << " >= 1/2 at lambda = " << lambda_
               << " (lambda too small)";
            throw ContractionError(os.str(), defect_norm_);
        }
        CorrectedSolution out;
        auto& dg = out.diagnostics;
        dg.defect_norm = defect_norm_;
        const double fn = sup_norm(f);
        if (fn == 0.0) {
            out.solution = CplxVec::Zero(f.size());
            return out;
        }
        CplxVec g = f, acc = f;
        dg.terms = 1;
        dg.term_norms.push_back(1.0);
        bool converged = false;
        while (dg.terms < nmax) {
            const double gn = sup_norm(g);
            CplxVec next = -defect(g);
            const double nn = sup_norm(next);
            const double ratio = nn / gn;
            dg.max_ratio = std::max(dg.max_ratio, ratio);
            if (ratio >= 0.5) {
                std::ostringstream os;
                os << label_ << ": defect iteration ratio " << ratio << " >= 1/2 at lambda = " << lambda_;
                throw ContractionError(os.str(), ratio);
            }
            acc += next;
            g = std::move(next);
            if (nn <= tol * fn) {
                converged = true;
                break;
            }
            dg.term_norms.push_back(nn / fn);
            ++dg.terms;
        }
        const double q = defect_norm_;
        dg.tail_bound = sup_norm(g) / fn * q / (1.0 - q);
        if (!converged && dg.tail_bound > 1e-8) {
            std::ostringstream os;
            os << label_ << ": series did not converge in " << nmax << " terms";
            throw NumericalError(os.str(), dg.tail_bound);
        }
        out.solution = S_(acc);
        dg.residual = sup_norm(CplxVec(lambda_ * out.solution - A_ * out.solution - f)) / fn;
        return out;
    }

    [[nodiscard]] CorrectedSolution solve(const RealVec& f, double tol = 1e-13, int nmax = 200) const {
        return solve(CplxVec(f.cast<cplx>()), tol, nmax);
    }

private:
    Eigen::SparseMatrix<cplx, Eigen::RowMajor> A_;
    cplx lambda_;
    LinearMap S_;
    LinearMap delta_;
    std::string label_;
    double defect_norm_ = 0.0;
};

// ---------------------------------------------------------------------------
// Variable drift as a perturbation of the frozen drift b(0).

/// Tensor operator Σ_i [γ_i x_i ∂²_i + b_i(0) ∂_i] sharing the grid axes.
inline TensorOperator frozen_drift_operator(const CoefficientField& cf, const TensorGrid& grid) {
    if (cf.quadratic_weight) throw PreconditionError("perturbation solver needs the x weight");
    if (cf.Gamma0 != 1.0 || cf.Gamma_max != 1.0) throw PreconditionError("perturbation solver needs Gamma = 1");
    if (grid.dim() != cf.d) throw PreconditionError("grid dimension does not match the coefficient field");
    const auto b0 = frozen_drift(cf);
    std::vector<DiscreteOperator> f;
    for (int i = 0; i < cf.d; ++i)
        f.push_back(assemble_1d(grid.axes[static_cast<std::size_t>(i)], cf.gamma[static_cast<std::size_t>(i)],
                                b0[static_cast<std::size_t>(i)]));
    return make_tensor_operator(std::move(f));
}

/// Discrete B = A_direct - A_base with roundoff-level entries dropped.
inline SparseReal drift_perturbation(const SparseReal& direct, const SparseReal& base) {
    double scale = 0.0;
    for (int k = 0; k < direct.outerSize(); ++k)
        for (SparseReal::InnerIterator it(direct, k); it; ++it) scale = std::max(scale, std::abs(it.value()));
    SparseReal B = direct - base;
    B.prune(scale, 64.0 * std::numeric_limits<double>::epsilon());
    return B;
}

/// Resolvent of L^{γ,b(0)} + B, B = Σ_i (b_i(x) - b_i(0)) ∂_i, by the series
/// R(λ) Σ_n (B R(λ))^n around the frozen-drift operator.
class PerturbationSolver {
public:
    PerturbationSolver(const TensorOperator& base, const CoefficientField& drift, cplx lambda, int jobs = 1)
        : base_(base.discrete()),
          direct_(assemble(drift, base.grid)),
          B_(drift_perturbation(direct_.matrix, base_.matrix)),
          R_(std::make_shared<ResolventSolver>(base_.matrix, lambda)),
          corr_(direct_.matrix, lambda, [R = R_](const CplxVec& g) { return R->solve(g); }, "perturbation series",
                0xF001, jobs, [R = R_, B = B_.cast<cplx>().eval()](const CplxVec& g) { return CplxVec(-(B * R->solve(g))); }) {}

    [[nodiscard]] const DiscreteOperator& direct() const { return direct_; }
    [[nodiscard]] const SparseReal& perturbation() const { return B_; }
    [[nodiscard]] double contraction() const { return corr_.defect_norm(); }
    [[nodiscard]] const DefectCorrection& correction() const { return corr_; }

    [[nodiscard]] CorrectedSolution solve(const CplxVec& f, int nmax = 200) const { return corr_.solve(f, 1e-13, nmax); }
    [[nodiscard]] CorrectedSolution solve(const RealVec& f, int nmax = 200) const { return corr_.solve(f, 1e-13, nmax); }

private:
    DiscreteOperator base_;
    DiscreteOperator direct_;
    SparseReal B_;
    std::shared_ptr<ResolventSolver> R_;
    DefectCorrection corr_;
};

inline CorrectedSolution perturbation_resolvent(const TensorOperator& base, const CoefficientField& drift, cplx lambda,
                                                const RealVec& f, int nmax = 200) {
    return PerturbationSolver(base, drift, lambda).solve(f, nmax);
}

struct RelativeBoundRow {
    double epsilon = 0.0;
    double worst_margin = 0.0;  ///< max over holdout of ‖Bu‖ / (1.25 · bound)
    int satisfied = 0;
    int total = 0;
};

struct RelativeBoundReport {
    double C = 0.0;  ///< fitted C″
    double D = 0.0;  ///< fitted D′
    std::vector<RelativeBoundRow> rows;
    int satisfied = 0;
    int total = 0;
    [[nodiscard]] bool pass() const { return total == 0 || satisfied >= 0.95 * total; }
};

/// ‖Bu‖ ≤ D′ε‖L u‖ + (C″/ε)‖u‖ on domain members u = R(λ₀)g: C″ = D′ fitted
/// on the first half of the probes, checked with slack 1.25 on the second.
inline RelativeBoundReport relative_bound_probe(const TensorOperator& base, const CoefficientField& drift,
                                                const std::vector<double>& eps_grid, double lambda0 = 4.0,
                                                int nprobe = 50, std::uint64_t seed = 0xF001) {
    const auto& L = base.discrete();
    const DiscreteOperator direct = assemble(drift, base.grid);
    const SparseReal B = drift_perturbation(direct.matrix, L.matrix);
    const ResolventSolver R(L.matrix, lambda0);
    Rng rng(seed);
    struct Sample {
        double bu, lu, u;
    };
    std::vector<Sample> s;
    for (int k = 0; k < nprobe; ++k) {
        RealVec g(L.size());
        for (Eigen::Index i = 0; i < g.size(); ++i) g(i) = rng.uniform(-1.0, 1.0);
        const RealVec u = R.solve(g).real();
        s.push_back({sup_norm(RealVec(B * u)), sup_norm(RealVec(L.matrix * u)), sup_norm(u)});
    }
    const std::size_t half = s.size() / 2;
    RelativeBoundReport rep;
    double c = 0.0;
    for (std::size_t k = 0; k < half; ++k)
        for (double e : eps_grid) c = std::max(c, s[k].bu / (e * s[k].lu + s[k].u / e));
    rep.C = rep.D = c;
    for (double e : eps_grid) {
        RelativeBoundRow row;
        row.epsilon = e;
        for (std::size_t k = half; k < s.size(); ++k) {
            const double bound = 1.25 * c * (e * s[k].lu + s[k].u / e);
            row.worst_margin = std::max(row.worst_margin, bound > 0 ? s[k].bu / bound : (s[k].bu > 0 ? std::numeric_limits<double>::infinity() : 0.0));
            ++row.total;
            if (s[k].bu <= bound) ++row.satisfied;
        }
        rep.satisfied += row.satisfied;
        rep.total += row.total;
        rep.rows.push_back(row);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Variable Γ by freezing on a partition of unity.

/// Copy of the field with Γ ≡ 1.
inline CoefficientField without_gamma_factor(const CoefficientField& cf) {
    CoefficientField c = cf;
    c.Gamma = family::constant_point(1.0);
    c.Gamma0 = c.Gamma_max = 1.0;
    return c;
}

struct FreezeTerms {
    double C1 = 0.0;  ///< Σ Φ (Γ^𝐢 - Γ) L₁ R^𝐢 (Φ f)
    double C2 = 0.0;  ///< -Σ L(Φ) R^𝐢 (Φ f)
    double C3 = 0.0;  ///< remaining commutator terms
};

/// S(λ)u = Σ_𝐢 Φ^𝐢 R^𝐢(λ)(Φ^𝐢 u) with R^𝐢(λ) = (Γ^𝐢)^{-1} R(λ/Γ^𝐢, L₁) and
/// Γ^𝐢 = Γ(box center), corrected by the defect series.
class FreezeSolver {
public:
    FreezeSolver(const CoefficientField& cf, const TensorGrid& grid, const PartitionOfUnity& pou, cplx lambda,
                 int jobs = 1)
        : direct_(assemble(cf, grid)), L1_(assemble(without_gamma_factor(cf), grid)), Gamma_(grid.size()) {
        if (pou.d != cf.d || pou.corner) throw PreconditionError("partition does not match the field");
        if (pou.epsilon0 > 0.0) {
            const auto osc = gamma_oscillation(cf, pou);
            if (!(osc.max_oscillation < pou.epsilon0)) {
                std::ostringstream os;
                os << "oscillation of Gamma " << osc.max_oscillation << " on box "
                   << detail::box_string(osc.worst_lo, osc.worst_hi) << " exceeds epsilon0 = " << pou.epsilon0;
                throw PreconditionError(os.str());
            }
        }
        for (Eigen::Index k = 0; k < grid.size(); ++k) Gamma_(k) = cf.Gamma(grid.point(k));
        Phi_ = pou.sample_on(grid);
        for (int p = 0; p < pou.patches(); ++p) {
            const double G = cf.Gamma(pou.box_center(p));
            frozen_.push_back(G);
            auto& slot = solvers_[G];
            if (!slot) slot = std::make_shared<ResolventSolver>(L1_.matrix, lambda / G);
        }
        auto data = std::make_shared<Patches>(Patches{Phi_, frozen_, {}, jobs});
        for (double G : frozen_) data->solvers.push_back(solvers_.at(G));
        patches_ = data;
        corr_ = std::make_unique<DefectCorrection>(
            direct_.matrix, lambda, [data](const CplxVec& g) { return apply(*data, g); }, "freezing correction", 0xF001,
            jobs);
    }

    [[nodiscard]] const DiscreteOperator& direct() const { return direct_; }
    [[nodiscard]] const DefectCorrection& correction() const { return *corr_; }
    [[nodiscard]] double defect_norm() const { return corr_->defect_norm(); }
    [[nodiscard]] const std::vector<double>& frozen_values() const { return frozen_; }

    [[nodiscard]] CorrectedSolution solve(const CplxVec& f) const { return corr_->solve(f); }
    [[nodiscard]] CorrectedSolution solve(const RealVec& f) const { return corr_->solve(f); }

    /// Norms of the three defect contributions applied to f, relative to ‖f‖.
    [[nodiscard]] FreezeTerms terms(const CplxVec& f) const {
        const auto& P = *patches_;
        const Eigen::Index n = f.size();
        CplxVec c1 = CplxVec::Zero(n), c2 = CplxVec::Zero(n), c23 = CplxVec::Zero(n);
        const auto A = direct_.matrix.cast<cplx>();
        const auto A1 = L1_.matrix.cast<cplx>();
        for (std::size_t p = 0; p < P.phi.size(); ++p) {
            const CplxVec pf = P.phi[p].cast<cplx>().cwiseProduct(f);
            if (sup_norm(pf) == 0.0) continue;
            const CplxVec v = P.solvers[p]->solve(pf) / P.frozen[p];
            const CplxVec A1v = A1 * v;
            c1 += P.phi[p].cast<cplx>().cwiseProduct((P.frozen[p] - Gamma_.array()).matrix().cast<cplx>().cwiseProduct(A1v));
            const CplxVec Aphi = (direct_.matrix * P.phi[p]).cast<cplx>();
            c2 -= Aphi.cwiseProduct(v);
            c23 -= CplxVec(A * CplxVec(P.phi[p].cast<cplx>().cwiseProduct(v)) - P.phi[p].cast<cplx>().cwiseProduct(A * v));
        }
        const double fn = sup_norm(f);
        return {sup_norm(c1) / fn, sup_norm(c2) / fn, sup_norm(CplxVec(c23 - c2)) / fn};
    }

private:
    struct Patches {
        std::vector<RealVec> phi;
        std::vector<double> frozen;
        std::vector<std::shared_ptr<ResolventSolver>> solvers;
        int jobs = 1;
    };

    /// Patch sums are accumulated in a fixed number of chunks so the result does not depend on `jobs`.
    static CplxVec apply(const Patches& P, const CplxVec& g) {
        constexpr int kChunks = 32;
        const int np = static_cast<int>(P.phi.size());
        std::vector<CplxVec> partial(kChunks, CplxVec::Zero(g.size()));
        parallel_for(kChunks, P.jobs, [&](int c) {
            for (int p = c * np / kChunks; p < (c + 1) * np / kChunks; ++p) {
                const auto& phi = P.phi[static_cast<std::size_t>(p)];
                const CplxVec pg = phi.cast<cplx>().cwiseProduct(g);
                if (sup_norm(pg) == 0.0) continue;
                partial[static_cast<std::size_t>(c)] +=
                    phi.cast<cplx>().cwiseProduct(P.solvers[static_cast<std::size_t>(p)]->solve(pg)) / P.frozen[static_cast<std::size_t>(p)];
            }
        });
        CplxVec out = CplxVec::Zero(g.size());
        for (const auto& v : partial) out += v;
        return out;
    }

    DiscreteOperator direct_;
    DiscreteOperator L1_;
    RealVec Gamma_;
    std::vector<RealVec> Phi_;
    std::vector<double> frozen_;
    std::map<double, std::shared_ptr<ResolventSolver>> solvers_;
    std::shared_ptr<const Patches> patches_;
    std::unique_ptr<DefectCorrection> corr_;
};

inline CorrectedSolution freeze_gamma_resolvent(const CoefficientField& cf, const TensorGrid& grid,
                                                const PartitionOfUnity& pou, cplx lambda, const RealVec& f) {
    return FreezeSolver(cf, grid, pou, lambda).solve(f);
}

// ---------------------------------------------------------------------------
// Corner charts for the x(1-x) weight.

/// Chart at the vertex V^𝐢: y_h = x_h where i_h = 1 and y_h = 1 - x_h where
/// i_h = 2. In y the restricted operator is of x-weight type on [0, 2/3]^d
/// with γ̃_h(y) = γ_h(x_h)(1 - y_h) and b̃_h(y) = c_h b_h(x).
struct CornerChart {
    std::vector<int> corner;
    std::vector<double> vertex;
    std::vector<double> sign;
    CoefficientField field;
    DiscreteOperator op;
    /// Global flat index of every chart node.
    std::vector<Eigen::Index> global;

    /// ψ_𝐢 on points.
    [[nodiscard]] std::vector<double> reflect(std::span<const double> x) const {
        std::vector<double> y(x.begin(), x.end());
        for (std::size_t h = 0; h < y.size(); ++h)
            if (corner[h] == 2) y[h] = 1.0 - y[h];
        return y;
    }
};

struct CornerSystem {
    CoefficientField field;
    TensorGrid grid;
    DiscreteOperator direct;
    PartitionOfUnity pou;
    std::vector<CornerChart> charts;
    /// Φ^𝐢 on the global grid, in chart order.
    std::vector<RealVec> phi;
};

/// ψ_𝐢 on grid indices (exact involution for grids with x_{N-1-j} = 1 - x_j).
inline Eigen::Index reflect_index(const TensorGrid& grid, const std::vector<int>& corner, Eigen::Index k) {
    Eigen::Index out = 0;
    for (int h = 0; h < grid.dim(); ++h) {
        const int N = grid.axes[static_cast<std::size_t>(h)].size();
        int j = grid.coord(k, h);
        if (corner[static_cast<std::size_t>(h)] == 2) j = N - 1 - j;
        out += j * grid.stride(h);
    }
    return out;
}

/// Builds the 2^d chart operators and the direct discretization of
/// U = Γ Σ_h [γ_h x_h (1 - x_h) ∂²_h + b_h ∂_h] on a corner grid.
inline CornerSystem corner_assemble(const CoefficientField& cf, const TensorGrid& grid) {
    if (!cf.quadratic_weight || cf.M != 1.0) throw PreconditionError("corner assembly needs the x(1-x) weight on [0,1]^d");
    const auto inward = validate_inward_drift(cf, 9);
    if (!inward.pass) throw PreconditionError("drift is not inward on the boundary of the cube");
    CornerSystem sys;
    sys.field = cf;
    sys.grid = grid;
    sys.direct = assemble(cf, grid);
    sys.pou = make_corner_partition(cf.d);

    std::vector<Grid1D> sub;
    for (const auto& g : grid.axes) {
        const int N = g.size();
        const int j13 = find_node(g, 1.0 / 3.0), j23 = find_node(g, 2.0 / 3.0);
        if (j13 < 0 || j23 < 0) throw PreconditionError("corner grid needs nodes at 1/3 and 2/3");
        for (int j = 0; j <= (N - 1) / 2; ++j)
            if (g[N - 1 - j] != 1.0 - g[j]) throw PreconditionError("corner grid must satisfy x_{N-1-j} = 1 - x_j");
        Grid1D s;
        s.nodes.assign(g.nodes.begin(), g.nodes.begin() + j23 + 1);
        s.M = s.nodes.back();
        s.grading = g.grading;
        sub.push_back(std::move(s));
    }
    const TensorGrid chart_grid(sub);
    const double Mc = sub.front().M;

    for (int p = 0; p < sys.pou.patches(); ++p) {
        CornerChart ch;
        ch.corner = sys.pou.multi_index(p);
        for (int c : ch.corner) {
            ch.vertex.push_back(c == 1 ? 0.0 : 1.0);
            ch.sign.push_back(c == 1 ? 1.0 : -1.0);
        }
        const auto corner = ch.corner;
        auto to_x = [corner](std::span<const double> y) {
            std::vector<double> x(y.begin(), y.end());
            for (std::size_t h = 0; h < x.size(); ++h)
                if (corner[h] == 2) x[h] = 1.0 - x[h];
            return x;
        };
        std::vector<LineFn> gt;
        std::vector<PointFn> bt;
        for (int h = 0; h < cf.d; ++h) {
            const auto gh = cf.gamma[static_cast<std::size_t>(h)];
            const auto bh = cf.b[static_cast<std::size_t>(h)];
            const bool flip = corner[static_cast<std::size_t>(h)] == 2;
            gt.push_back([gh, flip](double y) { return gh(flip ? 1.0 - y : y) * (1.0 - y); });
            bt.push_back([bh, flip, to_x](std::span<const double> y) { return (flip ? -1.0 : 1.0) * bh(to_x(y)); });
        }
        const auto G = cf.Gamma;
        ch.field = make_coefficient_field(cf.d, Mc, [G, to_x](std::span<const double> y) { return G(to_x(y)); }, gt, bt,
                                          false, cf.B);
        ch.op = assemble(ch.field, chart_grid);
        ch.global.resize(static_cast<std::size_t>(chart_grid.size()));
        for (Eigen::Index k = 0; k < chart_grid.size(); ++k) {
            Eigen::Index gk = 0;
            for (int h = 0; h < cf.d; ++h) {
                const int N = grid.axes[static_cast<std::size_t>(h)].size();
                int j = chart_grid.coord(k, h);
                if (corner[static_cast<std::size_t>(h)] == 2) j = N - 1 - j;
                gk += j * grid.stride(h);
            }
            ch.global[static_cast<std::size_t>(k)] = gk;
        }
        sys.charts.push_back(std::move(ch));
    }
    sys.phi = sys.pou.sample_on(grid);
    return sys;
}

/// S(λ)u = Σ_𝐢 Φ^𝐢 R(λ, U_𝐢)(Φ^𝐢 u) from the chart resolvents, corrected by
/// the defect series (I + B(λ) + C(λ))^{-1}.
class CornerSolver {
public:
    CornerSolver(const CornerSystem& sys, cplx lambda, int jobs = 1) : direct_(sys.direct) {
        auto data = std::make_shared<Charts>();
        data->phi = sys.phi;
        for (const auto& ch : sys.charts) {
            data->global.push_back(ch.global);
            data->solvers.push_back(std::make_shared<ResolventSolver>(ch.op.matrix, lambda));
        }
        charts_ = data;
        corr_ = std::make_unique<DefectCorrection>(
            direct_.matrix, lambda, [data](const CplxVec& g) { return apply(*data, g); }, "corner gluing", 0xF001, jobs);
    }

    [[nodiscard]] const DefectCorrection& correction() const { return *corr_; }
    [[nodiscard]] double defect_norm() const { return corr_->defect_norm(); }
    [[nodiscard]] CorrectedSolution solve(const CplxVec& f) const { return corr_->solve(f); }
    [[nodiscard]] CorrectedSolution solve(const RealVec& f) const { return corr_->solve(f); }

    /// Chart resolvent R(λ, U_𝐢) applied to Φ^𝐢 f, extended by zero.
    [[nodiscard]] CplxVec chart_image(int chart, const CplxVec& f) const {
        const auto& P = *charts_;
        const auto& idx = P.global[static_cast<std::size_t>(chart)];
        CplxVec w(static_cast<Eigen::Index>(idx.size()));
        for (std::size_t k = 0; k < idx.size(); ++k) w(static_cast<Eigen::Index>(k)) = P.phi[static_cast<std::size_t>(chart)](idx[k]) * f(idx[k]);
        const CplxVec v = P.solvers[static_cast<std::size_t>(chart)]->solve(w);
        CplxVec out = CplxVec::Zero(f.size());
        for (std::size_t k = 0; k < idx.size(); ++k) out(idx[k]) = v(static_cast<Eigen::Index>(k));
        return out;
    }

private:
    struct Charts {
        std::vector<RealVec> phi;
        std::vector<std::vector<Eigen::Index>> global;
        std::vector<std::shared_ptr<ResolventSolver>> solvers;
    };

    static CplxVec apply(const Charts& P, const CplxVec& g) {
        CplxVec out = CplxVec::Zero(g.size());
        for (std::size_t c = 0; c < P.solvers.size(); ++c) {
            const auto& idx = P.global[c];
            CplxVec w(static_cast<Eigen::Index>(idx.size()));
            for (std::size_t k = 0; k < idx.size(); ++k) w(static_cast<Eigen::Index>(k)) = P.phi[c](idx[k]) * g(idx[k]);
            if (sup_norm(w) == 0.0) continue;
            const CplxVec v = P.solvers[c]->solve(w);
            for (std::size_t k = 0; k < idx.size(); ++k) out(idx[k]) += P.phi[c](idx[k]) * v(static_cast<Eigen::Index>(k));
        }
        return out;
    }

    DiscreteOperator direct_;
    std::shared_ptr<const Charts> charts_;
    std::unique_ptr<DefectCorrection> corr_;
};

inline CorrectedSolution corner_glued_resolvent(const CornerSystem& sys, cplx lambda, const RealVec& f) {
    return CornerSolver(sys, lambda).solve(f);
}

// ---------------------------------------------------------------------------
// Thresholds.

struct Threshold {
    double located = 0.0;  ///< smallest sampled Re λ with contraction < 1/2
    double safe = 0.0;     ///< twice the located value
    double ratio_at_safe = 0.0;
};

/// Bisection on Re λ for the point where `ratio` drops below 1/2, assuming
/// the ratio decreases in Re λ; the returned safe threshold is doubled.
inline Threshold locate_threshold(const std::function<double(double)>& ratio, double lo = 0.25, double hi = 64.0,
                                  int iterations = 20) {
    int grow = 0;
    while (!(ratio(hi) < 0.5)) {
        hi *= 2.0;
        if (++grow > 30) throw NumericalError("contraction does not drop below 1/2", ratio(hi));
    }
    if (ratio(lo) < 0.5) {
        Threshold t{lo, 2.0 * lo, 0.0};
        t.ratio_at_safe = ratio(t.safe);
        return t;
    }
    for (int k = 0; k < iterations; ++k) {
        const double mid = std::sqrt(lo * hi);
        (ratio(mid) < 0.5 ? hi : lo) = mid;
    }
    Threshold t{hi, 2.0 * hi, 0.0};
    t.ratio_at_safe = ratio(t.safe);
    return t;
}

}  // namespace degensemi
