#pragma once

#include "cli/run_config.hpp"

#include "degensemi/halfline_oracle.hpp"
#include "degensemi/varcoeff.hpp"
#include "degensemi/verify.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#ifndef DEGENSEMI_VERSION
#define DEGENSEMI_VERSION "0.0.0"
#endif

namespace degensemi::cli {

enum ExitCode : int { kPass = 0, kUsage = 1, kEstimateFail = 2, kNumericalFail = 3 };

/// Resolved command context: parsed config plus command-line overrides.
struct Context {
    RunConfig config;
    std::filesystem::path out;
    std::uint64_t seed = 0xF001;
    int jobs = 1;
    std::ostream* log = &std::cerr;
};

// ---------------------------------------------------------------------------
// CSV output.

inline std::string fmt(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

inline std::string hex(std::uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "0x%llx", static_cast<unsigned long long>(v));
    return buf;
}

/// CSV file with `#` metadata lines; rows are joined with commas.
class CsvWriter {
public:
    CsvWriter(const Context& ctx, const std::string& name, const std::vector<std::string>& columns,
              const std::vector<std::pair<std::string, std::string>>& meta = {})
        : out_(ctx.out / name, std::ios::binary | std::ios::trunc) {
        if (!out_) throw ConfigError("cannot write " + (ctx.out / name).string());
        out_ << "# config_hash=" << ctx.config.hash() << "\n# seed=" << hex(ctx.seed) << "\n# version=" << DEGENSEMI_VERSION
             << "\n";
        for (const auto& [k, v] : meta) out_ << "# " << k << "=" << v << "\n";
        row(columns);
    }

    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
        out_ << "\n";
    }

private:
    std::ofstream out_;
};

inline void write_report(const Context& ctx, const std::string& file, const EstimateReport& rep) {
    std::vector<std::pair<std::string, std::string>> meta{{"report", rep.id}, {"axes", rep.axes}};
    for (const auto& [k, v] : rep.constants) meta.emplace_back(k, fmt(v));
    for (const auto& n : rep.notes) meta.emplace_back("note", n);
    meta.emplace_back("verdict", rep.pass() ? "PASS" : "FAIL");
    CsvWriter w(ctx, file,
                {"quantity", "probe", "calibration", "lambda_re", "lambda_im", "t", "b", "eps", "axis", "measured",
                 "bound", "ratio", "pass"},
                meta);
    for (const auto& p : rep.points)
        w.row({p.quantity, std::to_string(p.probe), p.calibration ? "1" : "0", fmt(p.lambda.real()),
               fmt(p.lambda.imag()), fmt(p.t), fmt(p.b), fmt(p.eps), std::to_string(p.axis), fmt(p.measured),
               fmt(p.bound), fmt(p.ratio), rep.point_ok(p) ? "true" : "false"});
}

// ---------------------------------------------------------------------------
// oracle

/// Half-line oracle: norm sweep against the closed-form bounds plus the
/// constants identity and collocation residuals.
inline int cmd_oracle(const Context& ctx) {
    const auto& S = ctx.config.sweep;
    const auto sweep =
        oracle_norm_sweep(S.oracle_thetas, S.oracle_mags, S.oracle_probes, S.oracle_drifts, S.oracle_gammas, ctx.seed, ctx.jobs);
    {
        CsvWriter w(ctx, "oracle_sweep.csv", {"theta", "mag", "bound", "measured", "ratio", "pass"},
                    {{"slack", fmt(sweep.slack)}});
        for (const auto& r : sweep.rows)
            w.row({fmt(r.theta), fmt(r.mag), fmt(r.bound), fmt(r.measured), fmt(r.ratio), r.pass ? "true" : "false"});
    }
    {
        CsvWriter w(ctx, "oracle_detail.csv", {"estimate", "gamma", "b", "theta", "mag", "bound", "measured", "ratio", "pass"});
        for (const auto& r : sweep.rows)
            w.row({r.estimate, fmt(r.gamma), fmt(r.b), fmt(r.theta), fmt(r.mag), fmt(r.bound), fmt(r.measured), fmt(r.ratio),
                   r.pass ? "true" : "false"});
    }

    // Identities: λR1 = 1 for the base and drift resolvents, collocation residual of e^{-s}cos s.
    constexpr double kIdentityTol = 1e-12, kResidualTol = 1e-6;
    const HalflineFunction smooth{[](double s) { return cplx(std::exp(-s) * std::cos(s)); }, 0.0, {}};
    struct Identity {
        double theta, mag, gamma, b, identity, residual, contraction;
    };
    std::vector<std::pair<double, double>> params{{1.0, 0.0}};
    for (double g : S.oracle_gammas)
        for (double b : S.oracle_drifts)
            if (b > 0.0) params.emplace_back(g, b);
    std::vector<std::tuple<double, double, double, double>> tasks;
    for (double th : S.oracle_thetas)
        for (double m : S.oracle_mags)
            for (const auto& [g, b] : params) {
                if (b > 0.0 && !(std::abs(th) < kPi / 2.0 && m > 8.0 * b * b / g)) continue;
                tasks.emplace_back(th, m, g, b);
            }
    std::vector<Identity> ids(tasks.size());
    parallel_for(static_cast<int>(tasks.size()), ctx.jobs, [&](int k) {
        const auto [th, m, g, b] = tasks[static_cast<std::size_t>(k)];
        const auto sp = make_sector_point(m, th);
        const HalflineProblem hp{g, b};
        const std::vector<double> x{0.0, 0.5, 1.0, 4.0};
        const auto one = b > 0.0 ? drift_resolvent(sp, hp, constant_function(1.0), x) : scaled_resolvent(sp, g, constant_function(1.0), x);
        double id = 0.0;
        for (Eigen::Index i = 0; i < one.values.size(); ++i) id = std::max(id, std::abs(sp.lambda * one.values(i) - 1.0));
        const auto r = b > 0.0 ? drift_resolvent(sp, hp, smooth, x) : scaled_resolvent(sp, g, smooth, x);
        ids[static_cast<std::size_t>(k)] = {th, m, g, b, id, collocation_residual(r, sp, hp, 10.0),
                                            b > 0.0 ? drift_contraction(sp, hp) : 0.0};
    });
    bool identities_ok = true;
    {
        CsvWriter w(ctx, "oracle_identities.csv", {"theta", "mag", "gamma", "b", "identity_error", "residual", "contraction", "pass"},
                    {{"identity_tol", fmt(kIdentityTol)}, {"residual_tol", fmt(kResidualTol)}});
        for (const auto& i : ids) {
            const bool ok = i.identity <= kIdentityTol && i.residual <= kResidualTol && i.contraction < 0.5;
            identities_ok = identities_ok && ok;
            w.row({fmt(i.theta), fmt(i.mag), fmt(i.gamma), fmt(i.b), fmt(i.identity), fmt(i.residual), fmt(i.contraction),
                   ok ? "true" : "false"});
        }
    }
    std::ofstream v(ctx.out / "verdicts.txt", std::ios::binary | std::ios::trunc);
    int ok_rows = 0;
    for (const auto& r : sweep.rows) ok_rows += r.pass ? 1 : 0;
    v << (sweep.pass() ? "PASS" : "FAIL") << " oracle-bounds rows=" << sweep.rows.size() << " satisfied=" << ok_rows << "\n";
    v << (identities_ok ? "PASS" : "FAIL") << " oracle-identities rows=" << ids.size() << "\n";
    return sweep.pass() && identities_ok ? kPass : kEstimateFail;
}

// ---------------------------------------------------------------------------
// verify

/// Reports produced by one suite, in output order.
struct SuiteResult {
    std::string suite;
    std::vector<EstimateReport> reports;
    std::vector<std::string> numerical_failures;
};

namespace detail {

inline std::vector<cplx> lambda_points(const SweepBlock& S) {
    LambdaGrid g;
    g.thetas = S.thetas;
    g.mags = S.mags;
    return g.points();
}

inline TimeGrid time_grid(const SweepBlock& S) {
    TimeGrid tg;
    tg.early = logspace(S.t_min, S.t_bar, S.t_count);
    tg.late = S.t_late;
    tg.tbar = S.t_bar;
    return tg;
}

inline Grid1D axis_grid(const RunConfig& c, int N) { return graded_grid(c.problem.M, N, c.discretization.grading); }

inline double drift_scale(const CoefficientField& cf) { return cf.B > 0.0 ? cf.B : 1.0; }

/// EstimateReport of a solver equivalence: strict ratios against the bounds.
inline EstimateReport equivalence_report(const std::string& id, const std::string& axes) {
    EstimateReport rep;
    rep.id = id;
    rep.axes = axes;
    rep.strict = true;
    return rep;
}

inline void add_point(EstimateReport& rep, const std::string& quantity, int probe, cplx lambda, double measured, double bound) {
    EstimatePoint p;
    p.quantity = quantity;
    p.probe = probe;
    p.lambda = lambda;
    p.measured = measured;
    p.bound = bound;
    p.ratio = safe_ratio(measured, bound);
    rep.points.push_back(p);
}

inline double relative_sup(const CplxVec& a, const CplxVec& b) {
    const double n = sup_norm(b);
    return n > 0.0 ? sup_norm(CplxVec(a - b)) / n : sup_norm(a);
}

/// Equivalence of a corrected solver against the direct sparse solve on the probes.
template <typename Solver>
void equivalence_points(EstimateReport& rep, const Solver& solver, const SparseReal& direct, cplx lambda,
                        const std::vector<TestFunction>& probes) {
    constexpr double kEquivalenceTol = 1e-6;
    const ResolventSolver R(direct, lambda);
    double worst_ratio = 0.0, terms = 0.0;
    for (std::size_t k = 0; k < probes.size(); ++k) {
        CorrectedSolution r;
        try {
            r = solver.solve(probes[k].values);
        } catch (const ContractionError& e) {
            add_point(rep, "series_ratio", static_cast<int>(k), lambda, e.diagnostic(), 0.5);
            continue;
        }
        add_point(rep, "relative_error", static_cast<int>(k), lambda, relative_sup(r.solution, R.solve(probes[k].values)),
                  kEquivalenceTol);
        worst_ratio = std::max(worst_ratio, r.diagnostics.max_ratio);
        terms = std::max(terms, static_cast<double>(r.diagnostics.terms));
    }
    add_point(rep, "series_ratio", -1, lambda, worst_ratio, 0.5);
    rep.set("max_terms", terms);
    rep.set("max_series_ratio", worst_ratio);
}

}  // namespace detail

inline SuiteResult suite_oned(const Context& ctx) {
    const auto& c = ctx.config;
    const auto& S = c.sweep;
    const auto cf = make_field(c.problem);
    const LineFn gamma = cf.gamma.front();
    const double b = S.oned_b;
    auto make = [&](double bb) { return assemble_1d(detail::axis_grid(c, c.discretization.oned_N), gamma, bb); };
    const auto A = make(b);
    const auto lambdas = detail::lambda_points(S);
    SuiteResult out{"oned", {}, {}};

    Rng rng(ctx.seed);
    const auto probes = make_probes(A.grid, S.probes, rng);
    auto res = resolvent_sweep(A, lambdas, probes, "resolvent", b, ctx.seed, ctx.jobs);
    const double d0 = res.constant("d2");
    out.reports.push_back(std::move(res));

    std::vector<double> bs;
    for (double f : S.b_fractions) bs.push_back(f * detail::drift_scale(cf));
    out.reports.push_back(uniformity_in_b(make, bs, lambdas, S.probes, ctx.seed, ctx.jobs));
    out.reports.push_back(semigroup_sweep(make_tensor_operator({A}), detail::time_grid(S), probes, "semigroup", ctx.seed, ctx.jobs));

    Rng r2(ctx.seed ^ 0x1);
    out.reports.push_back(
        interpolation_inequality(A, d0, S.eps_bar, resolvent_image_probes(A, 1.0, S.probes, r2), S.interp_levels, ctx.seed));
    out.reports.push_back(sector_probe(A, S.sector_rays, S.sector_mags, ctx.seed, ctx.jobs).report);
    out.reports.push_back(check_minimum_principle(A, S.trials, ctx.seed));
    auto makeN = [&](int N) { return assemble_1d(detail::axis_grid(c, N), gamma, b); };
    out.reports.push_back(boundary_vanishing(makeN, S.boundary_N, S.boundary_lambda, 0.0, S.boundary_probes, ctx.seed));
    out.reports.push_back(boundary_vanishing(makeN, S.boundary_N, 0.0, S.boundary_t, S.boundary_probes, ctx.seed));

    // Analogues for the x(1-x) weight with a mutation drift.
    const auto qf = make_coefficient_field(1, 1.0, family::constant_point(1.0), {gamma},
                                           {family::mutation_drift(0, {S.corner_mutation.front()})}, true);
    const auto U = assemble(qf, TensorGrid({corner_grid(c.discretization.corner_m)}));
    Rng r3(ctx.seed ^ 0x2);
    const auto qprobes = make_probes(U.grid, S.probes, r3);
    auto qres = resolvent_sweep(U, lambdas, qprobes, "quadratic-resolvent", S.corner_mutation.front(), ctx.seed, ctx.jobs);
    const double qd0 = qres.constant("d2");
    out.reports.push_back(std::move(qres));
    out.reports.push_back(
        semigroup_sweep(make_tensor_operator({U}), detail::time_grid(S), qprobes, "quadratic-semigroup", ctx.seed, ctx.jobs));
    Rng r4(ctx.seed ^ 0x3);
    auto qint = interpolation_inequality(U, qd0, S.eps_bar, resolvent_image_probes(U, 1.0, S.probes, r4), S.interp_levels, ctx.seed);
    qint.id = "quadratic-interpolation";
    out.reports.push_back(std::move(qint));
    return out;
}

inline SuiteResult suite_tensor(const Context& ctx) {
    const auto& c = ctx.config;
    const auto& S = c.sweep;
    if (c.problem.d < 2) throw ConfigError("verify tensor needs problem.d >= 2");
    if (c.problem.quadratic_weight) throw ConfigError("verify tensor needs weight x");
    const auto cf = make_field(c.problem);
    const auto b0 = frozen_drift(cf);
    auto build = [&](int N) {
        std::vector<DiscreteOperator> f;
        for (int i = 0; i < cf.d; ++i)
            f.push_back(assemble_1d(detail::axis_grid(c, N), cf.gamma[static_cast<std::size_t>(i)], b0[static_cast<std::size_t>(i)]));
        return make_tensor_operator(std::move(f));
    };
    const auto top = build(c.discretization.tensor_N);
    SuiteResult out{"tensor", {}, {}};
    Rng rng(ctx.seed);
    const auto probes = make_probes(top.grid, S.probes, rng);
    out.reports.push_back(resolvent_sweep(top.discrete(), detail::lambda_points(S), probes, "tensor-resolvent", 0.0, ctx.seed, ctx.jobs));
    out.reports.push_back(semigroup_sweep(top, detail::time_grid(S), probes, "tensor-semigroup", ctx.seed, ctx.jobs));
    auto mp = check_minimum_principle(top.discrete(), S.trials, ctx.seed);
    mp.id = "tensor-minimum-principle";
    out.reports.push_back(std::move(mp));
    const auto small = build(c.discretization.sector_N);
    if (small.size() <= kMaxDenseSpectrum) {
        auto sec = sector_probe(small.discrete(), S.sector_rays, S.sector_mags, ctx.seed, ctx.jobs).report;
        sec.id = "tensor-sector";
        out.reports.push_back(std::move(sec));
    }
    return out;
}

inline SuiteResult suite_perturb(const Context& ctx) {
    const auto& c = ctx.config;
    const auto& S = c.sweep;
    if (c.problem.quadratic_weight) throw ConfigError("verify perturb needs weight x");
    const auto cf = without_gamma_factor(make_field(c.problem));
    const auto grid = uniform_tensor_grid(detail::axis_grid(c, c.discretization.perturb_N), cf.d);
    const auto base = frozen_drift_operator(cf, grid);
    SuiteResult out{"perturb", {}, {}};

    auto rep = detail::equivalence_report("perturbation", "lambda=" + fmt(S.perturb_lambda) + "; N=" + std::to_string(c.discretization.perturb_N));
    const PerturbationSolver ps(base, cf, S.perturb_lambda, ctx.jobs);
    rep.set("contraction", ps.contraction());
    detail::add_point(rep, "contraction", -1, S.perturb_lambda, ps.contraction(), 0.5);
    if (ps.contraction() < 0.5) {
        Rng rng(ctx.seed);
        detail::equivalence_points(rep, ps, ps.direct().matrix, S.perturb_lambda, make_probes(grid, S.probes, rng));
    }
    out.reports.push_back(std::move(rep));

    const auto rb = relative_bound_probe(base, cf, S.relative_eps, 4.0, 50, ctx.seed);
    EstimateReport r;
    r.id = "relative-bound";
    r.axes = "eps in relative_eps; lambda0=4; 25 calibration + 25 holdout domain members";
    r.set("C", rb.C);
    r.set("D", rb.D);
    r.set("satisfied", rb.satisfied);
    r.set("total", rb.total);
    for (const auto& row : rb.rows) {
        EstimatePoint p;
        p.quantity = "violations";
        p.eps = row.epsilon;
        p.measured = row.total - row.satisfied;
        p.bound = 0.05 * row.total;
        p.ratio = safe_ratio(p.measured, p.bound);
        r.points.push_back(p);
    }
    out.reports.push_back(std::move(r));
    return out;
}

inline SuiteResult suite_freeze(const Context& ctx) {
    const auto& c = ctx.config;
    const auto& S = c.sweep;
    if (c.problem.quadratic_weight) throw ConfigError("verify freeze needs weight x");
    const auto cf = make_field(c.problem);
    const auto grid = uniform_tensor_grid(detail::axis_grid(c, c.discretization.freeze_N), cf.d);
    const double d1 = sector_resolvent_constant(assemble(without_gamma_factor(cf), grid).matrix, ctx.jobs);
    SuiteResult out{"freeze", {}, {}};
    PartitionOfUnity pou;
    try {
        pou = choose_refinement(cf, d1);
    } catch (const PreconditionError& e) {
        auto rep = detail::equivalence_report("freezing", "refinement rule");
        rep.notes.push_back(e.what());
        detail::add_point(rep, "refinement", -1, 0.0, std::numeric_limits<double>::infinity(), 1.0);
        out.reports.push_back(std::move(rep));
        return out;
    }
    double lambda = S.freeze_lambda;
    Threshold th;
    if (lambda == 0.0) {
        th = locate_threshold([&](double l) { return FreezeSolver(cf, grid, pou, l, ctx.jobs).defect_norm(); }, 1.0, 256.0, 12);
        lambda = th.safe;
    }
    auto rep = detail::equivalence_report("freezing", "lambda=" + fmt(lambda) + "; n=" + std::to_string(pou.n) +
                                                          "; N=" + std::to_string(c.discretization.freeze_N));
    rep.set("d1", d1);
    rep.set("epsilon0", pou.epsilon0);
    rep.set("patches_per_axis", pou.n);
    rep.set("lambda", lambda);
    if (S.freeze_lambda == 0.0) {
        rep.set("threshold_located", th.located);
        rep.set("threshold_safe", th.safe);
    }
    const FreezeSolver fs(cf, grid, pou, lambda, ctx.jobs);
    rep.set("defect_norm", fs.defect_norm());
    detail::add_point(rep, "contraction", -1, lambda, fs.defect_norm(), 0.5);
    if (fs.defect_norm() < 0.5) {
        Rng rng(ctx.seed);
        const auto probes = make_probes(grid, S.probes, rng);
        FreezeTerms worst;
        for (const auto& p : probes) {
            const auto t = fs.terms(p.values.cast<cplx>());
            worst.C1 = std::max(worst.C1, t.C1);
            worst.C2 = std::max(worst.C2, t.C2);
            worst.C3 = std::max(worst.C3, t.C3);
        }
        rep.set("C1", worst.C1);
        rep.set("C2", worst.C2);
        rep.set("C3", worst.C3);
        detail::equivalence_points(rep, fs, fs.direct().matrix, lambda, probes);
    }
    out.reports.push_back(std::move(rep));
    return out;
}

inline SuiteResult suite_corners(const Context& ctx) {
    const auto& c = ctx.config;
    const auto& S = c.sweep;
    const int d = static_cast<int>(S.corner_mutation.size());
    if (d < 1) throw ConfigError("field sweep.corner_mutation: needs one rate per dimension");
    const auto base = make_field(c.problem);
    const auto cf = make_coefficient_field(d, 1.0, family::constant_point(1.0),
                                           std::vector<LineFn>(static_cast<std::size_t>(d), base.gamma.front()),
                                           [&] {
                                               std::vector<PointFn> b;
                                               for (int i = 0; i < d; ++i) b.push_back(family::mutation_drift(i, S.corner_mutation));
                                               return b;
                                           }(),
                                           true);
    const auto grid = uniform_tensor_grid(corner_grid(c.discretization.corner_m), d);
    const auto sys = corner_assemble(cf, grid);
    SuiteResult out{"corners", {}, {}};
    auto rep = detail::equivalence_report("corner-gluing", "lambda=" + fmt(S.corner_lambda) + "; m=" + std::to_string(c.discretization.corner_m));
    const CornerSolver cs(sys, S.corner_lambda, ctx.jobs);
    rep.set("defect_norm", cs.defect_norm());
    detail::add_point(rep, "contraction", -1, S.corner_lambda, cs.defect_norm(), 0.5);
    if (cs.defect_norm() < 0.5) {
        Rng rng(ctx.seed);
        const auto probes = make_probes(grid, S.probes, rng);
        detail::equivalence_points(rep, cs, sys.direct.matrix, S.corner_lambda, probes);
        double d1 = 0.0;
        for (const auto& ch : sys.charts) d1 = std::max(d1, sector_resolvent_constant(ch.op.matrix, ctx.jobs));
        const double bound = std::pow(2.0, d + 1) * d1;
        rep.set("chart_d1", d1);
        for (std::size_t k = 0; k < probes.size(); ++k) {
            const auto r = cs.solve(probes[k].values);
            detail::add_point(rep, "glued_resolvent", static_cast<int>(k), S.corner_lambda,
                              S.corner_lambda * sup_norm(r.solution) / sup_norm(probes[k].values), bound);
        }
    }
    out.reports.push_back(std::move(rep));
    return out;
}

inline const std::vector<std::string>& suite_names() {
    static const std::vector<std::string> names{"oned", "tensor", "perturb", "freeze", "corners"};
    return names;
}

inline SuiteResult run_suite(const Context& ctx, const std::string& suite) {
    SuiteResult r;
    try {
        if (suite == "oned") return suite_oned(ctx);
        if (suite == "tensor") return suite_tensor(ctx);
        if (suite == "perturb") return suite_perturb(ctx);
        if (suite == "freeze") return suite_freeze(ctx);
        if (suite == "corners") return suite_corners(ctx);
    } catch (const NumericalError& e) {
        r.suite = suite;
        r.numerical_failures.push_back(e.what());
        return r;
    } catch (const PreconditionError& e) {
        throw ConfigError("suite " + suite + ": " + e.what());
    }
    throw ConfigError("unknown suite '" + suite + "' (expected oned, tensor, perturb, freeze, corners or all)");
}

inline int cmd_verify(const Context& ctx, const std::string& suite) {
    std::vector<std::string> suites;
    if (suite == "all") suites = suite_names();
    else suites = {suite};
    if (suite == "all" && ctx.config.problem.d < 2) throw ConfigError("verify all includes tensor, which needs problem.d >= 2");
    std::vector<SuiteResult> results;
    for (const auto& s : suites) {
        *ctx.log << "verify " << s << "\n";
        results.push_back(run_suite(ctx, s));
    }
    bool fail = false, numerical = false;
    std::ofstream v(ctx.out / "verdicts.txt", std::ios::binary | std::ios::trunc);
    for (const auto& r : results) {
        for (const auto& rep : r.reports) {
            write_report(ctx, r.suite + "_" + rep.id + ".csv", rep);
            v << r.suite << " " << rep.verdict_line() << "\n";
            fail = fail || !rep.pass();
        }
        for (const auto& e : r.numerical_failures) {
            v << r.suite << " NUMERICAL " << e << "\n";
            numerical = true;
        }
    }
    if (numerical) return kNumericalFail;
    return fail ? kEstimateFail : kPass;
}

// ---------------------------------------------------------------------------
// evolve

inline RealVec make_datum(const FamilySpec& f, const TensorGrid& grid) {
    if (f.family == "constant") {
        detail::need_args("evolve.datum", f, 1, 1);
        return RealVec::Constant(grid.size(), f.args[0]);
    }
    if (f.family == "bump") {
        detail::need_args("evolve.datum", f, 2, 2);
        const double c0 = f.args[0], w = f.args[1];
        if (!(w > 0.0)) throw ConfigError("field evolve.datum: bump width must be positive");
        return sample(grid, [=](std::span<const double> x) {
            double r2 = 0.0;
            for (double s : x) r2 += (s - c0) * (s - c0);
            return std::exp(-r2 / (2.0 * w * w));
        });
    }
    if (f.family == "step") {
        detail::need_args("evolve.datum", f, 1, 1);
        const double s0 = f.args[0];
        return sample(grid, [=](std::span<const double> x) { return x[0] < s0 ? 1.0 : 0.0; });
    }
    throw ConfigError("field evolve.datum: unknown family '" + f.family + "' (expected constant, bump or step)");
}

/// Trapezoid weights of the tensor grid.
inline RealVec cell_volumes(const TensorGrid& grid) {
    RealVec w = RealVec::Ones(grid.size());
    for (int h = 0; h < grid.dim(); ++h) {
        const auto& g = grid.axes[static_cast<std::size_t>(h)];
        for (Eigen::Index n = 0; n < w.size(); ++n) {
            const int j = grid.coord(n, h);
            const double left = j > 0 ? g[j] - g[j - 1] : 0.0, right = j + 1 < g.size() ? g[j + 1] - g[j] : 0.0;
            w(n) *= 0.5 * (left + right);
        }
    }
    return w;
}

inline void write_plot(const std::filesystem::path& path, const TensorGrid& grid, const RealVec& u) {
    if (grid.dim() == 1) {
        const auto& g = grid.axes.front();
        const double lo = std::min(0.0, u.minCoeff()), hi = std::max(1e-300, u.maxCoeff());
        std::ofstream o(path.string() + ".svg", std::ios::binary | std::ios::trunc);
        o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"320\">\n<polyline fill=\"none\" stroke=\"black\" points=\"";
        for (int j = 0; j < g.size(); ++j)
            o << fmt(20 + 600 * g[j] / g.M) << "," << fmt(300 - 280 * (u(j) - lo) / (hi - lo)) << " ";
        o << "\"/>\n</svg>\n";
    } else if (grid.dim() == 2) {
        const int nx = grid.axes[0].size(), ny = grid.axes[1].size();
        const double lo = u.minCoeff(), hi = u.maxCoeff();
        std::ofstream o(path.string() + ".pgm", std::ios::binary | std::ios::trunc);
        o << "P2\n" << nx << " " << ny << "\n255\n";
        for (int y = ny - 1; y >= 0; --y) {
            for (int x = 0; x < nx; ++x) {
                const double v = hi > lo ? (u(x + static_cast<Eigen::Index>(y) * nx) - lo) / (hi - lo) : 0.0;
                o << static_cast<int>(std::lround(255 * v)) << (x + 1 < nx ? " " : "\n");
            }
        }
    }
}

/// Snapshots T(t)u₀ at the configured times plus a summary with mass centers.
inline int cmd_evolve(const Context& ctx) {
    const auto& c = ctx.config;
    const auto& E = c.evolve;
    const auto cf = make_field(c.problem);
    const auto grid = c.problem.quadratic_weight
                          ? uniform_tensor_grid(corner_grid(c.discretization.corner_m), cf.d)
                          : uniform_tensor_grid(detail::axis_grid(c, c.discretization.N), cf.d);
    const auto A = assemble(cf, grid);
    const Scheme scheme = E.scheme == "expm" ? Scheme::expm : E.scheme == "implicit_euler" ? Scheme::implicit_euler : Scheme::crank_nicolson;
    if (scheme == Scheme::expm && A.size() > kMaxDenseExpm) throw ConfigError("field evolve.scheme: expm needs at most 400 nodes");
    std::vector<double> times = E.times;
    std::sort(times.begin(), times.end());
    times.erase(std::unique(times.begin(), times.end()), times.end());

    const RealVec vol = cell_volumes(grid);
    RealVec u = make_datum(E.datum, grid);
    double t_prev = 0.0;
    std::vector<std::string> cols;
    for (int h = 0; h < cf.d; ++h) cols.push_back("x" + std::to_string(h));
    cols.push_back("u");
    std::vector<std::string> scols{"t", "min", "max", "mass"};
    for (int h = 0; h < cf.d; ++h) scols.push_back("center" + std::to_string(h));
    CsvWriter summary(ctx, "evolve_summary.csv", scols, {{"scheme", E.scheme}, {"steps", std::to_string(E.steps)}});
    for (std::size_t k = 0; k < times.size(); ++k) {
        const double dt = times[k] - t_prev;
        if (dt > 0.0) u = semigroup_step(A, dt, u, scheme, E.steps);
        t_prev = times[k];
        char name[32];
        std::snprintf(name, sizeof name, "snapshot_%03zu", k);
        CsvWriter w(ctx, std::string(name) + ".csv", cols, {{"t", fmt(times[k])}});
        for (Eigen::Index n = 0; n < u.size(); ++n) {
            std::vector<std::string> row;
            for (double x : grid.point(n)) row.push_back(fmt(x));
            row.push_back(fmt(u(n)));
            w.row(row);
        }
        if (c.output.plots) write_plot(ctx.out / name, grid, u);
        const double mass = vol.dot(u);
        std::vector<std::string> srow{fmt(times[k]), fmt(u.minCoeff()), fmt(u.maxCoeff()), fmt(mass)};
        for (int h = 0; h < cf.d; ++h) {
            double m = 0.0;
            for (Eigen::Index n = 0; n < u.size(); ++n) m += vol(n) * u(n) * grid.point(n)[static_cast<std::size_t>(h)];
            srow.push_back(fmt(mass != 0.0 ? m / mass : 0.0));
        }
        summary.row(srow);
    }
    return kPass;
}

}  // namespace degensemi::cli
