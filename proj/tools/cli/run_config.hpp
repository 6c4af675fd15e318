#pragma once

#include "degensemi/coefficients.hpp"
#include "degensemi/grid.hpp"

#include <boost/crc.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace degensemi::cli {

/// Textual coefficient description "family:arg,arg,...".
struct FamilySpec {
    std::string family;
    std::vector<double> args;
};

struct ProblemBlock {
    int d = 2;
    double M = 1.0;
    bool quadratic_weight = false;
    FamilySpec Gamma{"constant", {1.0}};
    FamilySpec gamma{"constant", {1.0}};
    FamilySpec drift{"constant", {0.5}};
    double B = -1.0;  ///< negative means "sample"
};

struct DiscretizationBlock {
    int N = 48;
    double grading = 2.0;
    int oned_N = 64;
    int tensor_N = 48;
    int sector_N = 16;
    int perturb_N = 24;
    int freeze_N = 64;
    int corner_m = 16;
};

struct SweepBlock {
    std::vector<double> thetas{0.0, kPi / 6, kPi / 3, 0.49 * kPi};
    std::vector<double> mags{1.0, 4.0, 16.0, 64.0, 256.0, 1024.0};
    std::vector<double> oracle_thetas{0.0, kPi / 4, kPi / 2, 3 * kPi / 4};
    std::vector<double> oracle_mags{1.0, 4.0, 16.0, 64.0, 100.0, 1024.0};
    std::vector<double> oracle_drifts{0.0, 0.5, 1.0};
    std::vector<double> oracle_gammas{1.0, 2.0};
    int oracle_probes = 8;
    int probes = 20;
    std::vector<double> b_fractions{0.0, 0.25, 0.5, 0.75, 1.0};
    double oned_b = 0.5;
    double t_min = 1e-4;
    double t_bar = 1.0;
    int t_count = 12;
    std::vector<double> t_late{1.0, 2.0, 4.0, 8.0};
    double eps_bar = 1.0;
    int interp_levels = 6;
    int trials = 500;
    std::vector<double> sector_rays{0.0, kPi / 4, kPi / 2 - 0.05};
    std::vector<double> sector_mags{1.0, 4.0, 16.0, 64.0, 256.0, 1024.0};
    int boundary_N = 64;
    int boundary_probes = 20;
    double boundary_lambda = 4.0;
    double boundary_t = 0.1;
    double perturb_lambda = 64.0;
    std::vector<double> relative_eps{0.5, 0.1, 0.02};
    double freeze_lambda = 0.0;  ///< 0 means "locate the safe threshold"
    double corner_lambda = 256.0;
    std::vector<double> corner_mutation{0.5};
    std::uint64_t seed = 0xF001;
};

struct EvolveBlock {
    std::vector<double> times{0.0, 0.01, 0.1, 1.0};
    FamilySpec datum{"bump", {0.5, 0.1}};
    std::string scheme = "crank_nicolson";
    int steps = 200;
};

struct OutputBlock {
    std::string dir = "out";
    bool plots = false;
};

struct RunConfig {
    ProblemBlock problem;
    DiscretizationBlock discretization;
    SweepBlock sweep;
    EvolveBlock evolve;
    OutputBlock output;
    std::string source;  ///< raw config bytes, hashed into CSV metadata

    [[nodiscard]] std::string hash() const {
        boost::crc_32_type crc;
        crc.process_bytes(source.data(), source.size());
        char buf[16];
        std::snprintf(buf, sizeof buf, "%08x", crc.checksum());
        return buf;
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t");
    return s.substr(a, b - a + 1);
}

inline double parse_double(const std::string& key, const std::string& text) {
    const std::string t = trim(text);
    if (t == "pi") return kPi;
    try {
        std::size_t used = 0;
        const double v = std::stod(t, &used);
        if (used != t.size()) throw std::invalid_argument(t);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("field " + key + ": '" + text + "' is not a number");
    }
}

inline std::vector<double> parse_list(const std::string& key, const std::string& text) {
    std::vector<double> out;
    if (trim(text).empty()) return out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_double(key, item));
    return out;
}

inline int parse_count(const std::string& key, const std::string& text, int min_value = 1) {
    const double v = parse_double(key, text);
    if (v != static_cast<int>(v) || v < min_value)
        throw ConfigError("field " + key + ": expected an integer >= " + std::to_string(min_value) + ", got '" + text + "'");
    return static_cast<int>(v);
}

inline FamilySpec parse_family(const std::string& key, const std::string& text) {
    const auto colon = text.find(':');
    FamilySpec f;
    f.family = trim(text.substr(0, colon));
    if (colon != std::string::npos) f.args = parse_list(key, text.substr(colon + 1));
    return f;
}

inline std::uint64_t parse_hex(const std::string& key, const std::string& text) {
    std::string t = trim(text);
    if (t.rfind("0x", 0) == 0 || t.rfind("0X", 0) == 0) t = t.substr(2);
    if (t.empty() || t.find_first_not_of("0123456789abcdefABCDEF") != std::string::npos || t.size() > 16)
        throw ConfigError("field " + key + ": '" + text + "' is not a hexadecimal seed");
    return std::stoull(t, nullptr, 16);
}

}  // namespace detail

/// Parses a hex seed such as "F001" or "0xF001".
inline std::uint64_t parse_seed(const std::string& text) { return detail::parse_hex("--seed", text); }

/// Reads the INI text. Unknown sections or keys are rejected.
inline RunConfig parse_config(const std::string& text) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    std::istringstream in(text);
    try {
        pt::ini_parser::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError("line " + std::to_string(e.line()) + ": " + e.message());
    }
    RunConfig c;
    c.source = text;
    using Setter = std::function<void(const std::string&, const std::string&)>;
    auto num = [](double& dst) { return Setter([&dst](const std::string& k, const std::string& v) { dst = detail::parse_double(k, v); }); };
    auto cnt = [](int& dst, int lo = 1) { return Setter([&dst, lo](const std::string& k, const std::string& v) { dst = detail::parse_count(k, v, lo); }); };
    auto lst = [](std::vector<double>& dst) { return Setter([&dst](const std::string& k, const std::string& v) { dst = detail::parse_list(k, v); }); };
    auto fam = [](FamilySpec& dst) { return Setter([&dst](const std::string& k, const std::string& v) { dst = detail::parse_family(k, v); }); };

    auto& P = c.problem;
    auto& D = c.discretization;
    auto& S = c.sweep;
    auto& E = c.evolve;
    auto& O = c.output;
    const std::map<std::string, std::map<std::string, Setter>> schema{
        {"problem",
         {{"d", cnt(P.d)},
          {"M", num(P.M)},
          {"weight",
           [&P](const std::string& k, const std::string& v) {
               const auto w = detail::trim(v);
               if (w == "x") P.quadratic_weight = false;
               else if (w == "x(1-x)") P.quadratic_weight = true;
               else throw ConfigError("field " + k + ": weight must be x or x(1-x), got '" + v + "'");
           }},
          {"Gamma", fam(P.Gamma)},
          {"gamma", fam(P.gamma)},
          {"drift", fam(P.drift)},
          {"B", num(P.B)}}},
        {"discretization",
         {{"N", cnt(D.N, 3)},
          {"grading", num(D.grading)},
          {"oned_N", cnt(D.oned_N, 3)},
          {"tensor_N", cnt(D.tensor_N, 3)},
          {"sector_N", cnt(D.sector_N, 3)},
          {"perturb_N", cnt(D.perturb_N, 3)},
          {"freeze_N", cnt(D.freeze_N, 3)},
          {"corner_m", cnt(D.corner_m, 2)}}},
        {"sweep",
         {{"thetas", lst(S.thetas)},
          {"mags", lst(S.mags)},
          {"oracle_thetas", lst(S.oracle_thetas)},
          {"oracle_mags", lst(S.oracle_mags)},
          {"oracle_drifts", lst(S.oracle_drifts)},
          {"oracle_gammas", lst(S.oracle_gammas)},
          {"oracle_probes", cnt(S.oracle_probes, 0)},
          {"probes", cnt(S.probes, 2)},
          {"b_fractions", lst(S.b_fractions)},
          {"oned_b", num(S.oned_b)},
          {"t_min", num(S.t_min)},
          {"t_bar", num(S.t_bar)},
          {"t_count", cnt(S.t_count)},
          {"t_late", lst(S.t_late)},
          {"eps_bar", num(S.eps_bar)},
          {"interp_levels", cnt(S.interp_levels)},
          {"trials", cnt(S.trials)},
          {"sector_rays", lst(S.sector_rays)},
          {"sector_mags", lst(S.sector_mags)},
          {"boundary_N", cnt(S.boundary_N, 3)},
          {"boundary_probes", cnt(S.boundary_probes)},
          {"boundary_lambda", num(S.boundary_lambda)},
          {"boundary_t", num(S.boundary_t)},
          {"perturb_lambda", num(S.perturb_lambda)},
          {"relative_eps", lst(S.relative_eps)},
          {"freeze_lambda",
           [&S](const std::string& k, const std::string& v) {
               S.freeze_lambda = detail::trim(v) == "auto" ? 0.0 : detail::parse_double(k, v);
           }},
          {"corner_lambda", num(S.corner_lambda)},
          {"corner_mutation", lst(S.corner_mutation)},
          {"seed", [&S](const std::string& k, const std::string& v) { S.seed = detail::parse_hex(k, v); }}}},
        {"evolve",
         {{"times", lst(E.times)},
          {"datum", fam(E.datum)},
          {"scheme", [&E](const std::string&, const std::string& v) { E.scheme = detail::trim(v); }},
          {"steps", cnt(E.steps)}}},
        {"output",
         {{"dir", [&O](const std::string&, const std::string& v) { O.dir = detail::trim(v); }},
          {"plots",
           [&O](const std::string& k, const std::string& v) {
               const auto t = detail::trim(v);
               if (t != "true" && t != "false") throw ConfigError("field " + k + ": expected true or false");
               O.plots = t == "true";
           }}}}};

    for (const auto& [section, body] : tree) {
        const auto sit = schema.find(section);
        if (sit == schema.end()) throw ConfigError("unknown section [" + section + "]");
        if (!body.data().empty()) throw ConfigError("key " + section + " must live inside a section");
        for (const auto& [key, value] : body) {
            const auto kit = sit->second.find(key);
            if (kit == sit->second.end()) throw ConfigError("unknown field " + section + "." + key);
            kit->second(section + "." + key, value.data());
        }
    }

    if (P.d < 1 || P.d > 4) throw ConfigError("field problem.d: dimension must be in [1, 4]");
    if (!(P.M > 0.0)) throw ConfigError("field problem.M: must be positive");
    if (P.quadratic_weight && P.M != 1.0) throw ConfigError("field problem.M: the x(1-x) weight requires M = 1");
    if (!(D.grading >= 1.0)) throw ConfigError("field discretization.grading: must be >= 1");
    for (double m : S.mags)
        if (!(m > 0.0)) throw ConfigError("field sweep.mags: magnitudes must be positive");
    for (double m : S.oracle_mags)
        if (!(m > 0.0)) throw ConfigError("field sweep.oracle_mags: magnitudes must be positive");
    for (double t : S.oracle_thetas)
        if (!(std::abs(t) < kPi)) throw ConfigError("field sweep.oracle_thetas: |theta| must be below pi");
    for (double g : S.oracle_gammas)
        if (!(g > 0.0)) throw ConfigError("field sweep.oracle_gammas: must be positive");
    for (double b : S.oracle_drifts)
        if (b < 0.0) throw ConfigError("field sweep.oracle_drifts: must be nonnegative");
    if (!(S.t_min > 0.0 && S.t_min < S.t_bar)) throw ConfigError("field sweep.t_min: need 0 < t_min < t_bar");
    if (!(S.perturb_lambda > 0.0 && S.corner_lambda > 0.0 && S.freeze_lambda >= 0.0))
        throw ConfigError("field sweep.*_lambda: must be positive");
    for (double t : E.times)
        if (t < 0.0) throw ConfigError("field evolve.times: times must be nonnegative");
    if (E.scheme != "expm" && E.scheme != "crank_nicolson" && E.scheme != "implicit_euler")
        throw ConfigError("field evolve.scheme: expected expm, crank_nicolson or implicit_euler");
    return c;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

// ---------------------------------------------------------------------------
// Coefficient construction.

namespace detail {

inline void need_args(const std::string& what, const FamilySpec& f, std::size_t lo, std::size_t hi) {
    if (f.args.size() < lo || f.args.size() > hi)
        throw ConfigError("field " + what + ": family '" + f.family + "' takes " + std::to_string(lo) +
                          (hi == lo ? "" : "-" + std::to_string(hi)) + " arguments, got " + std::to_string(f.args.size()));
}

inline int tabulated_side(const std::string& what, std::size_t count, int d) {
    const int n = static_cast<int>(std::lround(std::pow(static_cast<double>(count), 1.0 / d)));
    std::size_t expect = 1;
    for (int k = 0; k < d; ++k) expect *= static_cast<std::size_t>(n);
    if (n < 2 || expect != count)
        throw ConfigError("field " + what + ": tabulated values must fill an n^" + std::to_string(d) + " lattice, n >= 2");
    return n;
}

}  // namespace detail

/// Γ: constant:c | linear:c0,c1,...,cd (c0 + Σ c_i x_i) | tabulated:v,... on an n^d lattice.
inline PointFn make_Gamma(const FamilySpec& f, int d, double M) {
    if (f.family == "constant") {
        detail::need_args("problem.Gamma", f, 1, 1);
        return family::constant_point(f.args[0]);
    }
    if (f.family == "linear") {
        detail::need_args("problem.Gamma", f, static_cast<std::size_t>(d) + 1, static_cast<std::size_t>(d) + 1);
        std::vector<family::Monomial> terms{{f.args[0], {}}};
        for (int i = 0; i < d; ++i) {
            std::vector<int> e(static_cast<std::size_t>(d), 0);
            e[static_cast<std::size_t>(i)] = 1;
            terms.push_back({f.args[static_cast<std::size_t>(i) + 1], e});
        }
        return family::polynomial(std::move(terms));
    }
    if (f.family == "tabulated") return family::tabulated(d, detail::tabulated_side("problem.Gamma", f.args.size(), d), M, f.args);
    throw ConfigError("field problem.Gamma: unknown family '" + f.family + "'");
}

/// γ_i (same on every axis): constant:c | polynomial:c0,c1,... | tabulated:v,...
inline LineFn make_gamma(const FamilySpec& f, double M) {
    if (f.family == "constant") {
        detail::need_args("problem.gamma", f, 1, 1);
        return family::constant_line(f.args[0]);
    }
    if (f.family == "polynomial") {
        detail::need_args("problem.gamma", f, 1, 16);
        return family::polynomial_line(f.args);
    }
    if (f.family == "tabulated")
        return family::tabulated_line(detail::tabulated_side("problem.gamma", f.args.size(), 1), M, f.args);
    throw ConfigError("field problem.gamma: unknown family '" + f.family + "'");
}

/// b_i: constant:v or constant:v_1,...,v_d | sqrt:kappa,omega | mutation:a_1,...,a_d.
inline std::vector<PointFn> make_drift(const FamilySpec& f, int d, double M) {
    std::vector<PointFn> b;
    if (f.family == "constant") {
        if (f.args.size() != 1 && f.args.size() != static_cast<std::size_t>(d))
            throw ConfigError("field problem.drift: constant takes 1 or d values");
        for (int i = 0; i < d; ++i) b.push_back(family::constant_point(f.args.size() == 1 ? f.args[0] : f.args[static_cast<std::size_t>(i)]));
        return b;
    }
    if (f.family == "sqrt") {
        detail::need_args("problem.drift", f, 2, 2);
        for (int i = 0; i < d; ++i) b.push_back(family::separable_sqrt_drift(i, f.args[0], f.args[1], M));
        return b;
    }
    if (f.family == "mutation") {
        if (f.args.size() != static_cast<std::size_t>(d)) throw ConfigError("field problem.drift: mutation takes d rates");
        if (M != 1.0) throw ConfigError("field problem.drift: mutation drift requires M = 1");
        for (int i = 0; i < d; ++i) b.push_back(family::mutation_drift(i, f.args));
        return b;
    }
    throw ConfigError("field problem.drift: unknown family '" + f.family + "'");
}

/// Builds the coefficient field; precondition failures become config errors.
inline CoefficientField make_field(const ProblemBlock& p) {
    try {
        return make_coefficient_field(p.d, p.M, make_Gamma(p.Gamma, p.d, p.M),
                                      std::vector<LineFn>(static_cast<std::size_t>(p.d), make_gamma(p.gamma, p.M)),
                                      make_drift(p.drift, p.d, p.M), p.quadratic_weight,
                                      p.B >= 0.0 ? std::optional<double>(p.B) : std::nullopt);
    } catch (const PreconditionError& e) {
        throw ConfigError(std::string("problem: ") + e.what());
    }
}

}  // namespace degensemi::cli
