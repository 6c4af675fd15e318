#pragma once

#include "degensemi/common.hpp"

#include <span>

namespace degensemi {

using LinearMap = std::function<CplxVec(const CplxVec&)>;

/// Largest dimension for which operator norms are computed exactly from columns.
inline constexpr Eigen::Index kExactNormLimit = 400;

/// Constant, alternating and random ±1 vectors.
inline std::vector<CplxVec> sign_probes(Eigen::Index n, int count, Rng& rng) {
    std::vector<CplxVec> out;
    out.emplace_back(CplxVec::Ones(n));
    CplxVec alt(n);
    for (Eigen::Index i = 0; i < n; ++i) alt(i) = (i % 2) ? -1.0 : 1.0;
    out.push_back(alt);
    for (int k = 2; k < count; ++k) {
        CplxVec v(n);
        for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.sign();
        out.push_back(std::move(v));
    }
    return out;
}

/// ‖T‖∞→∞ = max row sum of |T_ij|, from the n columns T e_j.
inline double exact_inf_norm(const LinearMap& T, Eigen::Index n, int jobs = 1) {
    Eigen::MatrixXd absT(n, n);
    parallel_for(static_cast<int>(n), jobs, [&](int j) {
        CplxVec e = CplxVec::Zero(n);
        e(j) = 1.0;
        absT.col(j) = T(e).cwiseAbs();
    });
    return n == 0 ? 0.0 : absT.rowwise().sum().maxCoeff();
}

/// max_p ‖T p‖∞ / ‖p‖∞ over probes: a lower bound for ‖T‖∞→∞.
inline double probe_inf_norm(const LinearMap& T, std::span<const CplxVec> probes, int jobs = 1) {
    std::vector<double> r(probes.size(), 0.0);
    parallel_for(static_cast<int>(probes.size()), jobs, [&](int k) {
        const auto& p = probes[static_cast<std::size_t>(k)];
        const double pn = sup_norm(p);
        if (pn > 0.0) r[static_cast<std::size_t>(k)] = sup_norm(T(p)) / pn;
    });
    return r.empty() ? 0.0 : *std::max_element(r.begin(), r.end());
}

/// Exact norm up to kExactNormLimit unknowns, probe estimate above.
inline double inf_norm(const LinearMap& T, Eigen::Index n, Rng& rng, int nprobe = 16, int jobs = 1) {
    if (n <= kExactNormLimit) return exact_inf_norm(T, n, jobs);
    const auto probes = sign_probes(n, nprobe, rng);
    return probe_inf_norm(T, probes, jobs);
}

}  // namespace degensemi
