#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace degensemi {

using cplx = std::complex<double>;
using RealVec = Eigen::VectorXd;
using CplxVec = Eigen::VectorXcd;
using SparseReal = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using SparseCplx = Eigen::SparseMatrix<cplx>;

inline constexpr double kPi = std::numbers::pi;

// Error hierarchy. The CLI maps these onto exit codes 1 (usage/config) and
// 3 (numerical breakdown); estimate failures are verdicts, not exceptions.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input violates an operation's precondition.
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// Linear solve breakdown or non-convergent series.
class NumericalError : public Error {
public:
    NumericalError(const std::string& what, double diagnostic)
        : Error(what), diagnostic_(diagnostic) {}
    [[nodiscard]] double diagnostic() const noexcept { return diagnostic_; }

private:
    double diagnostic_;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

template <typename Vec>
[[nodiscard]] double sup_norm(const Vec& v) {
    return v.size() == 0 ? 0.0 : static_cast<double>(v.cwiseAbs().maxCoeff());
}

// Deterministic RNG: draws are derived from raw 64-bit outputs so that the
// sequence does not depend on the standard library's distribution classes.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9E3779B97F4A7C15ull) {}

    std::uint64_t next() {
        // splitmix64
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double sign() { return (next() >> 63) ? 1.0 : -1.0; }
    int below(int n) { return static_cast<int>(next() % static_cast<std::uint64_t>(n)); }

    Rng split(std::uint64_t stream) { return Rng(next() ^ (stream * 0xD1B54A32D192ED03ull)); }

private:
    std::uint64_t state_;
};

// Runs fn(i) for i in [0, n) on up to `jobs` threads. Each index writes only
// into its own output slot, so results do not depend on scheduling.
inline void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
    if (jobs <= 1 || n <= 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    const int workers = std::min(jobs, n);
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([=, &fn] {
            for (int i = w; i < n; i += workers) fn(i);
        });
    }
}

inline std::vector<double> linspace(double a, double b, int n) {
    std::vector<double> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        out[static_cast<std::size_t>(i)] = n == 1 ? a : a + (b - a) * i / (n - 1);
    return out;
}

inline std::vector<double> logspace(double a, double b, int n) {
    auto e = linspace(std::log(a), std::log(b), n);
    for (auto& v : e) v = std::exp(v);
    return e;
}

}  // namespace degensemi
