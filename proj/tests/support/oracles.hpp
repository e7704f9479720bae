#ifndef CONEFLOW_TESTS_ORACLES_HPP
#define CONEFLOW_TESTS_ORACLES_HPP

// Independent reference computations for the test suite. Everything here is
// deliberately implemented with different algorithms than the library under
// test (dense eigensolvers, exhaustive sampling, series-based matrix
// exponentials) so agreement actually means something.

#include "coneflow/common.hpp"
#include "coneflow/quadratic_form.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <optional>
#include <vector>

namespace testsupport {

using coneflow::Index;
using coneflow::Matrix;
using coneflow::Rng;
using coneflow::Vector;

/// Matrix exponential (Pade/scaling-squaring from Eigen's unsupported module;
/// the library itself never calls this).
inline Matrix expm(const Matrix& a) { return a.exp(); }

// ---------------------------------------------------------------------------
// Brute-force separation margin: max over a lambda grid of the sampled
// minimum of J(Lv) - lambda J(v) on the unit sphere. The sampled minimum is
// an upper bound of the true minimum, so verdict comparisons need a band.
// ---------------------------------------------------------------------------
struct SampledSeparation {
    double best_margin = 0.0;  // max over lambda of sampled min
    double best_lambda = 0.0;
};

inline SampledSeparation sampled_separation(const Matrix& j, const Matrix& l,
                                            std::size_t n_samples, Rng& rng) {
    const Index n = j.rows();
    std::vector<Vector> dirs;
    dirs.reserve(n_samples);
    for (std::size_t s = 0; s < n_samples; ++s) dirs.push_back(rng.unit_vector(n));

    // Precompute both quadratic values per direction.
    std::vector<double> g0(n_samples), d0(n_samples);
    for (std::size_t s = 0; s < n_samples; ++s) {
        const Vector lv = l * dirs[s];
        g0[s] = lv.dot(j * lv);
        d0[s] = dirs[s].dot(j * dirs[s]);
    }

    SampledSeparation out;
    out.best_margin = -std::numeric_limits<double>::infinity();
    // Log-spaced lambda grid plus zero; the optimum lambda of a separated
    // instance is finite and positive, and the margin is concave in lambda.
    std::vector<double> lambdas{0.0};
    for (int e = -60; e <= 60; ++e) lambdas.push_back(std::pow(10.0, e / 10.0));
    for (double lam : lambdas) {
        double mn = std::numeric_limits<double>::infinity();
        for (std::size_t s = 0; s < n_samples; ++s) mn = std::min(mn, g0[s] - lam * d0[s]);
        if (mn > out.best_margin) {
            out.best_margin = mn;
            out.best_lambda = lam;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reference pencil window {r : F - rJ >= 0} via generalized eigenvalues.
// The window is an interval whose endpoints make F - rJ singular, i.e. are
// real generalized eigenvalues of (F, J). Candidates come from Eigen's QZ
// solver; positive semidefiniteness is then verified directly between and at
// candidates. Returns nullopt when no r keeps the pencil nonnegative.
// ---------------------------------------------------------------------------
struct PencilWindow {
    double lower = 0.0;
    double upper = 0.0;
};

inline std::optional<PencilWindow> pencil_window_reference(const Matrix& j, const Matrix& f) {
    const Index n = j.rows();
    Eigen::GeneralizedEigenSolver<Matrix> ges;
    ges.compute(f, j, false);
    std::vector<double> cands;
    for (Index i = 0; i < n; ++i) {
        const std::complex<double> alpha = ges.alphas()[i];
        const double beta = ges.betas()[i];
        if (std::abs(beta) < 1e-14 * std::max(1.0, std::abs(alpha))) continue;  // infinite
        const std::complex<double> mu = alpha / beta;
        if (std::abs(mu.imag()) > 1e-10 * (1.0 + std::abs(mu.real()))) continue;  // complex pair
        cands.push_back(mu.real());
    }
    std::sort(cands.begin(), cands.end());

    const auto psd = [&](double r) {
        Eigen::SelfAdjointEigenSolver<Matrix> es(f - r * j);
        const double scale = std::max(1.0, f.cwiseAbs().maxCoeff() +
                                               std::abs(r) * j.cwiseAbs().maxCoeff());
        return es.eigenvalues().minCoeff() >= -1e-9 * scale;
    };

    // Probe midpoints of the segments cut by the candidates (plus outward
    // probes); the feasible set is one of those segments closed by its
    // endpoint eigenvalues.
    std::vector<double> probes;
    if (cands.empty()) {
        probes.push_back(0.0);
    } else {
        probes.push_back(cands.front() - 1.0);
        for (std::size_t i = 0; i + 1 < cands.size(); ++i)
            probes.push_back(0.5 * (cands[i] + cands[i + 1]));
        probes.push_back(cands.back() + 1.0);
        for (double c : cands) probes.push_back(c);  // degenerate (touching) windows
    }
    for (double p : probes) {
        if (!psd(p)) continue;
        // Feasible point found: the window endpoints are the nearest
        // candidates enclosing it (or the candidate itself if degenerate).
        double lo = -std::numeric_limits<double>::infinity();
        double hi = std::numeric_limits<double>::infinity();
        for (double c : cands) {
            if (c <= p) lo = std::max(lo, c);
            if (c >= p) hi = std::min(hi, c);
        }
        if (!std::isfinite(lo) || !std::isfinite(hi)) continue;  // unbounded: J semidefinite
        return PencilWindow{lo, hi};
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Sampled cone quotient extremes: sup of F(v)/J(v) over sampled J-negative
// directions and inf over J-positive ones. Coarse (sampling) but a useful
// sanity cross-check on top of the eigenvalue-based window above.
// ---------------------------------------------------------------------------
struct QuotientExtremes {
    double sup_negative = -std::numeric_limits<double>::infinity();
    double inf_positive = std::numeric_limits<double>::infinity();
};

inline QuotientExtremes sampled_quotients(const Matrix& j, const Matrix& f,
                                          std::size_t n_samples, Rng& rng) {
    const Index n = j.rows();
    QuotientExtremes out;
    for (std::size_t s = 0; s < n_samples; ++s) {
        const Vector v = rng.unit_vector(n);
        const double jv = v.dot(j * v);
        if (std::abs(jv) < 1e-6) continue;  // too close to the null cone
        const double q = v.dot(f * v) / jv;
        if (jv < 0.0)
            out.sup_negative = std::max(out.sup_negative, q);
        else
            out.inf_positive = std::min(out.inf_positive, q);
    }
    return out;
}

}  // namespace testsupport

#endif
