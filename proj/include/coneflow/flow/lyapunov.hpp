#ifndef CONEFLOW_FLOW_LYAPUNOV_HPP
#define CONEFLOW_FLOW_LYAPUNOV_HPP

#include "coneflow/common.hpp"
#include "coneflow/flow/integrate.hpp"
#include "coneflow/flow/model.hpp"

#include <algorithm>
#include <numeric>

namespace coneflow {

struct LyapunovOptions {
    Index k = -1;             // number of exponents (-1 = all)
    double t_transient = 0.0; // settle time before accumulation starts
    double chunk = 0.5;       // initial renormalization interval
    std::uint64_t seed = 0;   // 0 = canonical axis-aligned initial frame
    double drift_tol = 5e-3;  // convergence: running-average wobble over the last quarter
    IntegratorOptions integrator{};
};

struct LyapunovResult {
    std::vector<double> exponents;  // descending
    bool converged = false;
    double drift = 0.0;             // max running-average deviation, last quarter
    double t_accumulated = 0.0;
    long renorm_count = 0;
    std::vector<double> history_times;            // after each renormalization
    std::vector<std::vector<double>> history;     // running estimates at those times
};

// ---------------------------------------------------------------------------
// Classic Benettin scheme: integrate the state jointly with k tangent vectors,
// re-orthonormalize by QR at the end of each chunk, accumulate log |R_ii|.
// The chunk length adapts to keep the tangent growth per chunk moderate.
// ---------------------------------------------------------------------------
inline LyapunovResult lyapunov_exponents(const VectorFieldModel& model, const Vector& x0,
                                         double t_total, const LyapunovOptions& options = {}) {
    const Index n = model.dim();
    if (x0.size() != n) throw BadDimension("initial point dimension mismatch");
    const Index k = options.k < 0 ? n : options.k;
    if (k < 1 || k > n) throw BadDimension("exponent count out of range");
    if (!(t_total > 0.0)) throw BadDimension("accumulation time must be positive");

    Vector x = x0;
    IntegratorOptions opts = options.integrator;
    opts.dense = false;
    if (options.t_transient > 0.0) x = integrate(model, x, options.t_transient, opts).final_state();

    // Initial frame: seed 0 picks the first k coordinate axes, which keeps
    // axis-aligned model problems exactly decoupled; otherwise a seeded random
    // orthonormal frame.
    Matrix q(n, k);
    if (options.seed == 0) {
        q.setZero();
        for (Index i = 0; i < k; ++i) q(i, i) = 1.0;
    } else {
        Rng rng(options.seed);
        Matrix w(n, k);
        for (Index j = 0; j < k; ++j) w.col(j) = rng.normal_vector(n);
        Eigen::HouseholderQR<Matrix> qr(w);
        q = qr.householderQ() * Matrix::Identity(n, k);
    }

    auto rhs = detail::joint_rhs(model, n, k);

    LyapunovResult res;
    std::vector<double> sums(static_cast<std::size_t>(k), 0.0);
    double t_acc = 0.0;
    double chunk = options.chunk;
    const double chunk_min = std::max(1e-4, t_total * 1e-6);

    Vector y(n + n * k);
    while (t_acc < t_total) {
        const double dt = std::min(chunk, t_total - t_acc);
        y.head(n) = x;
        Eigen::Map<Matrix>(y.data() + n, n, k) = q;
        double t_done = 0.0;
        dopri5_drive(rhs, 0.0, dt, y, opts,
                     [&](double t, double, const Vector&, const Vector&, const dp5::Stages&) {
                         t_done = t;
                     });
        (void)t_done;
        x = y.head(n);
        Matrix v = Eigen::Map<Matrix>(y.data() + n, n, k);

        Eigen::HouseholderQR<Matrix> qr(v);
        Matrix qfull = qr.householderQ() * Matrix::Identity(n, k);
        const Matrix r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
        double rmax = 0.0, rmin = std::numeric_limits<double>::infinity();
        for (Index i = 0; i < k; ++i) {
            double rii = r(i, i);
            if (rii < 0.0) {  // fix QR sign so the frame varies continuously
                qfull.col(i) = -qfull.col(i);
                rii = -rii;
            }
            if (!(rii > 0.0)) throw NoConvergence("tangent frame collapsed during QR renormalization");
            sums[static_cast<std::size_t>(i)] += std::log(rii);
            rmax = std::max(rmax, rii);
            rmin = std::min(rmin, rii);
        }
        q = qfull;
        t_acc += dt;
        ++res.renorm_count;

        res.history_times.push_back(t_acc);
        std::vector<double> est(static_cast<std::size_t>(k));
        for (Index i = 0; i < k; ++i) est[static_cast<std::size_t>(i)] = sums[static_cast<std::size_t>(i)] / t_acc;
        // Report the estimated spectrum in descending order. Generic frames
        // produce that ordering on their own; a non-generic frame (e.g. the
        // canonical axes on an axis-aligned system) can lock columns to a
        // permutation of it.
        std::sort(est.begin(), est.end(), std::greater<>());
        res.history.push_back(std::move(est));

        // Keep per-chunk magnification within a comfortable window so the QR
        // stays well conditioned without renormalizing more than necessary.
        if (rmax > 1e3 || (rmin > 0.0 && rmax / rmin > 1e6)) {
            chunk = std::max(chunk * 0.5, chunk_min);
        } else if (rmax < 10.0 && chunk < t_total / 16.0) {
            chunk *= 1.4;
        }
    }

    res.t_accumulated = t_acc;
    res.exponents.resize(static_cast<std::size_t>(k));
    for (Index i = 0; i < k; ++i) res.exponents[static_cast<std::size_t>(i)] = sums[static_cast<std::size_t>(i)] / t_acc;
    std::sort(res.exponents.begin(), res.exponents.end(), std::greater<>());

    // Drift diagnostic: how much the running estimates still move over the
    // last quarter of the accumulation window, relative to the exponent scale.
    double drift = 0.0;
    if (res.history.size() >= 8) {
        const std::size_t start = res.history.size() - res.history.size() / 4;
        double scale = 1.0;
        for (double e : res.exponents) scale = std::max(scale, std::abs(e));
        for (std::size_t s = start; s < res.history.size(); ++s)
            for (Index i = 0; i < k; ++i)
                drift = std::max(drift, std::abs(res.history[s][static_cast<std::size_t>(i)] -
                                                 res.exponents[static_cast<std::size_t>(i)]) / scale);
    } else {
        drift = std::numeric_limits<double>::infinity();
    }
    res.drift = drift;
    res.converged = drift <= options.drift_tol;
    return res;
}

}  // namespace coneflow

#endif
