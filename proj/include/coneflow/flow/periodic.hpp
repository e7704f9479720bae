#ifndef CONEFLOW_FLOW_PERIODIC_HPP
#define CONEFLOW_FLOW_PERIODIC_HPP

#include "coneflow/common.hpp"
#include "coneflow/flow/equilibria.hpp"
#include "coneflow/flow/integrate.hpp"
#include "coneflow/flow/model.hpp"

#include <complex>
#include <limits>

namespace coneflow {

/// Affine section {x : normal . x = offset}.
struct SectionPlane {
    Vector normal;
    double offset = 0.0;

    double side(const Vector& x) const { return normal.dot(x) - offset; }

    static SectionPlane through(const Vector& normal, const Vector& point) {
        return SectionPlane{normal, normal.dot(point)};
    }
};

struct PeriodicOrbit {
    Vector anchor;       // point on the orbit (on the section)
    double period = 0.0;
    std::vector<std::complex<double>> multipliers;  // nontrivial, sorted by |mu| desc
    Index index = 0;                                // multipliers inside the unit circle
    bool hyperbolic = false;
    double residual = 0.0;       // |X_T(anchor) - anchor|
    Matrix monodromy;            // full period map DX_T(anchor), trivial direction included
    double trivial_defect = 0.0; // |mu_trivial - 1|
    long monodromy_steps = 0;
};

// ---------------------------------------------------------------------------
// Close-return scan: candidate (point, period) pairs harvested from
// same-direction section crossings of a single long trajectory. Used to seed
// the Newton shooting below.
// ---------------------------------------------------------------------------
struct CloseReturn {
    Vector point;
    double period = 0.0;
    double distance = 0.0;
};

inline std::vector<CloseReturn> close_returns(const VectorFieldModel& model, const Vector& x0,
                                              double t_transient, double t_scan,
                                              const SectionPlane& section, double min_period = 0.1,
                                              std::size_t max_candidates = 16,
                                              const IntegratorOptions& opts_in = {}) {
    IntegratorOptions opts = opts_in;
    Vector start = x0;
    if (t_transient > 0.0) {
        opts.dense = false;
        start = integrate(model, x0, t_transient, opts).final_state();
    }
    opts.dense = true;
    const Trajectory traj = integrate(model, start, t_scan, opts);
    if (!traj.dense) throw Error("close-return scan requires dense output");

    // Collect upward section crossings (side changes - to +) via bisection on
    // the dense interpolant.
    std::vector<double> tcross;
    std::vector<Vector> pcross;
    for (std::size_t i = 0; i + 1 < traj.times.size(); ++i) {
        const double s0 = section.side(traj.states[i]);
        const double s1 = section.side(traj.states[i + 1]);
        if (s0 < 0.0 && s1 >= 0.0) {
            double lo = traj.times[i], hi = traj.times[i + 1];
            for (int it = 0; it < 80; ++it) {
                const double mid = 0.5 * (lo + hi);
                (section.side(traj.dense->eval(mid)) < 0.0 ? lo : hi) = mid;
            }
            const double tc = 0.5 * (lo + hi);
            tcross.push_back(tc);
            pcross.push_back(traj.dense->eval(tc));
        }
    }

    std::vector<CloseReturn> cands;
    for (std::size_t i = 0; i < tcross.size(); ++i) {
        for (std::size_t j = i + 1; j < tcross.size(); ++j) {
            const double dt = tcross[j] - tcross[i];
            if (dt < min_period) continue;
            cands.push_back(CloseReturn{pcross[i], dt, (pcross[i] - pcross[j]).norm()});
        }
    }
    std::sort(cands.begin(), cands.end(), [](const CloseReturn& a, const CloseReturn& b) {
        if (a.distance != b.distance) return a.distance < b.distance;
        return a.period < b.period;
    });
    if (cands.size() > max_candidates) cands.resize(max_candidates);
    return cands;
}

// ---------------------------------------------------------------------------
// Newton shooting for a periodic orbit. Unknowns: the in-section displacement
// (n-1 coordinates) and the period; residual X_T(x) - x. The Jacobian columns
// come from the period-map cocycle and the flow direction at the endpoint.
// ---------------------------------------------------------------------------
/// Build the orbit record for a known (anchor, period) pair: monodromy,
/// trivial-multiplier removal, index and hyperbolicity flags. Useful on its
/// own when the orbit is known analytically (or is non-isolated, where the
/// shooting Jacobian is singular by construction).
inline PeriodicOrbit classify_orbit(const VectorFieldModel& model, const Vector& anchor,
                                    double period, double residual = 0.0,
                                    double trivial_tol = 1e-4, double unit_circle_tol = 1e-6,
                                    long monodromy_steps = 8192) {
    const Index n = model.dim();
    if (anchor.size() != n) throw BadDimension("anchor dimension mismatch");
    if (period <= 0.0) throw BadDimension("period must be positive");

    PeriodicOrbit orbit;
    orbit.anchor = anchor;
    orbit.period = period;
    orbit.residual = residual;
    orbit.monodromy_steps = monodromy_steps;

    const MonodromyResult mono = monodromy(model, anchor, period, monodromy_steps);
    orbit.monodromy = mono.m;

    Eigen::EigenSolver<Matrix> es(orbit.monodromy);
    std::vector<std::complex<double>> mults(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) mults[static_cast<std::size_t>(i)] = es.eigenvalues()[i];
    // Remove the single trivial multiplier (flow direction). Anything farther
    // than trivial_tol from 1 means the orbit data cannot be trusted.
    std::size_t trivial = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < mults.size(); ++i) {
        const double d = std::abs(mults[i] - std::complex<double>(1.0, 0.0));
        if (d < best) {
            best = d;
            trivial = i;
        }
    }
    if (best > trivial_tol)
        throw SuspectOrbit("no Floquet multiplier within " + std::to_string(trivial_tol) +
                           " of 1 (closest defect " + std::to_string(best) + ")");
    orbit.trivial_defect = best;
    mults.erase(mults.begin() + static_cast<std::ptrdiff_t>(trivial));
    std::sort(mults.begin(), mults.end(), [](const auto& a, const auto& b) {
        const double ma = std::abs(a), mb = std::abs(b);
        if (ma != mb) return ma > mb;
        if (a.real() != b.real()) return a.real() > b.real();
        return a.imag() < b.imag();
    });
    orbit.multipliers = std::move(mults);
    orbit.index = 0;
    orbit.hyperbolic = true;
    for (const auto& mu : orbit.multipliers) {
        const double mod = std::abs(mu);
        if (mod < 1.0) ++orbit.index;
        if (std::abs(mod - 1.0) <= unit_circle_tol) orbit.hyperbolic = false;
    }
    return orbit;
}

inline PeriodicOrbit find_periodic_orbit(const VectorFieldModel& model, const SectionPlane& section,
                                         const Vector& guess_point, double guess_period,
                                         double newton_tol = 1e-12, int max_iter = 60,
                                         double trivial_tol = 1e-4, double unit_circle_tol = 1e-6,
                                         long monodromy_steps = 8192,
                                         const IntegratorOptions& opts_in = {}) {
    const Index n = model.dim();
    if (section.normal.size() != n || guess_point.size() != n)
        throw BadDimension("section/guess dimension mismatch");
    if (guess_period <= 0.0) throw BadDimension("guess period must be positive");

    {
        const Vector fx = model.eval(guess_point);
        const double transversality =
            std::abs(section.normal.dot(fx)) / (section.normal.norm() * std::max(fx.norm(), 1e-300));
        if (transversality < 1e-8)
            throw NonTransverseSection("flow is tangent to the section at the guess point");
    }

    // Orthonormal basis of the section's tangent space.
    Matrix bs;
    {
        Eigen::FullPivHouseholderQR<Matrix> qr(Matrix(section.normal));
        bs = qr.matrixQ().rightCols(n - 1);
    }
    // Project the guess exactly onto the section.
    Vector x_ref = guess_point - section.normal * (section.side(guess_point) / section.normal.squaredNorm());

    IntegratorOptions opts = opts_in;
    opts.dense = false;

    Vector xi = Vector::Zero(n - 1);
    double period = guess_period;
    double residual = std::numeric_limits<double>::infinity();
    Vector x = x_ref;

    for (int it = 0; it < max_iter; ++it) {
        x = x_ref + bs * xi;
        const CocycleSegment seg = tangent_cocycle(model, x, period, opts);
        const Vector r = seg.end_point - x;
        residual = r.norm();
        if (residual <= newton_tol * std::max(1.0, x.norm())) break;

        Matrix jac(n, n);
        jac.leftCols(n - 1) = (seg.fundamental - Matrix::Identity(n, n)) * bs;
        jac.col(n - 1) = model.eval(seg.end_point);
        Eigen::FullPivLU<Matrix> lu(jac);
        if (!lu.isInvertible())
            throw NoConvergence("singular shooting Jacobian (orbit may be non-isolated)");
        const Vector delta = lu.solve(-r);

        double lam = 1.0;
        bool accepted = false;
        for (int bt = 0; bt < 10; ++bt) {
            const Vector xi_c = xi + lam * delta.head(n - 1);
            const double t_c = period + lam * delta[n - 1];
            if (t_c > 0.05 * guess_period && t_c < 20.0 * guess_period) {
                const Vector xc = x_ref + bs * xi_c;
                const double rc = (integrate(model, xc, t_c, opts).final_state() - xc).norm();
                if (rc < (1.0 - 0.25 * lam) * residual) {
                    xi = xi_c;
                    period = t_c;
                    accepted = true;
                    break;
                }
            }
            lam *= 0.5;
        }
        // No step improves the residual: we are at the integration noise
        // floor. The acceptance check below decides whether that is good
        // enough.
        if (!accepted) break;
    }
    x = x_ref + bs * xi;
    // The residual cannot drop below the integrator's own error, so accept
    // down to a multiple of rtol even when newton_tol asks for more.
    const double floor_tol = 100.0 * std::max(opts.rtol, 1e-13);
    const double accept = std::max(10.0 * newton_tol, floor_tol) * std::max(1.0, x.norm());
    if (!(residual <= accept)) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.3e (acceptance %.3e)", residual, accept);
        throw NoConvergence(std::string("shooting stalled at residual ") + buf);
    }

    return classify_orbit(model, x, period, residual, trivial_tol, unit_circle_tol,
                          monodromy_steps);
}

/// Convenience: scan for close returns and polish the best candidates until
/// one converges. Candidates are tried in order of increasing return distance.
inline PeriodicOrbit find_shortest_orbit(const VectorFieldModel& model, const Vector& x0,
                                         const SectionPlane& section, double t_transient,
                                         double t_scan, double min_period = 0.1,
                                         double newton_tol = 1e-12,
                                         long monodromy_steps = 8192) {
    const auto cands = close_returns(model, x0, t_transient, t_scan, section, min_period);
    if (cands.empty()) throw NoConvergence("no close returns found in the scan window");
    std::string last_err = "no candidates tried";
    // Prefer the shortest candidate period among good returns: sort the top
    // candidates by period, keeping only returns within 4x the best distance.
    std::vector<CloseReturn> pool = cands;
    const double dcut = 4.0 * std::max(cands.front().distance, 1e-6);
    pool.erase(std::remove_if(pool.begin(), pool.end(),
                              [&](const CloseReturn& c) { return c.distance > dcut; }),
               pool.end());
    std::sort(pool.begin(), pool.end(),
              [](const CloseReturn& a, const CloseReturn& b) { return a.period < b.period; });
    for (const auto& cand : pool) {
        try {
            return find_periodic_orbit(model, section, cand.point, cand.period, newton_tol, 60,
                                       1e-4, 1e-6, monodromy_steps);
        } catch (const Error& e) {
            last_err = e.what();
        }
    }
    throw NoConvergence("no close-return candidate converged; last failure: " + last_err);
}

}  // namespace coneflow

#endif
