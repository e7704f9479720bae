#ifndef CONEFLOW_FLOW_EQUILIBRIA_HPP
#define CONEFLOW_FLOW_EQUILIBRIA_HPP

#include "coneflow/common.hpp"
#include "coneflow/flow/model.hpp"

#include <complex>
#include <limits>

namespace coneflow {

struct Equilibrium {
    Vector point;
    std::vector<std::complex<double>> eigenvalues;  // sorted by (Re, Im)
    Index index = 0;                                // count of Re < 0
    bool hyperbolic = false;
    double residual = 0.0;  // |X(point)|
};

struct EquilibriumSearch {
    std::vector<Equilibrium> found;          // deduplicated, sorted by coordinates
    std::vector<Index> failed_seeds;         // seed indices where Newton stalled
};

namespace detail {

inline std::vector<std::complex<double>> sorted_spectrum(const Matrix& a) {
    Eigen::EigenSolver<Matrix> es(a);
    std::vector<std::complex<double>> ev(static_cast<std::size_t>(a.rows()));
    for (Index i = 0; i < a.rows(); ++i) ev[static_cast<std::size_t>(i)] = es.eigenvalues()[i];
    std::sort(ev.begin(), ev.end(), [](const auto& l, const auto& r) {
        if (l.real() != r.real()) return l.real() < r.real();
        return l.imag() < r.imag();
    });
    return ev;
}

}  // namespace detail

/// Classify a known equilibrium point: spectrum, index, hyperbolicity.
inline Equilibrium classify_equilibrium(const VectorFieldModel& model, const Vector& point,
                                        double spectral_tol = 1e-6,
                                        double residual_tol = 1e-8) {
    Equilibrium eq;
    eq.point = point;
    eq.residual = model.eval(point).norm();
    if (eq.residual > residual_tol * std::max(1.0, point.norm()))
        throw NotEquilibrium("field does not vanish at the given point");
    eq.eigenvalues = detail::sorted_spectrum(model.jacobian(point));
    double min_abs_re = std::numeric_limits<double>::infinity();
    for (const auto& ev : eq.eigenvalues) {
        if (ev.real() < 0) ++eq.index;
        min_abs_re = std::min(min_abs_re, std::abs(ev.real()));
    }
    eq.hyperbolic = min_abs_re > spectral_tol;
    return eq;
}

/// Damped Newton refinement of the seeds, followed by deduplication. Seeds
/// that do not converge are reported by index, not thrown.
inline EquilibriumSearch find_equilibria(const VectorFieldModel& model,
                                         const std::vector<Vector>& seeds,
                                         double newton_tol = 1e-12, double dedupe_radius = 1e-6,
                                         int max_iter = 100, double spectral_tol = 1e-6) {
    EquilibriumSearch out;
    for (std::size_t sidx = 0; sidx < seeds.size(); ++sidx) {
        Vector x = seeds[sidx];
        if (x.size() != model.dim()) throw BadDimension("seed dimension mismatch");
        bool converged = false;
        for (int it = 0; it < max_iter; ++it) {
            const Vector fx = model.eval(x);
            const double r = fx.norm();
            if (r <= newton_tol * std::max(1.0, x.norm())) {
                converged = true;
                break;
            }
            const Matrix jac = model.jacobian(x);
            Eigen::FullPivLU<Matrix> lu(jac);
            if (!lu.isInvertible()) break;
            const Vector delta = lu.solve(-fx);
            double lam = 1.0;
            bool accepted = false;
            for (int bt = 0; bt < 8; ++bt) {
                const Vector cand = x + lam * delta;
                if (model.eval(cand).norm() < (1.0 - 0.25 * lam) * r) {
                    x = cand;
                    accepted = true;
                    break;
                }
                lam *= 0.5;
            }
            if (!accepted) {
                x += delta;  // full step anyway: near-degenerate basins may dip later
            }
        }
        if (!converged) {
            out.failed_seeds.push_back(static_cast<Index>(sidx));
            continue;
        }
        bool duplicate = false;
        for (const auto& eq : out.found)
            if ((eq.point - x).norm() <= dedupe_radius) {
                duplicate = true;
                break;
            }
        if (!duplicate) out.found.push_back(classify_equilibrium(model, x, spectral_tol));
    }
    std::sort(out.found.begin(), out.found.end(), [](const Equilibrium& a, const Equilibrium& b) {
        for (Index i = 0; i < a.point.size(); ++i)
            if (a.point[i] != b.point[i]) return a.point[i] < b.point[i];
        return false;
    });
    return out;
}

}  // namespace coneflow

#endif
