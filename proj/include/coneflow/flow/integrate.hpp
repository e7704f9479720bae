#ifndef CONEFLOW_FLOW_INTEGRATE_HPP
#define CONEFLOW_FLOW_INTEGRATE_HPP

#include "coneflow/common.hpp"
#include "coneflow/flow/model.hpp"

#include <functional>
#include <limits>
#include <utility>

namespace coneflow {

struct IntegratorOptions {
    double rtol = 1e-9;
    double atol = 1e-12;
    double h_init = 0.0;       // 0: choose automatically
    double h_max = 0.0;        // 0: no cap beyond the interval length
    long max_steps = 50000000;
    bool dense = false;        // retain interpolation coefficients
};

struct IntegratorStats {
    long steps = 0;
    long rejected = 0;
    double last_h = 0.0;
};

// ---------------------------------------------------------------------------
// Dormand-Prince 5(4) with the classic quartic dense-output interpolant.
// One accepted step stores five coefficient vectors; evaluation at
// theta = (t - t0)/h is a Horner-style nest.
// ---------------------------------------------------------------------------

struct DenseSegment {
    double t0 = 0.0;
    double h = 0.0;
    Matrix rcont;  // n x 5

    Vector eval(double t) const {
        const double th = (t - t0) / h;
        const double th1 = 1.0 - th;
        return rcont.col(0) +
               th * (rcont.col(1) + th1 * (rcont.col(2) + th * (rcont.col(3) + th1 * rcont.col(4))));
    }
};

class DenseOutput {
public:
    void add(DenseSegment seg) { segments_.push_back(std::move(seg)); }
    bool empty() const { return segments_.empty(); }
    double t_begin() const { return segments_.front().t0; }
    double t_end() const { return segments_.back().t0 + segments_.back().h; }
    const std::vector<DenseSegment>& segments() const { return segments_; }

    /// Interpolated state; t is clamped to the covered interval.
    Vector eval(double t) const {
        if (segments_.empty()) throw Error("dense output is empty");
        const bool fwd = segments_.front().h > 0;
        std::size_t lo = 0, hi = segments_.size() - 1;
        while (lo < hi) {
            const std::size_t mid = (lo + hi + 1) / 2;
            const double start = segments_[mid].t0;
            if (fwd ? (t >= start) : (t <= start))
                lo = mid;
            else
                hi = mid - 1;
        }
        return segments_[lo].eval(t);
    }

private:
    std::vector<DenseSegment> segments_;
};

namespace dp5 {

// Butcher tableau of the Dormand-Prince 5(4) pair.
inline constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
inline constexpr double a21 = 1.0 / 5;
inline constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
inline constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
inline constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                        a54 = -212.0 / 729;
inline constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                        a64 = 49.0 / 176, a65 = -5103.0 / 18656;
// 5th-order solution weights (also the a7j row: FSAL).
inline constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                        b5 = -2187.0 / 6784, b6 = 11.0 / 84;
// Error weights: difference between the 5th- and 4th-order solutions.
inline constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                        e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;
// Dense-output weights.
inline constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                        d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                        d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

struct Stages {
    Vector k1, k2, k3, k4, k5, k6, k7;
};

/// One Dormand-Prince step from (t, y) with stage 1 supplied (FSAL). Fills
/// the remaining stages, the 5th-order solution ynew, and the embedded error
/// vector.
template <class Rhs>
void step(Rhs&& rhs, double t, const Vector& y, double h, Stages& s, Vector& ynew, Vector& err) {
    s.k2 = rhs(t + c2 * h, Vector(y + h * (a21 * s.k1)));
    s.k3 = rhs(t + c3 * h, Vector(y + h * (a31 * s.k1 + a32 * s.k2)));
    s.k4 = rhs(t + c4 * h, Vector(y + h * (a41 * s.k1 + a42 * s.k2 + a43 * s.k3)));
    s.k5 = rhs(t + c5 * h, Vector(y + h * (a51 * s.k1 + a52 * s.k2 + a53 * s.k3 + a54 * s.k4)));
    s.k6 = rhs(t + h, Vector(y + h * (a61 * s.k1 + a62 * s.k2 + a63 * s.k3 + a64 * s.k4 + a65 * s.k5)));
    ynew = y + h * (b1 * s.k1 + b3 * s.k3 + b4 * s.k4 + b5 * s.k5 + b6 * s.k6);
    s.k7 = rhs(t + h, ynew);
    err = h * (e1 * s.k1 + e3 * s.k3 + e4 * s.k4 + e5 * s.k5 + e6 * s.k6 + e7 * s.k7);
}

inline Matrix dense_coefficients(const Vector& y0, const Vector& y1, double h, const Stages& s) {
    const Index n = y0.size();
    Matrix rcont(n, 5);
    const Vector dy = y1 - y0;
    rcont.col(0) = y0;
    rcont.col(1) = dy;
    rcont.col(2) = h * s.k1 - dy;
    rcont.col(3) = dy - h * s.k7 - rcont.col(2);
    rcont.col(4) = h * (d1 * s.k1 + d3 * s.k3 + d4 * s.k4 + d5 * s.k5 + d6 * s.k6 + d7 * s.k7);
    return rcont;
}

}  // namespace dp5

// ---------------------------------------------------------------------------
// Adaptive driver. rhs(t, y) -> dy/dt; on each accepted step the callback
// receives (t_before, h, y_after, stages) so callers can sample, build dense
// output, or detect events without the driver knowing about any of it.
// ---------------------------------------------------------------------------
template <class Rhs, class OnStep>
IntegratorStats dopri5_drive(Rhs&& rhs, double t0, double t1, Vector& y,
                             const IntegratorOptions& opts, OnStep&& on_step) {
    IntegratorStats stats;
    if (t1 == t0) return stats;
    const double dir = t1 > t0 ? 1.0 : -1.0;
    const double span = std::abs(t1 - t0);
    const double hmax = opts.h_max > 0 ? std::min(opts.h_max, span) : span;

    const auto error_norm = [&](const Vector& e, const Vector& y0, const Vector& y1) {
        double acc = 0.0;
        for (Index i = 0; i < e.size(); ++i) {
            const double sc = opts.atol + opts.rtol * std::max(std::abs(y0[i]), std::abs(y1[i]));
            acc += sq(e[i] / sc);
        }
        return std::sqrt(acc / static_cast<double>(e.size()));
    };

    dp5::Stages s;
    s.k1 = rhs(t0, y);
    double h = opts.h_init;
    if (h <= 0.0) {
        // Rough Hairer-style starting step from the size of the derivative.
        double d0 = 0.0, d1n = 0.0;
        for (Index i = 0; i < y.size(); ++i) {
            const double sc = opts.atol + opts.rtol * std::abs(y[i]);
            d0 += sq(y[i] / sc);
            d1n += sq(s.k1[i] / sc);
        }
        d0 = std::sqrt(d0 / static_cast<double>(y.size()));
        d1n = std::sqrt(d1n / static_cast<double>(y.size()));
        h = (d0 < 1e-5 || d1n < 1e-5) ? 1e-6 : 0.01 * (d0 / d1n);
        h = std::min(h, hmax);
    }

    double t = t0;
    Vector ynew, err;
    while (dir * (t1 - t) > 0.0) {
        if (stats.steps + stats.rejected >= opts.max_steps)
            throw StepFailure("step budget exhausted");
        h = std::min(h, hmax);
        if (h < 1e-14 * span) throw StepFailure("step size underflow (stiff blow-up?)");
        double hstep = dir * h;
        if (dir * (t + hstep - t1) > 0.0) hstep = t1 - t;

        dp5::step(rhs, t, y, hstep, s, ynew, err);
        if (!ynew.allFinite()) {
            stats.rejected++;
            h *= 0.25;
            continue;
        }
        const double en = error_norm(err, y, ynew);
        if (en <= 1.0) {
            on_step(t, hstep, y, ynew, s);
            t += hstep;
            y.swap(ynew);
            s.k1.swap(s.k7);  // FSAL
            stats.steps++;
            stats.last_h = hstep;
            const double fac = en == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(en, -0.2), 0.2, 5.0);
            h = std::abs(hstep) * fac;
        } else {
            stats.rejected++;
            h = std::abs(hstep) * std::clamp(0.9 * std::pow(en, -0.2), 0.2, 1.0);
        }
    }
    return stats;
}

// ---------------------------------------------------------------------------
// Trajectory of a vector-field model: accepted-step samples plus optional
// dense output.
// ---------------------------------------------------------------------------
struct Trajectory {
    std::vector<double> times;
    std::vector<Vector> states;
    IntegratorStats stats;
    std::optional<DenseOutput> dense;

    const Vector& final_state() const { return states.back(); }
};

inline Trajectory integrate(const VectorFieldModel& model, const Vector& x0, double t_final,
                            const IntegratorOptions& opts = {}) {
    Trajectory traj;
    traj.times.push_back(0.0);
    traj.states.push_back(x0);
    if (opts.dense) traj.dense.emplace();
    Vector y = x0;
    const auto rhs = [&](double, const Vector& v) { return model.eval(v); };
    traj.stats = dopri5_drive(rhs, 0.0, t_final, y, opts,
                              [&](double t, double h, const Vector& y0, const Vector& y1,
                                  const dp5::Stages& s) {
                                  traj.times.push_back(t + h);
                                  traj.states.push_back(y1);
                                  if (traj.dense)
                                      traj.dense->add(DenseSegment{
                                          t, h, dp5::dense_coefficients(y0, y1, h, s)});
                              });
    return traj;
}

// ---------------------------------------------------------------------------
// Tangent cocycle: fundamental matrix of the variational equation
// Mdot = DX(x(t)) M, M(0) = I, integrated jointly with the base trajectory
// and the divergence integral (for the Liouville determinant check).
// ---------------------------------------------------------------------------
struct CocycleSegment {
    Vector base_point;
    double duration = 0.0;
    Matrix fundamental;
    Vector end_point;
    double integral_trace = 0.0;  // int_0^T trace DX dt
    IntegratorStats stats;

    /// |det M - exp(int trace)| relative to exp(int trace).
    double liouville_residual() const {
        const double expected = std::exp(integral_trace);
        return std::abs(fundamental.determinant() - expected) / std::abs(expected);
    }
};

namespace detail {

/// RHS of the joint (state, tangent block, trace integral) system. The
/// tangent block may have k <= n columns.
template <class Model>
auto joint_rhs(const Model& model, Index n, Index k) {
    return [&model, n, k](double, const Vector& y) {
        const Eigen::Map<const Matrix> m(y.data() + n, n, k);
        const Vector x = y.head(n);
        const Matrix jac = model.jacobian(x);
        Vector dy(y.size());
        dy.head(n) = model.eval(x);
        Eigen::Map<Matrix>(dy.data() + n, n, k) = jac * m;
        if (y.size() == n + n * k + 1) dy[n + n * k] = jac.trace();
        return dy;
    };
}

}  // namespace detail

inline CocycleSegment tangent_cocycle(const VectorFieldModel& model, const Vector& x0, double t_final,
                                      const IntegratorOptions& opts = {}) {
    const Index n = model.dim();
    Vector y(n + n * n + 1);
    y.head(n) = x0;
    Eigen::Map<Matrix>(y.data() + n, n, n) = Matrix::Identity(n, n);
    y[n + n * n] = 0.0;

    CocycleSegment seg;
    seg.base_point = x0;
    seg.duration = t_final;
    seg.stats = dopri5_drive(detail::joint_rhs(model, n, n), 0.0, t_final, y, opts,
                             [](double, double, const Vector&, const Vector&, const dp5::Stages&) {});
    seg.end_point = y.head(n);
    seg.fundamental = Eigen::Map<const Matrix>(y.data() + n, n, n);
    seg.integral_trace = y[n + n * n];
    return seg;
}

// p-th compound matrix: entries are the p x p minors of m, with row/column
// index sets in lexicographic order. Multiplicative in m.
inline std::vector<std::vector<Index>> index_subsets(Index n, Index p) {
    std::vector<std::vector<Index>> out;
    std::vector<Index> cur(static_cast<std::size_t>(p));
    std::function<void(Index, Index)> rec = [&](Index start, Index depth) {
        if (depth == p) {
            out.push_back(cur);
            return;
        }
        for (Index i = start; i < n; ++i) {
            cur[static_cast<std::size_t>(depth)] = i;
            rec(i + 1, depth + 1);
        }
    };
    rec(0, 0);
    return out;
}

inline Matrix wedge_power(const Matrix& m, Index p) {
    const Index n = m.rows();
    if (p < 1 || p > n) throw BadDimension("compound-matrix order must lie in [1, n]");
    const auto subsets = index_subsets(n, p);
    const Index nn = static_cast<Index>(subsets.size());
    Matrix out(nn, nn);
    Matrix minor_(p, p);
    for (Index r = 0; r < nn; ++r) {
        for (Index c = 0; c < nn; ++c) {
            for (Index i = 0; i < p; ++i)
                for (Index j = 0; j < p; ++j)
                    minor_(i, j) = m(subsets[static_cast<std::size_t>(r)][static_cast<std::size_t>(i)],
                                     subsets[static_cast<std::size_t>(c)][static_cast<std::size_t>(j)]);
            out(r, c) = minor_.determinant();
        }
    }
    return out;
}

inline Matrix wedge_cocycle(const CocycleSegment& segment, Index p) {
    return wedge_power(segment.fundamental, p);
}

// ---------------------------------------------------------------------------
// Per-interval transition operators M(t_i -> t_{i+1}) along one trajectory.
// Each interval restarts the tangent block at the identity, which keeps the
// operators well-conditioned regardless of the overall growth.
// ---------------------------------------------------------------------------
struct StepOperators {
    std::vector<double> times;    // grid, size m+1
    std::vector<Vector> states;   // x(t_i)
    std::vector<Matrix> ops;      // size m
};

inline StepOperators step_operators(const VectorFieldModel& model, const Vector& x0,
                                    const std::vector<double>& times,
                                    const IntegratorOptions& opts = {}) {
    if (times.size() < 2) throw BadDimension("step-operator grid needs at least two times");
    StepOperators out;
    out.times = times;
    Vector x = x0;
    out.states.push_back(x);
    for (std::size_t i = 0; i + 1 < times.size(); ++i) {
        const double dt = times[i + 1] - times[i];
        CocycleSegment seg = tangent_cocycle(model, x, dt, opts);
        out.ops.push_back(seg.fundamental);
        x = seg.end_point;
        out.states.push_back(x);
    }
    return out;
}

// ---------------------------------------------------------------------------
// High-precision monodromy: fixed-step 5th-order integration of the joint
// system plus one Richardson level, (32 M_{h/2} - M_h)/31. Adaptive global
// error (~1e-10) is not enough when multipliers as small as e^{-4 pi} must
// come out to 1e-6 relative accuracy; the extrapolated fixed-step path is.
// ---------------------------------------------------------------------------
namespace detail {

template <class Rhs>
void fixed_dopri5(Rhs&& rhs, double t0, double t1, Vector& y, long steps) {
    const double h = (t1 - t0) / static_cast<double>(steps);
    dp5::Stages s;
    Vector ynew, err;
    double t = t0;
    for (long i = 0; i < steps; ++i) {
        s.k1 = rhs(t, y);
        dp5::step(rhs, t, y, h, s, ynew, err);
        y.swap(ynew);
        t = t0 + h * static_cast<double>(i + 1);
        if (!y.allFinite()) throw StepFailure("non-finite state in fixed-step integration");
    }
}

}  // namespace detail

struct MonodromyResult {
    Matrix m;          // extrapolated period map
    Vector end_point;  // from the finer grid
    double step_defect = 0.0;  // |M_h - M_{h/2}| / |M_{h/2}|: convergence indicator
};

inline MonodromyResult monodromy(const VectorFieldModel& model, const Vector& x0, double t_final,
                                 long steps = 4096) {
    const Index n = model.dim();
    const auto run = [&](long nsteps) {
        Vector y(n + n * n + 1);
        y.head(n) = x0;
        Eigen::Map<Matrix>(y.data() + n, n, n) = Matrix::Identity(n, n);
        y[n + n * n] = 0.0;
        detail::fixed_dopri5(detail::joint_rhs(model, n, n), 0.0, t_final, y, nsteps);
        return y;
    };
    const Vector coarse = run(steps);
    const Vector fine = run(2 * steps);
    const Matrix mc = Eigen::Map<const Matrix>(coarse.data() + n, n, n);
    const Matrix mf = Eigen::Map<const Matrix>(fine.data() + n, n, n);
    MonodromyResult out;
    out.m = (32.0 * mf - mc) / 31.0;
    out.end_point = fine.head(n);
    out.step_defect = (mc - mf).norm() / std::max(mf.norm(), 1e-300);
    return out;
}

}  // namespace coneflow

#endif
