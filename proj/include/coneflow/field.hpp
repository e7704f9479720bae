#ifndef CONEFLOW_FIELD_HPP
#define CONEFLOW_FIELD_HPP

#include "coneflow/common.hpp"
#include "coneflow/flow/integrate.hpp"
#include "coneflow/flow/model.hpp"
#include "coneflow/flow/periodic.hpp"
#include "coneflow/quadratic_form.hpp"
#include "coneflow/separation.hpp"

#include <functional>
#include <limits>

namespace coneflow {

// ---------------------------------------------------------------------------
// Assignment x -> J_x with constant index. Three flavors:
//   * Constant: one matrix everywhere.
//   * Spatial: closed-form matrix function, optionally with an analytic
//     directional derivative (else central differences), and an optional
//     domain predicate.
//   * OrbitTable: forms sampled on a periodic time grid along one orbit,
//     looked up by time (or by nearest sample point). This is how
//     orbit-adapted constructions hand their result to the orbit checkers.
// ---------------------------------------------------------------------------
class QuadraticFormField {
public:
    enum class Kind { Constant, Spatial, OrbitTable };
    using MatrixFn = std::function<Matrix(const Vector&)>;
    using DerivFn = std::function<Matrix(const Vector&, const Vector&)>;  // (x, dir) -> dJ
    using DomainFn = std::function<bool(const Vector&)>;

    static QuadraticFormField constant(const Matrix& j) {
        QuadraticFormField f;
        f.kind_ = Kind::Constant;
        f.constant_ = j;
        const QuadraticForm check(j);  // validates symmetry + non-degeneracy
        f.dim_ = check.dim();
        f.q_ = check.index_q();
        f.name_ = "constant";
        return f;
    }

    static QuadraticFormField spatial(Index dim, Index index_q, MatrixFn fn, DerivFn deriv = {},
                                      DomainFn domain = {}, std::string name = "spatial") {
        if (dim < 1) throw BadDimension("field dimension must be positive");
        if (!fn) throw BadDimension("spatial field needs an evaluation function");
        QuadraticFormField f;
        f.kind_ = Kind::Spatial;
        f.dim_ = dim;
        f.q_ = index_q;
        f.fn_ = std::move(fn);
        f.deriv_ = std::move(deriv);
        f.domain_ = std::move(domain);
        f.name_ = std::move(name);
        return f;
    }

    static QuadraticFormField orbit_table(std::vector<double> times, std::vector<Vector> points,
                                          std::vector<Matrix> forms, double period) {
        if (times.empty() || times.size() != forms.size() || times.size() != points.size())
            throw BadDimension("orbit table needs matching times/points/forms");
        if (!(period > 0.0)) throw BadDimension("orbit table period must be positive");
        for (std::size_t i = 0; i < times.size(); ++i) {
            if (times[i] < 0.0 || times[i] >= period)
                throw BadDimension("orbit table times must lie in [0, period)");
            if (i > 0 && times[i] <= times[i - 1])
                throw BadDimension("orbit table times must be strictly increasing");
        }
        QuadraticFormField f;
        f.kind_ = Kind::OrbitTable;
        f.dim_ = forms.front().rows();
        const QuadraticForm first(forms.front());
        f.q_ = first.index_q();
        for (std::size_t i = 1; i < forms.size(); ++i) {
            const QuadraticForm check(forms[i]);
            if (check.index_q() != f.q_)
                throw IndexMismatch("orbit table forms change index at sample " +
                                    std::to_string(i));
        }
        f.times_ = std::move(times);
        f.points_ = std::move(points);
        f.forms_ = std::move(forms);
        f.period_ = period;
        f.name_ = "orbit_table";
        return f;
    }

    Kind kind() const { return kind_; }
    Index dim() const { return dim_; }
    Index index_q() const { return q_; }
    const std::string& name() const { return name_; }
    bool is_orbit_table() const { return kind_ == Kind::OrbitTable; }

    bool in_domain(const Vector& x) const {
        return kind_ != Kind::Spatial || !domain_ || domain_(x);
    }

    Matrix matrix_at(const Vector& x) const {
        if (x.size() != dim_) throw BadDimension("field evaluation point dimension mismatch");
        switch (kind_) {
            case Kind::Constant: return constant_;
            case Kind::Spatial:
                if (!in_domain(x)) throw OutsideDomain("point is outside the field domain");
                return fn_(x);
            default: return forms_[nearest_table_index(x)];
        }
    }

    /// Validated form at x: non-degenerate and of the declared index.
    QuadraticForm at(const Vector& x) const {
        QuadraticForm j(matrix_at(x));
        if (j.index_q() != q_)
            throw IndexMismatch("field index drifted from " + std::to_string(q_) + " to " +
                                std::to_string(j.index_q()));
        return j;
    }

    /// Directional derivative dJ(x)[direction], linear in the direction.
    /// Spatial fields use the analytic callback when present, otherwise
    /// central differences; orbit tables differentiate along their own
    /// time grid and assume the direction is parallel to the flow there.
    Matrix derivative_along(const Vector& x, const Vector& direction) const {
        if (x.size() != dim_ || direction.size() != dim_)
            throw BadDimension("field derivative dimension mismatch");
        switch (kind_) {
            case Kind::Constant: return Matrix::Zero(dim_, dim_);
            case Kind::Spatial: {
                if (!in_domain(x)) throw OutsideDomain("point is outside the field domain");
                if (deriv_) {
                    const Matrix d = deriv_(x, direction);
                    return 0.5 * (d + d.transpose());
                }
                const double h = 1e-4 / std::max(1.0, direction.norm());
                const Vector xp = x + h * direction;
                const Vector xm = x - h * direction;
                if (!in_domain(xp) || !in_domain(xm))
                    throw OutsideDomain("finite-difference stencil leaves the field domain");
                return (fn_(xp) - fn_(xm)) / (2.0 * h);
            }
            default: {
                const std::size_t m = times_.size();
                if (m < 3) throw Error("orbit table too coarse to differentiate");
                const std::size_t i = nearest_table_index(x);
                const std::size_t ip = (i + 1) % m;
                const std::size_t im = (i + m - 1) % m;
                double tp = times_[ip], tm = times_[im];
                if (ip == 0) tp += period_;
                if (im == m - 1) tm -= period_;
                const double span = tp - tm;
                const Matrix dj_dt = (forms_[ip] - forms_[im]) / span;
                const Vector flow_est = (points_[ip] - points_[im]) / span;
                const double speed2 = flow_est.squaredNorm();
                if (speed2 < 1e-24) throw Error("orbit table flow estimate vanished");
                // Linear-in-direction extension under the d || flow assumption.
                return dj_dt * (direction.dot(flow_est) / speed2);
            }
        }
    }

    double period() const { return period_; }
    const std::vector<double>& table_times() const { return times_; }
    const std::vector<Vector>& table_points() const { return points_; }
    const std::vector<Matrix>& table_forms() const { return forms_; }

    /// Nearest-sample form at time t (periodic wrap).
    const Matrix& form_at_time(double t) const {
        if (kind_ != Kind::OrbitTable) throw Error("form_at_time needs an orbit-table field");
        double tw = std::fmod(t, period_);
        if (tw < 0.0) tw += period_;
        std::size_t best = 0;
        double bestd = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < times_.size(); ++i) {
            const double d0 = std::abs(times_[i] - tw);
            const double d = std::min(d0, period_ - d0);
            if (d < bestd) {
                bestd = d;
                best = i;
            }
        }
        return forms_[best];
    }

    std::size_t nearest_table_index(const Vector& x) const {
        if (kind_ != Kind::OrbitTable) throw Error("nearest_table_index needs an orbit table");
        std::size_t best = 0;
        double bestd = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < points_.size(); ++i) {
            const double d = (points_[i] - x).squaredNorm();
            if (d < bestd) {
                bestd = d;
                best = i;
            }
        }
        return best;
    }

    /// Hollow field (dim 0); only useful as a slot to assign into.
    QuadraticFormField() = default;

private:
    Kind kind_ = Kind::Constant;
    Index dim_ = 0;
    Index q_ = 0;
    std::string name_;
    Matrix constant_;
    MatrixFn fn_;
    DerivFn deriv_;
    DomainFn domain_;
    std::vector<double> times_;
    std::vector<Vector> points_;
    std::vector<Matrix> forms_;
    double period_ = 0.0;
};

// ---------------------------------------------------------------------------
// Form derivative along the flow: the symmetric matrix of
//   d/dt J_{x(t)}(M(t) v) |_{t=0}  =  <(J A + A^T J + D_X J) v, v>,
// with A = DX(x). This is the object whose positivity the monotonicity
// checks test.
// ---------------------------------------------------------------------------
inline Matrix form_derivative_matrix(const QuadraticFormField& field, const VectorFieldModel& model,
                                     const Vector& x) {
    const Matrix j = field.at(x).matrix();
    const Matrix a = model.jacobian(x);
    const Matrix dj = field.derivative_along(x, model.eval(x));
    const Matrix phi = j * a + a.transpose() * j + dj;
    return 0.5 * (phi + phi.transpose());
}

inline double form_derivative(const QuadraticFormField& field, const VectorFieldModel& model,
                              const Vector& x, const Vector& v) {
    if (v.size() != field.dim()) throw BadDimension("direction dimension mismatch");
    if (v.squaredNorm() == 0.0) throw ZeroVector("form derivative needs a nonzero direction");
    return v.dot(form_derivative_matrix(field, model, x) * v);
}

// ---------------------------------------------------------------------------
// At an equilibrium the derivative reduces to the Lyapunov form J A + A^T J;
// its positive definiteness is the equilibrium-side certificate condition.
// ---------------------------------------------------------------------------
struct FormPositivity {
    bool positive = false;
    double min_eigenvalue = 0.0;
    std::optional<Vector> witness;  // direction achieving the minimum when not positive
};

inline FormPositivity singularity_form_positivity(const QuadraticFormField& field,
                                                  const VectorFieldModel& model, const Vector& sigma,
                                                  double equilibrium_tol = 1e-8,
                                                  double strict_rel = 1e-8) {
    const double speed = model.eval(sigma).norm();
    if (speed > equilibrium_tol * std::max(1.0, sigma.norm()))
        throw NotEquilibrium("point has |X| = " + std::to_string(speed));
    const Matrix j = field.at(sigma).matrix();
    const Matrix a = model.jacobian(sigma);
    Matrix phi = j * a + a.transpose() * j;
    phi = 0.5 * (phi + phi.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(phi);
    FormPositivity out;
    out.min_eigenvalue = es.eigenvalues()(0);
    const double scale = es.eigenvalues().cwiseAbs().maxCoeff();
    out.positive = out.min_eigenvalue > strict_rel * scale && scale > 0.0;
    if (!out.positive) out.witness = es.eigenvectors().col(0);
    return out;
}

// ---------------------------------------------------------------------------
// Separation between two forms: J_to(L v) vs J_from(v). Expressed in the
// adapted frames of both endpoints this becomes a single-form problem
// against the constant diagonal D, which is what makes per-interval orbit
// checks form-independent. The verdict does not depend on which adapted
// frames are chosen (different choices differ by D-isometries).
// ---------------------------------------------------------------------------
namespace detail {

inline Matrix signature_matrix(const std::vector<int>& pattern) {
    const Index n = static_cast<Index>(pattern.size());
    Matrix d = Matrix::Zero(n, n);
    for (Index i = 0; i < n; ++i) d(i, i) = pattern[static_cast<std::size_t>(i)];
    return d;
}

/// B_to^{-1} L B_from for the adapted frames of the two forms.
inline Matrix pair_transport(const AdaptedFrame& from, const AdaptedFrame& to, const Matrix& l) {
    return Eigen::PartialPivLU<Matrix>(to.basis).solve(l * from.basis);
}

}  // namespace detail

inline SeparationVerdict check_separation_pair(const QuadraticForm& j_from,
                                               const QuadraticForm& j_to, const Matrix& l,
                                               double strict_rel = 1e-9) {
    if (j_from.dim() != j_to.dim()) throw BadDimension("form dimensions differ");
    if (j_from.index_q() != j_to.index_q())
        throw IndexMismatch("forms have different indices: " + std::to_string(j_from.index_q()) +
                            " vs " + std::to_string(j_to.index_q()));
    const AdaptedFrame from = lagrange_diagonalize(j_from);
    const AdaptedFrame to = lagrange_diagonalize(j_to);
    const Matrix ltilde = detail::pair_transport(from, to, l);
    SeparationVerdict v =
        check_separation(QuadraticForm(detail::signature_matrix(from.signature_pattern)), ltilde,
                         strict_rel);
    if (v.witness) v.witness = from.basis * (*v.witness);  // back to ambient coordinates
    return v;
}

// ---------------------------------------------------------------------------
// Separation along an orbit: the cocycle on each grid interval must map the
// nonnegative cone of J at the start strictly inside the positive cone at
// the end. The overall verdict is the weakest interval verdict, and for
// function-valued fields the grid is refined until the verdict stops
// changing.
// ---------------------------------------------------------------------------
struct OrbitSeparationReport {
    SeparationLevel overall = SeparationLevel::NotSeparated;
    std::vector<double> grid_times;
    std::vector<Vector> grid_states;
    std::vector<SeparationVerdict> intervals;
    std::size_t weakest_interval = 0;
    bool grid_converged = true;
    int refinements = 0;
};

namespace detail {

inline OrbitSeparationReport orbit_separation_once(const QuadraticFormField& field,
                                                   const VectorFieldModel& model, const Vector& x0,
                                                   const std::vector<double>& times,
                                                   double strict_rel,
                                                   const IntegratorOptions& opts) {
    OrbitSeparationReport rep;
    const StepOperators ops = step_operators(model, x0, times, opts);
    rep.grid_times = ops.times;
    rep.grid_states = ops.states;

    std::vector<QuadraticForm> forms;
    forms.reserve(ops.states.size());
    for (const Vector& x : ops.states) forms.push_back(field.at(x));

    rep.overall = SeparationLevel::StrictlySeparated;
    for (std::size_t i = 0; i < ops.ops.size(); ++i) {
        SeparationVerdict v = check_separation_pair(forms[i], forms[i + 1], ops.ops[i], strict_rel);
        if (static_cast<int>(v.level) < static_cast<int>(rep.overall)) {
            rep.overall = v.level;
            rep.weakest_interval = i;
        }
        rep.intervals.push_back(std::move(v));
    }
    if (rep.intervals.empty()) rep.overall = SeparationLevel::Separated;  // T = 0, no motion
    return rep;
}

}  // namespace detail

inline OrbitSeparationReport check_separation_along_orbit(const QuadraticFormField& field,
                                                          const VectorFieldModel& model,
                                                          const Vector& x0, double t_final,
                                                          double grid_step = 0.0,
                                                          double strict_rel = 1e-9,
                                                          const IntegratorOptions& opts = {}) {
    if (t_final < 0.0) throw BadDimension("orbit check runs forward; reverse the model instead");

    if (field.is_orbit_table()) {
        // The table's own grid is the grid; its forms were built for exactly
        // these samples, so there is nothing to refine.
        if (std::abs(t_final - field.period()) > 1e-6 * field.period())
            throw BadDimension("orbit-table field covers exactly one period");
        std::vector<double> times = field.table_times();
        times.push_back(field.period());
        OrbitSeparationReport rep =
            detail::orbit_separation_once(field, model, x0, times, strict_rel, opts);
        rep.grid_converged = true;
        return rep;
    }

    if (t_final == 0.0) {
        return detail::orbit_separation_once(field, model, x0, {0.0, 0.0}, strict_rel, opts);
    }

    const double step0 = grid_step > 0.0 ? grid_step : 0.125;
    long n = std::max<long>(2, static_cast<long>(std::ceil(t_final / step0)));

    OrbitSeparationReport rep;
    int agreeing = 0;
    const int max_runs = 6;
    for (int run = 0; run < max_runs; ++run, n *= 2) {
        std::vector<double> times(static_cast<std::size_t>(n) + 1);
        for (long i = 0; i <= n; ++i)
            times[static_cast<std::size_t>(i)] =
                t_final * static_cast<double>(i) / static_cast<double>(n);
        OrbitSeparationReport next =
            detail::orbit_separation_once(field, model, x0, times, strict_rel, opts);
        next.refinements = run;
        if (run > 0 && next.overall == rep.overall)
            ++agreeing;
        else if (run > 0)
            agreeing = 0;
        rep = std::move(next);
        if (agreeing >= 2) {
            rep.grid_converged = true;
            return rep;
        }
    }
    rep.grid_converged = false;
    return rep;
}

// ---------------------------------------------------------------------------
// J-orthogonal Poincare projection at a regular point: the flow line is
// J-positive (admissibility), its J-complement is the normal space N_x, and
// Pi projects along the flow direction onto N_x.
// ---------------------------------------------------------------------------
struct PoincareProjection {
    Vector base_point;
    Vector flow_direction;  // X(x)
    Matrix basis;           // n x (n-1), Euclidean-orthonormal columns spanning N_x
    Matrix projector;       // Pi = I - X (J X)^T / J(X)
    Matrix j_normal;        // basis^T J basis, the form restricted to N_x
    Index index_q = 0;
};

inline PoincareProjection poincare_project(const QuadraticFormField& field,
                                           const VectorFieldModel& model, const Vector& x,
                                           double singular_tol = 1e-10, double band_rel = 1e-9) {
    PoincareProjection out;
    out.base_point = x;
    out.flow_direction = model.eval(x);
    if (out.flow_direction.norm() <= singular_tol * std::max(1.0, x.norm()))
        throw SingularPoint("flow vanishes at the requested point");
    const QuadraticForm j = field.at(x);
    const ConeClass cls = classify(j, out.flow_direction, band_rel);
    if (cls.cls != ConeSign::Positive)
        throw NonAdmissibleDirection("flow direction is not strictly J-positive (margin " +
                                     std::to_string(cls.margin) + ")");
    out.basis = j_complement(j, out.flow_direction);
    const Vector jx = j.apply(out.flow_direction);
    out.projector = Matrix::Identity(j.dim(), j.dim()) -
                    out.flow_direction * jx.transpose() / jx.dot(out.flow_direction);
    Matrix restricted = out.basis.transpose() * j.matrix() * out.basis;
    out.j_normal = 0.5 * (restricted + restricted.transpose());
    const QuadraticForm check(out.j_normal, j.degeneracy_tol() / j.max_abs_eigenvalue());
    out.index_q = check.index_q();
    if (out.index_q != j.index_q())
        throw IndexMismatch("restricted form lost index (flow direction not in the positive cone?)");
    return out;
}

// ---------------------------------------------------------------------------
// Linear Poincare flow over [0, t]: project the tangent cocycle onto the
// normal spaces at both ends and express it in their stored bases.
// ---------------------------------------------------------------------------
struct LinearPoincareMap {
    PoincareProjection from;
    PoincareProjection to;
    Matrix matrix;  // (n-1) x (n-1)
    CocycleSegment segment;
};

inline LinearPoincareMap linear_poincare_flow(const QuadraticFormField& field,
                                              const VectorFieldModel& model, const Vector& x,
                                              double t, const IntegratorOptions& opts = {}) {
    LinearPoincareMap out;
    out.from = poincare_project(field, model, x);
    out.segment = tangent_cocycle(model, x, t, opts);
    out.to = poincare_project(field, model, out.segment.end_point);
    out.matrix =
        out.to.basis.transpose() * (out.to.projector * (out.segment.fundamental * out.from.basis));
    return out;
}

/// Period map of the linear Poincare flow computed on the high-accuracy
/// monodromy path (the adaptive cocycle is not accurate enough when the
/// smallest multiplier is tiny).
inline LinearPoincareMap lpf_period_map(const QuadraticFormField& field,
                                        const VectorFieldModel& model, const PeriodicOrbit& orbit,
                                        long steps = 8192) {
    LinearPoincareMap out;
    out.from = poincare_project(field, model, orbit.anchor);
    const MonodromyResult mono = monodromy(model, orbit.anchor, orbit.period, steps);
    out.segment.base_point = orbit.anchor;
    out.segment.duration = orbit.period;
    out.segment.fundamental = mono.m;
    out.segment.end_point = mono.end_point;
    // Project at the anchor on both sides; the orbit closes up to the
    // shooting residual.
    out.to = out.from;
    out.matrix =
        out.to.basis.transpose() * (out.to.projector * (out.segment.fundamental * out.from.basis));
    return out;
}

// ---------------------------------------------------------------------------
// Strict monotonicity of the linear Poincare flow along sampled orbit
// points: at each sample the derivative form (J A + A^T J + D_X J)
// restricted to N_x must be positive definite. The minimum is reported in
// the adapted coordinates of J|N_x ("unit J-sphere" normalization), which
// makes it invariant under J -> c J.
// ---------------------------------------------------------------------------
enum class MonotoneVerdict { Fails, NonStrict, Strict };

inline const char* to_string(MonotoneVerdict v) {
    switch (v) {
        case MonotoneVerdict::Strict: return "Strict";
        case MonotoneVerdict::NonStrict: return "NonStrict";
        default: return "Fails";
    }
}

struct MonotonicityReport {
    std::vector<double> times;
    std::vector<double> minima;  // per-sample minimum of the projected derivative form
    double global_min = std::numeric_limits<double>::infinity();
    std::size_t weakest_sample = 0;
    std::optional<Vector> witness;  // ambient direction achieving the global minimum
    MonotoneVerdict verdict = MonotoneVerdict::Fails;
};

inline MonotonicityReport check_lpf_strict_monotone(const QuadraticFormField& field,
                                                    const VectorFieldModel& model,
                                                    const std::vector<double>& times,
                                                    const std::vector<Vector>& states,
                                                    double strict_rel = 1e-8) {
    if (times.size() != states.size() || times.empty())
        throw BadDimension("monotonicity check needs matching nonempty samples");
    MonotonicityReport rep;
    rep.times = times;
    bool all_strict = true;
    bool any_fail = false;
    for (std::size_t s = 0; s < states.size(); ++s) {
        const PoincareProjection proj = poincare_project(field, model, states[s]);
        const Matrix phi = form_derivative_matrix(field, model, states[s]);
        const Matrix phi_n = proj.basis.transpose() * phi * proj.basis;
        const AdaptedFrame frame = lagrange_diagonalize(QuadraticForm(proj.j_normal));
        Matrix phat = frame.basis.transpose() * phi_n * frame.basis;
        phat = 0.5 * (phat + phat.transpose());
        Eigen::SelfAdjointEigenSolver<Matrix> es(phat);
        const double mn = es.eigenvalues()(0);
        const double scale = es.eigenvalues().cwiseAbs().maxCoeff();
        const double band = strict_rel * scale;
        rep.minima.push_back(mn);
        if (!(mn > band) || scale == 0.0) all_strict = false;
        if (mn < -band) any_fail = true;
        if (mn < rep.global_min) {
            rep.global_min = mn;
            rep.weakest_sample = s;
            rep.witness = proj.basis * (frame.basis * es.eigenvectors().col(0));
        }
    }
    rep.verdict = any_fail ? MonotoneVerdict::Fails
                           : (all_strict ? MonotoneVerdict::Strict : MonotoneVerdict::NonStrict);
    return rep;
}

/// Convenience overload: sample one trajectory at n_samples uniform times.
inline MonotonicityReport check_lpf_strict_monotone(const QuadraticFormField& field,
                                                    const VectorFieldModel& model, const Vector& x0,
                                                    double t_final, long n_samples = 16,
                                                    double strict_rel = 1e-8) {
    if (n_samples < 1) throw BadDimension("need at least one sample");
    IntegratorOptions opts;
    opts.dense = true;
    const Trajectory traj = integrate(model, x0, t_final, opts);
    std::vector<double> times;
    std::vector<Vector> states;
    for (long i = 0; i < n_samples; ++i) {
        const double t = t_final * static_cast<double>(i) / static_cast<double>(n_samples);
        times.push_back(t);
        states.push_back(t == 0.0 ? x0 : traj.dense->eval(t));
    }
    return check_lpf_strict_monotone(field, model, times, states, strict_rel);
}

// ---------------------------------------------------------------------------
// Adapted form at a hyperbolic operator: in an invariant-subspace basis,
// weight the stable block by the solution of A_s^T Q + Q A_s = -I and the
// unstable block by A_u^T Q + Q A_u = +I. The resulting J has
// J A + A^T J = T^{-T} T^{-1} > 0 exactly, so the equilibrium certificate
// holds by construction.
// ---------------------------------------------------------------------------
namespace detail {

/// Solve M^T Q + Q M = rhs (dense Kronecker system; sizes here are tiny).
inline Matrix lyapunov_solve(const Matrix& m, const Matrix& rhs) {
    const Index k = m.rows();
    Matrix big = Matrix::Zero(k * k, k * k);
    const Matrix mt = m.transpose();
    // vec(M^T Q) = (I (x) M^T) vec Q ; vec(Q M) = (M^T (x) I) vec Q.
    for (Index col = 0; col < k; ++col)
        big.block(col * k, col * k, k, k) += mt;
    for (Index br = 0; br < k; ++br)
        for (Index bc = 0; bc < k; ++bc)
            big.block(br * k, bc * k, k, k) += mt(bc, br) * Matrix::Identity(k, k);
    Vector vec_rhs(k * k);
    for (Index col = 0; col < k; ++col) vec_rhs.segment(col * k, k) = rhs.col(col);
    Eigen::FullPivLU<Matrix> lu(big);
    if (!lu.isInvertible())
        throw NoCertificate("Lyapunov equation is singular (eigenvalue pairing at zero sum)");
    const Vector vec_q = lu.solve(vec_rhs);
    Matrix q(k, k);
    for (Index col = 0; col < k; ++col) q.col(col) = vec_q.segment(col * k, k);
    return 0.5 * (q + q.transpose());
}

/// Real invariant-subspace bases of a matrix, split by a predicate on the
/// block eigenvalue (one column per real eigenvalue, two per complex pair).
struct RealSplit {
    Matrix first;   // columns where pred(eig) holds
    Matrix second;  // the rest
};

template <class Pred>
RealSplit real_eigen_split(const Matrix& a, Pred&& pred) {
    const Index n = a.rows();
    Eigen::EigenSolver<Matrix> es(a);
    if (es.info() != Eigen::Success) throw Error("eigensolver failed");
    const Matrix d = es.pseudoEigenvalueMatrix();
    const Matrix v = es.pseudoEigenvectors();
    std::vector<Index> fcols, scols;
    Index i = 0;
    while (i < n) {
        const bool pair = (i + 1 < n) && std::abs(d(i, i + 1)) > 0.0;
        const std::complex<double> eig =
            pair ? std::complex<double>(d(i, i), d(i, i + 1)) : std::complex<double>(d(i, i), 0.0);
        auto& dst = pred(eig) ? fcols : scols;
        dst.push_back(i);
        if (pair) dst.push_back(i + 1);
        i += pair ? 2 : 1;
    }
    RealSplit out;
    out.first.resize(n, static_cast<Index>(fcols.size()));
    out.second.resize(n, static_cast<Index>(scols.size()));
    for (std::size_t c = 0; c < fcols.size(); ++c) out.first.col(static_cast<Index>(c)) = v.col(fcols[c]);
    for (std::size_t c = 0; c < scols.size(); ++c) out.second.col(static_cast<Index>(c)) = v.col(scols[c]);
    return out;
}

}  // namespace detail

inline QuadraticForm adapted_form_search(const Matrix& a, Index q, double spectral_tol = 1e-6,
                                         double cond_cap = 1e12) {
    if (a.rows() != a.cols() || a.rows() == 0)
        throw BadDimension("operator must be square and nonempty");
    const Index n = a.rows();
    {
        Eigen::EigenSolver<Matrix> es(a);
        double radius = 0.0;
        for (Index i = 0; i < n; ++i) radius = std::max(radius, std::abs(es.eigenvalues()[i]));
        Index stable = 0;
        for (Index i = 0; i < n; ++i) {
            const double re = es.eigenvalues()[i].real();
            if (std::abs(re) <= spectral_tol * std::max(1.0, radius))
                throw NotHyperbolic("eigenvalue with real part " + std::to_string(re) +
                                    " inside the hyperbolicity band");
            if (re < 0) ++stable;
        }
        if (stable != q)
            throw IndexMismatch("operator has " + std::to_string(stable) +
                                " stable eigenvalues, requested index " + std::to_string(q));
    }
    const detail::RealSplit split =
        detail::real_eigen_split(a, [](std::complex<double> e) { return e.real() < 0.0; });
    Matrix t(n, n);
    t << split.first, split.second;
    Eigen::JacobiSVD<Matrix> svd(t);
    if (svd.singularValues()(n - 1) < svd.singularValues()(0) / cond_cap)
        throw NoCertificate("invariant-subspace basis is too ill-conditioned");

    const Matrix c = Eigen::PartialPivLU<Matrix>(t).solve(a * t);
    const Index s = q, u = n - q;
    Matrix core = Matrix::Zero(n, n);
    if (s > 0) {
        const Matrix qs =
            detail::lyapunov_solve(c.topLeftCorner(s, s), Matrix(-Matrix::Identity(s, s)));
        if (Eigen::SelfAdjointEigenSolver<Matrix>(qs, Eigen::EigenvaluesOnly).eigenvalues()(0) <=
            0.0)
            throw NoCertificate("stable Lyapunov solution is not positive definite");
        core.topLeftCorner(s, s) = -qs;
    }
    if (u > 0) {
        const Matrix qu =
            detail::lyapunov_solve(c.bottomRightCorner(u, u), Matrix(Matrix::Identity(u, u)));
        if (Eigen::SelfAdjointEigenSolver<Matrix>(qu, Eigen::EigenvaluesOnly).eigenvalues()(0) <=
            0.0)
            throw NoCertificate("unstable Lyapunov solution is not positive definite");
        core.bottomRightCorner(u, u) = qu;
    }
    const Matrix tinv = Eigen::FullPivLU<Matrix>(t).inverse();
    Matrix j = tinv.transpose() * core * tinv;
    j = 0.5 * (j + j.transpose());
    j /= j.cwiseAbs().maxCoeff();

    QuadraticForm out(j);
    if (out.index_q() != q) throw NoCertificate("constructed form has the wrong index");
    Matrix lyap = j * a + a.transpose() * j;
    lyap = 0.5 * (lyap + lyap.transpose());
    if (Eigen::SelfAdjointEigenSolver<Matrix>(lyap, Eigen::EigenvaluesOnly).eigenvalues()(0) <= 0.0)
        throw NoCertificate("constructed form fails the derivative positivity check");
    return out;
}

// ---------------------------------------------------------------------------
// Adapted form for a hyperbolic linear map (used on period maps of the
// linear Poincare flow): negative-definite on the stable invariant subspace,
// positive-definite on the unstable one, built from the real normal-form
// basis. In that basis each block is a multiple of a rotation, so the polar
// factors of (J, P) recover exactly the multiplier moduli.
// ---------------------------------------------------------------------------
inline QuadraticForm floquet_adapted_form(const Matrix& p, double unit_tol = 1e-9,
                                          double cond_cap = 1e12) {
    if (p.rows() != p.cols() || p.rows() == 0)
        throw BadDimension("operator must be square and nonempty");
    const Index n = p.rows();
    {
        Eigen::EigenSolver<Matrix> es(p);
        for (Index i = 0; i < n; ++i) {
            const double mod = std::abs(es.eigenvalues()[i]);
            if (std::abs(mod - 1.0) <= unit_tol)
                throw NotHyperbolic("multiplier with modulus " + std::to_string(mod) +
                                    " on the unit circle");
        }
    }
    const detail::RealSplit split =
        detail::real_eigen_split(p, [](std::complex<double> e) { return std::abs(e) < 1.0; });
    const Index s = split.first.cols();
    Matrix g(n, n);
    g << split.first, split.second;
    Eigen::JacobiSVD<Matrix> svd(g);
    if (svd.singularValues()(n - 1) < svd.singularValues()(0) / cond_cap)
        throw NoCertificate("Floquet basis is too ill-conditioned");
    Matrix d = Matrix::Identity(n, n);
    for (Index i = 0; i < s; ++i) d(i, i) = -1.0;
    const Matrix ginv = Eigen::FullPivLU<Matrix>(g).inverse();
    Matrix j = ginv.transpose() * d * ginv;
    j = 0.5 * (j + j.transpose());
    j /= j.cwiseAbs().maxCoeff();
    return QuadraticForm(j);
}

// ---------------------------------------------------------------------------
// Orbit-adapted field: a periodic table of forms along a hyperbolic orbit,
// built so that every grid interval is strictly separated with an explicit
// certificate. Frames are (stable bundle | flow | unstable bundle); the
// stable weight P_i and unstable weight R_i come from periodic fixed-point
// sweeps of
//     P_i = I + C_i^T P_{i+1} C_i / lambda_i,
//     R_{i+1} = I + lambda_i C_i^{-T} R_i C_i^{-1},
// with per-step budgets lambda_i = (flow growth)^2 * g. The common ratio g
// places the cumulative budget at the geometric mean of the squared largest
// stable multiplier and the flow cap 1, which is exactly the window in which
// all three blocks separate strictly.
// ---------------------------------------------------------------------------
struct OrbitFormConstruction {
    QuadraticFormField field;
    double growth_ratio = 0.0;        // g above; margin on the flow block is 1 - g
    double stable_wrap_angle = 0.0;   // bundle transport consistency at the seam
    double unstable_wrap_angle = 0.0;
    double worst_frame_cond = 0.0;
    double worst_block_defect = 0.0;  // leakage of A_i S_i outside span S_{i+1}
};

inline OrbitFormConstruction orbit_adapted_field(const VectorFieldModel& model,
                                                 const PeriodicOrbit& orbit, long m = 128,
                                                 const IntegratorOptions& opts_in = {}) {
    const Index n = model.dim();
    if (m < 8) throw BadDimension("orbit field needs at least 8 samples");
    IntegratorOptions opts = opts_in;
    opts.dense = false;

    std::vector<double> times(static_cast<std::size_t>(m) + 1);
    for (long i = 0; i <= m; ++i)
        times[static_cast<std::size_t>(i)] =
            orbit.period * static_cast<double>(i) / static_cast<double>(m);
    const StepOperators ops = step_operators(model, orbit.anchor, times, opts);

    // Invariant bundles at the anchor from the monodromy spectrum. Splitting
    // by modulus twice drops the trivial (flow) eigenvalue near 1.
    const Matrix stable0 =
        detail::real_eigen_split(orbit.monodromy,
                                 [](std::complex<double> e) { return std::abs(e) < 1.0 - 1e-6; })
            .first;
    const Matrix unstable_raw =
        detail::real_eigen_split(orbit.monodromy,
                                 [](std::complex<double> e) { return std::abs(e) > 1.0 + 1e-6; })
            .first;
    const Index s = stable0.cols();
    const Index u = unstable_raw.cols();
    if (s + u != n - 1)
        throw NotHyperbolic("orbit has " + std::to_string(n - 1 - s - u) +
                            " nontrivial multipliers on the unit circle");

    // Per-sample frames: transport the unstable bundle forward and the
    // stable bundle backward (each direction is the attracting one for the
    // respective bundle, so transport errors decay instead of growing).
    std::vector<Matrix> sbasis(static_cast<std::size_t>(m) + 1), ubasis(static_cast<std::size_t>(m) + 1);
    if (u > 0) {
        ubasis[0] = orthonormalize(unstable_raw);
        for (long i = 0; i < m; ++i)
            ubasis[static_cast<std::size_t>(i) + 1] =
                orthonormalize(ops.ops[static_cast<std::size_t>(i)] * ubasis[static_cast<std::size_t>(i)]);
    }
    if (s > 0) {
        sbasis[static_cast<std::size_t>(m)] = orthonormalize(stable0);
        for (long i = m - 1; i >= 0; --i) {
            Eigen::FullPivLU<Matrix> lu(ops.ops[static_cast<std::size_t>(i)]);
            if (!lu.isInvertible())
                throw NoCertificate("step operator is singular during bundle transport");
            sbasis[static_cast<std::size_t>(i)] =
                orthonormalize(lu.solve(sbasis[static_cast<std::size_t>(i) + 1]));
        }
    }

    OrbitFormConstruction out;
    if (s > 0) out.stable_wrap_angle = max_principal_angle(sbasis[0], sbasis[static_cast<std::size_t>(m)]);
    if (u > 0) out.unstable_wrap_angle = max_principal_angle(ubasis[0], ubasis[static_cast<std::size_t>(m)]);

    // Flow directions and per-step growth.
    std::vector<Vector> fdir(static_cast<std::size_t>(m) + 1);
    std::vector<double> fnorm(static_cast<std::size_t>(m) + 1);
    for (long i = 0; i <= m; ++i) {
        const Vector xv = model.eval(ops.states[static_cast<std::size_t>(i)]);
        fnorm[static_cast<std::size_t>(i)] = xv.norm();
        if (fnorm[static_cast<std::size_t>(i)] < 1e-12)
            throw SingularPoint("orbit passes too close to an equilibrium");
        fdir[static_cast<std::size_t>(i)] = xv / fnorm[static_cast<std::size_t>(i)];
    }

    // Restriction factors and multiplier targets.
    std::vector<Matrix> cs(static_cast<std::size_t>(m)), cu(static_cast<std::size_t>(m));
    for (long i = 0; i < m; ++i) {
        const Matrix& a = ops.ops[static_cast<std::size_t>(i)];
        if (s > 0) {
            const Matrix img = a * sbasis[static_cast<std::size_t>(i)];
            cs[static_cast<std::size_t>(i)] = sbasis[static_cast<std::size_t>(i) + 1].transpose() * img;
            const double defect =
                (img - sbasis[static_cast<std::size_t>(i) + 1] * cs[static_cast<std::size_t>(i)]).norm() /
                std::max(img.norm(), 1e-300);
            out.worst_block_defect = std::max(out.worst_block_defect, defect);
        }
        if (u > 0) {
            const Matrix img = a * ubasis[static_cast<std::size_t>(i)];
            cu[static_cast<std::size_t>(i)] = ubasis[static_cast<std::size_t>(i) + 1].transpose() * img;
            const double defect =
                (img - ubasis[static_cast<std::size_t>(i) + 1] * cu[static_cast<std::size_t>(i)]).norm() /
                std::max(img.norm(), 1e-300);
            out.worst_block_defect = std::max(out.worst_block_defect, defect);
        }
    }

    double rho_s_max = 0.0, rho_u_min = std::numeric_limits<double>::infinity();
    for (const auto& mu : orbit.multipliers) {
        const double mod = std::abs(mu);
        if (mod < 1.0)
            rho_s_max = std::max(rho_s_max, mod);
        else
            rho_u_min = std::min(rho_u_min, mod);
    }
    const double cap_upper = 1.0;  // the flow block multiplies to exactly 1 over a period
    const double cap_lower = s > 0 ? sq(rho_s_max) : cap_upper * std::exp(-2.0);
    const double target = std::sqrt(cap_lower * cap_upper);
    const double g = std::pow(target, 1.0 / static_cast<double>(m));
    out.growth_ratio = g;

    std::vector<double> lambda(static_cast<std::size_t>(m));
    for (long i = 0; i < m; ++i)
        lambda[static_cast<std::size_t>(i)] =
            sq(fnorm[static_cast<std::size_t>(i) + 1] / fnorm[static_cast<std::size_t>(i)]) * g;

    // Periodic fixed-point sweeps for the block weights.
    std::vector<Matrix> pw(static_cast<std::size_t>(m), Matrix::Identity(s, s));
    if (s > 0) {
        for (int sweep = 0; sweep < 500; ++sweep) {
            double diff = 0.0, scale = 1.0;
            for (long i = m - 1; i >= 0; --i) {
                const std::size_t ii = static_cast<std::size_t>(i);
                const std::size_t inext = static_cast<std::size_t>((i + 1) % m);
                const Matrix next = Matrix::Identity(s, s) +
                                    cs[ii].transpose() * pw[inext] * cs[ii] / lambda[ii];
                diff = std::max(diff, (next - pw[ii]).cwiseAbs().maxCoeff());
                scale = std::max(scale, next.cwiseAbs().maxCoeff());
                pw[ii] = next;
            }
            if (diff <= 1e-13 * scale) break;
            if (sweep == 499)
                throw NoCertificate("stable weight sweep failed to converge");
        }
    }
    std::vector<Matrix> rw(static_cast<std::size_t>(m), Matrix::Identity(u, u));
    if (u > 0) {
        for (int sweep = 0; sweep < 500; ++sweep) {
            double diff = 0.0, scale = 1.0;
            for (long i = 0; i < m; ++i) {
                const std::size_t ii = static_cast<std::size_t>(i);
                const std::size_t inext = static_cast<std::size_t>((i + 1) % m);
                Eigen::FullPivLU<Matrix> lu(cu[ii]);
                if (!lu.isInvertible())
                    throw NoCertificate("unstable restriction became singular");
                const Matrix cinv = lu.inverse();
                const Matrix next = Matrix::Identity(u, u) +
                                    lambda[ii] * cinv.transpose() * rw[ii] * cinv;
                diff = std::max(diff, (next - rw[inext]).cwiseAbs().maxCoeff());
                scale = std::max(scale, next.cwiseAbs().maxCoeff());
                rw[inext] = next;
            }
            if (diff <= 1e-13 * scale) break;
            if (sweep == 499)
                throw NoCertificate("unstable weight sweep failed to converge");
        }
    }

    // Assemble J_i = F^{-T} diag(-P_i, 1, R_i) F^{-1}.
    std::vector<Matrix> forms(static_cast<std::size_t>(m));
    std::vector<Vector> points(static_cast<std::size_t>(m));
    std::vector<double> ftimes(static_cast<std::size_t>(m));
    out.worst_frame_cond = 1.0;
    for (long i = 0; i < m; ++i) {
        const std::size_t ii = static_cast<std::size_t>(i);
        Matrix frame(n, n);
        Index col = 0;
        for (Index cidx = 0; cidx < s; ++cidx) frame.col(col++) = sbasis[ii].col(cidx);
        frame.col(col++) = fdir[ii];
        for (Index cidx = 0; cidx < u; ++cidx) frame.col(col++) = ubasis[ii].col(cidx);
        Eigen::JacobiSVD<Matrix> svd(frame);
        const double cond = svd.singularValues()(0) / svd.singularValues()(n - 1);
        out.worst_frame_cond = std::max(out.worst_frame_cond, cond);
        if (!(cond < 1e10))
            throw NoCertificate("orbit frame is nearly degenerate (bundles almost tangent)");
        Matrix core = Matrix::Zero(n, n);
        if (s > 0) core.topLeftCorner(s, s) = -pw[ii];
        core(s, s) = 1.0;
        if (u > 0) core.bottomRightCorner(u, u) = rw[ii];
        const Matrix finv = Eigen::FullPivLU<Matrix>(frame).inverse();
        Matrix j = finv.transpose() * core * finv;
        forms[ii] = 0.5 * (j + j.transpose());
        points[ii] = ops.states[ii];
        ftimes[ii] = times[ii];
    }
    out.field = QuadraticFormField::orbit_table(std::move(ftimes), std::move(points),
                                                std::move(forms), orbit.period);
    return out;
}

// ---------------------------------------------------------------------------
// Closed-form field for the planar limit cycle model: in the cylindrical
// frame (radial, z | tangential) the form is diag(-1, -1, +1), which works
// out to J(x) = -I + 2 t t^T with t the unit tangential direction. Both the
// matrix and its directional derivative are analytic, so this field also
// cross-checks the finite-difference path.
// ---------------------------------------------------------------------------
inline QuadraticFormField planar_cycle_frame(double min_radius = 0.5) {
    auto tangential = [](const Vector& x) {
        Vector t(3);
        const double r = std::sqrt(x[0] * x[0] + x[1] * x[1]);
        t << -x[1] / r, x[0] / r, 0.0;
        return t;
    };
    QuadraticFormField::MatrixFn fn = [tangential](const Vector& x) {
        const Vector t = tangential(x);
        return Matrix(-Matrix::Identity(3, 3) + 2.0 * t * t.transpose());
    };
    QuadraticFormField::DerivFn deriv = [tangential](const Vector& x, const Vector& d) {
        const double r = std::sqrt(x[0] * x[0] + x[1] * x[1]);
        const Vector t = tangential(x);
        // dt = Rot90 (d_planar - rhat (rhat . d_planar)) / r
        Vector dp(3);
        dp << d[0], d[1], 0.0;
        Vector rhat(3);
        rhat << x[0] / r, x[1] / r, 0.0;
        const Vector w = dp - rhat * rhat.dot(dp);
        Vector dt(3);
        dt << -w[1] / r, w[0] / r, 0.0;
        return Matrix(2.0 * (dt * t.transpose() + t * dt.transpose()));
    };
    QuadraticFormField::DomainFn domain = [min_radius](const Vector& x) {
        return x[0] * x[0] + x[1] * x[1] > min_radius * min_radius;
    };
    return QuadraticFormField::spatial(3, 2, std::move(fn), std::move(deriv), std::move(domain),
                                       "planar_cycle_frame");
}

}  // namespace coneflow

#endif
