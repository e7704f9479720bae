#ifndef CONEFLOW_VERIFY_HPP
#define CONEFLOW_VERIFY_HPP

#include "coneflow/common.hpp"
#include "coneflow/field.hpp"
#include "coneflow/flow/equilibria.hpp"
#include "coneflow/flow/integrate.hpp"
#include "coneflow/flow/lyapunov.hpp"
#include "coneflow/flow/model.hpp"
#include "coneflow/flow/periodic.hpp"
#include "coneflow/quadratic_form.hpp"
#include "coneflow/separation.hpp"

#include <string>

namespace coneflow {

namespace detail {

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_stderr = std::numeric_limits<double>::infinity();
};

/// Least squares y ~ intercept + slope * x with the slope's standard error.
inline LineFit line_fit(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t m = x.size();
    if (m != y.size() || m < 2) throw BadDimension("line fit needs at least two matched samples");
    double xm = 0.0, ym = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        xm += x[i];
        ym += y[i];
    }
    xm /= static_cast<double>(m);
    ym /= static_cast<double>(m);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        sxx += sq(x[i] - xm);
        sxy += (x[i] - xm) * (y[i] - ym);
    }
    if (sxx == 0.0) throw BadDimension("line fit needs distinct sample times");
    LineFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = ym - fit.slope * xm;
    if (m > 2) {
        double ssr = 0.0;
        for (std::size_t i = 0; i < m; ++i) ssr += sq(y[i] - fit.intercept - fit.slope * x[i]);
        fit.slope_stderr = std::sqrt(ssr / (static_cast<double>(m) - 2.0) / sxx);
    }
    return fit;
}

/// Orthonormalize and complain if the transported subspace lost rank.
inline Matrix renorm_or_collapse(const Matrix& transported, const char* which) {
    Eigen::JacobiSVD<Matrix> svd(transported);
    const Index k = transported.cols();
    if (svd.singularValues()(k - 1) < 1e-13 * std::max(svd.singularValues()(0), 1e-300))
        throw SplitCollapse(std::string(which) + " subbundle lost rank during transport");
    return orthonormalize(transported);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Hyperbolicity report for a located periodic orbit: the uniform rate is the
// weakest multiplier exponent per unit time, and the transient constant is
// estimated from the non-orthogonality of the Floquet basis (exactly 1 for
// a normal period map).
// ---------------------------------------------------------------------------
struct HyperbolicOrbitReport {
    bool hyperbolic = false;
    Index index = 0;
    double lambda = 0.0;      // min |log|mu|| / T over nontrivial multipliers
    double k_estimate = 1.0;  // cond_2 of the real Floquet basis
    double weakest_modulus = 1.0;
};

inline HyperbolicOrbitReport verify_hyperbolic_orbit(const PeriodicOrbit& orbit) {
    HyperbolicOrbitReport rep;
    rep.hyperbolic = orbit.hyperbolic;
    rep.index = orbit.index;
    if (orbit.multipliers.empty()) {  // 1D "orbit" cannot exist, but stay defensive
        rep.lambda = 0.0;
        return rep;
    }
    double min_rate = std::numeric_limits<double>::infinity();
    double weakest_gap = std::numeric_limits<double>::infinity();
    for (const auto& mu : orbit.multipliers) {
        const double mod = std::abs(mu);
        min_rate = std::min(min_rate, std::abs(std::log(mod)) / orbit.period);
        if (std::abs(mod - 1.0) < weakest_gap) {
            weakest_gap = std::abs(mod - 1.0);
            rep.weakest_modulus = mod;
        }
    }
    rep.lambda = rep.hyperbolic ? min_rate : 0.0;
    Eigen::EigenSolver<Matrix> es(orbit.monodromy);
    Eigen::JacobiSVD<Matrix> svd(es.pseudoEigenvectors());
    const Index n = orbit.monodromy.rows();
    const double smin = svd.singularValues()(n - 1);
    rep.k_estimate = smin > 0.0 ? svd.singularValues()(0) / smin
                                : std::numeric_limits<double>::infinity();
    return rep;
}

// ---------------------------------------------------------------------------
// Dominated splitting along one trajectory segment. Both seed subspaces are
// transported forward by the cocycle with per-step re-orthonormalization;
// the tracked quantity is
//     g(t) = sum log sigma_max(A_i|E)  -  sum log sigma_min(A_i|F)
//           ~ log ( ||DX_t|E|| * ||DX_{-t}|F at X_t(x)|| ),
// which must decay linearly for domination. The fit discards the first half
// of the window as transient and demands the slope beat 3x its own standard
// error before claiming a verdict.
// ---------------------------------------------------------------------------
enum class DominationVerdict { NotDominated, Dominated };

inline const char* to_string(DominationVerdict v) {
    return v == DominationVerdict::Dominated ? "Dominated" : "NotDominated";
}

struct DominationReport {
    Index dim_e = 0;
    Index dim_f = 0;
    double lambda = 0.0;
    double lambda_stderr = 0.0;
    double k_constant = 0.0;
    std::vector<double> times;
    std::vector<double> log_ratio;
    DominationVerdict verdict = DominationVerdict::NotDominated;
};

inline DominationReport verify_dominated_splitting(const VectorFieldModel& model, const Vector& x0,
                                                   double t_final, const Matrix& e0,
                                                   const Matrix& f0, long steps = 80,
                                                   const IntegratorOptions& opts = {}) {
    const Index n = model.dim();
    if (e0.rows() != n || f0.rows() != n || e0.cols() < 1 || f0.cols() < 1)
        throw BadDimension("seed subspaces must be nonempty column bases");
    if (e0.cols() + f0.cols() != n)
        throw BadDimension("seed subspaces must be complementary in dimension");
    if (t_final <= 0.0 || steps < 4) throw BadDimension("need a positive window and >= 4 steps");

    std::vector<double> times(static_cast<std::size_t>(steps) + 1);
    for (long i = 0; i <= steps; ++i)
        times[static_cast<std::size_t>(i)] = t_final * static_cast<double>(i) / static_cast<double>(steps);
    const StepOperators ops = step_operators(model, x0, times, opts);

    DominationReport rep;
    rep.dim_e = e0.cols();
    rep.dim_f = f0.cols();
    rep.times = times;
    rep.log_ratio.assign(times.size(), 0.0);

    Matrix be = orthonormalize(e0);
    Matrix bf = orthonormalize(f0);
    double acc = 0.0;
    for (std::size_t i = 0; i < ops.ops.size(); ++i) {
        const Matrix ie = ops.ops[i] * be;
        const Matrix iff = ops.ops[i] * bf;
        Eigen::JacobiSVD<Matrix> sve(ie);
        Eigen::JacobiSVD<Matrix> svf(iff);
        acc += std::log(sve.singularValues()(0)) -
               std::log(svf.singularValues()(bf.cols() - 1));
        rep.log_ratio[i + 1] = acc;
        be = detail::renorm_or_collapse(ie, "E");
        bf = detail::renorm_or_collapse(iff, "F");
        Matrix joint(n, n);
        joint << be, bf;
        Eigen::JacobiSVD<Matrix> svj(joint);
        if (svj.singularValues()(n - 1) < 1e-12 * svj.singularValues()(0))
            throw SplitCollapse("transported E and F became tangent");
    }

    const std::size_t half = times.size() / 2;
    const std::vector<double> tx(times.begin() + static_cast<std::ptrdiff_t>(half), times.end());
    const std::vector<double> ty(rep.log_ratio.begin() + static_cast<std::ptrdiff_t>(half),
                                 rep.log_ratio.end());
    const detail::LineFit fit = detail::line_fit(tx, ty);
    rep.lambda = -fit.slope;
    rep.lambda_stderr = fit.slope_stderr;
    rep.k_constant = std::exp(fit.intercept);
    rep.verdict = (rep.lambda > 0.0 && rep.lambda > 3.0 * rep.lambda_stderr)
                      ? DominationVerdict::Dominated
                      : DominationVerdict::NotDominated;
    return rep;
}

// ---------------------------------------------------------------------------
// p-volume expansion inside a transported subbundle: tracks the smallest
// p-dimensional volume growth, i.e. the product of the p smallest singular
// values of the restricted cocycle (= sigma_min of its p-th exterior power),
// and fits C e^{lambda t}.
// ---------------------------------------------------------------------------
struct VolumeExpansionReport {
    Index dim_f = 0;
    Index p = 0;
    double lambda = 0.0;
    double lambda_stderr = 0.0;
    double c_constant = 0.0;
    std::vector<double> times;
    std::vector<double> log_volume;
    bool pass = false;
};

inline VolumeExpansionReport verify_volume_expansion(const VectorFieldModel& model,
                                                     const Vector& x0, double t_final,
                                                     const Matrix& f0, Index p, long steps = 80,
                                                     const IntegratorOptions& opts = {}) {
    const Index n = model.dim();
    if (f0.rows() != n || f0.cols() < 1) throw BadDimension("seed subspace must be nonempty");
    if (p < 1 || p > f0.cols()) throw BadDimension("wedge order must satisfy 1 <= p <= dim F");
    if (t_final <= 0.0 || steps < 4) throw BadDimension("need a positive window and >= 4 steps");

    std::vector<double> times(static_cast<std::size_t>(steps) + 1);
    for (long i = 0; i <= steps; ++i)
        times[static_cast<std::size_t>(i)] = t_final * static_cast<double>(i) / static_cast<double>(steps);
    const StepOperators ops = step_operators(model, x0, times, opts);

    VolumeExpansionReport rep;
    rep.dim_f = f0.cols();
    rep.p = p;
    rep.times = times;
    rep.log_volume.assign(times.size(), 0.0);

    Matrix bf = orthonormalize(f0);
    const Index k = bf.cols();
    double acc = 0.0;
    for (std::size_t i = 0; i < ops.ops.size(); ++i) {
        const Matrix img = ops.ops[i] * bf;
        Eigen::JacobiSVD<Matrix> svd(img);
        for (Index j = k - p; j < k; ++j) acc += std::log(svd.singularValues()(j));
        rep.log_volume[i + 1] = acc;
        bf = detail::renorm_or_collapse(img, "F");
    }

    const std::size_t half = times.size() / 2;
    const std::vector<double> tx(times.begin() + static_cast<std::ptrdiff_t>(half), times.end());
    const std::vector<double> ty(rep.log_volume.begin() + static_cast<std::ptrdiff_t>(half),
                                 rep.log_volume.end());
    const detail::LineFit fit = detail::line_fit(tx, ty);
    rep.lambda = fit.slope;
    rep.lambda_stderr = fit.slope_stderr;
    rep.c_constant = std::exp(fit.intercept);
    rep.pass = rep.lambda > 0.0 && rep.lambda > 3.0 * rep.lambda_stderr;
    return rep;
}

// ---------------------------------------------------------------------------
// Partial hyperbolicity, form-side criterion: strict separation along every
// probe segment plus non-negativity of the form on the field direction at
// every sampled state. The stable dimension of the claimed splitting is the
// index of the form.
// ---------------------------------------------------------------------------
struct OrbitSegment {
    Vector x0;
    double t_final = 0.0;
};

enum class PartialHypVerdict { Pass, SeparationFails, NonNegativityFails };

inline const char* to_string(PartialHypVerdict v) {
    switch (v) {
        case PartialHypVerdict::Pass: return "Pass";
        case PartialHypVerdict::SeparationFails: return "SeparationFails";
        default: return "NonNegativityFails";
    }
}

struct PartialHyperbolicityReport {
    PartialHypVerdict verdict = PartialHypVerdict::SeparationFails;
    Index stable_dim = 0;  // = index of the form
    std::vector<SeparationLevel> segment_levels;
    std::optional<Vector> nonnegativity_witness;  // state where J(X) < 0
    double worst_field_margin = std::numeric_limits<double>::infinity();
};

inline PartialHyperbolicityReport verify_partial_hyperbolicity(
    const QuadraticFormField& field, const VectorFieldModel& model,
    const std::vector<OrbitSegment>& segments, double grid_step = 0.0, double strict_rel = 1e-9) {
    if (segments.empty()) throw BadDimension("need at least one probe segment");
    PartialHyperbolicityReport rep;
    rep.stable_dim = field.index_q();
    bool separated = true;
    for (const OrbitSegment& seg : segments) {
        const OrbitSeparationReport r =
            check_separation_along_orbit(field, model, seg.x0, seg.t_final, grid_step, strict_rel);
        rep.segment_levels.push_back(r.overall);
        if (r.overall != SeparationLevel::StrictlySeparated) separated = false;
        for (const Vector& x : r.grid_states) {
            const Vector xv = model.eval(x);
            if (xv.norm() == 0.0) continue;  // equilibria impose no constraint
            const ConeClass cls = classify(field.at(x), xv);
            if (cls.margin < rep.worst_field_margin) rep.worst_field_margin = cls.margin;
            if (cls.cls == ConeSign::Negative && !rep.nonnegativity_witness)
                rep.nonnegativity_witness = x;
        }
    }
    if (!separated)
        rep.verdict = PartialHypVerdict::SeparationFails;
    else if (rep.nonnegativity_witness)
        rep.verdict = PartialHypVerdict::NonNegativityFails;
    else
        rep.verdict = PartialHypVerdict::Pass;
    return rep;
}

// ---------------------------------------------------------------------------
// Star certificate: every located critical element must pass its applicable
// condition. Equilibria need the Lyapunov form J A + A^T J positive definite
// (a form is searched when none is assigned); periodic orbits need strict
// separation along one period plus strict monotonicity of the period map of
// the linear Poincare flow. For sink/source orbits the nonnegative cone
// degenerates to the flow direction and the certificate records strict
// contraction/expansion of the period map instead.
// ---------------------------------------------------------------------------
enum class ElementStatus { Pass, Fails, Unverifiable };

inline const char* to_string(ElementStatus s) {
    switch (s) {
        case ElementStatus::Pass: return "Pass";
        case ElementStatus::Fails: return "Fails";
        default: return "Unverifiable";
    }
}

struct StarElementReport {
    std::string label;
    std::string kind;  // "equilibrium" | "orbit"
    Index index = 0;
    ElementStatus status = ElementStatus::Unverifiable;
    std::string detail;
    std::optional<FormPositivity> positivity;       // equilibria
    std::optional<SeparationLevel> separation;      // orbits
    std::optional<Monotonicity> lpf_monotonicity;   // orbits
    bool degenerate_cone = false;                   // sink/source orbit
    std::optional<Matrix> form_used;                // equilibrium form or anchor form
};

struct StarCertificate {
    bool pass = false;
    std::vector<StarElementReport> elements;
};

struct CriticalElements {
    std::vector<Equilibrium> equilibria;
    std::vector<PeriodicOrbit> orbits;
};

struct StarOptions {
    // Aligned with the element lists; missing entries trigger the automatic
    // constructions (adapted_form_search / orbit-adapted table).
    std::vector<std::optional<Matrix>> equilibrium_forms;
    std::vector<std::optional<QuadraticFormField>> orbit_fields;
    long orbit_samples = 128;
    double strict_rel = 1e-9;
};

inline StarCertificate star_certificate(const VectorFieldModel& model,
                                        const CriticalElements& elements,
                                        const StarOptions& options = {}) {
    StarCertificate cert;
    cert.pass = true;

    for (std::size_t e = 0; e < elements.equilibria.size(); ++e) {
        const Equilibrium& eq = elements.equilibria[e];
        StarElementReport rep;
        rep.label = "equilibrium-" + std::to_string(e);
        rep.kind = "equilibrium";
        rep.index = eq.index;
        try {
            Matrix j;
            if (e < options.equilibrium_forms.size() && options.equilibrium_forms[e]) {
                j = *options.equilibrium_forms[e];
            } else {
                j = adapted_form_search(model.jacobian(eq.point), eq.index).matrix();
            }
            rep.form_used = j;
            const QuadraticFormField field = QuadraticFormField::constant(j);
            const FormPositivity pos = singularity_form_positivity(field, model, eq.point);
            rep.positivity = pos;
            rep.status = pos.positive ? ElementStatus::Pass : ElementStatus::Fails;
            rep.detail = pos.positive
                             ? "derivative form positive definite (min eigenvalue " +
                                   std::to_string(pos.min_eigenvalue) + ")"
                             : "derivative form not positive (min eigenvalue " +
                                   std::to_string(pos.min_eigenvalue) + ")";
        } catch (const NotHyperbolic& err) {
            rep.status = ElementStatus::Fails;
            rep.detail = std::string("not hyperbolic: ") + err.what();
        } catch (const Error& err) {
            rep.status = ElementStatus::Unverifiable;
            rep.detail = err.what();
        }
        if (rep.status != ElementStatus::Pass) cert.pass = false;
        cert.elements.push_back(std::move(rep));
    }

    for (std::size_t o = 0; o < elements.orbits.size(); ++o) {
        const PeriodicOrbit& orbit = elements.orbits[o];
        StarElementReport rep;
        rep.label = "orbit-" + std::to_string(o);
        rep.kind = "orbit";
        rep.index = orbit.index;
        try {
            if (!orbit.hyperbolic)
                throw NotHyperbolic("orbit has a nontrivial multiplier on the unit circle");

            std::optional<QuadraticFormField> assigned;
            if (o < options.orbit_fields.size() && options.orbit_fields[o])
                assigned = options.orbit_fields[o];
            const QuadraticFormField field =
                assigned ? *assigned
                         : orbit_adapted_field(model, orbit, options.orbit_samples).field;
            rep.form_used = field.matrix_at(orbit.anchor);

            const OrbitSeparationReport sep = check_separation_along_orbit(
                field, model, orbit.anchor, orbit.period,
                /*grid_step=*/assigned ? orbit.period / static_cast<double>(options.orbit_samples)
                                       : 0.0,
                options.strict_rel);
            rep.separation = sep.overall;

            // Period map of the linear Poincare flow, checked against a form
            // adapted to its own Floquet splitting (guaranteed to exist for a
            // hyperbolic orbit; the verdict is what matters, and it is
            // invariant under the admissible form changes).
            const LinearPoincareMap lpf = lpf_period_map(field, model, orbit, orbit.monodromy_steps);
            [[maybe_unused]] const QuadraticForm j_n = floquet_adapted_form(lpf.matrix);
            // With that form the polar spectrum of the period map equals its
            // eigenvalue moduli, so read those off directly: forming L L+
            // would square a contraction of order 1e-10 straight into the
            // noise floor of the product.
            std::vector<double> r_minus, r_plus;
            {
                const Eigen::VectorXcd ev = Eigen::EigenSolver<Matrix>(lpf.matrix).eigenvalues();
                for (Index ei = 0; ei < ev.size(); ++ei) {
                    const double modulus = std::abs(ev[ei]);
                    (modulus < 1.0 ? r_minus : r_plus).push_back(modulus);
                }
                std::sort(r_minus.begin(), r_minus.end(), std::greater<>());
                std::sort(r_plus.begin(), r_plus.end());
            }
            rep.lpf_monotonicity = monotonicity_from_spectrum(r_minus, r_plus);

            const Index nontrivial = model.dim() - 1;
            rep.degenerate_cone = (orbit.index == 0 || orbit.index == nontrivial);

            const bool ok = sep.overall == SeparationLevel::StrictlySeparated &&
                            *rep.lpf_monotonicity == Monotonicity::StrictlyMonotone;
            rep.status = ok ? ElementStatus::Pass : ElementStatus::Fails;
            if (ok && rep.degenerate_cone)
                rep.detail = orbit.index == nontrivial
                                 ? "sink orbit: period map is a strict contraction"
                                 : "source orbit: period map is a strict expansion";
            else if (ok)
                rep.detail = "strict separation along the period and strictly monotone period map";
            else
                rep.detail = std::string("separation ") + to_string(sep.overall) +
                             ", period map " + to_string(*rep.lpf_monotonicity);
        } catch (const NotHyperbolic& err) {
            rep.status = ElementStatus::Fails;
            rep.detail = std::string("not hyperbolic: ") + err.what();
        } catch (const Error& err) {
            rep.status = ElementStatus::Unverifiable;
            rep.detail = err.what();
        }
        if (rep.status != ElementStatus::Pass) cert.pass = false;
        cert.elements.push_back(std::move(rep));
    }
    return cert;
}

// ---------------------------------------------------------------------------
// Homogeneity of the located critical elements: all periodic-orbit indices
// must agree with the declared index; singularities are compared against the
// lower-bound pattern Ind(sigma) >= Ind.
// ---------------------------------------------------------------------------
struct HomogeneityReport {
    Index declared_index = 0;
    bool homogeneous = false;
    bool orbit_set_empty = false;
    std::vector<std::pair<std::string, Index>> orbit_indices;
    struct SigmaComparison {
        std::string label;
        Index index = 0;
        bool satisfies_lower_bound = false;
    };
    std::vector<SigmaComparison> singularities;
    std::string note;
};

inline HomogeneityReport homogeneity_report(const VectorFieldModel& model,
                                            const CriticalElements& elements,
                                            Index declared_index) {
    for (const Equilibrium& eq : elements.equilibria)
        if (eq.point.size() != model.dim())
            throw BadDimension("equilibrium dimension does not match the model");
    HomogeneityReport rep;
    rep.declared_index = declared_index;
    rep.homogeneous = true;
    for (std::size_t o = 0; o < elements.orbits.size(); ++o) {
        rep.orbit_indices.emplace_back("orbit-" + std::to_string(o), elements.orbits[o].index);
        if (elements.orbits[o].index != declared_index) rep.homogeneous = false;
    }
    if (elements.orbits.empty()) {
        rep.orbit_set_empty = true;
        rep.note = "no periodic orbits located; homogeneity holds vacuously";
    }
    for (std::size_t e = 0; e < elements.equilibria.size(); ++e) {
        HomogeneityReport::SigmaComparison cmp;
        cmp.label = "equilibrium-" + std::to_string(e);
        cmp.index = elements.equilibria[e].index;
        cmp.satisfies_lower_bound = cmp.index >= declared_index;
        rep.singularities.push_back(std::move(cmp));
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Exponent bounds: time-averaged logs of the polar factors of the
// frame-transported cocycle, against partial sums of Lyapunov exponents.
// The step-wise polar spectrum does not depend on the choice of adapted
// frames (different choices differ by isometries of the diagonal form), so
// averaging the sorted families step by step is well defined.
// ---------------------------------------------------------------------------
struct ExponentBoundsReport {
    std::vector<double> chi;             // Lyapunov exponents, descending
    bool chi_converged = false;
    double chi_drift = 0.0;
    std::vector<double> avg_log_r_minus; // q values, descending
    std::vector<double> avg_log_r_plus;  // p values, ascending
    std::vector<double> slack_minus;     // k = 1..k1: sum avg log r- - sum chi-
    std::vector<double> slack_plus;      // k = 1..k2: sum chi+ - sum avg log r+
    double dt_used = 0.0;
    int refinements = 0;
    bool asserted = false;  // both convergence diagnostics passed
};

namespace detail {

struct PolarAverages {
    std::vector<double> log_r_minus;
    std::vector<double> log_r_plus;
};

inline PolarAverages polar_averages(const QuadraticFormField& field, const VectorFieldModel& model,
                                    const Vector& x0, double t_final, double dt,
                                    const IntegratorOptions& opts) {
    const long nsteps = std::max<long>(1, static_cast<long>(std::llround(t_final / dt)));
    std::vector<double> times(static_cast<std::size_t>(nsteps) + 1);
    for (long i = 0; i <= nsteps; ++i)
        times[static_cast<std::size_t>(i)] =
            t_final * static_cast<double>(i) / static_cast<double>(nsteps);
    const StepOperators ops = step_operators(model, x0, times, opts);

    std::vector<AdaptedFrame> frames;
    frames.reserve(ops.states.size());
    for (const Vector& x : ops.states) frames.push_back(lagrange_diagonalize(field.at(x)));

    const Matrix d = signature_matrix(frames.front().signature_pattern);
    const QuadraticForm dform(d);
    PolarAverages avg;
    avg.log_r_minus.assign(static_cast<std::size_t>(dform.index_q()), 0.0);
    avg.log_r_plus.assign(static_cast<std::size_t>(dform.index_p()), 0.0);
    for (std::size_t i = 0; i < ops.ops.size(); ++i) {
        const Matrix ltilde = pair_transport(frames[i], frames[i + 1], ops.ops[i]);
        try {
            const PolarDecomposition polar = polar_decompose(dform, ltilde);
            for (std::size_t j = 0; j < polar.r_minus.size(); ++j)
                avg.log_r_minus[j] += std::log(polar.r_minus[j]);
            for (std::size_t j = 0; j < polar.r_plus.size(); ++j)
                avg.log_r_plus[j] += std::log(polar.r_plus[j]);
        } catch (const NotSeparatedError& err) {
            throw NotSeparatedOnStep(std::string("polar factorization failed: ") + err.what(), i,
                                     times[i]);
        }
    }
    for (double& v : avg.log_r_minus) v /= t_final;
    for (double& v : avg.log_r_plus) v /= t_final;
    return avg;
}

}  // namespace detail

inline ExponentBoundsReport wojtkowski_bounds_check(const QuadraticFormField& field,
                                                    const VectorFieldModel& model, const Vector& x0,
                                                    double t_final, Index k1, Index k2,
                                                    double dt0 = 0.1, int max_refinements = 6,
                                                    double value_tol = 1e-3,
                                                    const LyapunovOptions& lyap_options = {},
                                                    const IntegratorOptions& opts = {}) {
    const Index q = field.index_q();
    const Index p = field.dim() - q;
    if (k1 < 0 || k1 > q) throw BadDimension("k1 must lie in [0, index]");
    if (k2 < 0 || k2 > p) throw BadDimension("k2 must lie in [0, coindex]");
    if (t_final <= 0.0) throw BadDimension("averaging window must be positive");

    ExponentBoundsReport rep;
    double dt = dt0;
    detail::PolarAverages avg = detail::polar_averages(field, model, x0, t_final, dt, opts);
    bool stable = false;
    for (int r = 0; r < max_refinements; ++r) {
        const double next_dt = dt / 2.0;
        const detail::PolarAverages finer =
            detail::polar_averages(field, model, x0, t_final, next_dt, opts);
        double change = 0.0;
        for (std::size_t j = 0; j < avg.log_r_minus.size(); ++j)
            change = std::max(change, std::abs(finer.log_r_minus[j] - avg.log_r_minus[j]));
        for (std::size_t j = 0; j < avg.log_r_plus.size(); ++j)
            change = std::max(change, std::abs(finer.log_r_plus[j] - avg.log_r_plus[j]));
        avg = finer;
        dt = next_dt;
        rep.refinements = r + 1;
        if (change < value_tol) {
            stable = true;
            break;
        }
    }
    if (!stable)
        throw NoConvergence("averaged polar spectrum did not stabilize under step refinement");
    rep.dt_used = dt;
    rep.avg_log_r_minus = avg.log_r_minus;
    rep.avg_log_r_plus = avg.log_r_plus;

    const LyapunovResult lyap = lyapunov_exponents(model, x0, t_final, lyap_options);
    rep.chi = lyap.exponents;
    rep.chi_converged = lyap.converged;
    rep.chi_drift = lyap.drift;

    // chi- pairs with r- in descending order (the q smallest exponents);
    // chi+ pairs with r+ in ascending order (the p largest exponents).
    std::vector<double> chi_minus(rep.chi.end() - q, rep.chi.end());
    std::vector<double> chi_plus(rep.chi.begin(), rep.chi.begin() + p);
    std::reverse(chi_plus.begin(), chi_plus.end());

    double sum_r = 0.0, sum_chi = 0.0;
    for (Index k = 0; k < k1; ++k) {
        sum_r += avg.log_r_minus[static_cast<std::size_t>(k)];
        sum_chi += chi_minus[static_cast<std::size_t>(k)];
        rep.slack_minus.push_back(sum_r - sum_chi);
    }
    sum_r = 0.0;
    sum_chi = 0.0;
    for (Index k = 0; k < k2; ++k) {
        sum_r += avg.log_r_plus[static_cast<std::size_t>(k)];
        sum_chi += chi_plus[static_cast<std::size_t>(k)];
        rep.slack_plus.push_back(sum_chi - sum_r);
    }
    rep.asserted = rep.chi_converged;
    return rep;
}

}  // namespace coneflow

#endif
