#ifndef CONEFLOW_SEPARATION_HPP
#define CONEFLOW_SEPARATION_HPP

#include "coneflow/common.hpp"
#include "coneflow/quadratic_form.hpp"

#include <functional>
#include <limits>
#include <numeric>

namespace coneflow {

namespace detail {

/// Golden-section maximization of a concave function on [lo, hi].
/// Returns the maximum value; *argmax receives the maximizer.
template <class F>
double golden_max(F&& g, double lo, double hi, double* argmax, int iters = 96) {
    constexpr double invphi = 0.6180339887498949;
    double a = lo, b = hi;
    double x1 = b - invphi * (b - a);
    double x2 = a + invphi * (b - a);
    double g1 = g(x1), g2 = g(x2);
    for (int it = 0; it < iters && (b - a) > 1e-14 * (std::abs(a) + std::abs(b) + 1.0); ++it) {
        if (g1 < g2) {
            a = x1;
            x1 = x2;
            g1 = g2;
            x2 = a + invphi * (b - a);
            g2 = g(x2);
        } else {
            b = x2;
            x2 = x1;
            g2 = g1;
            x1 = b - invphi * (b - a);
            g1 = g(x1);
        }
    }
    const double xm = 0.5 * (a + b);
    const double gm = g(xm);
    if (argmax) *argmax = xm;
    return gm;
}

inline double min_eigenvalue(const Matrix& sym) {
    return Eigen::SelfAdjointEigenSolver<Matrix>(sym, Eigen::EigenvaluesOnly).eigenvalues()(0);
}

inline double spectral_norm(const Matrix& m) {
    return Eigen::JacobiSVD<Matrix>(m).singularValues()(0);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Separation verdicts. All analysis happens in an adapted frame B of J
// (B^T J B = D with D diagonal ±1), which makes every quantity invariant
// under J -> c*J and under joint changes of frame. In those coordinates:
//
//   strictly separated  <=>  exists lambda >= 0 with G0 - lambda*D > 0,
//
// where G0 = (LB)^T J (LB). The map lambda -> min-eig(G0 - lambda*D) is
// concave, so a golden-section search finds the best certificate, and by the
// S-lemma its sign decides the verdict exactly:
//
//   max_lambda min-eig(G0 - lambda*D) = min { G0(y) : D(y) >= 0, |y| = 1 }.
// ---------------------------------------------------------------------------

enum class SeparationLevel { NotSeparated, Separated, StrictlySeparated };

inline const char* to_string(SeparationLevel s) {
    switch (s) {
        case SeparationLevel::StrictlySeparated: return "StrictlySeparated";
        case SeparationLevel::Separated: return "Separated";
        default: return "NotSeparated";
    }
}

struct SeparationVerdict {
    SeparationLevel level = SeparationLevel::NotSeparated;
    std::optional<double> certificate;  // lambda with L^T J L - lambda J >= 0 (> 0 if strict)
    std::optional<Vector> witness;      // v with J(v) >= 0 and J(Lv) <= 0
    // Exact minimum of J(Lv) over {J(v) >= 0} on the adapted-frame unit
    // sphere; > 0 iff strictly separated.
    double margin = 0.0;
};

inline SeparationVerdict check_separation(const QuadraticForm& j, const Matrix& l,
                                          double strict_rel = 1e-9) {
    if (l.rows() != j.dim() || l.cols() != j.dim())
        throw BadDimension("operator shape does not match form dimension");
    const Index n = j.dim();
    const Index q = j.index_q();
    const AdaptedFrame frame = lagrange_diagonalize(j);
    const Matrix& b = frame.basis;
    Vector dsign(n);
    for (Index i = 0; i < n; ++i) dsign[i] = frame.signature_pattern[static_cast<std::size_t>(i)];

    const Matrix lb = l * b;
    const Matrix g0 = lb.transpose() * j.matrix() * lb;  // symmetric
    const double scale = std::max(detail::spectral_norm(g0), 1e-300);
    const double tol = strict_rel * scale;

    SeparationVerdict out;

    if (q == n) {
        // Negative-definite form: the closed positive cone is {0} and the
        // separation condition is vacuous. Any large lambda certifies.
        out.level = SeparationLevel::StrictlySeparated;
        out.certificate = scale + 1.0;
        out.margin = scale + 1.0;  // min over an empty set; report the certificate margin
        return out;
    }

    const auto g = [&](double lambda) {
        Matrix m = g0;
        m.diagonal() -= lambda * dsign;
        return detail::min_eigenvalue(m);
    };
    // Any certifying lambda is bounded by |G0| (look at a +1 direction of D).
    double lambda_star = 0.0;
    const double gstar = detail::golden_max(g, 0.0, scale + 1.0, &lambda_star);

    // Deterministic sphere scan in adapted coordinates, used for witness
    // extraction; infeasible samples are rescaled onto the null cone, which
    // is where violations concentrate.
    Vector best_y;
    double best_val = std::numeric_limits<double>::infinity();
    const auto consider = [&](Vector y) {
        const double nrm = y.norm();
        if (nrm < 1e-14) return;
        y /= nrm;
        double dval = 0.0;
        for (Index i = 0; i < n; ++i) dval += dsign[i] * y[i] * y[i];
        if (dval < 0.0) {
            double neg = 0.0, pos = 0.0;
            for (Index i = 0; i < n; ++i) (dsign[i] < 0 ? neg : pos) += y[i] * y[i];
            if (pos < 1e-28) return;
            const double f = std::sqrt(pos / neg);
            for (Index i = 0; i < n; ++i)
                if (dsign[i] < 0) y[i] *= f;
            y /= y.norm();
        }
        const double val = y.dot(g0 * y);
        if (val < best_val) {
            best_val = val;
            best_y = y;
        }
    };
    Rng rng(0x5eedC0FFEEull);
    const int samples = 4096;
    for (int s = 0; s < samples; ++s) consider(rng.unit_vector(n));
    {
        // Pure positive-cone candidate: minimizer of G0 on the +1 block.
        Eigen::SelfAdjointEigenSolver<Matrix> es(
            Matrix(g0.bottomRightCorner(n - q, n - q)));
        Vector y = Vector::Zero(n);
        y.tail(n - q) = es.eigenvectors().col(0);
        consider(y);
    }

    if (gstar > tol) {
        out.level = SeparationLevel::StrictlySeparated;
        out.certificate = lambda_star;
        out.margin = gstar;
    } else if (gstar >= -tol) {
        out.level = SeparationLevel::Separated;
        out.certificate = lambda_star;
        out.margin = gstar;
        if (best_val <= tol) out.witness = b * best_y;  // J(Lv) ~ 0 attained here
    } else {
        out.level = SeparationLevel::NotSeparated;
        out.margin = gstar;
        if (best_val < 0.0) out.witness = b * best_y;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Polar decomposition L = R U of a J-separated operator: R = (L L+)^{1/2}
// is J-symmetric with positive spectrum, U is a J-isometry. The eigenvalues
// of R split into a negative family r_minus (J negative on the eigenvector)
// and a positive family r_plus. Repeated eigenvalues are handled per
// cluster: the signature of J restricted to the cluster's eigenspace decides
// how many copies land in each family.
// ---------------------------------------------------------------------------

struct PolarDecomposition {
    Matrix r;                     // J-symmetric factor, positive spectrum
    Matrix u;                     // J-isometry factor
    std::vector<double> r_minus;  // q values, sorted descending (front = r_-)
    std::vector<double> r_plus;   // p values, sorted ascending  (front = r_+)
    double reconstruction_residual = 0.0;  // |L - R U| / |L|
    double isometry_residual = 0.0;        // |U^T J U - J| / |J|
    double j_symmetry_residual = 0.0;      // |J R - R^T J| / |J R|
};

namespace detail {

/// Square root of a real upper-triangular matrix with positive diagonal
/// (standard triangular recurrence).
inline Matrix sqrt_upper_triangular(const Matrix& t) {
    const Index n = t.rows();
    Matrix x = Matrix::Zero(n, n);
    for (Index i = 0; i < n; ++i) x(i, i) = std::sqrt(t(i, i));
    for (Index d = 1; d < n; ++d) {
        for (Index i = 0; i + d < n; ++i) {
            const Index jcol = i + d;
            double s = t(i, jcol);
            for (Index k = i + 1; k < jcol; ++k) s -= x(i, k) * x(k, jcol);
            x(i, jcol) = s / (x(i, i) + x(jcol, jcol));
        }
    }
    return x;
}

}  // namespace detail

inline PolarDecomposition polar_decompose(const QuadraticForm& j, const Matrix& l,
                                          double boundary_rel = 1e-8) {
    if (l.rows() != j.dim() || l.cols() != j.dim())
        throw BadDimension("operator shape does not match form dimension");
    const Index n = j.dim();
    {
        Eigen::JacobiSVD<Matrix> svd(l);
        const Vector& sv = svd.singularValues();
        if (sv(n - 1) < 1e-13 * sv(0))
            throw SingularOperator("operator is numerically singular");
    }
    const Matrix s = l * pseudo_adjoint(j, l);

    Eigen::EigenSolver<Matrix> es(s);
    if (es.info() != Eigen::Success) throw NotSeparatedError("eigensolver failed on L L+");
    const auto& evals = es.eigenvalues();
    double radius = 0.0;
    for (Index i = 0; i < n; ++i) radius = std::max(radius, std::abs(evals[i]));
    for (Index i = 0; i < n; ++i) {
        if (std::abs(evals[i].imag()) > 1e-8 * std::max(radius, 1.0) || evals[i].real() <= 0.0)
            throw NotSeparatedError("L L+ has a nonreal or nonpositive eigenvalue");
    }

    // Sort eigenvalues (real by now) ascending with their eigenvectors.
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::sort(order.begin(), order.end(),
              [&](Index a, Index c) { return evals[a].real() < evals[c].real(); });

    const double cluster_tol = 1e-7 * std::max(radius, 1.0);
    std::vector<double> r_minus, r_plus;
    Index i = 0;
    while (i < n) {
        Index jend = i;
        while (jend + 1 < n &&
               evals[order[static_cast<std::size_t>(jend + 1)]].real() -
                       evals[order[static_cast<std::size_t>(jend)]].real() <=
                   cluster_tol)
            ++jend;
        const Index m = jend - i + 1;
        Matrix w(n, m);
        double mean = 0.0;
        for (Index c = 0; c < m; ++c) {
            const Index src = order[static_cast<std::size_t>(i + c)];
            Vector col = es.eigenvectors().col(src).real();
            const double cn = col.norm();
            if (cn < 1e-14) throw NotSeparatedError("degenerate eigenvector of L L+");
            w.col(c) = col / cn;
            mean += evals[src].real();
        }
        mean /= static_cast<double>(m);
        // Signature of J on the cluster eigenspace decides the family split.
        const Matrix gram = 0.5 * (w.transpose() * j.matrix() * w +
                                   (w.transpose() * j.matrix() * w).transpose());
        Eigen::SelfAdjointEigenSolver<Matrix> ges(gram);
        const double jb = boundary_rel * j.max_abs_eigenvalue();
        const double rv = std::sqrt(mean);
        for (Index c = 0; c < m; ++c) {
            const double ge = ges.eigenvalues()(c);
            if (std::abs(ge) < jb)
                throw NotSeparatedError(
                    "eigenvector of L L+ is J-null: operator at the separation boundary");
            (ge < 0 ? r_minus : r_plus).push_back(rv);
        }
        i = jend + 1;
    }
    if (static_cast<Index>(r_minus.size()) != j.index_q())
        throw NotSeparatedError("singular spectrum signature does not match the form index");
    std::sort(r_minus.begin(), r_minus.end(), std::greater<double>());
    std::sort(r_plus.begin(), r_plus.end());
    if (!r_minus.empty() && !r_plus.empty() && r_minus.front() > r_plus.front() + cluster_tol)
        throw NotSeparatedError("negative singular family exceeds positive family");

    // R = sqrt(S) via the real Schur form; with a verified real positive
    // spectrum the quasi-triangular factor is genuinely triangular.
    Eigen::RealSchur<Matrix> schur(s);
    const Matrix& t = schur.matrixT();
    for (Index k = 0; k + 1 < n; ++k)
        if (std::abs(t(k + 1, k)) > 1e-9 * std::max(radius, 1.0))
            throw NotSeparatedError("L L+ is not triangularizable over the reals");
    Matrix tt = t;
    for (Index k = 0; k + 1 < n; ++k) tt(k + 1, k) = 0.0;
    const Matrix root = detail::sqrt_upper_triangular(tt);

    PolarDecomposition out;
    out.r = schur.matrixU() * root * schur.matrixU().transpose();
    out.u = Eigen::PartialPivLU<Matrix>(out.r).solve(l);
    out.r_minus = std::move(r_minus);
    out.r_plus = std::move(r_plus);

    const double lnorm = std::max(l.norm(), 1e-300);
    out.reconstruction_residual = (l - out.r * out.u).norm() / lnorm;
    out.isometry_residual =
        (out.u.transpose() * j.matrix() * out.u - j.matrix()).norm() / j.matrix().norm();
    const Matrix jr = j.matrix() * out.r;
    out.j_symmetry_residual = (jr - jr.transpose()).norm() / std::max(jr.norm(), 1e-300);
    return out;
}

// ---------------------------------------------------------------------------
// Monotonicity: J(Lv) >= J(v) for all v <=> r_- <= 1 <= r_+ (strict with
// strict inequalities). Families may be empty when the form is definite; the
// corresponding comparison is then vacuous.
// ---------------------------------------------------------------------------

enum class Monotonicity { NotMonotone, Monotone, StrictlyMonotone };

inline const char* to_string(Monotonicity m) {
    switch (m) {
        case Monotonicity::StrictlyMonotone: return "StrictlyMonotone";
        case Monotonicity::Monotone: return "Monotone";
        default: return "NotMonotone";
    }
}

inline Monotonicity monotonicity_from_spectrum(const std::vector<double>& r_minus,
                                               const std::vector<double>& r_plus,
                                               double tol = 1e-9) {
    const double rm = r_minus.empty() ? 0.0 : r_minus.front();  // largest of the family
    const double rp = r_plus.empty()
                          ? std::numeric_limits<double>::infinity()
                          : r_plus.front();  // smallest of the family
    if (rm < 1.0 - tol && rp > 1.0 + tol) return Monotonicity::StrictlyMonotone;
    if (rm <= 1.0 + tol && rp >= 1.0 - tol) return Monotonicity::Monotone;
    return Monotonicity::NotMonotone;
}

inline Monotonicity is_j_monotone(const QuadraticForm& j, const Matrix& l, double tol = 1e-9) {
    const PolarDecomposition pd = polar_decompose(j, l);
    return monotonicity_from_spectrum(pd.r_minus, pd.r_plus, tol);
}

// ---------------------------------------------------------------------------
// Pencil bounds: the window {r : F - r J >= 0}, whose endpoints are the
// generalized eigenvalues of det(F - r J) = 0 adjacent to the feasible set.
// Nonempty exactly when F is nonnegative on the null cone of J.
// ---------------------------------------------------------------------------

struct PencilBounds {
    double r_lower = 0.0;  // r_-: supremum over C_- of F(v)/J(v)
    double r_upper = 0.0;  // r_+: infimum over C_+ of F(v)/J(v)
};

inline PencilBounds kuhne_bounds(const QuadraticForm& j, const Matrix& f_sym,
                                 double feas_rel = 1e-9) {
    if (f_sym.rows() != j.dim() || f_sym.cols() != j.dim())
        throw BadDimension("bilinear form shape does not match J");
    if ((f_sym - f_sym.transpose()).cwiseAbs().maxCoeff() >
        1e-12 * std::max(f_sym.cwiseAbs().maxCoeff(), 1e-300))
        throw BadDimension("input bilinear form must be symmetric");
    if (!j.indefinite())
        throw DegenerateForm("pencil bounds require an indefinite form");

    const Index n = j.dim();
    const AdaptedFrame frame = lagrange_diagonalize(j);
    const Matrix& b = frame.basis;
    Vector dsign(n);
    for (Index i = 0; i < n; ++i) dsign[i] = frame.signature_pattern[static_cast<std::size_t>(i)];
    const Matrix fhat = 0.5 * (b.transpose() * f_sym * b + (b.transpose() * f_sym * b).transpose());
    const double scale = std::max(detail::spectral_norm(fhat), 1e-300);

    const auto h = [&](double r) {
        Matrix m = fhat;
        m.diagonal() -= r * dsign;
        return detail::min_eigenvalue(m);
    };

    // Feasibility: max_r min-eig(F - r J) >= 0 <=> F >= 0 on the null cone
    // (equality-constrained S-lemma; J indefinite supplies the regularity).
    double a_star = 0.0;
    const double h_star = detail::golden_max(h, -(scale + 1.0), scale + 1.0, &a_star);
    if (h_star < -feas_rel * scale) {
        // Find a null-cone violation witness by a deterministic scan.
        Rng rng(0x5eedFEEDull);
        Vector best_y;
        double best_val = std::numeric_limits<double>::infinity();
        for (int sidx = 0; sidx < 4096; ++sidx) {
            Vector y = rng.unit_vector(n);
            double neg = 0.0, pos = 0.0;
            for (Index i = 0; i < n; ++i) (dsign[i] < 0 ? neg : pos) += y[i] * y[i];
            if (neg < 1e-28 || pos < 1e-28) continue;
            for (Index i = 0; i < n; ++i)
                if (dsign[i] < 0) y[i] *= std::sqrt(pos / neg);
            y /= y.norm();
            const double val = y.dot(fhat * y);
            if (val < best_val) {
                best_val = val;
                best_y = y;
            }
        }
        throw NotNonnegativeOnNullCone("form is negative on a null-cone direction",
                                       best_y.size() ? Vector(b * best_y) : Vector());
    }

    // Bisect outward from the feasible point for the window endpoints.
    const auto edge = [&](double inside, double outside) {
        double lo = inside, hi = outside;  // h(lo) >= 0 > h(hi) (or hi is the cap)
        for (int it = 0; it < 200 && std::abs(hi - lo) > 1e-15 * (scale + 1.0); ++it) {
            const double mid = 0.5 * (lo + hi);
            (h(mid) >= 0.0 ? lo : hi) = mid;
        }
        return 0.5 * (lo + hi);
    };
    PencilBounds out;
    if (h_star <= 0.0) {
        // Window collapsed to the single feasible point (e.g. F proportional to J).
        out.r_lower = out.r_upper = a_star;
    } else {
        out.r_lower = edge(a_star, -(scale + 1.0));
        out.r_upper = edge(a_star, scale + 1.0);
    }
    return out;
}

/// Volume-expansion rate on d-dimensional positive sections: the product of
/// the d smallest positive singular values r_+^1 ... r_+^d.
inline double sigma_d(const QuadraticForm& j, const Matrix& l, Index d) {
    const PolarDecomposition pd = polar_decompose(j, l);
    if (d < 1 || d > static_cast<Index>(pd.r_plus.size()))
        throw BadDimension("sigma_d order must lie in [1, p]");
    double prod = 1.0;
    for (Index k = 0; k < d; ++k) prod *= pd.r_plus[static_cast<std::size_t>(k)];
    return prod;
}

}  // namespace coneflow

#endif
