#ifndef CONEFLOW_QUADRATIC_FORM_HPP
#define CONEFLOW_QUADRATIC_FORM_HPP

#include "coneflow/common.hpp"

#include <utility>

namespace coneflow {

// ---------------------------------------------------------------------------
// Non-degenerate symmetric bilinear form J on R^n. Eigen-decomposed once at
// construction; everything downstream (signature, adapted frames, cone
// classification bands) reads off the cached spectrum. All tolerances that
// depend on the scale of J are taken relative to the largest |eigenvalue| so
// that J and c*J (c > 0) behave identically.
// ---------------------------------------------------------------------------
class QuadraticForm {
public:
    explicit QuadraticForm(Matrix m, double degeneracy_rel = 1e-10) : matrix_(std::move(m)) {
        if (matrix_.rows() != matrix_.cols() || matrix_.rows() == 0)
            throw BadDimension("quadratic form matrix must be square and nonempty");
        const double scale = matrix_.cwiseAbs().maxCoeff();
        const double asym = (matrix_ - matrix_.transpose()).cwiseAbs().maxCoeff();
        if (scale == 0.0 || asym > 1e-12 * scale)
            throw DegenerateForm("form matrix is not symmetric to working precision");
        matrix_ = 0.5 * (matrix_ + matrix_.transpose());  // kill rounding asymmetry

        Eigen::SelfAdjointEigenSolver<Matrix> es(matrix_);
        if (es.info() != Eigen::Success)
            throw DegenerateForm("eigendecomposition of form matrix failed");
        eigenvalues_ = es.eigenvalues();  // ascending
        eigenvectors_ = es.eigenvectors();

        const double max_abs = eigenvalues_.cwiseAbs().maxCoeff();
        degeneracy_tol_ = degeneracy_rel * max_abs;
        const double min_abs = eigenvalues_.cwiseAbs().minCoeff();
        if (min_abs < degeneracy_tol_)
            throw DegenerateForm("form is degenerate: |eigenvalue| " + std::to_string(min_abs) +
                                 " below tolerance " + std::to_string(degeneracy_tol_));
        q_ = 0;
        for (Index i = 0; i < eigenvalues_.size(); ++i)
            if (eigenvalues_[i] < 0) ++q_;
        lu_.compute(matrix_);
    }

    const Matrix& matrix() const { return matrix_; }
    Index dim() const { return matrix_.rows(); }
    Index index_q() const { return q_; }                 // negative squares
    Index index_p() const { return dim() - q_; }         // positive squares
    bool indefinite() const { return q_ > 0 && q_ < dim(); }

    /// J(v) = v^T J v.
    double evaluate(const Vector& v) const { return v.dot(matrix_ * v); }
    /// (u, v) = u^T J v.
    double bilinear(const Vector& u, const Vector& v) const { return u.dot(matrix_ * v); }

    Vector apply(const Vector& v) const { return matrix_ * v; }
    Matrix solve(const Matrix& rhs) const { return lu_.solve(rhs); }

    /// Eigenvalues in ascending order (all bounded away from zero).
    const Vector& eigenvalues() const { return eigenvalues_; }
    const Matrix& eigenvectors() const { return eigenvectors_; }
    double max_abs_eigenvalue() const { return eigenvalues_.cwiseAbs().maxCoeff(); }
    double min_abs_eigenvalue() const { return eigenvalues_.cwiseAbs().minCoeff(); }
    double degeneracy_tol() const { return degeneracy_tol_; }

    QuadraticForm negated() const { return QuadraticForm(-matrix_); }

private:
    Matrix matrix_;
    Eigen::PartialPivLU<Matrix> lu_;
    Vector eigenvalues_;
    Matrix eigenvectors_;
    Index q_ = 0;
    double degeneracy_tol_ = 0.0;
};

struct Signature {
    Index positive = 0;  // p
    Index negative = 0;  // q
};

inline Signature signature(const QuadraticForm& j) {
    return Signature{j.index_p(), j.index_q()};
}

// ---------------------------------------------------------------------------
// Adapted frame: columns b_i with b_i^T J b_j = ±delta_ij, negative squares
// first. Built from the eigendecomposition (stable, and the only property
// needed is the congruence identity).
// ---------------------------------------------------------------------------
struct AdaptedFrame {
    Matrix basis;
    std::vector<int> signature_pattern;  // q entries -1, then p entries +1
};

inline AdaptedFrame lagrange_diagonalize(const QuadraticForm& j) {
    const Index n = j.dim();
    AdaptedFrame frame;
    frame.basis.resize(n, n);
    frame.signature_pattern.reserve(static_cast<std::size_t>(n));
    // SelfAdjointEigenSolver sorts ascending, so negative eigenvalues already
    // come first; rescale each eigenvector by |lambda|^{-1/2}.
    for (Index i = 0; i < n; ++i) {
        const double lambda = j.eigenvalues()[i];
        Vector col = j.eigenvectors().col(i) / std::sqrt(std::abs(lambda));
        Index imax = 0;
        col.cwiseAbs().maxCoeff(&imax);
        if (col[imax] < 0) col = -col;  // deterministic sign
        frame.basis.col(i) = col;
        frame.signature_pattern.push_back(lambda < 0 ? -1 : 1);
    }
    return frame;
}

// ---------------------------------------------------------------------------
// Cone classification. margin = J(v)/<v,v>; the zero band is relative to the
// largest |eigenvalue| of J so that the verdict is invariant under both
// v -> c*v and J -> c*J (c > 0).
// ---------------------------------------------------------------------------
enum class ConeSign { Positive, Negative, Zero };

struct ConeClass {
    ConeSign cls = ConeSign::Zero;
    double margin = 0.0;  // J(v)/<v,v>
};

inline const char* to_string(ConeSign c) {
    switch (c) {
        case ConeSign::Positive: return "Positive";
        case ConeSign::Negative: return "Negative";
        default: return "Zero";
    }
}

inline ConeClass classify(const QuadraticForm& j, const Vector& v, double band_rel = 1e-9) {
    const double vv = v.squaredNorm();
    if (vv == 0.0) throw ZeroVector("cannot classify the zero vector");
    ConeClass out;
    out.margin = j.evaluate(v) / vv;
    const double band = band_rel * j.max_abs_eigenvalue();
    if (out.margin > band)
        out.cls = ConeSign::Positive;
    else if (out.margin < -band)
        out.cls = ConeSign::Negative;
    else
        out.cls = ConeSign::Zero;
    return out;
}

// ---------------------------------------------------------------------------
// Gram-Schmidt under the J-bilinear form. Each output column satisfies
// (u_i, u_j) = ±delta_ij. A pivot whose self-product is null relative to its
// Euclidean size stops the process: reordering could hide genuinely null
// directions the caller should know about.
// ---------------------------------------------------------------------------
inline Matrix pseudo_gram_schmidt(const QuadraticForm& j, const Matrix& basis,
                                  double null_rel = 1e-10) {
    if (basis.rows() != j.dim())
        throw BadDimension("basis rows do not match form dimension");
    const Index k = basis.cols();
    Matrix u(basis.rows(), k);
    std::vector<double> sign(static_cast<std::size_t>(k));
    for (Index i = 0; i < k; ++i) {
        Vector w = basis.col(i);
        for (Index p = 0; p < i; ++p) {
            // (u_p, u_p) = ±1 after normalization, so the projection
            // coefficient is sign_p * (u_p, w).
            w -= sign[static_cast<std::size_t>(p)] * j.bilinear(u.col(p), w) * u.col(p);
        }
        const double ww = w.squaredNorm();
        const double jw = j.evaluate(w);
        if (ww == 0.0 || std::abs(jw) < null_rel * j.max_abs_eigenvalue() * ww)
            throw NullPivot("null pivot at input column " + std::to_string(i));
        u.col(i) = w / std::sqrt(std::abs(jw));
        sign[static_cast<std::size_t>(i)] = jw > 0 ? 1.0 : -1.0;
    }
    return u;
}

// ---------------------------------------------------------------------------
// J-orthogonal complement: E_perp = {v : <J e, v> = 0 for all e in E}.
// Returned and accepted subspaces are (Euclidean-)orthonormal spanning
// matrices; the direct-sum property requires J|E non-degenerate.
// ---------------------------------------------------------------------------
inline Matrix j_complement(const QuadraticForm& j, const Matrix& span_e) {
    if (span_e.rows() != j.dim())
        throw BadDimension("subspace rows do not match form dimension");
    const Matrix b = orthonormalize(span_e);
    if (b.cols() < span_e.cols())
        throw BadDimension("spanning set is linearly dependent");
    const Index n = j.dim();
    const Index k = b.cols();

    // Restriction gram matrix; a (numerically) singular restriction means the
    // complement would intersect E and the direct sum fails.
    const Matrix gram = b.transpose() * j.matrix() * b;
    Eigen::JacobiSVD<Matrix> gram_svd(gram);
    if (gram_svd.singularValues().minCoeff() < j.degeneracy_tol())
        throw DegenerateSubspace("form restricted to the subspace is degenerate");

    if (k == n) return Matrix(n, 0);
    // Kernel of the k x n constraint matrix B^T J.
    Eigen::JacobiSVD<Matrix> svd(Matrix(b.transpose() * j.matrix()), Eigen::ComputeFullV);
    Matrix kernel = svd.matrixV().rightCols(n - k);
    return orthonormalize(kernel);
}

/// Pseudo-adjoint L+ = J^{-1} L^T J, the unique operator with
/// (L v, w) = (v, L+ w) for the J-bilinear form.
inline Matrix pseudo_adjoint(const QuadraticForm& j, const Matrix& l) {
    if (l.rows() != j.dim() || l.cols() != j.dim())
        throw BadDimension("operator shape does not match form dimension");
    return j.solve(l.transpose() * j.matrix());
}

/// True iff U^T J U = J to the given tolerance (relative to the largest
/// |eigenvalue| of J, so the verdict is scale-free).
inline bool is_j_isometry(const QuadraticForm& j, const Matrix& u, double tol = 1e-8) {
    if (u.rows() != j.dim() || u.cols() != j.dim()) return false;
    const Matrix residual = u.transpose() * j.matrix() * u - j.matrix();
    return residual.cwiseAbs().maxCoeff() <= tol * j.max_abs_eigenvalue();
}

}  // namespace coneflow

#endif
