#ifndef CONEFLOW_COMMON_HPP
#define CONEFLOW_COMMON_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace coneflow {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// ---------------------------------------------------------------------------
// Error hierarchy. Analysis code throws; the scenario runner catches per
// analysis and records the failure instead of aborting the whole run.
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class DegenerateForm : public Error {
public:
    explicit DegenerateForm(const std::string& msg) : Error(msg) {}
};

class ZeroVector : public Error {
public:
    explicit ZeroVector(const std::string& msg) : Error(msg) {}
};

class NullPivot : public Error {
public:
    explicit NullPivot(const std::string& msg) : Error(msg) {}
};

class DegenerateSubspace : public Error {
public:
    explicit DegenerateSubspace(const std::string& msg) : Error(msg) {}
};

class NotSeparatedError : public Error {
public:
    explicit NotSeparatedError(const std::string& msg) : Error(msg) {}
};

class SingularOperator : public Error {
public:
    explicit SingularOperator(const std::string& msg) : Error(msg) {}
};

class BadDimension : public Error {
public:
    explicit BadDimension(const std::string& msg) : Error(msg) {}
};

class NotNonnegativeOnNullCone : public Error {
public:
    NotNonnegativeOnNullCone(const std::string& msg, Vector w)
        : Error(msg), witness(std::move(w)) {}
    Vector witness;
};

class StepFailure : public Error {
public:
    explicit StepFailure(const std::string& msg) : Error(msg) {}
};

class NoConvergence : public Error {
public:
    explicit NoConvergence(const std::string& msg) : Error(msg) {}
};

class NonTransverseSection : public Error {
public:
    explicit NonTransverseSection(const std::string& msg) : Error(msg) {}
};

class NotEquilibrium : public Error {
public:
    explicit NotEquilibrium(const std::string& msg) : Error(msg) {}
};

class OutsideDomain : public Error {
public:
    explicit OutsideDomain(const std::string& msg) : Error(msg) {}
};

class SingularPoint : public Error {
public:
    explicit SingularPoint(const std::string& msg) : Error(msg) {}
};

class NonAdmissibleDirection : public Error {
public:
    explicit NonAdmissibleDirection(const std::string& msg) : Error(msg) {}
};

class NotHyperbolic : public Error {
public:
    explicit NotHyperbolic(const std::string& msg) : Error(msg) {}
};

class IndexMismatch : public Error {
public:
    explicit IndexMismatch(const std::string& msg) : Error(msg) {}
};

class SuspectOrbit : public Error {
public:
    explicit SuspectOrbit(const std::string& msg) : Error(msg) {}
};

class SplitCollapse : public Error {
public:
    explicit SplitCollapse(const std::string& msg) : Error(msg) {}
};

class NoCertificate : public Error {
public:
    explicit NoCertificate(const std::string& msg) : Error(msg) {}
};

class NotSeparatedOnStep : public Error {
public:
    NotSeparatedOnStep(const std::string& msg, std::size_t step, double time)
        : Error(msg), step_index(step), step_time(time) {}
    std::size_t step_index;
    double step_time;
};

class ConfigInvalid : public Error {
public:
    explicit ConfigInvalid(const std::string& msg) : Error(msg) {}
};

class NoSeries : public Error {
public:
    explicit NoSeries(const std::string& msg) : Error(msg) {}
};

// ---------------------------------------------------------------------------
// Deterministic RNG (splitmix64 core). The double conversions below avoid
// std::*_distribution, whose output is implementation-defined, so seeded runs
// are reproducible across toolchains.
// ---------------------------------------------------------------------------

class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

    std::uint64_t next_u64() {
        // splitmix64
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    /// Uniform in [0,1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform in [a,b).
    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    /// Standard normal (Box-Muller, cached pair).
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925287 * u2;
        cached_ = r * std::sin(a);
        have_cached_ = true;
        return r * std::cos(a);
    }

    Vector normal_vector(Index n) {
        Vector v(n);
        for (Index i = 0; i < n; ++i) v[i] = normal();
        return v;
    }

    /// Random direction on the Euclidean unit sphere.
    Vector unit_vector(Index n) {
        Vector v = normal_vector(n);
        double nv = v.norm();
        while (nv < 1e-12) {
            v = normal_vector(n);
            nv = v.norm();
        }
        return v / nv;
    }

private:
    std::uint64_t state_;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

// ---------------------------------------------------------------------------
// Tolerance bundle with the defaults used throughout. Scenario files and the
// CLI can override individual entries by name.
// ---------------------------------------------------------------------------

struct Tolerances {
    double degeneracy_rel = 1e-10;     // form eigenvalue cutoff, relative to largest
    double classify_band = 1e-9;       // relative zero band for cone classification
    double congruence = 1e-10;         // adapted-frame residual
    double separation_strict = 1e-9;   // S-procedure strictness margin, relative
    double polar_residual = 1e-8;      // reconstruction / isometry residuals
    double monotone_cmp = 1e-9;        // r+- vs 1 comparisons
    double integrate_rel = 1e-9;
    double integrate_abs = 1e-12;
    double newton = 1e-12;             // equilibrium / shooting residual target
    double spectral = 1e-6;            // hyperbolicity |Re| cutoff
    double dedupe_radius = 1e-6;
    double floquet_trivial = 1e-4;     // trivial-multiplier acceptance window
    double lyapunov_drift = 5e-3;      // convergence diagnostic threshold
    double monotonicity_strict = 1e-8; // LPF minima, relative to local scale
};

inline double sq(double x) { return x * x; }

/// Largest principal angle between the column spans of two orthonormal bases.
inline double max_principal_angle(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) return 1.5707963267948966;
    Eigen::JacobiSVD<Matrix> svd(a.transpose() * b);
    const double smin = svd.singularValues().minCoeff();
    return std::acos(std::clamp(smin, -1.0, 1.0));
}

/// Euclidean-orthonormal basis of the column span (thin QR with sign fix so
/// the result is deterministic).
inline Matrix orthonormalize(const Matrix& basis, double rank_tol = 1e-12) {
    Eigen::ColPivHouseholderQR<Matrix> qr(basis);
    qr.setThreshold(rank_tol);
    const Index r = qr.rank();
    Matrix q = qr.householderQ() * Matrix::Identity(basis.rows(), r);
    // fix column signs by the largest-magnitude entry
    for (Index j = 0; j < q.cols(); ++j) {
        Index imax = 0;
        q.col(j).cwiseAbs().maxCoeff(&imax);
        if (q(imax, j) < 0) q.col(j) = -q.col(j);
    }
    return q;
}

}  // namespace coneflow

#endif
