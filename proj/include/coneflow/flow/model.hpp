#ifndef CONEFLOW_FLOW_MODEL_HPP
#define CONEFLOW_FLOW_MODEL_HPP

#include "coneflow/common.hpp"

#include <functional>
#include <utility>

namespace coneflow {

// ---------------------------------------------------------------------------
// A vector field X with analytic Jacobian DX. Models are immutable values;
// the builtin families carry their family tag and parameter list so scenario
// files and reports can name them.
// ---------------------------------------------------------------------------
class VectorFieldModel {
public:
    using EvalFn = std::function<Vector(const Vector&)>;
    using JacobianFn = std::function<Matrix(const Vector&)>;

    VectorFieldModel(Index dim, std::string family, std::vector<double> parameters, EvalFn eval,
                     JacobianFn jacobian)
        : dim_(dim),
          family_(std::move(family)),
          parameters_(std::move(parameters)),
          eval_(std::move(eval)),
          jacobian_(std::move(jacobian)) {}

    Index dim() const { return dim_; }
    const std::string& family() const { return family_; }
    const std::vector<double>& parameters() const { return parameters_; }

    Vector eval(const Vector& x) const {
        if (x.size() != dim_) throw BadDimension("state dimension mismatch in model eval");
        return eval_(x);
    }
    Matrix jacobian(const Vector& x) const {
        if (x.size() != dim_) throw BadDimension("state dimension mismatch in model jacobian");
        return jacobian_(x);
    }

    /// Largest relative deviation between the analytic Jacobian and a central
    /// finite difference over random points with |x| <= radius.
    double jacobian_self_test(Rng& rng, int trials = 20, double radius = 2.0) const {
        double worst = 0.0;
        for (int t = 0; t < trials; ++t) {
            const Vector x = radius * rng.normal_vector(dim_) / std::sqrt(double(dim_));
            const Matrix jac = jacobian_(x);
            Matrix fd(dim_, dim_);
            for (Index c = 0; c < dim_; ++c) {
                const double h = 1e-6 * std::max(1.0, std::abs(x[c]));
                Vector xp = x, xm = x;
                xp[c] += h;
                xm[c] -= h;
                fd.col(c) = (eval_(xp) - eval_(xm)) / (2.0 * h);
            }
            worst = std::max(worst, (fd - jac).norm() / std::max(jac.norm(), 1.0));
        }
        return worst;
    }

    /// Time-reversed field -X (used by the duality checks).
    VectorFieldModel reversed() const {
        EvalFn ev = eval_;
        JacobianFn jc = jacobian_;
        return VectorFieldModel(
            dim_, "reversed:" + family_, parameters_,
            [ev](const Vector& x) { return Vector(-ev(x)); },
            [jc](const Vector& x) { return Matrix(-jc(x)); });
    }

    // -- builtin families ---------------------------------------------------

    static VectorFieldModel linear(const Matrix& a) {
        if (a.rows() != a.cols() || a.rows() == 0)
            throw BadDimension("linear model needs a square matrix");
        std::vector<double> params(a.data(), a.data() + a.size());
        return VectorFieldModel(
            a.rows(), "linear", std::move(params),
            [a](const Vector& x) { return Vector(a * x); },
            [a](const Vector&) { return a; });
    }

    static VectorFieldModel lorenz(double sigma = 10.0, double rho = 28.0,
                                   double beta = 8.0 / 3.0) {
        return VectorFieldModel(
            3, "lorenz", {sigma, rho, beta},
            [sigma, rho, beta](const Vector& v) {
                Vector out(3);
                out[0] = sigma * (v[1] - v[0]);
                out[1] = v[0] * (rho - v[2]) - v[1];
                out[2] = v[0] * v[1] - beta * v[2];
                return out;
            },
            [sigma, rho, beta](const Vector& v) {
                Matrix jac(3, 3);
                jac << -sigma, sigma, 0.0,
                       rho - v[2], -1.0, -v[0],
                       v[1], v[0], -beta;
                return jac;
            });
    }

    /// Planar Hopf-normal-form limit cycle with a decoupled contracting z:
    /// xdot = -y + x(1 - x^2 - y^2), ydot = x + y(1 - x^2 - y^2), zdot = -z.
    /// The unit circle {z = 0} is a periodic orbit of period exactly 2*pi
    /// with nontrivial multipliers e^{-4 pi} (radial) and e^{-2 pi} (z).
    static VectorFieldModel planar_limit_cycle() {
        return VectorFieldModel(
            3, "planar_limit_cycle", {},
            [](const Vector& v) {
                const double s = 1.0 - v[0] * v[0] - v[1] * v[1];
                Vector out(3);
                out[0] = -v[1] + v[0] * s;
                out[1] = v[0] + v[1] * s;
                out[2] = -v[2];
                return out;
            },
            [](const Vector& v) {
                const double x = v[0], y = v[1];
                Matrix jac(3, 3);
                jac << 1.0 - 3.0 * x * x - y * y, -1.0 - 2.0 * x * y, 0.0,
                       1.0 - 2.0 * x * y, 1.0 - x * x - 3.0 * y * y, 0.0,
                       0.0, 0.0, -1.0;
                return jac;
            });
    }

    /// One monomial of a polynomial vector field: coeff * prod_j x_j^powers[j]
    /// added to component `component`.
    struct PolyTerm {
        Index component = 0;
        double coeff = 0.0;
        std::vector<int> powers;
    };

    static VectorFieldModel polynomial(Index dim, std::vector<PolyTerm> terms) {
        for (const auto& t : terms) {
            if (t.component < 0 || t.component >= dim ||
                static_cast<Index>(t.powers.size()) != dim)
                throw BadDimension("polynomial term shape does not match dimension");
            for (int p : t.powers)
                if (p < 0) throw BadDimension("polynomial powers must be nonnegative");
        }
        auto mono = [](const Vector& x, const std::vector<int>& powers) {
            double m = 1.0;
            for (Index j = 0; j < x.size(); ++j)
                for (int k = 0; k < powers[static_cast<std::size_t>(j)]; ++k) m *= x[j];
            return m;
        };
        return VectorFieldModel(
            dim, "polynomial", {},
            [dim, terms, mono](const Vector& x) {
                Vector out = Vector::Zero(dim);
                for (const auto& t : terms) out[t.component] += t.coeff * mono(x, t.powers);
                return out;
            },
            [dim, terms, mono](const Vector& x) {
                Matrix jac = Matrix::Zero(dim, dim);
                for (const auto& t : terms) {
                    for (Index j = 0; j < dim; ++j) {
                        const int pj = t.powers[static_cast<std::size_t>(j)];
                        if (pj == 0) continue;
                        auto reduced = t.powers;
                        reduced[static_cast<std::size_t>(j)] = pj - 1;
                        jac(t.component, j) += t.coeff * pj * mono(x, reduced);
                    }
                }
                return jac;
            });
    }

private:
    Index dim_;
    std::string family_;
    std::vector<double> parameters_;
    EvalFn eval_;
    JacobianFn jacobian_;
};

}  // namespace coneflow

#endif
