#include "coneflow/flow/equilibria.hpp"
#include "coneflow/flow/integrate.hpp"
#include "coneflow/flow/lyapunov.hpp"
#include "coneflow/flow/model.hpp"

#include "support/oracles.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace coneflow;
using testsupport::expm;

namespace {

Vector vec3(double a, double b, double c) {
    Vector v(3);
    v << a, b, c;
    return v;
}

}  // namespace

TEST_CASE("builtin models pass their own Jacobian self-test") {
    Rng rng(1);
    CHECK(VectorFieldModel::lorenz().jacobian_self_test(rng));
    CHECK(VectorFieldModel::planar_limit_cycle().jacobian_self_test(rng));
    Matrix a(2, 2);
    a << 0.0, 1.0, -1.0, 0.0;
    CHECK(VectorFieldModel::linear(a).jacobian_self_test(rng));
}

TEST_CASE("polynomial terms reproduce the quadratic saddle family") {
    // x' = -x + y^2, y' = y, assembled from monomial terms.
    std::vector<VectorFieldModel::PolyTerm> terms;
    terms.push_back({0, -1.0, {1, 0}});
    terms.push_back({0, 1.0, {0, 2}});
    terms.push_back({1, 1.0, {0, 1}});
    const VectorFieldModel model = VectorFieldModel::polynomial(2, terms);

    Vector x(2);
    x << 2.0, 3.0;
    const Vector f = model.eval(x);
    CHECK(f[0] == Catch::Approx(-2.0 + 9.0));
    CHECK(f[1] == Catch::Approx(3.0));
    Rng rng(2);
    CHECK(model.jacobian_self_test(rng));
}

TEST_CASE("reversed models flip the field and its Jacobian") {
    const VectorFieldModel lorenz = VectorFieldModel::lorenz();
    const VectorFieldModel back = lorenz.reversed();
    const Vector x = vec3(1.0, -2.0, 0.5);
    CHECK((back.eval(x) + lorenz.eval(x)).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((back.jacobian(x) + lorenz.jacobian(x)).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(back.family() == "reversed:lorenz");
}

TEST_CASE("integration matches the matrix exponential on linear systems") {
    Rng rng(3);
    Matrix a(3, 3);
    for (Index i = 0; i < 3; ++i)
        for (Index j = 0; j < 3; ++j) a(i, j) = rng.normal();
    const VectorFieldModel model = VectorFieldModel::linear(a);
    const Vector x0 = vec3(0.3, -0.7, 0.2);
    const double t = 1.7;

    const Vector xt = integrate(model, x0, t).final_state();
    const Vector want = expm(Matrix(a * t)) * x0;
    CHECK((xt - want).norm() < 1e-7 * want.norm());

    const CocycleSegment seg = tangent_cocycle(model, x0, t);
    CHECK((seg.fundamental - expm(Matrix(a * t))).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(seg.liouville_residual() < 1e-6);
}

TEST_CASE("dense output interpolates to integrator accuracy") {
    const VectorFieldModel model = VectorFieldModel::planar_limit_cycle();
    IntegratorOptions opts;
    opts.dense = true;
    const Trajectory traj = integrate(model, vec3(1.0, 0.0, 0.0), 3.0, opts);
    REQUIRE(traj.dense);
    // On the unit circle the solution is (cos t, sin t, 0).
    for (double t : {0.37, 1.41, 2.9}) {
        const Vector x = traj.dense->eval(t);
        CHECK(x[0] == Catch::Approx(std::cos(t)).margin(1e-7));
        CHECK(x[1] == Catch::Approx(std::sin(t)).margin(1e-7));
    }
}

TEST_CASE("step operators compose to the full cocycle") {
    const VectorFieldModel model = VectorFieldModel::lorenz();
    const Vector x0 = vec3(2.0, 3.0, 15.0);
    std::vector<double> times;
    for (int i = 0; i <= 8; ++i) times.push_back(0.05 * i);
    const StepOperators ops = step_operators(model, x0, times);
    REQUIRE(ops.ops.size() == 8);

    Matrix prod = Matrix::Identity(3, 3);
    for (const Matrix& m : ops.ops) prod = m * prod;
    const CocycleSegment seg = tangent_cocycle(model, x0, 0.4);
    CHECK((prod - seg.fundamental).cwiseAbs().maxCoeff() <
          1e-6 * seg.fundamental.cwiseAbs().maxCoeff());
}

TEST_CASE("wedge powers track subdeterminant growth") {
    Vector d = vec3(-1.0, 2.0, 0.5);
    const VectorFieldModel model = VectorFieldModel::linear(Matrix(d.asDiagonal()));
    const double t = 0.9;
    const CocycleSegment seg = tangent_cocycle(model, vec3(0.1, 0.1, 0.1), t);
    const Matrix w2 = wedge_cocycle(seg, 2);
    // Eigenvalues of the squared wedge are products of pairs.
    Eigen::SelfAdjointEigenSolver<Matrix> es(Matrix(w2.transpose() * w2));
    std::vector<double> got;
    for (Index i = 0; i < es.eigenvalues().size(); ++i)
        got.push_back(std::sqrt(es.eigenvalues()[i]));
    std::sort(got.begin(), got.end());
    std::vector<double> want{std::exp((d[0] + d[1]) * t), std::exp((d[0] + d[2]) * t),
                             std::exp((d[1] + d[2]) * t)};
    std::sort(want.begin(), want.end());
    for (std::size_t i = 0; i < want.size(); ++i)
        CHECK(got[i] == Catch::Approx(want[i]).epsilon(1e-6));
}

TEST_CASE("Richardson monodromy beats the raw fixed-step pass") {
    Rng rng(5);
    Matrix a(3, 3);
    for (Index i = 0; i < 3; ++i)
        for (Index j = 0; j < 3; ++j) a(i, j) = rng.normal() * 0.8;
    const VectorFieldModel model = VectorFieldModel::linear(a);
    const MonodromyResult mono = monodromy(model, vec3(0.2, 0.1, -0.3), 2.0, 512);
    const Matrix want = expm(Matrix(a * 2.0));
    CHECK((mono.m - want).cwiseAbs().maxCoeff() < 1e-10 * want.cwiseAbs().maxCoeff());
    CHECK(mono.step_defect < 1e-6);
}

TEST_CASE("Lorenz equilibria, spectra, and indices") {
    const VectorFieldModel model = VectorFieldModel::lorenz();
    std::vector<Vector> seeds{vec3(0.1, 0.1, 0.1), vec3(8.0, 8.0, 26.0), vec3(-8.0, -8.0, 26.0),
                              vec3(50.0, 50.0, 50.0)};
    const EquilibriumSearch search = find_equilibria(model, seeds);
    REQUIRE(search.found.size() == 3);

    const double s72 = std::sqrt(72.0);
    bool saw_origin = false, saw_plus = false, saw_minus = false;
    for (const Equilibrium& eq : search.found) {
        CHECK(eq.residual < 1e-10);
        CHECK(eq.hyperbolic);
        if (eq.point.norm() < 1e-8) {
            saw_origin = true;
            CHECK(eq.index == 2);
            // Closed-form spectrum: -8/3 and (-11 +- sqrt(1201)) / 2.
            std::vector<double> want{(-11.0 - std::sqrt(1201.0)) / 2.0, -8.0 / 3.0,
                                     (-11.0 + std::sqrt(1201.0)) / 2.0};
            std::vector<double> got;
            for (const auto& z : eq.eigenvalues) {
                CHECK(std::abs(z.imag()) < 1e-9);
                got.push_back(z.real());
            }
            std::sort(got.begin(), got.end());
            for (std::size_t i = 0; i < want.size(); ++i)
                CHECK(got[i] == Catch::Approx(want[i]).margin(1e-6));
        } else if (eq.point[0] > 0.0) {
            saw_plus = true;
            CHECK((eq.point - vec3(s72, s72, 27.0)).norm() < 1e-9);
            CHECK(eq.index == 1);
        } else {
            saw_minus = true;
            CHECK((eq.point - vec3(-s72, -s72, 27.0)).norm() < 1e-9);
            CHECK(eq.index == 1);
        }
    }
    CHECK(saw_origin);
    CHECK(saw_plus);
    CHECK(saw_minus);
}

TEST_CASE("non-equilibria are refused by the classifier") {
    const VectorFieldModel model = VectorFieldModel::lorenz();
    CHECK_THROWS_AS(classify_equilibrium(model, vec3(1.0, 1.0, 1.0)), NotEquilibrium);
}

TEST_CASE("duplicate seeds collapse to one equilibrium") {
    const VectorFieldModel model = VectorFieldModel::planar_limit_cycle();
    std::vector<Vector> seeds{vec3(0.05, 0.0, 0.1), vec3(-0.1, 0.05, -0.05), vec3(0.0, 0.1, 0.0)};
    const EquilibriumSearch search = find_equilibria(model, seeds);
    REQUIRE(search.found.size() == 1);
    CHECK(search.found.front().point.norm() < 1e-10);
    CHECK(search.found.front().index == 1);  // eigenvalues 1 +- i and -1
}

TEST_CASE("Lyapunov spectrum of an axis-aligned linear flow is exact") {
    Vector d = vec3(0.5, -0.25, -1.5);
    const VectorFieldModel model = VectorFieldModel::linear(Matrix(d.asDiagonal()));
    LyapunovOptions options;  // seed 0: canonical frame
    const LyapunovResult res = lyapunov_exponents(model, Vector::Zero(3), 30.0, options);
    REQUIRE(res.exponents.size() == 3);
    CHECK(res.exponents[0] == Catch::Approx(0.5).margin(1e-8));
    CHECK(res.exponents[1] == Catch::Approx(-0.25).margin(1e-8));
    CHECK(res.exponents[2] == Catch::Approx(-1.5).margin(1e-8));
    CHECK(res.converged);
    CHECK(res.t_accumulated == Catch::Approx(30.0));
    CHECK(res.history.size() == static_cast<std::size_t>(res.renorm_count));
}

TEST_CASE("attracting cycle exponents come out as (0, -1, -2)") {
    const VectorFieldModel model = VectorFieldModel::planar_limit_cycle();
    LyapunovOptions options;
    options.seed = 12345;  // random frame: the generic path
    options.t_transient = 20.0;
    const LyapunovResult res = lyapunov_exponents(model, vec3(1.1, 0.0, 0.2), 400.0, options);
    REQUIRE(res.exponents.size() == 3);
    // The neutral exponent converges like 1/t; give it the wider margin.
    CHECK(res.exponents[0] == Catch::Approx(0.0).margin(2e-2));
    CHECK(res.exponents[1] == Catch::Approx(-1.0).margin(5e-3));
    CHECK(res.exponents[2] == Catch::Approx(-2.0).margin(5e-3));
    CHECK(res.converged);
}

TEST_CASE("partial spectra track the top exponents only") {
    Vector d = vec3(1.0, 0.25, -2.0);
    const VectorFieldModel model = VectorFieldModel::linear(Matrix(d.asDiagonal()));
    LyapunovOptions options;
    options.k = 2;
    const LyapunovResult res = lyapunov_exponents(model, Vector::Zero(3), 25.0, options);
    REQUIRE(res.exponents.size() == 2);
    CHECK(res.exponents[0] == Catch::Approx(1.0).margin(1e-8));
    CHECK(res.exponents[1] == Catch::Approx(0.25).margin(1e-8));
}
