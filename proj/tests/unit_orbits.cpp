#include "coneflow/flow/periodic.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace coneflow;

namespace {

Vector vec3(double a, double b, double c) {
    Vector v(3);
    v << a, b, c;
    return v;
}

const double kTwoPi = 2.0 * M_PI;

/// Planar limit cycle with a neutral third axis (z' = 0): the cycle keeps a
/// nontrivial multiplier exactly on the unit circle.
VectorFieldModel neutral_cycle_model() {
    std::vector<VectorFieldModel::PolyTerm> terms;
    // x' = -y + x - x^3 - x y^2
    terms.push_back({0, -1.0, {0, 1, 0}});
    terms.push_back({0, 1.0, {1, 0, 0}});
    terms.push_back({0, -1.0, {3, 0, 0}});
    terms.push_back({0, -1.0, {1, 2, 0}});
    // y' = x + y - x^2 y - y^3
    terms.push_back({1, 1.0, {1, 0, 0}});
    terms.push_back({1, 1.0, {0, 1, 0}});
    terms.push_back({1, -1.0, {2, 1, 0}});
    terms.push_back({1, -1.0, {0, 3, 0}});
    return VectorFieldModel::polynomial(3, terms);
}

}  // namespace

TEST_CASE("section planes measure signed side distance") {
    SectionPlane s{vec3(0.0, 0.0, 1.0), 27.0};
    CHECK(s.side(vec3(0.0, 0.0, 30.0)) == Catch::Approx(3.0));
    const SectionPlane t = SectionPlane::through(vec3(1.0, 0.0, 0.0), vec3(2.0, 5.0, 5.0));
    CHECK(t.offset == Catch::Approx(2.0));
}

TEST_CASE("close returns on the planar cycle cluster near the true period") {
    const VectorFieldModel model = VectorFieldModel::planar_limit_cycle();
    const SectionPlane section{vec3(1.0, 0.0, 0.0), 0.0};
    const auto cands = close_returns(model, vec3(1.1, 0.0, 0.2), 15.0, 14.0, section);
    REQUIRE_FALSE(cands.empty());
    CHECK(cands.front().distance < 1e-5);
    CHECK(cands.front().period == Catch::Approx(kTwoPi).margin(1e-4));
}

TEST_CASE("planar cycle orbit: period, multipliers, index") {
    const VectorFieldModel model = VectorFieldModel::planar_limit_cycle();
    const SectionPlane section{vec3(1.0, 0.0, 0.0), 0.0};
    const PeriodicOrbit orbit =
        find_shortest_orbit(model, vec3(1.2, 0.0, 0.4), section, 20.0, 14.0);

    CHECK(orbit.period == Catch::Approx(kTwoPi).margin(1e-6));
    CHECK(orbit.residual < 1e-6);
    CHECK(orbit.trivial_defect < 1e-6);
    REQUIRE(orbit.multipliers.size() == 2);
    // Sorted by modulus, descending: e^{-2 pi} (vertical), e^{-4 pi} (radial).
    CHECK(std::abs(orbit.multipliers[0]) ==
          Catch::Approx(std::exp(-kTwoPi)).epsilon(1e-6));
    CHECK(std::abs(orbit.multipliers[1]) ==
          Catch::Approx(std::exp(-2.0 * kTwoPi)).epsilon(1e-6));
    CHECK(orbit.index == 2);
    CHECK(orbit.hyperbolic);
    // The anchor lies on the unit circle in the z = 0 plane.
    CHECK(std::abs(orbit.anchor.head(2).norm() - 1.0) < 1e-8);
    CHECK(std::abs(orbit.anchor[2]) < 1e-8);
}

TEST_CASE("direct shooting converges from a rough guess") {
    const VectorFieldModel model = VectorFieldModel::planar_limit_cycle();
    const SectionPlane section{vec3(1.0, 0.0, 0.0), 0.0};
    const PeriodicOrbit orbit =
        find_periodic_orbit(model, section, vec3(0.0, -0.97, 0.02), 6.1);
    CHECK(orbit.period == Catch::Approx(kTwoPi).margin(1e-6));
}

TEST_CASE("known orbit data can be classified without a search") {
    const VectorFieldModel model = VectorFieldModel::planar_limit_cycle();
    const PeriodicOrbit orbit = classify_orbit(model, vec3(1.0, 0.0, 0.0), kTwoPi);
    CHECK(orbit.hyperbolic);
    CHECK(orbit.index == 2);
    CHECK(std::abs(orbit.multipliers[0]) ==
          Catch::Approx(std::exp(-kTwoPi)).epsilon(1e-8));
    CHECK(std::abs(orbit.multipliers[1]) ==
          Catch::Approx(std::exp(-2.0 * kTwoPi)).epsilon(1e-8));

    CHECK_THROWS_AS(classify_orbit(model, vec3(1.0, 0.0, 0.0), -1.0), BadDimension);
    // A wrong period leaves no multiplier near one.
    CHECK_THROWS_AS(classify_orbit(model, vec3(1.0, 0.0, 0.0), 0.8 * kTwoPi), SuspectOrbit);
}

TEST_CASE("a neutral transverse direction defeats hyperbolicity") {
    const VectorFieldModel model = neutral_cycle_model();
    const PeriodicOrbit orbit = classify_orbit(model, vec3(1.0, 0.0, 0.0), kTwoPi);
    CHECK_FALSE(orbit.hyperbolic);
    REQUIRE(orbit.multipliers.size() == 2);
    // One contracting multiplier, one pinned to the unit circle.
    CHECK(std::abs(std::abs(orbit.multipliers[0]) - 1.0) < 1e-8);
    CHECK(std::abs(orbit.multipliers[1]) ==
          Catch::Approx(std::exp(-2.0 * kTwoPi)).epsilon(1e-6));
}

TEST_CASE("shortest Lorenz orbit through the classic section") {
    const VectorFieldModel model = VectorFieldModel::lorenz();
    const SectionPlane section{vec3(0.0, 0.0, 1.0), 27.0};
    const PeriodicOrbit orbit =
        find_shortest_orbit(model, vec3(-13.7636, -19.5788, 27.0), section, 0.0, 5.0, 0.5);

    // Reference period of the shortest orbit: 1.5586522107162.
    CHECK(orbit.period == Catch::Approx(1.5586522107162).margin(1e-6));
    CHECK(orbit.hyperbolic);
    CHECK(orbit.index == 1);
    REQUIRE(orbit.multipliers.size() == 2);
    CHECK(std::abs(orbit.multipliers[0]) == Catch::Approx(4.71294).margin(1e-3));
    CHECK(std::abs(orbit.multipliers[1]) < 1e-8);
    CHECK(orbit.trivial_defect < 1e-5);
}
