// Release acceptance gate. Each check prints exactly one line,
//
//     [PASS] adapted-frame-congruence   500 random forms n<=6: ... (0.1 s)
//
// and the binary exits nonzero if any check fails. Checks are deliberately
// independent of the unit suite: the references are brute force (sphere
// sampling, QZ pencils, closed-form spectra) and every tolerance is stated
// inline next to the measured value.

#include "coneflow/field.hpp"
#include "coneflow/flow/equilibria.hpp"
#include "coneflow/flow/integrate.hpp"
#include "coneflow/flow/lyapunov.hpp"
#include "coneflow/flow/model.hpp"
#include "coneflow/flow/periodic.hpp"
#include "coneflow/quadratic_form.hpp"
#include "coneflow/runner.hpp"
#include "coneflow/scenario.hpp"
#include "coneflow/separation.hpp"
#include "coneflow/verify.hpp"

#include "support/instances.hpp"
#include "support/oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

using namespace coneflow;

namespace {

constexpr double kTwoPi = 6.283185307179586476925287;

std::string str(const char* fmt, ...) {
    char buf[768];
    va_list args;
    va_start(args, fmt);
    std::vsnprintf(buf, sizeof buf, fmt, args);
    va_end(args);
    return buf;
}

Vector vec3(double x, double y, double z) {
    Vector v(3);
    v << x, y, z;
    return v;
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

const VectorFieldModel& lorenz() {
    static const VectorFieldModel model = VectorFieldModel::lorenz();
    return model;
}

// The shortest Lorenz orbit threads both wings once; seeded from a point on
// it so the close-return scan needs no transient. Shared by the star and the
// exponent-bound checks.
const PeriodicOrbit& lorenz_short_orbit() {
    static const PeriodicOrbit orbit = [] {
        const SectionPlane section{vec3(0.0, 0.0, 1.0), 27.0};
        return find_shortest_orbit(lorenz(), vec3(-13.7636, -19.5788, 27.0), section, 0.0, 5.0,
                                   0.5);
    }();
    return orbit;
}

std::vector<Vector> lorenz_seeds() {
    return {vec3(0.1, 0.1, 0.1), vec3(8.0, 8.0, 26.0), vec3(-8.0, -8.0, 26.0),
            vec3(50.0, 50.0, 50.0)};
}

// ---------------------------------------------------------------------------
// 1. Adapted frames: B^T J B must reproduce the signature matrix, and the
//    computed index must match the eigenvalue sign count exactly.
// ---------------------------------------------------------------------------
Outcome check_adapted_frames() {
    Rng rng(20260801);
    double worst = 0.0;
    int mismatches = 0;
    for (int trial = 0; trial < 500; ++trial) {
        const Index n = 2 + static_cast<Index>(trial % 5);
        const testsupport::RandomForm rf = testsupport::random_nondegenerate_form(rng, n);
        const QuadraticForm j(rf.m);
        const AdaptedFrame frame = lagrange_diagonalize(j);
        Matrix d = Matrix::Zero(n, n);
        for (Index i = 0; i < n; ++i) d(i, i) = frame.signature_pattern[static_cast<std::size_t>(i)];
        worst = std::max(worst, (frame.basis.transpose() * rf.m * frame.basis - d).norm());
        const Eigen::SelfAdjointEigenSolver<Matrix> es(rf.m);
        Index neg = 0;
        for (Index i = 0; i < n; ++i) neg += es.eigenvalues()[i] < 0.0 ? 1 : 0;
        if (neg != j.index_q() || neg != rf.index_q) ++mismatches;
    }
    const bool pass = worst <= 1e-10 && mismatches == 0;
    return {pass, str("500 random forms n<=6: worst congruence residual %.1e (cap 1e-10), "
                      "signature mismatches %d",
                      worst, mismatches)};
}

// ---------------------------------------------------------------------------
// 2. Polar factorization of strictly separated operators built with known
//    radii: residuals and recovered radii against the construction.
// ---------------------------------------------------------------------------
Outcome check_polar_reconstruction() {
    Rng rng(20260802);
    double worst_resid = 0.0;
    double worst_radius = 0.0;
    for (int trial = 0; trial < 500; ++trial) {
        const Index n = 2 + static_cast<Index>(trial % 5);
        const Index q = 1 + static_cast<Index>(rng.next_u64() % static_cast<std::uint64_t>(n - 1));
        const testsupport::StrictInstance inst = testsupport::random_strict_instance(rng, n, q);
        const PolarDecomposition pd = polar_decompose(QuadraticForm(inst.j), inst.l);
        worst_resid = std::max({worst_resid, pd.reconstruction_residual, pd.isometry_residual,
                                pd.j_symmetry_residual});
        for (std::size_t i = 0; i < inst.r_minus.size(); ++i)
            worst_radius =
                std::max(worst_radius, std::abs(pd.r_minus[i] - inst.r_minus[i]) / inst.r_minus[i]);
        for (std::size_t i = 0; i < inst.r_plus.size(); ++i)
            worst_radius =
                std::max(worst_radius, std::abs(pd.r_plus[i] - inst.r_plus[i]) / inst.r_plus[i]);
    }
    const bool pass = worst_resid <= 1e-8 && worst_radius <= 1e-8;
    return {pass, str("500 strict factorizations n<=6: worst residual %.1e, worst radius error "
                      "%.1e (caps 1e-8)",
                      worst_resid, worst_radius)};
}

// ---------------------------------------------------------------------------
// 3. Separation verdicts against brute-force sphere sampling. The sampled
//    max-min is an upper bound of the true margin, so a strict verdict may
//    never see a clearly negative sample and a failed verdict may never see
//    a clearly positive one.
// ---------------------------------------------------------------------------
Outcome check_separation_vs_sampling() {
    Rng rng(20260803);
    int strict_seen = 0, not_seen = 0, border = 0, disagreements = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const Index n = 2 + static_cast<Index>(rng.next_u64() % 3);
        Matrix jm, l;
        if (trial % 2 == 0) {
            const Index q =
                1 + static_cast<Index>(rng.next_u64() % static_cast<std::uint64_t>(n - 1));
            const testsupport::StrictInstance inst = testsupport::random_strict_instance(rng, n, q);
            jm = inst.j;
            l = inst.l;
        } else {
            testsupport::RandomForm rf = testsupport::random_nondegenerate_form(rng, n);
            while (rf.index_q == 0 || rf.index_q == n)
                rf = testsupport::random_nondegenerate_form(rng, n);
            jm = rf.m;
            l = testsupport::random_well_conditioned(rng, n);
        }
        const SeparationVerdict v = check_separation(QuadraticForm(jm), l);
        const testsupport::SampledSeparation s = testsupport::sampled_separation(jm, l, 10000, rng);
        const double scale = std::max(1.0, (l.transpose() * jm * l).norm());
        if (v.level == SeparationLevel::StrictlySeparated) {
            ++strict_seen;
            if (s.best_margin < -1e-9 * scale) ++disagreements;
        } else if (v.level == SeparationLevel::NotSeparated) {
            ++not_seen;
            if (s.best_margin > 0.1 * scale) ++disagreements;
        } else {
            ++border;  // inside the tolerance band; sampling cannot referee
        }
    }
    const bool pass = disagreements == 0 && strict_seen >= 60 && not_seen >= 60;
    return {pass, str("200 instances n<=4 vs 10^4 sphere samples: %d strict / %d failed / %d "
                      "border, disagreements %d",
                      strict_seen, not_seen, border, disagreements)};
}

// ---------------------------------------------------------------------------
// 4. Pencil windows against the QZ reference, plus the closed-form diagonal
//    window: J = diag(-1,1), F = diag(1,4) admits exactly [-1, 4].
// ---------------------------------------------------------------------------
Outcome check_pencil_window() {
    Rng rng(20260804);
    int compared = 0, infeasible = 0, mismatches = 0;
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const Index n = 2 + static_cast<Index>(rng.next_u64() % 3);
        testsupport::RandomForm rf = testsupport::random_nondegenerate_form(rng, n);
        while (rf.index_q == 0 || rf.index_q == n)
            rf = testsupport::random_nondegenerate_form(rng, n);
        Matrix f(n, n);
        if (trial % 2 == 0) {
            // feasibility-biased: F = r0 J + (positive definite) has r0 inside
            const Matrix g = testsupport::random_well_conditioned(rng, n);
            f = rng.uniform(-2.0, 2.0) * rf.m + 0.3 * g.transpose() * g;
        } else {
            for (Index r = 0; r < n; ++r)
                for (Index c = 0; c < n; ++c) f(r, c) = rng.normal();
            f = Matrix(0.5 * (f + f.transpose()));
        }
        const std::optional<testsupport::PencilWindow> ref =
            testsupport::pencil_window_reference(rf.m, f);
        try {
            const PencilBounds pb = kuhne_bounds(QuadraticForm(rf.m), f);
            if (!ref) {
                ++mismatches;
                continue;
            }
            worst = std::max(worst,
                             std::abs(pb.r_lower - ref->lower) / std::max(1.0, std::abs(ref->lower)));
            worst = std::max(worst,
                             std::abs(pb.r_upper - ref->upper) / std::max(1.0, std::abs(ref->upper)));
            ++compared;
        } catch (const NotNonnegativeOnNullCone&) {
            if (ref)
                ++mismatches;
            else
                ++infeasible;
        }
    }
    Matrix j2 = Matrix::Zero(2, 2), f2 = Matrix::Zero(2, 2);
    j2.diagonal() << -1.0, 1.0;
    f2.diagonal() << 1.0, 4.0;
    const PencilBounds pb = kuhne_bounds(QuadraticForm(j2), f2);
    const double diag_err = std::max(std::abs(pb.r_lower + 1.0), std::abs(pb.r_upper - 4.0));
    const bool pass = mismatches == 0 && worst <= 1e-6 && compared >= 80 && diag_err <= 1e-9;
    return {pass, str("%d windows match the QZ reference to %.1e (cap 1e-6), %d infeasible agree, "
                      "mismatches %d; diagonal window error %.1e",
                      compared, worst, infeasible, mismatches, diag_err)};
}

// ---------------------------------------------------------------------------
// 5. The smallest expansion radius is supermultiplicative under composition
//    of strictly separated operators sharing a form.
// ---------------------------------------------------------------------------
Outcome check_composition_bound() {
    Rng rng(20260805);
    double worst_rel = std::numeric_limits<double>::infinity();
    int strict_count = 0;
    for (int trial = 0; trial < 500; ++trial) {
        const Index n = 2 + static_cast<Index>(trial % 5);
        const Index q = 1 + static_cast<Index>(rng.next_u64() % static_cast<std::uint64_t>(n - 1));
        const testsupport::StrictInstance a = testsupport::random_strict_instance(rng, n, q);
        const testsupport::StrictInstance b = testsupport::companion_instance(rng, a);
        const QuadraticForm j(a.j);
        const double r1 = polar_decompose(j, a.l).r_plus.front();
        const double r2 = polar_decompose(j, b.l).r_plus.front();
        const double r12 = polar_decompose(j, Matrix(a.l * b.l)).r_plus.front();
        const double rel = (r12 - r1 * r2) / (r1 * r2);
        worst_rel = std::min(worst_rel, rel);
        if (rel > 1e-9) ++strict_count;
    }
    const bool pass = worst_rel >= -1e-9 && strict_count >= 450;
    return {pass, str("500 strict pairs sharing a form: min relative margin %+.1e (floor -1e-9), "
                      "strictly above the product on %d/500",
                      worst_rel, strict_count)};
}

// ---------------------------------------------------------------------------
// 6. Lorenz equilibria: location residuals, the closed-form origin spectrum
//    {-8/3, (-11 +- sqrt(1201))/2}, and stability indices 2/1/1.
// ---------------------------------------------------------------------------
Outcome check_lorenz_equilibria() {
    const EquilibriumSearch search = find_equilibria(lorenz(), lorenz_seeds());
    if (search.found.size() != 3)
        return {false, str("expected 3 equilibria, found %zu", search.found.size())};
    const double s72 = std::sqrt(72.0);
    const double root = std::sqrt(1201.0);
    double worst_resid = 0.0, spec_err = 0.0;
    bool indices_ok = true, points_ok = true;
    for (const Equilibrium& eq : search.found) {
        worst_resid = std::max(worst_resid, eq.residual);
        if (eq.point.norm() < 1e-6) {
            const double want[3] = {-(11.0 + root) / 2.0, -8.0 / 3.0, (root - 11.0) / 2.0};
            for (int i = 0; i < 3; ++i) {
                spec_err = std::max(spec_err, std::abs(eq.eigenvalues[i].real() - want[i]));
                spec_err = std::max(spec_err, std::abs(eq.eigenvalues[i].imag()));
            }
            indices_ok = indices_ok && eq.index == 2;
        } else {
            points_ok = points_ok && std::abs(std::abs(eq.point[0]) - s72) < 1e-8 &&
                        std::abs(std::abs(eq.point[1]) - s72) < 1e-8 &&
                        std::abs(eq.point[2] - 27.0) < 1e-8;
            indices_ok = indices_ok && eq.index == 1;
        }
    }
    const bool pass =
        worst_resid <= 1e-10 && spec_err <= 1e-3 && indices_ok && points_ok;
    return {pass, str("3 equilibria, worst residual %.1e (cap 1e-10); origin spectrum error %.1e "
                      "(cap 1e-3); indices 2/1/1 %s",
                      worst_resid, spec_err, indices_ok && points_ok ? "confirmed" : "WRONG")};
}

// ---------------------------------------------------------------------------
// 7. Lorenz exponent spectrum over T = 2000: the leading exponent near its
//    published value, the neutral one near zero, and the sum pinned to the
//    constant divergence -41/3.
// ---------------------------------------------------------------------------
Outcome check_lorenz_exponents() {
    LyapunovOptions opt;
    opt.t_transient = 20.0;
    const auto t0 = std::chrono::steady_clock::now();
    const LyapunovResult res = lyapunov_exponents(lorenz(), vec3(1.0, 1.0, 20.0), 2000.0, opt);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const double sum = res.exponents[0] + res.exponents[1] + res.exponents[2];
    const double e1 = std::abs(res.exponents[0] - 0.906);
    const double e2 = std::abs(res.exponents[1]);
    const double esum = std::abs(sum + 41.0 / 3.0);
    const bool pass = e1 <= 0.05 && e2 <= 0.02 && esum <= 0.01 && secs <= 300.0;
    return {pass, str("T=2000: chi = (%.4f, %+.4f, %.3f); |chi1-0.906| %.1e (cap 5e-2), |chi2| "
                      "%.1e (cap 2e-2), |sum+41/3| %.1e (cap 1e-2); %.0f s (cap 300)",
                      res.exponents[0], res.exponents[1], res.exponents[2], e1, e2, esum, secs)};
}

// ---------------------------------------------------------------------------
// 8. The planar limit cycle with a vertical direction: period 2*pi, Floquet
//    multipliers e^{-2pi} and e^{-4pi}, a strictly monotone linearized
//    return map, and polar radii matching the multiplier moduli.
// ---------------------------------------------------------------------------
Outcome check_cycle_floquet() {
    const VectorFieldModel model = VectorFieldModel::planar_limit_cycle();
    const SectionPlane section{vec3(1.0, 0.0, 0.0), 0.0};
    const PeriodicOrbit orbit = find_shortest_orbit(model, vec3(1.2, 0.0, 0.4), section, 20.0, 14.0);
    const double period_err = std::abs(orbit.period - kTwoPi);
    const double mu1 = std::exp(-kTwoPi), mu2 = std::exp(-2.0 * kTwoPi);
    double mult_err = 0.0;
    if (orbit.multipliers.size() == 2) {
        mult_err = std::max(std::abs(std::abs(orbit.multipliers[0]) - mu1) / mu1,
                            std::abs(std::abs(orbit.multipliers[1]) - mu2) / mu2);
    } else {
        return {false, str("expected 2 nontrivial multipliers, got %zu", orbit.multipliers.size())};
    }
    const QuadraticFormField field = planar_cycle_frame();
    const LinearPoincareMap lpf = lpf_period_map(field, model, orbit);
    const QuadraticForm ff = floquet_adapted_form(lpf.matrix);
    const PolarDecomposition pd = polar_decompose(ff, lpf.matrix);
    const Monotonicity mono = monotonicity_from_spectrum(pd.r_minus, pd.r_plus);
    double radius_err = 1.0;
    if (pd.r_minus.size() == 2 && pd.r_plus.empty())
        radius_err = std::max(std::abs(pd.r_minus[0] - mu1) / mu1,
                              std::abs(pd.r_minus[1] - mu2) / mu2);
    const bool pass = period_err <= 1e-6 && mult_err <= 1e-6 &&
                      mono == Monotonicity::StrictlyMonotone && radius_err <= 1e-6;
    return {pass, str("period error %.1e, multiplier error %.1e rel, polar radii vs moduli %.1e "
                      "(caps 1e-6); return map %s",
                      period_err, mult_err, radius_err,
                      mono == Monotonicity::StrictlyMonotone ? "strictly monotone" : "NOT monotone")};
}

// ---------------------------------------------------------------------------
// 9. The Lorenz star certificate over all three equilibria plus the shortest
//    orbit, and the rejection path: flipping the origin form must fail the
//    positivity check with a concrete witness direction.
// ---------------------------------------------------------------------------
Outcome check_lorenz_star() {
    const EquilibriumSearch search = find_equilibria(lorenz(), lorenz_seeds());
    if (search.found.size() != 3) return {false, "equilibrium search did not find all three"};
    CriticalElements els;
    els.equilibria = search.found;
    els.orbits.push_back(lorenz_short_orbit());
    const StarCertificate cert = star_certificate(lorenz(), els);
    bool sub_ok = cert.elements.size() == 4;
    for (const StarElementReport& el : cert.elements)
        sub_ok = sub_ok && el.status == ElementStatus::Pass;
    if (sub_ok) {
        const StarElementReport& orb = cert.elements.back();
        sub_ok = orb.separation && *orb.separation == SeparationLevel::StrictlySeparated &&
                 orb.lpf_monotonicity && *orb.lpf_monotonicity == Monotonicity::StrictlyMonotone;
    }

    int origin_pos = -1;
    for (std::size_t i = 0; i < els.equilibria.size(); ++i)
        if (els.equilibria[i].point.norm() < 1e-6) origin_pos = static_cast<int>(i);
    if (origin_pos < 0) return {false, "origin missing from the equilibrium list"};
    const Equilibrium& origin = els.equilibria[static_cast<std::size_t>(origin_pos)];
    const QuadraticForm good = adapted_form_search(lorenz().jacobian(origin.point), origin.index);
    const Matrix flipped = -good.matrix();
    const FormPositivity direct =
        singularity_form_positivity(QuadraticFormField::constant(flipped), lorenz(), origin.point);
    bool flip_ok = !direct.positive && direct.witness.has_value() && direct.min_eigenvalue < 0.0;

    StarOptions so;
    so.equilibrium_forms.assign(3, std::nullopt);
    so.equilibrium_forms[static_cast<std::size_t>(origin_pos)] = flipped;
    const StarCertificate cert2 = star_certificate(lorenz(), els, so);
    const StarElementReport& fel = cert2.elements[static_cast<std::size_t>(origin_pos)];
    flip_ok = flip_ok && !cert2.pass && fel.status == ElementStatus::Fails && fel.positivity &&
              !fel.positivity->positive && fel.positivity->witness.has_value();

    const bool pass = cert.pass && sub_ok && flip_ok;
    return {pass, str("certificate %s with 4/4 sub-certificates (orbit: strict separation, "
                      "strictly monotone return map); flipped origin form rejected with witness "
                      "(min eigenvalue %+.3f): %s",
                      cert.pass ? "passes" : "FAILS", direct.min_eigenvalue,
                      flip_ok ? "yes" : "NO")};
}

// ---------------------------------------------------------------------------
// 10. Exponent bounds: averaged polar logs bound the exponent sums in every
//     converged run, and the axis-aligned linear case closes to equality.
// ---------------------------------------------------------------------------
double min_slack(const ExponentBoundsReport& rep) {
    double m = std::numeric_limits<double>::infinity();
    for (double s : rep.slack_minus) m = std::min(m, s);
    for (double s : rep.slack_plus) m = std::min(m, s);
    return m;
}

Outcome check_bound_slacks() {
    // Axis-aligned equality: the canonical initial frame (seed 0) keeps the
    // tangent columns exactly decoupled, so both sides agree to rounding.
    Matrix a3 = Matrix::Zero(3, 3), j3 = Matrix::Zero(3, 3);
    a3.diagonal() << -1.0, -2.0, 1.0;
    j3.diagonal() << -1.0, -1.0, 1.0;
    const ExponentBoundsReport diag =
        wojtkowski_bounds_check(QuadraticFormField::constant(j3), VectorFieldModel::linear(a3),
                                Vector::Zero(3), 20.0, 2, 1);
    double diag_worst = 0.0;
    for (double s : diag.slack_minus) diag_worst = std::max(diag_worst, std::abs(s));
    for (double s : diag.slack_plus) diag_worst = std::max(diag_worst, std::abs(s));

    // An upper-triangular hyperbolic matrix with descending diagonal and its
    // computed adapted form. The canonical initial frame is then the exact
    // invariant flag in decreasing growth order, so the exponent estimates
    // carry no alignment transient and the slack floor is meaningful; a
    // generically oriented frame would bury it under an O(1/T) finite-window
    // bias of either sign.
    Rng rng(20260810);
    Matrix ah = Matrix::Zero(3, 3);
    ah(0, 0) = rng.uniform(0.8, 1.6);
    ah(1, 1) = -rng.uniform(0.5, 1.2);
    ah(2, 2) = -rng.uniform(1.6, 2.6);
    ah(0, 1) = 0.5 * rng.normal();
    ah(0, 2) = 0.5 * rng.normal();
    ah(1, 2) = 0.5 * rng.normal();
    const QuadraticForm jh = adapted_form_search(ah, 2);
    const ExponentBoundsReport lin =
        wojtkowski_bounds_check(QuadraticFormField::constant(jh.matrix()),
                                VectorFieldModel::linear(ah), Vector::Zero(3), 20.0, 2, 1);

    // The planar cycle under its cylindrical frame, anchored at (0,-1,0)
    // where the flow direction is the first coordinate axis: the canonical
    // frame lists the invariant bundles in descending growth order (tangent,
    // radial, vertical). The vertical block of the linearization decouples
    // exactly, and in-plane contamination lies along the leading column where
    // each renormalization removes it, so the columns track their bundles for
    // the whole window and both sides of the bound are exact.
    IntegratorOptions tight;
    tight.rtol = 1e-12;
    tight.atol = 1e-12;
    LyapunovOptions lyc;
    lyc.integrator = tight;
    const ExponentBoundsReport cyc = wojtkowski_bounds_check(
        planar_cycle_frame(), VectorFieldModel::planar_limit_cycle(), vec3(0.0, -1.0, 0.0),
        2.0 * kTwoPi, 2, 1, kTwoPi / 64.0, 6, 1e-3, lyc, tight);

    // The short Lorenz orbit under its transported frame. The orbit is
    // unstable, so shadowing caps the usable window near eight periods; the
    // contracting Floquet modulus (~1e-10) sits below cocycle integration
    // noise, so only the computable top pair is tracked (k1 = 0) and the
    // renormalization interval is locked to the period to keep the running
    // averages free of intra-period wobble. The drift budget 0.05 covers the
    // O(1/m) frame-alignment transient that an eight-period window cannot
    // shake off; the slack being bounded is orders of magnitude above it.
    const PeriodicOrbit& orbit = lorenz_short_orbit();
    const OrbitFormConstruction ofc = orbit_adapted_field(lorenz(), orbit, 128);
    LyapunovOptions lyo;
    lyo.k = 2;
    lyo.chunk = orbit.period;
    lyo.drift_tol = 0.05;
    lyo.integrator = tight;
    const ExponentBoundsReport orb =
        wojtkowski_bounds_check(ofc.field, lorenz(), orbit.anchor, 8.0 * orbit.period, 0, 2,
                                orbit.period / 16.0, 6, 1e-3, lyo, tight);

    const double floor3 = std::min({min_slack(lin), min_slack(cyc), min_slack(orb)});
    const bool all_converged = diag.asserted && lin.asserted && cyc.asserted && orb.asserted;
    const bool pass = all_converged && diag_worst <= 1e-8 && floor3 >= -1e-8;
    return {pass, str("diagonal equality |slack| %.1e (cap 1e-8); converged slacks linear %+.1e, "
                      "cycle %+.1e, orbit %+.1e (floor -1e-8); all converged: %s",
                      diag_worst, min_slack(lin), min_slack(cyc), min_slack(orb),
                      all_converged ? "yes" : "NO")};
}

// ---------------------------------------------------------------------------
// 11. Time reversal flips the cone roles: the forward flow is strictly
//     separated for J exactly when the reversed flow is for -J.
// ---------------------------------------------------------------------------
Outcome check_reversal_duality() {
    Rng rng(20260811);
    int agree = 0, strict_pairs = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const Index n = 2 + static_cast<Index>(trial % 4);
        testsupport::RandomForm rf = testsupport::random_nondegenerate_form(rng, n);
        while (rf.index_q == 0 || rf.index_q == n)
            rf = testsupport::random_nondegenerate_form(rng, n);
        Matrix a(n, n);
        if (trial % 2 == 0) {
            // J A + A^T J positive definite makes the form strictly increasing
            // along tangents, hence every forward time map strictly separated.
            Matrix g(n, n);
            for (Index r = 0; r < n; ++r)
                for (Index c = 0; c < n; ++c) g(r, c) = rng.normal();
            const Matrix qpd = 0.2 * Matrix::Identity(n, n) + g.transpose() * g;
            a = 0.5 * rf.m.inverse() * qpd;
            // Rescaling keeps the increase strict while bounding the time-t
            // maps, so the strictness band (which grows with the mapped form)
            // stays far below the actual margins on both sides.
            a *= rng.uniform(1.0, 2.2) / a.norm();
        } else {
            for (Index r = 0; r < n; ++r)
                for (Index c = 0; c < n; ++c) a(r, c) = rng.normal();
        }
        const double t = rng.uniform(0.4, 1.2);
        const VectorFieldModel fwd = VectorFieldModel::linear(a);
        const VectorFieldModel rev = fwd.reversed();
        const Matrix mf = tangent_cocycle(fwd, Vector::Zero(n), t).fundamental;
        const Matrix mr = tangent_cocycle(rev, Vector::Zero(n), t).fundamental;
        const bool fs =
            check_separation(QuadraticForm(rf.m), mf).level == SeparationLevel::StrictlySeparated;
        const bool rs = check_separation(QuadraticForm(Matrix(-rf.m)), mr).level ==
                        SeparationLevel::StrictlySeparated;
        if (fs == rs) ++agree;
        if (fs) ++strict_pairs;
    }
    const bool pass = agree == 100 && strict_pairs >= 35 && strict_pairs <= 85;
    return {pass, str("100 linear flows: forward strict separation matched the reversed flow "
                      "under the negated form %d/100 (%d strict, %d not)",
                      agree, strict_pairs, 100 - strict_pairs)};
}

// ---------------------------------------------------------------------------
// 12. Every shipped scenario rerun with its fixed seed produces a
//     byte-identical report payload.
// ---------------------------------------------------------------------------
Outcome check_scenario_determinism() {
    namespace fs = std::filesystem;
    const char* env = std::getenv("CONEFLOW_SCENARIO_DIR");
    const fs::path dir = env != nullptr ? env : "scenarios";
    std::vector<fs::path> files;
    if (fs::is_directory(dir))
        for (const auto& entry : fs::directory_iterator(dir))
            if (entry.path().extension() == ".json") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) return {false, str("no scenario files under %s", dir.string().c_str())};
    int stable = 0;
    std::string unstable;
    for (const fs::path& p : files) {
        const Scenario sc = load_scenario_file(p.string());
        const RunOutcome first = run_scenario(sc);
        const RunOutcome second = run_scenario(sc);
        if (report_payload(first.record) == report_payload(second.record))
            ++stable;
        else
            unstable += " " + p.filename().string();
    }
    const bool pass = files.size() == 7 && stable == static_cast<int>(files.size());
    return {pass, str("%zu scenario files rerun with fixed seeds: %d byte-identical payloads%s%s",
                      files.size(), stable, unstable.empty() ? "" : "; UNSTABLE:",
                      unstable.c_str())};
}

}  // namespace

int main() {
    struct Check {
        const char* name;
        std::function<Outcome()> run;
    };
    const std::vector<Check> checks = {
        {"adapted-frame-congruence", check_adapted_frames},
        {"polar-reconstruction", check_polar_reconstruction},
        {"separation-vs-sampling", check_separation_vs_sampling},
        {"pencil-window-agreement", check_pencil_window},
        {"composition-lower-bound", check_composition_bound},
        {"lorenz-equilibria", check_lorenz_equilibria},
        {"lorenz-exponents", check_lorenz_exponents},
        {"cycle-orbit-floquet", check_cycle_floquet},
        {"lorenz-star-certificate", check_lorenz_star},
        {"exponent-bound-slack", check_bound_slacks},
        {"time-reversal-duality", check_reversal_duality},
        {"scenario-determinism", check_scenario_determinism},
    };
    int failures = 0;
    for (const Check& check : checks) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = check.run();
        } catch (const std::exception& e) {
            out = {false, str("exception: %s", e.what())};
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("[%s] %-26s %s (%.1f s)\n", out.pass ? "PASS" : "FAIL", check.name,
                    out.detail.c_str(), secs);
        std::fflush(stdout);
        if (!out.pass) ++failures;
    }
    if (failures == 0)
        std::printf("acceptance: all %zu checks passed\n", checks.size());
    else
        std::printf("acceptance: %d of %zu checks FAILED\n", failures, checks.size());
    return failures == 0 ? 0 : 1;
}
