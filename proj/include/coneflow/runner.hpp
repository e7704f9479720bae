#ifndef CONEFLOW_RUNNER_HPP
#define CONEFLOW_RUNNER_HPP

#include "coneflow/scenario.hpp"
#include "coneflow/verify.hpp"
#include "coneflow/version.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>

namespace coneflow {

// ---------------------------------------------------------------------------
// Record helpers. Reports must be byte-identical across runs (excluding the
// wall-time field), so every number goes through the same serialization path
// and non-finite values are stored as tagged strings instead of JSON null.
// ---------------------------------------------------------------------------
namespace rec {

inline Json real(double v) {
    if (std::isfinite(v)) return v;
    if (std::isnan(v)) return "nan";
    return v > 0 ? "+inf" : "-inf";
}

inline Json vec(const Vector& v) {
    Json out = Json::array();
    for (Index i = 0; i < v.size(); ++i) out.push_back(real(v[i]));
    return out;
}

inline Json vec(const std::vector<double>& v) {
    Json out = Json::array();
    for (double x : v) out.push_back(real(x));
    return out;
}

inline Json mat(const Matrix& m) {
    Json out = Json::array();
    for (Index r = 0; r < m.rows(); ++r) {
        Json row = Json::array();
        for (Index c = 0; c < m.cols(); ++c) row.push_back(real(m(r, c)));
        out.push_back(row);
    }
    return out;
}

inline Json complex_list(const std::vector<std::complex<double>>& v) {
    Json out = Json::array();
    for (const auto& z : v) out.push_back(Json::array({real(z.real()), real(z.imag())}));
    return out;
}

inline Json series(std::vector<std::string> columns, std::vector<std::string> units,
                   std::vector<std::vector<double>> rows) {
    Json s;
    s["columns"] = columns;
    s["units"] = units;
    Json jr = Json::array();
    for (const auto& row : rows) {
        Json r = Json::array();
        for (double v : row) r.push_back(real(v));
        jr.push_back(r);
    }
    s["rows"] = jr;
    return s;
}

}  // namespace rec

// ---------------------------------------------------------------------------
// Analysis executors. Each returns the payload object and optionally fills a
// series object. Errors escape as exceptions; the scenario loop records them.
// ---------------------------------------------------------------------------
namespace runner_detail {

struct Context {
    const Scenario& sc;
    const VectorFieldModel& model;
    IntegratorOptions integrator;

    QuadraticFormField field() const {
        if (sc.form_spec.is_null())
            throw Error("this analysis needs a scenario-level \"form\" entry");
        return build_form_field(sc.form_spec, model);
    }
};

inline Json equilibrium_to_json(const Equilibrium& eq) {
    Json e;
    e["point"] = rec::vec(eq.point);
    e["eigenvalues"] = rec::complex_list(eq.eigenvalues);
    e["index"] = eq.index;
    e["hyperbolic"] = eq.hyperbolic;
    e["residual"] = rec::real(eq.residual);
    return e;
}

inline Json orbit_to_json(const PeriodicOrbit& orbit) {
    Json o;
    o["anchor"] = rec::vec(orbit.anchor);
    o["period"] = rec::real(orbit.period);
    o["multipliers"] = rec::complex_list(orbit.multipliers);
    o["index"] = orbit.index;
    o["hyperbolic"] = orbit.hyperbolic;
    o["residual"] = rec::real(orbit.residual);
    o["trivial_defect"] = rec::real(orbit.trivial_defect);
    const HyperbolicOrbitReport hyp = verify_hyperbolic_orbit(orbit);
    o["rate_lambda"] = rec::real(hyp.lambda);
    o["k_estimate"] = rec::real(hyp.k_estimate);
    return o;
}

inline PeriodicOrbit locate_orbit(const Context& ctx, const Json& a) {
    const Vector x0 = cfg::as_vector(a.at("x0"), "orbit.x0");
    SectionPlane section;
    section.normal = cfg::as_vector(a.at("section_normal"), "orbit.section_normal");
    section.offset = cfg::as_number(a.at("section_offset"), "orbit.section_offset");
    const double t_scan = cfg::as_number(a.at("t_scan"), "orbit.t_scan");
    const double t_transient =
        a.contains("t_transient") ? cfg::as_number(a.at("t_transient"), "orbit.t_transient") : 0.0;
    const double min_period =
        a.contains("min_period") ? cfg::as_number(a.at("min_period"), "orbit.min_period") : 0.1;
    return find_shortest_orbit(ctx.model, x0, section, t_transient, t_scan, min_period,
                               ctx.sc.tol.newton);
}

inline Json run_operator_check(const Context& ctx, const Json& a, Json* /*series*/) {
    const QuadraticForm j(cfg::as_matrix(a.at("j"), "operator-check.j"), ctx.sc.tol.degeneracy_rel);
    const Matrix l = cfg::as_matrix(a.at("l"), "operator-check.l");
    Json payload;
    const SeparationVerdict verdict = check_separation(j, l, ctx.sc.tol.separation_strict);
    payload["level"] = to_string(verdict.level);
    payload["margin"] = rec::real(verdict.margin);
    payload["certificate"] = verdict.certificate ? rec::real(*verdict.certificate) : Json();
    payload["witness"] = verdict.witness ? rec::vec(*verdict.witness) : Json();
    if (verdict.level != SeparationLevel::NotSeparated) {
        try {
            const PolarDecomposition polar = polar_decompose(j, l);
            Json jp;
            jp["r_minus"] = rec::vec(polar.r_minus);
            jp["r_plus"] = rec::vec(polar.r_plus);
            jp["monotonicity"] = to_string(
                monotonicity_from_spectrum(polar.r_minus, polar.r_plus, ctx.sc.tol.monotone_cmp));
            Json res;
            res["reconstruction"] = rec::real(polar.reconstruction_residual);
            res["isometry"] = rec::real(polar.isometry_residual);
            res["j_symmetry"] = rec::real(polar.j_symmetry_residual);
            jp["residuals"] = res;
            payload["polar"] = jp;
        } catch (const Error& err) {
            payload["polar"] = Json{{"error", err.what()}};
        }
    }
    return payload;
}

inline Json run_equilibria(const Context& ctx, const Json& a, Json* /*series*/) {
    std::vector<Vector> seeds;
    const Json& js = a.at("seeds");
    for (std::size_t i = 0; i < js.size(); ++i)
        seeds.push_back(cfg::as_vector(js[i], "equilibria.seeds[" + std::to_string(i) + "]"));
    const EquilibriumSearch search = find_equilibria(ctx.model, seeds, ctx.sc.tol.newton,
                                                     ctx.sc.tol.dedupe_radius, 100,
                                                     ctx.sc.tol.spectral);
    Json payload;
    Json found = Json::array();
    for (const Equilibrium& eq : search.found) found.push_back(equilibrium_to_json(eq));
    payload["found"] = found;
    payload["failed_seeds"] = search.failed_seeds;
    return payload;
}

inline Json run_orbit_check(const Context& ctx, const Json& a, Json* /*series*/) {
    return orbit_to_json(locate_orbit(ctx, a));
}

inline Json run_star_check(const Context& ctx, const Json& a, Json* /*series*/) {
    std::vector<Vector> seeds;
    const Json& js = a.at("equilibrium_seeds");
    for (std::size_t i = 0; i < js.size(); ++i)
        seeds.push_back(
            cfg::as_vector(js[i], "star-check.equilibrium_seeds[" + std::to_string(i) + "]"));

    CriticalElements elements;
    const EquilibriumSearch search = find_equilibria(ctx.model, seeds, ctx.sc.tol.newton,
                                                     ctx.sc.tol.dedupe_radius, 100,
                                                     ctx.sc.tol.spectral);
    elements.equilibria = search.found;

    Json payload;
    Json eqs = Json::array();
    for (const Equilibrium& eq : elements.equilibria) eqs.push_back(equilibrium_to_json(eq));
    payload["equilibria"] = eqs;

    if (a.contains("orbit")) {
        elements.orbits.push_back(locate_orbit(ctx, a.at("orbit")));
        payload["orbit"] = orbit_to_json(elements.orbits.front());
    }

    StarOptions options;
    options.strict_rel = ctx.sc.tol.separation_strict;
    if (a.contains("orbit_samples"))
        options.orbit_samples = cfg::as_integer(a.at("orbit_samples"), "star-check.orbit_samples");
    if (a.contains("equilibrium_forms")) {
        const Json& jf = a.at("equilibrium_forms");
        if (!jf.is_array())
            throw ConfigInvalid("star-check.equilibrium_forms must be an array (null entries allowed)");
        for (std::size_t i = 0; i < jf.size(); ++i) {
            if (jf[i].is_null())
                options.equilibrium_forms.push_back(std::nullopt);
            else
                options.equilibrium_forms.push_back(cfg::as_matrix(
                    jf[i], "star-check.equilibrium_forms[" + std::to_string(i) + "]"));
        }
    }

    const StarCertificate cert = star_certificate(ctx.model, elements, options);
    payload["pass"] = cert.pass;
    Json jels = Json::array();
    for (const StarElementReport& el : cert.elements) {
        Json je;
        je["label"] = el.label;
        je["kind"] = el.kind;
        je["index"] = el.index;
        je["status"] = to_string(el.status);
        je["detail"] = el.detail;
        je["degenerate_cone"] = el.degenerate_cone;
        if (el.positivity) je["min_eigenvalue"] = rec::real(el.positivity->min_eigenvalue);
        if (el.separation) je["separation"] = to_string(*el.separation);
        if (el.lpf_monotonicity) je["lpf_monotonicity"] = to_string(*el.lpf_monotonicity);
        jels.push_back(je);
    }
    payload["elements"] = jels;

    if (!elements.orbits.empty()) {
        const HomogeneityReport hom =
            homogeneity_report(ctx.model, elements, elements.orbits.front().index);
        Json jh;
        jh["declared_index"] = hom.declared_index;
        jh["homogeneous"] = hom.homogeneous;
        Json sig = Json::array();
        for (const auto& cmp : hom.singularities)
            sig.push_back(Json{{"label", cmp.label},
                               {"index", cmp.index},
                               {"satisfies_lower_bound", cmp.satisfies_lower_bound}});
        jh["singularities"] = sig;
        payload["homogeneity"] = jh;
    }
    return payload;
}

inline Json run_lyapunov(const Context& ctx, const Json& a, Json* series) {
    const Vector x0 = cfg::as_vector(a.at("x0"), "lyapunov.x0");
    const double t = cfg::as_number(a.at("t"), "lyapunov.t");
    LyapunovOptions options;
    options.seed = ctx.sc.seed;
    options.drift_tol = ctx.sc.tol.lyapunov_drift;
    options.integrator = ctx.integrator;
    if (a.contains("k")) options.k = cfg::as_integer(a.at("k"), "lyapunov.k");
    if (a.contains("t_transient"))
        options.t_transient = cfg::as_number(a.at("t_transient"), "lyapunov.t_transient");
    if (a.contains("chunk")) options.chunk = cfg::as_number(a.at("chunk"), "lyapunov.chunk");

    const LyapunovResult result = lyapunov_exponents(ctx.model, x0, t, options);
    Json payload;
    payload["exponents"] = rec::vec(result.exponents);
    payload["converged"] = result.converged;
    payload["drift"] = rec::real(result.drift);
    payload["t_accumulated"] = rec::real(result.t_accumulated);
    payload["renorm_count"] = result.renorm_count;

    const std::size_t k = result.exponents.size();
    std::vector<std::string> columns{"t"};
    std::vector<std::string> units{"time"};
    for (std::size_t j = 0; j < k; ++j) {
        columns.push_back("chi_" + std::to_string(j + 1));
        units.push_back("1/time");
    }
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < result.history_times.size(); ++i) {
        std::vector<double> row{result.history_times[i]};
        row.insert(row.end(), result.history[i].begin(), result.history[i].end());
        rows.push_back(std::move(row));
    }
    *series = rec::series(std::move(columns), std::move(units), std::move(rows));
    return payload;
}

inline Json run_bounds_check(const Context& ctx, const Json& a, Json* /*series*/) {
    const Vector x0 = cfg::as_vector(a.at("x0"), "bounds-check.x0");
    const double t = cfg::as_number(a.at("t"), "bounds-check.t");
    const Index k1 = cfg::as_integer(a.at("k1"), "bounds-check.k1");
    const Index k2 = cfg::as_integer(a.at("k2"), "bounds-check.k2");
    const double dt = a.contains("dt") ? cfg::as_number(a.at("dt"), "bounds-check.dt") : 0.1;
    LyapunovOptions lyap;
    lyap.seed = ctx.sc.seed;
    lyap.drift_tol = ctx.sc.tol.lyapunov_drift;
    lyap.integrator = ctx.integrator;
    const ExponentBoundsReport rep = wojtkowski_bounds_check(
        ctx.field(), ctx.model, x0, t, k1, k2, dt, 6, 1e-3, lyap, ctx.integrator);
    Json payload;
    payload["chi"] = rec::vec(rep.chi);
    payload["chi_converged"] = rep.chi_converged;
    payload["chi_drift"] = rec::real(rep.chi_drift);
    payload["avg_log_r_minus"] = rec::vec(rep.avg_log_r_minus);
    payload["avg_log_r_plus"] = rec::vec(rep.avg_log_r_plus);
    payload["slack_minus"] = rec::vec(rep.slack_minus);
    payload["slack_plus"] = rec::vec(rep.slack_plus);
    payload["dt_used"] = rec::real(rep.dt_used);
    payload["refinements"] = rep.refinements;
    payload["asserted"] = rep.asserted;
    return payload;
}

inline Json run_domination(const Context& ctx, const Json& a, Json* series) {
    const Vector x0 = cfg::as_vector(a.at("x0"), "domination.x0");
    const double t = cfg::as_number(a.at("t"), "domination.t");
    const Matrix e0 = cfg::as_matrix(a.at("e"), "domination.e");
    const Matrix f0 = cfg::as_matrix(a.at("f"), "domination.f");
    const long steps =
        a.contains("steps") ? cfg::as_integer(a.at("steps"), "domination.steps") : 80;
    const DominationReport rep =
        verify_dominated_splitting(ctx.model, x0, t, e0, f0, steps, ctx.integrator);
    Json payload;
    payload["verdict"] = to_string(rep.verdict);
    payload["lambda"] = rec::real(rep.lambda);
    payload["lambda_stderr"] = rec::real(rep.lambda_stderr);
    payload["k_constant"] = rec::real(rep.k_constant);
    payload["dim_e"] = rep.dim_e;
    payload["dim_f"] = rep.dim_f;
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < rep.times.size(); ++i)
        rows.push_back({rep.times[i], rep.log_ratio[i]});
    *series = rec::series({"t", "log_ratio"}, {"time", "log"}, std::move(rows));
    return payload;
}

inline Json run_volume_expansion(const Context& ctx, const Json& a, Json* series) {
    const Vector x0 = cfg::as_vector(a.at("x0"), "volume-expansion.x0");
    const double t = cfg::as_number(a.at("t"), "volume-expansion.t");
    const Matrix f0 = cfg::as_matrix(a.at("f"), "volume-expansion.f");
    const Index p = cfg::as_integer(a.at("p"), "volume-expansion.p");
    const long steps =
        a.contains("steps") ? cfg::as_integer(a.at("steps"), "volume-expansion.steps") : 80;
    const VolumeExpansionReport rep =
        verify_volume_expansion(ctx.model, x0, t, f0, p, steps, ctx.integrator);
    Json payload;
    payload["pass"] = rep.pass;
    payload["lambda"] = rec::real(rep.lambda);
    payload["lambda_stderr"] = rec::real(rep.lambda_stderr);
    payload["c_constant"] = rec::real(rep.c_constant);
    payload["dim_f"] = rep.dim_f;
    payload["p"] = rep.p;
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < rep.times.size(); ++i)
        rows.push_back({rep.times[i], rep.log_volume[i]});
    *series = rec::series({"t", "log_min_volume"}, {"time", "log"}, std::move(rows));
    return payload;
}

}  // namespace runner_detail

// ---------------------------------------------------------------------------
// Scenario execution: analyses run in order; per-analysis errors are recorded
// and the remaining analyses still run. `any_error` drives the process exit
// code (a Fails verdict is a result, not an error).
// ---------------------------------------------------------------------------
struct RunOutcome {
    Json record;
    bool any_error = false;
};

inline RunOutcome run_scenario(const Scenario& sc) {
    const auto t_start = std::chrono::steady_clock::now();
    const VectorFieldModel model = build_model(sc.model_spec);
    runner_detail::Context ctx{sc, model, IntegratorOptions{}};
    ctx.integrator.rtol = sc.tol.integrate_rel;
    ctx.integrator.atol = sc.tol.integrate_abs;

    RunOutcome out;
    out.record["scenario"] = sc.name;
    Json prov;
    prov["tool_version"] = version_string;
    prov["seed"] = sc.seed;
    prov["tolerances"] = tolerances_to_json(sc.tol);
    prov["model_family"] = model.family();
    out.record["provenance"] = prov;

    Json janalyses = Json::array();
    for (std::size_t i = 0; i < sc.analyses.size(); ++i) {
        const Json& a = sc.analyses[i];
        const std::string type = a.at("type").get<std::string>();
        Json entry;
        entry["type"] = type;
        entry["id"] = a.contains("label") ? a.at("label").get<std::string>()
                                          : type + "-" + std::to_string(i);
        try {
            Json series;
            Json payload;
            if (type == "operator-check")
                payload = runner_detail::run_operator_check(ctx, a, &series);
            else if (type == "equilibria")
                payload = runner_detail::run_equilibria(ctx, a, &series);
            else if (type == "orbit-check")
                payload = runner_detail::run_orbit_check(ctx, a, &series);
            else if (type == "star-check")
                payload = runner_detail::run_star_check(ctx, a, &series);
            else if (type == "lyapunov")
                payload = runner_detail::run_lyapunov(ctx, a, &series);
            else if (type == "bounds-check")
                payload = runner_detail::run_bounds_check(ctx, a, &series);
            else if (type == "domination")
                payload = runner_detail::run_domination(ctx, a, &series);
            else
                payload = runner_detail::run_volume_expansion(ctx, a, &series);
            entry["status"] = "ok";
            entry["payload"] = payload;
            if (!series.is_null()) entry["series"] = series;
        } catch (const Error& err) {
            entry["status"] = "error";
            entry["error"] = Json{{"message", err.what()}};
            out.any_error = true;
        }
        janalyses.push_back(std::move(entry));
    }
    out.record["analyses"] = janalyses;

    const auto t_end = std::chrono::steady_clock::now();
    out.record["wall_time_ms"] =
        std::chrono::duration<double, std::milli>(t_end - t_start).count();
    return out;
}

inline RunOutcome run_scenario_file(const std::string& path) {
    return run_scenario(load_scenario_file(path));
}

/// Report payload with the wall-time field stripped: this is the part that
/// must be byte-identical across reruns.
inline std::string report_payload(const Json& record) {
    Json copy = record;
    copy.erase("wall_time_ms");
    return copy.dump(2);
}

// ---------------------------------------------------------------------------
// Series emission: plain columnar text, header row naming columns and units.
// ---------------------------------------------------------------------------
namespace rec {

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace rec

inline void emit_series(const Json& record, const std::string& analysis_id, std::ostream& os) {
    if (!record.contains("analyses")) throw NoSeries("record holds no analyses");
    for (const Json& a : record.at("analyses")) {
        if (a.at("id").get<std::string>() != analysis_id) continue;
        if (!a.contains("series"))
            throw NoSeries("analysis \"" + analysis_id + "\" produced no series");
        const Json& s = a.at("series");
        os << "#";
        for (std::size_t c = 0; c < s.at("columns").size(); ++c)
            os << " " << s.at("columns")[c].get<std::string>() << "["
               << s.at("units")[c].get<std::string>() << "]";
        os << "\n";
        for (const Json& row : s.at("rows")) {
            for (std::size_t c = 0; c < row.size(); ++c) {
                if (c) os << " ";
                if (row[c].is_number())
                    os << rec::format_double(row[c].get<double>());
                else
                    os << row[c].get<std::string>();  // non-finite sentinel
            }
            os << "\n";
        }
        return;
    }
    throw NoSeries("no analysis with id \"" + analysis_id + "\" in the record");
}

/// List the analysis ids that produced series (for CLI discovery).
inline std::vector<std::string> series_ids(const Json& record) {
    std::vector<std::string> ids;
    if (!record.contains("analyses")) return ids;
    for (const Json& a : record.at("analyses"))
        if (a.contains("series")) ids.push_back(a.at("id").get<std::string>());
    return ids;
}

// ---------------------------------------------------------------------------
// File outputs: the scenario's own paths, optionally overridden by the CLI.
// ---------------------------------------------------------------------------
inline void write_scenario_outputs(const Scenario& sc, const RunOutcome& outcome,
                                   const std::string& out_dir_override = "",
                                   bool force_series = false) {
    namespace fs = std::filesystem;
    std::string report_path = sc.report_path;
    std::string series_dir = sc.series_dir;
    if (!out_dir_override.empty()) {
        fs::create_directories(out_dir_override);
        report_path = (fs::path(out_dir_override) / (sc.name + ".report.json")).string();
        if (force_series || !series_dir.empty()) series_dir = out_dir_override;
    }
    if (!report_path.empty()) {
        if (const fs::path parent = fs::path(report_path).parent_path(); !parent.empty())
            fs::create_directories(parent);
        std::ofstream out(report_path);
        if (!out) throw Error("cannot write report to \"" + report_path + "\"");
        out << outcome.record.dump(2) << "\n";
    }
    if (!series_dir.empty()) {
        fs::create_directories(series_dir);
        for (const std::string& id : series_ids(outcome.record)) {
            const std::string path =
                (fs::path(series_dir) / (sc.name + "." + id + ".series.txt")).string();
            std::ofstream out(path);
            if (!out) throw Error("cannot write series to \"" + path + "\"");
            emit_series(outcome.record, id, out);
        }
    }
}

}  // namespace coneflow

#endif
