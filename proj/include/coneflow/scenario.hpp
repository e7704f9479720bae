#ifndef CONEFLOW_SCENARIO_HPP
#define CONEFLOW_SCENARIO_HPP

#include "coneflow/common.hpp"
#include "coneflow/field.hpp"
#include "coneflow/flow/model.hpp"

#include <json.hpp>

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

namespace coneflow {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// Scenario files are JSON with a closed schema: every object is checked for
// unknown keys before anything is computed, so typos fail loudly with the
// offending key named. The parsed Scenario keeps the validated sub-objects
// verbatim; the runner interprets them.
// ---------------------------------------------------------------------------
struct Scenario {
    std::string name;
    std::uint64_t seed = 0;
    Json model_spec;
    Json form_spec;  // null when absent
    Tolerances tol;
    Json tol_spec;  // raw overrides, for provenance
    std::vector<Json> analyses;
    std::string report_path;  // empty = stdout only
    std::string series_dir;   // empty = no series files
};

namespace cfg {

inline void expect_object(const Json& j, const std::string& where) {
    if (!j.is_object()) throw ConfigInvalid(where + " must be an object");
}

/// Closed-schema check: unknown keys are rejected by name, required keys must
/// be present.
inline void expect_keys(const Json& obj, const std::string& where,
                        std::initializer_list<const char*> allowed,
                        std::initializer_list<const char*> required) {
    expect_object(obj, where);
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        bool ok = false;
        for (const char* a : allowed)
            if (it.key() == a) {
                ok = true;
                break;
            }
        if (!ok) {
            std::string allowed_list;
            for (const char* a : allowed) {
                if (!allowed_list.empty()) allowed_list += ", ";
                allowed_list += a;
            }
            throw ConfigInvalid("unknown key \"" + it.key() + "\" in " + where +
                                " (allowed: " + allowed_list + ")");
        }
    }
    for (const char* r : required)
        if (!obj.contains(r))
            throw ConfigInvalid("missing required key \"" + std::string(r) + "\" in " + where);
}

inline double as_number(const Json& j, const std::string& where) {
    if (!j.is_number()) throw ConfigInvalid(where + " must be a number");
    return j.get<double>();
}

inline long as_integer(const Json& j, const std::string& where) {
    if (!j.is_number_integer()) throw ConfigInvalid(where + " must be an integer");
    return j.get<long>();
}

inline std::string as_string(const Json& j, const std::string& where) {
    if (!j.is_string()) throw ConfigInvalid(where + " must be a string");
    return j.get<std::string>();
}

inline Vector as_vector(const Json& j, const std::string& where) {
    if (!j.is_array() || j.empty()) throw ConfigInvalid(where + " must be a nonempty array");
    Vector v(static_cast<Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i)
        v[static_cast<Index>(i)] = as_number(j[i], where + "[" + std::to_string(i) + "]");
    return v;
}

inline Matrix as_matrix(const Json& j, const std::string& where) {
    if (!j.is_array() || j.empty())
        throw ConfigInvalid(where + " must be a nonempty array of rows");
    const std::size_t rows = j.size();
    std::size_t cols = 0;
    Matrix m;
    for (std::size_t r = 0; r < rows; ++r) {
        const Json& row = j[r];
        if (!row.is_array() || row.empty())
            throw ConfigInvalid(where + " row " + std::to_string(r) + " must be a nonempty array");
        if (r == 0) {
            cols = row.size();
            m.resize(static_cast<Index>(rows), static_cast<Index>(cols));
        } else if (row.size() != cols) {
            throw ConfigInvalid(where + " rows have inconsistent lengths");
        }
        for (std::size_t c = 0; c < cols; ++c)
            m(static_cast<Index>(r), static_cast<Index>(c)) =
                as_number(row[c], where + "[" + std::to_string(r) + "][" + std::to_string(c) + "]");
    }
    return m;
}

}  // namespace cfg

// ---------------------------------------------------------------------------
// Model and form-field construction from validated specs.
// ---------------------------------------------------------------------------
inline VectorFieldModel build_model(const Json& spec) {
    cfg::expect_keys(spec, "model", {"family", "parameters"}, {"family"});
    const std::string family = cfg::as_string(spec.at("family"), "model.family");
    const Json params = spec.contains("parameters") ? spec.at("parameters") : Json::object();

    if (family == "linear") {
        cfg::expect_keys(params, "model.parameters", {"matrix"}, {"matrix"});
        return VectorFieldModel::linear(cfg::as_matrix(params.at("matrix"), "model.parameters.matrix"));
    }
    if (family == "lorenz") {
        cfg::expect_keys(params, "model.parameters", {"sigma", "rho", "beta"}, {});
        double sigma = 10.0, rho = 28.0, beta = 8.0 / 3.0;
        if (params.contains("sigma")) sigma = cfg::as_number(params.at("sigma"), "model.parameters.sigma");
        if (params.contains("rho")) rho = cfg::as_number(params.at("rho"), "model.parameters.rho");
        if (params.contains("beta")) beta = cfg::as_number(params.at("beta"), "model.parameters.beta");
        return VectorFieldModel::lorenz(sigma, rho, beta);
    }
    if (family == "planar-limit-cycle") {
        cfg::expect_keys(params, "model.parameters", {}, {});
        return VectorFieldModel::planar_limit_cycle();
    }
    if (family == "polynomial") {
        cfg::expect_keys(params, "model.parameters", {"dim", "terms"}, {"dim", "terms"});
        const Index dim = cfg::as_integer(params.at("dim"), "model.parameters.dim");
        const Json& jterms = params.at("terms");
        if (!jterms.is_array()) throw ConfigInvalid("model.parameters.terms must be an array");
        std::vector<VectorFieldModel::PolyTerm> terms;
        for (std::size_t i = 0; i < jterms.size(); ++i) {
            const std::string where = "model.parameters.terms[" + std::to_string(i) + "]";
            cfg::expect_keys(jterms[i], where, {"component", "coeff", "powers"},
                             {"component", "coeff", "powers"});
            VectorFieldModel::PolyTerm t;
            t.component = cfg::as_integer(jterms[i].at("component"), where + ".component");
            t.coeff = cfg::as_number(jterms[i].at("coeff"), where + ".coeff");
            const Json& jp = jterms[i].at("powers");
            if (!jp.is_array()) throw ConfigInvalid(where + ".powers must be an array");
            for (std::size_t k = 0; k < jp.size(); ++k)
                t.powers.push_back(static_cast<int>(
                    cfg::as_integer(jp[k], where + ".powers[" + std::to_string(k) + "]")));
            terms.push_back(std::move(t));
        }
        return VectorFieldModel::polynomial(dim, std::move(terms));
    }
    throw ConfigInvalid("unknown model family \"" + family +
                        "\" (known: linear, lorenz, planar-limit-cycle, polynomial)");
}

inline QuadraticFormField build_form_field(const Json& spec, const VectorFieldModel& model) {
    cfg::expect_keys(spec, "form", {"kind", "matrix", "name", "index", "point"}, {"kind"});
    const std::string kind = cfg::as_string(spec.at("kind"), "form.kind");
    if (kind == "constant") {
        if (!spec.contains("matrix")) throw ConfigInvalid("form of kind constant needs \"matrix\"");
        return QuadraticFormField::constant(cfg::as_matrix(spec.at("matrix"), "form.matrix"));
    }
    if (kind == "named") {
        if (!spec.contains("name")) throw ConfigInvalid("form of kind named needs \"name\"");
        const std::string name = cfg::as_string(spec.at("name"), "form.name");
        if (name == "planar-cycle-frame") return planar_cycle_frame();
        throw ConfigInvalid("unknown named form \"" + name + "\" (known: planar-cycle-frame)");
    }
    if (kind == "adapted-search") {
        if (!spec.contains("index") || !spec.contains("point"))
            throw ConfigInvalid("form of kind adapted-search needs \"index\" and \"point\"");
        const Index q = cfg::as_integer(spec.at("index"), "form.index");
        const Vector point = cfg::as_vector(spec.at("point"), "form.point");
        const QuadraticForm j = adapted_form_search(model.jacobian(point), q);
        return QuadraticFormField::constant(j.matrix());
    }
    throw ConfigInvalid("unknown form kind \"" + kind +
                        "\" (known: constant, named, adapted-search)");
}

// ---------------------------------------------------------------------------
// Tolerance overrides: a flat object whose keys mirror the Tolerances struct.
// ---------------------------------------------------------------------------
inline void apply_tolerance_overrides(Tolerances& tol, const Json& spec,
                                      const std::string& where = "tolerances") {
    cfg::expect_keys(spec, where,
                     {"degeneracy_rel", "classify_band", "congruence", "separation_strict",
                      "polar_residual", "monotone_cmp", "integrate_rel", "integrate_abs", "newton",
                      "spectral", "dedupe_radius", "floquet_trivial", "lyapunov_drift",
                      "monotonicity_strict"},
                     {});
    auto get = [&](const char* key, double& slot) {
        if (spec.contains(key)) slot = cfg::as_number(spec.at(key), where + "." + key);
    };
    get("degeneracy_rel", tol.degeneracy_rel);
    get("classify_band", tol.classify_band);
    get("congruence", tol.congruence);
    get("separation_strict", tol.separation_strict);
    get("polar_residual", tol.polar_residual);
    get("monotone_cmp", tol.monotone_cmp);
    get("integrate_rel", tol.integrate_rel);
    get("integrate_abs", tol.integrate_abs);
    get("newton", tol.newton);
    get("spectral", tol.spectral);
    get("dedupe_radius", tol.dedupe_radius);
    get("floquet_trivial", tol.floquet_trivial);
    get("lyapunov_drift", tol.lyapunov_drift);
    get("monotonicity_strict", tol.monotonicity_strict);
}

inline Json tolerances_to_json(const Tolerances& tol) {
    Json j;
    j["degeneracy_rel"] = tol.degeneracy_rel;
    j["classify_band"] = tol.classify_band;
    j["congruence"] = tol.congruence;
    j["separation_strict"] = tol.separation_strict;
    j["polar_residual"] = tol.polar_residual;
    j["monotone_cmp"] = tol.monotone_cmp;
    j["integrate_rel"] = tol.integrate_rel;
    j["integrate_abs"] = tol.integrate_abs;
    j["newton"] = tol.newton;
    j["spectral"] = tol.spectral;
    j["dedupe_radius"] = tol.dedupe_radius;
    j["floquet_trivial"] = tol.floquet_trivial;
    j["lyapunov_drift"] = tol.lyapunov_drift;
    j["monotonicity_strict"] = tol.monotonicity_strict;
    return j;
}

// ---------------------------------------------------------------------------
// Per-analysis schemas. Validation happens here, interpretation in the
// runner; both share this table.
// ---------------------------------------------------------------------------
namespace cfg {

inline void validate_analysis(const Json& a, const std::string& where) {
    expect_object(a, where);
    if (!a.contains("type")) throw ConfigInvalid("missing required key \"type\" in " + where);
    const std::string type = as_string(a.at("type"), where + ".type");

    if (type == "operator-check") {
        expect_keys(a, where, {"type", "label", "j", "l"}, {"type", "j", "l"});
    } else if (type == "equilibria") {
        expect_keys(a, where, {"type", "label", "seeds"}, {"type", "seeds"});
        if (!a.at("seeds").is_array() || a.at("seeds").empty())
            throw ConfigInvalid(where + ".seeds must be a nonempty array of points");
    } else if (type == "orbit-check") {
        expect_keys(a, where,
                    {"type", "label", "x0", "t_transient", "t_scan", "section_normal",
                     "section_offset", "min_period"},
                    {"type", "x0", "t_scan", "section_normal", "section_offset"});
    } else if (type == "star-check") {
        expect_keys(a, where,
                    {"type", "label", "equilibrium_seeds", "equilibrium_forms", "orbit",
                     "orbit_samples"},
                    {"type", "equilibrium_seeds"});
        if (a.contains("orbit"))
            expect_keys(a.at("orbit"), where + ".orbit",
                        {"x0", "t_transient", "t_scan", "section_normal", "section_offset",
                         "min_period"},
                        {"x0", "t_scan", "section_normal", "section_offset"});
    } else if (type == "lyapunov") {
        expect_keys(a, where, {"type", "label", "x0", "t", "k", "t_transient", "chunk"},
                    {"type", "x0", "t"});
    } else if (type == "bounds-check") {
        expect_keys(a, where, {"type", "label", "x0", "t", "k1", "k2", "dt"},
                    {"type", "x0", "t", "k1", "k2"});
    } else if (type == "domination") {
        expect_keys(a, where, {"type", "label", "x0", "t", "e", "f", "steps"},
                    {"type", "x0", "t", "e", "f"});
    } else if (type == "volume-expansion") {
        expect_keys(a, where, {"type", "label", "x0", "t", "f", "p", "steps"},
                    {"type", "x0", "t", "f", "p"});
    } else {
        throw ConfigInvalid("unknown analysis type \"" + type + "\" in " + where);
    }
}

}  // namespace cfg

inline Scenario parse_scenario(const Json& root) {
    cfg::expect_keys(root, "scenario",
                     {"name", "seed", "model", "form", "tolerances", "analyses", "output"},
                     {"name", "seed", "model", "analyses"});
    Scenario sc;
    sc.name = cfg::as_string(root.at("name"), "scenario.name");
    if (!root.at("seed").is_number_unsigned() && !root.at("seed").is_number_integer())
        throw ConfigInvalid("scenario.seed must be a nonnegative integer");
    const long seed_raw = root.at("seed").get<long>();
    if (seed_raw < 0) throw ConfigInvalid("scenario.seed must be nonnegative");
    sc.seed = static_cast<std::uint64_t>(seed_raw);

    sc.model_spec = root.at("model");
    build_model(sc.model_spec);  // validate now, rebuild cheaply later

    if (root.contains("form")) {
        sc.form_spec = root.at("form");
        // Kind/shape validation only; adapted-search runs at execution time.
        cfg::expect_keys(sc.form_spec, "form", {"kind", "matrix", "name", "index", "point"},
                         {"kind"});
    }

    if (root.contains("tolerances")) {
        sc.tol_spec = root.at("tolerances");
        apply_tolerance_overrides(sc.tol, sc.tol_spec);
    }

    const Json& ja = root.at("analyses");
    if (!ja.is_array() || ja.empty())
        throw ConfigInvalid("scenario.analyses must be a nonempty array");
    for (std::size_t i = 0; i < ja.size(); ++i) {
        cfg::validate_analysis(ja[i], "analyses[" + std::to_string(i) + "]");
        sc.analyses.push_back(ja[i]);
    }

    if (root.contains("output")) {
        cfg::expect_keys(root.at("output"), "output", {"report", "series_dir"}, {});
        if (root.at("output").contains("report"))
            sc.report_path = cfg::as_string(root.at("output").at("report"), "output.report");
        if (root.at("output").contains("series_dir"))
            sc.series_dir = cfg::as_string(root.at("output").at("series_dir"), "output.series_dir");
    }
    return sc;
}

inline Scenario load_scenario_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigInvalid("cannot open scenario file \"" + path + "\"");
    Json root;
    try {
        root = Json::parse(in);
    } catch (const Json::parse_error& err) {
        throw ConfigInvalid("scenario file \"" + path + "\" is not valid JSON: " + err.what());
    }
    try {
        return parse_scenario(root);
    } catch (const ConfigInvalid& err) {
        throw ConfigInvalid(std::string(err.what()) + " (file \"" + path + "\")");
    }
}

}  // namespace coneflow

#endif
