// Command-line front end. Every subcommand funnels through the same scenario
// runner so an ad-hoc `coneflow lyapunov ...` produces exactly the record a
// scenario file with the equivalent analysis block would.

#include "coneflow/runner.hpp"

#include "CLI11.hpp"

#include <atomic>
#include <iostream>
#include <mutex>
#include <thread>

namespace {

using coneflow::ConfigInvalid;
using coneflow::Json;

// Exit codes: 0 = ran (failed verdicts included), 1 = an analysis errored,
// 2 = the configuration itself was rejected.
constexpr int kExitOk = 0;
constexpr int kExitAnalysisError = 1;
constexpr int kExitConfigInvalid = 2;

Json parse_json_arg(const std::string& text, const std::string& what) {
    Json parsed = Json::parse(text, nullptr, false);
    if (parsed.is_discarded())
        throw ConfigInvalid(what + " is not valid JSON: \"" + text + "\"");
    return parsed;
}

// `--model` takes a builtin family name or an inline JSON model object.
Json parse_model_arg(const std::string& text) {
    if (!text.empty() && text.front() == '{') return parse_json_arg(text, "--model");
    if (text == "lorenz" || text == "planar-limit-cycle") return Json{{"family", text}};
    throw ConfigInvalid("--model must be \"lorenz\", \"planar-limit-cycle\", or a JSON object "
                        "(families needing parameters have no name-only shorthand)");
}

Json parse_form_arg(const std::string& text) {
    if (!text.empty() && text.front() == '{') return parse_json_arg(text, "--form");
    return Json{{"kind", "named"}, {"name", text}};
}

Json overrides_to_json(const std::vector<std::string>& overrides) {
    Json out = Json::object();
    for (const std::string& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos || eq == 0)
            throw ConfigInvalid("--tol-override expects key=value, got \"" + kv + "\"");
        const std::string key = kv.substr(0, eq);
        try {
            std::size_t used = 0;
            const double value = std::stod(kv.substr(eq + 1), &used);
            if (used != kv.size() - eq - 1) throw std::invalid_argument("trailing junk");
            out[key] = value;
        } catch (const std::exception&) {
            throw ConfigInvalid("--tol-override value for \"" + key + "\" is not a number");
        }
    }
    return out;
}

struct CommonOpts {
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::vector<std::string> tol_overrides;
    std::string out_dir;
    bool series = false;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--seed", opts.seed, "Deterministic RNG seed")
        ->each([&opts](const std::string&) { opts.seed_set = true; });
    cmd->add_option("--tol-override", opts.tol_overrides,
                    "Tolerance override key=value (repeatable)");
    cmd->add_option("--out", opts.out_dir, "Directory for report/series files");
    cmd->add_flag("--series", opts.series, "Also write series files");
}

// Run one assembled scenario document: validate, execute, write, print.
int run_document(Json root, const CommonOpts& opts) {
    if (opts.seed_set) root["seed"] = opts.seed;
    if (!opts.tol_overrides.empty()) {
        Json tols = root.contains("tolerances") ? root["tolerances"] : Json::object();
        const Json extra = overrides_to_json(opts.tol_overrides);
        for (auto it = extra.begin(); it != extra.end(); ++it) tols[it.key()] = it.value();
        root["tolerances"] = tols;
    }
    coneflow::Scenario sc = coneflow::parse_scenario(root);
    const coneflow::RunOutcome outcome = coneflow::run_scenario(sc);
    std::string out_dir = opts.out_dir;
    if (opts.series && out_dir.empty()) out_dir = "out";
    if (!out_dir.empty())
        coneflow::write_scenario_outputs(sc, outcome, out_dir, opts.series);
    else
        std::cout << outcome.record.dump(2) << "\n";
    if (!out_dir.empty()) {
        std::cout << "scenario " << sc.name << ": "
                  << (outcome.any_error ? "completed with errors" : "ok") << ", report in "
                  << out_dir << "\n";
    }
    return outcome.any_error ? kExitAnalysisError : kExitOk;
}

Json scenario_skeleton(const std::string& name, const CommonOpts& opts, Json model) {
    Json root;
    root["name"] = name;
    root["seed"] = opts.seed;  // parse_scenario requires it even when defaulted
    root["model"] = std::move(model);
    return root;
}

// ---- `run`: scenario files, optionally in parallel ------------------------

struct RunSlot {
    std::string file;
    bool config_error = false;
    bool run_error = false;
    std::string message;
    std::string name;
    coneflow::Scenario scenario;
    coneflow::RunOutcome outcome;
};

int cmd_run(const std::vector<std::string>& files, unsigned jobs, const CommonOpts& opts) {
    std::vector<RunSlot> slots(files.size());
    for (std::size_t i = 0; i < files.size(); ++i) slots[i].file = files[i];

    const Json tol_extra = overrides_to_json(opts.tol_overrides);
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= slots.size()) return;
            RunSlot& slot = slots[i];
            try {
                slot.scenario = coneflow::load_scenario_file(slot.file);
                if (opts.seed_set) slot.scenario.seed = opts.seed;
                if (!tol_extra.empty())
                    coneflow::apply_tolerance_overrides(slot.scenario.tol, tol_extra,
                                                        "--tol-override");
                slot.name = slot.scenario.name;
                slot.outcome = coneflow::run_scenario(slot.scenario);
                slot.run_error = slot.outcome.any_error;
            } catch (const ConfigInvalid& err) {
                slot.config_error = true;
                slot.message = err.what();
            } catch (const coneflow::Error& err) {
                slot.run_error = true;
                slot.message = err.what();
            }
        }
    };

    const unsigned n_workers =
        std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(slots.size())));
    std::vector<std::thread> pool;
    for (unsigned w = 0; w + 1 < n_workers; ++w) pool.emplace_back(worker);
    worker();
    for (std::thread& t : pool) t.join();

    // Output in input order regardless of completion order.
    bool any_config = false;
    bool any_run = false;
    for (RunSlot& slot : slots) {
        if (slot.config_error) {
            any_config = true;
            std::cerr << slot.file << ": " << slot.message << "\n";
            continue;
        }
        if (!slot.message.empty()) {
            any_run = true;
            std::cerr << slot.file << ": " << slot.message << "\n";
            continue;
        }
        coneflow::write_scenario_outputs(slot.scenario, slot.outcome, opts.out_dir, opts.series);
        std::size_t n_err = 0;
        for (const Json& a : slot.outcome.record.at("analyses"))
            if (a.at("status") == "error") ++n_err;
        any_run = any_run || slot.run_error;
        std::cout << slot.file << ": " << slot.name << ": "
                  << slot.outcome.record.at("analyses").size() << " analyses, " << n_err
                  << " errors\n";
        if (opts.out_dir.empty() && slot.scenario.report_path.empty())
            std::cout << coneflow::report_payload(slot.outcome.record) << "\n";
    }
    if (any_config) return kExitConfigInvalid;
    return any_run ? kExitAnalysisError : kExitOk;
}

// ---- `report`: inspect a saved record -------------------------------------

int cmd_report(const std::string& file, const std::string& series_id, bool list_series) {
    std::ifstream in(file);
    if (!in) throw ConfigInvalid("cannot open record \"" + file + "\"");
    Json record = Json::parse(in, nullptr, false);
    if (record.is_discarded())
        throw ConfigInvalid("record \"" + file + "\" is not valid JSON");
    if (!series_id.empty()) {
        coneflow::emit_series(record, series_id, std::cout);
        return kExitOk;
    }
    if (list_series) {
        for (const std::string& id : coneflow::series_ids(record)) std::cout << id << "\n";
        return kExitOk;
    }
    std::cout << "scenario: " << record.value("scenario", std::string("?")) << "\n";
    bool any_error = false;
    for (const Json& a : record.value("analyses", Json::array())) {
        std::cout << "  " << a.at("id").get<std::string>() << " ("
                  << a.at("type").get<std::string>() << "): "
                  << a.at("status").get<std::string>();
        if (a.at("status") == "error") {
            any_error = true;
            std::cout << " — " << a.at("error").at("message").get<std::string>();
        } else {
            const Json& p = a.at("payload");
            for (const char* key : {"level", "verdict", "pass", "converged"})
                if (p.contains(key)) std::cout << " [" << key << "=" << p.at(key).dump() << "]";
        }
        std::cout << "\n";
    }
    return any_error ? kExitAnalysisError : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Quadratic-form cone analysis for flows"};
    app.require_subcommand(1);

    // run -------------------------------------------------------------------
    auto* c_run = app.add_subcommand("run", "Execute scenario files");
    std::vector<std::string> run_files;
    unsigned run_jobs = 1;
    CommonOpts run_opts;
    c_run->add_option("files", run_files, "Scenario JSON files")->required();
    c_run->add_option("--jobs", run_jobs, "Max scenarios to run concurrently");
    add_common(c_run, run_opts);

    // operator --------------------------------------------------------------
    auto* c_op = app.add_subcommand("operator", "Separation/monotonicity of one linear map");
    std::string op_j, op_l;
    CommonOpts op_opts;
    c_op->add_option("--j", op_j, "Form matrix (JSON rows)")->required();
    c_op->add_option("--l", op_l, "Operator matrix (JSON rows)")->required();
    add_common(c_op, op_opts);

    // equilibria ------------------------------------------------------------
    auto* c_eq = app.add_subcommand("equilibria", "Locate and classify equilibria");
    std::string eq_model, eq_seeds;
    long eq_random = 0;
    double eq_radius = 5.0;
    CommonOpts eq_opts;
    c_eq->add_option("--model", eq_model, "Model family name or JSON object")->required();
    c_eq->add_option("--seeds", eq_seeds, "Seed points (JSON array of arrays)");
    c_eq->add_option("--random", eq_random, "Draw this many seeds at random instead");
    c_eq->add_option("--radius", eq_radius, "Box half-width for --random seeds");
    add_common(c_eq, eq_opts);

    // orbit -----------------------------------------------------------------
    auto* c_orbit = app.add_subcommand("orbit", "Hunt a periodic orbit through a section");
    std::string orbit_model, orbit_x0, orbit_normal;
    double orbit_offset = 0.0, orbit_tscan = 0.0, orbit_ttrans = 0.0, orbit_minp = 0.1;
    CommonOpts orbit_opts;
    c_orbit->add_option("--model", orbit_model)->required();
    c_orbit->add_option("--x0", orbit_x0, "Initial point (JSON array)")->required();
    c_orbit->add_option("--section-normal", orbit_normal, "Section normal (JSON array)")
        ->required();
    c_orbit->add_option("--section-offset", orbit_offset)->required();
    c_orbit->add_option("--t-scan", orbit_tscan, "Close-return scan window")->required();
    c_orbit->add_option("--t-transient", orbit_ttrans);
    c_orbit->add_option("--min-period", orbit_minp);
    add_common(c_orbit, orbit_opts);

    // star ------------------------------------------------------------------
    auto* c_star = app.add_subcommand("star", "Certify separation at critical elements");
    std::string star_model, star_eq_seeds, star_orbit;
    long star_samples = 128;
    CommonOpts star_opts;
    c_star->add_option("--model", star_model)->required();
    c_star->add_option("--equilibrium-seeds", star_eq_seeds, "JSON array of seed points")
        ->required();
    c_star->add_option("--orbit", star_orbit,
                       "Orbit hunt block (JSON: x0, t_scan, section_normal, section_offset)");
    c_star->add_option("--orbit-samples", star_samples);
    add_common(c_star, star_opts);

    // lyapunov --------------------------------------------------------------
    auto* c_lyap = app.add_subcommand("lyapunov", "Lyapunov exponents along one trajectory");
    std::string lyap_model, lyap_x0;
    double lyap_t = 0.0, lyap_ttrans = 0.0, lyap_chunk = 0.5;
    long lyap_k = -1;
    CommonOpts lyap_opts;
    c_lyap->add_option("--model", lyap_model)->required();
    c_lyap->add_option("--x0", lyap_x0)->required();
    c_lyap->add_option("--t", lyap_t, "Averaging time")->required();
    c_lyap->add_option("--k", lyap_k, "Number of exponents (default: all)");
    c_lyap->add_option("--t-transient", lyap_ttrans);
    c_lyap->add_option("--chunk", lyap_chunk, "Renormalization interval");
    add_common(c_lyap, lyap_opts);

    // bounds ----------------------------------------------------------------
    auto* c_bounds = app.add_subcommand("bounds", "Exponent bounds from averaged polar spectra");
    std::string bounds_model, bounds_form, bounds_x0;
    double bounds_t = 0.0, bounds_dt = 0.1;
    long bounds_k1 = 0, bounds_k2 = 0;
    CommonOpts bounds_opts;
    c_bounds->add_option("--model", bounds_model)->required();
    c_bounds->add_option("--form", bounds_form, "Form field (name or JSON object)")->required();
    c_bounds->add_option("--x0", bounds_x0)->required();
    c_bounds->add_option("--t", bounds_t)->required();
    c_bounds->add_option("--k1", bounds_k1, "Depth into the contracting spectrum")->required();
    c_bounds->add_option("--k2", bounds_k2, "Depth into the expanding spectrum")->required();
    c_bounds->add_option("--dt", bounds_dt, "Initial polar step");
    add_common(c_bounds, bounds_opts);

    // report ----------------------------------------------------------------
    auto* c_report = app.add_subcommand("report", "Inspect a saved record");
    std::string report_file, report_series;
    bool report_list = false;
    c_report->add_option("file", report_file, "Record JSON file")->required();
    c_report->add_option("--series", report_series, "Emit this analysis id as columnar text");
    c_report->add_flag("--list-series", report_list, "List analysis ids that carry series");

    CLI11_PARSE(app, argc, argv);

    try {
        if (c_run->parsed()) return cmd_run(run_files, run_jobs, run_opts);

        if (c_op->parsed()) {
            const Json j = parse_json_arg(op_j, "--j");
            // The check itself never evaluates the model, but a scenario needs
            // one; an identity linear field of matching dimension is inert.
            Json ident = Json::array();
            for (std::size_t r = 0; r < j.size(); ++r) {
                Json row = Json::array();
                for (std::size_t c = 0; c < j.size(); ++c) row.push_back(r == c ? 1.0 : 0.0);
                ident.push_back(row);
            }
            Json root = scenario_skeleton(
                "operator-adhoc", op_opts,
                Json{{"family", "linear"}, {"parameters", Json{{"matrix", ident}}}});
            root["analyses"] =
                Json::array({Json{{"type", "operator-check"},
                                  {"j", j},
                                  {"l", parse_json_arg(op_l, "--l")}}});
            return run_document(root, op_opts);
        }

        if (c_eq->parsed()) {
            Json root = scenario_skeleton("equilibria-adhoc", eq_opts, parse_model_arg(eq_model));
            Json seeds;
            if (!eq_seeds.empty()) {
                seeds = parse_json_arg(eq_seeds, "--seeds");
            } else if (eq_random > 0) {
                const coneflow::VectorFieldModel probe = coneflow::build_model(root["model"]);
                coneflow::Rng rng(eq_opts.seed);
                seeds = Json::array();
                for (long i = 0; i < eq_random; ++i) {
                    Json pt = Json::array();
                    for (coneflow::Index d = 0; d < probe.dim(); ++d)
                        pt.push_back(rng.uniform(-eq_radius, eq_radius));
                    seeds.push_back(pt);
                }
            } else {
                throw ConfigInvalid("equilibria needs --seeds or --random N");
            }
            root["analyses"] = Json::array({Json{{"type", "equilibria"}, {"seeds", seeds}}});
            return run_document(root, eq_opts);
        }

        if (c_orbit->parsed()) {
            Json root = scenario_skeleton("orbit-adhoc", orbit_opts, parse_model_arg(orbit_model));
            Json a{{"type", "orbit-check"},
                   {"x0", parse_json_arg(orbit_x0, "--x0")},
                   {"section_normal", parse_json_arg(orbit_normal, "--section-normal")},
                   {"section_offset", orbit_offset},
                   {"t_scan", orbit_tscan}};
            if (orbit_ttrans != 0.0) a["t_transient"] = orbit_ttrans;
            if (orbit_minp != 0.1) a["min_period"] = orbit_minp;
            root["analyses"] = Json::array({a});
            return run_document(root, orbit_opts);
        }

        if (c_star->parsed()) {
            Json root = scenario_skeleton("star-adhoc", star_opts, parse_model_arg(star_model));
            Json a{{"type", "star-check"},
                   {"equilibrium_seeds", parse_json_arg(star_eq_seeds, "--equilibrium-seeds")}};
            if (!star_orbit.empty()) a["orbit"] = parse_json_arg(star_orbit, "--orbit");
            if (star_samples != 128) a["orbit_samples"] = star_samples;
            root["analyses"] = Json::array({a});
            return run_document(root, star_opts);
        }

        if (c_lyap->parsed()) {
            Json root = scenario_skeleton("lyapunov-adhoc", lyap_opts, parse_model_arg(lyap_model));
            Json a{{"type", "lyapunov"},
                   {"x0", parse_json_arg(lyap_x0, "--x0")},
                   {"t", lyap_t}};
            if (lyap_k >= 0) a["k"] = lyap_k;
            if (lyap_ttrans != 0.0) a["t_transient"] = lyap_ttrans;
            if (lyap_chunk != 0.5) a["chunk"] = lyap_chunk;
            root["analyses"] = Json::array({a});
            return run_document(root, lyap_opts);
        }

        if (c_bounds->parsed()) {
            Json root =
                scenario_skeleton("bounds-adhoc", bounds_opts, parse_model_arg(bounds_model));
            root["form"] = parse_form_arg(bounds_form);
            Json a{{"type", "bounds-check"},
                   {"x0", parse_json_arg(bounds_x0, "--x0")},
                   {"t", bounds_t},
                   {"k1", bounds_k1},
                   {"k2", bounds_k2}};
            if (bounds_dt != 0.1) a["dt"] = bounds_dt;
            root["analyses"] = Json::array({a});
            return run_document(root, bounds_opts);
        }

        if (c_report->parsed()) return cmd_report(report_file, report_series, report_list);
    } catch (const ConfigInvalid& err) {
        std::cerr << "config: " << err.what() << "\n";
        return kExitConfigInvalid;
    } catch (const coneflow::Error& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitAnalysisError;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitAnalysisError;
    }
    return kExitOk;
}
