#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "smoothfit/catalog.hpp"
#include "smoothfit/io.hpp"
#include "smoothfit/problems.hpp"
#include "smoothfit/regularity.hpp"
#include "smoothfit/solver.hpp"
#include "smoothfit/synthesis.hpp"

namespace smoothfit::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using lattice::GridFunction;

enum ExitCode : int { pass = 0, input_error = 1, non_convergence = 2, verdict_failure = 3 };

/// Parsed run configuration. `problem` is resolved eagerly; the raw JSON is
/// kept for the provenance hash.
struct RunConfig {
    json raw;
    fs::path base_dir;
    problems::ProblemSpec problem;
    fs::path out_dir = ".";
    std::uint64_t seed = 1;
    std::size_t threads = 1;
    std::string format = "json";

    json section(const char* name) const { return raw.contains(name) ? raw.at(name) : json::object(); }
};

namespace detail {

inline void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw InvalidArgument(where + ": expected an object");
    for (const auto& [k, _] : j.items())
        if (!allowed.count(k)) throw InvalidArgument(where + ": unknown field '" + k + "'");
}

template <typename T>
T get_or(const json& j, const char* key, T fallback, const std::string& where) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw InvalidArgument(where + "." + key + ": wrong type");
    }
}

inline double positive(const json& j, const char* key, double fallback, const std::string& where) {
    const double v = get_or<double>(j, key, fallback, where);
    if (!(v > 0.0)) throw InvalidArgument(where + "." + key + ": tolerances > 0 required");
    return v;
}

inline std::vector<Vector> points(const json& j, std::size_t n, const std::string& where) {
    std::vector<Vector> out;
    if (!j.is_array()) throw InvalidArgument(where + ": expected a list of points");
    for (const auto& p : j) {
        const Vector x = io::to_vector(p);
        if (static_cast<std::size_t>(x.size()) != n) throw InvalidArgument(where + ": point dimension mismatch");
        out.push_back(x);
    }
    return out;
}

inline problems::ProblemSpec load_problem(const json& spec, const fs::path& base) {
    if (spec.is_string()) {
        const auto s = spec.get<std::string>();
        if (s.rfind("catalog:", 0) == 0) return problems::catalog_entry(s.substr(8)).problem;
        const fs::path p = fs::path(s).is_absolute() ? fs::path(s) : base / s;
        return problems::problem_from_json(io::read_json(p));
    }
    if (spec.is_object()) return problems::problem_from_json(spec);
    throw InvalidArgument("config.problem: expected 'catalog:NAME', a path or an inline object");
}

inline std::size_t threads_from_env() {
    if (const char* e = std::getenv("SMOOTHFIT_THREADS")) {
        try {
            const long v = std::stol(e);
            if (v > 0) return static_cast<std::size_t>(v);
        } catch (const std::exception&) {
        }
        throw InvalidArgument("SMOOTHFIT_THREADS must be a positive integer");
    }
    return 1;
}

/// Provenance hash input: the config with the execution-only thread count removed.
inline json hashed_config(const RunConfig& cfg) {
    json h = cfg.raw;
    h.erase("threads");
    h["problem"] = cfg.problem.source;
    h["seed"] = cfg.seed;
    h["format"] = cfg.format;
    return h;
}

inline json stamp(const RunConfig& cfg, json body) {
    body["provenance"] = io::provenance(hashed_config(cfg));
    return body;
}

inline solver::SolveOptions solve_options(const RunConfig& cfg) {
    const json s = cfg.section("solve");
    const std::string w = "config.solve";
    check_keys(s, {"tol", "max_iter", "linear_solver", "inner_tol", "max_sweeps", "cascade", "rho_min"}, w);
    solver::SolveOptions o;
    o.tol = positive(s, "tol", o.tol, w);
    o.max_iter = get_or<std::size_t>(s, "max_iter", o.max_iter, w);
    if (o.max_iter == 0) throw InvalidArgument(w + ".max_iter: must be positive");
    o.inner_tol = s.contains("inner_tol") ? positive(s, "inner_tol", 0.0, w) : 0.0;
    o.max_sweeps = get_or<std::size_t>(s, "max_sweeps", o.max_sweeps, w);
    o.cascade = get_or<bool>(s, "cascade", o.cascade, w);
    o.rho_min = get_or<double>(s, "rho_min", o.rho_min, w);
    const auto ls = get_or<std::string>(s, "linear_solver", "direct", w);
    if (ls == "direct") o.linear_solver = solver::LinearSolver::direct;
    else if (ls == "gauss_seidel") o.linear_solver = solver::LinearSolver::gauss_seidel;
    else throw InvalidArgument(w + ".linear_solver: expected 'direct' or 'gauss_seidel'");
    o.threads = cfg.threads;
    return o;
}

inline GridFunction load_values(const RunConfig& cfg) {
    const fs::path p = cfg.out_dir / "V.json";
    if (!fs::exists(p)) throw InvalidArgument("missing artifact " + p.string() + " (run 'solve' first)");
    GridFunction V = lattice::grid_function_from_json(io::read_json(p));
    if (!(V.grid() == cfg.problem.grid)) throw InvalidArgument(p.string() + ": grid does not match the problem");
    return V;
}

/// Stop or action region recovered from V: V - psi <= tol (stopping) or V - M V <= tol (impulse).
inline std::vector<std::uint8_t> region_of(const GridFunction& V, const problems::ProblemSpec& pb, double tol,
                                           std::size_t threads) {
    std::vector<std::uint8_t> region(V.size(), 0);
    if (pb.cls == problems::ProblemClass::optimal_stopping) {
        for (std::size_t k = 0; k < V.size(); ++k) region[k] = V[k] - pb.obstacle_at(pb.grid.node(k)) <= tol;
    } else if (pb.cls == problems::ProblemClass::impulse_control) {
        const auto mv = solver::intervention_operator(V, pb.impulse_costs->c0, pb.impulse_costs->c1, threads);
        for (std::size_t k = 0; k < V.size(); ++k) region[k] = V[k] - mv.value[k] <= tol;
    }
    return region;
}

}  // namespace detail

/// Reads the run configuration and applies command-line overrides.
inline RunConfig load_config(const fs::path& path, const fs::path& out, std::optional<std::uint64_t> seed,
                             std::optional<std::size_t> threads, std::optional<std::string> format) {
    RunConfig cfg;
    cfg.raw = io::read_json(path);
    cfg.base_dir = path.parent_path();
    detail::check_keys(cfg.raw, {"problem", "seed", "threads", "format", "solve", "verify", "witness", "simulate"},
                       "config");
    if (!cfg.raw.contains("problem")) throw InvalidArgument("config: missing field 'problem'");
    cfg.problem = detail::load_problem(cfg.raw.at("problem"), cfg.base_dir);
    cfg.seed = seed ? *seed : detail::get_or<std::uint64_t>(cfg.raw, "seed", 1, "config");
    const std::size_t t = threads ? *threads : detail::get_or<std::size_t>(cfg.raw, "threads", 0, "config");
    cfg.threads = t > 0 ? t : detail::threads_from_env();
    cfg.format = format ? *format : detail::get_or<std::string>(cfg.raw, "format", "json", "config");
    if (cfg.format != "json" && cfg.format != "csv") throw InvalidArgument("config.format: expected 'json' or 'csv'");
    cfg.out_dir = out;
    fs::create_directories(cfg.out_dir);
    return cfg;
}

// ---------------------------------------------------------------------------
// commands

inline int cmd_solve(const RunConfig& cfg) {
    const auto opts = detail::solve_options(cfg);
    const auto& pb = cfg.problem;
    json rep = {{"problem", pb.name}, {"class", problems::to_string(pb.cls)}, {"problem_warnings", pb.warnings}};
    try {
        const auto sol = solver::solve(pb, opts);
        io::write_json(cfg.out_dir / "V.json", detail::stamp(cfg, lattice::to_json(sol.V)));
        io::write_json(cfg.out_dir / "policy.json", detail::stamp(cfg, io::to_json(sol.policy)));
        if (cfg.format == "csv") io::write_text(cfg.out_dir / "V.csv", io::values_csv(sol.V));
        rep["report"] = io::to_json(sol.report);
        std::size_t region = 0;
        for (auto r : sol.region) region += r;
        rep["region_nodes"] = region;
        rep["converged"] = sol.report.converged;
        if (!sol.report.converged) rep["warning"] = "not converged: artifacts hold the last iterate";
        io::write_json(cfg.out_dir / "solve_report.json", detail::stamp(cfg, rep));
        std::cout << "solve " << pb.name << ": iterations " << sol.report.iterations << ", residual "
                  << sol.report.residual << (sol.report.converged ? ", converged\n" : ", NOT converged\n");
        return sol.report.converged ? pass : non_convergence;
    } catch (const NonConvergence& e) {
        rep["converged"] = false;
        rep["warning"] = e.what();
        io::write_json(cfg.out_dir / "solve_report.json", detail::stamp(cfg, rep));
        std::cerr << "solve: " << e.what() << '\n';
        return non_convergence;
    }
}

inline int cmd_verify(const RunConfig& cfg) {
    const auto& pb = cfg.problem;
    const json v = cfg.section("verify");
    const std::string w = "config.verify";
    detail::check_keys(v, {"probes", "probe_seed", "margin", "extra_probes", "tol_jump", "tau_rank", "n_random",
                           "smooth_fit", "semiconvexity", "bounds", "modulus", "region_tol"},
                       w);
    const GridFunction V = detail::load_values(cfg);
    const double tau = detail::positive(v, "tau_rank", 1e-8, w);
    const double margin = detail::positive(v, "margin", 5.0, w);

    std::vector<Vector> probes;
    const json pj = v.contains("probes") ? v.at("probes") : json(60);
    if (pj.is_number_unsigned() || pj.is_number_integer()) {
        const auto seed = detail::get_or<std::uint64_t>(v, "probe_seed", cfg.seed, w);
        probes = regularity::random_probes(pb.grid, pj.get<std::size_t>(), seed, margin);
    } else {
        probes = detail::points(pj, pb.n, w + ".probes");
    }
    if (v.contains("extra_probes"))
        for (auto& x : detail::points(v.at("extra_probes"), pb.n, w + ".extra_probes")) probes.push_back(x);

    regularity::SmoothnessOptions so;
    so.tol_jump = detail::get_or<double>(v, "tol_jump", 0.0, w);
    if (so.tol_jump < 0.0) throw InvalidArgument(w + ".tol_jump: tolerances > 0 required");
    so.n_random = detail::get_or<std::size_t>(v, "n_random", so.n_random, w);
    so.seed = cfg.seed;
    const auto reg = regularity::verify_directional_regularity(V, pb, probes, so, tau);

    json out = {{"problem", pb.name}, {"directional", io::to_json(reg)}};
    bool ok = reg.pass();
    const regularity::BasisField field = [&](const Vector& x) { return regularity::range_basis(pb, x, tau); };

    if (pb.cls != problems::ProblemClass::drift_control) {
        const json sf = v.contains("smooth_fit") ? v.at("smooth_fit") : json::object();
        detail::check_keys(sf, {"tol_value", "tol_deriv_spacings"}, w + ".smooth_fit");
        const double tv = detail::positive(sf, "tol_value", 1e-6, w + ".smooth_fit");
        const double td = detail::positive(sf, "tol_deriv_spacings", 5.0, w + ".smooth_fit") * pb.grid.max_spacing();
        const double rt = detail::positive(v, "region_tol", 1e-8, w);
        const auto region = detail::region_of(V, pb, rt, cfg.threads);
        json fits = json::array();
        bool fit_ok = true;
        std::size_t judged = 0;
        if (pb.cls == problems::ProblemClass::optimal_stopping) {
            for (const auto& r : regularity::smooth_fit_check(V, *pb.obstacle, region, field, tv, td)) {
                fits.push_back(io::to_json(r));
                if (!r.skipped) {
                    fit_ok = fit_ok && r.pass;
                    ++judged;
                }
            }
        }
        out["smooth_fit"] = {{"tol_value", tv}, {"tol_deriv", td}, {"judged", judged}, {"pass", fit_ok}, {"edges", fits}};
        ok = ok && fit_ok;
    }

    {
        const json sc = v.contains("semiconvexity") ? v.at("semiconvexity") : json::object();
        detail::check_keys(sc, {"samples", "margin"}, w + ".semiconvexity");
        const auto n = detail::get_or<std::size_t>(sc, "samples", 1000, w + ".semiconvexity");
        const double m = detail::positive(sc, "margin", margin, w + ".semiconvexity");
        out["semiconvexity"] =
            io::to_json(regularity::semiconvexity_constant(V, regularity::Box::interior(pb.grid, m), n, cfg.seed));
    }
    if (v.contains("bounds")) {
        const json b = v.at("bounds");
        detail::check_keys(b, {"p", "M", "samples"}, w + ".bounds");
        const double p = detail::get_or<double>(b, "p", 2.0, w + ".bounds");
        const auto n = detail::get_or<std::size_t>(b, "samples", 10000, w + ".bounds");
        double M = 0.0;
        std::string how = "given";
        if (!b.contains("M") || b.at("M") == "fit") {
            if (!pb.obstacle) throw InvalidArgument(w + ".bounds.M: 'fit' needs an obstacle");
            M = regularity::fit_bound_constant(GridFunction::sample(pb.grid, [&](const Vector& x) { return pb.obstacle_at(x); }),
                                               p, n, cfg.seed);
            how = "fitted on the payoff";
        } else {
            M = detail::positive(b, "M", 1.0, w + ".bounds");
        }
        json bj = io::to_json(regularity::check_value_bounds(V, M, p, n, cfg.seed));
        bj["M_source"] = how;
        out["bounds"] = bj;
    }
    if (v.contains("modulus")) {
        const json mj = v.at("modulus");
        detail::check_keys(mj, {"deltas", "points", "lower", "upper"}, w + ".modulus");
        const auto deltas = detail::get_or<std::vector<double>>(mj, "deltas", {0.2, 0.1, 0.05, 0.025}, w + ".modulus");
        const auto n = detail::get_or<std::size_t>(mj, "points", 200, w + ".modulus");
        regularity::Box box = regularity::Box::interior(pb.grid, margin);
        if (mj.contains("lower")) box.lower = io::to_vector(mj.at("lower"));
        if (mj.contains("upper")) box.upper = io::to_vector(mj.at("upper"));
        out["modulus"] = io::to_json(regularity::gradient_continuity(V, box, field, deltas, n, cfg.seed));
    }
    out["pass"] = ok;
    io::write_json(cfg.out_dir / "regularity.json", detail::stamp(cfg, out));
    if (cfg.format == "csv") io::write_text(cfg.out_dir / "regularity.csv", io::regularity_csv(reg, pb.n));
    std::cout << "verify " << pb.name << ": range probes " << reg.range_probes << ", violations "
              << reg.range_violations << ", kernel kinks " << reg.kernel_kinks << (ok ? ", PASS\n" : ", FAIL\n");
    return ok ? pass : verdict_failure;
}

inline int cmd_witness(const RunConfig& cfg) {
    const json wj = cfg.section("witness");
    const std::string w = "config.witness";
    detail::check_keys(wj, {"p1", "p2", "kappa", "sigma0", "j", "random"}, w);
    const auto j_list = detail::get_or<std::vector<long long>>(wj, "j", {1, 10, 100}, w);
    std::vector<regularity::WitnessInstance> cases;
    if (wj.contains("random")) {
        const json r = wj.at("random");
        detail::check_keys(r, {"count", "n", "m"}, w + ".random");
        const auto count = detail::get_or<std::size_t>(r, "count", 1, w + ".random");
        const auto n = detail::get_or<std::size_t>(r, "n", 3, w + ".random");
        const auto m = detail::get_or<std::size_t>(r, "m", 2, w + ".random");
        for (std::size_t i = 0; i < count; ++i) cases.push_back(regularity::random_witness_instance(derive_seed(cfg.seed, i), n, m));
    } else {
        regularity::WitnessInstance c;
        c.p1 = wj.contains("p1") ? io::to_vector(wj.at("p1")) : Vector::Constant(1, 1.0);
        c.p2 = wj.contains("p2") ? io::to_vector(wj.at("p2")) : Vector::Zero(1);
        c.kappa = detail::get_or<double>(wj, "kappa", 0.0, w);
        c.sigma0 = wj.contains("sigma0") ? io::to_matrix(wj.at("sigma0")) : Matrix::Identity(1, 1);
        cases.push_back(c);
    }
    json arr = json::array();
    bool ok = true;
    for (const auto& c : cases) {
        const auto kw = regularity::kink_witness(c.p1, c.p2, c.kappa, c.sigma0, j_list);
        ok = ok && kw.identities_hold && kw.increasing;
        arr.push_back(io::to_json(kw));
    }
    io::write_json(cfg.out_dir / "witness.json", detail::stamp(cfg, {{"instances", arr}, {"pass", ok}}));
    std::cout << "witness: " << cases.size() << " instance(s), " << (ok ? "PASS\n" : "FAIL\n");
    return ok ? pass : verdict_failure;
}

inline int cmd_simulate(const RunConfig& cfg) {
    const auto& pb = cfg.problem;
    const json s = cfg.section("simulate");
    const std::string w = "config.simulate";
    detail::check_keys(s, {"x0", "n_paths", "dt", "T_max", "tail_tolerance", "antithetic", "policy", "allowance",
                           "freeze_tol", "structure"},
                       w);
    const GridFunction V = detail::load_values(cfg);
    synthesis::SimulationOptions so;
    so.n_paths = detail::get_or<std::size_t>(s, "n_paths", so.n_paths, w);
    if (so.n_paths == 0) throw InvalidArgument(w + ".n_paths: must be positive");
    so.dt = detail::positive(s, "dt", so.dt, w);
    so.T_max = s.contains("T_max") ? detail::positive(s, "T_max", 1.0, w) : 0.0;
    so.tail_tolerance = detail::positive(s, "tail_tolerance", so.tail_tolerance, w);
    so.antithetic = detail::get_or<bool>(s, "antithetic", false, w);
    so.seed = cfg.seed;
    so.threads = cfg.threads;
    const double allowance = detail::get_or<double>(s, "allowance", 0.0, w);
    if (!s.contains("x0")) throw InvalidArgument(w + ": missing field 'x0'");
    const auto x0 = detail::points(s.at("x0"), pb.n, w + ".x0");

    const auto which = detail::get_or<std::string>(s, "policy", "synthesized", w);
    json out = {{"problem", pb.name}, {"policy", which}};
    FeedbackPolicy policy;
    if (which == "never_act") {
        policy = synthesis::never_act_policy(pb);
    } else if (which == "synthesized" && pb.drift_split) {
        if (s.contains("structure")) {
            const auto st = synthesis::structure_check(pb, detail::points(s.at("structure"), pb.n, w + ".structure"));
            out["structure"] = io::to_json(st);
            if (!st.pass) throw TheoremViolation("structure condition S(x) in range(sigma(x)) fails");
        }
        policy = synthesis::feedback_map(V, pb, cfg.threads).policy;
    } else if (which == "synthesized" || which == "solution") {
        const fs::path p = cfg.out_dir / "policy.json";
        if (!fs::exists(p)) throw InvalidArgument("missing artifact " + p.string() + " (run 'solve' first)");
        policy = io::policy_from_json(io::read_json(p));
    } else {
        throw InvalidArgument(w + ".policy: expected 'synthesized', 'solution' or 'never_act'");
    }

    const auto gaps = synthesis::verification_gap(V, pb, policy, x0, so, allowance);
    json ga = json::array();
    bool ok = true;
    for (const auto& g : gaps) {
        ga.push_back(io::to_json(g));
        ok = ok && !g.significantly_negative;
    }
    out["gaps"] = ga;
    if (s.contains("freeze_tol")) {
        synthesis::FreezeOptions fo;
        fo.tol = detail::positive(s, "freeze_tol", 1e-8, w);
        fo.threads = cfg.threads;
        const auto fr = synthesis::freeze_and_resolve(V, pb, fo);
        out["freeze"] = {{"tol", fo.tol}, {"sup_gap", fr.sup_gap}, {"sweeps", fr.sweeps}};
    }
    out["pass"] = ok;
    io::write_json(cfg.out_dir / "simulation.json", detail::stamp(cfg, out));
    if (cfg.format == "csv") io::write_text(cfg.out_dir / "simulation.csv", io::simulation_csv(gaps, pb.n));
    for (const auto& g : gaps)
        std::cout << "simulate " << pb.name << ": V " << g.value << ", mean " << g.estimate.mean << " +- "
                  << g.estimate.stderr_ << ", gap " << g.gap << '\n';
    return ok ? pass : verdict_failure;
}

/// Collects the verdicts of whatever artifacts exist in the output directory.
inline int cmd_report(const RunConfig& cfg) {
    json out = {{"problem", cfg.problem.name}};
    bool ok = true;
    auto pick = [&](const char* file, const char* key, auto&& summary) {
        const fs::path p = cfg.out_dir / file;
        if (!fs::exists(p)) return;
        const json j = io::read_json(p);
        out[key] = summary(j);
    };
    pick("solve_report.json", "solve", [&](const json& j) {
        ok = ok && j.value("converged", false);
        json r = {{"converged", j.value("converged", false)}};
        if (j.contains("report")) {
            r["iterations"] = j["report"]["iterations"];
            r["residual"] = j["report"]["residual"];
        }
        return r;
    });
    pick("regularity.json", "verify", [&](const json& j) {
        ok = ok && j.value("pass", false);
        return json{{"pass", j.value("pass", false)},
                    {"range_violations", j["directional"]["range_violations"]},
                    {"kernel_kinks", j["directional"]["kernel_kinks"]}};
    });
    pick("witness.json", "witness", [&](const json& j) {
        ok = ok && j.value("pass", false);
        return json{{"pass", j.value("pass", false)}, {"instances", j["instances"].size()}};
    });
    pick("simulation.json", "simulate", [&](const json& j) {
        ok = ok && j.value("pass", false);
        json gaps = json::array();
        for (const auto& g : j["gaps"]) gaps.push_back({{"x0", g["x0"]}, {"gap", g["gap"]}, {"threshold", g["threshold"]}});
        return json{{"pass", j.value("pass", false)}, {"gaps", gaps}};
    });
    out["pass"] = ok;
    io::write_json(cfg.out_dir / "report.json", detail::stamp(cfg, out));
    std::cout << out.dump(2) << '\n';
    return ok ? pass : verdict_failure;
}

/// Entry point shared by the tool and the tests.
inline int run(int argc, char** argv) {
    CLI::App app{"smoothfit: HJB solver and partial-regularity verifier"};
    app.require_subcommand(1);
    std::string config, out = ".", format;
    std::uint64_t seed = 0;
    std::size_t threads = 0;
    const std::vector<std::string> names = {"solve", "verify", "witness", "simulate", "report"};
    for (const auto& name : names) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--config", config, "run configuration (JSON)")->required();
        sub->add_option("--out", out, "artifact directory");
        sub->add_option("--seed", seed, "master seed (u64)");
        sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--format", format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? pass : input_error;
    }
    const auto* sub = app.get_subcommands().front();
    try {
        const RunConfig cfg =
            load_config(config, out, sub->count("--seed") ? std::optional<std::uint64_t>(seed) : std::nullopt,
                        sub->count("--threads") ? std::optional<std::size_t>(threads) : std::nullopt,
                        sub->count("--format") ? std::optional<std::string>(format) : std::nullopt);
        const std::string name = sub->get_name();
        if (name == "solve") return cmd_solve(cfg);
        if (name == "verify") return cmd_verify(cfg);
        if (name == "witness") return cmd_witness(cfg);
        if (name == "simulate") return cmd_simulate(cfg);
        return cmd_report(cfg);
    } catch (const NonConvergence& e) {
        std::cerr << "error: " << e.what() << '\n';
        return non_convergence;
    } catch (const TheoremViolation& e) {
        std::cerr << "verdict: " << e.what() << '\n';
        return verdict_failure;
    } catch (const RankJump& e) {
        std::cerr << "verdict: " << e.what() << '\n';
        return verdict_failure;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return input_error;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return input_error;
    }
}

}  // namespace smoothfit::cli
