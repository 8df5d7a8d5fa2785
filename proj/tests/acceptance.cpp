#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "support.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace smoothfit;
using lattice::Box;
using lattice::Grid;
using lattice::GridFunction;
using sft::vec;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

problems::ProblemSpec catalog_problem(const std::string& name) { return problems::catalog_entry(name).problem; }

solver::Solution solved(const problems::ProblemSpec& pb) {
    auto s = solver::solve(pb, {});
    if (!s.report.converged) throw std::runtime_error(pb.name + " did not converge");
    return s;
}

regularity::BasisField basis_field(const problems::ProblemSpec& pb) {
    return [&pb](const Vector& y) { return regularity::range_basis(pb, y); };
}

Outcome perpetual_put() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto pb = catalog_problem("B1");
    const auto s = solved(pb);
    const problems::PerpetualPut put{1.0, 0.0, 0.2, 0.05};
    const double bstar = put.boundary();
    const Grid& g = s.V.grid();

    double b_hat = g.lower()[0];
    for (std::size_t k = 0; k < g.size(); ++k)
        if (s.region[k]) b_hat = std::max(b_hat, g.node(k)[0]);
    const double b_err = std::abs(b_hat - bstar) / bstar;

    const double lo = g.lower()[0], hi = g.upper()[0], q = 0.25 * (hi - lo);
    double v_err = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) {
        const double x = g.node(k)[0];
        if (x >= lo + q && x <= hi - q) v_err = std::max(v_err, std::abs(s.V[k] - put.value(x)));
    }

    const double h = g.spacing(0);
    const auto fits = regularity::smooth_fit_check(s.V, *pb.obstacle, s.region, basis_field(pb), 1e-6, 5 * h);
    double d_gap = fits.empty() ? std::numeric_limits<double>::infinity() : 0.0;
    for (const auto& f : fits)
        for (const auto& d : f.directions) d_gap = std::max(d_gap, std::abs(d.gap));

    const double t = seconds_since(t0);
    Outcome o;
    o.pass = b_err <= 0.01 && v_err <= 2e-3 && d_gap <= 5 * h && t <= 60.0;
    o.detail = fmt("b*=%.6f b_hat=%.6f rel_err=%.2e; inner |V-oracle|=%.2e; smooth-fit gap=%.2e (5h=%.2e); %.1fs",
                   bstar, b_hat, b_err, v_err, d_gap, 5 * h, t);
    return o;
}

Outcome range_suite() {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    std::size_t total_probes = 0, total_violations = 0;
    for (const char* name : {"B1", "B2", "B3", "B4"}) {
        const auto pb = catalog_problem(name);
        const auto s = solved(pb);
        const auto probes = regularity::random_probes(s.V.grid(), 60, 3);
        const auto rep = regularity::verify_directional_regularity(s.V, pb, probes);
        total_probes += rep.range_probes;
        total_violations += rep.range_violations;
        o.detail += fmt("%s %zu/%zu; ", name, rep.range_violations, rep.range_probes);
        if (rep.range_probes == 0) o.pass = false;
    }
    const double t = seconds_since(t0);
    o.pass = o.pass && total_violations == 0 && t <= 300.0;
    o.detail = "violations/range directions: " + o.detail + fmt("%.1fs", t);
    return o;
}

Outcome sharpness() {
    const auto pb = catalog_problem("B3");
    const auto s = solved(pb);
    Outcome o;
    double worst_ratio = std::numeric_limits<double>::infinity();
    std::size_t range_kinks = 0, n = 0;
    for (double x1 : {1.5, 1.75, 2.0, 2.5, 3.0}) {
        const auto x = vec({x1, 0.0});
        const auto reps = regularity::directional_smoothness(s.V, x, regularity::range_basis(pb, x));
        ++n;
        bool kernel_seen = false;
        for (const auto& d : reps) {
            if (d.role == regularity::DirectionRole::kernel) {
                kernel_seen = true;
                worst_ratio = std::min(worst_ratio, std::abs(d.jump) / d.scale);
                if (d.classification != regularity::Classification::kink) o.pass = false;
            } else if (d.classification != regularity::Classification::smooth) {
                ++range_kinks;
            }
        }
        if (!kernel_seen) o.pass = false;
    }
    o.pass = o.pass && worst_ratio >= 0.3 && range_kinks == 0;
    o.detail = fmt("%zu probes at x2=0: min kernel jump/scale=%.3f; non-smooth range directions=%zu", n, worst_ratio,
                   range_kinks);
    return o;
}

Outcome witnesses() {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    double worst_id = 0.0, worst_slope = 0.0;
    bool increasing = true;
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto inst = regularity::random_witness_instance(seed, 3, 2);
        const auto w = regularity::kink_witness(inst.p1, inst.p2, inst.kappa, inst.sigma0, {1, 10, 100, 1000});
        for (double e : w.trace_error) worst_id = std::max(worst_id, e);
        for (double e : w.gradient_error) worst_id = std::max(worst_id, e);
        worst_slope = std::max(worst_slope, w.slope_consistency);
        increasing = increasing && w.increasing;
    }
    const double t = seconds_since(t0);
    o.pass = worst_id <= 1e-10 && worst_slope <= 1e-8 && increasing && t <= 5.0;
    o.detail = fmt("20 instances: max identity error=%.2e; max slope spread=%.2e; increasing=%s; %.2fs", worst_id,
                   worst_slope, increasing ? "yes" : "no", t);
    return o;
}

Outcome modulus_ladder() {
    const auto pb = catalog_problem("B1");
    const auto s = solved(pb);
    const auto rep = regularity::gradient_continuity(s.V, Box{vec({0.8}), vec({3.2})}, basis_field(pb),
                                                     {0.2, 0.1, 0.05, 0.025}, 200, 11);
    Outcome o;
    o.pass = rep.monotone && rep.reaches_floor;
    o.detail = "modulus";
    for (std::size_t i = 0; i < rep.deltas.size(); ++i) o.detail += fmt(" %.3g:%.3e", rep.deltas[i], rep.modulus[i]);
    o.detail += fmt("; noise floor=%.3e", rep.noise_floor);
    return o;
}

Outcome value_bounds() {
    const auto pb = catalog_problem("B2");
    const auto s = solved(pb);
    const auto payoff = GridFunction::sample(pb.grid, [&](const Vector& x) { return pb.obstacle_at(x); });
    const double M = regularity::fit_bound_constant(payoff, 2.0, 10000, 13);
    const auto b = regularity::check_value_bounds(s.V, M, 2.0, 10000, 5);
    Outcome o;
    o.pass = b.pass() && b.samples >= 10000;
    o.detail = fmt("M=%.4f samples=%zu; worst margins: growth=%.3e lipschitz=%.3e semiconvexity=%.3e", M, b.samples,
                   b.growth.worst_margin, b.lipschitz.worst_margin, b.semiconvexity.worst_margin);
    return o;
}

Outcome qvi() {
    const auto pb = catalog_problem("I1");
    const double tol = 1e-8;
    const auto s = solved(pb);
    const auto m = solver::intervention_operator(s.V, pb.impulse_costs->c0, pb.impulse_costs->c1);
    double dominance = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < s.V.size(); ++k) dominance = std::min(dominance, s.V[k] - m.value[k]);
    const double residual = solver::supersolution_residual(s.V, pb).min_interior;
    Outcome o;
    o.pass = dominance >= -tol && residual >= -tol && s.report.outer_monotone;
    o.detail = fmt("min(V-MV)=%.3e; min interior -(LV+g)=%.3e; outer iterates non-increasing=%s (worst increase %.2e)",
                   dominance, residual, s.report.outer_monotone ? "yes" : "no", s.report.outer_worst_increase);
    return o;
}

Outcome verification_gap() {
    const auto coarse = catalog_problem("B4");
    json fine_json = json::parse(problems::catalog_text::B4);
    fine_json["box"]["points"] = {1601};
    const auto fine = problems::problem_from_json(fine_json);
    const std::vector<Vector> x0 = {vec({-1.0}), vec({-0.5}), vec({0.0}), vec({0.5}), vec({1.0})};

    struct Level {
        double dt, h;
        std::vector<synthesis::GapEntry> gaps, never;
    };
    auto run = [&](const problems::ProblemSpec& pb, double dt) {
        const auto s = solved(pb);
        const auto fb = synthesis::feedback_map(s.V, pb);
        synthesis::SimulationOptions so;
        so.n_paths = 4000;
        so.dt = dt;
        so.seed = 4;
        Level l{dt, pb.grid.max_spacing(), synthesis::verification_gap(s.V, pb, fb.policy, x0, so), {}};
        l.never = synthesis::verification_gap(s.V, pb, synthesis::never_act_policy(pb), x0, so);
        return l;
    };
    const Level c = run(coarse, 0.02), f = run(fine, 0.01);

    double C = 0.0;
    for (std::size_t i = 0; i < x0.size(); ++i)
        C = std::max(C, 2.0 * std::abs(c.gaps[i].gap - f.gaps[i].gap) / (c.dt + c.h));
    Outcome o;
    std::size_t within = 0, never_sig = 0;
    for (const Level* l : {&c, &f}) {
        for (std::size_t i = 0; i < x0.size(); ++i) {
            const auto& e = l->gaps[i];
            if (std::abs(e.gap) <= 2.0 * e.estimate.stderr_ + C * (l->dt + l->h)) ++within;
            never_sig += l->never[i].significantly_positive;
        }
    }
    o.pass = within == 2 * x0.size() && never_sig >= 1;
    o.detail = fmt("C=%.4f; within bound %zu/%zu; never-act significant at %zu probe-levels; fine gaps", C, within,
                   2 * x0.size(), never_sig);
    for (const auto& e : f.gaps) o.detail += fmt(" %.2e(se %.1e)", e.gap, e.estimate.stderr_);
    return o;
}

Outcome freeze_ladder() {
    const auto pb = catalog_problem("B4");
    Outcome o;
    double prev = std::numeric_limits<double>::infinity();
    o.detail = "sup_gap";
    for (double tol : {1e-4, 1e-6, 1e-8}) {
        solver::SolveOptions so;
        so.tol = tol;
        const auto s = solver::solve(pb, so);
        synthesis::FreezeOptions fo;
        fo.tol = tol;
        fo.linear_solver = solver::LinearSolver::gauss_seidel;
        const double gap = synthesis::freeze_and_resolve(s.V, pb, fo).sup_gap;
        o.pass = o.pass && gap <= 10 * tol && gap < prev;
        prev = gap;
        o.detail += fmt(" tol %.0e:%.3e", tol, gap);
    }
    return o;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome determinism() {
    const fs::path root = fs::temp_directory_path() / ("smoothfit_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(root);
    const fs::path config = fs::path(SMOOTHFIT_SOURCE_DIR) / "configs" / "run_B4.json";
    Outcome o;
    std::size_t compared = 0, differing = 0;
    for (const char* format : {"json", "csv"}) {
        std::vector<fs::path> outs;
        for (int t : {1, 2, 4}) {
            const fs::path out = root / format / std::to_string(t);
            fs::create_directories(out);
            for (const char* sub : {"solve", "simulate"}) {
                const std::string cmd = std::string("\"") + SMOOTHFIT_CLI + "\" " + sub + " --config \"" +
                                        config.string() + "\" --out \"" + out.string() + "\" --threads " +
                                        std::to_string(t) + " --format " + format + " > /dev/null 2>&1";
                const int status = std::system(cmd.c_str());
                if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) o.pass = false;
            }
            outs.push_back(out);
        }
        for (const auto& entry : fs::directory_iterator(outs[0])) {
            const auto name = entry.path().filename();
            for (std::size_t i = 1; i < outs.size(); ++i) {
                ++compared;
                if (!fs::exists(outs[i] / name) || slurp(entry.path()) != slurp(outs[i] / name)) ++differing;
            }
        }
    }
    fs::remove_all(root);
    o.pass = o.pass && compared >= 16 && differing == 0;
    o.detail = fmt("solve+simulate at threads 1/2/4, json and csv: %zu artifact comparisons, %zu differ", compared,
                   differing);
    return o;
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"perpetual-put oracle", perpetual_put},
        {"range directions smooth", range_suite},
        {"kernel sharpness", sharpness},
        {"kink-witness identities", witnesses},
        {"modulus ladder", modulus_ladder},
        {"value bounds", value_bounds},
        {"impulse QVI properties", qvi},
        {"verification gap", verification_gap},
        {"freeze and resolve", freeze_ladder},
        {"determinism", determinism},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        failed += !o.pass;
        std::printf("%s [%zu] %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
