#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "smoothfit/errors.hpp"
#include "smoothfit/lattice.hpp"
#include "smoothfit/policy.hpp"
#include "smoothfit/regularity.hpp"
#include "smoothfit/solver.hpp"
#include "smoothfit/synthesis.hpp"

// JSON and CSV forms of every artifact. Wall-clock times never enter an
// artifact so that equal inputs give equal bytes.
namespace smoothfit::io {

using nlohmann::json;
using lattice::GridFunction;

inline constexpr const char* kToolVersion = "smoothfit 0.1.0";

inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline json provenance(const json& config) {
    return {{"config_hash", hex64(fnv1a64(config.dump()))}, {"tool_version", kToolVersion}};
}

inline json vec(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline json mat(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        std::vector<double> r(static_cast<std::size_t>(m.cols()));
        for (Eigen::Index j = 0; j < m.cols(); ++j) r[static_cast<std::size_t>(j)] = m(i, j);
        rows.push_back(r);
    }
    return rows;
}

inline Vector to_vector(const json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline Matrix to_matrix(const json& j) {
    if (!j.is_array() || j.empty()) throw InvalidArgument("expected a non-empty matrix");
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = static_cast<Eigen::Index>(j[0].size());
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto r = j[static_cast<std::size_t>(i)].get<std::vector<double>>();
        if (static_cast<Eigen::Index>(r.size()) != cols) throw InvalidArgument("ragged matrix");
        for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = r[static_cast<std::size_t>(c)];
    }
    return m;
}

inline json to_json(const solver::SolveReport& r) {
    return {{"iterations", r.iterations},
            {"residual", r.residual},
            {"residual_history", r.residual_history},
            {"policy_changes", r.policy_changes},
            {"linear_iterations", r.linear_iterations},
            {"ordering", r.ordering},
            {"linear_solver", r.linear_solver},
            {"converged", r.converged},
            {"residual_monotone", r.residual_monotone},
            {"outer_changes", r.outer_changes},
            {"outer_monotone", r.outer_monotone},
            {"outer_worst_increase", r.outer_worst_increase},
            {"warnings", r.warnings}};
}

inline std::string to_string(ActionKind k) {
    switch (k) {
        case ActionKind::control: return "control";
        case ActionKind::stop: return "stop";
        case ActionKind::impulse: return "impulse";
    }
    return "control";
}

inline ActionKind action_kind_from(const std::string& s) {
    if (s == "control") return ActionKind::control;
    if (s == "stop") return ActionKind::stop;
    if (s == "impulse") return ActionKind::impulse;
    throw InvalidArgument("policy: unknown action kind '" + s + "'");
}

inline json to_json(const FeedbackPolicy& p) {
    std::vector<std::string> kind;
    std::vector<std::size_t> control, target;
    for (const auto& a : p.actions) {
        kind.push_back(to_string(a.kind));
        control.push_back(a.control);
        target.push_back(a.target);
    }
    json j = lattice::grid_to_json(p.grid);
    j["kind"] = kind;
    j["control"] = control;
    j["target"] = target;
    return j;
}

inline FeedbackPolicy policy_from_json(const json& j) {
    FeedbackPolicy p;
    p.grid = lattice::grid_from_json(j);
    const auto kind = j.at("kind").get<std::vector<std::string>>();
    const auto control = j.at("control").get<std::vector<std::size_t>>();
    const auto target = j.at("target").get<std::vector<std::size_t>>();
    if (kind.size() != p.grid.size() || control.size() != kind.size() || target.size() != kind.size())
        throw InvalidArgument("policy: action arrays do not match the grid size");
    for (std::size_t k = 0; k < kind.size(); ++k) p.actions.push_back(Action{action_kind_from(kind[k]), control[k], target[k]});
    return p;
}

inline json to_json(const regularity::RangeBasis& b) {
    return {{"x", vec(b.x)},           {"basis", mat(b.basis)},       {"singular_values", vec(b.singular_values)},
            {"rank", b.rank},          {"gap", b.gap},                {"threshold", b.threshold},
            {"rank_subsampled", b.rank_subsampled}, {"degenerate", b.degenerate}};
}

inline json to_json(const regularity::DirectionalReport& d) {
    return {{"h", vec(d.h)},
            {"role", regularity::to_string(d.role)},
            {"slope_plus", d.slope_plus},
            {"slope_minus", d.slope_minus},
            {"jump", d.jump},
            {"tol_jump", d.tol_jump},
            {"scale", d.scale},
            {"classification", regularity::to_string(d.classification)}};
}

inline json to_json(const regularity::RegularityReport& r) {
    json probes = json::array();
    for (const auto& p : r.probes) {
        json dirs = json::array();
        for (const auto& d : p.directions) dirs.push_back(to_json(d));
        probes.push_back({{"x", vec(p.x)}, {"range", to_json(p.basis)}, {"directions", dirs}});
    }
    return {{"range_probes", r.range_probes},
            {"range_violations", r.range_violations},
            {"kernel_kinks", r.kernel_kinks},
            {"excluded", r.excluded},
            {"degenerate_points", r.degenerate_points},
            {"pass", r.pass()},
            {"probes", probes}};
}

inline json to_json(const regularity::SmoothFitReport& s) {
    json dirs = json::array();
    for (const auto& d : s.directions)
        dirs.push_back({{"h", vec(d.h)},
                        {"role", regularity::to_string(d.role)},
                        {"dV_plus", d.dV_plus},
                        {"dV_minus", d.dV_minus},
                        {"dg_plus", d.dg_plus},
                        {"dg_minus", d.dg_minus},
                        {"gap", d.gap},
                        {"judged", d.judged},
                        {"obstacle_differentiable", d.obstacle_differentiable},
                        {"pass", d.pass}});
    return {{"node", s.node}, {"x", vec(s.x)},     {"value_gap", s.value_gap}, {"directions", dirs},
            {"skipped", s.skipped}, {"note", s.note}, {"pass", s.pass}};
}

inline json to_json(const regularity::SemiconvexityCertificate& c) {
    return {{"region", {{"lower", vec(c.region.lower)}, {"upper", vec(c.region.upper)}}},
            {"c_R", c.c_R},
            {"samples", c.samples},
            {"worst_x", vec(c.worst_x)},
            {"worst_y", vec(c.worst_y)},
            {"worst_lambda", c.worst_lambda}};
}

inline json to_json(const regularity::BoundCheck& b) {
    return {{"pass", b.pass}, {"worst_margin", b.worst_margin}, {"worst_x", vec(b.worst_x)}, {"worst_y", vec(b.worst_y)}};
}

inline json to_json(const regularity::ValueBounds& v) {
    return {{"M", v.M},
            {"p", v.p},
            {"samples", v.samples},
            {"growth", to_json(v.growth)},
            {"lipschitz", to_json(v.lipschitz)},
            {"semiconvexity", to_json(v.semiconvexity)},
            {"pass", v.pass()}};
}

inline json to_json(const regularity::ModulusReport& m) {
    return {{"deltas", m.deltas},
            {"modulus", m.modulus},
            {"projector_modulus", m.projector_modulus},
            {"pair_counts", m.pair_counts},
            {"noise_floor", m.noise_floor},
            {"points", m.points},
            {"rank", m.rank},
            {"monotone", m.monotone},
            {"reaches_floor", m.reaches_floor}};
}

inline json to_json(const regularity::KinkWitness& w) {
    return {{"p1", vec(w.p1)},
            {"p2", vec(w.p2)},
            {"kappa", w.kappa},
            {"sigma0", mat(w.sigma0)},
            {"j", w.j_list},
            {"lambda", w.lambda},
            {"residual", w.residual},
            {"trace_error", w.trace_error},
            {"gradient_error", w.gradient_error},
            {"max_ratio", w.max_ratio},
            {"sampled_radius", w.sampled_radius},
            {"validity_radius", w.validity_radius},
            {"slope_consistency", w.slope_consistency},
            {"increasing", w.increasing},
            {"identities_hold", w.identities_hold}};
}

inline json to_json(const synthesis::SimulationEstimate& e) {
    return {{"x0", vec(e.x0)},         {"n_paths", e.n_paths},         {"dt", e.dt},
            {"T_max", e.T_max},        {"mean", e.mean},               {"stderr", e.stderr_},
            {"tail_bound", e.tail_bound}, {"absorbed_fraction", e.absorbed_fraction},
            {"seed", e.seed},          {"seeding", e.seeding}};
}

inline json to_json(const synthesis::GapEntry& g) {
    return {{"x0", vec(g.x0)},
            {"V", g.value},
            {"estimate", to_json(g.estimate)},
            {"gap", g.gap},
            {"threshold", g.threshold},
            {"significantly_positive", g.significantly_positive},
            {"significantly_negative", g.significantly_negative}};
}

inline json to_json(const synthesis::StructureReport& s) {
    json pts = json::array();
    for (const auto& p : s.points)
        pts.push_back({{"x", vec(p.x)},
                       {"rank_S", p.rank_S},
                       {"rank_sigma", p.rank_sigma},
                       {"defect", p.defect},
                       {"contained", p.contained}});
    return {{"worst_defect", s.worst_defect}, {"worst_index", s.worst_index}, {"pass", s.pass}, {"points", pts}};
}

// ---------------------------------------------------------------------------
// CSV

inline std::string csv_number(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

/// x_1..x_n,value
inline std::string values_csv(const GridFunction& f) {
    const auto& g = f.grid();
    std::ostringstream os;
    for (std::size_t i = 0; i < g.dim(); ++i) os << "x" << i + 1 << ',';
    os << "value\n";
    for (std::size_t k = 0; k < g.size(); ++k) {
        const Vector x = g.node(k);
        for (std::size_t i = 0; i < g.dim(); ++i) os << csv_number(x[static_cast<Eigen::Index>(i)]) << ',';
        os << csv_number(f[k]) << '\n';
    }
    return os.str();
}

/// probe,x_1..x_n,role,h_1..h_n,slope_plus,slope_minus,jump,tol_jump,classification
inline std::string regularity_csv(const regularity::RegularityReport& r, std::size_t n) {
    std::ostringstream os;
    os << "probe,";
    for (std::size_t i = 0; i < n; ++i) os << "x" << i + 1 << ',';
    os << "role,";
    for (std::size_t i = 0; i < n; ++i) os << "h" << i + 1 << ',';
    os << "slope_plus,slope_minus,jump,tol_jump,classification\n";
    for (std::size_t p = 0; p < r.probes.size(); ++p) {
        for (const auto& d : r.probes[p].directions) {
            os << p << ',';
            for (std::size_t i = 0; i < n; ++i) os << csv_number(r.probes[p].x[static_cast<Eigen::Index>(i)]) << ',';
            os << regularity::to_string(d.role) << ',';
            for (std::size_t i = 0; i < n; ++i) os << csv_number(d.h[static_cast<Eigen::Index>(i)]) << ',';
            os << csv_number(d.slope_plus) << ',' << csv_number(d.slope_minus) << ',' << csv_number(d.jump) << ','
               << csv_number(d.tol_jump) << ',' << regularity::to_string(d.classification) << '\n';
        }
    }
    return os.str();
}

/// x0_1..x0_n,V,mean,stderr,gap,threshold,tail_bound,n_paths,dt,T_max,seed,verdict
inline std::string simulation_csv(const std::vector<synthesis::GapEntry>& gaps, std::size_t n) {
    std::ostringstream os;
    for (std::size_t i = 0; i < n; ++i) os << "x0_" << i + 1 << ',';
    os << "V,mean,stderr,gap,threshold,tail_bound,n_paths,dt,T_max,seed,verdict\n";
    for (const auto& g : gaps) {
        for (std::size_t i = 0; i < n; ++i) os << csv_number(g.x0[static_cast<Eigen::Index>(i)]) << ',';
        const auto& e = g.estimate;
        os << csv_number(g.value) << ',' << csv_number(e.mean) << ',' << csv_number(e.stderr_) << ','
           << csv_number(g.gap) << ',' << csv_number(g.threshold) << ',' << csv_number(e.tail_bound) << ','
           << e.n_paths << ',' << csv_number(e.dt) << ',' << csv_number(e.T_max) << ',' << e.seed << ','
           << (g.significantly_negative ? "negative" : g.significantly_positive ? "positive" : "within") << '\n';
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// files

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidArgument("cannot write " + path.string());
    out << text;
    if (!out) throw InvalidArgument("cannot write " + path.string());
}

inline void write_json(const std::filesystem::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidArgument("cannot read " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

inline json read_json(const std::filesystem::path& path) {
    try {
        return json::parse(read_text(path));
    } catch (const json::exception& e) {
        throw InvalidArgument(path.string() + ": " + e.what());
    }
}

}  // namespace smoothfit::io
