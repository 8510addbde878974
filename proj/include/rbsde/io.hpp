#pragma once

// JSON instance files, JSON solution dumps and CSV convergence tables.

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rbsde/engine.hpp"
#include "rbsde/errors.hpp"
#include "rbsde/lattice.hpp"
#include "rbsde/reflected.hpp"
#include "rbsde/regulated.hpp"

namespace rbsde::io {

using json = nlohmann::json;

inline constexpr const char* solution_format = "rbsde-solution/1";

namespace detail {

inline void only_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw InputError(where + ": expected an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!ok.count(it.key())) throw InputError(where + ": unknown key \"" + it.key() + "\"");
}

inline const json& need(const json& j, const char* key, const std::string& where) {
    auto it = j.find(key);
    if (it == j.end()) throw InputError(where + ": missing key \"" + key + "\"");
    return *it;
}

inline double number(const json& j, const char* key, const std::string& where) {
    const json& v = need(j, key, where);
    if (!v.is_number()) throw InputError(where + "." + key + ": expected a number");
    return v.get<double>();
}

inline double number_or(const json& j, const char* key, double fallback, const std::string& where) {
    if (!j.contains(key)) return fallback;
    return number(j, key, where);
}

inline std::size_t count(const json& j, const char* key, const std::string& where) {
    const json& v = need(j, key, where);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
        throw InputError(where + "." + key + ": expected a non-negative integer");
    return v.get<std::size_t>();
}

inline TimeGrid parse_grid(const json& j) {
    if (j.contains("instants")) {
        only_keys(j, {"instants"}, "grid");
        const json& a = j["instants"];
        if (!a.is_array()) throw InputError("grid.instants: expected an array");
        std::vector<double> t;
        for (const json& x : a) {
            if (!x.is_number()) throw InputError("grid.instants: expected numbers");
            t.push_back(x.get<double>());
        }
        try {
            return TimeGrid(std::move(t));
        } catch (const ContractError& e) {
            throw InputError(std::string("grid: ") + e.what());
        }
    }
    only_keys(j, {"T", "steps"}, "grid");
    try {
        return TimeGrid::uniform(number(j, "T", "grid"), count(j, "steps", "grid"));
    } catch (const ContractError& e) {
        throw InputError(std::string("grid: ") + e.what());
    }
}

inline FiltrationTree parse_tree(const json& j, std::size_t steps) {
    const json& kind = need(j, "kind", "tree");
    if (kind == "binomial") {
        only_keys(j, {"kind", "x0", "up", "down", "p_up"}, "tree");
        try {
            return build_binomial(steps, number(j, "x0", "tree"), number(j, "up", "tree"), number(j, "down", "tree"),
                                  number(j, "p_up", "tree"));
        } catch (const ContractError& e) {
            throw InputError(std::string("tree: ") + e.what());
        }
    }
    if (kind != "explicit") throw InputError("tree.kind: expected \"binomial\" or \"explicit\"");
    only_keys(j, {"kind", "levels"}, "tree");
    const json& lv = need(j, "levels", "tree");
    if (!lv.is_array()) throw InputError("tree.levels: expected an array");
    std::vector<std::vector<LevelNode>> levels;
    for (std::size_t k = 0; k < lv.size(); ++k) {
        if (!lv[k].is_array()) throw InputError("tree.levels[" + std::to_string(k) + "]: expected an array");
        std::vector<LevelNode> row;
        for (std::size_t i = 0; i < lv[k].size(); ++i) {
            const std::string where = "tree.levels[" + std::to_string(k) + "][" + std::to_string(i) + "]";
            const json& n = lv[k][i];
            only_keys(n, {"state", "children"}, where);
            LevelNode ln;
            ln.state = number_or(n, "state", 0.0, where);
            if (n.contains("children")) {
                if (!n["children"].is_array()) throw InputError(where + ".children: expected an array");
                for (const json& c : n["children"]) {
                    only_keys(c, {"node", "p"}, where + ".children");
                    ln.children.push_back({count(c, "node", where), number(c, "p", where)});
                }
            }
            row.push_back(std::move(ln));
        }
        levels.push_back(std::move(row));
    }
    if (levels.size() != steps + 1)
        throw InputError("tree: " + std::to_string(levels.size()) + " levels do not match grid with " +
                         std::to_string(steps) + " steps");
    try {
        return FiltrationTree(levels);
    } catch (const ContractError& e) {
        throw InputError(std::string("tree: ") + e.what());
    }
}

/// Evaluates a function spec at every node; `leaf_row_ok` allows a table
/// with a single row holding the leaf values.
inline AdaptedField parse_function(const json& j, const FiltrationTree& tree, const TimeGrid& grid,
                                   const std::string& where, bool leaf_row_ok) {
    if (j.is_number()) return AdaptedField(tree.size(), j.get<double>());
    if (!j.is_object()) throw InputError(where + ": expected a function spec");
    if (j.contains("table")) {
        only_keys(j, {"table"}, where);
        const json& t = j["table"];
        if (!t.is_array()) throw InputError(where + ".table: expected an array of rows");
        AdaptedField out(tree.size());
        const std::size_t N = tree.levels();
        auto fill_row = [&](const json& row, std::size_t k) {
            if (!row.is_array() || row.size() != tree.level_size(k))
                throw InputError(where + ".table: row for level " + std::to_string(k) + " must have " +
                                 std::to_string(tree.level_size(k)) + " entries");
            for (std::size_t i = 0; i < row.size(); ++i) {
                if (!row[i].is_number()) throw InputError(where + ".table: expected numbers");
                out[tree.node(k, i)] = row[i].get<double>();
            }
        };
        if (leaf_row_ok && t.size() == 1) {
            fill_row(t[0], N);
        } else {
            if (t.size() != N + 1) throw InputError(where + ".table: expected " + std::to_string(N + 1) + " rows");
            for (std::size_t k = 0; k <= N; ++k) fill_row(t[k], k);
        }
        return out;
    }
    const json& fam = need(j, "family", where);
    double a = 0, b = 0, c = 0;
    if (fam == "constant") {
        only_keys(j, {"family", "value"}, where);
        a = number(j, "value", where);
    } else if (fam == "affine_state") {
        only_keys(j, {"family", "a", "b"}, where);
        a = number(j, "a", where);
        b = number(j, "b", where);
    } else if (fam == "affine_time_state") {
        only_keys(j, {"family", "a", "b", "c"}, where);
        a = number(j, "a", where);
        b = number(j, "b", where);
        c = number(j, "c", where);
    } else {
        throw InputError(where + ".family: unknown family");
    }
    return field_from(tree, grid, [&](double t, double x) { return a + b * x + c * t; });
}

inline Driver parse_driver(const json& j) {
    only_keys(j, {"family", "parameters", "mu"}, "driver");
    const json& fam = need(j, "family", "driver");
    const json params = j.contains("parameters") ? j["parameters"] : json::object();
    const double mu = number_or(j, "mu", -1.0, "driver");
    try {
        if (fam == "zero") {
            only_keys(params, {}, "driver.parameters");
            return Driver::zero();
        }
        if (fam == "constant") {
            only_keys(params, {"c"}, "driver.parameters");
            return Driver::constant(number(params, "c", "driver.parameters"));
        }
        if (fam == "linear") {
            only_keys(params, {"a", "b", "c"}, "driver.parameters");
            return Driver::linear(number_or(params, "a", 0.0, "driver.parameters"),
                                  number_or(params, "b", 0.0, "driver.parameters"),
                                  number_or(params, "c", 0.0, "driver.parameters"), mu);
        }
        if (fam == "sine") {
            only_keys(params, {"a", "b"}, "driver.parameters");
            return Driver::sine(number_or(params, "a", 0.0, "driver.parameters"),
                                number_or(params, "b", 0.0, "driver.parameters"), mu);
        }
    } catch (const ContractError& e) {
        throw InputError(std::string("driver: ") + e.what());
    }
    throw InputError("driver.family: expected zero, constant, linear or sine");
}

}  // namespace detail

inline ProblemInstance parse_instance(const json& j) {
    detail::only_keys(j, {"grid", "tree", "terminal", "driver", "barriers"}, "instance");
    ProblemInstance inst;
    inst.grid = detail::parse_grid(detail::need(j, "grid", "instance"));
    inst.tree = std::make_shared<const FiltrationTree>(
        detail::parse_tree(detail::need(j, "tree", "instance"), inst.grid.steps()));
    const FiltrationTree& tree = *inst.tree;
    const std::size_t N = tree.levels();
    const AdaptedField xi =
        detail::parse_function(detail::need(j, "terminal", "instance"), tree, inst.grid, "terminal", true);
    inst.terminal = AdaptedField(tree.level_size(N));
    for (std::size_t i = 0; i < tree.level_size(N); ++i) inst.terminal[i] = xi[tree.node(N, i)];
    inst.driver = j.contains("driver") ? detail::parse_driver(j["driver"]) : Driver::zero();

    if (j.contains("barriers")) {
        const json& b = j["barriers"];
        detail::only_keys(b, {"L", "U", "right_jumps"}, "barriers");
        for (const char* side : {"L", "U"}) {
            if (!b.contains(side) || b[side].is_null()) continue;
            RegulatedField f(detail::parse_function(b[side], tree, inst.grid, std::string("barriers.") + side, false));
            (side[0] == 'L' ? inst.barriers.lower : inst.barriers.upper) = std::move(f);
        }
        if (b.contains("right_jumps")) {
            if (!b["right_jumps"].is_array()) throw InputError("barriers.right_jumps: expected an array");
            for (const json& rj : b["right_jumps"]) {
                detail::only_keys(rj, {"barrier", "level", "node", "new_value"}, "barriers.right_jumps");
                const std::string which = rj.contains("barrier") ? rj["barrier"].get<std::string>() : "L";
                auto& target = which == "L" ? inst.barriers.lower : inst.barriers.upper;
                if (which != "L" && which != "U") throw InputError("barriers.right_jumps.barrier: expected L or U");
                if (!target) throw InputError("barriers.right_jumps: barrier " + which + " is absent");
                const std::size_t k = detail::count(rj, "level", "barriers.right_jumps");
                const std::size_t i = detail::count(rj, "node", "barriers.right_jumps");
                if (k > N || i >= tree.level_size(k)) throw InputError("barriers.right_jumps: node out of range");
                target->right[tree.node(k, i)] = detail::number(rj, "new_value", "barriers.right_jumps");
            }
        }
    }
    const ValidationReport rep = validate_instance(inst);
    if (!rep.ok()) throw InputError("invalid instance: " + rep.violations.front().message);
    return inst;
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw InputError(path + ": " + e.what());
    }
}

inline ProblemInstance load_instance(const std::string& path) { return parse_instance(read_json_file(path)); }

inline json num(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

inline double from_num(const json& j) {
    return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

struct Residuals {
    double lu4 = 0.0;
    double lower_skorokhod = 0.0;
    double upper_skorokhod = 0.0;
    double jump_identity = 0.0;
    double sandwich = 0.0;
    double martingale_centering = 0.0;
    double min_increment = 0.0;

    bool operator==(const Residuals&) const = default;
};

inline Residuals compute_residuals(const SolutionBundle& b, const ProblemInstance& inst) {
    Residuals r;
    r.lu4 = lu4_residual(b, inst);
    const SkorokhodReport sk = skorokhod_residual(b, inst.barriers);
    r.lower_skorokhod = sk.lower_abs;
    r.upper_skorokhod = sk.upper_abs;
    r.jump_identity = jump_identity_residual(b);
    r.sandwich = sandwich_violation(b, inst.barriers);
    r.martingale_centering = martingale_centering_residual(b);
    r.min_increment = min_increment(b);
    return r;
}

inline json residuals_to_json(const Residuals& r) {
    return {{"lu4", num(r.lu4)},
            {"lower_skorokhod", num(r.lower_skorokhod)},
            {"upper_skorokhod", num(r.upper_skorokhod)},
            {"jump_identity", num(r.jump_identity)},
            {"sandwich", num(r.sandwich)},
            {"martingale_centering", num(r.martingale_centering)},
            {"min_increment", num(r.min_increment)}};
}

inline Residuals residuals_from_json(const json& j) {
    Residuals r;
    r.lu4 = from_num(j.at("lu4"));
    r.lower_skorokhod = from_num(j.at("lower_skorokhod"));
    r.upper_skorokhod = from_num(j.at("upper_skorokhod"));
    r.jump_identity = from_num(j.at("jump_identity"));
    r.sandwich = from_num(j.at("sandwich"));
    r.martingale_centering = from_num(j.at("martingale_centering"));
    r.min_increment = from_num(j.at("min_increment"));
    return r;
}

struct SolutionMeta {
    std::string mode;  // penalization mode, empty for projection
    double epsilon = 0.0;
    std::uint64_t n_max = 0;
};

inline json solution_to_json(const SolutionBundle& b, const ProblemInstance& inst, const SolutionMeta& meta = {}) {
    const FiltrationTree& tree = *b.tree;
    json j;
    j["format"] = solution_format;
    j["method"] = to_string(b.method);
    j["penalty_level"] = b.penalty_level;
    if (!meta.mode.empty()) j["mode"] = meta.mode;
    json tolj = {{"sandwich", tol::sandwich},
                 {"skorokhod", tol::skorokhod},
                 {"budget", tol::budget},
                 {"martingale_centering", tol::martingale_centering}};
    if (meta.epsilon > 0) {
        tolj["sweep_epsilon"] = meta.epsilon;
        tolj["sweep_max_level"] = meta.n_max;
    }
    j["tolerances"] = tolj;
    j["residuals"] = residuals_to_json(compute_residuals(b, inst));
    json deg = json::array();
    for (NodeId id : b.degenerate_nodes) deg.push_back({tree.level_of(id), tree.index_in_level(id)});
    j["degenerate_nodes"] = deg;
    json levels = json::array();
    for (std::size_t k = 0; k <= tree.levels(); ++k) {
        json row = json::array();
        for (NodeId id = tree.level_begin(k); id < tree.level_end(k); ++id) {
            json dm = json::array();
            for (std::size_t e = tree.edge_begin(id); e < tree.edge_end(id); ++e) dm.push_back(num(b.dm[e]));
            row.push_back({{"y", num(b.y.value[id])},
                           {"y_right", num(b.y.right[id])},
                           {"dk_star", num(b.dk_star[id])},
                           {"dk_jump", num(b.dk_jump[id])},
                           {"da_star", num(b.da_star[id])},
                           {"da_jump", num(b.da_jump[id])},
                           {"dm", dm}});
        }
        levels.push_back(row);
    }
    j["levels"] = levels;
    return j;
}

inline Method method_from_string(const std::string& s) {
    for (Method m : {Method::Projection, Method::IncreasingPenalization, Method::DecreasingPenalization,
                     Method::Patched})
        if (s == to_string(m)) return m;
    throw InputError("solution: unknown method \"" + s + "\"");
}

/// Rebuilds a bundle from a dump; also returns the stored residuals.
inline SolutionBundle solution_from_json(const json& j, std::shared_ptr<const FiltrationTree> tree,
                                         Residuals* stored = nullptr) {
    try {
        if (j.at("format") != solution_format) throw InputError("solution: unsupported format");
        SolutionBundle b(tree);
        b.method = method_from_string(j.at("method").get<std::string>());
        b.penalty_level = j.at("penalty_level").get<std::size_t>();
        for (const json& d : j.at("degenerate_nodes"))
            b.degenerate_nodes.push_back(tree->node(d.at(0).get<std::size_t>(), d.at(1).get<std::size_t>()));
        const json& levels = j.at("levels");
        if (levels.size() != tree->levels() + 1) throw InputError("solution: level count does not match instance");
        for (std::size_t k = 0; k <= tree->levels(); ++k) {
            if (levels[k].size() != tree->level_size(k)) throw InputError("solution: node count mismatch");
            for (std::size_t i = 0; i < tree->level_size(k); ++i) {
                const json& n = levels[k][i];
                const NodeId id = tree->node(k, i);
                b.y.value[id] = from_num(n.at("y"));
                b.y.right[id] = from_num(n.at("y_right"));
                b.dk_star[id] = from_num(n.at("dk_star"));
                b.dk_jump[id] = from_num(n.at("dk_jump"));
                b.da_star[id] = from_num(n.at("da_star"));
                b.da_jump[id] = from_num(n.at("da_jump"));
                const json& dm = n.at("dm");
                if (dm.size() != tree->edge_end(id) - tree->edge_begin(id)) throw InputError("solution: edge count mismatch");
                for (std::size_t e = 0; e < dm.size(); ++e) b.dm[tree->edge_begin(id) + e] = from_num(dm[e]);
            }
        }
        if (stored) *stored = residuals_from_json(j.at("residuals"));
        return b;
    } catch (const json::exception& e) {
        throw InputError(std::string("solution: ") + e.what());
    }
}

inline std::string format_double(double x) {
    if (!std::isfinite(x)) return "nan";
    std::ostringstream os;
    os << std::setprecision(17) << x;
    return os.str();
}

struct TraceRow {
    std::uint64_t n = 0;
    double sup_distance = 0.0;
    double lower_skorokhod = 0.0;
    double upper_skorokhod = 0.0;
    double lu4 = 0.0;
};

inline void write_trace_csv(std::ostream& out, const std::vector<TraceRow>& rows) {
    out << "n,sup_distance,lower_skorokhod_residual,upper_skorokhod_residual,lu4_residual\n";
    for (const TraceRow& r : rows)
        out << r.n << ',' << format_double(r.sup_distance) << ',' << format_double(r.lower_skorokhod) << ','
            << format_double(r.upper_skorokhod) << ',' << format_double(r.lu4) << '\n';
}

}  // namespace rbsde::io
