#pragma once

// Regulated (t and t+) fields, barrier pairs, problem instances and the
// right-jump schedules used by the penalization schemes.

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rbsde/driver.hpp"
#include "rbsde/errors.hpp"
#include "rbsde/lattice.hpp"
#include "rbsde/tolerances.hpp"

namespace rbsde {

/// Value at t_k and right-limit value at t_k+ for every node.
struct RegulatedField {
    AdaptedField value;
    AdaptedField right;

    RegulatedField() = default;
    explicit RegulatedField(AdaptedField v) : value(v), right(std::move(v)) {}
    RegulatedField(AdaptedField v, AdaptedField r) : value(std::move(v)), right(std::move(r)) {
        if (value.size() != right.size()) throw ContractError("RegulatedField: value/right size mismatch");
    }

    std::size_t size() const { return value.size(); }
    double jump(NodeId id) const { return right[id] - value[id]; }

    RegulatedField negated() const { return {value.negated(), right.negated()}; }

    bool operator==(const RegulatedField&) const = default;
};

inline double right_jump(const RegulatedField& f, NodeId id) { return f.jump(id); }

/// Max distance over both the t and the t+ values.
inline double sup_distance(const RegulatedField& a, const RegulatedField& b) {
    return std::max(sup_distance(a.value, b.value), sup_distance(a.right, b.right));
}

/// An absent barrier stands for -inf (lower) or +inf (upper).
struct BarrierPair {
    std::optional<RegulatedField> lower;
    std::optional<RegulatedField> upper;

    bool operator==(const BarrierPair&) const = default;
};

struct SeparationReport {
    bool satisfied = true;
    double margin = std::numeric_limits<double>::infinity();        // min of U - L and U+ - L+
    double cross_margin = std::numeric_limits<double>::infinity();  // also U - L+ and U+ - L
    std::vector<NodeId> violations;
};

/// Strict separation L < U and L+ < U+ at every node.
inline SeparationReport check_separation(const BarrierPair& pair) {
    SeparationReport rep;
    if (!pair.lower || !pair.upper) return rep;
    const RegulatedField& L = *pair.lower;
    const RegulatedField& U = *pair.upper;
    if (L.size() != U.size()) throw ContractError("check_separation: barriers live on different trees");
    for (NodeId id = 0; id < L.size(); ++id) {
        const double m = std::min(U.value[id] - L.value[id], U.right[id] - L.right[id]);
        const double c = std::min({m, U.value[id] - L.right[id], U.right[id] - L.value[id]});
        rep.margin = std::min(rep.margin, m);
        rep.cross_margin = std::min(rep.cross_margin, c);
        if (!(m > 0.0)) rep.violations.push_back(id);
    }
    rep.satisfied = rep.violations.empty();
    return rep;
}

enum class BarrierSide { Lower, Upper };

struct JumpEvent {
    std::size_t level;
    NodeId node;
    double jump;
};

/// Nodes whose right jump crosses the level-n threshold: Δ+L < -1/n for a
/// lower barrier, Δ+U > 1/n for an upper one. Events are sorted by time.
struct JumpExhaustionSchedule {
    std::size_t n = 1;
    BarrierSide side = BarrierSide::Lower;
    std::vector<JumpEvent> events;
    std::vector<bool> scheduled;

    bool contains(NodeId id) const { return id < scheduled.size() && scheduled[id]; }
    std::size_t size() const { return events.size(); }
};

inline JumpExhaustionSchedule jump_exhaustion_schedule(const FiltrationTree& tree, const RegulatedField& barrier,
                                                       std::size_t n, BarrierSide side = BarrierSide::Lower) {
    if (n == 0) throw ContractError("jump_exhaustion_schedule: n must be >= 1");
    require_same_tree(tree, barrier.size(), "jump_exhaustion_schedule");
    JumpExhaustionSchedule s;
    s.n = n;
    s.side = side;
    s.scheduled.assign(tree.size(), false);
    const double threshold = 1.0 / static_cast<double>(n);
    for (NodeId id = 0; id < tree.size(); ++id) {
        const double j = barrier.jump(id);
        const bool hit = side == BarrierSide::Lower ? j < -threshold : j > threshold;
        if (hit) {
            s.scheduled[id] = true;
            s.events.push_back({tree.level_of(id), id, j});
        }
    }
    return s;
}

struct ProblemInstance {
    std::shared_ptr<const FiltrationTree> tree;
    TimeGrid grid = TimeGrid::uniform(1.0, 1);
    AdaptedField terminal;  // one value per leaf, in level order
    Driver driver;
    BarrierPair barriers;

    double xi(NodeId leaf) const { return terminal[leaf - tree->level_begin(tree->levels())]; }

    bool operator==(const ProblemInstance& o) const {
        return *tree == *o.tree && grid == o.grid && terminal == o.terminal && driver == o.driver &&
               barriers == o.barriers;
    }
};

struct Violation {
    std::string kind;
    NodeId node = no_node;
    std::string message;
};

struct ValidationReport {
    std::vector<Violation> violations;
    bool ok() const { return violations.empty(); }
};

inline ValidationReport validate_instance(const ProblemInstance& inst) {
    ValidationReport rep;
    auto add = [&](std::string kind, NodeId node, std::string msg) {
        rep.violations.push_back({std::move(kind), node, std::move(msg)});
    };
    if (!inst.tree) {
        add("tree", no_node, "instance has no tree");
        return rep;
    }
    const FiltrationTree& tree = *inst.tree;
    const std::size_t N = tree.levels();
    if (inst.grid.steps() != N) {
        add("grid", no_node, "grid has " + std::to_string(inst.grid.steps()) + " steps but tree has " +
                                 std::to_string(N) + " levels");
        return rep;
    }
    const NodeId leaf0 = tree.level_begin(N);
    if (inst.terminal.size() != tree.level_size(N)) {
        add("terminal", no_node, "terminal value count does not match leaf count");
        return rep;
    }
    auto node_name = [&](NodeId id) {
        return "node (" + std::to_string(tree.level_of(id)) + ", " + std::to_string(tree.index_in_level(id)) + ")";
    };
    for (std::size_t i = 0; i < inst.terminal.size(); ++i)
        if (!std::isfinite(inst.terminal[i])) add("nonfinite", leaf0 + i, "terminal value not finite at " + node_name(leaf0 + i));

    const auto& L = inst.barriers.lower;
    const auto& U = inst.barriers.upper;
    for (const auto* b : {&L, &U}) {
        if (!*b) continue;
        const char* nm = b == &L ? "lower" : "upper";
        if ((*b)->size() != tree.size()) {
            add("barrier", no_node, std::string(nm) + " barrier size does not match tree");
            return rep;
        }
        for (NodeId id = 0; id < tree.size(); ++id) {
            if (!std::isfinite((*b)->value[id]) || !std::isfinite((*b)->right[id]))
                add("nonfinite", id, std::string(nm) + " barrier not finite at " + node_name(id));
        }
        for (NodeId id = leaf0; id < tree.size(); ++id) {
            if ((*b)->right[id] != (*b)->value[id])
                add("terminal_right_jump", id, std::string(nm) + " barrier has a right jump at terminal " + node_name(id));
        }
    }
    for (NodeId id = leaf0; id < tree.size(); ++id) {
        const double x = inst.xi(id);
        if (L && x < L->value[id]) add("terminal_below_lower", id, "terminal value below lower barrier at " + node_name(id));
        if (U && x > U->value[id]) add("terminal_above_upper", id, "terminal value above upper barrier at " + node_name(id));
    }
    if (L && U) {
        for (NodeId id = 0; id < tree.size(); ++id) {
            if (L->value[id] > U->value[id]) add("barrier_order", id, "lower barrier above upper barrier at " + node_name(id));
            if (L->right[id] > U->right[id])
                add("barrier_order_right", id, "lower right value above upper right value at " + node_name(id));
        }
    }
    const double stab = inst.driver.mu() * inst.grid.max_dt();
    if (!(stab < tol::stability_bound))
        add("stability", no_node, "mu * max dt = " + std::to_string(stab) + " is not below 1/2");
    return rep;
}

inline void require_valid(const ProblemInstance& inst, const char* who) {
    const ValidationReport rep = validate_instance(inst);
    if (!rep.ok()) {
        const Violation& v = rep.violations.front();
        if (v.kind == "stability") throw StabilityError(std::string(who) + ": " + v.message);
        throw ContractError(std::string(who) + ": " + v.message);
    }
}

/// (ξ, f, L, U) -> (-ξ, -f(t, -y), -U, -L). An exact involution.
inline ProblemInstance negation_dual(const ProblemInstance& inst) {
    ProblemInstance d;
    d.tree = inst.tree;
    d.grid = inst.grid;
    d.terminal = inst.terminal.negated();
    d.driver = inst.driver.negated();
    if (inst.barriers.upper) d.barriers.lower = inst.barriers.upper->negated();
    if (inst.barriers.lower) d.barriers.upper = inst.barriers.lower->negated();
    return d;
}

/// Builds a per-node field from a function of (time, state).
template <class F>
AdaptedField field_from(const FiltrationTree& tree, const TimeGrid& grid, F&& fn) {
    return AdaptedField::from(tree, [&](NodeId id) { return fn(grid.t(tree.level_of(id)), tree.state(id)); });
}

}  // namespace rbsde
