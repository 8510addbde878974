#pragma once

// Reference reflected solvers (backward projection) and the residual
// checks every solution bundle is held to.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "rbsde/engine.hpp"
#include "rbsde/errors.hpp"
#include "rbsde/lattice.hpp"
#include "rbsde/regulated.hpp"
#include "rbsde/tolerances.hpp"

namespace rbsde {

/// Doubly reflected solution by clamping into [L, U] at every step, lower
/// clamp first. Either barrier may be absent.
inline SolutionBundle solve_doubly_reflected(const ProblemInstance& inst) {
    require_valid(inst, "solve_doubly_reflected");
    return detail::backward(inst, {detail::LowerRule::Reflect, true, 0}, Method::Projection);
}

inline SolutionBundle solve_reflected_lower(const ProblemInstance& inst) {
    if (inst.barriers.upper) throw ContractError("solve_reflected_lower: upper barrier must be absent");
    return solve_doubly_reflected(inst);
}

/// Mirror of the lower solver through the negation dual.
inline SolutionBundle solve_reflected_upper(const ProblemInstance& inst) {
    if (inst.barriers.lower) throw ContractError("solve_reflected_upper: lower barrier must be absent");
    return solve_reflected_lower(negation_dual(inst)).dual();
}

/// Per-node minimality terms and their worst path sums.
struct SkorokhodReport {
    double lower_residual = 0.0;      // max over paths of the signed lower sum
    double upper_residual = 0.0;
    double lower_min = 0.0;           // min over paths of the signed lower sum
    double upper_min = 0.0;
    double lower_abs = 0.0;           // max over paths of the sum of |terms|
    double upper_abs = 0.0;
    AdaptedField lower_terms;         // (Y+ - L+) dK* + (Y - L) Δ+K per node
    AdaptedField upper_terms;
    // Alternative reading of the jump term with left limits,
    // (Y_{s-} - L_{s-}) Δ+K_s; needs path enumeration, empty if refused.
    std::optional<double> lower_left_limit_residual;
    std::optional<double> upper_left_limit_residual;
    std::vector<double> per_path_lower;  // filled on request
    std::vector<double> per_path_upper;
};

namespace detail {

/// max / min over root-to-leaf paths of the sum of per-node terms.
inline std::pair<double, double> path_extremes(const FiltrationTree& tree, const AdaptedField& terms) {
    std::vector<double> hi(tree.size(), 0.0), lo(tree.size(), 0.0);
    for (NodeId id = tree.size(); id-- > 0;) {
        if (tree.is_leaf(id)) {
            hi[id] = lo[id] = terms[id];
            continue;
        }
        double h = -std::numeric_limits<double>::infinity(), l = std::numeric_limits<double>::infinity();
        for (const Edge& c : tree.children(id)) {
            h = std::max(h, hi[c.child]);
            l = std::min(l, lo[c.child]);
        }
        hi[id] = terms[id] + h;
        lo[id] = terms[id] + l;
    }
    return {hi[tree.root()], lo[tree.root()]};
}

}  // namespace detail

inline SkorokhodReport skorokhod_residual(const SolutionBundle& b, const BarrierPair& barriers,
                                          bool per_path = false) {
    const FiltrationTree& tree = *b.tree;
    SkorokhodReport r;
    r.lower_terms = AdaptedField(tree.size());
    r.upper_terms = AdaptedField(tree.size());
    AdaptedField lower_abs(tree.size()), upper_abs(tree.size());
    const auto& L = barriers.lower;
    const auto& U = barriers.upper;
    for (const auto* bar : {&L, &U})
        if (*bar) require_same_tree(tree, (*bar)->size(), "skorokhod_residual");
    for (NodeId id = 0; id < tree.size(); ++id) {
        if (L) {
            const double a = (b.y.right[id] - L->right[id]) * b.dk_star[id];
            const double c = (b.y.value[id] - L->value[id]) * b.dk_jump[id];
            r.lower_terms[id] = a + c;
            lower_abs[id] = std::abs(a) + std::abs(c);
        }
        if (U) {
            const double a = (U->right[id] - b.y.right[id]) * b.da_star[id];
            const double c = (U->value[id] - b.y.value[id]) * b.da_jump[id];
            r.upper_terms[id] = a + c;
            upper_abs[id] = std::abs(a) + std::abs(c);
        }
    }
    std::tie(r.lower_residual, r.lower_min) = detail::path_extremes(tree, r.lower_terms);
    std::tie(r.upper_residual, r.upper_min) = detail::path_extremes(tree, r.upper_terms);
    r.lower_abs = detail::path_extremes(tree, lower_abs).first;
    r.upper_abs = detail::path_extremes(tree, upper_abs).first;

    if (per_path || tree.levels() <= 16) {
        double lo_alt = 0.0, up_alt = 0.0;
        for_each_path(tree, [&](const PathIndex& p) {
            double sl = 0.0, su = 0.0, ll = 0.0, lu = 0.0;
            for (std::size_t k = 0; k + 1 < p.nodes.size(); ++k) {
                const NodeId id = p.nodes[k];
                sl += r.lower_terms[id];
                su += r.upper_terms[id];
                // Left limit at t_k is the t+ value of the previous node; at
                // the root there is nothing before, use the value itself.
                const double yl = k == 0 ? b.y.value[id] : b.y.right[p.nodes[k - 1]];
                if (L) {
                    const double ll_bar = k == 0 ? L->value[id] : L->right[p.nodes[k - 1]];
                    ll += (b.y.right[id] - L->right[id]) * b.dk_star[id] + (yl - ll_bar) * b.dk_jump[id];
                }
                if (U) {
                    const double ul_bar = k == 0 ? U->value[id] : U->right[p.nodes[k - 1]];
                    lu += (U->right[id] - b.y.right[id]) * b.da_star[id] + (ul_bar - yl) * b.da_jump[id];
                }
            }
            lo_alt = std::max(lo_alt, std::abs(ll));
            up_alt = std::max(up_alt, std::abs(lu));
            if (per_path) {
                r.per_path_lower.push_back(sl);
                r.per_path_upper.push_back(su);
            }
        });
        r.lower_left_limit_residual = lo_alt;
        r.upper_left_limit_residual = up_alt;
    }
    return r;
}

/// Largest one-step budget residual over all edges:
/// Y_k = Y_{k+1} + f(t_k, Y_{k+}) dt + ΔK - ΔA - ΔM, plus Y_N = ξ.
inline double lu4_residual(const SolutionBundle& b, const ProblemInstance& inst) {
    const FiltrationTree& tree = *inst.tree;
    require_same_tree(tree, b.y.size(), "lu4_residual");
    if (b.dm.size() != tree.edge_count()) throw ContractError("lu4_residual: martingale field size mismatch");
    double worst = 0.0;
    for (NodeId id = 0; id < tree.size(); ++id) {
        if (tree.is_leaf(id)) {
            worst = std::max(worst, std::abs(b.y.value[id] - inst.xi(id)));
            worst = std::max(worst, std::abs(b.y.right[id] - inst.xi(id)));
            continue;
        }
        const std::size_t k = tree.level_of(id);
        const double drift = inst.driver(inst.grid.t(k), b.y.right[id]) * inst.grid.dt(k);
        const double dk = b.dk_star[id] + b.dk_jump[id];
        const double da = b.da_star[id] + b.da_jump[id];
        std::size_t ei = tree.edge_begin(id);
        for (const Edge& c : tree.children(id)) {
            const double rhs = b.y.value[c.child] + drift + dk - da - b.dm[ei++];
            worst = std::max(worst, std::abs(b.y.value[id] - rhs));
        }
    }
    return worst;
}

/// max |Δ+Y + Δ+(K - A)| over nodes.
inline double jump_identity_residual(const SolutionBundle& b) {
    double worst = 0.0;
    for (NodeId id = 0; id < b.y.size(); ++id) {
        const double dy = b.y.right[id] - b.y.value[id];
        worst = std::max(worst, std::abs(dy + (b.dk_jump[id] - b.da_jump[id])));
    }
    return worst;
}

/// max |E[ΔM | node]| over non-leaf nodes.
inline double martingale_centering_residual(const SolutionBundle& b) {
    const FiltrationTree& tree = *b.tree;
    double worst = 0.0;
    for (NodeId id = 0; id < tree.size(); ++id) {
        double s = 0.0;
        std::size_t ei = tree.edge_begin(id);
        for (const Edge& c : tree.children(id)) s += c.probability * b.dm[ei++];
        worst = std::max(worst, std::abs(s));
    }
    return worst;
}

/// Largest amount by which Y (or Y+) leaves [L, U].
inline double sandwich_violation(const SolutionBundle& b, const BarrierPair& barriers, NodeId* where = nullptr) {
    double worst = 0.0;
    NodeId at = no_node;
    for (NodeId id = 0; id < b.y.size(); ++id) {
        double v = 0.0;
        if (barriers.lower)
            v = std::max({v, barriers.lower->value[id] - b.y.value[id], barriers.lower->right[id] - b.y.right[id]});
        if (barriers.upper)
            v = std::max({v, b.y.value[id] - barriers.upper->value[id], b.y.right[id] - barriers.upper->right[id]});
        if (v > worst) {
            worst = v;
            at = id;
        }
    }
    if (where) *where = at;
    return worst;
}

/// Smallest increment entry (negative means a decreasing K or A).
inline double min_increment(const SolutionBundle& b) {
    double m = 0.0;
    for (NodeId id = 0; id < b.y.size(); ++id)
        m = std::min({m, b.dk_star[id], b.dk_jump[id], b.da_star[id], b.da_jump[id]});
    return m;
}

/// Nodewise flat-off products dK*·(Y+ - L+), Δ+K·(Y - L) and the upper
/// mirror; returns the largest.
inline double flat_off_residual(const SolutionBundle& b, const BarrierPair& barriers) {
    double worst = 0.0;
    for (NodeId id = 0; id < b.y.size(); ++id) {
        if (barriers.lower) {
            worst = std::max(worst, std::abs(b.dk_star[id] * (b.y.right[id] - barriers.lower->right[id])));
            worst = std::max(worst, std::abs(b.dk_jump[id] * (b.y.value[id] - barriers.lower->value[id])));
        }
        if (barriers.upper) {
            worst = std::max(worst, std::abs(b.da_star[id] * (barriers.upper->right[id] - b.y.right[id])));
            worst = std::max(worst, std::abs(b.da_jump[id] * (barriers.upper->value[id] - b.y.value[id])));
        }
    }
    return worst;
}

/// max over nodes of min(dK* + Δ+K, dA* + Δ+A).
inline double support_overlap(const SolutionBundle& b) {
    double worst = 0.0;
    for (NodeId id = 0; id < b.y.size(); ++id)
        worst = std::max(worst, std::min(b.dk_star[id] + b.dk_jump[id], b.da_star[id] + b.da_jump[id]));
    return worst;
}

}  // namespace rbsde
