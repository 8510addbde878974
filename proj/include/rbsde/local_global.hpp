#pragma once

// Stopping rules, hitting times, local solutions on stochastic intervals and
// the alternating construction that patches them into a global solution.
//
// Hitting times are path dependent, so everything here works on trees where
// each node has a single parent. Use expand_instance() to turn a
// recombining lattice into its history tree first.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rbsde/engine.hpp"
#include "rbsde/errors.hpp"
#include "rbsde/lattice.hpp"
#include "rbsde/reflected.hpp"
#include "rbsde/regulated.hpp"
#include "rbsde/tolerances.hpp"

namespace rbsde {

struct HistoryInstance {
    ProblemInstance instance;
    std::vector<NodeId> origin;  // history node -> lattice node
};

inline HistoryInstance expand_instance(const ProblemInstance& inst) {
    HistoryTree h = expand_history(*inst.tree);
    HistoryInstance out;
    out.origin = h.origin;
    auto tree = std::make_shared<const FiltrationTree>(std::move(h.tree));
    const std::size_t N = tree->levels();
    out.instance.tree = tree;
    out.instance.grid = inst.grid;
    out.instance.driver = inst.driver;
    out.instance.terminal = AdaptedField(tree->level_size(N));
    for (NodeId id = tree->level_begin(N); id < tree->size(); ++id)
        out.instance.terminal[id - tree->level_begin(N)] = inst.xi(out.origin[id]);
    auto pull = [&](const std::optional<RegulatedField>& b) -> std::optional<RegulatedField> {
        if (!b) return std::nullopt;
        AdaptedField v(tree->size()), r(tree->size());
        for (NodeId id = 0; id < tree->size(); ++id) {
            v[id] = b->value[out.origin[id]];
            r[id] = b->right[out.origin[id]];
        }
        return RegulatedField(std::move(v), std::move(r));
    };
    out.instance.barriers.lower = pull(inst.barriers.lower);
    out.instance.barriers.upper = pull(inst.barriers.upper);
    return out;
}

inline std::string describe_path(const FiltrationTree& tree, NodeId id) {
    std::vector<std::size_t> idx;
    for (NodeId n = id; n != no_node; n = tree.parent(n)) idx.push_back(tree.index_in_level(n));
    std::string s = "path";
    for (auto it = idx.rbegin(); it != idx.rend(); ++it) s += " " + std::to_string(*it);
    return s;
}

/// A stopping time stored as the set of nodes where τ <= level. The set is
/// closed under taking children and holds every leaf, so τ <= N and the
/// decision at a node depends on that node alone.
class StoppingRule {
public:
    StoppingRule() = default;
    StoppingRule(std::shared_ptr<const FiltrationTree> tree, std::vector<std::uint8_t> reached)
        : tree_(std::move(tree)), reached_(std::move(reached)) {
        if (!tree_ || reached_.size() != tree_->size()) throw ContractError("StoppingRule: size mismatch");
        for (NodeId id = 0; id < tree_->size(); ++id) {
            if (tree_->is_leaf(id) && !reached_[id]) throw ContractError("StoppingRule: leaf not reached");
            if (reached_[id])
                for (const Edge& c : tree_->children(id))
                    if (!reached_[c.child]) throw ContractError("StoppingRule: not closed under children");
        }
    }

    /// Deterministic time τ = k.
    static StoppingRule at_level(std::shared_ptr<const FiltrationTree> tree, std::size_t k) {
        if (k > tree->levels()) throw ContractError("StoppingRule: level beyond horizon");
        std::vector<std::uint8_t> r(tree->size(), 0);
        for (NodeId id = 0; id < tree->size(); ++id) r[id] = tree->level_of(id) >= k;
        return StoppingRule(std::move(tree), std::move(r));
    }

    /// From one stopping level per leaf (leaves in level order). Throws if
    /// the levels are not adapted.
    static StoppingRule from_path_levels(std::shared_ptr<const FiltrationTree> tree,
                                         const std::vector<std::size_t>& levels) {
        if (!tree->is_tree()) throw ContractError("StoppingRule: path levels need a tree");
        const std::size_t N = tree->levels();
        if (levels.size() != tree->level_size(N)) throw ContractError("StoppingRule: one level per leaf expected");
        std::vector<std::uint8_t> r(tree->size(), 0);
        for (std::size_t i = 0; i < levels.size(); ++i) {
            if (levels[i] > N) throw ContractError("StoppingRule: level beyond horizon");
            NodeId n = tree->level_begin(N) + i;
            while (tree->level_of(n) > levels[i]) n = tree->parent(n);
            r[n] = 1;
        }
        for (NodeId id = 1; id < tree->size(); ++id)
            if (r[tree->parent(id)]) r[id] = 1;
        StoppingRule rule(tree, std::move(r));
        const auto back = rule.path_levels();
        for (std::size_t i = 0; i < levels.size(); ++i)
            if (back[i] != levels[i])
                throw ContractError("StoppingRule: levels are not adapted at " +
                                    describe_path(*tree, tree->level_begin(N) + i));
        return rule;
    }

    const std::shared_ptr<const FiltrationTree>& tree() const { return tree_; }
    bool reached(NodeId id) const { return reached_[id] != 0; }
    const std::vector<std::uint8_t>& flags() const { return reached_; }

    /// τ equals the level of this node on paths through it.
    bool stops_at(NodeId id) const {
        return reached(id) && (id == tree_->root() || !reached(tree_->parent(id)));
    }

    /// Stopping level on every root-to-leaf path, leaves in level order.
    std::vector<std::size_t> path_levels() const {
        const std::size_t N = tree_->levels();
        std::vector<std::size_t> first(tree_->size(), 0);
        for (NodeId id = 0; id < tree_->size(); ++id) {
            if (stops_at(id)) first[id] = tree_->level_of(id);
            else if (id != tree_->root()) first[id] = first[tree_->parent(id)];
        }
        return {first.begin() + static_cast<std::ptrdiff_t>(tree_->level_begin(N)), first.end()};
    }

    /// τ = N on every path.
    bool is_terminal() const {
        for (NodeId id = 0; id < tree_->size(); ++id)
            if (reached(id) && !tree_->is_leaf(id)) return false;
        return true;
    }

    bool operator==(const StoppingRule& o) const { return reached_ == o.reached_; }

private:
    std::shared_ptr<const FiltrationTree> tree_;
    std::vector<std::uint8_t> reached_;
};

namespace detail {

inline void require_history_tree(const FiltrationTree& tree, const char* who) {
    if (!tree.is_tree())
        throw ContractError(std::string(who) + ": needs a tree with unique parents (expand the lattice first)");
}

template <class Hit>
StoppingRule first_hit_after(const StoppingRule& tau, Hit&& hit) {
    const FiltrationTree& tree = *tau.tree();
    require_history_tree(tree, "hitting time");
    std::vector<std::uint8_t> r(tree.size(), 0);
    for (NodeId id = 0; id < tree.size(); ++id) {
        const bool before = id != tree.root() && r[tree.parent(id)];
        r[id] = before || (tau.reached(id) && hit(id)) || tree.is_leaf(id);
    }
    return StoppingRule(tau.tree(), std::move(r));
}

}  // namespace detail

inline bool touches_upper(const RegulatedField& y, const RegulatedField& u, NodeId id, double tol) {
    return y.value[id] >= u.value[id] - tol || y.right[id] >= u.right[id] - tol;
}

inline bool touches_lower(const RegulatedField& y, const RegulatedField& l, NodeId id, double tol) {
    return y.value[id] <= l.value[id] + tol || y.right[id] <= l.right[id] + tol;
}

/// First level >= τ where Y reaches U (at t or at t+), else N.
inline StoppingRule hitting_time_upper(const RegulatedField& y, const std::optional<RegulatedField>& u,
                                       const StoppingRule& tau, double tol = tol::hitting) {
    require_same_tree(*tau.tree(), y.size(), "hitting_time_upper");
    return detail::first_hit_after(tau, [&](NodeId id) { return u && touches_upper(y, *u, id, tol); });
}

/// First level >= τ where Y reaches L (at t or at t+), else N.
inline StoppingRule hitting_time_lower(const RegulatedField& y, const std::optional<RegulatedField>& l,
                                       const StoppingRule& tau, double tol = tol::hitting) {
    require_same_tree(*tau.tree(), y.size(), "hitting_time_lower");
    return detail::first_hit_after(tau, [&](NodeId id) { return l && touches_lower(y, *l, id, tol); });
}

struct LocalPropertyReport {
    std::vector<NodeId> upper_hit_failures;  // Y != U where δ_τ < N stops
    std::vector<NodeId> lower_hit_failures;  // Y != L where θ_τ < N stops
    std::vector<NodeId> below_lower;         // Y < L anywhere
    std::vector<NodeId> above_upper;         // Y > U anywhere
    std::size_t upper_hits_checked = 0;
    std::size_t lower_hits_checked = 0;

    bool ok() const {
        return upper_hit_failures.empty() && lower_hit_failures.empty() && below_lower.empty() && above_upper.empty();
    }
};

/// Checks that Y sits on U where δ_τ stops before N, on L where θ_τ stops
/// before N, and stays inside [L, U]. The hitting times are computed from
/// `hit_source` when given (e.g. a penalized approximation), else from Y.
inline LocalPropertyReport verify_local_properties(const RegulatedField& y, const BarrierPair& barriers,
                                                   const StoppingRule& tau,
                                                   const std::optional<RegulatedField>& hit_source = std::nullopt,
                                                   double tol = tol::hitting) {
    const FiltrationTree& tree = *tau.tree();
    const RegulatedField& src = hit_source ? *hit_source : y;
    LocalPropertyReport rep;
    const StoppingRule delta = hitting_time_upper(src, barriers.upper, tau, tol);
    const StoppingRule theta = hitting_time_lower(src, barriers.lower, tau, tol);
    for (NodeId id = 0; id < tree.size(); ++id) {
        if (tree.is_leaf(id)) continue;
        if (barriers.upper && delta.stops_at(id)) {
            const RegulatedField& u = *barriers.upper;
            ++rep.upper_hits_checked;
            bool ok = true;
            if (src.value[id] >= u.value[id] - tol) ok = ok && std::abs(y.value[id] - u.value[id]) <= tol;
            else ok = ok && std::abs(y.right[id] - u.right[id]) <= tol;
            if (!ok) rep.upper_hit_failures.push_back(id);
        }
        if (barriers.lower && theta.stops_at(id)) {
            const RegulatedField& l = *barriers.lower;
            ++rep.lower_hits_checked;
            bool ok = true;
            if (src.value[id] <= l.value[id] + tol) ok = ok && std::abs(y.value[id] - l.value[id]) <= tol;
            else ok = ok && std::abs(y.right[id] - l.right[id]) <= tol;
            if (!ok) rep.lower_hit_failures.push_back(id);
        }
    }
    for (NodeId id = 0; id < tree.size(); ++id) {
        if (barriers.lower && (y.value[id] < barriers.lower->value[id] - tol::sandwich ||
                               y.right[id] < barriers.lower->right[id] - tol::sandwich))
            rep.below_lower.push_back(id);
        if (barriers.upper && (y.value[id] > barriers.upper->value[id] + tol::sandwich ||
                               y.right[id] > barriers.upper->right[id] + tol::sandwich))
            rep.above_upper.push_back(id);
    }
    return rep;
}

enum class LocalSide { Lower, Upper, Both };

/// Solution restricted to [τ, σ]. Increments live on owned nodes
/// (τ <= level < σ); Y is defined on active nodes (τ <= level <= σ);
/// at terminal nodes (σ = level) only Y's value at t belongs to the piece.
struct LocalSolution {
    StoppingRule start, end;
    LocalSide side = LocalSide::Both;
    std::vector<std::uint8_t> active, owned, terminal;
    RegulatedField y;
    AdaptedField dk_star, dk_jump, da_star, da_jump;
    EdgeField dm;
    AdaptedField k_cum, a_cum;  // K_t - K_τ and A_t - A_τ at active nodes

    const FiltrationTree& tree() const { return *start.tree(); }
};

namespace detail {

inline LocalSolution local_shell(const StoppingRule& tau, const StoppingRule& sigma) {
    if (!tau.tree() || tau.tree() != sigma.tree()) throw ContractError("local solution: rules live on different trees");
    const FiltrationTree& tree = *tau.tree();
    require_history_tree(tree, "local solution");
    for (NodeId id = 0; id < tree.size(); ++id)
        if (sigma.reached(id) && !tau.reached(id))
            throw ContractError("local solution: sigma < tau on " + describe_path(tree, id));
    LocalSolution s;
    s.start = tau;
    s.end = sigma;
    const std::size_t n = tree.size();
    s.active.assign(n, 0);
    s.owned.assign(n, 0);
    s.terminal.assign(n, 0);
    for (NodeId id = 0; id < n; ++id) {
        const bool sigma_before = id != tree.root() && sigma.reached(tree.parent(id));
        s.active[id] = tau.reached(id) && !sigma_before;
        s.owned[id] = tau.reached(id) && !sigma.reached(id);
        s.terminal[id] = s.active[id] && sigma.reached(id);
    }
    s.y = RegulatedField(AdaptedField(n));
    s.dk_star = s.dk_jump = s.da_star = s.da_jump = AdaptedField(n);
    s.dm = EdgeField(tree.edge_count());
    s.k_cum = s.a_cum = AdaptedField(n);
    return s;
}

inline void accumulate(LocalSolution& s) {
    const FiltrationTree& tree = s.tree();
    for (NodeId id = 0; id < tree.size(); ++id) {
        if (!s.owned[id]) continue;
        if (s.start.stops_at(id)) s.k_cum[id] = s.a_cum[id] = 0.0;
        for (const Edge& c : tree.children(id)) {
            s.k_cum[c.child] = s.k_cum[id] + s.dk_jump[id] + s.dk_star[id];
            s.a_cum[c.child] = s.a_cum[id] + s.da_jump[id] + s.da_star[id];
        }
    }
}

}  // namespace detail

/// Restriction of a global solution to [τ, σ] with K and A re-based to 0 at τ.
inline LocalSolution restrict_solution(const SolutionBundle& b, const StoppingRule& tau, const StoppingRule& sigma) {
    LocalSolution s = detail::local_shell(tau, sigma);
    const FiltrationTree& tree = s.tree();
    require_same_tree(tree, b.y.size(), "restrict_solution");
    for (NodeId id = 0; id < tree.size(); ++id) {
        if (!s.active[id]) continue;
        s.y.value[id] = b.y.value[id];
        s.y.right[id] = s.owned[id] ? b.y.right[id] : b.y.value[id];
        if (!s.owned[id]) continue;
        s.dk_star[id] = b.dk_star[id];
        s.dk_jump[id] = b.dk_jump[id];
        s.da_star[id] = b.da_star[id];
        s.da_jump[id] = b.da_jump[id];
        for (std::size_t e = tree.edge_begin(id); e < tree.edge_end(id); ++e) s.dm[e] = b.dm[e];
    }
    detail::accumulate(s);
    return s;
}

/// The global projection solution restricted to [τ, σ].
inline LocalSolution local_solution(const ProblemInstance& inst, const StoppingRule& tau, const StoppingRule& sigma) {
    return restrict_solution(solve_doubly_reflected(inst), tau, sigma);
}

/// Independent backward solve on [τ, σ] with prescribed values at σ.
/// `side` selects which barriers may push: Lower gives A = 0 and Upper
/// gives K = 0 on the interval.
inline LocalSolution solve_local(const ProblemInstance& inst, const StoppingRule& tau, const StoppingRule& sigma,
                                 const AdaptedField& terminal_values, LocalSide side) {
    require_valid(inst, "solve_local");
    LocalSolution s = detail::local_shell(tau, sigma);
    s.side = side;
    const FiltrationTree& tree = s.tree();
    require_same_tree(tree, terminal_values.size(), "solve_local");
    std::optional<RegulatedField> L = side != LocalSide::Upper ? inst.barriers.lower : std::nullopt;
    std::optional<RegulatedField> U = side != LocalSide::Lower ? inst.barriers.upper : std::nullopt;
    const detail::Scheme scheme{L ? detail::LowerRule::Reflect : detail::LowerRule::None, U.has_value(), 0};
    for (NodeId id = tree.size(); id-- > 0;) {
        if (!s.active[id]) continue;
        if (s.terminal[id]) {
            s.y.value[id] = s.y.right[id] = terminal_values[id];
            continue;
        }
        const std::size_t k = tree.level_of(id);
        const double e = conditional_expectation(tree, s.y.value, id);
        const StepResult c = detail::continuous_step(e, inst.grid.t(k), inst.grid.dt(k), scheme,
                                                     detail::at(L, id, true), detail::at(U, id, true), inst.driver);
        const JumpResult j = detail::jump_step(c.y, true, true, detail::at(L, id, false), detail::at(U, id, false));
        s.y.right[id] = c.y;
        s.y.value[id] = j.y;
        s.dk_star[id] = c.dk_star;
        s.da_star[id] = c.da_star;
        s.dk_jump[id] = j.dk_jump;
        s.da_jump[id] = j.da_jump;
        std::size_t ei = tree.edge_begin(id);
        for (const Edge& ch : tree.children(id)) s.dm[ei++] = s.y.value[ch.child] - e;
    }
    detail::accumulate(s);
    return s;
}

struct LocalCheck {
    double budget = 0.0;
    double sandwich = 0.0;
    double lower_skorokhod = 0.0;  // max over paths of |interval sum|
    double upper_skorokhod = 0.0;
    double k_total = 0.0;          // largest K increment on the interval
    double a_total = 0.0;
};

inline LocalCheck check_local(const LocalSolution& s, const ProblemInstance& inst) {
    const FiltrationTree& tree = s.tree();
    LocalCheck r;
    const auto& L = inst.barriers.lower;
    const auto& U = inst.barriers.upper;
    AdaptedField lo(tree.size()), up(tree.size());
    for (NodeId id = 0; id < tree.size(); ++id) {
        if (!s.active[id]) continue;
        if (L) r.sandwich = std::max(r.sandwich, L->value[id] - s.y.value[id]);
        if (U) r.sandwich = std::max(r.sandwich, s.y.value[id] - U->value[id]);
        if (!s.owned[id]) continue;
        if (L) {
            r.sandwich = std::max(r.sandwich, L->right[id] - s.y.right[id]);
            lo[id] = std::abs((s.y.right[id] - L->right[id]) * s.dk_star[id]) +
                     std::abs((s.y.value[id] - L->value[id]) * s.dk_jump[id]);
        }
        if (U) {
            r.sandwich = std::max(r.sandwich, s.y.right[id] - U->right[id]);
            up[id] = std::abs((U->right[id] - s.y.right[id]) * s.da_star[id]) +
                     std::abs((U->value[id] - s.y.value[id]) * s.da_jump[id]);
        }
        r.k_total = std::max({r.k_total, s.dk_star[id], s.dk_jump[id]});
        r.a_total = std::max({r.a_total, s.da_star[id], s.da_jump[id]});
        const std::size_t k = tree.level_of(id);
        const double drift = inst.driver(inst.grid.t(k), s.y.right[id]) * inst.grid.dt(k);
        std::size_t ei = tree.edge_begin(id);
        for (const Edge& c : tree.children(id)) {
            const double rhs = s.y.value[c.child] + drift + s.dk_star[id] + s.dk_jump[id] - s.da_star[id] -
                               s.da_jump[id] - s.dm[ei++];
            r.budget = std::max(r.budget, std::abs(s.y.value[id] - rhs));
        }
    }
    r.lower_skorokhod = detail::path_extremes(tree, lo).first;
    r.upper_skorokhod = detail::path_extremes(tree, up).first;
    return r;
}

struct StuckDiagnostic {
    NodeId node = no_node;
    std::size_t term = 0;
    double gap = 0.0;  // min(U - L) at the node over t and t+
    std::string path;
};

struct AlternatingResult {
    std::vector<StoppingRule> taus;                // τ_0 = 0, τ_1 hits U, τ_2 hits L, ...
    std::vector<std::size_t> stationarity_index;  // per leaf: first n with τ_n = N
    std::size_t max_index = 0;
    bool stationary = false;
    std::optional<StuckDiagnostic> stuck;
};

/// τ_0 = 0, then alternately the first hit of U and of L after the previous
/// term, each capped at N, until every path has reached N.
inline AlternatingResult alternating_sequence(const RegulatedField& y, const BarrierPair& barriers,
                                              std::shared_ptr<const FiltrationTree> tree,
                                              double tol = tol::hitting) {
    detail::require_history_tree(*tree, "alternating_sequence");
    require_same_tree(*tree, y.size(), "alternating_sequence");
    AlternatingResult res;
    res.taus.push_back(StoppingRule::at_level(tree, 0));
    const std::size_t cap = 2 * tree->levels() + 4;
    while (!res.taus.back().is_terminal()) {
        const std::size_t n = res.taus.size() - 1;
        const StoppingRule& cur = res.taus.back();
        StoppingRule next = n % 2 == 0 ? hitting_time_upper(y, barriers.upper, cur, tol)
                                       : hitting_time_lower(y, barriers.lower, cur, tol);
        res.taus.push_back(std::move(next));
        const std::size_t m = res.taus.size() - 1;
        if (m >= 2) {
            const StoppingRule& a = res.taus[m - 2];
            const StoppingRule& b = res.taus[m];
            for (NodeId id = 0; id < tree->size(); ++id) {
                if (tree->is_leaf(id) || !a.stops_at(id) || !b.stops_at(id)) continue;
                StuckDiagnostic d;
                d.node = id;
                d.term = m;
                d.gap = std::numeric_limits<double>::infinity();
                if (barriers.lower && barriers.upper)
                    d.gap = std::min(barriers.upper->value[id] - barriers.lower->value[id],
                                     barriers.upper->right[id] - barriers.lower->right[id]);
                d.path = describe_path(*tree, id);
                res.stuck = d;
                break;
            }
        }
        if (res.stuck || res.taus.size() > cap) break;
    }
    res.stationary = !res.stuck && res.taus.back().is_terminal();
    const std::size_t N = tree->levels();
    res.stationarity_index.assign(tree->level_size(N), 0);
    std::vector<bool> done(tree->level_size(N), false);
    for (std::size_t n = 0; n < res.taus.size(); ++n) {
        const auto lv = res.taus[n].path_levels();
        for (std::size_t i = 0; i < lv.size(); ++i)
            if (!done[i] && lv[i] == N) {
                done[i] = true;
                res.stationarity_index[i] = n;
            }
    }
    for (std::size_t i = 0; i < done.size(); ++i) {
        if (!done[i]) res.stationary = false;
        res.max_index = std::max(res.max_index, res.stationarity_index[i]);
    }
    return res;
}

/// One-sided local solutions on [τ_n, τ_{n+1}]: even pieces are pushed by L
/// only, odd pieces by U only. Built from the last piece backwards so each
/// piece takes its end values from the pieces after it.
inline std::vector<LocalSolution> alternating_pieces(const ProblemInstance& inst, const AlternatingResult& seq) {
    if (!seq.stationary) throw ContractError("alternating_pieces: sequence is not stationary");
    const FiltrationTree& tree = *inst.tree;
    const std::size_t count = seq.taus.size() - 1;
    std::vector<LocalSolution> pieces(count);
    AdaptedField known(tree.size());
    for (NodeId id = tree.level_begin(tree.levels()); id < tree.size(); ++id) known[id] = inst.xi(id);
    for (std::size_t n = count; n-- > 0;) {
        pieces[n] = solve_local(inst, seq.taus[n], seq.taus[n + 1], known,
                                n % 2 == 0 ? LocalSide::Lower : LocalSide::Upper);
        for (NodeId id = 0; id < tree.size(); ++id)
            if (pieces[n].owned[id]) known[id] = pieces[n].y.value[id];
    }
    return pieces;
}

/// Concatenates local solutions that tile [0, T] into one bundle.
inline SolutionBundle patch_global(const ProblemInstance& inst, const std::vector<LocalSolution>& pieces) {
    const FiltrationTree& tree = *inst.tree;
    detail::require_history_tree(tree, "patch_global");
    std::vector<std::size_t> owner(tree.size(), no_node), cover(tree.size(), 0);
    for (std::size_t p = 0; p < pieces.size(); ++p) {
        if (pieces[p].tree().size() != tree.size()) throw PatchError("patch_global: piece " + std::to_string(p) + " lives on another tree");
        for (NodeId id = 0; id < tree.size(); ++id)
            if (pieces[p].owned[id]) {
                ++cover[id];
                owner[id] = p;
            }
    }
    for (NodeId id = 0; id < tree.size(); ++id) {
        if (tree.is_leaf(id)) continue;
        if (cover[id] != 1)
            throw PatchError("patch_global: " + describe_path(tree, id) + " is covered by " + std::to_string(cover[id]) +
                             " pieces");
    }
    auto global_value = [&](NodeId id) { return tree.is_leaf(id) ? inst.xi(id) : pieces[owner[id]].y.value[id]; };
    for (std::size_t p = 0; p < pieces.size(); ++p) {
        for (NodeId id = 0; id < tree.size(); ++id) {
            if (!pieces[p].terminal[id]) continue;
            const double expect = global_value(id);
            if (std::abs(pieces[p].y.value[id] - expect) > tol::seam) {
                const std::string next = tree.is_leaf(id) ? "the terminal value" : "piece " + std::to_string(owner[id]);
                throw PatchError("patch_global: seam mismatch between piece " + std::to_string(p) + " and " + next +
                                 " at " + describe_path(tree, id));
            }
        }
    }
    SolutionBundle out(inst.tree);
    out.method = Method::Patched;
    for (NodeId id = 0; id < tree.size(); ++id) {
        if (tree.is_leaf(id)) {
            out.y.value[id] = out.y.right[id] = inst.xi(id);
            continue;
        }
        const LocalSolution& s = pieces[owner[id]];
        out.y.value[id] = s.y.value[id];
        out.y.right[id] = s.y.right[id];
        out.dk_star[id] = s.dk_star[id];
        out.dk_jump[id] = s.dk_jump[id];
        out.da_star[id] = s.da_star[id];
        out.da_jump[id] = s.da_jump[id];
        for (std::size_t e = tree.edge_begin(id); e < tree.edge_end(id); ++e) out.dm[e] = s.dm[e];
    }
    return out;
}

/// K_t - A_t at every node of a tree (value before the right jump at t).
inline AdaptedField cumulative_k_minus_a(const SolutionBundle& b) {
    const FiltrationTree& tree = *b.tree;
    detail::require_history_tree(tree, "cumulative_k_minus_a");
    AdaptedField c(tree.size());
    for (NodeId id = 1; id < tree.size(); ++id) {
        const NodeId p = tree.parent(id);
        c[id] = c[p] + (b.dk_star[p] + b.dk_jump[p]) - (b.da_star[p] + b.da_jump[p]);
    }
    return c;
}

/// Largest gap between two bundles' K - A increments, split into the
/// continuous and jump parts.
inline double k_minus_a_distance(const SolutionBundle& a, const SolutionBundle& b) {
    double d = 0.0;
    for (NodeId id = 0; id < a.y.size(); ++id) {
        d = std::max(d, std::abs((a.dk_star[id] - a.da_star[id]) - (b.dk_star[id] - b.da_star[id])));
        d = std::max(d, std::abs((a.dk_jump[id] - a.da_jump[id]) - (b.dk_jump[id] - b.da_jump[id])));
    }
    return d;
}

}  // namespace rbsde
