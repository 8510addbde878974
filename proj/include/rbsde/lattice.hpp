#pragma once

// Finite filtrations: time grids, trees with transition probabilities,
// per-node fields and exact conditional expectation.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rbsde/errors.hpp"
#include "rbsde/tolerances.hpp"

namespace rbsde {

using NodeId = std::size_t;
inline constexpr NodeId no_node = std::numeric_limits<NodeId>::max();

class TimeGrid {
public:
    explicit TimeGrid(std::vector<double> instants) : instants_(std::move(instants)) {
        if (instants_.size() < 2) throw ContractError("TimeGrid: need at least one step");
        if (instants_.front() != 0.0) throw ContractError("TimeGrid: first instant must be 0");
        for (std::size_t k = 0; k + 1 < instants_.size(); ++k) {
            if (!(instants_[k + 1] > instants_[k]) || !std::isfinite(instants_[k + 1]))
                throw ContractError("TimeGrid: instants must be finite and strictly increasing");
        }
    }

    static TimeGrid uniform(double horizon, std::size_t steps) {
        if (steps == 0) throw ContractError("TimeGrid: steps must be >= 1");
        if (!(horizon > 0.0)) throw ContractError("TimeGrid: horizon must be positive");
        std::vector<double> t(steps + 1);
        for (std::size_t k = 0; k <= steps; ++k)
            t[k] = horizon * static_cast<double>(k) / static_cast<double>(steps);
        t.back() = horizon;
        return TimeGrid(std::move(t));
    }

    std::size_t steps() const { return instants_.size() - 1; }
    double t(std::size_t k) const { return instants_.at(k); }
    double dt(std::size_t k) const { return instants_.at(k + 1) - instants_.at(k); }
    double horizon() const { return instants_.back(); }
    double max_dt() const {
        double m = 0.0;
        for (std::size_t k = 0; k < steps(); ++k) m = std::max(m, dt(k));
        return m;
    }
    const std::vector<double>& instants() const { return instants_; }

    bool operator==(const TimeGrid&) const = default;

private:
    std::vector<double> instants_;
};

struct Edge {
    NodeId child;
    double probability;

    bool operator==(const Edge&) const = default;
};

/// One node as handed to the tree builder: children are indices into the
/// next level.
struct LevelNode {
    double state = 0.0;
    std::vector<std::pair<std::size_t, double>> children;
};

/// Finite filtration. Nodes are numbered level by level, so every parent id
/// is smaller than all of its children's ids. Recombining lattices are
/// allowed; `is_tree()` tells whether each node has a unique parent.
class FiltrationTree {
public:
    explicit FiltrationTree(const std::vector<std::vector<LevelNode>>& levels) {
        if (levels.size() < 2) throw ContractError("FiltrationTree: need at least two levels");
        if (levels.front().size() != 1) throw ContractError("FiltrationTree: level 0 must hold exactly the root");
        level_begin_.push_back(0);
        for (const auto& lvl : levels) {
            if (lvl.empty()) throw ContractError("FiltrationTree: empty level");
            level_begin_.push_back(level_begin_.back() + lvl.size());
        }
        const std::size_t total = level_begin_.back();
        level_.resize(total);
        state_.resize(total);
        edge_begin_.assign(total + 1, 0);
        parent_.assign(total, no_node);
        parent_count_.assign(total, 0);

        const std::size_t last = levels.size() - 1;
        for (std::size_t k = 0; k < levels.size(); ++k) {
            for (std::size_t j = 0; j < levels[k].size(); ++j) {
                const NodeId id = level_begin_[k] + j;
                const LevelNode& ln = levels[k][j];
                level_[id] = k;
                state_[id] = ln.state;
                if (!std::isfinite(ln.state)) throw ContractError(where(k, j) + "state is not finite");
                if (k == last) {
                    if (!ln.children.empty()) throw ContractError(where(k, j) + "leaf has children");
                } else if (ln.children.empty()) {
                    throw ContractError(where(k, j) + "non-leaf node has no children");
                }
                double sum = 0.0;
                for (const auto& [idx, p] : ln.children) {
                    if (idx >= levels[k + 1].size()) throw ContractError(where(k, j) + "child index out of range");
                    if (!(p >= 0.0) || !std::isfinite(p)) throw ContractError(where(k, j) + "negative transition probability");
                    const NodeId child = level_begin_[k + 1] + idx;
                    edges_.push_back({child, p});
                    if (parent_count_[child]++ == 0) parent_[child] = id;
                    sum += p;
                }
                if (k != last && std::abs(sum - 1.0) > tol::probability_sum)
                    throw ContractError(where(k, j) + "transition probabilities do not sum to 1");
                edge_begin_[id + 1] = edges_.size();
            }
        }
    }

    /// Number of steps N; leaves sit at level N.
    std::size_t levels() const { return level_begin_.size() - 2; }
    std::size_t size() const { return level_.size(); }
    std::size_t edge_count() const { return edges_.size(); }

    NodeId root() const { return 0; }
    std::size_t level_of(NodeId id) const { return level_[id]; }
    double state(NodeId id) const { return state_[id]; }
    bool is_leaf(NodeId id) const { return level_[id] == levels(); }

    std::size_t level_size(std::size_t k) const { return level_begin_.at(k + 1) - level_begin_.at(k); }
    NodeId level_begin(std::size_t k) const { return level_begin_.at(k); }
    NodeId level_end(std::size_t k) const { return level_begin_.at(k + 1); }
    NodeId node(std::size_t k, std::size_t j) const {
        if (j >= level_size(k)) throw ContractError("FiltrationTree: node index out of range");
        return level_begin_[k] + j;
    }
    std::size_t index_in_level(NodeId id) const { return id - level_begin_[level_[id]]; }

    std::span<const Edge> children(NodeId id) const {
        return {edges_.data() + edge_begin_[id], edge_begin_[id + 1] - edge_begin_[id]};
    }
    std::size_t edge_begin(NodeId id) const { return edge_begin_[id]; }
    std::size_t edge_end(NodeId id) const { return edge_begin_[id + 1]; }

    /// First parent found during construction; unique when is_tree().
    NodeId parent(NodeId id) const { return parent_[id]; }
    std::size_t parent_count(NodeId id) const { return parent_count_[id]; }
    bool is_tree() const {
        for (NodeId id = 1; id < size(); ++id)
            if (parent_count_[id] != 1) return false;
        return true;
    }

    bool operator==(const FiltrationTree& o) const {
        return level_begin_ == o.level_begin_ && state_ == o.state_ && edges_ == o.edges_ &&
               edge_begin_ == o.edge_begin_;
    }

private:
    static std::string where(std::size_t k, std::size_t j) {
        return "FiltrationTree: node (" + std::to_string(k) + ", " + std::to_string(j) + "): ";
    }

    std::vector<NodeId> level_begin_;
    std::vector<std::size_t> level_;
    std::vector<double> state_;
    std::vector<Edge> edges_;
    std::vector<std::size_t> edge_begin_;
    std::vector<NodeId> parent_;
    std::vector<std::size_t> parent_count_;
};

/// One real value per tree node.
class AdaptedField {
public:
    AdaptedField() = default;
    explicit AdaptedField(std::size_t n, double fill = 0.0) : v_(n, fill) {}
    explicit AdaptedField(std::vector<double> v) : v_(std::move(v)) {}

    template <class F>
    static AdaptedField from(const FiltrationTree& tree, F&& fn) {
        AdaptedField out(tree.size());
        for (NodeId id = 0; id < tree.size(); ++id) out.v_[id] = fn(id);
        return out;
    }

    double operator[](NodeId id) const { return v_[id]; }
    double& operator[](NodeId id) { return v_[id]; }
    std::size_t size() const { return v_.size(); }
    const std::vector<double>& values() const { return v_; }

    AdaptedField negated() const {
        AdaptedField out(*this);
        for (double& x : out.v_) x = -x;
        return out;
    }

    bool operator==(const AdaptedField&) const = default;

private:
    std::vector<double> v_;
};

/// One real value per tree edge (parent -> child), indexed like the tree's
/// flattened edge list. Martingale increments live here because on a
/// recombining lattice a node's increment depends on where it was entered.
class EdgeField {
public:
    EdgeField() = default;
    explicit EdgeField(std::size_t n, double fill = 0.0) : v_(n, fill) {}

    double operator[](std::size_t e) const { return v_[e]; }
    double& operator[](std::size_t e) { return v_[e]; }
    std::size_t size() const { return v_.size(); }
    const std::vector<double>& values() const { return v_; }

    EdgeField negated() const {
        EdgeField out(*this);
        for (double& x : out.v_) x = -x;
        return out;
    }

    bool operator==(const EdgeField&) const = default;

private:
    std::vector<double> v_;
};

inline FiltrationTree build_binomial(std::size_t steps, double x0, double up, double down, double p_up) {
    if (steps == 0) throw ContractError("build_binomial: steps must be >= 1");
    if (!(p_up > 0.0 && p_up < 1.0)) throw ContractError("build_binomial: p_up must lie in (0, 1)");
    if (!(up > down)) throw ContractError("build_binomial: need up > down");
    std::vector<std::vector<LevelNode>> levels(steps + 1);
    for (std::size_t k = 0; k <= steps; ++k) {
        levels[k].resize(k + 1);
        for (std::size_t j = 0; j <= k; ++j) {
            LevelNode& n = levels[k][j];
            n.state = x0 + static_cast<double>(j) * up + static_cast<double>(k - j) * down;
            if (k < steps) n.children = {{j + 1, p_up}, {j, 1.0 - p_up}};
        }
    }
    return FiltrationTree(levels);
}

inline void require_same_tree(const FiltrationTree& tree, std::size_t field_size, const char* who) {
    if (field_size != tree.size())
        throw ContractError(std::string(who) + ": field size does not match tree");
}

/// E[field at level k+1 | node at level k].
inline double conditional_expectation(const FiltrationTree& tree, const AdaptedField& field, NodeId node) {
    require_same_tree(tree, field.size(), "conditional_expectation");
    if (tree.is_leaf(node)) throw ContractError("conditional_expectation: node is a leaf");
    double e = 0.0;
    for (const Edge& c : tree.children(node)) e += c.probability * field[c.child];
    return e;
}

/// Increment Y(child) - E[Y | parent] on every edge.
inline EdgeField martingale_increments(const FiltrationTree& tree, const AdaptedField& y) {
    require_same_tree(tree, y.size(), "martingale_increments");
    EdgeField dm(tree.edge_count());
    for (NodeId id = 0; id < tree.size(); ++id) {
        if (tree.is_leaf(id)) continue;
        const double e = conditional_expectation(tree, y, id);
        std::size_t ei = tree.edge_begin(id);
        for (const Edge& c : tree.children(id)) dm[ei++] = y[c.child] - e;
    }
    return dm;
}

/// Unconditional probability of reaching each node.
inline AdaptedField node_probabilities(const FiltrationTree& tree) {
    AdaptedField p(tree.size());
    p[tree.root()] = 1.0;
    for (NodeId id = 0; id < tree.size(); ++id)
        for (const Edge& c : tree.children(id)) p[c.child] += p[id] * c.probability;
    return p;
}

struct PathIndex {
    std::vector<std::uint32_t> choices;  // child slot taken at each level
    std::vector<NodeId> nodes;           // root ... leaf, length N + 1
    double probability = 1.0;
};

/// Visits every root-to-leaf path in lexicographic child order. Refuses
/// trees deeper than `max_levels`.
template <class Visitor>
void for_each_path(const FiltrationTree& tree, Visitor&& visit,
                   std::size_t max_levels = tol::path_enumeration_levels) {
    if (tree.levels() > max_levels)
        throw EnumerationRefused("path enumeration refused: " + std::to_string(tree.levels()) +
                                 " levels exceeds cap of " + std::to_string(max_levels));
    PathIndex path;
    path.nodes.push_back(tree.root());
    std::vector<double> prob{1.0};
    std::function<void(NodeId)> rec = [&](NodeId id) {
        if (tree.is_leaf(id)) {
            path.probability = prob.back();
            visit(static_cast<const PathIndex&>(path));
            return;
        }
        std::uint32_t slot = 0;
        for (const Edge& c : tree.children(id)) {
            path.choices.push_back(slot++);
            path.nodes.push_back(c.child);
            prob.push_back(prob.back() * c.probability);
            rec(c.child);
            prob.pop_back();
            path.nodes.pop_back();
            path.choices.pop_back();
        }
    };
    rec(tree.root());
}

inline std::vector<PathIndex> enumerate_paths(const FiltrationTree& tree,
                                              std::size_t max_levels = tol::path_enumeration_levels) {
    std::vector<PathIndex> out;
    for_each_path(tree, [&](const PathIndex& p) { out.push_back(p); }, max_levels);
    return out;
}

inline double sup_distance(const AdaptedField& a, const AdaptedField& b) {
    if (a.size() != b.size()) throw ContractError("sup_distance: fields live on different trees");
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
}

/// History (non-recombining) expansion of a lattice: one node per distinct
/// root-to-node path. `origin[h]` is the lattice node behind history node h.
struct HistoryTree {
    FiltrationTree tree;
    std::vector<NodeId> origin;
};

inline HistoryTree expand_history(const FiltrationTree& lattice,
                                  std::size_t max_levels = tol::path_enumeration_levels) {
    if (lattice.levels() > max_levels)
        throw EnumerationRefused("history expansion refused: " + std::to_string(lattice.levels()) +
                                 " levels exceeds cap of " + std::to_string(max_levels));
    std::vector<std::vector<LevelNode>> levels(lattice.levels() + 1);
    std::vector<std::vector<NodeId>> origin(lattice.levels() + 1);
    levels[0].push_back({lattice.state(lattice.root()), {}});
    origin[0].push_back(lattice.root());
    for (std::size_t k = 0; k < lattice.levels(); ++k) {
        for (std::size_t j = 0; j < levels[k].size(); ++j) {
            const NodeId src = origin[k][j];
            for (const Edge& c : lattice.children(src)) {
                levels[k][j].children.push_back({levels[k + 1].size(), c.probability});
                levels[k + 1].push_back({lattice.state(c.child), {}});
                origin[k + 1].push_back(c.child);
            }
        }
    }
    HistoryTree out{FiltrationTree(levels), {}};
    for (const auto& o : origin) out.origin.insert(out.origin.end(), o.begin(), o.end());
    return out;
}

/// Pull a lattice field back onto its history expansion.
inline AdaptedField pull_back(const HistoryTree& h, const AdaptedField& f) {
    AdaptedField out(h.origin.size());
    for (NodeId id = 0; id < h.origin.size(); ++id) out[id] = f[h.origin[id]];
    return out;
}

}  // namespace rbsde
