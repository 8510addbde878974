#pragma once

// Independent oracles (exhaustive Dynkin game), comparison and uniqueness
// probes, and a seeded generator of random instances.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "rbsde/driver.hpp"
#include "rbsde/engine.hpp"
#include "rbsde/errors.hpp"
#include "rbsde/lattice.hpp"
#include "rbsde/reflected.hpp"
#include "rbsde/regulated.hpp"
#include "rbsde/tolerances.hpp"

namespace rbsde {

/// mt19937_64 with a fixed double conversion, so streams are identical
/// across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
    double uniform(double a, double b) { return a + (b - a) * uniform(); }
    bool bernoulli(double p) { return uniform() < p; }
    std::uint64_t next() { return eng_(); }

private:
    std::mt19937_64 eng_;
};

enum class TreeShape { Binomial, RandomLattice, Sparse };
enum class BarrierFamily { Constant, AffineState, Tabulated };

struct InstanceRecipe {
    std::uint64_t seed = 1;
    std::size_t steps = 10;
    double horizon = 1.0;
    TreeShape shape = TreeShape::RandomLattice;
    double branch_probability = 0.5;  // sparse trees: chance of two children
    DriverFamily driver = DriverFamily::Linear;
    double mu = 0.5;
    BarrierFamily barriers = BarrierFamily::Tabulated;
    double gap = 0.1;    // L + gap <= U at t and t+, also crosswise
    double range = 1.0;  // spread of barrier levels
    double jump_probability = 0.3;
    bool lower = true;
    bool upper = true;
};

namespace detail {

inline std::shared_ptr<const FiltrationTree> random_tree(const InstanceRecipe& r, Rng& rng) {
    const double s = rng.uniform(0.1, 0.3);
    std::vector<std::vector<LevelNode>> levels(r.steps + 1);
    if (r.shape == TreeShape::Binomial) {
        const double p = rng.uniform(0.3, 0.7);
        return std::make_shared<const FiltrationTree>(build_binomial(r.steps, 0.0, s, -s, p));
    }
    if (r.shape == TreeShape::RandomLattice) {
        for (std::size_t k = 0; k <= r.steps; ++k) {
            levels[k].resize(k + 1);
            for (std::size_t j = 0; j <= k; ++j) {
                LevelNode& n = levels[k][j];
                n.state = s * (2.0 * static_cast<double>(j) - static_cast<double>(k));
                if (k < r.steps) {
                    const double p = rng.uniform(0.2, 0.8);
                    n.children = {{j + 1, p}, {j, 1.0 - p}};
                }
            }
        }
        return std::make_shared<const FiltrationTree>(levels);
    }
    levels[0].push_back({0.0, {}});
    for (std::size_t k = 0; k < r.steps; ++k) {
        for (std::size_t j = 0; j < levels[k].size(); ++j) {
            const double x = levels[k][j].state;
            if (rng.bernoulli(r.branch_probability)) {
                const double p = rng.uniform(0.2, 0.8);
                levels[k][j].children = {{levels[k + 1].size(), p}, {levels[k + 1].size() + 1, 1.0 - p}};
                levels[k + 1].push_back({x + s, {}});
                levels[k + 1].push_back({x - s, {}});
            } else {
                levels[k][j].children = {{levels[k + 1].size(), 1.0}};
                levels[k + 1].push_back({x, {}});
            }
        }
    }
    return std::make_shared<const FiltrationTree>(levels);
}

inline Driver random_driver(const InstanceRecipe& r, Rng& rng) {
    const double a = rng.uniform(-1.0, 1.0);
    const double b = rng.uniform(-r.mu, r.mu);
    const double c = rng.uniform(-0.5, 0.5);
    switch (r.driver) {
        case DriverFamily::Zero: return Driver::zero();
        case DriverFamily::Constant: return Driver::constant(a);
        case DriverFamily::Linear: return Driver::linear(a, b, c, r.mu);
        case DriverFamily::Sine: return Driver::sine(a, b, r.mu);
        case DriverFamily::Custom: break;
    }
    throw GenerationError("random_instance: custom drivers cannot be generated");
}

}  // namespace detail

inline ProblemInstance random_instance(const InstanceRecipe& r) {
    if (r.steps == 0) throw GenerationError("random_instance: steps must be >= 1");
    if (!(r.gap >= 0.0)) throw GenerationError("random_instance: gap floor must be >= 0");
    if (!(r.range > 0.0)) throw GenerationError("random_instance: barrier range must be positive");
    if (r.gap > r.range)
        throw GenerationError("random_instance: gap floor " + std::to_string(r.gap) + " exceeds barrier range " +
                              std::to_string(r.range));
    if (!(r.mu >= 0.0) || !(r.mu * r.horizon / static_cast<double>(r.steps) < tol::stability_bound))
        throw GenerationError("random_instance: mu * dt must be below 1/2");
    Rng rng(r.seed);
    ProblemInstance inst;
    inst.tree = detail::random_tree(r, rng);
    const FiltrationTree& tree = *inst.tree;
    inst.grid = TimeGrid::uniform(r.horizon, r.steps);
    inst.driver = detail::random_driver(r, rng);

    const std::size_t n = tree.size();
    const double half = r.gap / 2.0;
    const double w = (r.range - r.gap) / 2.0;
    AdaptedField lv(n), lr(n), uv(n), ur(n);
    const double c0 = rng.uniform(-r.range / 4.0, r.range / 4.0);
    const double slope = rng.uniform(-1.0, 1.0);
    const double dl0 = rng.uniform(0.0, w), du0 = rng.uniform(0.0, w);
    for (NodeId id = 0; id < n; ++id) {
        const double x = tree.state(id);
        if (r.barriers == BarrierFamily::Constant) {
            lv[id] = lr[id] = c0 - half - dl0;
            uv[id] = ur[id] = c0 + half + du0;
            continue;
        }
        if (r.barriers == BarrierFamily::AffineState) {
            lv[id] = lr[id] = c0 + slope * x - half - dl0;
            uv[id] = ur[id] = c0 + slope * x + half + du0;
            continue;
        }
        const double c = rng.uniform(-r.range / 2.0, r.range / 2.0);
        const bool leaf = tree.is_leaf(id);
        // Lower side: both t and t+ values sit at or below c - half.
        const double la = c - half - rng.uniform(0.0, w);
        if (!leaf && rng.bernoulli(r.jump_probability)) {
            const double j = rng.uniform(0.05, 0.5);
            if (rng.bernoulli(0.7)) { lv[id] = la; lr[id] = la - j; }
            else { lv[id] = la - j; lr[id] = la; }
        } else {
            lv[id] = lr[id] = la;
        }
        const double ua = c + half + rng.uniform(0.0, w);
        if (!leaf && rng.bernoulli(r.jump_probability)) {
            const double j = rng.uniform(0.05, 0.5);
            if (rng.bernoulli(0.7)) { uv[id] = ua; ur[id] = ua + j; }
            else { uv[id] = ua + j; ur[id] = ua; }
        } else {
            uv[id] = ur[id] = ua;
        }
    }
    const std::size_t N = tree.levels();
    inst.terminal = AdaptedField(tree.level_size(N));
    for (NodeId id = tree.level_begin(N); id < n; ++id) {
        const double lo = r.lower ? lv[id] : uv[id] - r.range;
        const double hi = r.upper ? uv[id] : lv[id] + r.range;
        inst.terminal[id - tree.level_begin(N)] = rng.uniform(lo, hi);
    }
    if (r.lower) inst.barriers.lower = RegulatedField(std::move(lv), std::move(lr));
    if (r.upper) inst.barriers.upper = RegulatedField(std::move(uv), std::move(ur));
    return inst;
}

/// Instance invariant under x -> -x combined with negation: symmetric
/// binomial walk, L(x) = -U(-x), ξ odd in the state, f odd in y. Its
/// negation dual is its own mirror image.
inline ProblemInstance symmetric_instance(std::uint64_t seed, std::size_t steps, double gap = 0.1,
                                          double range = 1.0, double mu = 0.5, bool sine = false) {
    if (gap > range) throw GenerationError("symmetric_instance: gap exceeds range");
    Rng rng(seed);
    ProblemInstance inst;
    const double s = rng.uniform(0.1, 0.3);
    inst.tree = std::make_shared<const FiltrationTree>(build_binomial(steps, 0.0, s, -s, 0.5));
    const FiltrationTree& tree = *inst.tree;
    inst.grid = TimeGrid::uniform(1.0, steps);
    const double b = rng.uniform(-mu, mu);
    inst.driver = sine ? Driver::sine(0.0, b, mu) : Driver::linear(0.0, b, 0.0, mu);

    const std::size_t n = tree.size();
    const double half = gap / 2.0;
    const double w = (range - gap) / 2.0;
    auto mirror = [&](NodeId id) {
        const std::size_t k = tree.level_of(id);
        return tree.node(k, k - tree.index_in_level(id));
    };
    std::vector<double> c(n, 0.0), dv(n), dr(n);
    for (NodeId id = 0; id < n; ++id) {
        const std::size_t k = tree.level_of(id), j = tree.index_in_level(id);
        if (2 * j > k) c[id] = rng.uniform(-range / 2.0, range / 2.0);
        dv[id] = rng.uniform(0.0, w);
        dr[id] = dv[id];
        if (!tree.is_leaf(id) && rng.bernoulli(0.3)) dr[id] = std::max(0.0, dv[id] + rng.uniform(-0.3, 0.3));
    }
    for (NodeId id = 0; id < n; ++id) {
        const std::size_t k = tree.level_of(id), j = tree.index_in_level(id);
        if (2 * j < k) c[id] = -c[mirror(id)];
    }
    AdaptedField lv(n), lr(n), uv(n), ur(n);
    for (NodeId id = 0; id < n; ++id) {
        const NodeId m = mirror(id);
        uv[id] = c[id] + half + dv[id];
        ur[id] = c[id] + half + dr[id];
        lv[id] = c[id] - half - dv[m];
        lr[id] = c[id] - half - dr[m];
    }
    const std::size_t N = tree.levels();
    inst.terminal = AdaptedField(tree.level_size(N));
    for (NodeId id = tree.level_begin(N); id < n; ++id) {
        const std::size_t j = tree.index_in_level(id);
        if (2 * j > N) inst.terminal[j] = rng.uniform(lv[id], uv[id]);
    }
    for (NodeId id = tree.level_begin(N); id < n; ++id) {
        const std::size_t j = tree.index_in_level(id);
        if (2 * j < N) inst.terminal[j] = -inst.terminal[N - j];
    }
    inst.barriers.lower = RegulatedField(std::move(lv), std::move(lr));
    inst.barriers.upper = RegulatedField(std::move(uv), std::move(ur));
    return inst;
}

/// Backward game recursion V+ = min(U+, max(L+, E[V'] + f dt)),
/// V = min(U, max(L, V+)) for drivers that do not depend on y.
inline RegulatedField dynkin_value_fast(const ProblemInstance& inst) {
    if (!inst.driver.y_independent()) throw UnsupportedInput("dynkin_value_fast: driver depends on y");
    const FiltrationTree& tree = *inst.tree;
    const std::size_t N = tree.levels();
    RegulatedField v(AdaptedField(tree.size()));
    const auto& L = inst.barriers.lower;
    const auto& U = inst.barriers.upper;
    for (NodeId id = tree.level_begin(N); id < tree.size(); ++id) v.value[id] = v.right[id] = inst.xi(id);
    for (std::size_t k = N; k-- > 0;) {
        const double t = inst.grid.t(k), dt = inst.grid.dt(k);
        for (NodeId id = tree.level_begin(k); id < tree.level_end(k); ++id) {
            double e = 0.0;
            for (const Edge& c : tree.children(id)) e += c.probability * v.value[c.child];
            double r = e + inst.driver(t, e) * dt;
            if (L) r = std::max(L->right[id], r);
            if (U) r = std::min(U->right[id], r);
            double x = r;
            if (L) x = std::max(L->value[id], x);
            if (U) x = std::min(U->value[id], x);
            v.right[id] = r;
            v.value[id] = x;
        }
    }
    return v;
}

struct GameValue {
    double lower_value = 0.0;  // sup over rho of inf over nu
    double upper_value = 0.0;  // inf over nu of sup over rho
    std::size_t lower_strategies = 0;
    std::size_t upper_strategies = 0;
};

namespace detail {

struct GameNode {
    NodeId origin;
    std::size_t level;
    std::vector<std::pair<std::size_t, double>> children;
};

// Strategy entries: 0 continue, 1 stop at t, 2 stop at t+.
using Strategy = std::vector<std::uint8_t>;

inline double strategy_count(const std::vector<GameNode>& g, std::size_t i, bool can_stop) {
    if (g[i].children.empty()) return 1.0;
    double prod = 1.0;
    for (const auto& c : g[i].children) prod *= strategy_count(g, c.first, can_stop);
    return prod + (can_stop ? 2.0 : 0.0);
}

inline std::vector<Strategy> enumerate_strategies(const std::vector<GameNode>& g, std::size_t i, bool can_stop) {
    std::vector<Strategy> out;
    if (g[i].children.empty()) {
        out.emplace_back(g.size(), 0);
        return out;
    }
    std::vector<Strategy> combos{Strategy(g.size(), 0)};
    for (const auto& c : g[i].children) {
        const auto sub = enumerate_strategies(g, c.first, can_stop);
        std::vector<Strategy> next;
        next.reserve(combos.size() * sub.size());
        for (const auto& a : combos)
            for (const auto& b : sub) {
                Strategy s = a;
                for (std::size_t k = 0; k < s.size(); ++k) s[k] |= b[k];
                next.push_back(std::move(s));
            }
        combos = std::move(next);
    }
    if (can_stop) {
        for (std::uint8_t opt : {std::uint8_t{1}, std::uint8_t{2}}) {
            Strategy s(g.size(), 0);
            s[i] = opt;
            out.push_back(std::move(s));
        }
    }
    for (auto& s : combos) out.push_back(std::move(s));
    return out;
}

}  // namespace detail

/// Value of the stopping game started at `node`, by enumerating every pair
/// of adapted stopping strategies on the history tree below it. Each
/// player may stop at t or at t+; the L-player wins ties.
inline GameValue dynkin_value_bruteforce(const ProblemInstance& inst, NodeId node,
                                         std::size_t max_strategies = 5000, std::size_t max_levels = 7) {
    if (!inst.driver.y_independent()) throw UnsupportedInput("dynkin_value_bruteforce: driver depends on y");
    require_valid(inst, "dynkin_value_bruteforce");
    const FiltrationTree& tree = *inst.tree;
    const std::size_t N = tree.levels();
    if (N - tree.level_of(node) > max_levels)
        throw EnumerationRefused("dynkin_value_bruteforce: more than " + std::to_string(max_levels) +
                                 " levels below the node; use dynkin_value_fast");
    std::vector<detail::GameNode> g;
    g.push_back({node, tree.level_of(node), {}});
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (g[i].level == N) continue;
        for (const Edge& c : tree.children(g[i].origin)) {
            g[i].children.push_back({g.size(), c.probability});
            g.push_back({c.child, g[i].level + 1, {}});
        }
    }
    const auto& L = inst.barriers.lower;
    const auto& U = inst.barriers.upper;
    const double cl = detail::strategy_count(g, 0, L.has_value());
    const double cu = detail::strategy_count(g, 0, U.has_value());
    if (cl > static_cast<double>(max_strategies) || cu > static_cast<double>(max_strategies))
        throw EnumerationRefused("dynkin_value_bruteforce: " + std::to_string(std::max(cl, cu)) +
                                 " strategies exceed the cap of " + std::to_string(max_strategies) +
                                 "; use dynkin_value_fast");
    const auto rho = detail::enumerate_strategies(g, 0, L.has_value());
    const auto nu = detail::enumerate_strategies(g, 0, U.has_value());

    std::vector<double> val(g.size());
    auto payoff = [&](const detail::Strategy& r, const detail::Strategy& v) {
        for (std::size_t i = g.size(); i-- > 0;) {
            const detail::GameNode& gn = g[i];
            const NodeId id = gn.origin;
            if (gn.children.empty()) {
                val[i] = inst.xi(id);
            } else if (r[i] == 1) {
                val[i] = L->value[id];
            } else if (v[i] == 1) {
                val[i] = U->value[id];
            } else if (r[i] == 2) {
                val[i] = L->right[id];
            } else if (v[i] == 2) {
                val[i] = U->right[id];
            } else {
                double e = 0.0;
                for (const auto& c : gn.children) e += c.second * val[c.first];
                const double t = inst.grid.t(gn.level);
                val[i] = e + inst.driver(t, e) * inst.grid.dt(gn.level);
            }
        }
        return val[0];
    };
    std::vector<double> matrix(rho.size() * nu.size());
    for (std::size_t a = 0; a < rho.size(); ++a)
        for (std::size_t b = 0; b < nu.size(); ++b) matrix[a * nu.size() + b] = payoff(rho[a], nu[b]);

    GameValue gv;
    gv.lower_strategies = rho.size();
    gv.upper_strategies = nu.size();
    gv.lower_value = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < rho.size(); ++a) {
        double m = std::numeric_limits<double>::infinity();
        for (std::size_t b = 0; b < nu.size(); ++b) m = std::min(m, matrix[a * nu.size() + b]);
        gv.lower_value = std::max(gv.lower_value, m);
    }
    gv.upper_value = std::numeric_limits<double>::infinity();
    for (std::size_t b = 0; b < nu.size(); ++b) {
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < rho.size(); ++a) m = std::max(m, matrix[a * nu.size() + b]);
        gv.upper_value = std::min(gv.upper_value, m);
    }
    return gv;
}

/// Number of strategies per player below `node` (saturating double).
inline double game_strategy_count(const ProblemInstance& inst, NodeId node) {
    const FiltrationTree& tree = *inst.tree;
    std::vector<double> s(tree.size(), 1.0);
    for (NodeId id = tree.size(); id-- > 0;) {
        if (tree.is_leaf(id)) continue;
        double prod = 1.0;
        for (const Edge& c : tree.children(id)) prod *= s[c.child];
        s[id] = prod + 2.0;
    }
    return s[node];
}

struct ComparisonReport {
    bool precondition_ok = true;
    std::string violated_datum;  // which ordering failed, if any
    NodeId node = no_node;
    double max_violation = 0.0;  // max of Y - Y' over nodes (t and t+)
    NodeId violation_node = no_node;
    bool ok = true;  // precondition holds and Y <= Y' within tolerance
};

struct ComparisonOptions {
    Method method = Method::Projection;
    std::size_t penalty_level = 1024;
    double tolerance = tol::comparison;
};

/// Checks ξ <= ξ', L <= L', U <= U', f <= f' first, then solves both and
/// looks for Y > Y'.
inline ComparisonReport comparison_check(const ProblemInstance& a, const ProblemInstance& b,
                                         const ComparisonOptions& opt = {}) {
    ComparisonReport rep;
    auto refuse = [&](std::string datum, NodeId node) {
        rep.precondition_ok = false;
        rep.ok = false;
        rep.violated_datum = std::move(datum);
        rep.node = node;
        return rep;
    };
    if (!(*a.tree == *b.tree)) return refuse("tree", no_node);
    if (!(a.grid == b.grid)) return refuse("grid", no_node);
    const FiltrationTree& tree = *a.tree;
    for (std::size_t i = 0; i < a.terminal.size(); ++i)
        if (a.terminal[i] > b.terminal[i]) return refuse("terminal", tree.level_begin(tree.levels()) + i);
    const auto& La = a.barriers.lower;
    const auto& Lb = b.barriers.lower;
    if (La) {
        if (!Lb) return refuse("lower barrier", no_node);
        for (NodeId id = 0; id < tree.size(); ++id)
            if (La->value[id] > Lb->value[id] || La->right[id] > Lb->right[id]) return refuse("lower barrier", id);
    }
    const auto& Ua = a.barriers.upper;
    const auto& Ub = b.barriers.upper;
    if (Ub) {
        if (!Ua) return refuse("upper barrier", no_node);
        for (NodeId id = 0; id < tree.size(); ++id)
            if (Ua->value[id] > Ub->value[id] || Ua->right[id] > Ub->right[id]) return refuse("upper barrier", id);
    }
    // Drivers are compared on a grid of y values covering the data.
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    auto widen = [&](double x) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    };
    for (const ProblemInstance* p : {&a, &b}) {
        for (double x : p->terminal.values()) widen(x);
        for (const auto* bar : {&p->barriers.lower, &p->barriers.upper})
            if (*bar)
                for (NodeId id = 0; id < tree.size(); ++id) {
                    widen((*bar)->value[id]);
                    widen((*bar)->right[id]);
                }
    }
    lo -= 1.0;
    hi += 1.0;
    for (std::size_t k = 0; k < a.grid.steps(); ++k) {
        const double t = a.grid.t(k);
        for (int i = 0; i <= 64; ++i) {
            const double y = lo + (hi - lo) * i / 64.0;
            if (a.driver(t, y) > b.driver(t, y)) return refuse("driver", tree.level_begin(k));
        }
    }

    auto solve = [&](const ProblemInstance& p) {
        switch (opt.method) {
            case Method::IncreasingPenalization:
                return solve_penalized(p, opt.penalty_level, PenalizationMode::LowerPenaltyUpperReflect).bundle;
            case Method::DecreasingPenalization:
                return solve_penalized(p, opt.penalty_level, PenalizationMode::UpperPenaltyLowerReflect).bundle;
            default: return solve_doubly_reflected(p);
        }
    };
    const SolutionBundle ya = solve(a);
    const SolutionBundle yb = solve(b);
    rep.max_violation = -std::numeric_limits<double>::infinity();
    for (NodeId id = 0; id < tree.size(); ++id) {
        const double d = std::max(ya.y.value[id] - yb.y.value[id], ya.y.right[id] - yb.y.right[id]);
        if (d > rep.max_violation) {
            rep.max_violation = d;
            rep.violation_node = id;
        }
    }
    rep.ok = rep.max_violation <= opt.tolerance;
    return rep;
}

struct BundleDistance {
    double y = 0.0;
    double k = 0.0;
    double a = 0.0;
    double k_minus_a = 0.0;
};

inline BundleDistance bundle_distance(const SolutionBundle& p, const SolutionBundle& q) {
    BundleDistance d;
    d.y = sup_distance(p.y, q.y);
    for (NodeId id = 0; id < p.y.size(); ++id) {
        d.k = std::max({d.k, std::abs(p.dk_star[id] - q.dk_star[id]), std::abs(p.dk_jump[id] - q.dk_jump[id])});
        d.a = std::max({d.a, std::abs(p.da_star[id] - q.da_star[id]), std::abs(p.da_jump[id] - q.da_jump[id])});
        d.k_minus_a = std::max({d.k_minus_a,
                                std::abs((p.dk_star[id] - p.da_star[id]) - (q.dk_star[id] - q.da_star[id])),
                                std::abs((p.dk_jump[id] - p.da_jump[id]) - (q.dk_jump[id] - q.da_jump[id]))});
    }
    return d;
}

struct UniquenessReport {
    bool separated = false;
    bool increasing_converged = false;
    bool decreasing_converged = false;
    BundleDistance projection_vs_increasing;
    BundleDistance projection_vs_decreasing;
    BundleDistance increasing_vs_decreasing;
    double tolerance = 0.0;
    bool ok = false;
};

/// Solves by projection and by both penalization sweeps and compares the
/// three bundles. Without strict separation only Y and K - A must agree.
inline UniquenessReport uniqueness_probe(const ProblemInstance& inst, const SweepOptions& opt = {}) {
    UniquenessReport rep;
    rep.separated = check_separation(inst.barriers).satisfied;
    rep.tolerance = 2.0 * opt.epsilon;
    const SolutionBundle proj = solve_doubly_reflected(inst);
    const SweepResult inc = penalization_sweep(inst, PenalizationMode::LowerPenaltyUpperReflect, opt);
    const SweepResult dec = penalization_sweep(inst, PenalizationMode::UpperPenaltyLowerReflect, opt);
    rep.increasing_converged = inc.converged;
    rep.decreasing_converged = dec.converged;
    rep.projection_vs_increasing = bundle_distance(proj, inc.last.bundle);
    rep.projection_vs_decreasing = bundle_distance(proj, dec.last.bundle);
    rep.increasing_vs_decreasing = bundle_distance(inc.last.bundle, dec.last.bundle);
    rep.ok = inc.converged && dec.converged;
    for (const BundleDistance* d :
         {&rep.projection_vs_increasing, &rep.projection_vs_decreasing, &rep.increasing_vs_decreasing}) {
        rep.ok = rep.ok && d->y <= rep.tolerance && d->k_minus_a <= rep.tolerance;
        if (rep.separated) rep.ok = rep.ok && d->k <= rep.tolerance && d->a <= rep.tolerance;
    }
    return rep;
}

}  // namespace rbsde
