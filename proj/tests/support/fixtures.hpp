// Small instance builders shared by the tests.
#pragma once

#include <algorithm>
#include <memory>
#include <vector>

#include "rbsde/rbsde.hpp"

namespace fixture {

using namespace rbsde;

inline std::shared_ptr<const FiltrationTree> binomial(std::size_t steps, double step = 1.0, double p = 0.5,
                                                      double x0 = 0.0) {
    return std::make_shared<const FiltrationTree>(build_binomial(steps, x0, step, -step, p));
}

/// Single path of `steps` levels.
inline std::shared_ptr<const FiltrationTree> chain(std::size_t steps) {
    std::vector<std::vector<LevelNode>> lv(steps + 1);
    for (std::size_t k = 0; k <= steps; ++k) {
        lv[k] = {{static_cast<double>(k), {}}};
        if (k < steps) lv[k][0].children = {{0, 1.0}};
    }
    return std::make_shared<const FiltrationTree>(lv);
}

template <class F>
AdaptedField leaf_values(const FiltrationTree& tree, F&& fn) {
    const std::size_t N = tree.levels();
    AdaptedField xi(tree.level_size(N));
    for (std::size_t i = 0; i < tree.level_size(N); ++i) xi[i] = fn(tree.state(tree.node(N, i)));
    return xi;
}

inline RegulatedField constant(const FiltrationTree& tree, double c) {
    return RegulatedField(AdaptedField(tree.size(), c));
}

template <class F>
RegulatedField by_state(const FiltrationTree& tree, F&& fn) {
    return RegulatedField(AdaptedField::from(tree, [&](NodeId id) { return fn(tree.state(id)); }));
}

inline ProblemInstance instance(std::shared_ptr<const FiltrationTree> tree, AdaptedField xi,
                                Driver f = Driver::zero(), std::optional<RegulatedField> L = std::nullopt,
                                std::optional<RegulatedField> U = std::nullopt, double horizon = 1.0) {
    ProblemInstance inst;
    inst.grid = TimeGrid::uniform(horizon, tree->levels());
    inst.tree = std::move(tree);
    inst.terminal = std::move(xi);
    inst.driver = f;
    inst.barriers.lower = std::move(L);
    inst.barriers.upper = std::move(U);
    return inst;
}

/// Standard [H] corpus recipe: random 10-15 step instances.
inline InstanceRecipe corpus_recipe(std::uint64_t seed) {
    InstanceRecipe r;
    r.seed = seed;
    r.steps = 10 + seed % 6;
    return r;
}

/// Raises every datum of `a` by random nonnegative amounts, keeping the
/// barriers at least as far apart and the terminal value between them.
inline ProblemInstance raised(const ProblemInstance& a, Rng& rng) {
    ProblemInstance b = a;
    const FiltrationTree& tree = *a.tree;
    RegulatedField& L = *b.barriers.lower;
    RegulatedField& U = *b.barriers.upper;
    for (NodeId id = 0; id < tree.size(); ++id) {
        const double ru = rng.bernoulli(0.5) ? rng.uniform(0, 0.3) : 0.0;
        const double rl = rng.uniform(0, ru);
        L.value[id] += rl;
        L.right[id] += rl;
        U.value[id] += ru;
        U.right[id] += ru;
    }
    const std::size_t N = tree.levels();
    for (std::size_t i = 0; i < b.terminal.size(); ++i) {
        const NodeId id = tree.level_begin(N) + i;
        b.terminal[i] = std::clamp(b.terminal[i] + rng.uniform(0, 0.3), L.value[id], U.value[id]);
    }
    const double lift = rng.uniform(0, 0.5);
    const Driver f = a.driver;
    b.driver = Driver::custom([f, lift](double t, double y) { return f(t, y) + lift; }, f.mu());
    return b;
}

}  // namespace fixture
