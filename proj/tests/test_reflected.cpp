#include <catch_amalgamated.hpp>

#include <cmath>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "rbsde/rbsde.hpp"

using namespace rbsde;
using Catch::Matchers::WithinAbs;

namespace {

ProblemInstance snell_instance(std::uint64_t seed, std::size_t steps) {
    Rng rng(seed);
    const auto tree = fixture::binomial(steps, rng.uniform(0.1, 0.4), rng.uniform(0.3, 0.7));
    const double strike = rng.uniform(-0.2, 0.2);
    RegulatedField L =
        fixture::by_state(*tree, [&](double x) { return std::max(strike - x, 0.0) + rng.uniform(-0.05, 0.05); });
    AdaptedField xi = fixture::leaf_values(*tree, [&](double x) { return std::max(strike - x, 0.0); });
    for (std::size_t i = 0; i < xi.size(); ++i) {
        const NodeId leaf = tree->node(steps, i);
        L.value[leaf] = L.right[leaf] = std::min(L.value[leaf], xi[i]);
    }
    return fixture::instance(tree, xi, Driver::zero(), L);
}

}  // namespace

TEST_CASE("no barrier gives the plain BSDE") {
    const auto tree = fixture::binomial(5, 0.3);
    const ProblemInstance inst = fixture::instance(tree, fixture::leaf_values(*tree, [](double x) { return x * x; }),
                                                   Driver::linear(0.2, -0.4, 0.1));
    const SolutionBundle lo = solve_reflected_lower(inst);
    const SolutionBundle up = solve_reflected_upper(inst);
    const SolutionBundle both = solve_doubly_reflected(inst);
    CHECK(lo.y == up.y);
    CHECK(lo.y == both.y);
    for (NodeId id = 0; id < tree->size(); ++id) {
        CHECK(lo.dk_star[id] == 0.0);
        CHECK(lo.dk_jump[id] == 0.0);
        CHECK(up.da_star[id] == 0.0);
        CHECK(up.da_jump[id] == 0.0);
    }
    // Backward recursion y = E[y'] + f(t, y) dt with the linear driver solved in closed form.
    std::vector<double> v(tree->size());
    for (NodeId leaf = tree->level_begin(5); leaf < tree->size(); ++leaf) v[leaf] = inst.xi(leaf);
    for (std::size_t k = 5; k-- > 0;)
        for (NodeId id = tree->level_begin(k); id < tree->level_end(k); ++id) {
            double e = 0;
            for (const Edge& c : tree->children(id)) e += c.probability * v[c.child];
            const double t = inst.grid.t(k), dt = inst.grid.dt(k);
            v[id] = (e + (0.2 + 0.1 * t) * dt) / (1 + 0.4 * dt);
        }
    for (NodeId id = 0; id < tree->size(); ++id) CHECK_THAT(lo.y.value[id], WithinAbs(v[id], 1e-13));
    CHECK_THROWS_AS(solve_reflected_lower(fixture::instance(tree, inst.terminal, Driver::zero(),
                                                            fixture::constant(*tree, -5),
                                                            fixture::constant(*tree, 5))),
                    ContractError);
}

TEST_CASE("zero driver lower solution is the Snell envelope") {
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        const ProblemInstance inst = snell_instance(seed, 5);
        const double brute = oracle::snell_value_bruteforce(inst);
        CHECK_THAT(solve_reflected_lower(inst).y.value[0], WithinAbs(brute, 1e-12));
    }
    CHECK(oracle::binary_stopping_times(5).size() == oracle::binary_stopping_time_count(5));
    CHECK(oracle::binary_stopping_time_count(5) == 458330);
}

TEST_CASE("zero driver upper solution is the negated Snell envelope") {
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        const ProblemInstance lower = snell_instance(seed, 5);
        const ProblemInstance upper = negation_dual(lower);
        REQUIRE(!upper.barriers.lower);
        const SolutionBundle u = solve_reflected_upper(upper);
        const SolutionBundle l = solve_reflected_lower(lower);
        CHECK(u.y == l.y.negated());
        CHECK(u.da_star == l.dk_star);
        CHECK(u.da_jump == l.dk_jump);
        CHECK_THAT(u.y.value[0], WithinAbs(-oracle::snell_value_bruteforce(lower), 1e-12));
    }
}

TEST_CASE("one-sided penalization agrees with the reflected solvers") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        InstanceRecipe r = fixture::corpus_recipe(seed);
        r.upper = false;
        const ProblemInstance lo = random_instance(r);
        const SweepResult s = penalization_sweep(lo, PenalizationMode::PureLower);
        CHECK(s.converged);
        CHECK(sup_distance(s.last.bundle.y, solve_reflected_lower(lo).y) <= 2 * tol::sweep_epsilon);

        r.upper = true;
        r.lower = false;
        const ProblemInstance up = random_instance(r);
        const SweepResult t = penalization_sweep(up, PenalizationMode::PureUpper);
        CHECK(t.converged);
        CHECK(sup_distance(t.last.bundle.y, solve_reflected_upper(up).y) <= 2 * tol::sweep_epsilon);
    }
}

TEST_CASE("inactive barriers leave a constant terminal value in place") {
    const auto tree = fixture::binomial(4);
    const ProblemInstance inst = fixture::instance(tree, fixture::leaf_values(*tree, [](double) { return 0.3; }),
                                                   Driver::zero(), fixture::constant(*tree, -1),
                                                   fixture::constant(*tree, 1));
    const SolutionBundle b = solve_doubly_reflected(inst);
    for (NodeId id = 0; id < tree->size(); ++id) {
        CHECK(b.y.value[id] == 0.3);
        CHECK(b.y.right[id] == 0.3);
        CHECK(b.dk_star[id] + b.dk_jump[id] + b.da_star[id] + b.da_jump[id] == 0.0);
    }
}

TEST_CASE("doubly reflected solution matches the clamp recursion without jumps") {
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
        InstanceRecipe r = fixture::corpus_recipe(seed);
        r.driver = DriverFamily::Constant;
        r.jump_probability = 0.0;
        const ProblemInstance inst = random_instance(r);
        const std::vector<double> v = oracle::clamp_recursion(inst);
        const SolutionBundle b = solve_doubly_reflected(inst);
        for (NodeId id = 0; id < inst.tree->size(); ++id) CHECK_THAT(b.y.value[id], WithinAbs(v[id], 1e-12));
    }
}

TEST_CASE("projection solutions satisfy every residual check") {
    for (std::uint64_t seed = 1; seed <= 40; ++seed) {
        InstanceRecipe r = fixture::corpus_recipe(seed);
        r.shape = seed % 3 == 0 ? TreeShape::Binomial : TreeShape::RandomLattice;
        const ProblemInstance inst = random_instance(r);
        const SolutionBundle b = solve_doubly_reflected(inst);
        const SkorokhodReport sk = skorokhod_residual(b, inst.barriers);
        CHECK(sk.lower_abs <= tol::skorokhod);
        CHECK(sk.upper_abs <= tol::skorokhod);
        CHECK(lu4_residual(b, inst) <= tol::budget);
        CHECK(jump_identity_residual(b) <= 1e-12);
        CHECK(martingale_centering_residual(b) <= tol::martingale_centering);
        CHECK(sandwich_violation(b, inst.barriers) <= tol::sandwich);
        CHECK(min_increment(b) >= 0.0);
        CHECK(flat_off_residual(b, inst.barriers) <= tol::skorokhod);
        CHECK(support_overlap(b) == 0.0);
    }
}

TEST_CASE("Skorokhod residual detects an injected push") {
    const ProblemInstance inst = random_instance(fixture::corpus_recipe(4));
    SolutionBundle b = solve_doubly_reflected(inst);
    const FiltrationTree& tree = *inst.tree;
    // Find a node where Y sits strictly above L and push K there.
    NodeId target = no_node;
    for (NodeId id = 0; id < tree.size() && target == no_node; ++id)
        if (!tree.is_leaf(id) && b.y.right[id] - inst.barriers.lower->right[id] > 0.05 && b.dk_star[id] == 0.0)
            target = id;
    REQUIRE(target != no_node);
    const double gap = b.y.right[target] - inst.barriers.lower->right[target];
    const double delta = 0.37;
    b.dk_star[target] += delta;
    const SkorokhodReport sk = skorokhod_residual(b, inst.barriers, true);
    CHECK_THAT(sk.lower_residual, WithinAbs(gap * delta, 1e-12));
    // The path maximum from dynamic programming equals the explicit enumeration.
    const std::vector<double> sums = oracle::path_sums(tree, sk.lower_terms);
    CHECK(*std::max_element(sums.begin(), sums.end()) == sk.lower_residual);
    CHECK(sk.per_path_lower == sums);
}

TEST_CASE("hand-built bundle pushing 0.2 above the barrier") {
    const auto tree = fixture::chain(3);
    const ProblemInstance inst = fixture::instance(tree, AdaptedField(1, 0.2), Driver::zero(),
                                                   fixture::constant(*tree, 0.0), fixture::constant(*tree, 1.0));
    SolutionBundle b(tree);
    for (NodeId id = 0; id < tree->size(); ++id) b.y.value[id] = b.y.right[id] = 0.2;
    CHECK(skorokhod_residual(b, inst.barriers).lower_residual == 0.0);
    b.dk_star[1] = 0.5;
    CHECK_THAT(skorokhod_residual(b, inst.barriers).lower_residual, WithinAbs(0.2 * 0.5, 1e-15));
    b.dk_star[1] = 0.0;
    b.dk_jump[2] = 0.25;
    CHECK_THAT(skorokhod_residual(b, inst.barriers).lower_residual, WithinAbs(0.2 * 0.25, 1e-15));
    b.dk_jump[2] = 0.0;
    b.da_star[0] = 0.1;
    CHECK_THAT(skorokhod_residual(b, inst.barriers).upper_residual, WithinAbs(0.8 * 0.1, 1e-15));
}

TEST_CASE("budget and centering detectors") {
    // Zeroing M on a branching tree leaves the conditional deviations.
    const auto tree = fixture::binomial(3, 0.5);
    const ProblemInstance inst =
        fixture::instance(tree, fixture::leaf_values(*tree, [](double x) { return x * x; }), Driver::zero());
    SolutionBundle b = solve_doubly_reflected(inst);
    CHECK(lu4_residual(b, inst) <= 1e-14);
    double worst = 0;
    for (NodeId id = 0; id < tree->size(); ++id) {
        if (tree->is_leaf(id)) continue;
        const double e = conditional_expectation(*tree, b.y.value, id);
        for (const Edge& c : tree->children(id)) worst = std::max(worst, std::abs(b.y.value[c.child] - e));
    }
    b.dm = EdgeField(tree->edge_count());
    CHECK_THAT(lu4_residual(b, inst), WithinAbs(worst, 1e-14));

    SolutionBundle c = solve_doubly_reflected(inst);
    c.dm[0] += 0.125;
    CHECK_THAT(martingale_centering_residual(c), WithinAbs(0.125 * tree->children(0)[0].probability, 1e-15));

    // Single path: perturbing K by δ shows up as a budget residual of δ.
    const auto path = fixture::chain(4);
    const ProblemInstance det = fixture::instance(path, AdaptedField(1, 0.4), Driver::constant(0.3),
                                                  fixture::constant(*path, 0.0), fixture::constant(*path, 2.0));
    SolutionBundle d = solve_doubly_reflected(det);
    CHECK(lu4_residual(d, det) <= 1e-15);
    d.dk_star[2] += 0.0625;
    CHECK_THAT(lu4_residual(d, det), WithinAbs(0.0625, 1e-15));
}

TEST_CASE("symmetric instances solve to odd solutions") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const ProblemInstance inst = symmetric_instance(seed, 8, 0.1, 1.0, 0.5, seed % 2 == 0);
        const ProblemInstance d = negation_dual(inst);
        const SolutionBundle p = solve_doubly_reflected(inst);
        const SolutionBundle q = solve_doubly_reflected(d);
        CHECK(q.y == p.y.negated());
        CHECK(q.dk_star == p.da_star);
        CHECK(q.da_star == p.dk_star);
        CHECK(q.dk_jump == p.da_jump);
        CHECK(q.da_jump == p.dk_jump);
        CHECK(q.dm == p.dm.negated());
        CHECK(negation_dual(d) == inst);
    }
}

TEST_CASE("doubly reflected solution agrees with both sweeps") {
    SweepOptions opt;
    opt.n_max = std::uint64_t{1} << 24;
    for (std::uint64_t seed = 100; seed < 106; ++seed) {
        const ProblemInstance inst = random_instance(fixture::corpus_recipe(seed));
        const SolutionBundle b = solve_doubly_reflected(inst);
        for (PenalizationMode m : {PenalizationMode::LowerPenaltyUpperReflect,
                                   PenalizationMode::UpperPenaltyLowerReflect}) {
            const SweepResult s = penalization_sweep(inst, m, opt);
            CHECK(s.converged);
            CHECK(sup_distance(s.last.bundle.y, b.y) <= 2 * opt.epsilon);
        }
    }
}
