#include <catch_amalgamated.hpp>

#include <cmath>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "rbsde/rbsde.hpp"

using namespace rbsde;
using Catch::Matchers::WithinAbs;

TEST_CASE("implicit step") {
    CHECK(implicit_step(0.7, 0.0, 0.1, Driver::zero()) == 0.7);
    CHECK_THAT(implicit_step(0.7, 0.0, 0.1, Driver::constant(2.0)), WithinAbs(0.9, 1e-15));
    CHECK_THAT(implicit_step(1.0, 0.0, 0.1, Driver::linear(0, -0.3, 0)), WithinAbs(1.0 / 1.03, 1e-14));
    // y = e + (a + b y + c t) dt solved in closed form.
    Rng rng(2);
    for (int i = 0; i < 200; ++i) {
        const double a = rng.uniform(-1, 1), b = rng.uniform(-4, 4), c = rng.uniform(-1, 1);
        const double e = rng.uniform(-2, 2), t = rng.uniform(0, 1), dt = rng.uniform(0.001, 0.1);
        const double y = implicit_step(e, t, dt, Driver::linear(a, b, c));
        CHECK_THAT(y, WithinAbs((e + (a + c * t) * dt) / (1 - b * dt), 1e-12));
    }
    CHECK_THROWS_AS(implicit_step(1.0, 0.0, 0.1, Driver::linear(0, 6.0, 0)), StabilityError);
}

TEST_CASE("penalized step") {
    const Driver f = Driver::linear(0.1, -0.5, 0.0);
    CHECK(penalized_step(5.0, 0.0, 0.1, 1000, PenalizationMode::PureLower, 0.0, std::nullopt, f).y ==
          implicit_step(5.0, 0.0, 0.1, f));
    const StepResult r = penalized_step(0.0, 0.0, 0.1, 10, PenalizationMode::PureLower, 1.0, std::nullopt,
                                        Driver::zero());
    CHECK_THAT(r.y, WithinAbs(0.5, 1e-14));
    CHECK_THAT(r.dk_star, WithinAbs(0.5, 1e-14));
    CHECK(r.da_star == 0.0);

    const StepResult clamp = penalized_step(2.0, 0.0, 0.1, 10, PenalizationMode::LowerPenaltyUpperReflect, 0.0,
                                            1.5, Driver::zero());
    CHECK(clamp.y == 1.5);
    CHECK_THAT(clamp.da_star, WithinAbs(0.5, 1e-15));
    CHECK(clamp.dk_star == 0.0);

    // Upper penalty is the mirror of lower penalty.
    const StepResult up = penalized_step(0.0, 0.0, 0.1, 10, PenalizationMode::PureUpper, std::nullopt, -1.0,
                                         Driver::zero());
    CHECK_THAT(up.y, WithinAbs(-0.5, 1e-14));
    CHECK_THAT(up.da_star, WithinAbs(0.5, 1e-14));
    CHECK_THROWS_AS(penalized_step(0, 0, 0.1, 0, PenalizationMode::PureLower, 0.0, std::nullopt, f), ContractError);
}

TEST_CASE("penalized step piecewise-linear closed form") {
    // f = 0: y = e + n (L - y)^+ dt has y = (e + n L dt) / (1 + n dt) below L.
    Rng rng(9);
    for (int i = 0; i < 200; ++i) {
        const double e = rng.uniform(-2, 0), L = rng.uniform(0, 1), dt = rng.uniform(0.01, 0.2);
        const std::size_t n = 1 + rng.next() % 5000;
        const double nd = static_cast<double>(n) * dt;
        const StepResult r = penalized_step(e, 0, dt, n, PenalizationMode::PureLower, L, std::nullopt, Driver::zero());
        CHECK_THAT(r.y, WithinAbs((e + nd * L) / (1 + nd), 1e-12));
        CHECK(r.y <= L);
    }
}

TEST_CASE("right jump correction") {
    const JumpResult same = right_jump_correction(0.7, true, PenalizationMode::PureLower, 0.5, std::nullopt);
    CHECK(same.y == 0.7);
    CHECK(same.dk_jump == 0.0);
    const JumpResult lift = right_jump_correction(0.2, true, PenalizationMode::PureLower, 0.5, std::nullopt);
    CHECK(lift.y == 0.5);
    CHECK_THAT(lift.dk_jump, WithinAbs(0.3, 1e-15));
    // Δ+L = -0.05 is not scheduled at n = 10 (threshold -0.1), so nothing moves.
    const auto tree = fixture::chain(2);
    RegulatedField L = fixture::constant(*tree, 0.5);
    L.right[0] = 0.45;
    const bool scheduled = jump_exhaustion_schedule(*tree, L, 10).contains(0);
    CHECK_FALSE(scheduled);
    const JumpResult idle = right_jump_correction(0.2, scheduled, PenalizationMode::PureLower, 0.5, std::nullopt);
    CHECK(idle.y == 0.2);
    CHECK(idle.dk_jump == 0.0);
    // The reflected upper side of a mixed mode always clamps.
    const JumpResult down =
        right_jump_correction(1.4, false, PenalizationMode::LowerPenaltyUpperReflect, 0.0, 1.0);
    CHECK(down.y == 1.0);
    CHECK_THAT(down.da_jump, WithinAbs(0.4, 1e-15));
}

TEST_CASE("inactive barriers give the plain conditional expectation") {
    const auto tree = fixture::binomial(6, 0.2);
    const ProblemInstance inst = fixture::instance(
        tree, fixture::leaf_values(*tree, [](double x) { return std::clamp(x, -1.0, 1.0); }), Driver::zero(),
        fixture::constant(*tree, -10), fixture::constant(*tree, 10));
    for (PenalizationMode m : {PenalizationMode::PureLower, PenalizationMode::LowerPenaltyUpperReflect,
                               PenalizationMode::UpperPenaltyLowerReflect}) {
        const PenalizedSolution s = solve_penalized(inst, 8, m);
        // Y_k = E[ξ | node], by averaging the leaf values over subtree paths.
        for (NodeId id = 0; id < tree->size(); ++id) {
            const std::size_t k = tree->level_of(id);
            AdaptedField mass(tree->size());
            mass[id] = 1.0;
            for (std::size_t j = k; j < tree->levels(); ++j)
                for (NodeId n = tree->level_begin(j); n < tree->level_end(j); ++n)
                    for (const Edge& c : tree->children(n)) mass[c.child] += mass[n] * c.probability;
            double ev = 0;
            for (NodeId leaf = tree->level_begin(tree->levels()); leaf < tree->size(); ++leaf)
                ev += mass[leaf] * inst.xi(leaf);
            CHECK_THAT(s.bundle.y.value[id], WithinAbs(ev, 1e-14));
        }
        for (NodeId id = 0; id < tree->size(); ++id) {
            CHECK(s.bundle.dk_star[id] == 0.0);
            CHECK(s.bundle.da_star[id] == 0.0);
            CHECK(s.bundle.dk_jump[id] == 0.0);
            CHECK(s.bundle.da_jump[id] == 0.0);
        }
    }
}

TEST_CASE("one-step lower penalization closed form") {
    const auto tree = fixture::binomial(1);
    // L = 0.5 before maturity; at maturity it must sit below ξ = ±1.
    RegulatedField L = fixture::constant(*tree, 0.5);
    L.value[1] = L.right[1] = L.value[2] = L.right[2] = -1.0;
    const ProblemInstance inst =
        fixture::instance(tree, fixture::leaf_values(*tree, [](double x) { return x; }), Driver::zero(), L);
    double prev = -1;
    for (std::size_t n = 1; n <= 4096; n *= 2) {
        const double y0 = solve_penalized(inst, n, PenalizationMode::PureLower).bundle.y.value[0];
        const double nd = static_cast<double>(n);
        CHECK_THAT(y0, WithinAbs(nd * 0.5 / (1 + nd), 1e-15));
        CHECK(y0 > prev);
        prev = y0;
    }
    CHECK_THAT(solve_reflected_lower(inst).y.value[0], WithinAbs(0.5, 0));
}

TEST_CASE("penalized solutions satisfy the budget and the jump identity") {
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
        const ProblemInstance inst = random_instance(fixture::corpus_recipe(seed));
        for (PenalizationMode m : {PenalizationMode::LowerPenaltyUpperReflect,
                                   PenalizationMode::UpperPenaltyLowerReflect}) {
            const SolutionBundle b = solve_penalized(inst, 64, m).bundle;
            CHECK(lu4_residual(b, inst) <= tol::budget);
            CHECK(jump_identity_residual(b) <= 1e-12);
            CHECK(martingale_centering_residual(b) <= tol::martingale_centering);
            CHECK(min_increment(b) >= 0.0);
        }
    }
}

TEST_CASE("penalization negation duality is exact") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        InstanceRecipe r = fixture::corpus_recipe(seed);
        r.driver = seed % 2 ? DriverFamily::Linear : DriverFamily::Sine;
        const ProblemInstance inst = random_instance(r);
        const ProblemInstance dual = negation_dual(inst);
        for (PenalizationMode m : {PenalizationMode::LowerPenaltyUpperReflect,
                                   PenalizationMode::UpperPenaltyLowerReflect}) {
            const SolutionBundle p = solve_penalized(inst, 32, m).bundle;
            const SolutionBundle d = solve_penalized(dual, 32, dual_mode(m)).bundle;
            CHECK(d.y == p.y.negated());
            CHECK(d.dk_star == p.da_star);
            CHECK(d.da_jump == p.dk_jump);
            CHECK(d.dm == p.dm.negated());
        }
    }
}

TEST_CASE("sweep with inactive barriers stops at the first level") {
    const auto tree = fixture::binomial(5);
    const ProblemInstance inst = fixture::instance(tree, fixture::leaf_values(*tree, [](double) { return 0.0; }),
                                                   Driver::zero(), fixture::constant(*tree, -1),
                                                   fixture::constant(*tree, 1));
    const SweepResult s = penalization_sweep(inst, PenalizationMode::LowerPenaltyUpperReflect);
    CHECK(s.converged);
    CHECK(s.trace.size() == 1);
    CHECK(s.trace[0].sup_distance == 0.0);
}

TEST_CASE("sweep is monotone and reaches the projection limit") {
    SweepOptions opt;
    opt.n_max = std::uint64_t{1} << 24;
    for (std::uint64_t seed = 1; seed <= 12; ++seed) {
        const ProblemInstance inst = random_instance(fixture::corpus_recipe(seed));
        const SolutionBundle proj = solve_doubly_reflected(inst);
        const SweepResult inc = penalization_sweep(inst, PenalizationMode::LowerPenaltyUpperReflect, opt);
        const SweepResult dec = penalization_sweep(inst, PenalizationMode::UpperPenaltyLowerReflect, opt);
        for (const SweepResult* s : {&inc, &dec}) {
            CHECK(s->converged);
            CHECK(s->monotone);
            CHECK(s->max_monotonicity_violation <= tol::monotonicity);
            CHECK(s->trace.back().sup_distance < opt.epsilon);
            CHECK(sup_distance(s->last.bundle.y, proj.y) <= 1e-4);
        }
        // Penalized from below stays below the limit, from above stays above.
        for (NodeId id = 0; id < inst.tree->size(); ++id) {
            CHECK(inc.last.bundle.y.value[id] <= proj.y.value[id] + 1e-12);
            CHECK(dec.last.bundle.y.value[id] >= proj.y.value[id] - 1e-12);
        }
        CHECK(sup_distance(inc.last.bundle.y, dec.last.bundle.y) <= 2 * opt.epsilon);
    }
}

TEST_CASE("sweep reports non-convergence instead of throwing") {
    const ProblemInstance inst = random_instance(fixture::corpus_recipe(3));
    SweepOptions opt;
    opt.n_max = 1;
    const SweepResult s = penalization_sweep(inst, PenalizationMode::LowerPenaltyUpperReflect, opt);
    CHECK_FALSE(s.converged);
    CHECK(s.trace.empty());
    opt.epsilon = 0;
    CHECK_THROWS_AS(penalization_sweep(inst, PenalizationMode::LowerPenaltyUpperReflect, opt), ContractError);
}
