#include <catch_amalgamated.hpp>

#include <cmath>

#include "fixtures.hpp"
#include "rbsde/rbsde.hpp"

using namespace rbsde;
using Catch::Matchers::WithinAbs;

namespace {

bool has_kind(const ValidationReport& r, const std::string& kind) {
    for (const auto& v : r.violations)
        if (v.kind == kind) return true;
    return false;
}

}  // namespace

TEST_CASE("driver families") {
    CHECK(Driver::zero()(0.3, 5.0) == 0.0);
    CHECK(Driver::constant(1.5)(0.3, 5.0) == 1.5);
    const Driver lin = Driver::linear(0.1, -0.3, 2.0);
    CHECK(lin.mu() == 0.3);
    CHECK_THAT(lin(0.5, 2.0), WithinAbs(0.1 - 0.6 + 1.0, 1e-15));
    CHECK_FALSE(lin.y_independent());
    CHECK(Driver::constant(2).y_independent());
    CHECK(Driver::sine(0.0, 0.5)(0.0, M_PI / 2) == 0.5);
    CHECK_THROWS_AS(Driver::linear(0, 1.0, 0, 0.5), ContractError);
    CHECK_THROWS_AS(Driver::custom(nullptr, 1.0), ContractError);
    CHECK_THROWS_AS(Driver::custom([](double, double) { return 0.0; }, NAN), ContractError);
}

TEST_CASE("driver negation is an exact involution") {
    Rng rng(5);
    for (const Driver& f : {Driver::zero(), Driver::constant(0.7), Driver::linear(0.2, -0.4, 0.9),
                            Driver::sine(0.3, 0.8, 1.0)}) {
        CHECK(f.negated().negated() == f);
        for (int i = 0; i < 20; ++i) {
            const double t = rng.uniform(0, 1), y = rng.uniform(-3, 3);
            CHECK(f.negated()(t, y) == -f(t, -y));
            CHECK(f.negated().negated()(t, y) == f(t, y));
        }
    }
    const Driver c = Driver::custom([](double t, double y) { return t - y * y; }, 10.0);
    CHECK(c.negated()(0.25, 1.5) == -(0.25 - 2.25));
    CHECK_FALSE(c == c);
}

TEST_CASE("right jump of a regulated field") {
    const auto tree = fixture::binomial(2);
    RegulatedField f = fixture::constant(*tree, 1.0);
    CHECK(right_jump(f, 0) == 0.0);
    f.right[2] = f.value[2] - 0.3;
    CHECK_THAT(right_jump(f, 2), WithinAbs(-0.3, 1e-15));
    const RegulatedField g = f.negated();
    CHECK(g.jump(2) == -f.jump(2));
    CHECK(g.negated() == f);
}

TEST_CASE("separation check") {
    const auto tree = fixture::binomial(3);
    BarrierPair b{fixture::constant(*tree, 0.0), fixture::constant(*tree, 1.0)};
    SeparationReport r = check_separation(b);
    CHECK(r.satisfied);
    CHECK(r.margin == 1.0);

    b.upper->value[5] = 0.0;
    r = check_separation(b);
    CHECK_FALSE(r.satisfied);
    REQUIRE(r.violations.size() == 1);
    CHECK(r.violations[0] == 5);

    b.upper->value[5] = 1.0;
    b.upper->right[4] = b.lower->right[4] - 0.1;
    r = check_separation(b);
    CHECK_FALSE(r.satisfied);
    CHECK(r.violations == std::vector<NodeId>{4});

    CHECK(check_separation({fixture::constant(*tree, 0.0), std::nullopt}).satisfied);
}

TEST_CASE("separation margin equals the exhaustive nodewise minimum") {
    Rng rng(17);
    const auto tree = fixture::binomial(6);
    for (int trial = 0; trial < 100; ++trial) {
        const double g = rng.uniform(0.01, 0.5);
        RegulatedField L(AdaptedField::from(*tree, [&](NodeId) { return rng.uniform(-1, 1); }));
        for (NodeId id = 0; id < tree->size(); ++id) L.right[id] = L.value[id] - rng.uniform(0, 0.5);
        RegulatedField U = L;
        for (NodeId id = 0; id < tree->size(); ++id) {
            U.value[id] = L.value[id] + g + rng.uniform(0, 1);
            U.right[id] = L.right[id] + g + rng.uniform(0, 1);
        }
        const NodeId pin = rng.next() % tree->size();
        if (rng.bernoulli(0.5))
            U.value[pin] = L.value[pin] + g;
        else
            U.right[pin] = L.right[pin] + g;
        double m = INFINITY;
        for (NodeId id = 0; id < tree->size(); ++id)
            m = std::min({m, U.value[id] - L.value[id], U.right[id] - L.right[id]});
        const SeparationReport r = check_separation({L, U});
        CHECK(r.satisfied);
        CHECK(r.margin == m);
        CHECK_THAT(r.margin, WithinAbs(g, 1e-12));
    }
}

TEST_CASE("jump schedule thresholds") {
    const auto tree = fixture::chain(4);
    RegulatedField L = fixture::constant(*tree, 0.0);
    for (std::size_t n : {1, 2, 5, 100}) CHECK(jump_exhaustion_schedule(*tree, L, n).size() == 0);

    L.right[1] = -0.6;
    CHECK_FALSE(jump_exhaustion_schedule(*tree, L, 1).contains(1));
    for (std::size_t n = 2; n < 10; ++n) CHECK(jump_exhaustion_schedule(*tree, L, n).contains(1));
    CHECK_THROWS_AS(jump_exhaustion_schedule(*tree, L, 0), ContractError);
}

TEST_CASE("jump schedule sizes for jumps -1.5, -0.4, -0.05") {
    const auto tree = fixture::chain(4);
    RegulatedField L = fixture::constant(*tree, 0.0);
    L.right[0] = -1.5;
    L.right[1] = -0.4;
    L.right[2] = -0.05;
    // Direct threshold evaluation: count jumps j with j < -1/n.
    const std::vector<double> jumps{-1.5, -0.4, -0.05};
    std::size_t first_full = 0;
    for (std::size_t n = 1; n <= 40; ++n) {
        std::size_t expect = 0;
        for (double j : jumps) expect += j < -1.0 / static_cast<double>(n);
        const JumpExhaustionSchedule s = jump_exhaustion_schedule(*tree, L, n);
        CHECK(s.size() == expect);
        if (s.size() == 3 && first_full == 0) first_full = n;
    }
    CHECK(jump_exhaustion_schedule(*tree, L, 1).size() == 1);
    CHECK(jump_exhaustion_schedule(*tree, L, 2).size() == 1);
    CHECK(jump_exhaustion_schedule(*tree, L, 3).size() == 2);
    CHECK(jump_exhaustion_schedule(*tree, L, 4).size() == 2);
    CHECK(first_full == 21);
    CHECK_FALSE(jump_exhaustion_schedule(*tree, L, 20).contains(2));
    CHECK(jump_exhaustion_schedule(*tree, L, 21).contains(2));
}

TEST_CASE("jump schedules nest and exhaust") {
    Rng rng(23);
    const auto tree = fixture::binomial(8);
    for (int trial = 0; trial < 50; ++trial) {
        RegulatedField L(AdaptedField::from(*tree, [&](NodeId) { return rng.uniform(-1, 1); }));
        for (NodeId id = 0; id < tree->size(); ++id)
            if (rng.bernoulli(0.3)) L.right[id] = L.value[id] - rng.uniform(0.001, 2.0);
        std::vector<NodeId> declared;
        for (NodeId id = 0; id < tree->size(); ++id)
            if (L.jump(id) < 0) declared.push_back(id);
        JumpExhaustionSchedule prev = jump_exhaustion_schedule(*tree, L, 1);
        for (std::size_t n = 2; n <= 1024; n *= 2) {
            const JumpExhaustionSchedule s = jump_exhaustion_schedule(*tree, L, n);
            for (const JumpEvent& e : prev.events) CHECK(s.contains(e.node));
            for (std::size_t i = 1; i < s.events.size(); ++i) CHECK(s.events[i - 1].level <= s.events[i].level);
            prev = s;
        }
        // Every declared jump is scheduled once n exceeds 1 / |jump|.
        const JumpExhaustionSchedule all = jump_exhaustion_schedule(*tree, L, 1001);
        std::vector<NodeId> got;
        for (const JumpEvent& e : all.events) got.push_back(e.node);
        CHECK(got == declared);
    }
    RegulatedField U = fixture::constant(*tree, 1.0);
    U.right[3] = 1.3;
    U.right[4] = 0.5;
    const auto up = jump_exhaustion_schedule(*tree, U, 4, BarrierSide::Upper);
    CHECK(up.size() == 1);
    CHECK(up.contains(3));
    CHECK_FALSE(jump_exhaustion_schedule(*tree, U, 3, BarrierSide::Upper).contains(3));
}

TEST_CASE("instance validation") {
    const auto tree = fixture::binomial(3);
    ProblemInstance ok = fixture::instance(tree, fixture::leaf_values(*tree, [](double) { return 0.5; }),
                                           Driver::zero(), fixture::constant(*tree, 0.0),
                                           fixture::constant(*tree, 1.0));
    CHECK(validate_instance(ok).ok());

    ProblemInstance low = ok;
    low.terminal[2] = -0.25;
    const ValidationReport r = validate_instance(low);
    REQUIRE(r.violations.size() == 1);
    CHECK(r.violations[0].kind == "terminal_below_lower");
    CHECK(r.violations[0].node == tree->node(3, 2));
    CHECK(r.violations[0].message.find("(3, 2)") != std::string::npos);

    ProblemInstance unstable = ok;
    unstable.driver = Driver::linear(0, 1.8, 0);  // mu dt = 0.6
    CHECK(has_kind(validate_instance(unstable), "stability"));
    unstable.driver = Driver::linear(0, 1.49, 0);
    CHECK(validate_instance(unstable).ok());
    unstable.driver = Driver::linear(0, 1.5, 0);
    CHECK(has_kind(validate_instance(unstable), "stability"));
    CHECK_THROWS_AS(require_valid(unstable, "test"), StabilityError);

    ProblemInstance crossed = ok;
    crossed.barriers.upper->right[1] = -0.5;
    CHECK(has_kind(validate_instance(crossed), "barrier_order_right"));
    CHECK_THROWS_AS(require_valid(crossed, "test"), ContractError);

    ProblemInstance leafjump = ok;
    leafjump.barriers.lower->right[tree->node(3, 0)] = -1.0;
    CHECK(has_kind(validate_instance(leafjump), "terminal_right_jump"));

    ProblemInstance nan = ok;
    nan.terminal[0] = NAN;
    CHECK(has_kind(validate_instance(nan), "nonfinite"));

    ProblemInstance grid = ok;
    grid.grid = TimeGrid::uniform(1.0, 4);
    CHECK(has_kind(validate_instance(grid), "grid"));
}

TEST_CASE("negation dual round trip is exact") {
    Rng rng(31);
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
        InstanceRecipe r;
        r.seed = seed;
        r.steps = 6;
        r.driver = seed % 2 ? DriverFamily::Linear : DriverFamily::Sine;
        const ProblemInstance inst = random_instance(r);
        const ProblemInstance d = negation_dual(inst);
        CHECK(negation_dual(d) == inst);
        CHECK(d.terminal == inst.terminal.negated());
        CHECK(*d.barriers.lower == inst.barriers.upper->negated());
        CHECK(*d.barriers.upper == inst.barriers.lower->negated());
        CHECK(validate_instance(d).ok());
        const double t = rng.uniform(0, 1), y = rng.uniform(-2, 2);
        CHECK(d.driver(t, y) == -inst.driver(t, -y));
    }
}
