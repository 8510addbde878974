#pragma once

// Backward induction on the tree: implicit driver steps, penalty terms,
// right-jump corrections and penalty-level sweeps.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "rbsde/driver.hpp"
#include "rbsde/errors.hpp"
#include "rbsde/lattice.hpp"
#include "rbsde/regulated.hpp"
#include "rbsde/tolerances.hpp"

namespace rbsde {

enum class Method { Projection, IncreasingPenalization, DecreasingPenalization, Patched };

inline const char* to_string(Method m) {
    switch (m) {
        case Method::Projection: return "projection";
        case Method::IncreasingPenalization: return "increasing_penalization";
        case Method::DecreasingPenalization: return "decreasing_penalization";
        case Method::Patched: return "patched";
    }
    return "?";
}

/// (Y, M, K, A) on a tree. K and A are stored as increments: the continuous
/// part over (t_k, t_{k+1}] (`*_star`) and the right jump at t_k (`*_jump`),
/// both attached to the node at level k. M is stored per edge.
struct SolutionBundle {
    std::shared_ptr<const FiltrationTree> tree;
    RegulatedField y;
    AdaptedField dk_star, dk_jump, da_star, da_jump;
    EdgeField dm;
    Method method = Method::Projection;
    std::size_t penalty_level = 0;
    std::vector<NodeId> degenerate_nodes;

    explicit SolutionBundle(std::shared_ptr<const FiltrationTree> t = nullptr) : tree(std::move(t)) {
        const std::size_t n = tree ? tree->size() : 0;
        y = RegulatedField(AdaptedField(n));
        dk_star = dk_jump = da_star = da_jump = AdaptedField(n);
        dm = EdgeField(tree ? tree->edge_count() : 0);
    }

    /// Solution of the negated instance: -Y, -M, with K and A swapped.
    SolutionBundle dual() const {
        SolutionBundle d(tree);
        d.y = y.negated();
        d.dk_star = da_star;
        d.dk_jump = da_jump;
        d.da_star = dk_star;
        d.da_jump = dk_jump;
        d.dm = dm.negated();
        d.method = method == Method::IncreasingPenalization   ? Method::DecreasingPenalization
                   : method == Method::DecreasingPenalization ? Method::IncreasingPenalization
                                                              : method;
        d.penalty_level = penalty_level;
        d.degenerate_nodes = degenerate_nodes;
        return d;
    }
};

/// Solves y = e + f(t, y) dt by fixed-point iteration.
inline double implicit_step(double e, double t, double dt, const Driver& f) {
    if (!(f.mu() * dt < tol::stability_bound))
        throw StabilityError("implicit_step: mu * dt = " + std::to_string(f.mu() * dt) + " is not below 1/2");
    double y = e;
    for (std::size_t it = 0; it < tol::fixed_point_max_iterations; ++it) {
        const double next = e + f(t, y) * dt;
        if (std::abs(next - y) <= tol::fixed_point * std::max(1.0, std::abs(next))) return next;
        y = next;
    }
    std::ostringstream os;
    os.precision(17);
    os << "implicit_step: no convergence after " << tol::fixed_point_max_iterations << " iterations (e=" << e
       << ", t=" << t << ", dt=" << dt << ", last y=" << y << ")";
    throw NumericalError(os.str());
}

/// Solves y = e + f(t, y) dt + a (L - y) on the region y < L.
inline double penalty_solve(double e, double t, double dt, double a, double L, const Driver& f, double start) {
    double y = start;
    for (std::size_t it = 0; it < tol::fixed_point_max_iterations; ++it) {
        const double next = (e + f(t, y) * dt + a * L) / (1.0 + a);
        if (std::abs(next - y) <= tol::fixed_point * std::max(1.0, std::abs(next))) return next;
        y = next;
    }
    std::ostringstream os;
    os.precision(17);
    os << "penalty_solve: no convergence after " << tol::fixed_point_max_iterations << " iterations (e=" << e
       << ", L=" << L << ", a=" << a << ")";
    throw NumericalError(os.str());
}

enum class PenalizationMode { PureLower, PureUpper, LowerPenaltyUpperReflect, UpperPenaltyLowerReflect };

inline const char* to_string(PenalizationMode m) {
    switch (m) {
        case PenalizationMode::PureLower: return "pure_lower";
        case PenalizationMode::PureUpper: return "pure_upper";
        case PenalizationMode::LowerPenaltyUpperReflect: return "lower_penalty_upper_reflect";
        case PenalizationMode::UpperPenaltyLowerReflect: return "upper_penalty_lower_reflect";
    }
    return "?";
}

inline bool is_upper_penalty(PenalizationMode m) {
    return m == PenalizationMode::PureUpper || m == PenalizationMode::UpperPenaltyLowerReflect;
}

inline PenalizationMode dual_mode(PenalizationMode m) {
    switch (m) {
        case PenalizationMode::PureLower: return PenalizationMode::PureUpper;
        case PenalizationMode::PureUpper: return PenalizationMode::PureLower;
        case PenalizationMode::LowerPenaltyUpperReflect: return PenalizationMode::UpperPenaltyLowerReflect;
        case PenalizationMode::UpperPenaltyLowerReflect: return PenalizationMode::LowerPenaltyUpperReflect;
    }
    return m;
}

struct StepResult {
    double y = 0.0;
    double dk_star = 0.0;
    double da_star = 0.0;
};

struct JumpResult {
    double y = 0.0;
    double dk_jump = 0.0;
    double da_jump = 0.0;
};

namespace detail {

enum class LowerRule { None, Penalty, Reflect };

struct Scheme {
    LowerRule lower = LowerRule::Reflect;
    bool upper_reflect = true;
    std::size_t n = 0;
};

/// Continuous part over (t_k, t_{k+1}]: Y_{k+} from the continuation e.
inline StepResult continuous_step(double e, double t, double dt, const Scheme& s, const std::optional<double>& L,
                                  const std::optional<double>& U, const Driver& f) {
    StepResult r;
    const double y0 = implicit_step(e, t, dt, f);
    r.y = y0;
    if (L && s.lower != LowerRule::None && y0 < *L) {
        if (s.lower == LowerRule::Penalty) {
            const double a = static_cast<double>(s.n) * dt;
            r.y = std::min(penalty_solve(e, t, dt, a, *L, f, y0), *L);
        } else {
            r.y = *L;
        }
        r.dk_star = std::max(0.0, (r.y - e) - f(t, r.y) * dt);
    }
    if (U && s.upper_reflect && r.y > *U) {
        r.y = *U;
        r.dk_star = 0.0;
        if (L && s.lower == LowerRule::Penalty && *L > *U)
            r.dk_star = static_cast<double>(s.n) * dt * (*L - *U);
        r.da_star = std::max(0.0, (e - r.y) + f(t, r.y) * dt + r.dk_star);
    }
    return r;
}

/// Right jump at t_k: Y_k from Y_{k+}.
inline JumpResult jump_step(double y_plus, bool lower_active, bool upper_active, const std::optional<double>& L,
                            const std::optional<double>& U) {
    JumpResult r{y_plus, 0.0, 0.0};
    if (L && lower_active && r.y < *L) {
        r.dk_jump = *L - r.y;
        r.y = *L;
    }
    if (U && upper_active && r.y > *U) {
        r.da_jump = r.y - *U;
        r.y = *U;
    }
    return r;
}

inline std::optional<double> at(const std::optional<RegulatedField>& b, NodeId id, bool right) {
    if (!b) return std::nullopt;
    return right ? b->right[id] : b->value[id];
}

inline SolutionBundle backward(const ProblemInstance& inst, const Scheme& s, Method method) {
    const FiltrationTree& tree = *inst.tree;
    const std::size_t N = tree.levels();
    SolutionBundle out(inst.tree);
    out.method = method;
    out.penalty_level = s.lower == LowerRule::Penalty ? s.n : 0;
    const auto& L = inst.barriers.lower;
    const auto& U = inst.barriers.upper;

    std::vector<bool> lower_jump(tree.size(), s.lower == LowerRule::Reflect);
    if (L && s.lower == LowerRule::Penalty) lower_jump = jump_exhaustion_schedule(tree, *L, s.n).scheduled;

    for (NodeId id = tree.level_begin(N); id < tree.size(); ++id) {
        out.y.value[id] = inst.xi(id);
        out.y.right[id] = inst.xi(id);
    }
    for (std::size_t k = N; k-- > 0;) {
        const double t = inst.grid.t(k);
        const double dt = inst.grid.dt(k);
        for (NodeId id = tree.level_begin(k); id < tree.level_end(k); ++id) {
            const double e = conditional_expectation(tree, out.y.value, id);
            const auto Lr = at(L, id, true), Ur = at(U, id, true);
            const StepResult c = continuous_step(e, t, dt, s, Lr, Ur, inst.driver);
            const auto Lk = at(L, id, false), Uk = at(U, id, false);
            const JumpResult j = jump_step(c.y, lower_jump[id], s.upper_reflect, Lk, Uk);

            out.y.right[id] = c.y;
            out.y.value[id] = j.y;
            out.dk_star[id] = c.dk_star;
            out.da_star[id] = c.da_star;
            out.dk_jump[id] = j.dk_jump;
            out.da_jump[id] = j.da_jump;

            std::size_t ei = tree.edge_begin(id);
            for (const Edge& ch : tree.children(id)) out.dm[ei++] = out.y.value[ch.child] - e;

            if (L && U) {
                const bool fired = c.dk_star > 0 || c.da_star > 0 || j.dk_jump > 0 || j.da_jump > 0;
                if (fired && (*Lr == *Ur || *Lk == *Uk)) out.degenerate_nodes.push_back(id);
            }
        }
    }
    std::sort(out.degenerate_nodes.begin(), out.degenerate_nodes.end());
    return out;
}

}  // namespace detail

/// One continuous step of a penalized scheme at a single node. Barriers are
/// the right values L_{k+}, U_{k+}; pass nullopt for an absent barrier.
inline StepResult penalized_step(double e, double t, double dt, std::size_t n, PenalizationMode mode,
                                 std::optional<double> L, std::optional<double> U, const Driver& f) {
    if (n == 0) throw ContractError("penalized_step: n must be >= 1");
    const bool reflect = mode == PenalizationMode::LowerPenaltyUpperReflect ||
                         mode == PenalizationMode::UpperPenaltyLowerReflect;
    const detail::Scheme s{detail::LowerRule::Penalty, reflect, n};
    if (!is_upper_penalty(mode)) return detail::continuous_step(e, t, dt, s, L, reflect ? U : std::nullopt, f);
    std::optional<double> dl, du;
    if (U) dl = -*U;
    if (L && reflect) du = -*L;
    const StepResult r = detail::continuous_step(-e, t, dt, s, dl, du, f.negated());
    return {-r.y, r.da_star, r.dk_star};
}

/// Right-jump correction at a node; identity unless `scheduled` (or, for
/// the reflected side of a mixed mode, unless a barrier is crossed).
inline JumpResult right_jump_correction(double y_plus, bool scheduled, PenalizationMode mode, std::optional<double> L,
                                        std::optional<double> U) {
    const bool reflect = mode == PenalizationMode::LowerPenaltyUpperReflect ||
                         mode == PenalizationMode::UpperPenaltyLowerReflect;
    if (!is_upper_penalty(mode)) return detail::jump_step(y_plus, scheduled, reflect, L, reflect ? U : std::nullopt);
    std::optional<double> dl, du;
    if (U) dl = -*U;
    if (L && reflect) du = -*L;
    const JumpResult r = detail::jump_step(-y_plus, scheduled, reflect, dl, du);
    return {-r.y, r.da_jump, r.dk_jump};
}

struct PenalizedSolution {
    SolutionBundle bundle;
    std::size_t n = 1;
    PenalizationMode mode = PenalizationMode::PureLower;
};

inline PenalizedSolution solve_penalized(const ProblemInstance& inst, std::size_t n, PenalizationMode mode) {
    if (n == 0) throw ContractError("solve_penalized: n must be >= 1");
    require_valid(inst, "solve_penalized");
    const bool reflect = mode == PenalizationMode::LowerPenaltyUpperReflect ||
                         mode == PenalizationMode::UpperPenaltyLowerReflect;
    const detail::Scheme s{detail::LowerRule::Penalty, reflect, n};
    if (!is_upper_penalty(mode)) {
        ProblemInstance view = inst;
        if (!reflect) view.barriers.upper.reset();
        return {detail::backward(view, s, Method::IncreasingPenalization), n, mode};
    }
    ProblemInstance dual = negation_dual(inst);
    if (!reflect) dual.barriers.upper.reset();
    SolutionBundle b = detail::backward(dual, s, Method::IncreasingPenalization).dual();
    return {std::move(b), n, mode};
}

struct SweepOptions {
    double epsilon = tol::sweep_epsilon;
    std::uint64_t n_max = tol::sweep_max_level;
    double monotonicity_tolerance = tol::monotonicity;
    std::function<void(const PenalizedSolution&)> on_level;  // called for every solved level
};

/// Row for level n: distance from the level-n solution to the level-n/2 one.
struct SweepRow {
    std::uint64_t n = 0;
    double sup_distance = 0.0;
    double monotonicity_violation = 0.0;
};

struct SweepResult {
    bool converged = false;
    bool monotone = true;
    double max_monotonicity_violation = 0.0;
    std::vector<SweepRow> trace;
    PenalizedSolution last;
};

/// Largest amount by which `next` moves against the expected direction.
inline double monotonicity_violation(const RegulatedField& prev, const RegulatedField& next, bool increasing) {
    double v = 0.0;
    for (NodeId id = 0; id < prev.size(); ++id) {
        const double dv = next.value[id] - prev.value[id];
        const double dr = next.right[id] - prev.right[id];
        v = std::max(v, increasing ? std::max(-dv, -dr) : std::max(dv, dr));
    }
    return v;
}

inline SweepResult penalization_sweep(const ProblemInstance& inst, PenalizationMode mode,
                                      const SweepOptions& opt = {}) {
    if (!(opt.epsilon > 0.0)) throw ContractError("penalization_sweep: epsilon must be positive");
    if (opt.n_max == 0) throw ContractError("penalization_sweep: n_max must be >= 1");
    const bool increasing = !is_upper_penalty(mode);
    SweepResult res;
    res.last = solve_penalized(inst, 1, mode);
    if (opt.on_level) opt.on_level(res.last);
    for (std::uint64_t n = 2; n <= opt.n_max; n *= 2) {
        PenalizedSolution next = solve_penalized(inst, n, mode);
        if (opt.on_level) opt.on_level(next);
        SweepRow row;
        row.n = n;
        row.sup_distance = sup_distance(res.last.bundle.y, next.bundle.y);
        row.monotonicity_violation = monotonicity_violation(res.last.bundle.y, next.bundle.y, increasing);
        res.max_monotonicity_violation = std::max(res.max_monotonicity_violation, row.monotonicity_violation);
        res.trace.push_back(row);
        res.last = std::move(next);
        if (row.sup_distance < opt.epsilon) {
            res.converged = true;
            break;
        }
    }
    res.monotone = res.max_monotonicity_violation <= opt.monotonicity_tolerance;
    return res;
}

}  // namespace rbsde
