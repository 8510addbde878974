#pragma once

#include <cstddef>
#include <cstdint>

namespace rbsde::tol {

// Probability rows must sum to one within this.
inline constexpr double probability_sum = 1e-12;

// Fixed-point iteration for the implicit driver step.
inline constexpr double fixed_point = 1e-13;
inline constexpr std::size_t fixed_point_max_iterations = 200;

// mu * dt must stay strictly below this.
inline constexpr double stability_bound = 0.5;

inline constexpr double sandwich = 1e-10;
inline constexpr double skorokhod = 1e-9;
inline constexpr double budget = 1e-10;
inline constexpr double martingale_centering = 1e-12;
inline constexpr double monotonicity = 1e-10;
inline constexpr double comparison = 1e-12;
inline constexpr double seam = 1e-9;
inline constexpr double hitting = 1e-9;
inline constexpr double game_identity = 1e-10;
inline constexpr double duality = 1e-12;

// Penalization sweep defaults: levels 1, 2, 4, ..., 2^20.
inline constexpr double sweep_epsilon = 1e-5;
inline constexpr std::uint64_t sweep_max_level = std::uint64_t{1} << 20;

// Default cap for full root-to-leaf enumeration.
inline constexpr std::size_t path_enumeration_levels = 22;

}  // namespace rbsde::tol
