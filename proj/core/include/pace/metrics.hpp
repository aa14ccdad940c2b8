#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "pace/belief.hpp"
#include "pace/skill_graph.hpp"

namespace pace {

/// Fraction of entries at or above the threshold. Throws on an empty vector.
double coverage_at(std::span<const double> values, double threshold = kMasteryThreshold);

/// 1-based index of the first score at or above the threshold.
std::optional<int> zero_to_hero(std::span<const double> session_scores, double threshold = kMasteryThreshold);

/// (#compliant + 0.5 #partial) / #applicable; nullopt when nothing was applicable.
std::optional<double> scenario_score(std::span<const Observation> observations);

/// Mean absolute deviation. Throws std::invalid_argument on a length mismatch.
double approximation_gap(std::span<const double> belief_means, std::span<const double> truth);

/// Incident-stratified sample of table indices: types are visited in a seeded
/// random order, cycling until n_items are drawn; each type contributes a
/// scenario drawn uniformly without replacement. Result is sorted.
std::vector<std::size_t> random_exam(const ScenarioTable& table, std::size_t n_items, std::uint64_t seed);

}  // namespace pace
