#include "pace/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "pace/rng.hpp"

namespace pace {

double coverage_at(std::span<const double> values, double threshold) {
  if (values.empty()) throw std::invalid_argument("coverage of an empty vector");
  const auto n = std::count_if(values.begin(), values.end(), [&](double v) { return v >= threshold; });
  return static_cast<double>(n) / static_cast<double>(values.size());
}

std::optional<int> zero_to_hero(std::span<const double> session_scores, double threshold) {
  for (std::size_t i = 0; i < session_scores.size(); ++i) {
    if (session_scores[i] >= threshold) return static_cast<int>(i + 1);
  }
  return std::nullopt;
}

std::optional<double> scenario_score(std::span<const Observation> observations) {
  double credit = 0.0;
  std::size_t applicable = 0;
  for (const auto& o : observations) {
    switch (o.outcome) {
      case Outcome::compliant: credit += 1.0; break;
      case Outcome::partial: credit += 0.5; break;
      case Outcome::violation: break;
      case Outcome::not_applicable: continue;
    }
    ++applicable;
  }
  if (applicable == 0) return std::nullopt;
  return credit / static_cast<double>(applicable);
}

double approximation_gap(std::span<const double> belief_means, std::span<const double> truth) {
  if (belief_means.size() != truth.size()) throw std::invalid_argument("belief and truth vectors differ in length");
  if (truth.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) sum += std::abs(belief_means[i] - truth[i]);
  return sum / static_cast<double>(truth.size());
}

std::vector<std::size_t> random_exam(const ScenarioTable& table, std::size_t n_items, std::uint64_t seed) {
  if (n_items > table.size()) throw std::invalid_argument("exam larger than the catalog");
  std::vector<std::vector<std::size_t>> by_type(table.graph().incidents().size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (!table.activated(i).empty()) by_type[table.incident(i)].push_back(i);
  }
  std::erase_if(by_type, [](const auto& v) { return v.empty(); });
  Rng rng(derive_seed(seed, 0x6578616dULL));
  for (auto& pool : by_type) std::shuffle(pool.begin(), pool.end(), rng);
  std::vector<std::size_t> order(by_type.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<std::size_t> exam;
  std::vector<std::size_t> cursor(by_type.size(), 0);
  while (exam.size() < n_items) {
    bool progressed = false;
    for (const std::size_t type : order) {
      if (exam.size() == n_items) break;
      if (cursor[type] < by_type[type].size()) {
        exam.push_back(by_type[type][cursor[type]++]);
        progressed = true;
      }
    }
    if (!progressed) break;
  }
  std::sort(exam.begin(), exam.end());
  return exam;
}

}  // namespace pace
