#include "pace/trainee_sim.hpp"

#include <algorithm>
#include <random>
#include <stdexcept>

namespace pace {

std::string_view to_string(ArchetypeName a) {
  switch (a) {
    case ArchetypeName::fast: return "fast";
    case ArchetypeName::moderate: return "moderate";
    case ArchetypeName::struggling: return "struggling";
    case ArchetypeName::quick_forgetter: return "quick_forgetter";
  }
  return "unknown";
}

ArchetypeName parse_archetype(std::string_view text) {
  if (text == "fast") return ArchetypeName::fast;
  if (text == "moderate") return ArchetypeName::moderate;
  if (text == "struggling") return ArchetypeName::struggling;
  if (text == "quick_forgetter") return ArchetypeName::quick_forgetter;
  throw std::invalid_argument("unknown archetype '" + std::string(text) + "'");
}

Archetype archetype(ArchetypeName name) {
  switch (name) {
    case ArchetypeName::fast: return {name, 0.12, 0.15};
    case ArchetypeName::moderate: return {name, 0.07, 0.25};
    case ArchetypeName::struggling: return {name, 0.03, 0.35};
    case ArchetypeName::quick_forgetter: return {name, 0.10, 0.45};
  }
  throw std::invalid_argument("unknown archetype");
}

TraineeAgent::TraineeAgent(std::string id, ArchetypeName archetype, double lambda, double psi,
                           std::vector<double> theta, std::uint64_t seed, double kappa, BehaviorParams behavior)
    : id_(std::move(id)),
      archetype_(archetype),
      lambda_(lambda),
      psi_(psi),
      kappa_(kappa),
      seed_(seed),
      behavior_(behavior),
      theta_(std::move(theta)),
      anchor_(theta_),
      last_practiced_(theta_.size()) {
  for (double t : theta_) {
    if (t < 0.0 || t > 1.0) throw std::invalid_argument("initial mastery must lie in [0,1]");
  }
}

Observation TraineeAgent::respond_one(SkillIndex s, double theta, Timestamp now, Rng& rng) const {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  Observation obs;
  obs.skill = s;
  obs.at = now;
  if (u01(rng) < theta) {
    obs.outcome = Outcome::compliant;
    obs.prompted = u01(rng) < behavior_.prompt_probability;
    return obs;
  }
  obs.outcome = u01(rng) < behavior_.violation_share ? Outcome::violation : Outcome::partial;
  const double w_slip = theta;
  const double w_mis = behavior_.misconception_weight * (1.0 - theta);
  const double w_omit = behavior_.omission_weight * (1.0 - theta);
  const double draw = u01(rng) * (w_slip + w_mis + w_omit);
  if (draw < w_slip) {
    obs.error = ErrorType::slip;
  } else if (draw < w_slip + w_mis) {
    obs.error = ErrorType::misconception;
  } else {
    obs.error = ErrorType::omission;
  }
  return obs;
}

std::vector<Observation> TraineeAgent::respond(std::span<const SkillIndex> activated, Timestamp now, Rng& rng) {
  std::vector<Observation> out;
  out.reserve(activated.size());
  for (const SkillIndex s : activated) out.push_back(respond_one(s, theta_.at(s), now, rng));
  return out;
}

void TraineeAgent::learn(std::span<const SkillIndex> practiced, Timestamp now) {
  for (const SkillIndex s : practiced) {
    double& t = theta_.at(s);
    t = std::clamp(t + lambda_ * (1.0 - t), 0.0, 1.0);
    anchor_[s] = t;
    last_practiced_[s] = now;
  }
}

void TraineeAgent::forget(Timestamp now) {
  for (std::size_t s = 0; s < theta_.size(); ++s) {
    if (!last_practiced_[s]) continue;
    theta_[s] = apply_forgetting(anchor_[s], elapsed_hours(*last_practiced_[s], now), psi_, kappa_);
  }
}

nlohmann::json TraineeAgent::snapshot(const SkillGraph& graph) const {
  nlohmann::json theta = nlohmann::json::object();
  for (SkillIndex s = 0; s < theta_.size(); ++s) theta[graph.skill_id(s)] = theta_[s];
  return {{"id", id_},   {"archetype", to_string(archetype_)}, {"lambda", lambda_},
          {"psi", psi_}, {"theta", theta},                     {"seed", seed_}};
}

TraineeAgent instantiate_archetype(ArchetypeName name, std::uint64_t seed, std::size_t skill_count, std::string id,
                                   double kappa, BehaviorParams behavior) {
  const Archetype base = archetype(name);
  Rng rng(seed);
  std::uniform_real_distribution<double> noise(1.0 - behavior.parameter_noise, 1.0 + behavior.parameter_noise);
  const double lambda = base.lambda * noise(rng);
  const double psi = base.psi * noise(rng);
  std::uniform_real_distribution<double> init(behavior.initial_low, behavior.initial_high);
  std::vector<double> theta(skill_count);
  for (double& t : theta) t = init(rng);
  if (id.empty()) id = std::string(to_string(name)) + "-" + std::to_string(seed);
  return TraineeAgent(std::move(id), name, lambda, psi, std::move(theta), seed, kappa, behavior);
}

double exam_score(std::span<const double> truth, const ScenarioTable& table, std::span<const std::size_t> exam) {
  if (exam.empty()) throw std::invalid_argument("exam is empty");
  double total = 0.0;
  std::size_t counted = 0;
  for (const std::size_t i : exam) {
    const auto act = table.activated(i);
    if (act.empty()) continue;
    double sum = 0.0;
    for (const SkillIndex s : act) sum += truth[s];
    total += sum / static_cast<double>(act.size());
    ++counted;
  }
  return counted > 0 ? 100.0 * total / static_cast<double>(counted) : 0.0;
}

}  // namespace pace
