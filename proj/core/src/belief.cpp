#include "pace/belief.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include <fmt/format.h>

namespace pace {

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::compliant: return "compliant";
    case Outcome::violation: return "violation";
    case Outcome::partial: return "partial";
    case Outcome::not_applicable: return "not_applicable";
  }
  return "unknown";
}

std::string_view to_string(ErrorType e) {
  switch (e) {
    case ErrorType::slip: return "slip";
    case ErrorType::misconception: return "misconception";
    case ErrorType::omission: return "omission";
  }
  return "unknown";
}

Outcome parse_outcome(std::string_view text) {
  if (text == "compliant" || text == "⊤") return Outcome::compliant;
  if (text == "violation" || text == "⊥") return Outcome::violation;
  if (text == "partial" || text == "∼") return Outcome::partial;
  if (text == "not_applicable" || text == "⊘") return Outcome::not_applicable;
  throw ObservationError("unknown outcome '" + std::string(text) + "'");
}

ErrorType parse_error_type(std::string_view text) {
  if (text == "slip") return ErrorType::slip;
  if (text == "misconception") return ErrorType::misconception;
  if (text == "omission") return ErrorType::omission;
  throw ObservationError("unknown error type '" + std::string(text) + "'");
}

void validate(const Observation& obs) {
  if (obs.error && (obs.outcome == Outcome::compliant || obs.outcome == Outcome::not_applicable)) {
    throw ObservationError(fmt::format("error type '{}' not allowed with outcome '{}'", to_string(*obs.error),
                                       to_string(obs.outcome)));
  }
}

EvidenceWeights evidence_weights(Outcome outcome, std::optional<ErrorType> error, bool prompted) {
  EvidenceWeights w;
  if (prompted && (outcome == Outcome::compliant || outcome == Outcome::partial)) w.positive = 0.5;
  if (error) {
    switch (*error) {
      case ErrorType::misconception: w.negative = 1.5; break;
      case ErrorType::slip: w.negative = 0.5; break;
      case ErrorType::omission: w.negative = 1.0; break;
    }
  }
  return w;
}

BeliefState::BeliefState(std::size_t skill_count, double prior_alpha, double prior_beta)
    : beliefs_(skill_count, NodeBelief{prior_alpha, prior_beta, std::nullopt}),
      prior_alpha_(prior_alpha),
      prior_beta_(prior_beta) {
  if (!(prior_alpha > 0.0) || !(prior_beta > 0.0)) throw std::invalid_argument("Beta priors must be positive");
}

std::vector<double> BeliefState::means() const {
  std::vector<double> out(beliefs_.size());
  for (std::size_t i = 0; i < beliefs_.size(); ++i) out[i] = beliefs_[i].mean();
  return out;
}

BeliefState init_beliefs(const SkillGraph& graph, double prior_alpha, double prior_beta) {
  if (graph.skill_count() == 0) throw std::invalid_argument("graph has no assessable nodes");
  return BeliefState(graph.skill_count(), prior_alpha, prior_beta);
}

void update_belief(BeliefState& state, const Observation& obs) {
  validate(obs);
  if (obs.skill >= state.size()) {
    throw std::out_of_range(fmt::format("observation for unknown skill index {}", obs.skill));
  }
  NodeBelief& b = state[obs.skill];
  const EvidenceWeights w = evidence_weights(obs.outcome, obs.error, obs.prompted);
  switch (obs.outcome) {
    case Outcome::compliant: b.alpha += w.positive; break;
    case Outcome::violation: b.beta += w.negative; break;
    case Outcome::partial:
      b.alpha += w.positive;
      b.beta += w.negative;
      break;
    case Outcome::not_applicable: break;
  }
  if (obs.outcome != Outcome::not_applicable) b.last_practiced = obs.at;
  state.append(obs);
}

void propagate(BeliefState& state, const SimilarityIndex& index, SkillIndex observed, PropagationMode mode) {
  const double source = state[observed].mean();
  for (const Neighbor& nb : index.neighbors(observed)) {
    NodeBelief& target = state[nb.skill];
    const double current = target.mean();
    const double blended = 0.5 * (current + nb.phi * source);
    if (mode == PropagationMode::upward_only && blended <= current) continue;
    const double n = target.count();
    target.alpha = blended * n;
    target.beta = n - target.alpha;
  }
}

std::pair<double, double> coverage_and_weak_mean(std::span<const double> means, double mastery_threshold,
                                                 double weak_threshold) {
  if (means.empty()) return {0.0, 0.0};
  std::size_t mastered = 0;
  std::size_t weak = 0;
  double weak_sum = 0.0;
  for (double m : means) {
    if (m >= mastery_threshold) ++mastered;
    if (m < weak_threshold) {
      ++weak;
      weak_sum += m;
    }
  }
  return {static_cast<double>(mastered) / static_cast<double>(means.size()),
          weak > 0 ? weak_sum / static_cast<double>(weak) : 0.0};
}

BeliefSummary belief_summary(const BeliefState& state, double mastery_threshold, double weak_threshold) {
  BeliefSummary s;
  s.means = state.means();
  double var_sum = 0.0;
  for (const auto& b : state.beliefs()) var_sum += b.variance();
  s.mean_variance = state.size() > 0 ? var_sum / static_cast<double>(state.size()) : 0.0;
  std::tie(s.coverage, s.weak_mean) = coverage_and_weak_mean(s.means, mastery_threshold, weak_threshold);
  return s;
}

BeliefState replay_observations(std::size_t skill_count, double prior_alpha, double prior_beta,
                                std::span<const Observation> log, const SimilarityIndex* index,
                                PropagationMode mode) {
  BeliefState state(skill_count, prior_alpha, prior_beta);
  for (const Observation& obs : log) {
    update_belief(state, obs);
    if (index != nullptr && obs.outcome != Outcome::not_applicable) propagate(state, *index, obs.skill, mode);
  }
  return state;
}

// ---------------------------------------------------------------------------

nlohmann::json observation_to_json(const Observation& obs, const SkillGraph& graph) {
  nlohmann::json j = {{"node", graph.skill_id(obs.skill)},
                      {"outcome", to_string(obs.outcome)},
                      {"prompted", obs.prompted},
                      {"timestamp", to_iso8601(obs.at)}};
  if (obs.error) j["error_type"] = to_string(*obs.error);
  return j;
}

Observation observation_from_json(const nlohmann::json& doc, const SkillGraph& graph) {
  if (!doc.is_object()) throw ObservationError("observation must be a JSON object");
  Observation obs;
  try {
    const std::string node = doc.at("node").get<std::string>();
    const auto skill = graph.find_skill(node);
    if (!skill) throw ObservationError("unknown or non-assessable node '" + node + "'");
    obs.skill = *skill;
    obs.outcome = parse_outcome(doc.at("outcome").get<std::string>());
    if (doc.contains("error_type") && !doc["error_type"].is_null()) {
      obs.error = parse_error_type(doc["error_type"].get<std::string>());
    }
    obs.prompted = doc.value("prompted", false);
    obs.at = parse_iso8601(doc.at("timestamp").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ObservationError(std::string("malformed observation: ") + e.what());
  } catch (const std::invalid_argument& e) {
    if (dynamic_cast<const ObservationError*>(&e) != nullptr) throw;
    throw ObservationError(e.what());
  }
  validate(obs);
  return obs;
}

std::vector<Observation> read_observation_log(std::istream& in, const SkillGraph& graph) {
  std::vector<Observation> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(observation_from_json(nlohmann::json::parse(line), graph));
    } catch (const nlohmann::json::parse_error& e) {
      throw ObservationError(fmt::format("line {}: {}", line_no, e.what()));
    } catch (const ObservationError& e) {
      throw ObservationError(fmt::format("line {}: {}", line_no, e.what()));
    }
  }
  return out;
}

std::vector<Observation> read_observation_log(const std::filesystem::path& path, const SkillGraph& graph) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open observation log " + path.string());
  return read_observation_log(in, graph);
}

void write_observation_log(std::ostream& out, std::span<const Observation> log, const SkillGraph& graph) {
  for (const auto& obs : log) out << observation_to_json(obs, graph).dump() << '\n';
}

void write_belief_csv(std::ostream& out, const BeliefState& state, const SkillGraph& graph) {
  out << "node,alpha,beta,mean,variance,last_practiced\n";
  for (SkillIndex s = 0; s < state.size(); ++s) {
    const NodeBelief& b = state[s];
    out << fmt::format("{},{:.6f},{:.6f},{:.6f},{:.6f},{}\n", graph.skill_id(s), b.alpha, b.beta, b.mean(),
                       b.variance(), b.last_practiced ? to_iso8601(*b.last_practiced) : std::string{});
  }
}

}  // namespace pace
