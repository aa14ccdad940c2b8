#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "pace/similarity.hpp"
#include "pace/skill_graph.hpp"
#include "pace/timestamp.hpp"

namespace pace {

/// Debrief outcome alphabet: compliant, violation, partial, not applicable.
enum class Outcome { compliant, violation, partial, not_applicable };
enum class ErrorType { slip, misconception, omission };

std::string_view to_string(Outcome o);
std::string_view to_string(ErrorType e);
Outcome parse_outcome(std::string_view text);
ErrorType parse_error_type(std::string_view text);

struct Observation {
  SkillIndex skill = 0;
  Outcome outcome = Outcome::not_applicable;
  /// Only for violation/partial.
  std::optional<ErrorType> error;
  bool prompted = false;
  Timestamp at;

  friend bool operator==(const Observation&, const Observation&) = default;
};

class ObservationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Throws ObservationError when an error type accompanies a compliant or n/a outcome.
void validate(const Observation& obs);

struct NodeBelief {
  double alpha = 1.0;
  double beta = 1.0;
  std::optional<Timestamp> last_practiced;

  double count() const { return alpha + beta; }
  double mean() const { return alpha / (alpha + beta); }
  double variance() const {
    const double n = alpha + beta;
    return alpha * beta / (n * n * (n + 1.0));
  }
};

struct EvidenceWeights {
  double positive = 1.0;
  double negative = 1.0;
};

/// Base weight 1; prompted successes 0.5, misconceptions 1.5, slips 0.5.
EvidenceWeights evidence_weights(Outcome outcome, std::optional<ErrorType> error, bool prompted);

enum class PropagationMode { as_written, upward_only };

/// One Beta posterior per assessable node plus the ingested observation log.
class BeliefState {
 public:
  BeliefState() = default;
  BeliefState(std::size_t skill_count, double prior_alpha, double prior_beta);

  std::size_t size() const { return beliefs_.size(); }
  const NodeBelief& operator[](SkillIndex s) const { return beliefs_.at(s); }
  NodeBelief& operator[](SkillIndex s) { return beliefs_.at(s); }
  std::span<const NodeBelief> beliefs() const { return beliefs_; }
  std::span<const Observation> log() const { return log_; }
  double prior_alpha() const { return prior_alpha_; }
  double prior_beta() const { return prior_beta_; }

  std::vector<double> means() const;

  void append(const Observation& obs) { log_.push_back(obs); }

 private:
  std::vector<NodeBelief> beliefs_;
  std::vector<Observation> log_;
  double prior_alpha_ = 1.0;
  double prior_beta_ = 1.0;
};

/// Throws std::invalid_argument for non-positive priors or a graph without assessable nodes.
BeliefState init_beliefs(const SkillGraph& graph, double prior_alpha = 1.0, double prior_beta = 1.0);

/// Weighted pseudo-count update. Throws std::out_of_range for unknown nodes.
void update_belief(BeliefState& state, const Observation& obs);

/// Blends each cached neighbor's mean halfway toward phi * mean(observed),
/// keeping the neighbor's total pseudo-count. One hop only.
void propagate(BeliefState& state, const SimilarityIndex& index, SkillIndex observed,
               PropagationMode mode = PropagationMode::as_written);

struct BeliefSummary {
  std::vector<double> means;
  double mean_variance = 0.0;
  double coverage = 0.0;
  double weak_mean = 0.0;
};

inline constexpr double kMasteryThreshold = 0.85;

BeliefSummary belief_summary(const BeliefState& state, double mastery_threshold = kMasteryThreshold,
                             double weak_threshold = kMasteryThreshold);

/// Coverage over `means` and mean of those below `weak_threshold` (0 if none).
std::pair<double, double> coverage_and_weak_mean(std::span<const double> means, double mastery_threshold,
                                                 double weak_threshold);

/// Rebuilds a state from priors by re-applying each observation (and propagation when `index` is set).
BeliefState replay_observations(std::size_t skill_count, double prior_alpha, double prior_beta,
                                std::span<const Observation> log, const SimilarityIndex* index,
                                PropagationMode mode = PropagationMode::as_written);

// ---------------------------------------------------------------------------
// Serialization

nlohmann::json observation_to_json(const Observation& obs, const SkillGraph& graph);
/// Throws ObservationError naming the field or node at fault.
Observation observation_from_json(const nlohmann::json& doc, const SkillGraph& graph);

/// JSON lines, one observation per line; blank lines are skipped.
std::vector<Observation> read_observation_log(std::istream& in, const SkillGraph& graph);
std::vector<Observation> read_observation_log(const std::filesystem::path& path, const SkillGraph& graph);
void write_observation_log(std::ostream& out, std::span<const Observation> log, const SkillGraph& graph);

/// CSV: node,alpha,beta,mean,variance,last_practiced
void write_belief_csv(std::ostream& out, const BeliefState& state, const SkillGraph& graph);

}  // namespace pace
