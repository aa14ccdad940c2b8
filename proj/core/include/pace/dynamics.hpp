#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "pace/belief.hpp"
#include "pace/timestamp.hpp"

namespace pace {

inline constexpr double kDefaultKappa = 0.1;       // per hour
inline constexpr double kPopulationLambda = 0.08;
inline constexpr double kPopulationPsi = 0.30;
inline constexpr double kPsiMin = 0.01;
inline constexpr double kPsiMax = 1.0;
inline constexpr std::size_t kMinRetentionPairs = 3;

struct PracticeGain {
  SkillIndex skill = 0;
  int session = 0;
  double delta = 0.0;
};

struct RetentionPair {
  SkillIndex skill = 0;
  double theta_before = 0.0;
  double theta_after = 0.0;
  double gap_hours = 0.0;
};

struct DynamicsEstimate {
  double lambda_hat = kPopulationLambda;
  double psi_hat = kPopulationPsi;
  double kappa = kDefaultKappa;
  std::size_t n_gain_samples = 0;
  std::size_t n_retention_samples = 0;
};

nlohmann::json dynamics_to_json(const DynamicsEstimate& d);

/// Mean of the deltas; the population default for an empty history.
double estimate_lambda(std::span<const PracticeGain> history);

/// theta * (1 + kappa * gap)^(-psi)
double apply_forgetting(double theta, double gap_hours, double psi, double kappa);

/// Origin-constrained log-linear least squares, clamped to [0.01, 1].
double estimate_psi(std::span<const RetentionPair> pairs, double kappa);

/// Forecast means at `now`, decayed from each node's last-practice anchor.
std::vector<double> decay_beliefs(const BeliefState& state, Timestamp now, double psi_hat, double kappa);

/// Nodes at or above the threshold now that fall below it within the horizon.
std::size_t decay_risk_count(const BeliefState& state, Timestamp now, double psi_hat, double kappa,
                             double mastery_threshold = kMasteryThreshold, double horizon_hours = 24.0);

/// Per-trainee record of practice gains and retention pairs.
///
/// Sessions are bracketed by begin_session/end_session. Gains are recorded
/// once per (node, session) as the node's mean observed score in the session
/// minus its decayed forecast at session start. Retention pairs are emitted when a node is
/// first re-observed in a session that starts at least `retention_gap_hours`
/// after its last practice; pairs sharing a (session, last-practice session)
/// are pooled into one ratio.
class DynamicsTracker {
 public:
  struct Options {
    double kappa = kDefaultKappa;
    double retention_gap_hours = 24.0;
    /// When false the estimate stays at the population constants.
    bool adaptive = true;
  };

  DynamicsTracker() : DynamicsTracker(Options{}) {}
  explicit DynamicsTracker(Options options);

  const Options& options() const { return options_; }
  const DynamicsEstimate& estimate() const { return estimate_; }
  std::span<const PracticeGain> gains() const { return gains_; }
  std::span<const RetentionPair> retention_pairs() const { return pairs_; }
  int session() const { return session_; }
  bool in_session() const { return open_; }

  void begin_session(int session, const BeliefState& state, Timestamp now);

  /// Call before the observation is applied to `state`.
  void before_observation(const BeliefState& state, const Observation& obs);

  /// Closes the session, records gains and refreshes the estimate.
  void end_session(const BeliefState& state);

 private:
  struct PendingRetention {
    int last_session;
    SkillIndex first_skill;
    double theta_before = 0.0;
    double gap_hours = 0.0;
    double score_sum = 0.0;
    std::size_t n = 0;
  };

  void refresh();

  Options options_;
  DynamicsEstimate estimate_;
  std::vector<PracticeGain> gains_;
  std::vector<RetentionPair> pairs_;

  int session_ = 0;
  bool open_ = false;
  Timestamp session_start_;
  std::vector<double> baseline_;
  std::vector<int> last_session_;       // per skill, 0 = never
  std::vector<std::size_t> touched_;  // observations this session, per skill
  std::vector<double> score_sum_;
  std::vector<SkillIndex> touched_list_;
  std::vector<PendingRetention> pending_;
};

}  // namespace pace
