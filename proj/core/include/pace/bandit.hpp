#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "pace/belief.hpp"
#include "pace/dynamics.hpp"
#include "pace/rng.hpp"
#include "pace/skill_graph.hpp"

namespace pace {

inline constexpr int kContextDim = 7;
inline constexpr std::size_t kDefaultBatchSize = 5;

/// [mean variance, coverage, lambda_hat, psi_hat, weak mean, decay risk / |V|, t / N]
using ContextVector = Eigen::Matrix<double, kContextDim, 1>;

ContextVector build_context(const BeliefSummary& summary, const DynamicsEstimate& dyn, std::size_t decay_risk,
                            std::size_t skill_count, int t, int n_sessions);

std::array<double, kContextDim> to_array(const ContextVector& x);

/// Bayesian linear regression r ~ N(B'x, noise) with prior B ~ N(0, prior_sd^2 I).
/// Stored in information form (precision, precision * mean).
class ArmPosterior {
 public:
  explicit ArmPosterior(int dim = kContextDim, double prior_sd = 1.0, double noise_var = 0.25);

  int dim() const { return static_cast<int>(b_.size()); }
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& precision() const { return precision_; }
  Eigen::MatrixXd covariance() const;
  std::size_t n_pulls() const { return n_pulls_; }
  double noise_var() const { return noise_var_; }
  /// Set when an update needed jitter to stay positive definite.
  bool jittered() const { return jittered_; }

  double mean_score(const Eigen::VectorXd& x) const { return mean_.dot(x); }
  /// x' Sigma x
  double predictive_variance(const Eigen::VectorXd& x) const;

  /// Draws B ~ posterior; consumes exactly dim() standard normals.
  Eigen::VectorXd sample(Rng& rng) const;

  void update(const Eigen::VectorXd& x, double reward);

  friend bool operator==(const ArmPosterior& a, const ArmPosterior& b) {
    return a.precision_ == b.precision_ && a.b_ == b.b_ && a.n_pulls_ == b.n_pulls_;
  }

 private:
  void refactor();

  double noise_var_;
  Eigen::MatrixXd precision_;
  Eigen::VectorXd b_;
  Eigen::VectorXd mean_;
  Eigen::MatrixXd chol_l_;  // lower factor of the precision
  std::size_t n_pulls_ = 0;
  bool jittered_ = false;
};

struct Candidate {
  std::size_t arm;
  std::string_view id;
};

struct ThompsonPick {
  std::size_t arm = 0;
  double sampled_score = 0.0;
  double mean_score = 0.0;
  bool explore = false;
};

/// Argmax of sampled scores over the candidates; ties go to the smaller id.
/// Throws std::invalid_argument when `candidates` is empty.
ThompsonPick thompson_select(std::span<const ArmPosterior> arms, std::span<const Candidate> candidates,
                             const Eigen::VectorXd& x, Rng& rng);

/// Sum over the activated nodes of after - decayed_before.
double compute_reward(std::span<const double> decayed_before, std::span<const double> after,
                      std::span<const SkillIndex> activated);

// ---------------------------------------------------------------------------
// Action space

struct FeasibilityFilters {
  bool enabled = true;
  double prereq_floor = 0.25;
  std::size_t min_size = 0;
  std::size_t max_size = static_cast<std::size_t>(-1);
};

struct FeasibleSet {
  std::vector<std::size_t> scenarios;  // table indices, ascending
  bool fallback = false;
};

/// `means` is the decision view of mastery (one value per skill). `allowed`
/// restricts the candidate pool (e.g. to exclude held-out exam items); empty = all.
FeasibleSet feasible_actions(const ScenarioTable& table, std::span<const double> means,
                             const FeasibilityFilters& filters, std::span<const std::size_t> allowed = {});

// ---------------------------------------------------------------------------
// Batch selection

/// Quantities that stay fixed while a batch is being assembled.
struct BatchInputs {
  std::vector<double> means;  // decision-view means, one per skill
  double mean_variance = 0.0;
  DynamicsEstimate dynamics;
  std::size_t decay_risk = 0;
  int session = 0;
  int n_sessions = 1;
  double mastery_threshold = kMasteryThreshold;
  double weak_threshold = kMasteryThreshold;
};

struct BatchPick {
  std::size_t scenario = 0;
  double sampled_score = 0.0;
  double mean_score = 0.0;
  bool explore = false;
  ContextVector context = ContextVector::Zero();
};

struct BatchSelection {
  int session = 0;
  std::vector<BatchPick> picks;
  bool short_batch = false;
  bool fallback = false;
};

/// Context for the current projected means.
ContextVector batch_context(const BatchInputs& in, std::span<const double> projected, std::size_t skill_count);

/// K sequential Thompson draws. After each pick its V_S is projected to at
/// least the mastery threshold for the coverage and weak-mean components only.
BatchSelection select_batch(const ScenarioTable& table, std::span<const ArmPosterior> arms, const BatchInputs& in,
                            std::span<const std::size_t> feasible, std::size_t k, Rng& rng);

/// Cycles incident types; within a type, scenarios in table order. Pick k of
/// session t (1-based) is global pick (t-1)*K + k.
BatchSelection round_robin_policy(const ScenarioTable& table, int t, std::size_t k,
                                  std::span<const std::size_t> allowed = {});

/// Greedy lowest mean belief over V_S, re-projected after each pick; ties by id.
BatchSelection deficit_driven_policy(const ScenarioTable& table, std::span<const double> means, std::size_t k,
                                     std::span<const std::size_t> allowed = {},
                                     double mastery_threshold = kMasteryThreshold);

/// One JSON object per pick: {session, rank, scenario, sampled_score, mean_score, explore, context}.
nlohmann::json pick_to_json(const BatchSelection& batch, std::size_t rank, const ScenarioTable& table);

}  // namespace pace
