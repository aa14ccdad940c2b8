#pragma once

#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "pace/bandit.hpp"
#include "pace/belief.hpp"
#include "pace/dynamics.hpp"
#include "pace/similarity.hpp"
#include "pace/skill_graph.hpp"

namespace pace {

enum class Granularity { fine, medium, coarse };

std::string_view to_string(Granularity g);
Granularity parse_granularity(std::string_view text);

/// Group of every skill under a granularity: the skill itself (fine), its
/// owning incident type (medium) or that incident's department (coarse).
std::vector<std::size_t> skill_groups(const SkillGraph& graph, Granularity granularity, std::size_t* n_groups = nullptr);

/// Pooled view: each group's posterior is the sum of its members' (alpha, beta).
/// Fine granularity returns the input unchanged.
std::vector<NodeBelief> aggregate_beliefs(const BeliefState& state, const SkillGraph& graph, Granularity granularity);

/// Graph, compiled catalog and similarity index shared by every trainee.
struct Fixture {
  Fixture(SkillGraph g, ScenarioCatalog catalog, SimilarityIndex idx)
      : graph(std::move(g)), table(graph, std::move(catalog)), index(std::move(idx)) {}
  Fixture(const Fixture&) = delete;
  Fixture& operator=(const Fixture&) = delete;

  SkillGraph graph;
  ScenarioTable table;
  SimilarityIndex index;
};

/// Builds the catalog and a hashing-embedding similarity index for `graph`.
std::shared_ptr<const Fixture> make_fixture(SkillGraph graph, std::size_t catalog_size = kDefaultCatalogSize,
                                            std::uint64_t catalog_seed = 7, const SimilarityParams& params = {});
std::shared_ptr<const Fixture> make_fixture(SkillGraph graph, ScenarioCatalog catalog,
                                            const SimilarityParams& params = {});

struct EngineOptions {
  bool propagation = true;
  PropagationMode propagation_mode = PropagationMode::as_written;
  /// Fit lambda/psi from the trainee's history; otherwise population constants.
  bool adaptive_dynamics = true;
  /// Decisions use decay forecasts; when false they use raw posterior means.
  bool forecast = true;
  Granularity granularity = Granularity::fine;
  double kappa = kDefaultKappa;
  double prior_alpha = 1.0;
  double prior_beta = 1.0;
  double mastery_threshold = kMasteryThreshold;
  double weak_threshold = kMasteryThreshold;
  double retention_gap_hours = 24.0;
  double decay_horizon_hours = 24.0;
  FeasibilityFilters filters;
  int n_sessions = 50;
  double prior_sd = 1.0;
  double noise_var = 0.25;
};

struct IngestResult {
  double reward = 0.0;
  std::size_t applied = 0;
};

/// Per-trainee decision state: beliefs, dynamics and one arm per scenario.
/// Sees only observations; it has no access to simulator ground truth.
class CurriculumEngine {
 public:
  CurriculumEngine(std::shared_ptr<const Fixture> fixture, EngineOptions options,
                   std::vector<std::size_t> action_set = {});

  const Fixture& fixture() const { return *fixture_; }
  const ScenarioTable& table() const { return fixture_->table; }
  const EngineOptions& options() const { return options_; }
  const BeliefState& beliefs() const { return beliefs_; }
  const DynamicsTracker& dynamics() const { return dynamics_; }
  std::span<const ArmPosterior> arms() const { return *arms_; }
  std::span<const std::size_t> action_set() const { return action_set_; }
  int session() const { return session_; }
  bool in_session() const { return dynamics_.in_session(); }

  /// Shares another engine's arms (population-level bandit).
  void share_arms(std::shared_ptr<std::vector<ArmPosterior>> arms);

  void begin_session(int t, Timestamp now);
  void end_session();

  /// Forecast means at `now` (raw means when forecasting is off).
  std::vector<double> forecast_means(Timestamp now) const;
  /// Decision view: forecast means pooled by granularity, one per skill.
  std::vector<double> decision_means(Timestamp now) const;
  BatchInputs batch_inputs(Timestamp now) const;

  FeasibleSet feasible(Timestamp now) const;
  BatchSelection recommend(std::size_t k, Timestamp now, Rng& rng) const;
  BatchSelection round_robin(std::size_t k) const;
  BatchSelection deficit_driven(std::size_t k, Timestamp now) const;
  /// Fills context snapshots of an externally chosen batch with the projected-coverage rule.
  void annotate(BatchSelection& batch, Timestamp now) const;

  /// Applies the debrief of one scenario: evidence, propagation, retention
  /// harvest, then the arm update with the realized reward at context `x`.
  IngestResult ingest(std::size_t scenario, std::span<const Observation> observations, const ContextVector& x,
                      Timestamp now);

  BeliefSummary summary(Timestamp now) const;
  std::size_t decay_risk(Timestamp now) const;

 private:
  std::shared_ptr<const Fixture> fixture_;
  EngineOptions options_;
  std::vector<std::size_t> action_set_;
  std::vector<std::size_t> groups_;
  std::size_t n_groups_ = 0;
  BeliefState beliefs_;
  DynamicsTracker dynamics_;
  std::shared_ptr<std::vector<ArmPosterior>> arms_;
  int session_ = 0;
};

}  // namespace pace
