#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "pace/bandit.hpp"
#include "pace/engine.hpp"
#include "pace/trainee_sim.hpp"

namespace pace {

enum class Policy { pace_full, pace_no_prop, pace_no_dyn, round_robin, deficit_driven };

std::string_view to_string(Policy p);
Policy parse_policy(std::string_view text);
bool is_pace_variant(Policy p);

/// Engine switches implied by a policy: the ablations drop propagation or
/// fitted dynamics; the baselines run on raw debrief beliefs.
EngineOptions engine_options_for(Policy policy, EngineOptions base);

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ExperimentConfig {
  Policy policy = Policy::pace_full;
  Granularity granularity = Granularity::fine;
  int n_sessions = 50;
  std::size_t batch_k = kDefaultBatchSize;
  int cold_start = 15;
  double session_hours = 2.0;
  int gap_every = 5;
  double gap_hours = 24.0;
  std::vector<ArchetypeName> archetypes = {ArchetypeName::fast, ArchetypeName::moderate, ArchetypeName::struggling,
                                           ArchetypeName::quick_forgetter};
  std::size_t trainees_per_archetype = 10;
  std::uint64_t seed = 42;
  /// Graph file, or generator parameters when unset.
  std::optional<std::filesystem::path> graph_path;
  GraphGenParams graph_params;
  std::optional<std::filesystem::path> catalog_path;
  std::size_t catalog_size = kDefaultCatalogSize;
  std::uint64_t catalog_seed = 7;
  double mastery_threshold = kMasteryThreshold;
  std::size_t exam_items = 63;
  double kappa = kDefaultKappa;
  double prior_alpha = 1.0;
  double prior_beta = 1.0;
  PropagationMode propagation_mode = PropagationMode::as_written;
  FeasibilityFilters filters;
  SimilarityParams similarity;
  BehaviorParams behavior;
  bool shared_arms = false;
  /// Worker threads over trainees; 0 = hardware concurrency.
  unsigned threads = 0;
  /// When false nothing reads simulator truth (truth columns are left empty).
  bool truth_metrics = true;
  /// Replaces every simulated trainee's forgetting exponent.
  std::optional<double> simulator_psi;

  /// Throws ConfigError on inconsistent settings.
  void validate() const;
};

ExperimentConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const ExperimentConfig& config);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Graph, catalog and similarity index described by the config.
std::shared_ptr<const Fixture> build_fixture(const ExperimentConfig& config);

struct SessionRecord {
  int session = 0;
  double truth_coverage = 0.0;   // NaN without truth metrics
  double belief_coverage = 0.0;
  double delta = 0.0;            // NaN without truth metrics
  double mean_variance = 0.0;
  double explore_ratio = 0.0;
  double reward = 0.0;
  std::optional<double> best_score;
  double lambda_hat = 0.0;
  double psi_hat = 0.0;
  BatchSelection batch;
};

struct TraineeResult {
  std::string id;
  ArchetypeName archetype = ArchetypeName::moderate;
  std::size_t instance = 0;
  std::vector<SessionRecord> series;
  std::optional<double> c10, c30, c50;  // truth coverage fractions
  std::optional<int> z2h;
  std::optional<double> random_exam;    // 0-100
  std::optional<double> terminal_mean_theta;
};

struct RunResult {
  ExperimentConfig config;
  std::vector<TraineeResult> trainees;
  std::vector<std::size_t> exam;
  std::shared_ptr<const Fixture> fixture;
};

struct TraineeSpec {
  ArchetypeName archetype;
  std::size_t instance;
  std::string id;
  std::uint64_t seed;
  std::size_t skill_count;
};

using TraineeFactory = std::function<std::unique_ptr<Trainee>(const TraineeSpec&)>;

/// The simulator agent with the config's behavior, kappa and psi override.
TraineeFactory default_trainee_factory(const ExperimentConfig& config);

/// Deterministic for a fixed config: trainee streams are derived from the master
/// seed and the (archetype, instance) pair, so thread count does not matter and
/// the same trainee faces every policy.
RunResult run_training(const ExperimentConfig& config);
RunResult run_training(const ExperimentConfig& config, std::shared_ptr<const Fixture> fixture,
                       const TraineeFactory& factory = {});

// ---------------------------------------------------------------------------
// Results

struct MetricsRow {
  std::string trainee;
  std::string archetype;
  std::string policy;
  std::string granularity;
  std::optional<double> c10, c30, c50, z2h, re;
};

/// Writes metrics.csv, series.csv, summary.csv and trace.jsonl into `dir`.
/// Throws std::runtime_error when the directory cannot be written.
void export_results(const RunResult& result, const std::filesystem::path& dir);
std::vector<MetricsRow> read_metrics_csv(const std::filesystem::path& path);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};

/// Mean and sample standard deviation of the present values.
MeanStd mean_std(std::span<const std::optional<double>> values);

}  // namespace pace
