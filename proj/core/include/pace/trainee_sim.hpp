#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "pace/belief.hpp"
#include "pace/dynamics.hpp"
#include "pace/rng.hpp"
#include "pace/skill_graph.hpp"

namespace pace {

enum class ArchetypeName { fast, moderate, struggling, quick_forgetter };

std::string_view to_string(ArchetypeName a);
ArchetypeName parse_archetype(std::string_view text);

struct Archetype {
  ArchetypeName name = ArchetypeName::moderate;
  double lambda = 0.0;
  double psi = 0.0;
};

/// Fixed parameter table: fast (0.12, 0.15), moderate (0.07, 0.25),
/// struggling (0.03, 0.35), quick forgetter (0.10, 0.45).
Archetype archetype(ArchetypeName name);

struct BehaviorParams {
  /// Share of failures reported as violations; the rest are partial.
  double violation_share = 0.7;
  double prompt_probability = 0.1;
  double misconception_weight = 0.7;
  double omission_weight = 0.3;
  double parameter_noise = 0.15;
  double initial_low = 0.05;
  double initial_high = 0.35;
};

/// What the training loop may do with a trainee. The engine only ever sees
/// the observations returned by respond(); truth() is for metrics.
class Trainee {
 public:
  virtual ~Trainee() = default;
  virtual std::vector<Observation> respond(std::span<const SkillIndex> activated, Timestamp now, Rng& rng) = 0;
  virtual void learn(std::span<const SkillIndex> practiced, Timestamp now) = 0;
  virtual void forget(Timestamp now) = 0;
  /// Current true mastery, one value per skill.
  virtual std::span<const double> truth() const = 0;
};

class TraineeAgent final : public Trainee {
 public:
  TraineeAgent(std::string id, ArchetypeName archetype, double lambda, double psi, std::vector<double> theta,
               std::uint64_t seed, double kappa = kDefaultKappa, BehaviorParams behavior = {});

  const std::string& id() const { return id_; }
  ArchetypeName archetype() const { return archetype_; }
  double lambda() const { return lambda_; }
  double psi() const { return psi_; }
  double kappa() const { return kappa_; }
  std::uint64_t seed() const { return seed_; }
  const BehaviorParams& behavior() const { return behavior_; }
  std::optional<Timestamp> last_practiced(SkillIndex s) const { return last_practiced_.at(s); }

  /// Overrides the forgetting exponent (used to switch decay off in checks).
  void set_psi(double psi) { psi_ = psi; }

  std::vector<Observation> respond(std::span<const SkillIndex> activated, Timestamp now, Rng& rng) override;
  /// theta += lambda * (1 - theta) for every practiced node; re-anchors decay at `now`.
  void learn(std::span<const SkillIndex> practiced, Timestamp now) override;
  /// Anchored power-law decay; never-practiced nodes keep their initial value.
  void forget(Timestamp now) override;
  std::span<const double> truth() const override { return theta_; }

  /// Single-node response law, exposed for calibration checks.
  Observation respond_one(SkillIndex s, double theta, Timestamp now, Rng& rng) const;

  nlohmann::json snapshot(const SkillGraph& graph) const;

 private:
  std::string id_;
  ArchetypeName archetype_;
  double lambda_;
  double psi_;
  double kappa_;
  std::uint64_t seed_;
  BehaviorParams behavior_;
  std::vector<double> theta_;
  std::vector<double> anchor_;
  std::vector<std::optional<Timestamp>> last_practiced_;
};

/// lambda and psi scaled by independent U[0.85, 1.15] factors; initial theta
/// i.i.d. U[0.05, 0.35]. Deterministic per seed.
TraineeAgent instantiate_archetype(ArchetypeName name, std::uint64_t seed, std::size_t skill_count,
                                   std::string id = {}, double kappa = kDefaultKappa, BehaviorParams behavior = {});

/// 100 * mean over exam scenarios of the mean truth over V_S. Empty V_S are skipped.
double exam_score(std::span<const double> truth, const ScenarioTable& table, std::span<const std::size_t> exam);

}  // namespace pace
