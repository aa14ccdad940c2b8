#include "pace/engine.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <stdexcept>

namespace pace {

std::string_view to_string(Granularity g) {
  switch (g) {
    case Granularity::fine: return "fine";
    case Granularity::medium: return "medium";
    case Granularity::coarse: return "coarse";
  }
  return "unknown";
}

Granularity parse_granularity(std::string_view text) {
  if (text == "fine") return Granularity::fine;
  if (text == "medium") return Granularity::medium;
  if (text == "coarse") return Granularity::coarse;
  throw std::invalid_argument("unknown granularity '" + std::string(text) + "'");
}

std::vector<std::size_t> skill_groups(const SkillGraph& graph, Granularity granularity, std::size_t* n_groups) {
  const std::size_t n = graph.skill_count();
  std::vector<std::size_t> groups(n);
  std::size_t count = 0;
  switch (granularity) {
    case Granularity::fine:
      std::iota(groups.begin(), groups.end(), std::size_t{0});
      count = n;
      break;
    case Granularity::medium:
      for (SkillIndex s = 0; s < n; ++s) groups[s] = graph.primary_incident(graph.node_of(s));
      count = graph.incidents().size();
      break;
    case Granularity::coarse: {
      std::map<std::string, std::size_t> dept;
      for (const auto& inc : graph.incidents()) dept.emplace(inc.department, 0);
      for (auto& [name, id] : dept) id = count++;
      for (SkillIndex s = 0; s < n; ++s) {
        groups[s] = dept.at(graph.incidents()[graph.primary_incident(graph.node_of(s))].department);
      }
      break;
    }
  }
  if (n_groups != nullptr) *n_groups = count;
  return groups;
}

std::vector<NodeBelief> aggregate_beliefs(const BeliefState& state, const SkillGraph& graph, Granularity granularity) {
  std::vector<NodeBelief> out(state.beliefs().begin(), state.beliefs().end());
  if (granularity == Granularity::fine) return out;
  std::size_t n_groups = 0;
  const auto groups = skill_groups(graph, granularity, &n_groups);
  std::vector<NodeBelief> pooled(n_groups, NodeBelief{0.0, 0.0, std::nullopt});
  for (SkillIndex s = 0; s < state.size(); ++s) {
    pooled[groups[s]].alpha += state[s].alpha;
    pooled[groups[s]].beta += state[s].beta;
  }
  return pooled;
}

std::shared_ptr<const Fixture> make_fixture(SkillGraph graph, ScenarioCatalog catalog, const SimilarityParams& params) {
  const auto embeddings = embed_skills(graph, HashingEmbeddingProvider{});
  SimilarityIndex index = build_index(graph, embeddings, params);
  return std::make_shared<const Fixture>(std::move(graph), std::move(catalog), std::move(index));
}

std::shared_ptr<const Fixture> make_fixture(SkillGraph graph, std::size_t catalog_size, std::uint64_t catalog_seed,
                                            const SimilarityParams& params) {
  ScenarioCatalog catalog = build_scenario_catalog(graph, catalog_size, catalog_seed);
  return make_fixture(std::move(graph), std::move(catalog), params);
}

// ---------------------------------------------------------------------------

CurriculumEngine::CurriculumEngine(std::shared_ptr<const Fixture> fixture, EngineOptions options,
                                   std::vector<std::size_t> action_set)
    : fixture_(std::move(fixture)),
      options_(options),
      action_set_(std::move(action_set)),
      beliefs_(init_beliefs(fixture_->graph, options.prior_alpha, options.prior_beta)),
      dynamics_(DynamicsTracker::Options{options.kappa, options.retention_gap_hours, options.adaptive_dynamics}),
      arms_(std::make_shared<std::vector<ArmPosterior>>(
          fixture_->table.size(), ArmPosterior(kContextDim, options.prior_sd, options.noise_var))) {
  if (options_.n_sessions <= 0) throw std::invalid_argument("n_sessions must be positive");
  groups_ = skill_groups(fixture_->graph, options_.granularity, &n_groups_);
  if (action_set_.empty()) {
    action_set_.resize(fixture_->table.size());
    std::iota(action_set_.begin(), action_set_.end(), std::size_t{0});
  }
}

void CurriculumEngine::share_arms(std::shared_ptr<std::vector<ArmPosterior>> arms) {
  if (!arms || arms->size() != fixture_->table.size()) throw std::invalid_argument("shared arms must match catalog");
  arms_ = std::move(arms);
}

void CurriculumEngine::begin_session(int t, Timestamp now) {
  session_ = t;
  dynamics_.begin_session(t, beliefs_, now);
}

void CurriculumEngine::end_session() { dynamics_.end_session(beliefs_); }

std::vector<double> CurriculumEngine::forecast_means(Timestamp now) const {
  if (!options_.forecast) return beliefs_.means();
  const auto& est = dynamics_.estimate();
  return decay_beliefs(beliefs_, now, est.psi_hat, est.kappa);
}

std::vector<double> CurriculumEngine::decision_means(Timestamp now) const {
  std::vector<double> means = forecast_means(now);
  if (options_.granularity == Granularity::fine) return means;
  std::vector<double> alpha(n_groups_, 0.0);
  std::vector<double> count(n_groups_, 0.0);
  for (SkillIndex s = 0; s < beliefs_.size(); ++s) {
    const double n = beliefs_[s].count();
    alpha[groups_[s]] += means[s] * n;
    count[groups_[s]] += n;
  }
  for (SkillIndex s = 0; s < beliefs_.size(); ++s) means[s] = alpha[groups_[s]] / count[groups_[s]];
  return means;
}

namespace {

double mean_variance_view(const BeliefState& beliefs, std::span<const double> means,
                          std::span<const std::size_t> groups, std::size_t n_groups, bool pooled) {
  if (beliefs.size() == 0) return 0.0;
  double total = 0.0;
  if (!pooled) {
    for (SkillIndex s = 0; s < beliefs.size(); ++s) {
      const double n = beliefs[s].count();
      total += means[s] * (1.0 - means[s]) / (n + 1.0);
    }
  } else {
    std::vector<double> count(n_groups, 0.0);
    for (SkillIndex s = 0; s < beliefs.size(); ++s) count[groups[s]] += beliefs[s].count();
    for (SkillIndex s = 0; s < beliefs.size(); ++s) {
      total += means[s] * (1.0 - means[s]) / (count[groups[s]] + 1.0);
    }
  }
  return total / static_cast<double>(beliefs.size());
}

}  // namespace

BatchInputs CurriculumEngine::batch_inputs(Timestamp now) const {
  BatchInputs in;
  in.means = decision_means(now);
  in.mean_variance =
      mean_variance_view(beliefs_, in.means, groups_, n_groups_, options_.granularity != Granularity::fine);
  in.dynamics = dynamics_.estimate();
  in.decay_risk = decay_risk(now);
  in.session = session_;
  in.n_sessions = options_.n_sessions;
  in.mastery_threshold = options_.mastery_threshold;
  in.weak_threshold = options_.weak_threshold;
  return in;
}

FeasibleSet CurriculumEngine::feasible(Timestamp now) const {
  return feasible_actions(fixture_->table, decision_means(now), options_.filters, action_set_);
}

BatchSelection CurriculumEngine::recommend(std::size_t k, Timestamp now, Rng& rng) const {
  const BatchInputs in = batch_inputs(now);
  const FeasibleSet fs = feasible_actions(fixture_->table, in.means, options_.filters, action_set_);
  if (fs.scenarios.empty()) throw std::runtime_error("no valid scenario in the action set");
  BatchSelection batch = select_batch(fixture_->table, *arms_, in, fs.scenarios, k, rng);
  batch.fallback = fs.fallback;
  return batch;
}

BatchSelection CurriculumEngine::round_robin(std::size_t k) const {
  return round_robin_policy(fixture_->table, session_, k, action_set_);
}

BatchSelection CurriculumEngine::deficit_driven(std::size_t k, Timestamp now) const {
  BatchSelection batch = deficit_driven_policy(fixture_->table, decision_means(now), k, action_set_,
                                               options_.mastery_threshold);
  batch.session = session_;
  return batch;
}

void CurriculumEngine::annotate(BatchSelection& batch, Timestamp now) const {
  const BatchInputs in = batch_inputs(now);
  std::vector<double> projected = in.means;
  for (BatchPick& pick : batch.picks) {
    pick.context = batch_context(in, projected, projected.size());
    const Eigen::VectorXd x = pick.context;
    pick.mean_score = (*arms_)[pick.scenario].mean_score(x);
    for (const SkillIndex s : fixture_->table.activated(pick.scenario)) {
      projected[s] = std::max(projected[s], in.mastery_threshold);
    }
  }
}

IngestResult CurriculumEngine::ingest(std::size_t scenario, std::span<const Observation> observations,
                                      const ContextVector& x, Timestamp now) {
  if (scenario >= fixture_->table.size()) throw std::out_of_range("unknown scenario index");
  if (!dynamics_.in_session()) throw std::logic_error("ingest outside a session");
  const auto& est = dynamics_.estimate();
  const std::vector<double> before = decay_beliefs(beliefs_, now, est.psi_hat, est.kappa);
  IngestResult result;
  for (const Observation& obs : observations) {
    validate(obs);
    dynamics_.before_observation(beliefs_, obs);
    update_belief(beliefs_, obs);
    if (options_.propagation && obs.outcome != Outcome::not_applicable) {
      propagate(beliefs_, fixture_->index, obs.skill, options_.propagation_mode);
    }
    ++result.applied;
  }
  const std::vector<double> after = decay_beliefs(beliefs_, now, est.psi_hat, est.kappa);
  result.reward = compute_reward(before, after, fixture_->table.activated(scenario));
  (*arms_)[scenario].update(x, result.reward);
  return result;
}

BeliefSummary CurriculumEngine::summary(Timestamp now) const {
  BeliefSummary s;
  s.means = decision_means(now);
  s.mean_variance =
      mean_variance_view(beliefs_, s.means, groups_, n_groups_, options_.granularity != Granularity::fine);
  std::tie(s.coverage, s.weak_mean) =
      coverage_and_weak_mean(s.means, options_.mastery_threshold, options_.weak_threshold);
  return s;
}

std::size_t CurriculumEngine::decay_risk(Timestamp now) const {
  const auto& est = dynamics_.estimate();
  return decay_risk_count(beliefs_, now, est.psi_hat, est.kappa, options_.mastery_threshold,
                          options_.decay_horizon_hours);
}

}  // namespace pace
