#include "pace/bandit.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include <spdlog/spdlog.h>

namespace pace {

ContextVector build_context(const BeliefSummary& summary, const DynamicsEstimate& dyn, std::size_t decay_risk,
                            std::size_t skill_count, int t, int n_sessions) {
  if (n_sessions <= 0) throw std::invalid_argument("n_sessions must be positive");
  ContextVector x;
  x << summary.mean_variance, summary.coverage, dyn.lambda_hat, dyn.psi_hat, summary.weak_mean,
      skill_count > 0 ? static_cast<double>(decay_risk) / static_cast<double>(skill_count) : 0.0,
      std::clamp(static_cast<double>(t) / n_sessions, 0.0, 1.0);
  return x;
}

std::array<double, kContextDim> to_array(const ContextVector& x) {
  std::array<double, kContextDim> a{};
  for (int i = 0; i < kContextDim; ++i) a[static_cast<std::size_t>(i)] = x[i];
  return a;
}

// ---------------------------------------------------------------------------

ArmPosterior::ArmPosterior(int dim, double prior_sd, double noise_var)
    : noise_var_(noise_var),
      precision_(Eigen::MatrixXd::Identity(dim, dim) / (prior_sd * prior_sd)),
      b_(Eigen::VectorXd::Zero(dim)),
      mean_(Eigen::VectorXd::Zero(dim)) {
  if (dim <= 0) throw std::invalid_argument("arm dimension must be positive");
  if (!(prior_sd > 0.0) || !(noise_var > 0.0)) throw std::invalid_argument("prior and noise scales must be positive");
  refactor();
}

void ArmPosterior::refactor() {
  Eigen::LLT<Eigen::MatrixXd> llt(precision_);
  if (llt.info() != Eigen::Success) {
    precision_ = 0.5 * (precision_ + precision_.transpose()).eval();
    precision_ += 1e-9 * Eigen::MatrixXd::Identity(dim(), dim());
    llt.compute(precision_);
    jittered_ = true;
    spdlog::debug("arm posterior lost positive definiteness; jittered");
    if (llt.info() != Eigen::Success) throw std::runtime_error("arm precision is not positive definite");
  }
  chol_l_ = llt.matrixL();
  mean_ = llt.solve(b_);
}

Eigen::MatrixXd ArmPosterior::covariance() const {
  return Eigen::LLT<Eigen::MatrixXd>(precision_).solve(Eigen::MatrixXd::Identity(dim(), dim()));
}

double ArmPosterior::predictive_variance(const Eigen::VectorXd& x) const {
  const Eigen::VectorXd w = chol_l_.triangularView<Eigen::Lower>().solve(x);
  return w.squaredNorm();
}

Eigen::VectorXd ArmPosterior::sample(Rng& rng) const {
  std::normal_distribution<double> normal;
  Eigen::VectorXd z(dim());
  for (int i = 0; i < dim(); ++i) z[i] = normal(rng);
  // precision = L L', so L'^{-1} z has covariance precision^{-1}.
  return mean_ + chol_l_.transpose().triangularView<Eigen::Upper>().solve(z);
}

void ArmPosterior::update(const Eigen::VectorXd& x, double reward) {
  if (x.size() != dim()) throw std::invalid_argument("context dimension mismatch");
  precision_.noalias() += x * x.transpose() / noise_var_;
  b_ += x * (reward / noise_var_);
  ++n_pulls_;
  refactor();
}

ThompsonPick thompson_select(std::span<const ArmPosterior> arms, std::span<const Candidate> candidates,
                             const Eigen::VectorXd& x, Rng& rng) {
  if (candidates.empty()) throw std::invalid_argument("thompson_select: no feasible arms");
  auto better = [](double score, std::string_view id, double best, std::string_view best_id) {
    return score > best || (score == best && id < best_id);
  };
  ThompsonPick pick;
  std::size_t best_sample = 0;
  std::size_t best_mean = 0;
  double top_sample = -std::numeric_limits<double>::infinity();
  double top_mean = -std::numeric_limits<double>::infinity();
  std::vector<double> sampled(candidates.size());
  std::vector<double> means(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const ArmPosterior& arm = arms[candidates[i].arm];
    sampled[i] = arm.sample(rng).dot(x);
    means[i] = arm.mean_score(x);
    if (i == 0 || better(sampled[i], candidates[i].id, top_sample, candidates[best_sample].id)) {
      top_sample = sampled[i];
      best_sample = i;
    }
    if (i == 0 || better(means[i], candidates[i].id, top_mean, candidates[best_mean].id)) {
      top_mean = means[i];
      best_mean = i;
    }
  }
  pick.arm = candidates[best_sample].arm;
  pick.sampled_score = sampled[best_sample];
  pick.mean_score = means[best_sample];
  pick.explore = best_sample != best_mean;
  return pick;
}

double compute_reward(std::span<const double> decayed_before, std::span<const double> after,
                      std::span<const SkillIndex> activated) {
  if (decayed_before.size() != after.size()) throw std::invalid_argument("reward vectors differ in length");
  double r = 0.0;
  for (const SkillIndex s : activated) r += after[s] - decayed_before[s];
  return r;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::size_t> candidate_pool(const ScenarioTable& table, std::span<const std::size_t> allowed) {
  if (!allowed.empty()) return {allowed.begin(), allowed.end()};
  std::vector<std::size_t> all(table.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return all;
}

}  // namespace

FeasibleSet feasible_actions(const ScenarioTable& table, std::span<const double> means,
                             const FeasibilityFilters& filters, std::span<const std::size_t> allowed) {
  FeasibleSet out;
  std::vector<std::size_t> valid;
  for (const std::size_t i : candidate_pool(table, allowed)) {
    if (!table.activated(i).empty()) valid.push_back(i);
  }
  if (!filters.enabled) {
    out.scenarios = std::move(valid);
    return out;
  }
  for (const std::size_t i : valid) {
    const auto size = table.activated(i).size();
    if (size < filters.min_size || size > filters.max_size) continue;
    const auto preds = table.external_predecessors(i);
    if (!preds.empty()) {
      double sum = 0.0;
      for (const SkillIndex s : preds) sum += means[s];
      if (sum / static_cast<double>(preds.size()) < filters.prereq_floor) continue;
    }
    out.scenarios.push_back(i);
  }
  if (out.scenarios.empty() && !valid.empty()) {
    spdlog::warn("no scenario passes the feasibility filters; falling back to validity only");
    out.scenarios = std::move(valid);
    out.fallback = true;
  }
  return out;
}

ContextVector batch_context(const BatchInputs& in, std::span<const double> projected, std::size_t skill_count) {
  BeliefSummary summary;
  summary.mean_variance = in.mean_variance;
  std::tie(summary.coverage, summary.weak_mean) =
      coverage_and_weak_mean(projected, in.mastery_threshold, in.weak_threshold);
  return build_context(summary, in.dynamics, in.decay_risk, skill_count, in.session, in.n_sessions);
}

BatchSelection select_batch(const ScenarioTable& table, std::span<const ArmPosterior> arms, const BatchInputs& in,
                            std::span<const std::size_t> feasible, std::size_t k, Rng& rng) {
  if (feasible.empty()) throw std::invalid_argument("select_batch: feasible set is empty");
  if (arms.size() != table.size()) throw std::invalid_argument("select_batch: one arm per scenario required");
  BatchSelection batch;
  batch.session = in.session;
  std::vector<double> projected = in.means;
  std::vector<Candidate> remaining;
  remaining.reserve(feasible.size());
  for (const std::size_t i : feasible) remaining.push_back({i, table.scenario(i).id});
  const std::size_t skills = in.means.size();
  while (batch.picks.size() < k && !remaining.empty()) {
    const ContextVector x = batch_context(in, projected, skills);
    const Eigen::VectorXd xd = x;
    const ThompsonPick p = thompson_select(arms, remaining, xd, rng);
    batch.picks.push_back({p.arm, p.sampled_score, p.mean_score, p.explore, x});
    for (const SkillIndex s : table.activated(p.arm)) projected[s] = std::max(projected[s], in.mastery_threshold);
    std::erase_if(remaining, [&](const Candidate& c) { return c.arm == p.arm; });
  }
  batch.short_batch = batch.picks.size() < k;
  return batch;
}

BatchSelection round_robin_policy(const ScenarioTable& table, int t, std::size_t k,
                                  std::span<const std::size_t> allowed) {
  if (t < 1) throw std::invalid_argument("session index is 1-based");
  const auto pool = candidate_pool(table, allowed);
  std::vector<std::vector<std::size_t>> by_type(table.graph().incidents().size());
  for (const std::size_t i : pool) by_type[table.incident(i)].push_back(i);
  std::erase_if(by_type, [](const auto& v) { return v.empty(); });
  BatchSelection batch;
  batch.session = t;
  if (by_type.empty()) {
    batch.short_batch = k > 0;
    return batch;
  }
  const std::size_t n_types = by_type.size();
  for (std::size_t j = 0; j < k; ++j) {
    const std::size_t p = static_cast<std::size_t>(t - 1) * k + j;
    const auto& list = by_type[p % n_types];
    batch.picks.push_back({list[(p / n_types) % list.size()]});
  }
  return batch;
}

BatchSelection deficit_driven_policy(const ScenarioTable& table, std::span<const double> means, std::size_t k,
                                     std::span<const std::size_t> allowed, double mastery_threshold) {
  std::vector<std::size_t> remaining;
  for (const std::size_t i : candidate_pool(table, allowed)) {
    if (!table.activated(i).empty()) remaining.push_back(i);
  }
  std::vector<double> projected(means.begin(), means.end());
  BatchSelection batch;
  while (batch.picks.size() < k && !remaining.empty()) {
    std::size_t best = 0;
    double best_mean = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < remaining.size(); ++r) {
      const auto act = table.activated(remaining[r]);
      double sum = 0.0;
      for (const SkillIndex s : act) sum += projected[s];
      const double m = sum / static_cast<double>(act.size());
      if (m < best_mean ||
          (m == best_mean && table.scenario(remaining[r]).id < table.scenario(remaining[best]).id)) {
        best_mean = m;
        best = r;
      }
    }
    const std::size_t pick = remaining[best];
    batch.picks.push_back({pick, -best_mean, -best_mean});
    for (const SkillIndex s : table.activated(pick)) projected[s] = std::max(projected[s], mastery_threshold);
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(best));
  }
  batch.short_batch = batch.picks.size() < k;
  return batch;
}

nlohmann::json pick_to_json(const BatchSelection& batch, std::size_t rank, const ScenarioTable& table) {
  const BatchPick& p = batch.picks.at(rank);
  return {{"session", batch.session},
          {"rank", rank},
          {"scenario", table.scenario(p.scenario).id},
          {"sampled_score", p.sampled_score},
          {"mean_score", p.mean_score},
          {"explore", p.explore},
          {"context", to_array(p.context)}};
}

}  // namespace pace
