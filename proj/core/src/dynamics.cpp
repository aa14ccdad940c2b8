#include "pace/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pace {

nlohmann::json dynamics_to_json(const DynamicsEstimate& d) {
  return {{"lambda_hat", d.lambda_hat},
          {"psi_hat", d.psi_hat},
          {"kappa", d.kappa},
          {"n_gain_samples", d.n_gain_samples},
          {"n_retention_samples", d.n_retention_samples}};
}

double estimate_lambda(std::span<const PracticeGain> history) {
  if (history.empty()) return kPopulationLambda;
  double sum = 0.0;
  for (const auto& g : history) sum += g.delta;
  return sum / static_cast<double>(history.size());
}

double apply_forgetting(double theta, double gap_hours, double psi, double kappa) {
  if (gap_hours <= 0.0 || psi == 0.0) return theta;
  return theta * std::pow(1.0 + kappa * gap_hours, -psi);
}

double estimate_psi(std::span<const RetentionPair> pairs, double kappa) {
  if (pairs.size() < kMinRetentionPairs) return kPopulationPsi;
  double sxy = 0.0;
  double sxx = 0.0;
  for (const auto& p : pairs) {
    if (!(p.gap_hours > 0.0) || !(p.theta_before > 0.0)) continue;
    const double x = std::log1p(kappa * p.gap_hours);
    const double ratio = std::max(p.theta_after, 1e-12) / p.theta_before;
    const double y = std::min(std::log(ratio), 0.0);
    sxy += x * y;
    sxx += x * x;
  }
  if (sxx == 0.0) return kPopulationPsi;
  return std::clamp(-sxy / sxx, kPsiMin, kPsiMax);
}

std::vector<double> decay_beliefs(const BeliefState& state, Timestamp now, double psi_hat, double kappa) {
  std::vector<double> out(state.size());
  for (SkillIndex s = 0; s < state.size(); ++s) {
    const NodeBelief& b = state[s];
    out[s] = b.last_practiced ? apply_forgetting(b.mean(), elapsed_hours(*b.last_practiced, now), psi_hat, kappa)
                              : b.mean();
  }
  return out;
}

std::size_t decay_risk_count(const BeliefState& state, Timestamp now, double psi_hat, double kappa,
                             double mastery_threshold, double horizon_hours) {
  std::size_t d = 0;
  const Timestamp later{now.hours + horizon_hours};
  for (SkillIndex s = 0; s < state.size(); ++s) {
    const NodeBelief& b = state[s];
    if (!b.last_practiced) {
      continue;  // no anchor, so the forecast is flat
    }
    const double current = apply_forgetting(b.mean(), elapsed_hours(*b.last_practiced, now), psi_hat, kappa);
    const double future = apply_forgetting(b.mean(), elapsed_hours(*b.last_practiced, later), psi_hat, kappa);
    if (current >= mastery_threshold && future < mastery_threshold) ++d;
  }
  return d;
}

// ---------------------------------------------------------------------------

DynamicsTracker::DynamicsTracker(Options options) : options_(options) {
  if (!(options_.kappa > 0.0)) throw std::invalid_argument("kappa must be positive");
  estimate_.kappa = options_.kappa;
}

void DynamicsTracker::begin_session(int session, const BeliefState& state, Timestamp now) {
  if (open_) throw std::logic_error("begin_session called twice without end_session");
  session_ = session;
  open_ = true;
  session_start_ = now;
  baseline_ = decay_beliefs(state, now, estimate_.psi_hat, options_.kappa);
  if (last_session_.size() != state.size()) {
    last_session_.assign(state.size(), 0);
    touched_.assign(state.size(), 0);
    score_sum_.assign(state.size(), 0.0);
  }
  touched_list_.clear();
  pending_.clear();
}

void DynamicsTracker::before_observation(const BeliefState& state, const Observation& obs) {
  if (!open_) throw std::logic_error("observation outside a session");
  if (obs.outcome == Outcome::not_applicable) return;
  const SkillIndex s = obs.skill;
  const double score = obs.outcome == Outcome::compliant ? 1.0 : obs.outcome == Outcome::partial ? 0.5 : 0.0;
  score_sum_[s] += score;
  if (touched_[s]++ == 0) {
    touched_list_.push_back(s);
    const NodeBelief& b = state[s];
    if (b.last_practiced && last_session_[s] != 0 && last_session_[s] != session_) {
      const double gap = elapsed_hours(*b.last_practiced, obs.at);
      if (elapsed_hours(*b.last_practiced, session_start_) >= options_.retention_gap_hours && gap > 0.0) {
        auto it = std::find_if(pending_.begin(), pending_.end(),
                               [&](const PendingRetention& p) { return p.last_session == last_session_[s]; });
        if (it == pending_.end()) {
          pending_.push_back({last_session_[s], s});
          it = std::prev(pending_.end());
        }
        it->theta_before += b.mean();
        it->gap_hours += gap;
        it->score_sum += score;
        it->n += 1;
      }
    }
  }
}

void DynamicsTracker::end_session(const BeliefState& /*state*/) {
  if (!open_) throw std::logic_error("end_session without begin_session");
  for (const SkillIndex s : touched_list_) {
    const double observed = score_sum_[s] / static_cast<double>(touched_[s]);
    gains_.push_back({s, session_, observed - baseline_[s]});
    last_session_[s] = session_;
    touched_[s] = 0;
    score_sum_[s] = 0.0;
  }
  for (const PendingRetention& p : pending_) {
    const double n = static_cast<double>(p.n);
    const double before = p.theta_before / n;
    const double ratio = (p.score_sum + 0.5) / (p.theta_before + 0.5);
    pairs_.push_back({p.first_skill, before, std::min(before * ratio, 1.0), p.gap_hours / n});
  }
  touched_list_.clear();
  pending_.clear();
  open_ = false;
  refresh();
}

void DynamicsTracker::refresh() {
  estimate_.kappa = options_.kappa;
  estimate_.n_gain_samples = gains_.size();
  estimate_.n_retention_samples = pairs_.size();
  if (!options_.adaptive) {
    estimate_.lambda_hat = kPopulationLambda;
    estimate_.psi_hat = kPopulationPsi;
    return;
  }
  estimate_.lambda_hat = estimate_lambda(gains_);
  estimate_.psi_hat = estimate_psi(pairs_, options_.kappa);
}

}  // namespace pace
