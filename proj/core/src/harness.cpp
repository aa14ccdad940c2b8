#include "pace/harness.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "pace/metrics.hpp"
#include "pace/rng.hpp"

namespace pace {

std::string_view to_string(Policy p) {
  switch (p) {
    case Policy::pace_full: return "pace_full";
    case Policy::pace_no_prop: return "pace_no_prop";
    case Policy::pace_no_dyn: return "pace_no_dyn";
    case Policy::round_robin: return "round_robin";
    case Policy::deficit_driven: return "deficit_driven";
  }
  return "unknown";
}

Policy parse_policy(std::string_view text) {
  if (text == "pace_full") return Policy::pace_full;
  if (text == "pace_no_prop") return Policy::pace_no_prop;
  if (text == "pace_no_dyn") return Policy::pace_no_dyn;
  if (text == "round_robin") return Policy::round_robin;
  if (text == "deficit_driven") return Policy::deficit_driven;
  throw ConfigError("unknown policy '" + std::string(text) + "'");
}

bool is_pace_variant(Policy p) {
  return p == Policy::pace_full || p == Policy::pace_no_prop || p == Policy::pace_no_dyn;
}

EngineOptions engine_options_for(Policy policy, EngineOptions base) {
  switch (policy) {
    case Policy::pace_full: break;
    case Policy::pace_no_prop: base.propagation = false; break;
    case Policy::pace_no_dyn: base.adaptive_dynamics = false; break;
    case Policy::round_robin:
    case Policy::deficit_driven:
      base.propagation = false;
      base.adaptive_dynamics = false;
      base.forecast = false;
      break;
  }
  return base;
}

// ---------------------------------------------------------------------------
// Config

void ExperimentConfig::validate() const {
  if (n_sessions <= 0) throw ConfigError("n_sessions must be positive");
  if (batch_k == 0) throw ConfigError("batch_k must be positive");
  if (cold_start < 0) throw ConfigError("cold_start must be non-negative");
  if (is_pace_variant(policy) && cold_start >= n_sessions) {
    throw ConfigError(fmt::format("cold_start ({}) must be below n_sessions ({})", cold_start, n_sessions));
  }
  if (!(session_hours > 0.0)) throw ConfigError("session_hours must be positive");
  if (gap_every <= 0) throw ConfigError("gap_every must be positive");
  if (gap_hours < 0.0) throw ConfigError("gap_hours must be non-negative");
  if (archetypes.empty()) throw ConfigError("at least one archetype is required");
  if (trainees_per_archetype == 0) throw ConfigError("trainees_per_archetype must be positive");
  if (!(mastery_threshold > 0.0 && mastery_threshold < 1.0)) throw ConfigError("mastery_threshold must lie in (0,1)");
  if (!(kappa > 0.0)) throw ConfigError("kappa must be positive");
  if (!(prior_alpha > 0.0) || !(prior_beta > 0.0)) throw ConfigError("belief priors must be positive");
  if (similarity.threshold < 0.0 || similarity.epsilon < 0.0) throw ConfigError("similarity params must be >= 0");
  if (simulator_psi && *simulator_psi < 0.0) throw ConfigError("simulator_psi must be non-negative");
}

namespace {

template <typename T>
void read_opt(const nlohmann::json& doc, const char* key, T& out) {
  if (doc.contains(key)) out = doc.at(key).get<T>();
}

void check_keys(const nlohmann::json& doc, std::initializer_list<std::string_view> known, std::string_view where) {
  for (const auto& [key, value] : doc.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError(fmt::format("{}: unknown key '{}'", where, key));
    }
  }
}

}  // namespace

ExperimentConfig config_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  check_keys(doc,
             {"policy", "granularity", "n_sessions", "batch_k", "cold_start", "session_hours", "gap_every",
              "gap_hours", "archetypes", "trainees_per_archetype", "seed", "graph", "catalog", "catalog_size",
              "catalog_seed", "mastery_threshold", "exam_items", "kappa", "prior_alpha", "prior_beta", "propagation_mode", "filters",
              "similarity", "behavior", "shared_arms", "threads", "truth_metrics", "simulator_psi"},
             "config");
  ExperimentConfig c;
  try {
    if (doc.contains("policy")) c.policy = parse_policy(doc["policy"].get<std::string>());
    if (doc.contains("granularity")) c.granularity = parse_granularity(doc["granularity"].get<std::string>());
    read_opt(doc, "n_sessions", c.n_sessions);
    read_opt(doc, "batch_k", c.batch_k);
    read_opt(doc, "cold_start", c.cold_start);
    read_opt(doc, "session_hours", c.session_hours);
    read_opt(doc, "gap_every", c.gap_every);
    read_opt(doc, "gap_hours", c.gap_hours);
    if (doc.contains("archetypes")) {
      c.archetypes.clear();
      for (const auto& a : doc["archetypes"]) c.archetypes.push_back(parse_archetype(a.get<std::string>()));
    }
    read_opt(doc, "trainees_per_archetype", c.trainees_per_archetype);
    read_opt(doc, "seed", c.seed);
    if (doc.contains("graph")) {
      const auto& g = doc["graph"];
      if (g.is_string()) {
        c.graph_path = g.get<std::string>();
      } else {
        c.graph_params = graph_params_from_json(g);
      }
    }
    if (doc.contains("catalog") && !doc["catalog"].is_null()) c.catalog_path = doc["catalog"].get<std::string>();
    read_opt(doc, "catalog_size", c.catalog_size);
    read_opt(doc, "catalog_seed", c.catalog_seed);
    read_opt(doc, "mastery_threshold", c.mastery_threshold);
    read_opt(doc, "exam_items", c.exam_items);
    read_opt(doc, "kappa", c.kappa);
    read_opt(doc, "prior_alpha", c.prior_alpha);
    read_opt(doc, "prior_beta", c.prior_beta);
    if (doc.contains("propagation_mode")) {
      const auto m = doc["propagation_mode"].get<std::string>();
      if (m == "as_written") {
        c.propagation_mode = PropagationMode::as_written;
      } else if (m == "upward_only") {
        c.propagation_mode = PropagationMode::upward_only;
      } else {
        throw ConfigError("unknown propagation_mode '" + m + "'");
      }
    }
    if (doc.contains("filters")) {
      const auto& f = doc["filters"];
      check_keys(f, {"enabled", "prereq_floor", "min_size", "max_size"}, "filters");
      read_opt(f, "enabled", c.filters.enabled);
      read_opt(f, "prereq_floor", c.filters.prereq_floor);
      read_opt(f, "min_size", c.filters.min_size);
      if (f.contains("max_size") && !f["max_size"].is_null()) c.filters.max_size = f["max_size"].get<std::size_t>();
    }
    if (doc.contains("similarity")) {
      const auto& s = doc["similarity"];
      check_keys(s, {"epsilon", "threshold"}, "similarity");
      read_opt(s, "epsilon", c.similarity.epsilon);
      read_opt(s, "threshold", c.similarity.threshold);
    }
    if (doc.contains("behavior")) {
      const auto& b = doc["behavior"];
      check_keys(b,
                 {"violation_share", "prompt_probability", "misconception_weight", "omission_weight",
                  "parameter_noise", "initial_low", "initial_high"},
                 "behavior");
      read_opt(b, "violation_share", c.behavior.violation_share);
      read_opt(b, "prompt_probability", c.behavior.prompt_probability);
      read_opt(b, "misconception_weight", c.behavior.misconception_weight);
      read_opt(b, "omission_weight", c.behavior.omission_weight);
      read_opt(b, "parameter_noise", c.behavior.parameter_noise);
      read_opt(b, "initial_low", c.behavior.initial_low);
      read_opt(b, "initial_high", c.behavior.initial_high);
    }
    read_opt(doc, "shared_arms", c.shared_arms);
    read_opt(doc, "threads", c.threads);
    read_opt(doc, "truth_metrics", c.truth_metrics);
    if (doc.contains("simulator_psi") && !doc["simulator_psi"].is_null()) {
      c.simulator_psi = doc["simulator_psi"].get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const GraphParseError& e) {
    throw ConfigError(e.what());
  } catch (const std::invalid_argument& e) {
    if (dynamic_cast<const ConfigError*>(&e) != nullptr) throw;
    throw ConfigError(e.what());
  }
  c.validate();
  return c;
}

nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json archetypes = nlohmann::json::array();
  for (const auto a : c.archetypes) archetypes.push_back(to_string(a));
  nlohmann::json doc = {
      {"policy", to_string(c.policy)},
      {"granularity", to_string(c.granularity)},
      {"n_sessions", c.n_sessions},
      {"batch_k", c.batch_k},
      {"cold_start", c.cold_start},
      {"session_hours", c.session_hours},
      {"gap_every", c.gap_every},
      {"gap_hours", c.gap_hours},
      {"archetypes", archetypes},
      {"trainees_per_archetype", c.trainees_per_archetype},
      {"seed", c.seed},
      {"catalog_size", c.catalog_size},
      {"catalog_seed", c.catalog_seed},
      {"mastery_threshold", c.mastery_threshold},
      {"exam_items", c.exam_items},
      {"kappa", c.kappa},
      {"prior_alpha", c.prior_alpha},
      {"prior_beta", c.prior_beta},
      {"propagation_mode", c.propagation_mode == PropagationMode::as_written ? "as_written" : "upward_only"},
      {"filters",
       {{"enabled", c.filters.enabled},
        {"prereq_floor", c.filters.prereq_floor},
        {"min_size", c.filters.min_size},
        {"max_size", c.filters.max_size == static_cast<std::size_t>(-1) ? nlohmann::json(nullptr)
                                                                         : nlohmann::json(c.filters.max_size)}}},
      {"similarity", {{"epsilon", c.similarity.epsilon}, {"threshold", c.similarity.threshold}}},
      {"behavior",
       {{"violation_share", c.behavior.violation_share},
        {"prompt_probability", c.behavior.prompt_probability},
        {"misconception_weight", c.behavior.misconception_weight},
        {"omission_weight", c.behavior.omission_weight},
        {"parameter_noise", c.behavior.parameter_noise},
        {"initial_low", c.behavior.initial_low},
        {"initial_high", c.behavior.initial_high}}},
      {"shared_arms", c.shared_arms},
      {"threads", c.threads},
      {"truth_metrics", c.truth_metrics},
  };
  doc["graph"] = c.graph_path ? nlohmann::json(c.graph_path->string()) : graph_params_to_json(c.graph_params);
  if (c.catalog_path) doc["catalog"] = c.catalog_path->string();
  if (c.simulator_psi) doc["simulator_psi"] = *c.simulator_psi;
  return doc;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(fmt::format("{}: {}", path.string(), e.what()));
  }
  ExperimentConfig c = config_from_json(doc);
  const auto base = path.parent_path();
  if (c.graph_path && c.graph_path->is_relative()) c.graph_path = base / *c.graph_path;
  if (c.catalog_path && c.catalog_path->is_relative()) c.catalog_path = base / *c.catalog_path;
  return c;
}

std::shared_ptr<const Fixture> build_fixture(const ExperimentConfig& config) {
  SkillGraph graph = config.graph_path ? load_graph(*config.graph_path) : generate_synthetic_graph(config.graph_params);
  if (config.catalog_path) {
    std::ifstream in(*config.catalog_path);
    if (!in) throw ConfigError("cannot open catalog " + config.catalog_path->string());
    ScenarioCatalog catalog = catalog_from_json(nlohmann::json::parse(in), graph);
    return make_fixture(std::move(graph), std::move(catalog), config.similarity);
  }
  return make_fixture(std::move(graph), config.catalog_size, config.catalog_seed, config.similarity);
}

TraineeFactory default_trainee_factory(const ExperimentConfig& config) {
  return [kappa = config.kappa, behavior = config.behavior, psi = config.simulator_psi](const TraineeSpec& spec) {
    auto agent = std::make_unique<TraineeAgent>(
        instantiate_archetype(spec.archetype, spec.seed, spec.skill_count, spec.id, kappa, behavior));
    if (psi) agent->set_psi(*psi);
    return agent;
  };
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

enum Stream : std::uint64_t { agent_stream = 1, response_stream = 2, policy_stream = 3 };

std::uint64_t trainee_seed(std::uint64_t master, ArchetypeName a, std::size_t instance) {
  return derive_seed(master, (static_cast<std::uint64_t>(a) + 1) * 1000003ULL + instance);
}

void check_invariants(const CurriculumEngine& engine, const Trainee* agent, const std::string& id, int t,
                      bool truth_metrics) {
  for (SkillIndex s = 0; s < engine.beliefs().size(); ++s) {
    const NodeBelief& b = engine.beliefs()[s];
    if (!(b.alpha > 0.0) || !(b.beta > 0.0) || !std::isfinite(b.alpha) || !std::isfinite(b.beta)) {
      throw std::runtime_error(fmt::format("trainee {} session {}: invalid posterior at {} (alpha={}, beta={})", id, t,
                                           engine.fixture().graph.skill_id(s), b.alpha, b.beta));
    }
  }
  if (truth_metrics) {
    const auto truth = agent->truth();
    for (std::size_t s = 0; s < truth.size(); ++s) {
      if (!(truth[s] >= 0.0 && truth[s] <= 1.0)) {
        throw std::runtime_error(fmt::format("trainee {} session {}: mastery out of range at skill {} ({})", id, t, s,
                                             truth[s]));
      }
    }
  }
}

std::optional<double> coverage_at_session(const TraineeResult& r, int t) {
  if (t < 1 || static_cast<std::size_t>(t) > r.series.size()) return std::nullopt;
  const double v = r.series[static_cast<std::size_t>(t - 1)].truth_coverage;
  if (std::isnan(v)) return std::nullopt;
  return v;
}

TraineeResult run_trainee(const ExperimentConfig& config, const std::shared_ptr<const Fixture>& fixture,
                          const TraineeFactory& factory, const TraineeSpec& spec,
                          std::span<const std::size_t> action_set, std::span<const std::size_t> exam,
                          const std::shared_ptr<std::vector<ArmPosterior>>& shared_arms) {
  EngineOptions base;
  base.propagation_mode = config.propagation_mode;
  base.granularity = config.granularity;
  base.kappa = config.kappa;
  base.prior_alpha = config.prior_alpha;
  base.prior_beta = config.prior_beta;
  base.mastery_threshold = config.mastery_threshold;
  base.weak_threshold = config.mastery_threshold;
  base.filters = config.filters;
  base.n_sessions = config.n_sessions;
  CurriculumEngine engine(fixture, engine_options_for(config.policy, base),
                          std::vector<std::size_t>(action_set.begin(), action_set.end()));
  if (shared_arms) engine.share_arms(shared_arms);

  std::unique_ptr<Trainee> agent = factory(spec);
  Rng response_rng(derive_seed(spec.seed, response_stream));
  Rng policy_rng(derive_seed(spec.seed, policy_stream));
  const ScenarioTable& table = fixture->table;
  const std::size_t k = config.batch_k;

  TraineeResult result;
  result.id = spec.id;
  result.archetype = spec.archetype;
  result.instance = spec.instance;
  result.series.reserve(static_cast<std::size_t>(config.n_sessions));
  std::vector<double> best_scores;

  double clock = 0.0;
  for (int t = 1; t <= config.n_sessions; ++t) {
    if (t > 1) {
      clock += config.session_hours;
      if ((t - 1) % config.gap_every == 0) clock += config.gap_hours;
    }
    const Timestamp start{clock};
    agent->forget(start);
    engine.begin_session(t, start);

    BatchSelection batch;
    const bool cold = is_pace_variant(config.policy) && t <= config.cold_start;
    if (config.policy == Policy::round_robin || cold) {
      batch = engine.round_robin(k);
      engine.annotate(batch, start);
    } else if (config.policy == Policy::deficit_driven) {
      batch = engine.deficit_driven(k, start);
      engine.annotate(batch, start);
    } else {
      batch = engine.recommend(k, start, policy_rng);
    }
    batch.session = t;

    SessionRecord rec;
    rec.session = t;
    std::optional<double> best;
    std::size_t explores = 0;
    for (std::size_t j = 0; j < batch.picks.size(); ++j) {
      const BatchPick& pick = batch.picks[j];
      const Timestamp at{clock + config.session_hours * static_cast<double>(j) / static_cast<double>(k)};
      const auto activated = table.activated(pick.scenario);
      agent->forget(at);
      const std::vector<Observation> obs = agent->respond(activated, at, response_rng);
      rec.reward += engine.ingest(pick.scenario, obs, pick.context, at).reward;
      agent->learn(activated, at);
      if (const auto score = scenario_score(obs)) best = best ? std::max(*best, *score) : *score;
      if (pick.explore) ++explores;
    }
    engine.end_session();

    const Timestamp end{clock + config.session_hours};
    agent->forget(end);
    const BeliefSummary summary = engine.summary(end);
    rec.belief_coverage = summary.coverage;
    rec.mean_variance = summary.mean_variance;
    rec.explore_ratio =
        batch.picks.empty() ? 0.0 : static_cast<double>(explores) / static_cast<double>(batch.picks.size());
    rec.best_score = best;
    rec.lambda_hat = engine.dynamics().estimate().lambda_hat;
    rec.psi_hat = engine.dynamics().estimate().psi_hat;
    if (config.truth_metrics) {
      const auto truth = agent->truth();
      rec.truth_coverage = coverage_at(truth, config.mastery_threshold);
      rec.delta = approximation_gap(engine.forecast_means(end), truth);
    } else {
      rec.truth_coverage = kNaN;
      rec.delta = kNaN;
    }
    check_invariants(engine, agent.get(), spec.id, t, config.truth_metrics);
    rec.batch = std::move(batch);
    best_scores.push_back(best.value_or(0.0));
    result.series.push_back(std::move(rec));
  }

  result.c10 = coverage_at_session(result, 10);
  result.c30 = coverage_at_session(result, 30);
  result.c50 = coverage_at_session(result, 50);
  result.z2h = zero_to_hero(best_scores, config.mastery_threshold);
  if (config.truth_metrics) {
    const auto truth = agent->truth();
    if (!exam.empty()) result.random_exam = exam_score(truth, table, exam);
    double sum = 0.0;
    for (double v : truth) sum += v;
    result.terminal_mean_theta = truth.empty() ? 0.0 : sum / static_cast<double>(truth.size());
  }
  return result;
}

}  // namespace

RunResult run_training(const ExperimentConfig& config) { return run_training(config, build_fixture(config)); }

RunResult run_training(const ExperimentConfig& config, std::shared_ptr<const Fixture> fixture,
                       const TraineeFactory& factory) {
  config.validate();
  const TraineeFactory make = factory ? factory : default_trainee_factory(config);
  const ScenarioTable& table = fixture->table;

  RunResult out;
  out.config = config;
  out.fixture = fixture;
  const std::size_t exam_items = std::min(config.exam_items, table.size());
  if (exam_items > 0) out.exam = random_exam(table, exam_items, derive_seed(config.seed, 0x4558414dULL));
  std::vector<std::size_t> action_set;
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (!std::binary_search(out.exam.begin(), out.exam.end(), i)) action_set.push_back(i);
  }
  if (action_set.empty()) throw ConfigError("the exam leaves no scenario for training");

  std::vector<TraineeSpec> specs;
  for (const ArchetypeName a : config.archetypes) {
    for (std::size_t i = 0; i < config.trainees_per_archetype; ++i) {
      const std::uint64_t seed = trainee_seed(config.seed, a, i);
      specs.push_back({a, i, fmt::format("{}-{:02d}", to_string(a), i), derive_seed(seed, agent_stream),
                       fixture->graph.skill_count()});
    }
  }
  out.trainees.resize(specs.size());

  std::shared_ptr<std::vector<ArmPosterior>> shared;
  if (config.shared_arms) {
    shared = std::make_shared<std::vector<ArmPosterior>>(table.size(), ArmPosterior());
  }
  unsigned workers = config.threads != 0 ? config.threads : std::max(1U, std::thread::hardware_concurrency());
  if (config.shared_arms) workers = 1;  // the population bandit is updated in trainee order
  workers = static_cast<unsigned>(std::min<std::size_t>(workers, specs.size()));

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < specs.size(); i = next++) {
      try {
        out.trainees[i] = run_trainee(config, fixture, make, specs[i], action_set, out.exam, shared);
        spdlog::debug("trainee {} done", specs[i].id);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = specs.size();
      }
    }
  };
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

MeanStd mean_std(std::span<const std::optional<double>> values) {
  MeanStd m;
  double sum = 0.0;
  for (const auto& v : values) {
    if (v) {
      sum += *v;
      ++m.n;
    }
  }
  if (m.n == 0) return m;
  m.mean = sum / static_cast<double>(m.n);
  if (m.n > 1) {
    double ss = 0.0;
    for (const auto& v : values) {
      if (v) ss += (*v - m.mean) * (*v - m.mean);
    }
    m.std = std::sqrt(ss / static_cast<double>(m.n - 1));
  }
  return m;
}

}  // namespace pace
