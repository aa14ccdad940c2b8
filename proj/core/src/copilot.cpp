#include "pace/copilot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <set>

#include <spdlog/spdlog.h>

#include "pace/rng.hpp"

namespace pace {

using nlohmann::json;

namespace {

constexpr double kReplayTolerance = 1e-9;

ApiError bad_request(const std::string& message, json detail = nullptr) {
  return ApiError(400, "bad_request", message, std::move(detail));
}
ApiError not_found(const std::string& message, json detail = nullptr) {
  return ApiError(404, "not_found", message, std::move(detail));
}
ApiError conflict(const std::string& message, json detail = nullptr) {
  return ApiError(409, "conflict", message, std::move(detail));
}
ApiError unprocessable(const std::string& message, json detail = nullptr) {
  return ApiError(422, "unprocessable", message, std::move(detail));
}

bool valid_trainee_id(std::string_view id) {
  if (id.empty() || id.size() > 64) return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' || c == '_';
  });
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

/// Round-trips through the wire format so live and replayed clocks agree bit for bit.
Timestamp canonical(Timestamp t) { return parse_iso8601(to_iso8601(t)); }

Timestamp parse_time_field(const json& doc, const char* key) {
  if (!doc.contains(key) || !doc[key].is_string()) throw bad_request(std::string("'") + key + "' must be an ISO-8601 string");
  try {
    return parse_iso8601(doc[key].get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw bad_request(e.what(), {{"field", key}});
  }
}

json summary_json(std::span<const double> means, const BeliefState& state, const EngineOptions& options) {
  const auto [coverage, weak_mean] =
      coverage_and_weak_mean(means, options.mastery_threshold, options.weak_threshold);
  double var = 0.0;
  double mu = 0.0;
  for (SkillIndex s = 0; s < state.size(); ++s) {
    var += state[s].variance();
    mu += means[s];
  }
  const double n = state.size() == 0 ? 1.0 : static_cast<double>(state.size());
  return {{"skill_count", state.size()},
          {"coverage", coverage},
          {"weak_mean", weak_mean},
          {"mean_mu", mu / n},
          {"mean_variance", var / n}};
}

json dynamics_json(const TraineeRecord& r) {
  const auto& d = r.engine.dynamics();
  return {{"trainee", r.id},
          {"sessions", r.sessions_seen},
          {"in_session", d.in_session()},
          {"estimate", dynamics_to_json(d.estimate())},
          {"practice_gains", d.gains().size()},
          {"retention_pairs", d.retention_pairs().size()}};
}

ContextVector debrief_context(const CurriculumEngine& engine, std::size_t scenario, Timestamp now) {
  BatchSelection single;
  single.session = engine.session();
  single.picks.push_back(BatchPick{scenario, 0.0, 0.0, false, ContextVector::Zero()});
  engine.annotate(single, now);
  return single.picks.front().context;
}

struct ParsedDebrief {
  int session = 0;
  std::size_t scenario = 0;
  Timestamp at;
  std::vector<Observation> observations;
};

/// Validates a debrief event or request body against the catalog.
ParsedDebrief parse_debrief(const json& doc, const Fixture& fixture) {
  if (!doc.is_object()) throw bad_request("debrief must be a JSON object");
  ParsedDebrief d;
  if (!doc.contains("session") || !doc["session"].is_number_integer() || doc["session"].get<long long>() < 1) {
    throw bad_request("'session' must be a positive integer");
  }
  d.session = static_cast<int>(doc["session"].get<long long>());
  if (!doc.contains("scenario") || !doc["scenario"].is_string()) throw bad_request("'scenario' must be a string");
  const std::string scenario_id = doc["scenario"].get<std::string>();
  const auto scenario = fixture.table.find(scenario_id);
  if (!scenario) throw unprocessable("unknown scenario '" + scenario_id + "'", {{"scenario", scenario_id}});
  d.scenario = *scenario;
  d.at = parse_time_field(doc, "timestamp");
  if (!doc.contains("observations") || !doc["observations"].is_array()) {
    throw bad_request("'observations' must be an array");
  }
  const auto activated = fixture.table.activated(d.scenario);
  for (std::size_t i = 0; i < doc["observations"].size(); ++i) {
    json o = doc["observations"][i];
    if (!o.is_object()) throw bad_request("observation must be an object", {{"index", i}});
    if (!o.contains("node") || !o["node"].is_string()) throw bad_request("observation without 'node'", {{"index", i}});
    const std::string node = o["node"].get<std::string>();
    if (!o.contains("timestamp")) o["timestamp"] = doc["timestamp"];
    Observation obs;
    try {
      obs = observation_from_json(o, fixture.graph);
    } catch (const ObservationError& e) {
      throw unprocessable(e.what(), {{"index", i}, {"node", node}});
    }
    const bool inside = std::binary_search(activated.begin(), activated.end(), obs.skill);
    if (!inside && obs.outcome != Outcome::not_applicable) {
      throw unprocessable("node '" + node + "' is outside the scenario's activated subgraph",
                          {{"index", i}, {"node", node}, {"scenario", scenario_id}});
    }
    d.observations.push_back(obs);
  }
  return d;
}

std::vector<std::string> string_list(const json& doc, const char* key) {
  if (!doc.contains(key) || !doc[key].is_array()) throw bad_request(std::string("'") + key + "' must be an array");
  std::vector<std::string> out;
  for (const auto& v : doc[key]) {
    if (!v.is_string()) throw bad_request(std::string("'") + key + "' must hold strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

/// Applies one already validated event. Returns the arm reward for debriefs.
std::optional<IngestResult> apply_event(TraineeRecord& r, const json& event, const Fixture& fixture) {
  const std::string type = event.at("type").get<std::string>();
  std::optional<IngestResult> result;
  if (type == "debrief") {
    const ParsedDebrief d = parse_debrief(event, fixture);
    auto& engine = r.engine;
    if (!engine.in_session() || d.session != engine.session()) {
      if (d.session < engine.session()) throw unprocessable("session out of order");
      if (engine.in_session()) engine.end_session();
      engine.begin_session(d.session, d.at);
      ++r.sessions_seen;
    }
    const ContextVector x = debrief_context(engine, d.scenario, d.at);
    result = engine.ingest(d.scenario, d.observations, x, d.at);
    r.clock = std::max(r.clock, d.at);
    if (event.contains("idempotency_key") && event["idempotency_key"].is_string()) {
      r.idempotency_keys.push_back(event["idempotency_key"].get<std::string>());
    }
  } else if (type == "recommendation") {
    StoredRecommendation rec;
    rec.id = event.at("id").get<std::string>();
    rec.session = event.at("session").get<int>();
    rec.advisory = event.at("advisory").get<bool>();
    rec.scenarios = event.at("scenarios").get<std::vector<std::string>>();
    r.recommendations[rec.id] = std::move(rec);
  } else if (type == "assignment") {
    const std::string rec_id = event.at("recommendation").get<std::string>();
    const auto it = r.recommendations.find(rec_id);
    if (it == r.recommendations.end()) throw not_found("unknown recommendation '" + rec_id + "'");
    AlignmentDecision decision;
    decision.recommendation = rec_id;
    decision.recommended = it->second.scenarios;
    decision.chosen = event.at("chosen").get<std::vector<std::string>>();
    decision.overlap = batch_overlap(decision.recommended, decision.chosen);
    decision.aligned = decision.overlap >= event.at("threshold").get<double>();
    r.decisions.push_back(std::move(decision));
  } else {
    throw bad_request("unknown event type '" + type + "'");
  }
  r.events.push_back(event);
  return result;
}

std::optional<std::size_t> parse_size(const std::string& text) {
  if (text.empty() || text.size() > 6) return std::nullopt;
  if (!std::all_of(text.begin(), text.end(), [](char c) { return c >= '0' && c <= '9'; })) return std::nullopt;
  return static_cast<std::size_t>(std::stoul(text));
}

std::vector<json> read_event_log(const std::filesystem::path& path, std::optional<std::size_t>* bad_line = nullptr) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<json> events;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      events.push_back(json::parse(line));
    } catch (const json::parse_error&) {
      if (bad_line == nullptr) throw;
      *bad_line = events.size();
      break;
    }
  }
  return events;
}

}  // namespace

ApiResponse ApiError::response() const {
  return {status_, json{{"code", code_}, {"message", what()}, {"detail", detail_}}};
}

CopilotOptions copilot_options_from_env(CopilotOptions base) {
  if (const char* dir = std::getenv("PACE_DATA_DIR"); dir != nullptr && *dir != '\0') base.data_dir = dir;
  return base;
}

double batch_overlap(std::span<const std::string> recommended, std::span<const std::string> chosen) {
  const std::set<std::string> chosen_set(chosen.begin(), chosen.end());
  if (chosen_set.empty()) return 0.0;
  const std::set<std::string> rec(recommended.begin(), recommended.end());
  const auto hits = std::count_if(chosen_set.begin(), chosen_set.end(), [&](const auto& s) { return rec.contains(s); });
  return static_cast<double>(hits) / static_cast<double>(chosen_set.size());
}

AlignmentReport alignment_report(std::vector<AlignmentDecision> decisions) {
  AlignmentReport r;
  r.n_decisions = decisions.size();
  r.n_aligned = static_cast<std::size_t>(std::count_if(decisions.begin(), decisions.end(),
                                                       [](const auto& d) { return d.aligned; }));
  r.alignment_rate = r.n_decisions == 0 ? 0.0 : static_cast<double>(r.n_aligned) / static_cast<double>(r.n_decisions);
  r.decisions = std::move(decisions);
  return r;
}

json alignment_to_json(const AlignmentReport& report) {
  json decisions = json::array();
  for (const auto& d : report.decisions) {
    decisions.push_back({{"recommendation", d.recommendation},
                         {"recommended", d.recommended},
                         {"chosen", d.chosen},
                         {"overlap", d.overlap},
                         {"aligned", d.aligned}});
  }
  return {{"n_decisions", report.n_decisions},
          {"n_aligned", report.n_aligned},
          {"alignment_rate", report.alignment_rate},
          {"decisions", decisions}};
}

json replay_to_json(const ReplayReport& report) {
  return {{"consistent", report.consistent},
          {"live_events", report.live_events},
          {"logged_events", report.logged_events},
          {"divergent_offset", report.divergent_offset ? json(*report.divergent_offset) : json(nullptr)},
          {"detail", report.detail}};
}

std::unique_ptr<TraineeRecord> fold_events(std::span<const json> events, std::shared_ptr<const Fixture> fixture,
                                           const CopilotOptions& options) {
  if (events.empty()) throw ApiError(422, "corrupt_log", "event log is empty", {{"offset", 0}});
  std::unique_ptr<TraineeRecord> record;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const json& e = events[i];
    try {
      if (!e.is_object() || e.value("offset", std::numeric_limits<std::size_t>::max()) != i) {
        throw bad_request("event offset mismatch");
      }
      if (i == 0) {
        if (e.value("type", "") != "created") throw bad_request("log must start with a creation event");
        if (e.value("graph", "") != options.graph_name) throw bad_request("log refers to another graph");
        record = std::make_unique<TraineeRecord>(e.at("id").get<std::string>(), parse_time_field(e, "created_at"),
                                                 fixture, options.engine);
        record->events.push_back(e);
        continue;
      }
      apply_event(*record, e, *fixture);
    } catch (const ApiError& err) {
      throw ApiError(422, "corrupt_log", std::string("event ") + std::to_string(i) + ": " + err.what(),
                     {{"offset", i}});
    } catch (const std::exception& err) {
      throw ApiError(422, "corrupt_log", std::string("event ") + std::to_string(i) + ": " + err.what(),
                     {{"offset", i}});
    }
  }
  return record;
}

double state_distance(const TraineeRecord& a, const TraineeRecord& b) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  const auto& ba = a.engine.beliefs();
  const auto& bb = b.engine.beliefs();
  if (ba.size() != bb.size() || a.sessions_seen != b.sessions_seen || a.decisions.size() != b.decisions.size() ||
      a.recommendations.size() != b.recommendations.size() || ba.log().size() != bb.log().size()) {
    return inf;
  }
  double d = 0.0;
  for (SkillIndex s = 0; s < ba.size(); ++s) {
    if (ba[s].last_practiced.has_value() != bb[s].last_practiced.has_value()) return inf;
    d = std::max({d, std::abs(ba[s].alpha - bb[s].alpha), std::abs(ba[s].beta - bb[s].beta)});
    if (ba[s].last_practiced) d = std::max(d, std::abs(ba[s].last_practiced->hours - bb[s].last_practiced->hours));
  }
  const auto arms_a = a.engine.arms();
  const auto arms_b = b.engine.arms();
  if (arms_a.size() != arms_b.size()) return inf;
  for (std::size_t i = 0; i < arms_a.size(); ++i) {
    if (arms_a[i].n_pulls() != arms_b[i].n_pulls()) return inf;
    d = std::max(d, (arms_a[i].mean() - arms_b[i].mean()).cwiseAbs().maxCoeff());
    d = std::max(d, (arms_a[i].precision() - arms_b[i].precision()).cwiseAbs().maxCoeff());
  }
  const auto& ea = a.engine.dynamics().estimate();
  const auto& eb = b.engine.dynamics().estimate();
  d = std::max({d, std::abs(ea.lambda_hat - eb.lambda_hat), std::abs(ea.psi_hat - eb.psi_hat)});
  return d;
}

// ---------------------------------------------------------------------------

CopilotService::CopilotService(std::shared_ptr<const Fixture> fixture, CopilotOptions options)
    : fixture_(std::move(fixture)), options_(std::move(options)) {
  if (!fixture_) throw std::invalid_argument("co-pilot needs a fixture");
  if (!(options_.alignment_threshold > 0.0 && options_.alignment_threshold <= 1.0)) {
    throw std::invalid_argument("alignment threshold must lie in (0, 1]");
  }
  if (options_.data_dir.empty()) return;
  std::filesystem::create_directories(options_.data_dir);
  std::vector<std::filesystem::path> logs;
  for (const auto& entry : std::filesystem::directory_iterator(options_.data_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl") logs.push_back(entry.path());
  }
  std::sort(logs.begin(), logs.end());
  for (const auto& path : logs) {
    try {
      const auto events = read_event_log(path);
      auto record = fold_events(events, fixture_, options_);
      auto slot = std::make_unique<Slot>();
      const std::string id = record->id;
      slot->record = std::move(record);
      trainees_.emplace(id, std::move(slot));
    } catch (const std::exception& e) {
      spdlog::warn("skipping event log {}: {}", path.string(), e.what());
    }
  }
  spdlog::info("co-pilot loaded {} trainee(s) from {}", trainees_.size(), options_.data_dir.string());
}

std::filesystem::path CopilotService::log_path(const std::string& id) const {
  return options_.data_dir.empty() ? std::filesystem::path{} : options_.data_dir / (id + ".jsonl");
}

std::vector<std::string> CopilotService::trainee_ids() const {
  std::shared_lock lock(map_mutex_);
  std::vector<std::string> ids;
  for (const auto& [id, slot] : trainees_) ids.push_back(id);
  return ids;
}

CopilotService::Slot& CopilotService::slot(const std::string& id) {
  std::shared_lock lock(map_mutex_);
  const auto it = trainees_.find(id);
  if (it == trainees_.end()) throw not_found("unknown trainee '" + id + "'", {{"trainee", id}});
  return *it->second;
}

std::optional<IngestResult> CopilotService::append(TraineeRecord& record, json event) {
  event["offset"] = record.events.size();
  if (!options_.data_dir.empty()) {
    std::ofstream out(log_path(record.id), std::ios::app | std::ios::binary);
    if (!out) throw ApiError(500, "storage", "cannot append to event log");
    out << event.dump() << '\n';
    out.flush();
    if (!out) throw ApiError(500, "storage", "cannot append to event log");
  }
  if (event["type"] == "created") {
    record.events.push_back(std::move(event));
    return std::nullopt;
  }
  return apply_event(record, event, *fixture_);
}

ApiResponse CopilotService::create_trainee(const json& body) {
  if (!body.is_object() && !body.is_null()) throw bad_request("body must be a JSON object");
  const json doc = body.is_null() ? json::object() : body;
  const std::string graph = doc.contains("graph") ? doc["graph"].get<std::string>() : options_.graph_name;
  if (graph != options_.graph_name) throw bad_request("unknown graph '" + graph + "'", {{"graph", graph}});

  std::unique_lock lock(map_mutex_);
  std::string id;
  if (doc.contains("id") && !doc["id"].is_null()) {
    if (!doc["id"].is_string() || !valid_trainee_id(doc["id"].get<std::string>())) {
      throw bad_request("trainee id must be 1-64 characters of [A-Za-z0-9_-]");
    }
    id = doc["id"].get<std::string>();
    if (trainees_.contains(id)) throw conflict("trainee '" + id + "' already exists", {{"trainee", id}});
    if (!options_.data_dir.empty() && std::filesystem::exists(log_path(id))) {
      throw conflict("an unreadable event log already exists for '" + id + "'", {{"trainee", id}});
    }
  } else {
    do {
      id = "trainee-" + std::to_string(++auto_ids_);
    } while (trainees_.contains(id) || (!options_.data_dir.empty() && std::filesystem::exists(log_path(id))));
  }
  const Timestamp created = canonical(doc.contains("created_at") ? parse_time_field(doc, "created_at") : now_utc());
  auto slot = std::make_unique<Slot>();
  slot->record = std::make_unique<TraineeRecord>(id, created, fixture_, options_.engine);
  append(*slot->record,
         {{"type", "created"}, {"id", id}, {"graph", graph}, {"created_at", to_iso8601(created)}});
  const TraineeRecord& r = *slot->record;
  json out = {{"id", id},
              {"graph", graph},
              {"created_at", to_iso8601(created)},
              {"summary", summary_json(r.engine.beliefs().means(), r.engine.beliefs(), options_.engine)}};
  trainees_.emplace(id, std::move(slot));
  return {201, out};
}

ApiResponse CopilotService::beliefs(const std::string& id) {
  Slot& s = slot(id);
  std::lock_guard lock(s.mutex);
  const TraineeRecord& r = *s.record;
  const BeliefState& state = r.engine.beliefs();
  const auto means = state.means();
  json nodes = json::array();
  for (SkillIndex i = 0; i < state.size(); ++i) {
    nodes.push_back({{"node", fixture_->graph.skill_id(i)},
                     {"alpha", state[i].alpha},
                     {"beta", state[i].beta},
                     {"mu", means[i]},
                     {"last_practiced", state[i].last_practiced ? json(to_iso8601(*state[i].last_practiced))
                                                                : json(nullptr)}});
  }
  return {200,
          {{"trainee", id},
           {"sessions", r.sessions_seen},
           {"observations", state.log().size()},
           {"summary", summary_json(means, state, options_.engine)},
           {"nodes", nodes}}};
}

ApiResponse CopilotService::dynamics(const std::string& id) {
  Slot& s = slot(id);
  std::lock_guard lock(s.mutex);
  return {200, dynamics_json(*s.record)};
}

ApiResponse CopilotService::ingest_debrief(const std::string& id, const json& body,
                                           const std::optional<std::string>& idempotency_key) {
  Slot& s = slot(id);
  std::lock_guard lock(s.mutex);
  TraineeRecord& r = *s.record;
  if (idempotency_key) {
    if (idempotency_key->empty()) throw bad_request("empty Idempotency-Key");
    if (std::find(r.idempotency_keys.begin(), r.idempotency_keys.end(), *idempotency_key) !=
        r.idempotency_keys.end()) {
      throw conflict("debrief already ingested", {{"idempotency_key", *idempotency_key}});
    }
  }
  const ParsedDebrief d = parse_debrief(body, *fixture_);
  if (d.session < r.engine.session()) {
    throw unprocessable("session " + std::to_string(d.session) + " precedes the current session " +
                            std::to_string(r.engine.session()),
                        {{"session", d.session}});
  }
  json observations = json::array();
  for (const auto& obs : d.observations) observations.push_back(observation_to_json(obs, fixture_->graph));
  json event = {{"type", "debrief"},
                {"session", d.session},
                {"scenario", fixture_->table.scenario(d.scenario).id},
                {"timestamp", to_iso8601(d.at)},
                {"idempotency_key", idempotency_key ? json(*idempotency_key) : json(nullptr)},
                {"observations", observations}};
  // validate the canonical form before it reaches the log
  parse_debrief(event, *fixture_);
  const std::size_t offset = r.events.size();
  const auto result = append(r, event);
  json out = {{"trainee", id},
              {"session", d.session},
              {"scenario", event["scenario"]},
              {"applied", result ? result->applied : 0},
              {"reward", result ? result->reward : 0.0},
              {"event_offset", offset},
              {"summary", summary_json(r.engine.beliefs().means(), r.engine.beliefs(), options_.engine)},
              {"dynamics", dynamics_to_json(r.engine.dynamics().estimate())}};
  return {200, out};
}

ApiResponse CopilotService::recommend(const std::string& id, std::optional<std::size_t> k,
                                      std::optional<Timestamp> at) {
  const std::size_t batch = k.value_or(options_.default_k);
  if (batch < 1 || batch > options_.max_k) {
    throw bad_request("k must lie in [1, " + std::to_string(options_.max_k) + "]", {{"k", batch}});
  }
  Slot& s = slot(id);
  std::lock_guard lock(s.mutex);
  TraineeRecord& r = *s.record;
  const auto& table = fixture_->table;
  if (table.size() == 0) throw ApiError(503, "unavailable", "scenario catalog is empty");

  const Timestamp now = at ? canonical(*at) : r.clock;
  const int upcoming = r.engine.session() + 1;
  BatchInputs in = r.engine.batch_inputs(now);
  in.session = upcoming;
  const FeasibleSet fs = feasible_actions(table, in.means, options_.engine.filters, r.engine.action_set());
  if (fs.scenarios.empty()) throw ApiError(503, "unavailable", "no valid scenario in the action set");
  Rng rng(derive_seed(options_.seed ^ fnv1a(id), static_cast<std::uint64_t>(upcoming)));
  BatchSelection selection = select_batch(table, r.engine.arms(), in, fs.scenarios, batch, rng);

  const auto& est = r.engine.dynamics().estimate();
  const auto horizon = decay_beliefs(r.engine.beliefs(), Timestamp{now.hours + options_.engine.decay_horizon_hours},
                                     est.psi_hat, est.kappa);
  const auto raw = r.engine.beliefs().means();
  json items = json::array();
  std::vector<std::string> ids;
  for (const BatchPick& pick : selection.picks) {
    json weak = json::array();
    json risk = json::array();
    for (const SkillIndex v : table.activated(pick.scenario)) {
      const std::string& node = fixture_->graph.skill_id(v);
      if (in.means[v] < options_.engine.weak_threshold) weak.push_back({{"node", node}, {"mu", in.means[v]}});
      if (raw[v] >= options_.engine.mastery_threshold && horizon[v] < options_.engine.mastery_threshold) {
        risk.push_back({{"node", node}, {"forecast", horizon[v]}});
      }
    }
    const Scenario& sc = table.scenario(pick.scenario);
    ids.push_back(sc.id);
    items.push_back({{"scenario", sc.id},
                     {"incident_type", sc.incident_type},
                     {"expected_gain", pick.mean_score},
                     {"explore", pick.explore},
                     {"targeted_weak_skills", weak},
                     {"decay_risk_skills", risk}});
  }
  const std::string rec_id = "rec-" + std::to_string(r.recommendations.size() + 1);
  const bool advisory = upcoming <= options_.cold_start;
  append(r, {{"type", "recommendation"},
             {"id", rec_id},
             {"session", upcoming},
             {"advisory", advisory},
             {"scenarios", ids},
             {"generated_at", to_iso8601(now)}});
  const ContextVector context = selection.picks.empty() ? batch_context(in, in.means, in.means.size())
                                                        : selection.picks.front().context;
  return {200,
          {{"id", rec_id},
           {"trainee", id},
           {"session", upcoming},
           {"advisory", advisory},
           {"k", batch},
           {"generated_at", to_iso8601(now)},
           {"context", to_array(context)},
           {"fallback", fs.fallback},
           {"short_batch", selection.short_batch},
           {"batch", items}}};
}

ApiResponse CopilotService::record_assignment(const std::string& id, const json& body) {
  if (!body.is_object()) throw bad_request("body must be a JSON object");
  if (!body.contains("recommendation_id") || !body["recommendation_id"].is_string()) {
    throw bad_request("'recommendation_id' must be a string");
  }
  const std::string rec_id = body["recommendation_id"].get<std::string>();
  std::vector<std::string> chosen = string_list(body, "chosen");
  if (chosen.empty()) throw unprocessable("'chosen' must name at least one scenario");
  for (const auto& c : chosen) {
    if (!fixture_->table.find(c)) throw unprocessable("unknown scenario '" + c + "'", {{"scenario", c}});
  }
  Slot& s = slot(id);
  std::lock_guard lock(s.mutex);
  TraineeRecord& r = *s.record;
  if (!r.recommendations.contains(rec_id)) {
    throw not_found("unknown recommendation '" + rec_id + "'", {{"recommendation_id", rec_id}});
  }
  if (std::any_of(r.decisions.begin(), r.decisions.end(), [&](const auto& d) { return d.recommendation == rec_id; })) {
    throw conflict("recommendation '" + rec_id + "' already has an assignment", {{"recommendation_id", rec_id}});
  }
  append(r, {{"type", "assignment"},
             {"recommendation", rec_id},
             {"chosen", chosen},
             {"threshold", options_.alignment_threshold}});
  const AlignmentDecision& d = r.decisions.back();
  return {200,
          {{"decision",
            {{"recommendation", d.recommendation},
             {"recommended", d.recommended},
             {"chosen", d.chosen},
             {"overlap", d.overlap},
             {"aligned", d.aligned}}},
           {"report", alignment_to_json(alignment_report(r.decisions))}}};
}

ApiResponse CopilotService::alignment(const std::string& id) {
  Slot& s = slot(id);
  std::lock_guard lock(s.mutex);
  json out = alignment_to_json(alignment_report(s.record->decisions));
  out["trainee"] = id;
  return {200, out};
}

ApiResponse CopilotService::graph() const {
  json out = graph_to_json(fixture_->graph);
  out["name"] = options_.graph_name;
  return {200, out};
}

ApiResponse CopilotService::catalog() const {
  json scenarios = json::array();
  for (std::size_t i = 0; i < fixture_->table.size(); ++i) {
    const Scenario& sc = fixture_->table.scenario(i);
    json activated = json::array();
    for (const SkillIndex v : fixture_->table.activated(i)) activated.push_back(fixture_->graph.skill_id(v));
    scenarios.push_back({{"id", sc.id},
                         {"incident_type", sc.incident_type},
                         {"conditions", sc.conditions},
                         {"activated", activated}});
  }
  return {200, {{"graph", options_.graph_name}, {"scenarios", scenarios}}};
}

ReplayReport CopilotService::snapshot_and_replay(const std::string& id) {
  Slot& s = slot(id);
  std::lock_guard lock(s.mutex);
  const TraineeRecord& live = *s.record;
  ReplayReport report;
  report.live_events = live.events.size();

  std::optional<std::size_t> bad_line;
  std::vector<json> logged;
  if (options_.data_dir.empty()) {
    logged = live.events;
  } else if (std::filesystem::exists(log_path(id))) {
    logged = read_event_log(log_path(id), &bad_line);
  }
  report.logged_events = logged.size();
  auto diverge = [&](std::size_t offset, std::string why) {
    if (!report.divergent_offset || offset < *report.divergent_offset) {
      report.divergent_offset = offset;
      report.detail = std::move(why);
    }
  };
  if (bad_line) diverge(*bad_line, "unparseable log line");
  const std::size_t common = std::min(logged.size(), live.events.size());
  for (std::size_t i = 0; i < common; ++i) {
    if (logged[i] != live.events[i]) {
      diverge(i, "logged event differs from the applied event");
      break;
    }
  }
  if (logged.size() != live.events.size()) {
    diverge(common, logged.size() < live.events.size() ? "log is truncated" : "log has unapplied events");
  }
  try {
    const auto rebuilt = fold_events(logged, fixture_, options_);
    const double distance = state_distance(*rebuilt, live);
    if (!(distance <= kReplayTolerance)) {
      diverge(logged.size(), "replayed state differs from live state by " + std::to_string(distance));
    }
  } catch (const ApiError& e) {
    const std::size_t offset = e.detail().is_object() ? e.detail().value("offset", std::size_t{0}) : 0;
    diverge(offset, e.what());
  }
  report.consistent = !report.divergent_offset.has_value();
  if (report.consistent) report.detail = "replay matches live state";
  return report;
}

// ---------------------------------------------------------------------------

ApiResponse CopilotService::handle(const ApiRequest& request) {
  try {
    std::vector<std::string> parts;
    std::string current;
    for (const char c : request.path) {
      if (c == '/') {
        if (!current.empty()) parts.push_back(std::move(current));
        current.clear();
      } else {
        current.push_back(c);
      }
    }
    if (!current.empty()) parts.push_back(std::move(current));

    auto body = [&]() -> json {
      if (request.body.empty()) return nullptr;
      try {
        return json::parse(request.body);
      } catch (const json::parse_error& e) {
        throw bad_request(std::string("malformed JSON body: ") + e.what());
      }
    };
    auto header = [&](const std::string& name) -> std::optional<std::string> {
      for (const auto& [key, value] : request.headers) {
        if (lower(key) == name) return value;
      }
      return std::nullopt;
    };
    auto method_is = [&](const char* m) {
      if (request.method != m) {
        throw ApiError(405, "method_not_allowed", request.method + " not allowed on " + request.path);
      }
    };

    if (parts.size() == 1 && parts[0] == "graph") {
      method_is("GET");
      return graph();
    }
    if (parts.size() == 1 && parts[0] == "catalog") {
      method_is("GET");
      return catalog();
    }
    if (parts.size() == 1 && parts[0] == "trainees") {
      if (request.method == "GET") return {200, {{"trainees", trainee_ids()}}};
      method_is("POST");
      return create_trainee(body());
    }
    if (parts.size() == 3 && parts[0] == "trainees") {
      const std::string& id = parts[1];
      const std::string& what = parts[2];
      if (what == "beliefs") {
        method_is("GET");
        return beliefs(id);
      }
      if (what == "dynamics") {
        method_is("GET");
        return dynamics(id);
      }
      if (what == "debriefs") {
        method_is("POST");
        return ingest_debrief(id, body(), header("idempotency-key"));
      }
      if (what == "recommendations") {
        method_is("GET");
        std::optional<std::size_t> k;
        std::optional<Timestamp> at;
        if (const auto it = request.query.find("k"); it != request.query.end()) {
          k = parse_size(it->second);
          if (!k) throw bad_request("k must be a positive integer", {{"k", it->second}});
        }
        if (const auto it = request.query.find("at"); it != request.query.end()) {
          try {
            at = parse_iso8601(it->second);
          } catch (const std::invalid_argument& e) {
            throw bad_request(e.what(), {{"at", it->second}});
          }
        }
        return recommend(id, k, at);
      }
      if (what == "assignments") {
        method_is("POST");
        return record_assignment(id, body());
      }
      if (what == "alignment") {
        method_is("GET");
        return alignment(id);
      }
      if (what == "replay") {
        method_is("GET");
        return {200, replay_to_json(snapshot_and_replay(id))};
      }
    }
    throw not_found("no route for " + request.path);
  } catch (const ApiError& e) {
    return e.response();
  } catch (const nlohmann::json::exception& e) {
    return bad_request(std::string("invalid request: ") + e.what()).response();
  } catch (const std::exception& e) {
    spdlog::error("request {} {} failed: {}", request.method, request.path, e.what());
    return ApiError(500, "internal", e.what()).response();
  }
}

}  // namespace pace
