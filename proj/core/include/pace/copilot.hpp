#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "pace/engine.hpp"
#include "pace/timestamp.hpp"

namespace pace {

struct CopilotOptions {
  /// Directory of per-trainee JSON-lines event logs; empty keeps everything in memory.
  std::filesystem::path data_dir;
  std::string graph_name = "default";
  EngineOptions engine;
  std::size_t default_k = kDefaultBatchSize;
  std::size_t max_k = 20;
  int cold_start = 15;
  double alignment_threshold = 0.5;
  std::uint64_t seed = 42;
};

/// Reads PACE_DATA_DIR over the given options.
CopilotOptions copilot_options_from_env(CopilotOptions base = {});

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

struct ApiRequest {
  std::string method;
  std::string path;
  std::map<std::string, std::string> query;
  /// Header names are matched case-insensitively.
  std::map<std::string, std::string> headers;
  std::string body;
};

/// Failure mapped to an HTTP status and an {code, message, detail} body.
class ApiError : public std::runtime_error {
 public:
  ApiError(int status, std::string code, const std::string& message, nlohmann::json detail = nullptr)
      : std::runtime_error(message), status_(status), code_(std::move(code)), detail_(std::move(detail)) {}
  int status() const { return status_; }
  const std::string& code() const { return code_; }
  const nlohmann::json& detail() const { return detail_; }
  ApiResponse response() const;

 private:
  int status_;
  std::string code_;
  nlohmann::json detail_;
};

struct StoredRecommendation {
  std::string id;
  int session = 0;
  bool advisory = false;
  std::vector<std::string> scenarios;
};

struct AlignmentDecision {
  std::string recommendation;
  std::vector<std::string> recommended;
  std::vector<std::string> chosen;
  double overlap = 0.0;
  bool aligned = false;
};

struct AlignmentReport {
  std::size_t n_decisions = 0;
  std::size_t n_aligned = 0;
  double alignment_rate = 0.0;
  std::vector<AlignmentDecision> decisions;
};

/// Fraction of `chosen` that also appears in `recommended`; 0 for an empty choice.
double batch_overlap(std::span<const std::string> recommended, std::span<const std::string> chosen);
AlignmentReport alignment_report(std::vector<AlignmentDecision> decisions);
nlohmann::json alignment_to_json(const AlignmentReport& report);

/// Live state of one trainee: the fold of its event log.
struct TraineeRecord {
  TraineeRecord(std::string id, Timestamp created, std::shared_ptr<const Fixture> fixture, const EngineOptions& options)
      : id(std::move(id)), created_at(created), clock(created), engine(std::move(fixture), options) {}

  std::string id;
  Timestamp created_at;
  Timestamp clock;
  CurriculumEngine engine;
  int sessions_seen = 0;
  std::vector<std::string> idempotency_keys;
  std::vector<nlohmann::json> events;
  std::map<std::string, StoredRecommendation> recommendations;
  std::vector<AlignmentDecision> decisions;
};

struct ReplayReport {
  bool consistent = true;
  std::size_t live_events = 0;
  std::size_t logged_events = 0;
  std::optional<std::size_t> divergent_offset;
  std::string detail;
};

nlohmann::json replay_to_json(const ReplayReport& report);

/// Folds an event list from fresh priors. Throws ApiError on a malformed event.
std::unique_ptr<TraineeRecord> fold_events(std::span<const nlohmann::json> events,
                                           std::shared_ptr<const Fixture> fixture, const CopilotOptions& options);

/// Largest absolute difference over belief pseudo-counts, arm posteriors and the
/// dynamics estimate; infinity when the records are structurally different.
double state_distance(const TraineeRecord& a, const TraineeRecord& b);

/// HTTP-agnostic co-pilot: every endpoint returns a status and a JSON body.
/// Requests for one trainee are serialized; different trainees run concurrently.
class CopilotService {
 public:
  /// Loads every existing event log in the data directory.
  CopilotService(std::shared_ptr<const Fixture> fixture, CopilotOptions options);

  const CopilotOptions& options() const { return options_; }
  const Fixture& fixture() const { return *fixture_; }

  ApiResponse handle(const ApiRequest& request);

  ApiResponse create_trainee(const nlohmann::json& body);
  ApiResponse beliefs(const std::string& id);
  ApiResponse dynamics(const std::string& id);
  ApiResponse ingest_debrief(const std::string& id, const nlohmann::json& body,
                             const std::optional<std::string>& idempotency_key);
  ApiResponse recommend(const std::string& id, std::optional<std::size_t> k, std::optional<Timestamp> at = {});
  ApiResponse record_assignment(const std::string& id, const nlohmann::json& body);
  ApiResponse alignment(const std::string& id);
  ApiResponse graph() const;
  ApiResponse catalog() const;

  /// Refolds the persisted log (or the in-memory one without a data directory)
  /// and compares it with the live state to 1e-9.
  ReplayReport snapshot_and_replay(const std::string& id);

  std::vector<std::string> trainee_ids() const;
  std::filesystem::path log_path(const std::string& id) const;

 private:
  struct Slot {
    std::mutex mutex;
    std::unique_ptr<TraineeRecord> record;
  };

  Slot& slot(const std::string& id);
  std::optional<IngestResult> append(TraineeRecord& record, nlohmann::json event);

  std::shared_ptr<const Fixture> fixture_;
  CopilotOptions options_;
  mutable std::shared_mutex map_mutex_;
  std::map<std::string, std::unique_ptr<Slot>> trainees_;
  std::size_t auto_ids_ = 0;
};

}  // namespace pace
