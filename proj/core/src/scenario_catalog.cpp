#include <algorithm>
#include <numeric>
#include <set>

#include <spdlog/spdlog.h>

#include "pace/rng.hpp"
#include "pace/skill_graph.hpp"

namespace pace {
namespace {

/// Yields condition configurations of one incident whose activated subgraphs
/// are pairwise distinct, starting with the all-false base configuration.
class ConfigStream {
 public:
  ConfigStream(const SkillGraph& graph, std::size_t incident, Rng& rng)
      : graph_(&graph), incident_(incident), conditions_(reachable_conditions(graph, incident)) {
    const std::size_t k = conditions_.size();
    if (k <= 16) {
      masks_.resize(std::size_t{1} << k);
      std::iota(masks_.begin(), masks_.end(), std::uint64_t{0});
      std::shuffle(masks_.begin() + 1, masks_.end(), rng);
    } else {
      std::set<std::uint64_t> seen{0};
      masks_.push_back(0);
      std::uniform_int_distribution<std::uint64_t> bits;
      const std::uint64_t keep = k >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << k) - 1;
      for (int attempt = 0; attempt < 4096; ++attempt) {
        const std::uint64_t m = bits(rng) & keep;
        if (seen.insert(m).second) masks_.push_back(m);
      }
    }
  }

  std::optional<Scenario> next() {
    while (cursor_ < masks_.size()) {
      const std::uint64_t mask = masks_[cursor_++];
      Scenario sc;
      sc.incident_type = graph_->incidents()[incident_].id;
      for (std::size_t b = 0; b < conditions_.size(); ++b) {
        sc.conditions[graph_->node(conditions_[b]).id] = b < 64 && ((mask >> b) & 1U) != 0;
      }
      if (seen_subgraphs_.insert(activated_subgraph(*graph_, sc)).second) return sc;
    }
    return std::nullopt;
  }

 private:
  const SkillGraph* graph_;
  std::size_t incident_;
  std::vector<NodeIndex> conditions_;
  std::vector<std::uint64_t> masks_;
  std::size_t cursor_ = 0;
  std::set<std::vector<SkillIndex>> seen_subgraphs_;
};

}  // namespace

ScenarioCatalog build_scenario_catalog(const SkillGraph& graph, std::size_t target_count, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x636174616cULL));
  const std::size_t n_inc = graph.incidents().size();
  std::vector<ConfigStream> streams;
  streams.reserve(n_inc);
  for (std::size_t inc = 0; inc < n_inc; ++inc) streams.emplace_back(graph, inc, rng);

  // Round-robin passes keep coverage of incident types as even as possible.
  std::vector<std::vector<Scenario>> per_incident(n_inc);
  std::vector<bool> exhausted(n_inc, false);
  std::size_t total = 0;
  while (total < target_count) {
    bool progressed = false;
    for (std::size_t inc = 0; inc < n_inc && total < target_count; ++inc) {
      if (exhausted[inc]) continue;
      if (auto sc = streams[inc].next()) {
        per_incident[inc].push_back(std::move(*sc));
        ++total;
        progressed = true;
      } else {
        exhausted[inc] = true;
      }
    }
    if (!progressed) break;
  }

  ScenarioCatalog catalog;
  catalog.short_of_target = total < target_count;
  if (catalog.short_of_target) {
    spdlog::warn("scenario catalog: only {} distinct scenarios available (requested {})", total, target_count);
  }
  const int width = total >= 1000 ? 4 : 3;
  for (auto& list : per_incident) {
    for (auto& sc : list) {
      std::string n = std::to_string(catalog.scenarios.size());
      sc.id = "sc-" + std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(n.size()))), '0') + n;
      catalog.scenarios.push_back(std::move(sc));
    }
  }
  return catalog;
}

nlohmann::json catalog_to_json(const ScenarioCatalog& catalog) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& sc : catalog.scenarios) {
    arr.push_back({{"id", sc.id}, {"incident_type", sc.incident_type}, {"conditions", sc.conditions}});
  }
  return {{"schema_version", kGraphSchemaVersion}, {"scenarios", arr}};
}

ScenarioCatalog catalog_from_json(const nlohmann::json& doc, const SkillGraph& graph) {
  const nlohmann::json* arr = &doc;
  if (doc.is_object()) {
    if (doc.contains("schema_version") && doc["schema_version"] != kGraphSchemaVersion) {
      throw GraphParseError("unsupported catalog schema_version " + doc["schema_version"].dump());
    }
    if (!doc.contains("scenarios")) throw GraphParseError("catalog: missing 'scenarios'");
    arr = &doc["scenarios"];
  }
  if (!arr->is_array()) throw GraphParseError("catalog: expected an array of scenarios");
  ScenarioCatalog catalog;
  for (const auto& js : *arr) {
    try {
      Scenario sc;
      sc.id = js.at("id").get<std::string>();
      sc.incident_type = js.at("incident_type").get<std::string>();
      if (js.contains("conditions")) sc.conditions = js["conditions"].get<std::map<std::string, bool>>();
      validate_scenario(graph, sc);
      catalog.scenarios.push_back(std::move(sc));
    } catch (const nlohmann::json::exception& e) {
      throw GraphParseError(std::string("catalog entry: ") + e.what());
    }
  }
  return catalog;
}

}  // namespace pace
