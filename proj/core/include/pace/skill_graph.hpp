#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace pace {

/// Position of a node in SkillGraph::nodes().
using NodeIndex = std::uint32_t;
/// Dense position of an assessable (question/instruction) node; beliefs,
/// ground truth and the similarity index are all laid out by SkillIndex.
using SkillIndex = std::uint32_t;

inline constexpr std::uint32_t kNone = 0xffffffffu;
inline constexpr int kGraphSchemaVersion = 1;

enum class NodeKind { condition, question, instruction };
enum class EdgeKind { sequential, implication, entailment };

std::string_view to_string(NodeKind kind);
std::string_view to_string(EdgeKind kind);
NodeKind parse_node_kind(std::string_view text);
EdgeKind parse_edge_kind(std::string_view text);

struct SkillNode {
  std::string id;
  NodeKind kind = NodeKind::question;
  std::string text;
  /// First entry is the owning procedure (the incident whose sequential tree holds the node).
  std::vector<std::string> incident_types;
  int depth = 0;

  bool assessable() const { return kind != NodeKind::condition; }
  friend bool operator==(const SkillNode&, const SkillNode&) = default;
};

struct SkillEdge {
  std::string src;
  std::string dst;
  EdgeKind kind = EdgeKind::sequential;

  friend bool operator==(const SkillEdge&, const SkillEdge&) = default;
};

struct IncidentType {
  std::string id;
  std::string department;
  NodeIndex root = kNone;
  int max_depth = 0;
};

class GraphParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Structural violation; `element()` names the offending node, edge endpoint or incident.
class GraphValidationError : public std::runtime_error {
 public:
  GraphValidationError(std::string element, const std::string& message)
      : std::runtime_error(message), element_(std::move(element)) {}
  const std::string& element() const { return element_; }

 private:
  std::string element_;
};

/// Immutable, validated skill knowledge graph.
class SkillGraph {
 public:
  struct Arc {
    NodeIndex node;
    EdgeKind kind;
  };

  /// Validates every invariant; throws GraphValidationError naming the offender.
  /// `departments` maps incident id to department label; incidents missing from
  /// it are labelled round-robin across {police, fire, medical} in sorted order.
  SkillGraph(std::vector<SkillNode> nodes, std::vector<SkillEdge> edges,
             std::map<std::string, std::string> departments = {});

  std::span<const SkillNode> nodes() const { return nodes_; }
  std::span<const SkillEdge> edges() const { return edges_; }
  const SkillNode& node(NodeIndex i) const { return nodes_.at(i); }
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t edge_count() const { return edges_.size(); }

  std::optional<NodeIndex> find(std::string_view id) const;
  NodeIndex index_of(std::string_view id) const;

  std::span<const Arc> out_arcs(NodeIndex i) const { return out_[i]; }
  std::span<const Arc> in_arcs(NodeIndex i) const { return in_[i]; }

  std::size_t skill_count() const { return skills_.size(); }
  NodeIndex node_of(SkillIndex s) const { return skills_.at(s); }
  /// kNone for condition nodes.
  SkillIndex skill_of(NodeIndex i) const { return skill_slot_.at(i); }
  std::optional<SkillIndex> find_skill(std::string_view id) const;
  const std::string& skill_id(SkillIndex s) const { return nodes_[skills_.at(s)].id; }

  std::span<const IncidentType> incidents() const { return incidents_; }
  std::optional<std::size_t> find_incident(std::string_view id) const;
  /// Index into incidents() of the node's owning procedure.
  std::size_t primary_incident(NodeIndex i) const { return primary_incident_.at(i); }
  std::vector<std::string> departments() const;

  friend bool operator==(const SkillGraph& a, const SkillGraph& b) {
    return a.nodes_ == b.nodes_ && a.edges_ == b.edges_ && a.departments_ == b.departments_;
  }

 private:
  std::vector<SkillNode> nodes_;
  std::vector<SkillEdge> edges_;
  std::map<std::string, std::string> departments_;
  std::unordered_map<std::string, NodeIndex> by_id_;
  std::vector<std::vector<Arc>> out_;
  std::vector<std::vector<Arc>> in_;
  std::vector<NodeIndex> skills_;
  std::vector<SkillIndex> skill_slot_;
  std::vector<IncidentType> incidents_;
  std::vector<std::size_t> primary_incident_;
};

nlohmann::json graph_to_json(const SkillGraph& graph);
SkillGraph graph_from_json(const nlohmann::json& doc);
/// Throws GraphParseError on unreadable or malformed files.
SkillGraph load_graph(const std::filesystem::path& path);
void save_graph(const SkillGraph& graph, const std::filesystem::path& path);
/// Canonical serialization; identical graphs give identical bytes.
std::string serialize_graph(const SkillGraph& graph);

/// depth(v) / max depth of v's owning procedure; roots map to 0.
double normalized_depth(const SkillGraph& graph, NodeIndex node);
double normalized_depth(const SkillGraph& graph, std::string_view node_id);

// ---------------------------------------------------------------------------
// Synthetic graphs

struct GraphGenParams {
  std::size_t n_nodes = 1053;
  std::size_t n_edges = 1283;
  std::size_t n_incident_types = 63;
  double condition_fraction = 0.15;
  int max_depth = 12;
  std::uint64_t seed = 7;
};

class InfeasibleParamsError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

GraphGenParams graph_params_from_json(const nlohmann::json& doc);
nlohmann::json graph_params_to_json(const GraphGenParams& params);

/// Builds a graph with one sequential tree per incident type. Conditions are
/// implied by nodes of one procedure and entail continuations in another, so a
/// true condition pulls the downstream part of a second protocol into a scenario.
SkillGraph generate_synthetic_graph(const GraphGenParams& params);

// ---------------------------------------------------------------------------
// Scenarios

struct Scenario {
  std::string id;
  std::string incident_type;
  std::map<std::string, bool> conditions;

  friend bool operator==(const Scenario&, const Scenario&) = default;
};

class ScenarioError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Throws ScenarioError when the incident or a configured condition is unknown.
void validate_scenario(const SkillGraph& graph, const Scenario& scenario);

/// Assessable nodes activated by the scenario, ascending by SkillIndex.
///
/// Breadth-first from the incident root: sequential and implication edges are
/// always followed, an entailment edge only when its condition is configured
/// true. Conditions missing from the configuration count as false.
std::vector<SkillIndex> activated_subgraph(const SkillGraph& graph, const Scenario& scenario);

/// Conditions reachable from the incident root when every condition is true.
std::vector<NodeIndex> reachable_conditions(const SkillGraph& graph, std::size_t incident);

struct ScenarioCatalog {
  std::vector<Scenario> scenarios;
  /// Set when the requested count exceeded the number of distinct configurations.
  bool short_of_target = false;

  std::size_t size() const { return scenarios.size(); }
  friend bool operator==(const ScenarioCatalog& a, const ScenarioCatalog& b) {
    return a.scenarios == b.scenarios;
  }
};

inline constexpr std::size_t kDefaultCatalogSize = 297;

ScenarioCatalog build_scenario_catalog(const SkillGraph& graph, std::size_t target_count = kDefaultCatalogSize,
                                       std::uint64_t seed = 7);

nlohmann::json catalog_to_json(const ScenarioCatalog& catalog);
/// Accepts {"schema_version":1,"scenarios":[...]} or a bare array of scenarios.
ScenarioCatalog catalog_from_json(const nlohmann::json& doc, const SkillGraph& graph);

/// Catalog compiled against a graph: activated subgraphs and prerequisite
/// predecessors are computed once and shared by every policy.
class ScenarioTable {
 public:
  ScenarioTable(const SkillGraph& graph, ScenarioCatalog catalog);

  const SkillGraph& graph() const { return *graph_; }
  const ScenarioCatalog& catalog() const { return catalog_; }
  std::size_t size() const { return catalog_.size(); }
  const Scenario& scenario(std::size_t i) const { return catalog_.scenarios.at(i); }
  std::span<const SkillIndex> activated(std::size_t i) const { return activated_.at(i); }
  /// Assessable nodes outside V_S with a sequential edge into V_S.
  std::span<const SkillIndex> external_predecessors(std::size_t i) const { return predecessors_.at(i); }
  std::size_t incident(std::size_t i) const { return incident_.at(i); }
  std::optional<std::size_t> find(std::string_view scenario_id) const;

 private:
  const SkillGraph* graph_;
  ScenarioCatalog catalog_;
  std::vector<std::vector<SkillIndex>> activated_;
  std::vector<std::vector<SkillIndex>> predecessors_;
  std::vector<std::size_t> incident_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

}  // namespace pace
