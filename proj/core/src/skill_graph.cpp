#include "pace/skill_graph.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <set>
#include <sstream>

namespace pace {

std::string_view to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::condition: return "condition";
    case NodeKind::question: return "question";
    case NodeKind::instruction: return "instruction";
  }
  return "unknown";
}

std::string_view to_string(EdgeKind kind) {
  switch (kind) {
    case EdgeKind::sequential: return "sequential";
    case EdgeKind::implication: return "implication";
    case EdgeKind::entailment: return "entailment";
  }
  return "unknown";
}

NodeKind parse_node_kind(std::string_view text) {
  if (text == "condition") return NodeKind::condition;
  if (text == "question") return NodeKind::question;
  if (text == "instruction") return NodeKind::instruction;
  throw GraphParseError("unknown node kind '" + std::string(text) + "'");
}

EdgeKind parse_edge_kind(std::string_view text) {
  if (text == "sequential") return EdgeKind::sequential;
  if (text == "implication") return EdgeKind::implication;
  if (text == "entailment") return EdgeKind::entailment;
  throw GraphParseError("unknown edge kind '" + std::string(text) + "'");
}

SkillGraph::SkillGraph(std::vector<SkillNode> nodes, std::vector<SkillEdge> edges,
                       std::map<std::string, std::string> departments)
    : nodes_(std::move(nodes)), edges_(std::move(edges)) {
  by_id_.reserve(nodes_.size());
  skill_slot_.assign(nodes_.size(), kNone);
  for (NodeIndex i = 0; i < nodes_.size(); ++i) {
    const SkillNode& n = nodes_[i];
    if (n.id.empty()) {
      throw GraphValidationError("#" + std::to_string(i), "node #" + std::to_string(i) + " has an empty id");
    }
    if (!by_id_.emplace(n.id, i).second) {
      throw GraphValidationError(n.id, "duplicate node id '" + n.id + "'");
    }
    if (n.depth < 0) {
      throw GraphValidationError(n.id, "node '" + n.id + "' has negative depth");
    }
    if (n.assessable()) {
      if (n.incident_types.empty()) {
        throw GraphValidationError(n.id, "assessable node '" + n.id + "' belongs to no incident type");
      }
      skill_slot_[i] = static_cast<SkillIndex>(skills_.size());
      skills_.push_back(i);
    }
    for (const auto& inc : n.incident_types) {
      if (inc.empty()) {
        throw GraphValidationError(n.id, "node '" + n.id + "' lists an empty incident type");
      }
    }
  }

  out_.resize(nodes_.size());
  in_.resize(nodes_.size());
  for (const SkillEdge& e : edges_) {
    const auto src = find(e.src);
    if (!src) throw GraphValidationError(e.src, "edge references missing node '" + e.src + "'");
    const auto dst = find(e.dst);
    if (!dst) throw GraphValidationError(e.dst, "edge references missing node '" + e.dst + "'");
    if (*src == *dst) {
      throw GraphValidationError(e.src, "self-loop on node '" + e.src + "'");
    }
    const bool src_skill = nodes_[*src].assessable();
    const bool dst_skill = nodes_[*dst].assessable();
    bool legal = false;
    switch (e.kind) {
      case EdgeKind::sequential: legal = src_skill && dst_skill; break;
      case EdgeKind::implication: legal = src_skill && !dst_skill; break;
      case EdgeKind::entailment: legal = !src_skill && dst_skill; break;
    }
    if (!legal) {
      throw GraphValidationError(e.src + "->" + e.dst, "illegal " + std::string(to_string(e.kind)) + " edge '" +
                                                           e.src + "' -> '" + e.dst + "'");
    }
    out_[*src].push_back({*dst, e.kind});
    in_[*dst].push_back({*src, e.kind});
  }

  std::set<std::string> incident_ids;
  for (const SkillNode& n : nodes_) incident_ids.insert(n.incident_types.begin(), n.incident_types.end());
  for (const auto& [inc, dept] : departments) {
    if (!incident_ids.contains(inc)) {
      throw GraphValidationError(inc, "department label for unknown incident type '" + inc + "'");
    }
  }
  static constexpr std::string_view kDefaultDepartments[] = {"police", "fire", "medical"};
  std::size_t ordinal = 0;
  for (const auto& inc : incident_ids) {
    IncidentType it;
    it.id = inc;
    if (auto found = departments.find(inc); found != departments.end()) {
      it.department = found->second;
    } else {
      it.department = std::string(kDefaultDepartments[ordinal % 3]);
    }
    departments_[inc] = it.department;
    ++ordinal;
    incidents_.push_back(std::move(it));
  }

  primary_incident_.assign(nodes_.size(), kNone);
  for (NodeIndex i = 0; i < nodes_.size(); ++i) {
    const SkillNode& n = nodes_[i];
    if (n.incident_types.empty()) continue;
    const auto inc = *find_incident(n.incident_types.front());
    primary_incident_[i] = inc;
    IncidentType& it = incidents_[inc];
    if (n.assessable()) {
      it.max_depth = std::max(it.max_depth, n.depth);
      if (n.depth == 0) {
        if (it.root != kNone) {
          throw GraphValidationError(it.id, "incident type '" + it.id + "' has more than one root ('" +
                                                nodes_[it.root].id + "', '" + n.id + "')");
        }
        it.root = i;
      }
    }
  }
  for (const IncidentType& it : incidents_) {
    if (it.root == kNone) {
      throw GraphValidationError(it.id, "incident type '" + it.id + "' has no depth-0 root node");
    }
  }
}

std::optional<NodeIndex> SkillGraph::find(std::string_view id) const {
  const auto it = by_id_.find(std::string(id));
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

NodeIndex SkillGraph::index_of(std::string_view id) const {
  if (auto i = find(id)) return *i;
  throw std::out_of_range("unknown node '" + std::string(id) + "'");
}

std::optional<SkillIndex> SkillGraph::find_skill(std::string_view id) const {
  const auto i = find(id);
  if (!i || skill_slot_[*i] == kNone) return std::nullopt;
  return skill_slot_[*i];
}

std::optional<std::size_t> SkillGraph::find_incident(std::string_view id) const {
  const auto it = std::lower_bound(incidents_.begin(), incidents_.end(), id,
                                   [](const IncidentType& a, std::string_view b) { return a.id < b; });
  if (it == incidents_.end() || it->id != id) return std::nullopt;
  return static_cast<std::size_t>(it - incidents_.begin());
}

std::vector<std::string> SkillGraph::departments() const {
  std::set<std::string> unique;
  for (const auto& it : incidents_) unique.insert(it.department);
  return {unique.begin(), unique.end()};
}

// ---------------------------------------------------------------------------

nlohmann::json graph_to_json(const SkillGraph& graph) {
  nlohmann::json incidents = nlohmann::json::array();
  for (const auto& it : graph.incidents()) {
    incidents.push_back({{"id", it.id}, {"department", it.department}});
  }
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : graph.nodes()) {
    nodes.push_back({{"id", n.id},
                     {"kind", to_string(n.kind)},
                     {"text", n.text},
                     {"incident_types", n.incident_types},
                     {"depth", n.depth}});
  }
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : graph.edges()) {
    edges.push_back({{"src", e.src}, {"dst", e.dst}, {"kind", to_string(e.kind)}});
  }
  return {{"schema_version", kGraphSchemaVersion}, {"incidents", incidents}, {"nodes", nodes}, {"edges", edges}};
}

namespace {

template <typename T>
T required(const nlohmann::json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw GraphParseError(where + ": missing key '" + key + "'");
  }
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw GraphParseError(where + ": bad value for '" + key + "': " + e.what());
  }
}

void check_schema_version(const nlohmann::json& doc) {
  if (doc.contains("schema_version")) {
    if (!doc["schema_version"].is_number_integer() || doc["schema_version"].get<int>() != kGraphSchemaVersion) {
      throw GraphParseError("unsupported schema_version " + doc["schema_version"].dump());
    }
  }
}

}  // namespace

SkillGraph graph_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw GraphParseError("graph document must be a JSON object");
  check_schema_version(doc);
  if (!doc.contains("nodes") || !doc["nodes"].is_array()) throw GraphParseError("graph: 'nodes' must be an array");
  if (!doc.contains("edges") || !doc["edges"].is_array()) throw GraphParseError("graph: 'edges' must be an array");

  std::vector<SkillNode> nodes;
  nodes.reserve(doc["nodes"].size());
  std::size_t i = 0;
  for (const auto& jn : doc["nodes"]) {
    const std::string where = "nodes[" + std::to_string(i++) + "]";
    SkillNode n;
    n.id = required<std::string>(jn, "id", where);
    n.kind = parse_node_kind(required<std::string>(jn, "kind", where));
    n.text = jn.value("text", std::string{});
    if (jn.contains("incident_types")) n.incident_types = required<std::vector<std::string>>(jn, "incident_types", where);
    n.depth = jn.contains("depth") ? required<int>(jn, "depth", where) : 0;
    nodes.push_back(std::move(n));
  }
  std::vector<SkillEdge> edges;
  edges.reserve(doc["edges"].size());
  i = 0;
  for (const auto& je : doc["edges"]) {
    const std::string where = "edges[" + std::to_string(i++) + "]";
    edges.push_back({required<std::string>(je, "src", where), required<std::string>(je, "dst", where),
                     parse_edge_kind(required<std::string>(je, "kind", where))});
  }
  std::map<std::string, std::string> departments;
  if (doc.contains("incidents")) {
    if (!doc["incidents"].is_array()) throw GraphParseError("graph: 'incidents' must be an array");
    i = 0;
    for (const auto& ji : doc["incidents"]) {
      const std::string where = "incidents[" + std::to_string(i++) + "]";
      departments[required<std::string>(ji, "id", where)] = required<std::string>(ji, "department", where);
    }
  }
  return SkillGraph(std::move(nodes), std::move(edges), std::move(departments));
}

SkillGraph load_graph(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw GraphParseError("cannot open graph file " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw GraphParseError(path.string() + ": " + e.what());
  }
  return graph_from_json(doc);
}

std::string serialize_graph(const SkillGraph& graph) { return graph_to_json(graph).dump(1) + "\n"; }

void save_graph(const SkillGraph& graph, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write graph file " + path.string());
  out << serialize_graph(graph);
}

double normalized_depth(const SkillGraph& graph, NodeIndex node) {
  const std::size_t inc = graph.primary_incident(node);
  if (inc == kNone) return 0.0;
  const int max_depth = graph.incidents()[inc].max_depth;
  if (max_depth <= 0) return 0.0;
  return std::min(1.0, static_cast<double>(graph.node(node).depth) / max_depth);
}

double normalized_depth(const SkillGraph& graph, std::string_view node_id) {
  return normalized_depth(graph, graph.index_of(node_id));
}

// ---------------------------------------------------------------------------

void validate_scenario(const SkillGraph& graph, const Scenario& scenario) {
  if (!graph.find_incident(scenario.incident_type)) {
    throw ScenarioError("scenario '" + scenario.id + "': unknown incident type '" + scenario.incident_type + "'");
  }
  for (const auto& [cid, value] : scenario.conditions) {
    const auto idx = graph.find(cid);
    if (!idx) throw ScenarioError("scenario '" + scenario.id + "': unknown condition '" + cid + "'");
    if (graph.node(*idx).kind != NodeKind::condition) {
      throw ScenarioError("scenario '" + scenario.id + "': '" + cid + "' is not a condition node");
    }
  }
}

namespace {

template <typename GateFn>
std::vector<bool> traverse(const SkillGraph& graph, NodeIndex root, GateFn&& gate_open) {
  std::vector<bool> seen(graph.node_count(), false);
  std::deque<NodeIndex> frontier{root};
  seen[root] = true;
  while (!frontier.empty()) {
    const NodeIndex u = frontier.front();
    frontier.pop_front();
    for (const auto& arc : graph.out_arcs(u)) {
      if (seen[arc.node]) continue;
      if (arc.kind == EdgeKind::entailment && !gate_open(u)) continue;
      seen[arc.node] = true;
      frontier.push_back(arc.node);
    }
  }
  return seen;
}

}  // namespace

std::vector<SkillIndex> activated_subgraph(const SkillGraph& graph, const Scenario& scenario) {
  validate_scenario(graph, scenario);
  const auto inc = *graph.find_incident(scenario.incident_type);
  const NodeIndex root = graph.incidents()[inc].root;
  const auto seen = traverse(graph, root, [&](NodeIndex condition) {
    const auto it = scenario.conditions.find(graph.node(condition).id);
    return it != scenario.conditions.end() && it->second;
  });
  std::vector<SkillIndex> out;
  for (NodeIndex i = 0; i < seen.size(); ++i) {
    if (seen[i] && graph.skill_of(i) != kNone) out.push_back(graph.skill_of(i));
  }
  return out;
}

std::vector<NodeIndex> reachable_conditions(const SkillGraph& graph, std::size_t incident) {
  const auto seen = traverse(graph, graph.incidents()[incident].root, [](NodeIndex) { return true; });
  std::vector<NodeIndex> out;
  for (NodeIndex i = 0; i < seen.size(); ++i) {
    if (seen[i] && graph.node(i).kind == NodeKind::condition) out.push_back(i);
  }
  return out;
}

ScenarioTable::ScenarioTable(const SkillGraph& graph, ScenarioCatalog catalog)
    : graph_(&graph), catalog_(std::move(catalog)) {
  const std::size_t n = catalog_.size();
  activated_.reserve(n);
  predecessors_.reserve(n);
  incident_.reserve(n);
  std::vector<bool> in_set(graph.skill_count(), false);
  for (std::size_t i = 0; i < n; ++i) {
    const Scenario& sc = catalog_.scenarios[i];
    if (!by_id_.emplace(sc.id, i).second) {
      throw ScenarioError("duplicate scenario id '" + sc.id + "'");
    }
    auto active = activated_subgraph(graph, sc);
    for (SkillIndex s : active) in_set[s] = true;
    std::set<SkillIndex> preds;
    for (SkillIndex s : active) {
      for (const auto& arc : graph.in_arcs(graph.node_of(s))) {
        if (arc.kind != EdgeKind::sequential) continue;
        const SkillIndex p = graph.skill_of(arc.node);
        if (p != kNone && !in_set[p]) preds.insert(p);
      }
    }
    for (SkillIndex s : active) in_set[s] = false;
    activated_.push_back(std::move(active));
    predecessors_.emplace_back(preds.begin(), preds.end());
    incident_.push_back(*graph.find_incident(sc.incident_type));
  }
}

std::optional<std::size_t> ScenarioTable::find(std::string_view scenario_id) const {
  const auto it = by_id_.find(std::string(scenario_id));
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

}  // namespace pace
