#include <algorithm>
#include <array>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "pace/rng.hpp"
#include "pace/skill_graph.hpp"

namespace pace {
namespace {

constexpr std::array kIncidentNames = {
    "cardiac arrest",    "choking",          "drowning",         "overdose",         "stroke",
    "seizure",           "diabetic emergency", "allergic reaction", "childbirth",      "breathing problem",
    "chest pain",        "fall injury",      "burn injury",      "electrocution",    "heat exposure",
    "cold exposure",     "animal bite",      "poisoning",        "hemorrhage",       "unconscious person",
    "sick person",       "back pain",        "abdominal pain",   "headache",         "psychiatric crisis",
    "suicide threat",    "traffic collision", "vehicle fire",     "structure fire",   "brush fire",
    "gas leak",          "hazmat spill",     "carbon monoxide",  "alarm activation", "explosion",
    "water rescue",      "trench collapse",  "elevator entrapment", "smoke investigation", "power line down",
    "burglary",          "robbery",          "assault",          "domestic disturbance", "shots fired",
    "stabbing",          "missing person",   "abduction",        "suspicious vehicle", "trespassing",
    "vandalism",         "theft report",     "fraud report",     "noise complaint",  "welfare check",
    "intoxicated person", "fight in progress", "hit and run",     "road hazard",      "active assailant",
    "bomb threat",       "hostage situation", "prowler report",
};

constexpr std::array kQuestionVerbs = {"ask", "confirm", "verify", "determine", "establish", "check"};
constexpr std::array kInstructionVerbs = {"instruct", "direct", "advise", "tell", "coach", "remind"};

// Skill objects by protocol stage: early intake, mid assessment, late directives.
constexpr std::array kEarlyObjects = {
    "caller location",  "callback number",  "cross street",      "nature of emergency", "caller safety",
    "number of patients", "scene hazards",  "weapons present",   "building access",     "caller relationship",
    "landmark nearby",  "time of onset",
};
constexpr std::array kMidObjects = {
    "patient consciousness", "breathing status", "bleeding severity", "patient age",       "skin color",
    "chest discomfort",      "medical history",  "medication use",    "suspect description", "vehicle description",
    "fire spread",           "smoke color",      "entrapment status", "injury location",   "alertness level",
    "pulse presence",
};
constexpr std::array kLateObjects = {
    "chest compressions", "airway position",  "direct pressure",  "building evacuation", "door unlocked",
    "stay on line",       "patient still",    "scene safety",     "porch light",         "pets secured",
    "recovery position",  "responder arrival",
};

const char* pick(Rng& rng, const auto& table) {
  std::uniform_int_distribution<std::size_t> d(0, table.size() - 1);
  return table[d(rng)];
}

std::size_t uniform_index(Rng& rng, std::size_t n) {
  std::uniform_int_distribution<std::size_t> d(0, n - 1);
  return d(rng);
}

std::string incident_name(std::size_t i) {
  if (i < kIncidentNames.size()) return kIncidentNames[i];
  return std::string(kIncidentNames[i % kIncidentNames.size()]) + " variant " +
         std::to_string(i / kIncidentNames.size());
}

std::string padded(std::size_t value, int width) {
  std::string s = std::to_string(value);
  return std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(s.size()))), '0') + s;
}

struct TreeNode {
  std::size_t incident;
  int depth;
  std::size_t parent;  // kNone for roots
  bool instruction = false;
};

}  // namespace

SkillGraph generate_synthetic_graph(const GraphGenParams& params) {
  if (params.n_incident_types == 0) throw InfeasibleParamsError("n_incident_types must be positive");
  if (params.n_nodes <= params.n_incident_types) {
    throw InfeasibleParamsError("n_nodes must exceed n_incident_types");
  }
  if (!(params.condition_fraction > 0.0 && params.condition_fraction < 0.5)) {
    throw InfeasibleParamsError("condition_fraction must lie in (0, 0.5)");
  }
  if (params.max_depth < 1) throw InfeasibleParamsError("max_depth must be at least 1");

  const auto n_cond = static_cast<std::size_t>(std::llround(params.condition_fraction * params.n_nodes));
  const std::size_t n_skill = params.n_nodes - n_cond;
  const std::size_t n_inc = params.n_incident_types;
  if (n_skill < n_inc) throw InfeasibleParamsError("too few assessable nodes for one root per incident type");
  const std::size_t min_edges = (n_skill - n_inc) + 2 * n_cond;
  if (params.n_edges < min_edges) {
    throw InfeasibleParamsError("n_edges " + std::to_string(params.n_edges) + " is below the spanning minimum " +
                                std::to_string(min_edges));
  }

  Rng rng(derive_seed(params.seed, 0x67726170ULL));
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Tree sizes: one root each, remaining skills scattered uniformly.
  std::vector<std::size_t> tree_size(n_inc, 1);
  for (std::size_t k = n_inc; k < n_skill; ++k) ++tree_size[uniform_index(rng, n_inc)];

  // Sequential backbones with random branch points, capped at max_depth.
  std::vector<TreeNode> skills;
  skills.reserve(n_skill);
  std::vector<std::vector<std::size_t>> members(n_inc);
  for (std::size_t inc = 0; inc < n_inc; ++inc) {
    const std::size_t root = skills.size();
    skills.push_back({inc, 0, kNone});
    members[inc].push_back(root);
    std::size_t tip = root;
    for (std::size_t k = 1; k < tree_size[inc]; ++k) {
      std::size_t parent = tip;
      if (skills[tip].depth >= params.max_depth || unit(rng) > 0.65) {
        std::vector<std::size_t> open;
        for (std::size_t m : members[inc]) {
          if (skills[m].depth < params.max_depth) open.push_back(m);
        }
        parent = open[uniform_index(rng, open.size())];
      }
      const std::size_t id = skills.size();
      skills.push_back({inc, skills[parent].depth + 1, parent});
      members[inc].push_back(id);
      tip = id;
    }
  }
  std::vector<int> inc_max_depth(n_inc, 0);
  for (const auto& s : skills) inc_max_depth[s.incident] = std::max(inc_max_depth[s.incident], s.depth);
  for (auto& s : skills) {
    const double d = inc_max_depth[s.incident] > 0 ? static_cast<double>(s.depth) / inc_max_depth[s.incident] : 0.0;
    s.instruction = s.depth > 0 && unit(rng) < d;
  }

  std::vector<SkillNode> nodes;
  nodes.reserve(params.n_nodes);
  std::vector<std::string> incident_ids(n_inc);
  std::map<std::string, std::string> departments;
  static constexpr const char* kDepartments[] = {"police", "fire", "medical"};
  for (std::size_t inc = 0; inc < n_inc; ++inc) {
    incident_ids[inc] = "inc-" + padded(inc, 2);
    departments[incident_ids[inc]] = kDepartments[inc % 3];
  }
  for (std::size_t k = 0; k < skills.size(); ++k) {
    const auto& s = skills[k];
    SkillNode n;
    n.kind = s.instruction ? NodeKind::instruction : NodeKind::question;
    n.id = std::string(s.instruction ? "i-" : "q-") + padded(k, 4);
    const double d = inc_max_depth[s.incident] > 0 ? static_cast<double>(s.depth) / inc_max_depth[s.incident] : 0.0;
    const char* object = d < 0.34 ? pick(rng, kEarlyObjects) : d < 0.67 ? pick(rng, kMidObjects)
                                                                          : pick(rng, kLateObjects);
    if (s.instruction) {
      n.text = std::string(pick(rng, kInstructionVerbs)) + " " + object + " (" + incident_name(s.incident) + ")";
    } else {
      n.text = std::string(pick(rng, kQuestionVerbs)) + " " + object + " (" + incident_name(s.incident) + ")";
    }
    n.incident_types = {incident_ids[s.incident]};
    n.depth = s.depth;
    nodes.push_back(std::move(n));
  }

  std::vector<SkillEdge> edges;
  edges.reserve(params.n_edges);
  std::set<std::pair<std::size_t, std::size_t>> used;  // (src node, dst node)
  for (std::size_t k = 0; k < skills.size(); ++k) {
    if (skills[k].parent != kNone) {
      edges.push_back({nodes[skills[k].parent].id, nodes[k].id, EdgeKind::sequential});
      used.emplace(skills[k].parent, k);
    }
  }

  auto mid_chain_node = [&](std::size_t inc) {
    std::vector<std::size_t> candidates;
    for (std::size_t m : members[inc]) {
      if (skills[m].depth >= 1) candidates.push_back(m);
    }
    if (candidates.empty()) return members[inc].front();
    return candidates[uniform_index(rng, candidates.size())];
  };
  auto other_incident = [&](std::size_t inc) {
    if (n_inc == 1) return inc;
    std::size_t other = uniform_index(rng, n_inc - 1);
    return other >= inc ? other + 1 : other;
  };

  std::vector<std::size_t> cond_owner(n_cond);
  for (std::size_t c = 0; c < n_cond; ++c) {
    const std::size_t node_index = nodes.size();
    const std::size_t owner = c % n_inc;
    cond_owner[c] = owner;
    SkillNode n;
    n.kind = NodeKind::condition;
    n.id = "c-" + padded(node_index, 4);
    n.text = "condition " + std::to_string(c) + " established during " + incident_name(owner);
    n.incident_types = {incident_ids[owner]};
    n.depth = 0;
    nodes.push_back(std::move(n));

    const std::size_t implier = mid_chain_node(owner);
    edges.push_back({nodes[implier].id, nodes[node_index].id, EdgeKind::implication});
    used.emplace(implier, node_index);
    const std::size_t target = mid_chain_node(other_incident(owner));
    edges.push_back({nodes[node_index].id, nodes[target].id, EdgeKind::entailment});
    used.emplace(node_index, target);
  }

  // Extra implication/entailment links up to the requested edge count.
  const std::size_t extra = params.n_edges - edges.size();
  std::size_t added = 0;
  std::size_t attempts = 0;
  while (added < extra && n_cond > 0 && attempts < 100 * (extra + 1)) {
    ++attempts;
    const std::size_t c = uniform_index(rng, n_cond);
    const std::size_t cond_node = n_skill + c;
    if (added % 2 == 0) {
      const std::size_t src = mid_chain_node(uniform_index(rng, n_inc));
      if (!used.emplace(src, cond_node).second) continue;
      edges.push_back({nodes[src].id, nodes[cond_node].id, EdgeKind::implication});
    } else {
      const std::size_t dst = mid_chain_node(other_incident(cond_owner[c]));
      if (!used.emplace(cond_node, dst).second) continue;
      edges.push_back({nodes[cond_node].id, nodes[dst].id, EdgeKind::entailment});
    }
    ++added;
  }
  if (added < extra) {
    throw InfeasibleParamsError("could not place " + std::to_string(extra) + " extra edges without duplicates");
  }

  return SkillGraph(std::move(nodes), std::move(edges), std::move(departments));
}

GraphGenParams graph_params_from_json(const nlohmann::json& doc) {
  GraphGenParams p;
  p.n_nodes = doc.value("n_nodes", p.n_nodes);
  p.n_edges = doc.value("n_edges", p.n_edges);
  p.n_incident_types = doc.value("n_incident_types", p.n_incident_types);
  p.condition_fraction = doc.value("condition_fraction", p.condition_fraction);
  p.max_depth = doc.value("max_depth", p.max_depth);
  p.seed = doc.value("seed", p.seed);
  return p;
}

nlohmann::json graph_params_to_json(const GraphGenParams& p) {
  return {{"n_nodes", p.n_nodes},
          {"n_edges", p.n_edges},
          {"n_incident_types", p.n_incident_types},
          {"condition_fraction", p.condition_fraction},
          {"max_depth", p.max_depth},
          {"seed", p.seed}};
}

}  // namespace pace
