#include "support.hpp"

#include <mutex>

namespace pace::test {

std::shared_ptr<const Fixture> default_fixture() {
  static std::once_flag once;
  static std::shared_ptr<const Fixture> fixture;
  std::call_once(once, [] { fixture = make_fixture(generate_synthetic_graph(GraphGenParams{})); });
  return fixture;
}

SkillNode make_node(std::string id, NodeKind kind, std::string incident, int depth, std::string text) {
  SkillNode n;
  n.text = text.empty() ? "skill " + id : std::move(text);
  n.id = std::move(id);
  n.kind = kind;
  if (!incident.empty()) n.incident_types.push_back(std::move(incident));
  n.depth = depth;
  return n;
}

SkillGraph toy_graph() {
  return SkillGraph({make_node("q1", NodeKind::question, "inc", 0), make_node("c1", NodeKind::condition, "inc", 1),
                     make_node("q2", NodeKind::question, "inc", 1)},
                    {{"q1", "c1", EdgeKind::implication}, {"c1", "q2", EdgeKind::entailment}});
}

SkillGraph chain_graph(std::size_t n) {
  std::vector<SkillNode> nodes;
  std::vector<SkillEdge> edges;
  for (std::size_t i = 0; i < n; ++i) {
    nodes.push_back(make_node("q" + std::to_string(i + 1), NodeKind::question, "inc", static_cast<int>(i)));
    if (i > 0) edges.push_back({"q" + std::to_string(i), "q" + std::to_string(i + 1), EdgeKind::sequential});
  }
  return SkillGraph(std::move(nodes), std::move(edges));
}

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("pace-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::filesystem::path fixtures_dir() { return PACE_TEST_FIXTURES; }

}  // namespace pace::test
