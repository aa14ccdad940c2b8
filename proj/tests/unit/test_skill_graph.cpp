#include <doctest.h>

#include <algorithm>
#include <set>

#include "pace/skill_graph.hpp"
#include "support.hpp"

using namespace pace;

namespace {

// Fixed-point reachability over the raw edge list; independent of the BFS in the library.
std::set<std::string> reachable_oracle(const SkillGraph& g, const Scenario& sc) {
  std::set<std::string> seen;
  for (const auto& inc : g.incidents()) {
    if (inc.id == sc.incident_type) seen.insert(g.node(inc.root).id);
  }
  bool grew = true;
  while (grew) {
    grew = false;
    for (const auto& e : g.edges()) {
      if (!seen.contains(e.src) || seen.contains(e.dst)) continue;
      if (e.kind == EdgeKind::entailment) {
        const auto it = sc.conditions.find(e.src);
        if (it == sc.conditions.end() || !it->second) continue;
      }
      seen.insert(e.dst);
      grew = true;
    }
  }
  std::set<std::string> out;
  for (const auto& id : seen) {
    if (g.node(g.index_of(id)).assessable()) out.insert(id);
  }
  return out;
}

std::set<std::string> ids(const SkillGraph& g, const std::vector<SkillIndex>& v) {
  std::set<std::string> out;
  for (auto s : v) out.insert(g.skill_id(s));
  return out;
}

}  // namespace

TEST_SUITE("skill_graph") {
  TEST_CASE("minimal legal graph loads") {
    const SkillGraph g = load_graph(test::fixtures_dir() / "toy_graph.json");
    CHECK(g.node_count() == 3);
    CHECK(g.edge_count() == 2);
    CHECK(g.skill_count() == 2);
    CHECK(g.incidents().size() == 1);
  }

  TEST_CASE("dangling edge names the missing node") {
    try {
      (void)load_graph(test::fixtures_dir() / "dangling_edge.json");
      FAIL("expected a validation error");
    } catch (const GraphValidationError& e) {
      CHECK(e.element() == "q9");
      CHECK(std::string(e.what()).find("q9") != std::string::npos);
    }
  }

  TEST_CASE("malformed file is a parse error") {
    CHECK_THROWS_AS((void)load_graph(test::fixtures_dir() / "malformed.json"), GraphParseError);
    CHECK_THROWS_AS((void)load_graph(test::fixtures_dir() / "does_not_exist.json"), GraphParseError);
  }

  TEST_CASE("illegal edges and duplicates are rejected") {
    using test::make_node;
    CHECK_THROWS_AS(SkillGraph({make_node("q1", NodeKind::question, "inc", 0), make_node("q1", NodeKind::question, "inc", 1)}, {}),
                    GraphValidationError);
    CHECK_THROWS_AS(SkillGraph({make_node("q1", NodeKind::question, "inc", 0)}, {{"q1", "q1", EdgeKind::sequential}}),
                    GraphValidationError);
    // implication must end at a condition
    CHECK_THROWS_AS(SkillGraph({make_node("q1", NodeKind::question, "inc", 0), make_node("q2", NodeKind::question, "inc", 1)},
                               {{"q1", "q2", EdgeKind::implication}}),
                    GraphValidationError);
    // sequential edges never touch conditions
    CHECK_THROWS_AS(SkillGraph({make_node("q1", NodeKind::question, "inc", 0), make_node("c1", NodeKind::condition, "inc", 1)},
                               {{"q1", "c1", EdgeKind::sequential}}),
                    GraphValidationError);
  }

  TEST_CASE("default fixture has the published shape") {
    const SkillGraph g = generate_synthetic_graph(GraphGenParams{});
    CHECK(g.node_count() == 1053);
    CHECK(g.edge_count() >= 1283);
    CHECK(static_cast<double>(g.edge_count()) <= 1283 * 1.02);
    CHECK(g.incidents().size() == 63);
  }

  TEST_CASE("generator is deterministic and round-trips") {
    const GraphGenParams p{};
    const SkillGraph a = generate_synthetic_graph(p);
    const SkillGraph b = generate_synthetic_graph(p);
    CHECK(serialize_graph(a) == serialize_graph(b));
    const SkillGraph back = graph_from_json(nlohmann::json::parse(serialize_graph(a)));
    CHECK(back == a);
    CHECK(serialize_graph(back) == serialize_graph(a));

    GraphGenParams other = p;
    other.seed = 8;
    CHECK(serialize_graph(generate_synthetic_graph(other)) != serialize_graph(a));
  }

  TEST_CASE("generated structure invariants") {
    const SkillGraph g = generate_synthetic_graph(GraphGenParams{});
    std::vector<int> seq_in(g.node_count(), 0);
    for (NodeIndex i = 0; i < g.node_count(); ++i) {
      const auto& n = g.node(i);
      if (n.kind == NodeKind::condition) {
        bool implied = false, entails = false;
        for (const auto& a : g.in_arcs(i)) implied |= a.kind == EdgeKind::implication;
        for (const auto& a : g.out_arcs(i)) entails |= a.kind == EdgeKind::entailment;
        CHECK_MESSAGE(implied, n.id);
        CHECK_MESSAGE(entails, n.id);
      }
      CHECK(n.depth <= GraphGenParams{}.max_depth);
      for (const auto& a : g.in_arcs(i)) seq_in[i] += a.kind == EdgeKind::sequential;
    }
    std::size_t roots = 0;
    for (NodeIndex i = 0; i < g.node_count(); ++i) {
      const auto& n = g.node(i);
      if (!n.assessable()) continue;
      if (n.depth == 0) {
        ++roots;
        CHECK(seq_in[i] == 0);
      } else {
        CHECK_MESSAGE(seq_in[i] == 1, n.id);
      }
    }
    CHECK(roots == 63);
  }

  TEST_CASE("toy generator parameters give a valid one-incident graph") {
    GraphGenParams p;
    p.n_nodes = 10;
    p.n_edges = 11;
    p.n_incident_types = 1;
    p.condition_fraction = 0.2;
    p.max_depth = 6;
    p.seed = 3;
    const SkillGraph g = generate_synthetic_graph(p);
    CHECK(g.node_count() == 10);
    CHECK(g.incidents().size() == 1);
    const SkillGraph back = graph_from_json(graph_to_json(g));
    CHECK(back == g);
  }

  TEST_CASE("infeasible parameters are rejected") {
    GraphGenParams p;
    p.n_edges = 10;
    CHECK_THROWS_AS((void)generate_synthetic_graph(p), InfeasibleParamsError);
    p = GraphGenParams{};
    p.condition_fraction = 0.6;
    CHECK_THROWS((void)generate_synthetic_graph(p));
    p = GraphGenParams{};
    p.n_nodes = 63;
    CHECK_THROWS((void)generate_synthetic_graph(p));
  }

  TEST_CASE("activation gating on the toy graph") {
    const SkillGraph g = test::toy_graph();
    CHECK(ids(g, activated_subgraph(g, {"s", "inc", {{"c1", true}}})) == std::set<std::string>{"q1", "q2"});
    CHECK(ids(g, activated_subgraph(g, {"s", "inc", {{"c1", false}}})) == std::set<std::string>{"q1"});
    CHECK(ids(g, activated_subgraph(g, {"s", "inc", {}})) == std::set<std::string>{"q1"});
    CHECK_THROWS_AS((void)activated_subgraph(g, {"s", "nope", {}}), ScenarioError);
    CHECK_THROWS_AS((void)activated_subgraph(g, {"s", "inc", {{"q1", true}}}), ScenarioError);
  }

  TEST_CASE("all conditions false gives the base sequential tree") {
    const SkillGraph g = generate_synthetic_graph(GraphGenParams{});
    for (std::size_t inc = 0; inc < g.incidents().size(); ++inc) {
      const Scenario sc{"base", g.incidents()[inc].id, {}};
      std::set<std::string> chain;
      for (NodeIndex i = 0; i < g.node_count(); ++i) {
        const auto& n = g.node(i);
        if (n.assessable() && n.incident_types.front() == sc.incident_type) chain.insert(n.id);
      }
      CHECK(ids(g, activated_subgraph(g, sc)) == chain);
    }
  }

  TEST_CASE("catalog activation matches brute-force reachability") {
    const auto fx = test::default_fixture();
    const auto& table = fx->table;
    for (std::size_t i = 0; i < table.size(); ++i) {
      const auto got = ids(fx->graph, std::vector<SkillIndex>(table.activated(i).begin(), table.activated(i).end()));
      CHECK_MESSAGE(got == reachable_oracle(fx->graph, table.scenario(i)), table.scenario(i).id);
    }
  }

  TEST_CASE("activation is monotone in conditions") {
    const auto fx = test::default_fixture();
    const SkillGraph& g = fx->graph;
    std::size_t checked = 0;
    for (std::size_t inc = 0; inc < g.incidents().size() && checked < 12; ++inc) {
      const auto conds = reachable_conditions(g, inc);
      if (conds.empty() || conds.size() > 8) continue;
      ++checked;
      const std::size_t n = conds.size();
      for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
        Scenario sc{"m", g.incidents()[inc].id, {}};
        for (std::size_t c = 0; c < n; ++c) sc.conditions[g.node(conds[c]).id] = (mask >> c) & 1u;
        const auto base = activated_subgraph(g, sc);
        for (std::size_t c = 0; c < n; ++c) {
          if ((mask >> c) & 1u) continue;
          Scenario up = sc;
          up.conditions[g.node(conds[c]).id] = true;
          const auto bigger = activated_subgraph(g, up);
          CHECK(std::includes(bigger.begin(), bigger.end(), base.begin(), base.end()));
        }
      }
    }
    CHECK(checked > 0);
  }

  TEST_CASE("normalized depth") {
    const SkillGraph g = test::chain_graph(5);
    CHECK(normalized_depth(g, "q1") == doctest::Approx(0.0));
    CHECK(normalized_depth(g, "q3") == doctest::Approx(0.5));
    CHECK(normalized_depth(g, "q5") == doctest::Approx(1.0));
    const SkillGraph big = generate_synthetic_graph(GraphGenParams{});
    for (const auto& inc : big.incidents()) CHECK(normalized_depth(big, inc.root) == 0.0);
  }

  TEST_CASE("default catalog: 297 scenarios over every incident") {
    const auto fx = test::default_fixture();
    const auto& cat = fx->table.catalog();
    CHECK(cat.size() == 297);
    CHECK_FALSE(cat.short_of_target);
    std::set<std::string> types;
    std::set<std::pair<std::string, std::map<std::string, bool>>> distinct;
    for (std::size_t i = 0; i < cat.size(); ++i) {
      const auto& sc = cat.scenarios[i];
      types.insert(sc.incident_type);
      distinct.insert({sc.incident_type, sc.conditions});
      CHECK_NOTHROW(validate_scenario(fx->graph, sc));
      const auto inc = *fx->graph.find_incident(sc.incident_type);
      const auto reach = reachable_conditions(fx->graph, inc);
      for (const auto& [cid, value] : sc.conditions) {
        const NodeIndex c = fx->graph.index_of(cid);
        CHECK(std::find(reach.begin(), reach.end(), c) != reach.end());
      }
      CHECK_FALSE(fx->table.activated(i).empty());
    }
    CHECK(types.size() == 63);
    CHECK(distinct.size() == cat.size());
    CHECK(build_scenario_catalog(fx->graph) == cat);
  }

  TEST_CASE("tiny graph caps the catalog and flags it") {
    const SkillGraph g = test::toy_graph();
    const ScenarioCatalog cat = build_scenario_catalog(g, 10, 1);
    CHECK(cat.size() <= 2);
    CHECK(cat.short_of_target);
  }

  TEST_CASE("catalog JSON round trip") {
    const auto fx = test::default_fixture();
    const auto doc = catalog_to_json(fx->table.catalog());
    CHECK(doc.at("schema_version") == 1);
    CHECK(catalog_from_json(doc, fx->graph) == fx->table.catalog());
    CHECK(catalog_from_json(doc.at("scenarios"), fx->graph) == fx->table.catalog());
  }
}
