#include <doctest.h>

#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "pace/similarity.hpp"
#include "support.hpp"

using namespace pace;

TEST_SUITE("similarity") {
  TEST_CASE("embeddings are deterministic unit vectors") {
    const Embedding a = embed_node("Ask the caller for the exact address");
    const Embedding b = embed_node("Ask the caller for the exact address");
    CHECK(a == b);
    CHECK(cosine(a, b) == doctest::Approx(1.0));
    double norm = 0.0;
    for (double v : a) norm += v * v;
    CHECK(std::abs(std::sqrt(norm) - 1.0) < 1e-6);
    CHECK(a.size() == 384);
    CHECK_THROWS_AS((void)embed_node(""), std::invalid_argument);
  }

  TEST_CASE("disjoint-token texts are nearly orthogonal on average") {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> len(3, 8);
    double total = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      std::string x, y;
      const int n = len(rng);
      for (int i = 0; i < n; ++i) {
        x += "a" + std::to_string(rng() % 100000) + " ";
        y += "b" + std::to_string(rng() % 100000) + " ";
      }
      total += std::abs(cosine(embed_node(x), embed_node(y)));
    }
    CHECK(total / 100.0 < 0.3);
  }

  TEST_CASE("pair similarity evaluations") {
    CHECK(pair_similarity(1.0, 0.4, 0.4, 2.0) == doctest::Approx(1.0));
    CHECK(pair_similarity(0.8, 0.2, 0.7, 2.0) == doctest::Approx(0.8 * std::exp(-1.0)).epsilon(1e-12));
    CHECK(pair_similarity(0.8, 0.2, 0.7, 2.0) == doctest::Approx(0.2943).epsilon(1e-4));
    CHECK(pair_similarity(0.0, 0.1, 0.9, 2.0) == 0.0);
    CHECK(pair_similarity(0.7, 0.0, 1.0, 0.0) == doctest::Approx(0.7));
  }

  TEST_CASE("phi is symmetric, bounded and decreasing in depth gap") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 200; ++i) {
      const double c = 2.0 * u(rng) - 1.0;
      const double di = u(rng), dj = u(rng);
      CHECK(pair_similarity(c, di, dj, 2.0) == pair_similarity(c, dj, di, 2.0));
      CHECK(std::abs(pair_similarity(c, di, dj, 2.0)) <= 1.0);
      if (c > 0.0) {
        CHECK(pair_similarity(c, 0.0, 0.2, 2.0) > pair_similarity(c, 0.0, 0.3, 2.0));
      }
    }
  }

  TEST_CASE("threshold above one gives an empty index") {
    const auto fx = test::default_fixture();
    const auto emb = embed_skills(fx->graph, HashingEmbeddingProvider{});
    const SimilarityIndex idx = build_index(fx->graph, emb, {2.0, 1.01});
    CHECK(idx.pair_count() == 0);
  }

  TEST_CASE("duplicate text at equal depth pairs at 1") {
    using test::make_node;
    const SkillGraph g({make_node("q1", NodeKind::question, "inc", 0, "confirm the address"),
                        make_node("q2", NodeKind::question, "inc", 1, "confirm the address"),
                        make_node("q3", NodeKind::question, "inc", 1, "confirm the address")},
                       {{"q1", "q2", EdgeKind::sequential}, {"q1", "q3", EdgeKind::sequential}});
    const auto emb = embed_skills(g, HashingEmbeddingProvider{});
    const SimilarityIndex idx = build_index(g, emb);
    const auto q2 = *g.find_skill("q2");
    const auto q3 = *g.find_skill("q3");
    REQUIRE(idx.phi(q2, q3).has_value());
    CHECK(*idx.phi(q2, q3) == doctest::Approx(1.0));
    CHECK(*idx.phi(q3, q2) == doctest::Approx(1.0));
  }

  TEST_CASE("neighbors: empty, symmetric insert, descending with id ties") {
    SimilarityIndex idx(4, {2.0, 0.5});
    CHECK(idx.neighbors(0).empty());
    idx.insert(0, 1, 0.9);
    REQUIRE(idx.neighbors(0).size() == 1);
    CHECK(idx.neighbors(0)[0].skill == 1);
    CHECK(idx.neighbors(0)[0].phi == 0.9);
    REQUIRE(idx.neighbors(1).size() == 1);
    CHECK(idx.neighbors(1)[0].skill == 0);
    idx.insert(0, 3, 0.7);
    idx.insert(0, 2, 0.7);
    idx.insert(0, 0, 1.0);
    idx.insert(2, 3, 0.2);
    REQUIRE(idx.neighbors(0).size() == 3);
    CHECK(idx.neighbors(0)[1].skill == 2);
    CHECK(idx.neighbors(0)[2].skill == 3);
    CHECK(idx.pair_count() == 3);
  }

  TEST_CASE("id-level neighbors on an unknown node is empty") {
    const auto fx = test::default_fixture();
    CHECK(neighbors(fx->index, fx->graph, "no-such-node").empty());
  }

  TEST_CASE("fixture neighbor lists match the all-pairs matrix") {
    const auto fx = test::default_fixture();
    const auto& g = fx->graph;
    const auto emb = embed_skills(g, HashingEmbeddingProvider{});
    const std::size_t n = g.skill_count();
    for (SkillIndex s = 0; s < n; s += 37) {
      std::set<SkillIndex> expected;
      for (SkillIndex t = 0; t < n; ++t) {
        if (t == s) continue;
        double dot = 0.0;
        for (std::size_t k = 0; k < kEmbeddingDim; ++k) dot += emb[s][k] * emb[t][k];
        const double phi = dot * std::exp(-2.0 * std::abs(normalized_depth(g, g.node_of(s)) -
                                                          normalized_depth(g, g.node_of(t))));
        if (phi >= 0.6) expected.insert(t);
      }
      std::set<SkillIndex> got;
      double prev = 2.0;
      for (const auto& nb : fx->index.neighbors(s)) {
        got.insert(nb.skill);
        CHECK(nb.phi <= prev);
        prev = nb.phi;
      }
      CHECK(got == expected);
    }
  }

  TEST_CASE("default index is sparse") {
    const auto fx = test::default_fixture();
    const double n = static_cast<double>(fx->graph.skill_count());
    CHECK(static_cast<double>(fx->index.pair_count()) < 0.05 * n * (n - 1) / 2.0);
  }

  TEST_CASE("precomputed provider re-normalizes and rejects bad dimensions") {
    nlohmann::json doc = nlohmann::json::object();
    std::vector<double> v(384, 0.0);
    v[0] = 3.0;
    v[1] = 4.0;
    doc["q1"] = v;
    doc["q2"] = v;
    const PrecomputedEmbeddingProvider p(doc);
    const SkillGraph g = test::toy_graph();
    const auto emb = embed_skills(g, p);
    CHECK(emb[0][0] == doctest::Approx(0.6));
    CHECK(emb[0][1] == doctest::Approx(0.8));
    nlohmann::json bad = {{"q1", std::vector<double>(10, 1.0)}};
    CHECK_THROWS(PrecomputedEmbeddingProvider(bad));
    nlohmann::json missing = {{"q1", v}};
    CHECK_THROWS((void)embed_skills(g, PrecomputedEmbeddingProvider(missing)));
  }

  TEST_CASE("index csv lists each pair once") {
    SimilarityIndex idx(3, {2.0, 0.5});
    idx.insert(0, 1, 0.9);
    const SkillGraph g = test::chain_graph(3);
    std::ostringstream out;
    write_index_csv(idx, g, out);
    CHECK(out.str() == "src,dst,phi\nq1,q2,0.900000000\n");
  }
}
