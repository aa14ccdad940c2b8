#include <doctest.h>

#include <cmath>
#include <map>

#include "pace/trainee_sim.hpp"
#include "support.hpp"

using namespace pace;

TEST_SUITE("trainee_sim") {
  TEST_CASE("archetype table") {
    CHECK(archetype(ArchetypeName::fast).lambda == 0.12);
    CHECK(archetype(ArchetypeName::fast).psi == 0.15);
    CHECK(archetype(ArchetypeName::moderate).lambda == 0.07);
    CHECK(archetype(ArchetypeName::moderate).psi == 0.25);
    CHECK(archetype(ArchetypeName::struggling).lambda == 0.03);
    CHECK(archetype(ArchetypeName::struggling).psi == 0.35);
    CHECK(archetype(ArchetypeName::quick_forgetter).lambda == 0.10);
    CHECK(archetype(ArchetypeName::quick_forgetter).psi == 0.45);
    for (const char* name : {"fast", "moderate", "struggling", "quick_forgetter"}) {
      CHECK(to_string(parse_archetype(name)) == name);
    }
    CHECK_THROWS_AS(parse_archetype("slow"), std::invalid_argument);
  }

  TEST_CASE("instantiation is seeded and jittered within bounds") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
      const TraineeAgent a = instantiate_archetype(ArchetypeName::moderate, seed, 40);
      CHECK(a.lambda() >= 0.07 * 0.85);
      CHECK(a.lambda() <= 0.07 * 1.15);
      CHECK(a.psi() >= 0.25 * 0.85);
      CHECK(a.psi() <= 0.25 * 1.15);
      for (double t : a.truth()) {
        CHECK(t >= 0.05);
        CHECK(t <= 0.35);
      }
    }
    const TraineeAgent x = instantiate_archetype(ArchetypeName::fast, 9, 10);
    const TraineeAgent y = instantiate_archetype(ArchetypeName::fast, 9, 10);
    CHECK(x.lambda() == y.lambda());
    CHECK(std::equal(x.truth().begin(), x.truth().end(), y.truth().begin()));
    CHECK(x.id() == "fast-9");
    CHECK_THROWS_AS(TraineeAgent("bad", ArchetypeName::fast, 0.1, 0.1, {1.5}, 0), std::invalid_argument);
  }

  TEST_CASE("learning follows the saturating increment") {
    TraineeAgent a("a", ArchetypeName::moderate, 0.1, 0.3, {0.2, 0.5}, 1);
    const std::vector<SkillIndex> s0{0};
    a.learn(s0, Timestamp{1.0});
    CHECK(a.truth()[0] == doctest::Approx(0.28));
    CHECK(a.truth()[1] == 0.5);
    CHECK(a.last_practiced(0)->hours == 1.0);
    CHECK(!a.last_practiced(1));
    for (int i = 0; i < 500; ++i) a.learn(s0, Timestamp{1.0});
    CHECK(a.truth()[0] <= 1.0);
    CHECK(a.truth()[0] > 0.999);
  }

  TEST_CASE("forgetting is anchored at the last practice") {
    TraineeAgent a("a", ArchetypeName::moderate, 0.5, 0.45, {0.8, 0.3}, 1);
    const std::vector<SkillIndex> s0{0};
    a.learn(s0, Timestamp{0.0});
    const double peak = a.truth()[0];
    a.forget(Timestamp{12.0});
    a.forget(Timestamp{24.0});
    CHECK(a.truth()[0] == doctest::Approx(apply_forgetting(peak, 24.0, 0.45, 0.1)));
    CHECK(a.truth()[1] == 0.3);
    a.set_psi(0.0);
    a.forget(Timestamp{100.0});
    CHECK(a.truth()[0] == peak);
  }

  TEST_CASE("response law frequencies") {
    const TraineeAgent a("a", ArchetypeName::moderate, 0.1, 0.3, {0.0}, 1);
    Rng rng(17);
    const int n = 50000;
    for (double theta : {0.2, 0.6, 0.9}) {
      std::map<Outcome, int> outcomes;
      std::map<ErrorType, int> errors;
      int prompted = 0;
      int failures = 0;
      for (int i = 0; i < n; ++i) {
        const Observation o = a.respond_one(0, theta, Timestamp{0.0}, rng);
        CHECK_NOTHROW(validate(o));
        ++outcomes[o.outcome];
        if (o.outcome == Outcome::compliant) {
          prompted += o.prompted ? 1 : 0;
        } else {
          ++failures;
          REQUIRE(o.error);
          ++errors[*o.error];
        }
      }
      CHECK(outcomes[Outcome::compliant] / double(n) == doctest::Approx(theta).epsilon(0.03));
      CHECK(outcomes[Outcome::violation] / double(failures) == doctest::Approx(0.7).epsilon(0.05));
      CHECK(prompted / double(outcomes[Outcome::compliant]) == doctest::Approx(0.1).epsilon(0.15));
      const double total = theta + 0.7 * (1 - theta) + 0.3 * (1 - theta);
      CHECK(errors[ErrorType::slip] / double(failures) == doctest::Approx(theta / total).epsilon(0.06));
      CHECK(outcomes[Outcome::not_applicable] == 0);
    }
  }

  TEST_CASE("respond covers the activated nodes in order") {
    TraineeAgent a = instantiate_archetype(ArchetypeName::fast, 3, 10);
    Rng rng(1);
    const std::vector<SkillIndex> act{2, 5, 7};
    const auto obs = a.respond(act, Timestamp{4.0}, rng);
    REQUIRE(obs.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(obs[i].skill == act[i]);
      CHECK(obs[i].at.hours == 4.0);
    }
  }

  TEST_CASE("exam score") {
    const auto fx = test::default_fixture();
    std::vector<double> truth(fx->graph.skill_count(), 0.4);
    const std::vector<std::size_t> exam{0, 5, 9};
    CHECK(exam_score(truth, fx->table, exam) == doctest::Approx(40.0));
    std::fill(truth.begin(), truth.end(), 1.0);
    CHECK(exam_score(truth, fx->table, exam) == doctest::Approx(100.0));
    CHECK_THROWS_AS(exam_score(truth, fx->table, {}), std::invalid_argument);
  }

  TEST_CASE("snapshot") {
    const auto graph = test::toy_graph();
    TraineeAgent a = instantiate_archetype(ArchetypeName::struggling, 4, graph.skill_count());
    const auto j = a.snapshot(graph);
    CHECK(j["archetype"] == "struggling");
    CHECK(j["theta"].size() == graph.skill_count());
  }
}
