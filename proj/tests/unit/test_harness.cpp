#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "pace/harness.hpp"
#include "pace/metrics.hpp"
#include "support.hpp"

using namespace pace;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

ExperimentConfig small_config(Policy policy) {
  ExperimentConfig c;
  c.policy = policy;
  c.n_sessions = 12;
  c.cold_start = 4;
  c.trainees_per_archetype = 1;
  c.seed = 5;
  c.threads = 1;
  return c;
}

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("coverage and zero-to-hero") {
    const std::vector<double> v{0.9, 0.85, 0.2, 0.849};
    CHECK(coverage_at(v) == 0.5);
    CHECK(coverage_at(v, 0.1) == 1.0);
    CHECK_THROWS_AS(coverage_at({}), std::invalid_argument);
    const std::vector<double> scores{0.5, 0.84, 0.85, 1.0};
    CHECK(zero_to_hero(scores) == 3);
    const std::vector<double> low{0.1, 0.2};
    CHECK(!zero_to_hero(low));
  }

  TEST_CASE("scenario score") {
    const std::vector<Observation> obs{{0, Outcome::compliant, std::nullopt, false, {}},
                                       {1, Outcome::partial, ErrorType::slip, false, {}},
                                       {2, Outcome::violation, ErrorType::omission, false, {}},
                                       {3, Outcome::not_applicable, std::nullopt, false, {}}};
    CHECK(*scenario_score(obs) == doctest::Approx(0.5));
    const std::vector<Observation> na{{0, Outcome::not_applicable, std::nullopt, false, {}}};
    CHECK(!scenario_score(na));
  }

  TEST_CASE("approximation gap") {
    const std::vector<double> a{0.5, 0.5}, b{0.2, 0.9};
    CHECK(approximation_gap(a, b) == doctest::Approx(0.35));
    const std::vector<double> c{0.5};
    CHECK_THROWS_AS(approximation_gap(a, c), std::invalid_argument);
  }

  TEST_CASE("random exam is stratified and seeded") {
    const auto fx = test::default_fixture();
    const auto exam = random_exam(fx->table, 63, 1);
    CHECK(exam.size() == 63);
    CHECK(std::is_sorted(exam.begin(), exam.end()));
    std::set<std::size_t> types;
    for (std::size_t i : exam) types.insert(fx->table.incident(i));
    CHECK(types.size() == 63);
    CHECK(exam == random_exam(fx->table, 63, 1));
    CHECK(exam != random_exam(fx->table, 63, 2));
    const auto big = random_exam(fx->table, 100, 1);
    CHECK(std::set<std::size_t>(big.begin(), big.end()).size() == 100);
    CHECK_THROWS_AS(random_exam(fx->table, fx->table.size() + 1, 1), std::invalid_argument);
  }

  TEST_CASE("mean and sample std") {
    const std::vector<std::optional<double>> v{1.0, std::nullopt, 3.0};
    const MeanStd m = mean_std(v);
    CHECK(m.mean == 2.0);
    CHECK(m.std == doctest::Approx(std::sqrt(2.0)));
    CHECK(m.n == 2);
  }

  TEST_CASE("config round trip and validation") {
    ExperimentConfig c = small_config(Policy::deficit_driven);
    c.granularity = Granularity::medium;
    c.simulator_psi = 0.0;
    const ExperimentConfig back = config_from_json(config_to_json(c));
    CHECK(config_to_json(back) == config_to_json(c));
    nlohmann::json bad = config_to_json(c);
    bad["n_sesions"] = 3;
    CHECK_THROWS_AS(config_from_json(bad), ConfigError);
    ExperimentConfig neg = c;
    neg.n_sessions = 0;
    CHECK_THROWS_AS(neg.validate(), ConfigError);
    ExperimentConfig prior = c;
    prior.prior_beta = 0.0;
    CHECK_THROWS_AS(prior.validate(), ConfigError);
    for (const char* p : {"pace_full", "pace_no_prop", "pace_no_dyn", "round_robin", "deficit_driven"}) {
      CHECK(to_string(parse_policy(p)) == p);
    }
    const ExperimentConfig file = load_config(test::fixtures_dir() / "small_experiment.json");
    CHECK(file.n_sessions == 20);
    CHECK(file.seed == 11);
    CHECK_THROWS(load_config(test::fixtures_dir() / "missing.json"));
  }

  TEST_CASE("policy options") {
    const EngineOptions base;
    CHECK(!engine_options_for(Policy::pace_no_prop, base).propagation);
    CHECK(engine_options_for(Policy::pace_no_prop, base).adaptive_dynamics);
    CHECK(!engine_options_for(Policy::pace_no_dyn, base).adaptive_dynamics);
    CHECK(engine_options_for(Policy::pace_full, base).propagation);
    CHECK(is_pace_variant(Policy::pace_no_dyn));
    CHECK(!is_pace_variant(Policy::round_robin));
  }

  TEST_CASE("run shape and invariants") {
    const auto fx = test::default_fixture();
    const RunResult r = run_training(small_config(Policy::pace_full), fx);
    CHECK(r.trainees.size() == 4);
    CHECK(r.exam.size() == 63);
    for (const auto& t : r.trainees) {
      REQUIRE(t.series.size() == 12);
      CHECK(t.c10);
      CHECK(!t.c30);
      CHECK(t.random_exam);
      for (std::size_t i = 0; i < t.series.size(); ++i) {
        const SessionRecord& s = t.series[i];
        CHECK(s.session == static_cast<int>(i + 1));
        CHECK(s.batch.picks.size() == 5);
        for (const auto& p : s.batch.picks) {
          CHECK(!std::binary_search(r.exam.begin(), r.exam.end(), p.scenario));
        }
        CHECK(s.truth_coverage >= 0.0);
        CHECK(s.truth_coverage <= 1.0);
        CHECK(s.delta >= 0.0);
        if (i < 4) CHECK(s.explore_ratio == 0.0);
      }
    }
  }

  TEST_CASE("coverage never falls without forgetting") {
    const auto fx = test::default_fixture();
    for (Policy p : {Policy::round_robin, Policy::pace_full}) {
      ExperimentConfig c = small_config(p);
      c.simulator_psi = 0.0;
      const RunResult r = run_training(c, fx);
      for (const auto& t : r.trainees) {
        for (std::size_t i = 1; i < t.series.size(); ++i) {
          CHECK(t.series[i].truth_coverage >= t.series[i - 1].truth_coverage);
        }
      }
    }
  }

  TEST_CASE("the same trainee faces every policy") {
    const auto fx = test::default_fixture();
    std::vector<std::string> ids[2];
    std::size_t i = 0;
    for (Policy p : {Policy::round_robin, Policy::deficit_driven}) {
      ExperimentConfig c = small_config(p);
      c.n_sessions = 1;
      const TraineeFactory base = default_trainee_factory(c);
      const TraineeFactory spy = [&, i](const TraineeSpec& spec) {
        auto agent = base(spec);
        ids[i].push_back(spec.id + ":" + std::to_string(spec.seed));
        return agent;
      };
      run_training(c, fx, spy);
      ++i;
    }
    CHECK(ids[0] == ids[1]);
  }

  TEST_CASE("thread count does not change results") {
    const auto fx = test::default_fixture();
    ExperimentConfig a = small_config(Policy::pace_full);
    a.threads = 1;
    ExperimentConfig b = a;
    b.threads = 3;
    const RunResult ra = run_training(a, fx);
    const RunResult rb = run_training(b, fx);
    const auto da = test::scratch_dir("threads-a");
    const auto db = test::scratch_dir("threads-b");
    export_results(ra, da);
    export_results(rb, db);
    for (const char* f : {"metrics.csv", "series.csv", "summary.csv", "trace.jsonl"}) {
      CHECK(slurp(da / f) == slurp(db / f));
    }
  }

  TEST_CASE("export and read back metrics") {
    const auto fx = test::default_fixture();
    const RunResult r = run_training(small_config(Policy::round_robin), fx);
    const auto dir = test::scratch_dir("export");
    export_results(r, dir);
    const auto rows = read_metrics_csv(dir / "metrics.csv");
    REQUIRE(rows.size() == r.trainees.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      CHECK(rows[i].trainee == r.trainees[i].id);
      CHECK(rows[i].policy == "round_robin");
      CHECK(*rows[i].c10 == doctest::Approx(100.0 * *r.trainees[i].c10).epsilon(1e-4));
      CHECK(!rows[i].c30);
      CHECK(*rows[i].re == doctest::Approx(*r.trainees[i].random_exam).epsilon(1e-4));
    }
    std::ifstream trace(dir / "trace.jsonl");
    std::string line;
    std::size_t n = 0;
    while (std::getline(trace, line)) {
      const auto j = nlohmann::json::parse(line);
      CHECK(j.contains("scenario"));
      ++n;
    }
    CHECK(n == 4 * 12 * 5);
    CHECK_THROWS(export_results(r, "/proc/pace-no-such-dir/x"));
  }

  TEST_CASE("without truth metrics nothing reads simulator truth") {
    const auto fx = test::default_fixture();
    ExperimentConfig c = small_config(Policy::pace_full);
    c.truth_metrics = false;
    const RunResult r = run_training(c, fx);
    for (const auto& t : r.trainees) {
      CHECK(!t.c10);
      CHECK(!t.random_exam);
      CHECK(std::isnan(t.series.back().delta));
    }
  }
}
