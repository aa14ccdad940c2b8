#include <doctest.h>

#include <fstream>

#include "pace/copilot.hpp"
#include "support.hpp"

using namespace pace;
using nlohmann::json;

namespace {

struct Client {
  CopilotService& service;

  ApiResponse call(const std::string& method, const std::string& path, const json& body = nullptr,
                   std::map<std::string, std::string> headers = {}, std::map<std::string, std::string> query = {}) {
    ApiRequest r;
    r.method = method;
    r.path = path;
    r.query = std::move(query);
    r.headers = std::move(headers);
    if (!body.is_null()) r.body = body.dump();
    return service.handle(r);
  }
};

CopilotOptions memory_options() {
  CopilotOptions o;
  o.cold_start = 2;
  return o;
}

json debrief(const Fixture& fx, std::size_t scenario, int session, const std::string& at,
             const std::string& outcome = "compliant") {
  json obs = json::array();
  for (const SkillIndex s : fx.table.activated(scenario)) {
    json o = {{"node", fx.graph.skill_id(s)}, {"outcome", outcome}};
    if (outcome == "violation") o["error_type"] = "omission";
    obs.push_back(o);
  }
  return {{"session", session}, {"scenario", fx.table.scenario(scenario).id}, {"timestamp", at},
          {"observations", obs}};
}

std::string hours_iso(double h) { return to_iso8601(Timestamp{h}); }

}  // namespace

TEST_SUITE("copilot") {
  TEST_CASE("trainee lifecycle and error codes") {
    const auto fx = test::default_fixture();
    CopilotService svc(fx, memory_options());
    Client c{svc};
    CHECK(c.call("POST", "/trainees", {{"id", "ana"}}).status == 201);
    const ApiResponse dup = c.call("POST", "/trainees", {{"id", "ana"}});
    CHECK(dup.status == 409);
    CHECK(dup.body["code"] == "conflict");
    CHECK(c.call("POST", "/trainees", {{"id", "bad id!"}}).status == 400);
    CHECK(c.call("POST", "/trainees", {{"graph", "other"}}).status == 400);
    const ApiResponse auto_id = c.call("POST", "/trainees", json::object());
    CHECK(auto_id.status == 201);
    CHECK(auto_id.body["id"].get<std::string>().starts_with("trainee-"));
    CHECK(c.call("GET", "/trainees").body["trainees"].size() == 2);

    const ApiResponse b = c.call("GET", "/trainees/ana/beliefs");
    CHECK(b.status == 200);
    CHECK(b.body["nodes"].size() == fx->graph.skill_count());
    CHECK(b.body["nodes"][0]["mu"] == 0.5);
    CHECK(c.call("GET", "/trainees/nobody/beliefs").status == 404);
    CHECK(c.call("DELETE", "/trainees/ana/beliefs").status == 405);
    CHECK(c.call("GET", "/nothing").status == 404);
    CHECK(c.call("GET", "/graph").body["nodes"].size() == fx->graph.node_count());
    CHECK(c.call("GET", "/catalog").body["scenarios"].size() == fx->table.size());

    ApiRequest raw{"POST", "/trainees", {}, {}, "{not json"};
    CHECK(svc.handle(raw).status == 400);
  }

  TEST_CASE("debrief validation") {
    const auto fx = test::default_fixture();
    CopilotService svc(fx, memory_options());
    Client c{svc};
    c.call("POST", "/trainees", {{"id", "t"}});
    json ok = debrief(*fx, 0, 1, hours_iso(0));
    const ApiResponse r = c.call("POST", "/trainees/t/debriefs", ok);
    CHECK(r.status == 200);
    CHECK(r.body["applied"] == fx->table.activated(0).size());

    json unknown = ok;
    unknown["scenario"] = "no-such-scenario";
    CHECK(c.call("POST", "/trainees/t/debriefs", unknown).status == 422);

    // a node outside the scenario's activated subgraph
    std::size_t other = 1;
    while (fx->table.activated(other).empty() || fx->table.incident(other) == fx->table.incident(0)) ++other;
    json outside = ok;
    outside["observations"].push_back(
        {{"node", fx->graph.skill_id(fx->table.activated(other)[0])}, {"outcome", "compliant"}});
    const ApiResponse out = c.call("POST", "/trainees/t/debriefs", outside);
    CHECK(out.status == 422);
    CHECK(out.body["detail"]["index"] == ok["observations"].size());

    json bad_error = ok;
    bad_error["observations"][0]["error_type"] = "slip";
    CHECK(c.call("POST", "/trainees/t/debriefs", bad_error).status == 422);
    json no_session = ok;
    no_session.erase("session");
    CHECK(c.call("POST", "/trainees/t/debriefs", no_session).status == 400);
    json bad_time = ok;
    bad_time["timestamp"] = "yesterday";
    CHECK(c.call("POST", "/trainees/t/debriefs", bad_time).status == 400);
    CHECK(c.call("POST", "/trainees/nobody/debriefs", ok).status == 404);

    // rejected requests leave no trace
    CHECK(c.call("GET", "/trainees/t/beliefs").body["observations"] == fx->table.activated(0).size());
  }

  TEST_CASE("idempotency keys") {
    const auto fx = test::default_fixture();
    CopilotService svc(fx, memory_options());
    Client c{svc};
    c.call("POST", "/trainees", {{"id", "t"}});
    const json body = debrief(*fx, 0, 1, hours_iso(0));
    CHECK(c.call("POST", "/trainees/t/debriefs", body, {{"Idempotency-Key", "k1"}}).status == 200);
    const json before = c.call("GET", "/trainees/t/beliefs").body;
    CHECK(c.call("POST", "/trainees/t/debriefs", body, {{"idempotency-key", "k1"}}).status == 409);
    CHECK(c.call("GET", "/trainees/t/beliefs").body == before);
    CHECK(c.call("POST", "/trainees/t/debriefs", body, {{"Idempotency-Key", "k2"}}).status == 200);
  }

  TEST_CASE("sessions only move forward") {
    const auto fx = test::default_fixture();
    CopilotService svc(fx, memory_options());
    Client c{svc};
    c.call("POST", "/trainees", {{"id", "t"}});
    CHECK(c.call("POST", "/trainees/t/debriefs", debrief(*fx, 0, 3, hours_iso(0))).status == 200);
    CHECK(c.call("POST", "/trainees/t/debriefs", debrief(*fx, 1, 2, hours_iso(1))).status == 422);
    CHECK(c.call("GET", "/trainees/t/dynamics").body["sessions"] == 1);
  }

  TEST_CASE("recommendations: advisory window, determinism, rationale") {
    const auto fx = test::default_fixture();
    CopilotService a(fx, memory_options());
    CopilotService b(fx, memory_options());
    for (auto* svc : {&a, &b}) {
      Client c{*svc};
      CHECK(c.call("POST", "/trainees", {{"id", "t"}, {"created_at", "2026-03-01T08:00:00Z"}}).status == 201);
    }
    Client ca{a}, cb{b};
    const ApiResponse r1 = ca.call("GET", "/trainees/t/recommendations", nullptr, {}, {{"k", "4"}});
    CHECK(r1.status == 200);
    CHECK(r1.body["batch"].size() == 4);
    CHECK(r1.body["advisory"] == true);
    CHECK(r1.body["session"] == 1);
    CHECK(r1.body["id"] == "rec-1");
    CHECK(r1.body["batch"][0].contains("targeted_weak_skills"));
    CHECK(r1.body["batch"][0].contains("decay_risk_skills"));
    CHECK(cb.call("GET", "/trainees/t/recommendations", nullptr, {}, {{"k", "4"}}).body == r1.body);

    CHECK(ca.call("GET", "/trainees/t/recommendations", nullptr, {}, {{"k", "0"}}).status == 400);
    CHECK(ca.call("GET", "/trainees/t/recommendations", nullptr, {}, {{"k", "99"}}).status == 400);
    CHECK(ca.call("GET", "/trainees/t/recommendations", nullptr, {}, {{"k", "x"}}).status == 400);
    CHECK(ca.call("GET", "/trainees/t/recommendations", nullptr, {}, {{"at", "soon"}}).status == 400);
    CHECK(ca.call("GET", "/trainees/t/recommendations").body["batch"].size() == 5);

    for (int s = 1; s <= 2; ++s) {
      ca.call("POST", "/trainees/t/debriefs", debrief(*fx, static_cast<std::size_t>(s), s, hours_iso(2.0 * s)));
    }
    const ApiResponse late = ca.call("GET", "/trainees/t/recommendations");
    CHECK(late.body["session"] == 3);
    CHECK(late.body["advisory"] == false);
  }

  TEST_CASE("alignment report over a scripted decision sequence") {
    const auto fx = test::default_fixture();
    CopilotService svc(fx, memory_options());
    Client c{svc};
    c.call("POST", "/trainees", {{"id", "t"}});
    // per decision: how many recommended and how many outside scenarios the trainer picks
    const std::vector<std::pair<int, int>> script{{5, 0}, {3, 0}, {2, 2}, {1, 2}, {0, 3}, {4, 1}, {1, 1}, {0, 1},
                                                  {2, 3}, {5, 0}, {1, 0}, {3, 3}, {1, 4}, {2, 1}, {0, 5}, {4, 4},
                                                  {1, 3}, {2, 0}, {3, 4}, {1, 2}};
    // hand count: overlap >= 0.5 for rows 0,1,2,5,6,9,10,11,13,15,17 -> 11 of 20
    const std::vector<bool> expected{true, true,  true,  false, false, true,  true,  false, false, true,
                                     true, true,  false, true,  false, true,  false, true,  false, false};
    for (std::size_t i = 0; i < script.size(); ++i) {
      const ApiResponse rec = c.call("GET", "/trainees/t/recommendations");
      REQUIRE(rec.status == 200);
      std::vector<std::string> ids;
      for (const auto& item : rec.body["batch"]) ids.push_back(item["scenario"]);
      std::vector<std::string> chosen(ids.begin(), ids.begin() + script[i].first);
      for (std::size_t k = 0; chosen.size() < static_cast<std::size_t>(script[i].first + script[i].second); ++k) {
        const std::string& sid = fx->table.scenario(k).id;
        if (std::find(ids.begin(), ids.end(), sid) == ids.end()) chosen.push_back(sid);
      }
      const ApiResponse a =
          c.call("POST", "/trainees/t/assignments", {{"recommendation_id", rec.body["id"]}, {"chosen", chosen}});
      REQUIRE(a.status == 200);
      CHECK(a.body["decision"]["aligned"] == expected[i]);
    }
    const ApiResponse rep = c.call("GET", "/trainees/t/alignment");
    CHECK(rep.body["n_decisions"] == 20);
    CHECK(rep.body["n_aligned"] == 11);
    CHECK(rep.body["alignment_rate"].get<double>() == 11.0 / 20.0);

    const std::vector<std::string> any{fx->table.scenario(0).id};
    CHECK(c.call("POST", "/trainees/t/assignments", {{"recommendation_id", "rec-1"}, {"chosen", any}}).status == 409);
    CHECK(c.call("POST", "/trainees/t/assignments", {{"recommendation_id", "rec-99"}, {"chosen", any}}).status == 404);
    CHECK(c.call("POST", "/trainees/t/assignments", {{"recommendation_id", "rec-1"}, {"chosen", json::array({"zzz"})}})
              .status == 422);
    CHECK(c.call("POST", "/trainees/t/assignments", {{"chosen", any}}).status == 400);
  }

  TEST_CASE("batch overlap") {
    const std::vector<std::string> rec{"a", "b", "c"};
    const std::vector<std::string> chosen{"a", "x", "a"};
    CHECK(batch_overlap(rec, chosen) == doctest::Approx(0.5));
    CHECK(batch_overlap(rec, {}) == 0.0);
  }

  TEST_CASE("persisted log replays to the live state") {
    const auto fx = test::default_fixture();
    const auto dir = test::scratch_dir("copilot-replay");
    CopilotOptions opt = memory_options();
    opt.data_dir = dir;
    {
      CopilotService svc(fx, opt);
      Client c{svc};
      c.call("POST", "/trainees", {{"id", "t"}});
      Rng rng(3);
      std::size_t n_obs = 0;
      int session = 1;
      double clock = 0.0;
      const char* outcomes[] = {"compliant", "violation", "compliant"};
      for (std::size_t i = 0; n_obs < 100; ++i) {
        const ApiResponse rec = c.call("GET", "/trainees/t/recommendations", nullptr, {}, {{"k", "2"}});
        REQUIRE(rec.status == 200);
        const std::string sid = rec.body["batch"][0]["scenario"];
        const std::size_t sc = *fx->table.find(sid);
        const ApiResponse r =
            c.call("POST", "/trainees/t/debriefs", debrief(*fx, sc, session, hours_iso(clock), outcomes[i % 3]),
                   {{"Idempotency-Key", "d" + std::to_string(i)}});
        REQUIRE(r.status == 200);
        n_obs += fx->table.activated(sc).size();
        c.call("POST", "/trainees/t/assignments", {{"recommendation_id", rec.body["id"]}, {"chosen", {sid}}});
        if (i % 2 == 1) {
          ++session;
          clock += (session % 3 == 0) ? 30.0 : 2.0;
        }
      }
      const ReplayReport rep = svc.snapshot_and_replay("t");
      CHECK(rep.consistent);
      CHECK(rep.live_events == rep.logged_events);
      CHECK(c.call("GET", "/trainees/t/replay").body["consistent"] == true);

      // a second service reading the same directory folds to the same state
      CopilotService again(fx, opt);
      Client c2{again};
      CHECK(c2.call("GET", "/trainees/t/beliefs").body == c.call("GET", "/trainees/t/beliefs").body);
      CHECK(c2.call("GET", "/trainees/t/dynamics").body == c.call("GET", "/trainees/t/dynamics").body);
      CHECK(c2.call("GET", "/trainees/t/alignment").body == c.call("GET", "/trainees/t/alignment").body);
      CHECK(c2.call("GET", "/trainees/t/recommendations").body == c.call("GET", "/trainees/t/recommendations").body);
    }
  }

  TEST_CASE("truncated log is reported at the first missing event") {
    const auto fx = test::default_fixture();
    const auto dir = test::scratch_dir("copilot-truncate");
    CopilotOptions opt = memory_options();
    opt.data_dir = dir;
    CopilotService svc(fx, opt);
    Client c{svc};
    c.call("POST", "/trainees", {{"id", "t"}});
    for (int s = 1; s <= 4; ++s) {
      c.call("POST", "/trainees/t/debriefs", debrief(*fx, static_cast<std::size_t>(s), s, hours_iso(30.0 * s)));
    }
    const auto path = svc.log_path("t");
    std::vector<std::string> lines;
    {
      std::ifstream in(path);
      for (std::string line; std::getline(in, line);) lines.push_back(line);
    }
    REQUIRE(lines.size() == 5);
    {
      std::ofstream out(path, std::ios::trunc);
      for (std::size_t i = 0; i < 3; ++i) out << lines[i] << '\n';
    }
    const ReplayReport rep = svc.snapshot_and_replay("t");
    CHECK(!rep.consistent);
    REQUIRE(rep.divergent_offset);
    CHECK(*rep.divergent_offset == 3);
    CHECK(rep.logged_events == 3);

    // corrupt logs are skipped on startup, not fatal
    {
      std::ofstream out(path, std::ios::trunc);
      out << "{broken\n";
    }
    CopilotService fresh(fx, opt);
    CHECK(fresh.trainee_ids().empty());
    Client cf{fresh};
    CHECK(cf.call("POST", "/trainees", {{"id", "t"}}).status == 409);
  }

  TEST_CASE("fold rejects malformed event streams") {
    const auto fx = test::default_fixture();
    const std::vector<json> none;
    CHECK_THROWS_AS(fold_events(none, fx, memory_options()), ApiError);
    const std::vector<json> wrong_offset{{{"type", "created"}, {"id", "t"}, {"graph", "default"},
                                          {"created_at", hours_iso(0)}, {"offset", 4}}};
    try {
      fold_events(wrong_offset, fx, memory_options());
      FAIL("expected corrupt_log");
    } catch (const ApiError& e) {
      CHECK(e.status() == 422);
      CHECK(e.code() == "corrupt_log");
      CHECK(e.detail()["offset"] == 0);
    }
  }
}
