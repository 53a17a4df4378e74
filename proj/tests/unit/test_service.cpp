#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <thread>

#include "tunedemand/io/operations.hpp"
#include "tunedemand/io/scenario.hpp"
#include "tunedemand/io/service.hpp"
// after Eigen: resolv.h defines _res
#include <httplib.h>

using namespace tunedemand::io;
namespace fs = std::filesystem;

namespace {

struct Running {
  ProjectStore store;
  Service service;
  int port;
  std::thread thread;

  explicit Running(const fs::path& root) : store((fs::remove_all(root), root)), service(store) {
    port = service.bind_any_port("127.0.0.1");
    thread = std::thread([this] { service.listen_after_bind(); });
    service.wait_until_ready();
  }
  ~Running() {
    service.stop();
    thread.join();
  }
  httplib::Client client() const { return httplib::Client("127.0.0.1", port); }
};

json body(const httplib::Result& r) { return json::parse(r->body); }

json post(httplib::Client& c, const std::string& path, const json& j) {
  auto r = c.Post(path, j.dump(), "application/json");
  REQUIRE(r);
  json out = body(r);
  out["_status"] = r->status;
  return out;
}

json wait_for(httplib::Client& c, const std::string& job) {
  for (int i = 0; i < 600; ++i) {
    auto r = c.Get("/jobs/" + job);
    REQUIRE(r);
    auto j = body(r);
    if (j["status"] == "done" || j["status"] == "failed") return j;
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  FAIL("job did not finish");
  return {};
}

std::string scenario_csv(std::uint64_t seed) {
  std::ifstream in(fs::path(TUNEDEMAND_TEST_DATA) / "two_strata.json");
  return simulate_scenario_csv(json::parse(in), seed);
}

}  // namespace

TEST_CASE("service endpoints") {
  Running run(fs::temp_directory_path() / "tunedemand-test-service");
  REQUIRE(run.port > 0);
  auto c = run.client();

  auto health = c.Get("/health");
  REQUIRE(health);
  CHECK(health->status == 200);
  CHECK(body(health)["status"] == "ok");

  const auto ingest = post(c, "/ingest", {{"csv", scenario_csv(3)}});
  CHECK(ingest["_status"] == 200);
  CHECK(ingest["songs"] == json::array({"s2"}));
  CHECK(post(c, "/ingest", {{"csv", scenario_csv(4)}})["_status"] == 409);
  CHECK(post(c, "/ingest", {{"nothing", 1}})["_status"] == 400);
  auto bad = c.Post("/ingest", "{not json", "application/json");
  REQUIRE(bad);
  CHECK(bad->status == 400);

  auto songs = c.Get("/songs");
  CHECK(body(songs)["songs"][0]["song_id"] == "s2");
  auto curves = c.Get("/songs/s2/curves");
  CHECK(body(curves)["curves"].size() == 2);
  CHECK(c.Get("/songs/nope/curves")->status == 404);
  auto chart = c.Get("/songs/s2/control-chart");
  REQUIRE(chart);
  CHECK(chart->status == 200);
  const auto cj = body(chart);
  for (std::size_t t = 0; t < cj["mean"].size(); ++t) CHECK(cj["lower"][t].get<double>() <= cj["upper"][t].get<double>());

  CHECK(post(c, "/fit/null", {{"song_id", "missing"}})["_status"] == 404);
  const auto queued = post(c, "/fit/null", {{"song_id", "s2"}, {"seed", 5}, {"mcmc", {{"warmup", 200}, {"draws", 200}}}});
  CHECK(queued["_status"] == 202);
  const auto done = wait_for(c, queued["job_id"]);
  REQUIRE(done["status"] == "done");
  const auto fit_id = done["result"]["id"].get<std::string>();
  CHECK(body(c.Get("/fits"))["fits"].size() == 1);
  CHECK(body(c.Get("/fits/" + fit_id))["kind"] == "null");

  auto pred = c.Get("/fits/" + fit_id + "/predictive?levels=0.1,0.5,0.9");
  REQUIRE(pred);
  REQUIRE(pred->status == 200);
  const auto pj = body(pred);
  for (const auto& seg : pj["segments"]) {
    for (std::size_t t = 0; t < seg[0].size(); ++t) {
      CHECK(seg[0][t].get<double>() <= seg[1][t].get<double>());
      CHECK(seg[1][t].get<double>() <= seg[2][t].get<double>());
    }
  }

  const json policy{{"weekly", std::vector<double>(40, 0.0)}};
  const auto whatif = post(c, "/optimize/whatif", {{"fit_id", fit_id}, {"scheme", "null"}, {"policy", policy}});
  CHECK(whatif["_status"] == 200);
  CHECK(whatif["objective_delta"].get<double>() == doctest::Approx(0.0));
  CHECK(post(c, "/optimize/forced", {{"fit_id", fit_id}, {"policy", policy}})["_status"] == 400);

  const auto adsr = post(c, "/fit/adsr", {{"song_id", "s2"}});
  CHECK(adsr["_status"] == 200);
  const auto plan = post(c, "/optimize/forced", {{"fit_id", adsr["id"]}, {"policy", {{"weekly", std::vector<double>(40, 1.0)}}}});
  CHECK(plan["_status"] == 200);
  CHECK(c.Get("/plans/" + plan["id"].get<std::string>())->status == 200);
  CHECK(c.Get("/plans/none")->status == 404);
  CHECK(c.Get("/jobs/none")->status == 404);
  CHECK(c.Get("/no/such/route")->status == 404);
}
