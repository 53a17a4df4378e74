#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "tunedemand/error.hpp"
#include "tunedemand/io/dates.hpp"
#include "tunedemand/io/draws_io.hpp"
#include "tunedemand/io/ingest.hpp"
#include "tunedemand/io/json_codec.hpp"
#include "tunedemand/io/operations.hpp"
#include "tunedemand/io/scenario.hpp"
#include "tunedemand/io/store.hpp"

using namespace tunedemand;
using namespace tunedemand::io;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("tunedemand-test-io-" + name);
  fs::remove_all(dir);
  return dir;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

const char* kHeader = "song_id,artist_id,stratum,week_start,streams,release_date,x_0,z_0\n";

}  // namespace

TEST_CASE("dates") {
  CHECK(parse_date("1970-01-01") == 0);
  CHECK(parse_date("2021-01-04") == 18631);
  CHECK(format_date(18631) == "2021-01-04");
  CHECK(parse_date("2024-02-29").has_value());
  CHECK_FALSE(parse_date("2023-02-29").has_value());
  CHECK_FALSE(parse_date("2021-13-01").has_value());
  CHECK_FALSE(parse_date("not a date").has_value());
  CHECK(week_index(18631, 18631) == 0);
  CHECK(week_index(18631, 18637) == 0);
  CHECK(week_index(18631, 18638) == 1);
  CHECK(week_index(18631, 18630) == -1);
}

TEST_CASE("CSV parsing") {
  std::string csv = kHeader;
  csv += "s,a,spotify,2021-01-04,5,2021-01-04,0.1,0.2\n";
  csv += "s,a,spotify,2021-01-11,7,2021-01-04,0.3,0.4\n";
  csv += "s,a,apple,2021-01-04,2,2021-01-04,0.0,0.0\n";
  csv += "s,a,apple,2021-01-11,-3,2021-01-04,0.0,0.0\n";
  csv += "s,a,apple,2021-99-11,3,2021-01-04,0.0,0.0\n";
  const auto report = parse_csv(csv);
  CHECK(report.records.size() == 3);
  CHECK(report.rejects.size() == 2);
  CHECK(report.endogenous == std::vector<std::string>{"x_0"});
  CHECK(report.exogenous == std::vector<std::string>{"z_0"});
  CHECK(report.records[1].streams == 7);
  CHECK(report.records[1].x == std::vector<double>{0.3});

  CHECK_THROWS_AS(parse_csv("song_id,artist_id,week_start\ns,a,2021-01-04\n"), ConfigurationError);

  ColumnMapping mapping;
  mapping.streams = "plays";
  const auto renamed = parse_csv("song_id,artist_id,stratum,week_start,plays,release_date\ns,a,x,2021-01-04,4,2021-01-04\n", mapping);
  CHECK(renamed.records.size() == 1);
  CHECK(renamed.records[0].streams == 4);
}

TEST_CASE("translation to the release origin") {
  std::string csv = kHeader;
  csv += "s,a,spotify,2020-12-28,9,2021-01-04,0,0\n";  // pre-release
  csv += "s,a,spotify,2021-01-04,5,2021-01-04,0.5,1\n";
  csv += "s,a,spotify,2021-01-18,6,2021-01-04,0.5,1\n";  // week 1 missing
  csv += "s,a,spotify,2021-01-19,1,2021-01-04,0.5,1\n";  // same week, summed
  const auto report = parse_csv(csv);
  const auto song = translate_to_origin(report.records, report.endogenous, report.exogenous);
  REQUIRE(song.curves.size() == 1);
  CHECK(song.curves[0].values == std::vector<std::int64_t>{5, 0, 7});
  CHECK(song.horizon() == 3);
  CHECK(song.covariates.endogenous(1, 0) == 0.0);
  CHECK(song.covariates.endogenous(0, 0) == 0.5);
  CHECK(song.warnings.size() >= 2);

  std::string early = kHeader;
  early += "s,a,spotify,2020-12-28,9,2021-01-04,0,0\n";
  const auto pre = parse_csv(early);
  CHECK_THROWS_AS(translate_to_origin(pre.records, pre.endogenous, pre.exogenous), ValidationError);

  std::string mixed = kHeader;
  mixed += "s,a,x,2021-01-04,1,2021-01-04,0,0\nt,a,x,2021-01-04,1,2021-01-04,0,0\n";
  const auto m = parse_csv(mixed);
  CHECK_THROWS_AS(translate_to_origin(m.records, m.endogenous, m.exogenous), ConfigurationError);
  CHECK(group_by_song(m.records).size() == 2);
}

TEST_CASE("store documents and conflicts") {
  ProjectStore store(scratch("store"));
  store.put("fits", "a", json{{"v", 1}});
  store.put("fits", "a", json{{"v", 1}});
  CHECK_THROWS_AS(store.put("fits", "a", json{{"v", 2}}), ConflictError);
  store.put("fits", "a", json{{"v", 2}}, true);
  CHECK(store.get("fits", "a")["v"] == 2);
  CHECK_THROWS_AS(store.get("fits", "missing"), NotFoundError);
  CHECK_THROWS(store.put("fits", "../escape", json::object()));
  store.put("fits", "b", json::object());
  CHECK(store.list("fits") == std::vector<std::string>{"a", "b"});
  const auto h = store.save_input("hello");
  CHECK(h == fnv1a_hex("hello"));
  CHECK(store.load_input(h) == "hello");
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
}

TEST_CASE("draw files round-trip") {
  DrawTable t;
  t.names = {"theta[0,0]", "theta[0,1]", "omega[0]"};
  for (int c = 0; c < 2; ++c) t.chains.push_back(Eigen::MatrixXd::Random(5, 3));
  const auto dir = scratch("draws");
  write_draws(dir, t);
  const auto back = read_draws(dir);
  CHECK(back.names == t.names);
  REQUIRE(back.chains.size() == 2);
  for (int c = 0; c < 2; ++c) CHECK(back.chains[c] == t.chains[c]);
}

TEST_CASE("json codec") {
  EnvelopeFit fit;
  fit.taus = {3, 8, 14, 20};
  fit.horizon = 24;
  fit.nodes = {10.0, 7.0, 2.0};
  for (auto& e : fit.effects) {
    e.theta = Eigen::VectorXd::Constant(2, 0.1);
    e.gamma = Eigen::VectorXd::Constant(1, -0.2);
  }
  fit.dispersion = 4.5;
  fit.refresh_lines();
  const json j = fit;
  const auto back = j.get<EnvelopeFit>();
  CHECK(back.taus == fit.taus);
  CHECK(back.nodes == fit.nodes);
  CHECK(back.alpha == fit.alpha);
  CHECK(back.dispersion == fit.dispersion);
  CHECK(back.effects[2].theta == fit.effects[2].theta);

  McmcConfig c;
  c.draws = 77;
  CHECK(json(c).get<McmcConfig>().draws == 77);
  CHECK(merged(json{{"a", {{"b", 1}, {"c", 2}}}}, json{{"a", {{"c", 3}}}}) == json{{"a", {{"b", 1}, {"c", 3}}}});
  CHECK_THROWS_AS((json{{1.0, 2.0}, {3.0}}.get<Eigen::MatrixXd>()), ValidationError);
}

TEST_CASE("scenario simulation is deterministic per seed") {
  const auto scenario = read_json(fs::path(TUNEDEMAND_TEST_DATA) / "two_strata.json");
  const auto a = simulate_scenario_csv(scenario, 5);
  CHECK(a == simulate_scenario_csv(scenario, 5));
  CHECK(a != simulate_scenario_csv(scenario, 6));
  const auto songs = simulate_scenario(read_json(fs::path(TUNEDEMAND_TEST_DATA) / "noiseless.json"), 1);
  REQUIRE(songs.size() == 1);
  CHECK(songs[0].curves[0].values[4] == 100);
  CHECK(songs[0].curves[0].values[30] == 0);
}

TEST_CASE("ingest, export and replay") {
  const auto scenario = read_json(fs::path(TUNEDEMAND_TEST_DATA) / "two_strata.json");
  const auto csv = simulate_scenario_csv(scenario, 9);
  ProjectStore store(scratch("ops"));
  const auto out = ingest_op(store, json{{"csv", csv}});
  CHECK(out["songs"] == json::array({"s2"}));
  CHECK(out["rejects"].empty());

  // exported rows parse back to the same song
  const auto exported = export_song_op(store, "s2");
  const auto report = parse_csv(exported);
  const auto song = translate_to_origin(report.records, report.endogenous, report.exogenous);
  const auto original = song_from_json(store.get("songs", "s2"));
  CHECK(song.strata == original.strata);
  for (std::size_t s = 0; s < song.curves.size(); ++s) CHECK(song.curves[s].values == original.curves[s].values);
  CHECK(song.covariates.endogenous.isApprox(original.covariates.endogenous, 1e-12));

  // same content again is fine, a changed song conflicts
  ingest_op(store, json{{"csv", csv}});
  const auto other = simulate_scenario_csv(scenario, 10);
  CHECK_THROWS_AS(ingest_op(store, json{{"csv", other}}), ConflictError);

  const auto fit = fit_adsr_op(store, json{{"song_id", "s2"}});
  const auto plan = optimize_op(store, json{{"fit_id", fit["id"]}, {"scheme", "forced"},
                                            {"policy", {{"weekly", std::vector<double>(40, 1.0)}}}});
  CHECK(plan["id"].get<std::string>().rfind("plan-", 0) == 0);

  ProjectStore copy(scratch("replay"));
  replay(store, copy);
  for (const std::string kind : {"songs", "fits", "plans"}) {
    REQUIRE(copy.list(kind) == store.list(kind));
    for (const auto& id : store.list(kind)) CHECK(copy.get(kind, id) == store.get(kind, id));
  }
}
