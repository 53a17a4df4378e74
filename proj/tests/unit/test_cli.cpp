#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include "cli_run.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path fresh(const std::string& name) {
  auto p = fs::temp_directory_path() / ("tunedemand-test-cli-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

const std::string kData = TUNEDEMAND_TEST_DATA;

}  // namespace

TEST_CASE("simulate is deterministic for a seed") {
  const auto a = cli::run("--seed 4 --output-format csv simulate --scenario " + kData + "/two_strata.json");
  const auto b = cli::run("--seed 4 --output-format csv simulate --scenario " + kData + "/two_strata.json");
  const auto c = cli::run("--seed 5 --output-format csv simulate --scenario " + kData + "/two_strata.json");
  CHECK(a.code == 0);
  CHECK(a.out == b.out);
  CHECK(a.out != c.out);
  CHECK(a.out.rfind("song_id,artist_id,stratum,week_start,streams,release_date", 0) == 0);
}

TEST_CASE("exit codes") {
  const auto dir = fresh("codes");
  const auto store = "--store " + (dir / "store").string();
  CHECK(cli::run("--no-such-flag").code == 1);
  CHECK(cli::run(store + " fit-adsr --song missing").code == 1);
  CHECK(cli::run(store + " ingest " + (dir / "absent.csv").string()).code == 1);
  CHECK(cli::run("simulate --scenario " + kData + "/two_strata.json --output-format xml").code == 1);
}

TEST_CASE("ingest, fit-adsr and optimize") {
  const auto dir = fresh("flow");
  const auto store = "--store " + (dir / "store").string();
  const auto csv = dir / "sim.csv";
  REQUIRE(cli::run("--seed 1 --output-format csv -o " + csv.string() + " simulate --scenario " + kData + "/noiseless.json").code == 0);
  REQUIRE(cli::run(store + " ingest " + csv.string()).code == 0);
  CHECK(cli::run(store + " ingest " + csv.string()).code == 0);

  const auto fit = cli::run(store + " fit-adsr --song s1");
  REQUIRE(fit.code == 0);
  const auto fj = json::parse(fit.out);
  const auto& env = fj["envelope"];
  CHECK(env["tau_A"] == 4);
  CHECK(env["tau_S"] == 10);
  CHECK(env["tau_D"] == 20);
  CHECK(env["tau_R"] == 30);

  const auto id = fj["id"].get<std::string>();
  const auto zero = cli::run(store + " optimize --fit " + id + " --scheme forced --budget 0 --weeks 40");
  REQUIRE(zero.code == 0);
  const auto zj = json::parse(zero.out);
  CHECK(zj["plan"]["total_spend"] == 0.0);
  for (const auto& week : zj["plan"]["spend"])
    for (const auto& seg : week)
      for (const auto& x : seg) CHECK(x.get<double>() == 0.0);

  const auto table = cli::run(store + " --output-format csv optimize --fit " + id + " --scheme forced --budget 40 --weeks 40");
  CHECK(table.code == 0);
  CHECK(table.out.find("week") != std::string::npos);

  const auto exported = cli::run(store + " export --song s1");
  CHECK(exported.code == 0);
  CHECK(exported.out.find("s1,") != std::string::npos);

  const auto copy = dir / "copy";
  CHECK(cli::run("--store " + copy.string() + " replay --from " + (dir / "store").string()).code == 0);
  CHECK(fs::exists(copy / "fits" / (id + ".json")));
}
