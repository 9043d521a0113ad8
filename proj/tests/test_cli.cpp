#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>

#include "golden.hpp"
#include "support.hpp"

using namespace mobiscope;
using testing::run_cli;

namespace {

/// A scenario and its cube directory, built once through the CLI.
struct Fixture {
  testing::TempDir dir;
  std::string synth = dir.file("synth");
  std::string cube = dir.file("cube");
  std::string out = dir.file("out.txt");
  std::string err = dir.file("err.txt");
  int synth_rc = -1;
  int ingest_rc = -1;

  Fixture() {
    auto cfg = testing::small_config().to_json();
    testing::spit(dir.file("config.json"), cfg.dump());
    synth_rc = run_cli({"synth", "--config", dir.file("config.json"), "--out", synth}, out);
    ingest_rc = run_cli({"ingest", "--aggregate", synth + "/aggregate.csv", "--individual",
                         synth + "/individual.csv", "--antennas", synth + "/antennas.csv", "--regions",
                         synth + "/regions.geojson", "--out", cube},
                        out, err);
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

}  // namespace

TEST_CASE("synth and ingest succeed") {
  auto& f = fixture();
  CHECK(f.synth_rc == 0);
  CHECK(f.ingest_rc == 0);
  for (const char* name : {"individual.csv", "aggregate.csv", "antennas.csv", "regions.geojson", "cases.csv",
                           "ground_truth.json"}) {
    CHECK(std::filesystem::exists(f.synth + "/" + name));
  }
  for (const char* name : {"aggregate.cube", "individual.cube", "graphs.csv", "daily_summary.json",
                           "class_counts.csv", "antennas.csv", "regions.geojson", "manifest.json"}) {
    CHECK(std::filesystem::exists(f.cube + "/" + name));
  }
  auto report = nlohmann::json::parse(testing::slurp(f.out));
  CHECK(report["individual"]["errors"] == 0);
  CHECK(testing::slurp(f.err).find("aggregate:") != std::string::npos);
}

TEST_CASE("analyze output equals the library call") {
  auto& f = fixture();
  auto ds = load_dataset(f.cube);
  REQUIRE(run_cli({"analyze", "topk", "--data", f.cube}, f.out) == 0);
  CHECK(testing::slurp(f.out) == topk_report(ds, {}).render(OutputFormat::Json));
  REQUIRE(run_cli({"analyze", "groups", "--data", f.cube, "--format", "csv"}, f.out) == 0);
  CHECK(testing::slurp(f.out) == groups_report(ds, {}).render(OutputFormat::Csv));
  REQUIRE(run_cli({"analyze", "heatmap", "--data", f.cube, "--first-week", "3", "--last-week", "4"}, f.out) == 0);
  CHECK(testing::slurp(f.out) == heatmap_report(ds, {3, 4}).render(OutputFormat::Json));
}

TEST_CASE("topk fraction defaults to ten percent") {
  auto& f = fixture();
  REQUIRE(run_cli({"analyze", "topk", "--data", f.cube}, f.out) == 0);
  auto a = testing::slurp(f.out);
  REQUIRE(run_cli({"analyze", "topk", "--data", f.cube, "--fraction", "0.10"}, f.out) == 0);
  CHECK(testing::slurp(f.out) == a);
  CHECK(nlohmann::json::parse(a)["top_a"].size() == 6);
}

TEST_CASE("usage errors exit 2") {
  auto& f = fixture();
  CHECK(run_cli({}, f.out) == 2);
  CHECK(run_cli({"frobnicate"}, f.out) == 2);
  CHECK(run_cli({"analyze", "bogus", "--data", f.cube}, f.out) == 2);
  CHECK(run_cli({"synth", "--out", f.dir.file("x")}, f.out) == 2);
  CHECK(run_cli({"synth", "--config", f.dir.file("missing.json"), "--out", f.dir.file("x")}, f.out) == 2);
  testing::spit(f.dir.file("bad.json"), "{oops");
  CHECK(run_cli({"synth", "--config", f.dir.file("bad.json"), "--out", f.dir.file("x")}, f.out) == 2);
  auto infeasible = testing::small_config();
  infeasible.n_users = 2;
  testing::spit(f.dir.file("infeasible.json"), infeasible.to_json().dump());
  CHECK(run_cli({"synth", "--config", f.dir.file("infeasible.json"), "--out", f.dir.file("x")}, f.out) == 2);
  CHECK(run_cli({"analyze", "topk", "--data", f.cube, "--format", "xml"}, f.out) == 2);
  CHECK(run_cli({"analyze", "topk", "--data", f.cube, "--phase-a", "spring"}, f.out) == 2);
  CHECK(run_cli({"analyze", "weekly", "--data", f.cube, "--first-week", "9", "--last-week", "2"}, f.out) == 2);
  CHECK(run_cli({"analyze", "correlate", "--data", f.cube}, f.out) == 2);
  CHECK(run_cli({"analyze", "groups", "--data", f.cube, "--start", "April"}, f.out) == 2);
  CHECK(run_cli({"ingest", "--aggregate", "a", "--individual", "b", "--antennas", "c", "--regions", "d", "--out",
                 f.dir.file("y"), "--depth", "0"},
                f.out) == 2);
  CHECK(run_cli({"serve", "--data", f.cube, "--port", "70000"}, f.out) == 2);
  CHECK(run_cli({"--help"}, f.out) == 0);
}

TEST_CASE("data errors exit 1") {
  auto& f = fixture();
  CHECK(run_cli({"analyze", "topk", "--data", f.dir.file("nowhere")}, f.out) == 1);
  CHECK(run_cli({"ingest", "--aggregate", f.dir.file("none.csv"), "--individual", f.synth + "/individual.csv",
                 "--antennas", f.synth + "/antennas.csv", "--regions", f.synth + "/regions.geojson", "--out",
                 f.dir.file("z")},
                f.out, f.err) == 1);
  CHECK(run_cli({"ingest", "--aggregate", f.synth + "/aggregate.csv", "--individual", f.synth + "/individual.csv",
                 "--antennas", f.synth + "/antennas.csv", "--regions", f.synth + "/antennas.csv", "--out",
                 f.dir.file("z")},
                f.out, f.err) == 1);
  CHECK(run_cli({"serve", "--data", f.dir.file("nowhere"), "--port", "0"}, f.out) == 1);
  // Strict ingest stops at the first bad line.
  testing::spit(f.dir.file("broken.csv"), "timestamp,lat,lon,connections\n2020-04-06T00:00:00,1,2,3\n");
  CHECK(run_cli({"ingest", "--aggregate", f.dir.file("broken.csv"), "--individual", f.synth + "/individual.csv",
                 "--antennas", f.synth + "/antennas.csv", "--regions", f.synth + "/regions.geojson", "--out",
                 f.dir.file("z"), "--strict"},
                f.out, f.err) == 1);
}
