#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <map>
#include <set>

#include "mobiscope/analytics.hpp"
#include "mobiscope/mobility.hpp"
#include "support.hpp"

using namespace mobiscope;

TEST_CASE("rng is a fixed sequence") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next() == b.next());
  // splitmix64 reference values for seed 0.
  Rng z(0);
  CHECK(z.next() == 0xe220a8397b1dcdafULL);
  CHECK(z.next() == 0x6e789e6aa1b965f4ULL);
  Rng r(5);
  for (int i = 0; i < 2000; ++i) {
    auto v = r.uniform_int(-3, 3);
    CHECK(v >= -3);
    CHECK(v <= 3);
    auto u = r.uniform01();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("same seed, same files") {
  auto cfg = testing::small_config();
  cfg.seed = 42;
  testing::TempDir one, two;
  write_scenario(generate(cfg), one.path().string());
  write_scenario(generate(cfg), two.path().string());
  for (const char* f : {"individual.csv", "aggregate.csv", "antennas.csv", "regions.geojson", "cases.csv",
                        "ground_truth.json"}) {
    auto a = testing::slurp(one.file(f));
    CHECK_FALSE(a.empty());
    CHECK(a == testing::slurp(two.file(f)));
  }
  cfg.seed = 43;
  testing::TempDir three;
  write_scenario(generate(cfg), three.path().string());
  CHECK(testing::slurp(one.file("individual.csv")) != testing::slurp(three.file("individual.csv")));
}

TEST_CASE("infeasible configs are rejected") {
  auto bad = [](auto edit) {
    auto c = testing::small_config();
    edit(c);
    CHECK_THROWS_AS(c.validate(), Error);
  };
  bad([](ScenarioConfig& c) { c.n_users = 3; });  // four classes, three users
  bad([](ScenarioConfig& c) { c.class_mix = {0.5, 0.5, 0.1, 0.0}; });
  bad([](ScenarioConfig& c) { c.phase_multipliers[1] = 0; });
  bad([](ScenarioConfig& c) { c.dow_multipliers[3] = -1; });
  bad([](ScenarioConfig& c) { c.n_days = 200; });
  bad([](ScenarioConfig& c) { c.n_antennas = 9; c.out_antennas = 1; c.downtown.count = 2; });
  bad([](ScenarioConfig& c) { c.min_records_per_visit = 3; c.max_records_per_visit = 2; });
  auto three = testing::small_config();
  three.n_users = 3;
  three.class_mix = {0.5, 0.5, 0, 0};
  CHECK_NOTHROW(three.validate());
  CHECK_NOTHROW(testing::small_config().validate());
}

TEST_CASE("config JSON round-trip and strictness") {
  auto cfg = testing::small_config();
  auto j = cfg.to_json();
  CHECK(ScenarioConfig::from_json(j).to_json() == j);
  j["colour"] = "red";
  CHECK_THROWS_AS(ScenarioConfig::from_json(j), Error);
}

TEST_CASE("aggregate counts match individual records") {
  auto s = generate(testing::small_config());
  std::map<std::pair<std::int64_t, AntennaIndex>, std::uint64_t> from_individual;
  for (const auto& r : s.individual) ++from_individual[{r.bin.index, r.antenna}];
  std::map<std::pair<std::int64_t, AntennaIndex>, std::uint64_t> from_aggregate;
  for (const auto& r : s.aggregate) from_aggregate[{r.bin.index, r.antenna}] += r.connections;
  CHECK(from_individual == from_aggregate);
  CHECK(s.truth.total_records == s.individual.size());
}

TEST_CASE("realized classes equal labels on every day") {
  auto s = generate(testing::small_config());
  std::map<std::string, MobilityClass> label;
  for (std::size_t i = 0; i < s.truth.user_ids.size(); ++i) label[s.truth.user_ids[i]] = s.truth.user_classes[i];
  std::map<std::pair<Date, std::string>, std::set<AntennaIndex>> visited;
  for (const auto& r : s.individual) visited[{r.bin.day(), r.user}].insert(r.antenna);
  std::size_t mismatches = 0;
  for (const auto& [key, set] : visited) mismatches += classify_count(set.size()) != label.at(key.second);
  CHECK(mismatches == 0);
  CHECK(visited.size() > 0);
}

TEST_CASE("label counts follow the mix") {
  auto cfg = testing::small_config();
  cfg.n_users = 10000;
  cfg.n_days = 1;
  auto s = generate(cfg);
  auto counts = s.truth.class_counts();
  CHECK(counts == std::array<std::uint64_t, 4>{4000, 4100, 1500, 400});
}

TEST_CASE("ground truth bookkeeping") {
  auto s = generate(testing::small_config());
  std::map<Date, std::uint64_t> records;
  std::map<Date, std::set<std::string>> users;
  for (const auto& r : s.individual) {
    ++records[r.bin.day()];
    users[r.bin.day()].insert(r.user);
  }
  for (const auto& [d, n] : records) {
    CHECK(s.truth.daily_records.at(d) == n);
    CHECK(s.truth.daily_active_users.at(d) == users[d].size());
  }
  auto gt = s.truth.to_json(s.registry);
  CHECK(gt["users"].size() == s.truth.user_ids.size());
  CHECK(gt["daily_events"].size() == s.truth.daily_events.size());
  CHECK(s.regions.codes().size() == 12);
  for (const auto& a : s.registry.antennas()) CHECK(s.regions.locate(a.lat, a.lon) == a.region);
}
