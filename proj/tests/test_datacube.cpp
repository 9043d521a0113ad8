#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sstream>

#include "mobiscope/datacube.hpp"
#include "query_gen.hpp"
#include "support.hpp"

using namespace mobiscope;

namespace {

CubeErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const CubeError& e) {
    return e.code();
  }
  FAIL("expected CubeError");
  return CubeErrorCode::Io;
}

std::uint64_t scalar(const DataCube& c, Query q) {
  q.group_by = GroupBy::None;
  return c.query(q).values.at(0);
}

TimeInterval days_interval(Date a, Date b) { return {TimeBin::of_day(a), TimeBin::of_day(b)}; }

std::string snapshot_bytes(const DataCube& c) {
  std::ostringstream out;
  c.write_snapshot(out);
  return out.str();
}

DataCube from_bytes(const std::string& s) {
  std::istringstream in(s);
  return DataCube::load_snapshot(in);
}

}  // namespace

TEST_CASE("empty cube answers zero") {
  auto regions = testing::two_regions();
  auto reg = testing::small_registry(regions);
  auto cube = build_cube(std::span<const AggregateRecord>{}, reg);
  CHECK(cube.total() == 0);
  CHECK_FALSE(cube.time_extent().has_value());
  CHECK(to_json(cube.query(Query{})).dump() == R"({"keys":["total"],"values":[0]})");
  Query by_day;
  by_day.group_by = GroupBy::Day;
  CHECK(cube.query(by_day).keys.empty());
  CHECK(cube.audit());
  auto back = from_bytes(snapshot_bytes(cube));
  CHECK(back.total() == 0);
}

TEST_CASE("one aggregate record with 262 connections") {
  auto regions = testing::two_regions();
  auto reg = testing::small_registry(regions);
  std::vector<AggregateRecord> recs{
      parse_aggregate_record("2020-04-26T00:00:00,-20.837028,-43.563111,262", reg)};
  auto cube = build_cube(recs, reg);
  CHECK(cube.total() == 262);
  CHECK(cube.record_count() == 1);
  Query q;
  q.group_by = GroupBy::Day;
  auto r = cube.query(q);
  CHECK(r.keys == std::vector<std::string>{"2020-04-26"});
  CHECK(r.values == std::vector<std::uint64_t>{262});
  q.group_by = GroupBy::Region;
  CHECK(cube.query(q).keys == std::vector<std::string>{"OUT"});
  q.group_by = GroupBy::Antenna;
  CHECK(cube.query(q).keys == std::vector<std::string>{"5"});
}

TEST_CASE("build errors") {
  auto regions = testing::two_regions();
  auto reg = testing::small_registry(regions);
  CHECK(code_of([&] { CubeBuilder b(reg, 0); }) == CubeErrorCode::DepthOutOfRange);
  CHECK(code_of([&] { CubeBuilder b(reg, 26); }) == CubeErrorCode::DepthOutOfRange);
  CHECK_NOTHROW(CubeBuilder(reg, 1));
  CHECK_NOTHROW(CubeBuilder(reg, 25));
  CHECK(code_of([&] {
          CubeBuilder b(reg);
          b.add(AggregateRecord{TimeBin{0}, 0, 1});
          b.add(IndividualRecord{TimeBin{0}, "u", 0});
        }) == CubeErrorCode::MixedRecordKinds);
}

TEST_CASE("distinct_users needs an individual cube") {
  auto regions = testing::two_regions();
  auto reg = testing::small_registry(regions);
  std::vector<AggregateRecord> recs{{TimeBin{10}, 1, 3}};
  auto cube = build_cube(recs, reg);
  Query q;
  q.select = Select::DistinctUsers;
  CHECK(code_of([&] { cube.query(q); }) == CubeErrorCode::UnsupportedSelect);
}

TEST_CASE("query validation") {
  Query q;
  q.time = TimeInterval{TimeBin{5}, TimeBin{5}};
  CHECK(code_of([&] { q.validate(); }) == CubeErrorCode::InvalidQuery);
  Query b;
  b.bbox = BBox{1, 0, 0, 1};
  CHECK(code_of([&] { b.validate(); }) == CubeErrorCode::InvalidQuery);
  Query two;
  two.bbox = BBox{0, 0, 1, 1};
  two.regions = std::vector<std::string>{"CE"};
  CHECK(code_of([&] { two.validate(); }) == CubeErrorCode::InvalidQuery);
}

TEST_CASE("query JSON grammar") {
  auto q = query_from_json(nlohmann::json::parse(
      R"({"select":"count","where":{"time":{"start":"2020-04-05T00:00:00","end":"2020-04-12T00:00:00"},"regions":["CE","CO"]},"group_by":"day"})"));
  CHECK(q.select == Select::Count);
  CHECK(q.group_by == GroupBy::Day);
  REQUIRE(q.time.has_value());
  CHECK(q.time->start == TimeBin::of_day(make_date(2020, 4, 5)));
  CHECK(q.time->end == TimeBin::of_day(make_date(2020, 4, 12)));
  CHECK(q.regions == std::vector<std::string>{"CE", "CO"});
  CHECK(query_from_json(query_to_json(q)).regions == q.regions);
  CHECK(query_to_json(query_from_json(query_to_json(q))) == query_to_json(q));

  auto bad = [](const char* text) {
    return code_of([&] { query_from_json(nlohmann::json::parse(text)); });
  };
  CHECK(bad(R"({"select":"sum"})") == CubeErrorCode::InvalidQuery);
  CHECK(bad(R"({"selec":"count"})") == CubeErrorCode::InvalidQuery);
  CHECK(bad(R"({"group_by":"month"})") == CubeErrorCode::InvalidQuery);
  CHECK(bad(R"({"where":{"time":{"start":"2020-04-05T00:01:00","end":"2020-04-06T00:00:00"}}})") ==
        CubeErrorCode::InvalidQuery);
  CHECK(bad(R"({"where":{"colour":"red"}})") == CubeErrorCode::InvalidQuery);
  CHECK(bad(R"([1,2])") == CubeErrorCode::InvalidQuery);
  CHECK_NOTHROW(query_from_json(nlohmann::json::parse(R"({"source":"individual"})")));
}

TEST_CASE("cube agrees with the linear scan on random queries") {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    auto s = testing::oracle_scenario(seed, 20000);
    auto agg = build_cube(s.aggregate, s.registry, 1 + static_cast<int>(seed * 3 % 25));
    auto ind = build_cube(s.individual, s.registry);
    REQUIRE(agg.audit());
    REQUIRE(ind.audit());
    CHECK(agg.total() == s.truth.total_records);
    CHECK(ind.total() == s.individual.size());
    auto span = *ind.time_extent();
    Rng rng(seed);
    auto codes = s.regions.codes();
    for (int i = 0; i < 60; ++i) {
      auto q = testing::random_query(rng, s.registry, codes, span, true);
      CHECK(ind.query(q) == brute_force_query(s.individual, s.registry, q));
      q.select = Select::Count;
      CHECK(agg.query(q) == brute_force_query(s.aggregate, s.registry, q));
    }
  }
}

TEST_CASE("oracle ignores record order") {
  auto s = testing::oracle_scenario(11, 5000);
  auto shuffled = s.individual;
  Rng rng(5);
  for (std::size_t i = shuffled.size(); i > 1; --i) {
    std::swap(shuffled[i - 1], shuffled[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
  }
  auto span = *build_cube(s.individual, s.registry).time_extent();
  auto codes = s.regions.codes();
  for (int i = 0; i < 30; ++i) {
    auto q = testing::random_query(rng, s.registry, codes, span, true);
    CHECK(brute_force_query(shuffled, s.registry, q) == brute_force_query(s.individual, s.registry, q));
  }
  CHECK(build_cube(shuffled, s.registry).query(Query{}) == build_cube(s.individual, s.registry).query(Query{}));
}

TEST_CASE("widening the interval or box never lowers a count") {
  auto s = testing::oracle_scenario(21, 20000);
  auto cube = build_cube(s.individual, s.registry);
  auto span = *cube.time_extent();
  Rng rng(21);
  for (int i = 0; i < 40; ++i) {
    auto a = span.start.index + rng.uniform_int(0, span.end.index - span.start.index - 1);
    auto b = a + rng.uniform_int(1, 600);
    Query q;
    q.select = i % 2 ? Select::DistinctUsers : Select::Count;
    q.time = TimeInterval{TimeBin{a}, TimeBin{b}};
    auto base = scalar(cube, q);
    Query wide = q;
    wide.time = TimeInterval{TimeBin{a - rng.uniform_int(0, 300)}, TimeBin{b + rng.uniform_int(0, 300)}};
    CHECK(scalar(cube, wide) >= base);

    const auto& ant = s.registry.at(static_cast<AntennaIndex>(rng.uniform_int(0, static_cast<std::int64_t>(s.registry.size()) - 1)));
    double r = 0.01 + 0.05 * rng.uniform01();
    q.bbox = BBox{ant.lat - r, ant.lon - r, ant.lat + r, ant.lon + r};
    auto boxed = scalar(cube, q);
    q.bbox = BBox{ant.lat - 2 * r, ant.lon - 2 * r, ant.lat + 2 * r, ant.lon + 2 * r};
    CHECK(scalar(cube, q) >= boxed);
  }
}

TEST_CASE("counts add over split intervals") {
  auto s = testing::oracle_scenario(31, 20000);
  auto cube = build_cube(s.aggregate, s.registry);
  auto span = *cube.time_extent();
  Rng rng(31);
  for (int i = 0; i < 50; ++i) {
    auto t1 = span.start.index + rng.uniform_int(-20, 200);
    auto t3 = t1 + rng.uniform_int(2, span.end.index - span.start.index + 50);
    auto t2 = t1 + rng.uniform_int(0, t3 - t1);
    Query q;
    if (i % 3 == 0) q.regions = std::vector<std::string>{s.regions.codes().front()};
    q.time = TimeInterval{TimeBin{t1}, TimeBin{t3}};
    auto whole = scalar(cube, q);
    std::uint64_t parts = 0;
    if (t2 > t1) {
      q.time = TimeInterval{TimeBin{t1}, TimeBin{t2}};
      parts += scalar(cube, q);
    }
    if (t3 > t2) {
      q.time = TimeInterval{TimeBin{t2}, TimeBin{t3}};
      parts += scalar(cube, q);
    }
    CHECK(whole == parts);
  }
}

TEST_CASE("distinct users are subadditive over antenna sets") {
  auto s = testing::oracle_scenario(41, 20000);
  auto cube = build_cube(s.individual, s.registry);
  Rng rng(41);
  auto n = static_cast<std::int64_t>(s.registry.size());
  for (int i = 0; i < 30; ++i) {
    std::vector<AntennaIndex> a, b, both;
    for (AntennaIndex id = 0; id < n; ++id) {
      auto side = rng.uniform_int(0, 2);
      if (side == 0) a.push_back(id);
      if (side == 1) b.push_back(id);
      if (side != 2) both.push_back(id);
    }
    Query q;
    q.select = Select::DistinctUsers;
    q.antennas = a;
    auto ua = scalar(cube, q);
    q.antennas = b;
    auto ub = scalar(cube, q);
    q.antennas = both;
    auto uab = scalar(cube, q);
    CHECK(uab <= ua + ub);
    CHECK(uab >= std::max(ua, ub));
  }
}

TEST_CASE("disjoint user populations add exactly") {
  auto regions = testing::two_regions();
  auto reg = testing::small_registry(regions);
  std::vector<IndividualRecord> recs;
  for (int i = 0; i < 40; ++i) {
    recs.push_back({TimeBin{i * 7}, "west" + std::to_string(i % 9), static_cast<AntennaIndex>(i % 3)});
    recs.push_back({TimeBin{i * 5}, "east" + std::to_string(i % 4), static_cast<AntennaIndex>(3 + i % 2)});
  }
  auto cube = build_cube(recs, reg);
  Query q;
  q.select = Select::DistinctUsers;
  q.regions = std::vector<std::string>{"CE"};
  CHECK(scalar(cube, q) == 9);
  q.regions = std::vector<std::string>{"SC"};
  CHECK(scalar(cube, q) == 4);
  q.regions = std::vector<std::string>{"CE", "SC"};
  CHECK(scalar(cube, q) == 13);
}

TEST_CASE("result ordering") {
  auto regions = testing::two_regions();
  auto reg = testing::small_registry(regions);
  std::vector<AggregateRecord> recs{{TimeBin{0}, 0, 5}, {TimeBin{1}, 1, 9}, {TimeBin{2}, 2, 5},
                                    {TimeBin{300}, 3, 20}, {TimeBin{600}, 5, 1}};
  auto cube = build_cube(recs, reg);
  Query q;
  q.group_by = GroupBy::Antenna;
  auto r = cube.query(q);
  CHECK(r.keys == std::vector<std::string>{"3", "1", "0", "2", "5"});
  q.group_by = GroupBy::Region;
  r = cube.query(q);
  CHECK(r.keys == std::vector<std::string>{"SC", "CE", "OUT"});
  CHECK(r.values == std::vector<std::uint64_t>{20, 19, 1});
  q.group_by = GroupBy::Day;
  r = cube.query(q);
  CHECK(r.keys == std::vector<std::string>{"2020-03-01", "2020-03-02", "2020-03-03"});
  CHECK(r.values == std::vector<std::uint64_t>{19, 20, 1});
  q.group_by = GroupBy::Hour;
  q.time = TimeInterval{TimeBin{0}, TimeBin{24}};
  r = cube.query(q);
  CHECK(r.keys == std::vector<std::string>{"2020-03-01T00:00:00", "2020-03-01T01:00:00"});
  q.group_by = GroupBy::Week;
  q.time = days_interval(make_date(2020, 3, 1), make_date(2020, 3, 15));
  r = cube.query(q);
  CHECK(r.keys == std::vector<std::string>{"W01", "W02"});
  CHECK(r.values == std::vector<std::uint64_t>{40, 0});
}

TEST_CASE("snapshot round-trip answers identically") {
  auto s = testing::oracle_scenario(51, 20000);
  for (bool individual : {false, true}) {
    auto cube = individual ? build_cube(s.individual, s.registry, 12) : build_cube(s.aggregate, s.registry, 12);
    auto bytes = snapshot_bytes(cube);
    auto back = from_bytes(bytes);
    CHECK(back.kind() == cube.kind());
    CHECK(back.depth() == 12);
    CHECK(back.total() == cube.total());
    CHECK(back.record_count() == cube.record_count());
    CHECK(back.audit());
    CHECK(snapshot_bytes(back) == bytes);
    Rng rng(51);
    auto span = *cube.time_extent();
    for (int i = 0; i < 50; ++i) {
      auto q = testing::random_query(rng, s.registry, s.regions.codes(), span, individual);
      CHECK(back.query(q) == cube.query(q));
    }
  }
}

TEST_CASE("snapshot corruption is typed") {
  auto s = testing::oracle_scenario(61, 3000);
  auto bytes = snapshot_bytes(build_cube(s.individual, s.registry));
  {
    auto b = bytes;
    b[0] = 'X';
    CHECK(code_of([&] { from_bytes(b); }) == CubeErrorCode::BadMagic);
  }
  CHECK(code_of([&] { from_bytes(""); }) == CubeErrorCode::BadMagic);
  {
    auto b = bytes;
    b[4] = 9;
    CHECK(code_of([&] { from_bytes(b); }) == CubeErrorCode::VersionMismatch);
  }
  for (std::size_t cut : {std::size_t{6}, bytes.size() / 2, bytes.size() - 3}) {
    CHECK(code_of([&] { from_bytes(bytes.substr(0, cut)); }) == CubeErrorCode::Truncated);
  }
  {
    auto b = bytes;
    b[b.size() / 2] = static_cast<char>(b[b.size() / 2] ^ 0x40);
    auto code = code_of([&] { from_bytes(b); });
    CHECK((code == CubeErrorCode::Corrupt || code == CubeErrorCode::Truncated));
  }
  CHECK(code_of([&] { DataCube::load_snapshot(std::string("/nonexistent/cube")); }) == CubeErrorCode::Io);
}
