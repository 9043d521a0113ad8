#include "mobiscope/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace mobiscope {

std::uint64_t Rng::next() {
  std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::int64_t Rng::uniform_int(std::int64_t lo, std::int64_t hi) {
  if (hi < lo) throw Error("uniform_int with empty range");
  auto range = static_cast<std::uint64_t>(hi - lo) + 1;
  if (range == 0) return static_cast<std::int64_t>(next());
  auto limit = UINT64_MAX - UINT64_MAX % range;
  std::uint64_t v = 0;
  do {
    v = next();
  } while (v >= limit);
  return lo + static_cast<std::int64_t>(v % range);
}

double Rng::uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::mix(std::uint64_t a, std::uint64_t b) {
  Rng r(a ^ (b * 0xd1b54a32d192ed03ull));
  r.next();
  return r.next();
}

namespace {

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
    std::swap(v[i - 1], v[j]);
  }
}

std::int64_t to_micro(double v) { return std::llround(v * 1e6); }
double from_micro(std::int64_t v) { return static_cast<double>(v) / 1e6; }

std::pair<int, int> class_range(MobilityClass c) {
  switch (c) {
    case MobilityClass::NoMobility: return {1, 1};
    case MobilityClass::Low: return {2, 5};
    case MobilityClass::Medium: return {6, 10};
    case MobilityClass::High: return {11, 15};
  }
  return {1, 1};
}

std::array<std::uint64_t, 4> label_counts(const std::array<double, 4>& mix, std::uint64_t n) {
  std::array<std::uint64_t, 4> counts{};
  std::array<double, 4> rem{};
  std::uint64_t assigned = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    double exact = mix[i] * static_cast<double>(n);
    counts[i] = static_cast<std::uint64_t>(std::floor(exact));
    rem[i] = exact - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  std::array<std::size_t, 4> order{0, 1, 2, 3};
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return rem[a] > rem[b]; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++counts[order[k % 4]];
  return counts;
}

std::string user_id(std::uint64_t seed, std::uint64_t index) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%014llx",
                static_cast<unsigned long long>(Rng::mix(seed, index) >> 8));
  return buf;
}

}  // namespace

void ScenarioConfig::validate() const {
  if (n_users < 1) throw Error("n_users must be positive");
  int nonzero = 0;
  double sum = 0;
  for (double p : class_mix) {
    if (p < 0) throw Error("class_mix entries must be non-negative");
    if (p > 0) ++nonzero;
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw Error("class_mix must sum to 1");
  if (nonzero > n_users) throw Error("infeasible config: more mobility classes than users");
  for (double m : phase_multipliers) {
    if (!(m > 0)) throw Error("phase multipliers must be > 0");
  }
  for (double m : dow_multipliers) {
    if (!(m > 0)) throw Error("day-of-week multipliers must be > 0");
  }
  if (n_days < 1) throw Error("n_days must be positive");
  if (start < kStudyStart || start + std::chrono::days{n_days} > kStudyEnd) {
    throw Error("scenario dates must fall inside the study window");
  }
  auto cells = static_cast<std::size_t>(regions.rows) * static_cast<std::size_t>(regions.cols);
  if (regions.rows < 1 || regions.cols < 1 || regions.codes.size() != cells ||
      regions.spi.size() != cells) {
    throw Error("region layout needs rows*cols codes and spi labels");
  }
  if (!(regions.min_lat < regions.max_lat) || !(regions.min_lon < regions.max_lon)) {
    throw Error("region bbox must be well-ordered");
  }
  for (const auto& c : regions.codes) {
    if (c.size() != 2) throw Error("region codes must be 2 letters");
  }
  if (out_antennas < 0 || out_antennas >= n_antennas) throw Error("bad out_antennas");
  int inside = n_antennas - out_antennas;
  if (plant_downtown) {
    if (downtown.count < 1 || downtown.count > inside) throw Error("bad downtown antenna count");
    if (std::find(regions.codes.begin(), regions.codes.end(), downtown.region) ==
        regions.codes.end()) {
      throw Error("downtown region not in layout");
    }
    if (downtown.records_per_visit < 1 || !(downtown.suppression > 0) ||
        !(downtown.attraction > 0)) {
      throw Error("bad downtown plant settings");
    }
  }
  if (class_mix[3] > 0 && n_antennas < 11) {
    throw Error("infeasible config: high mobility needs at least 11 antennas");
  }
  if (min_records_per_visit < 1 || max_records_per_visit < min_records_per_visit) {
    throw Error("bad records_per_visit range");
  }
  int per_visit = std::max(max_records_per_visit, plant_downtown ? downtown.records_per_visit : 0);
  if (16 * per_visit > kBinsPerDay) throw Error("records per visit exceed a day of bins");
}

ScenarioConfig ScenarioConfig::from_json(const nlohmann::json& j) {
  ScenarioConfig c;
  static const std::set<std::string> known{
      "seed",    "n_users",           "n_antennas",      "out_antennas",     "start_date",
      "n_days",  "class_mix",         "phase_multipliers", "dow_multipliers", "regions",
      "plant_downtown", "downtown",   "records_per_visit", "case_peak"};
  try {
    for (const auto& [k, _] : j.items()) {
      if (!known.count(k)) throw Error("unknown config field '" + k + "'");
    }
    c.seed = j.value("seed", c.seed);
    c.n_users = j.value("n_users", c.n_users);
    c.n_antennas = j.value("n_antennas", c.n_antennas);
    c.out_antennas = j.value("out_antennas", c.out_antennas);
    if (j.contains("start_date")) c.start = parse_date(j.at("start_date").get<std::string>());
    c.n_days = j.value("n_days", c.n_days);
    if (j.contains("class_mix")) c.class_mix = j.at("class_mix").get<std::array<double, 4>>();
    if (j.contains("phase_multipliers")) {
      const auto& p = j.at("phase_multipliers");
      c.phase_multipliers = {p.value("pre", 1.0), p.value("during", 1.0), p.value("post", 1.0)};
    }
    if (j.contains("dow_multipliers")) {
      c.dow_multipliers = j.at("dow_multipliers").get<std::array<double, 7>>();
    }
    if (j.contains("regions")) {
      const auto& r = j.at("regions");
      c.regions.rows = r.value("rows", c.regions.rows);
      c.regions.cols = r.value("cols", c.regions.cols);
      c.regions.min_lat = r.value("min_lat", c.regions.min_lat);
      c.regions.max_lat = r.value("max_lat", c.regions.max_lat);
      c.regions.min_lon = r.value("min_lon", c.regions.min_lon);
      c.regions.max_lon = r.value("max_lon", c.regions.max_lon);
      c.regions.codes = r.value("codes", c.regions.codes);
      c.regions.spi = r.value("spi", c.regions.spi);
    }
    c.plant_downtown = j.value("plant_downtown", c.plant_downtown);
    if (j.contains("downtown")) {
      const auto& d = j.at("downtown");
      c.downtown.count = d.value("count", c.downtown.count);
      c.downtown.region = d.value("region", c.downtown.region);
      c.downtown.records_per_visit = d.value("records_per_visit", c.downtown.records_per_visit);
      c.downtown.suppression = d.value("suppression", c.downtown.suppression);
      c.downtown.attraction = d.value("attraction", c.downtown.attraction);
    }
    if (j.contains("records_per_visit")) {
      auto r = j.at("records_per_visit").get<std::array<int, 2>>();
      c.min_records_per_visit = r[0];
      c.max_records_per_visit = r[1];
    }
    c.case_peak = j.value("case_peak", c.case_peak);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("bad scenario config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json ScenarioConfig::to_json() const {
  return {
      {"seed", seed},
      {"n_users", n_users},
      {"n_antennas", n_antennas},
      {"out_antennas", out_antennas},
      {"start_date", format_date(start)},
      {"n_days", n_days},
      {"class_mix", class_mix},
      {"phase_multipliers",
       {{"pre", phase_multipliers[0]}, {"during", phase_multipliers[1]}, {"post", phase_multipliers[2]}}},
      {"dow_multipliers", dow_multipliers},
      {"regions",
       {{"rows", regions.rows},
        {"cols", regions.cols},
        {"min_lat", regions.min_lat},
        {"max_lat", regions.max_lat},
        {"min_lon", regions.min_lon},
        {"max_lon", regions.max_lon},
        {"codes", regions.codes},
        {"spi", regions.spi}}},
      {"plant_downtown", plant_downtown},
      {"downtown",
       {{"count", downtown.count},
        {"region", downtown.region},
        {"records_per_visit", downtown.records_per_visit},
        {"suppression", downtown.suppression},
        {"attraction", downtown.attraction}}},
      {"records_per_visit", {min_records_per_visit, max_records_per_visit}},
      {"case_peak", case_peak},
  };
}

std::array<std::uint64_t, 4> GroundTruth::class_counts() const {
  std::array<std::uint64_t, 4> out{};
  for (auto c : user_classes) ++out[static_cast<std::size_t>(c)];
  return out;
}

nlohmann::json GroundTruth::to_json(const AntennaRegistry& registry) const {
  nlohmann::json j;
  auto counts = class_counts();
  for (auto c : kAllClasses) j["class_counts"][std::string(class_name(c))] = counts[static_cast<std::size_t>(c)];
  auto users = nlohmann::json::array();
  for (std::size_t i = 0; i < user_ids.size(); ++i) {
    users.push_back({{"id", user_ids[i]}, {"class", class_name(user_classes[i])}});
  }
  j["users"] = users;
  auto by_day = [](const std::map<Date, std::uint64_t>& m) {
    nlohmann::json o = nlohmann::json::object();
    for (const auto& [d, v] : m) o[format_date(d)] = v;
    return o;
  };
  j["daily_events"] = by_day(daily_events);
  j["daily_records"] = by_day(daily_records);
  j["daily_active_users"] = by_day(daily_active_users);
  j["planted_dropped"] = planted_dropped;
  auto labels = nlohmann::json::array();
  for (auto id : planted_dropped) labels.push_back(registry.at(id).label);
  j["planted_dropped_labels"] = labels;
  j["total_records"] = total_records;
  return j;
}

Scenario generate(const ScenarioConfig& config) {
  config.validate();
  Scenario s;
  s.config = config;
  Rng rng(config.seed);
  const auto& lay = config.regions;

  // Region grid, row 0 in the north. Bounds in integer microdegrees.
  auto lat0 = to_micro(lay.min_lat);
  auto lat1 = to_micro(lay.max_lat);
  auto lon0 = to_micro(lay.min_lon);
  auto lon1 = to_micro(lay.max_lon);
  struct Cell {
    std::int64_t south, north, west, east;
  };
  std::vector<Cell> cells;
  for (int r = 0; r < lay.rows; ++r) {
    for (int c = 0; c < lay.cols; ++c) {
      cells.push_back({lat1 - (lat1 - lat0) * (r + 1) / lay.rows, lat1 - (lat1 - lat0) * r / lay.rows,
                       lon0 + (lon1 - lon0) * c / lay.cols, lon0 + (lon1 - lon0) * (c + 1) / lay.cols});
    }
  }
  nlohmann::json features = nlohmann::json::array();
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& c = cells[i];
    auto pt = [](std::int64_t lon, std::int64_t lat) {
      return nlohmann::json::array({from_micro(lon), from_micro(lat)});
    };
    nlohmann::json ring = nlohmann::json::array(
        {pt(c.west, c.south), pt(c.east, c.south), pt(c.east, c.north), pt(c.west, c.north),
         pt(c.west, c.south)});
    features.push_back({{"type", "Feature"},
                        {"properties",
                         {{"code", lay.codes[i]}, {"name", "Region " + lay.codes[i]}, {"spi", lay.spi[i]}}},
                        {"geometry", {{"type", "Polygon"}, {"coordinates", {ring}}}}});
  }
  nlohmann::json fc = {{"type", "FeatureCollection"}, {"features", features}};
  s.regions_geojson = fc.dump(1) + "\n";
  s.regions = RegionSet::from_geojson(s.regions_geojson);

  // Antennas: downtown first, then the rest of the city, then the outskirts.
  std::set<std::pair<std::int64_t, std::int64_t>> taken;
  auto place_in = [&](const Cell& c) {
    auto mlat = std::max<std::int64_t>((c.north - c.south) / 50, 1);
    auto mlon = std::max<std::int64_t>((c.east - c.west) / 50, 1);
    while (true) {
      auto la = rng.uniform_int(c.south + mlat, c.north - mlat);
      auto lo = rng.uniform_int(c.west + mlon, c.east - mlon);
      if (taken.insert({la, lo}).second) return std::pair{la, lo};
    }
  };
  int downtown_count = config.plant_downtown ? config.downtown.count : 0;
  std::size_t downtown_cell = 0;
  if (config.plant_downtown) {
    downtown_cell = static_cast<std::size_t>(
        std::find(lay.codes.begin(), lay.codes.end(), config.downtown.region) - lay.codes.begin());
  }
  int inside = config.n_antennas - config.out_antennas;
  for (int i = 0; i < config.n_antennas; ++i) {
    std::pair<std::int64_t, std::int64_t> p;
    if (i < downtown_count) {
      p = place_in(cells[downtown_cell]);
    } else if (i < inside) {
      p = place_in(cells[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(cells.size()) - 1))]);
    } else {
      // West of the grid, outside every polygon.
      Cell outskirts{lat0 - 150000, lat1 + 150000, lon0 - 400000, lon0 - 50000};
      p = place_in(outskirts);
    }
    char label[16];
    std::snprintf(label, sizeof label, "ANT%04d", i + 1);
    double lat = from_micro(p.first);
    double lon = from_micro(p.second);
    s.registry.add(label, lat, lon, s.regions.locate(lat, lon));
  }
  const auto n_ant = static_cast<std::size_t>(config.n_antennas);
  std::vector<char> is_downtown(n_ant, 0);
  for (int i = 0; i < downtown_count; ++i) {
    is_downtown[static_cast<std::size_t>(i)] = 1;
    s.truth.planted_dropped.push_back(static_cast<AntennaIndex>(i));
  }

  // Destination weights: a geometric ladder over the non-downtown antennas in
  // random order keeps their traffic ranks well separated.
  std::vector<double> weight(n_ant, 0.0);
  std::vector<AntennaIndex> regular;
  for (std::size_t i = static_cast<std::size_t>(downtown_count); i < n_ant; ++i) {
    regular.push_back(static_cast<AntennaIndex>(i));
  }
  shuffle(regular, rng);
  double w = 2.0;
  for (auto id : regular) {
    weight[id] = w;
    w *= 0.985;
  }
  for (int i = 0; i < downtown_count; ++i) weight[static_cast<std::size_t>(i)] = config.downtown.attraction;
  std::vector<double> cumulative(n_ant);
  std::partial_sum(weight.begin(), weight.end(), cumulative.begin());
  auto draw_destination = [&](Rng& r) {
    double u = r.uniform01() * cumulative.back();
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    if (it == cumulative.end()) --it;
    return static_cast<AntennaIndex>(it - cumulative.begin());
  };

  // Users.
  const auto n_users = static_cast<std::size_t>(config.n_users);
  std::set<std::string> ids_seen;
  for (std::size_t u = 0; u < n_users; ++u) {
    auto id = user_id(config.seed, u);
    while (!ids_seen.insert(id).second) id += "x";
    s.truth.user_ids.push_back(id);
  }
  auto counts = label_counts(config.class_mix, n_users);
  for (std::size_t c = 0; c < 4; ++c) {
    for (std::uint64_t k = 0; k < counts[c]; ++k) {
      s.truth.user_classes.push_back(static_cast<MobilityClass>(c));
    }
  }
  shuffle(s.truth.user_classes, rng);
  std::vector<AntennaIndex> home(n_users);
  for (auto& h : home) h = static_cast<AntennaIndex>(rng.uniform_int(0, static_cast<std::int64_t>(n_ant) - 1));

  for (int day_index = 0; day_index < config.n_days; ++day_index) {
    Date day = config.start + std::chrono::days{day_index};
    Phase phase = phase_of(day);
    double m = config.phase_multipliers[static_cast<std::size_t>(phase)] *
               config.dow_multipliers[static_cast<std::size_t>(weekday(day))];
    auto active = std::min<std::size_t>(
        n_users, static_cast<std::size_t>(std::llround(static_cast<double>(n_users) * m)));
    std::vector<char> present(n_users, 1);
    if (active < n_users) {
      std::vector<std::size_t> perm(n_users);
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      Rng day_rng(Rng::mix(config.seed ^ 0x5eedull, static_cast<std::uint64_t>(day_index)));
      shuffle(perm, day_rng);
      std::fill(present.begin(), present.end(), 0);
      for (std::size_t k = 0; k < active; ++k) present[perm[k]] = 1;
    }
    auto day_first_bin = TimeBin::of_day(day).index;

    struct Pending {
      std::int64_t bin;
      std::size_t user;
      AntennaIndex antenna;
    };
    std::vector<Pending> day_records;
    std::uint64_t day_events = 0;
    std::uint64_t day_active = 0;
    for (std::size_t u = 0; u < n_users; ++u) {
      if (!present[u]) continue;
      ++day_active;
      Rng ur(Rng::mix(Rng::mix(config.seed, u), static_cast<std::uint64_t>(day_index)));
      auto [lo, hi] = class_range(s.truth.user_classes[u]);
      hi = std::min<int>(hi, config.n_antennas);
      auto k = static_cast<std::size_t>(ur.uniform_int(lo, hi));
      std::vector<AntennaIndex> visits{home[u]};
      std::vector<char> used(n_ant, 0);
      used[home[u]] = 1;
      while (visits.size() < k) {
        auto d = draw_destination(ur);
        if (used[d]) continue;
        used[d] = 1;
        visits.push_back(d);
      }
      if (k >= 2 && ur.uniform01() < 0.5) visits.push_back(home[u]);
      std::vector<int> per_visit;
      int total = 0;
      for (auto a : visits) {
        int r = 0;
        if (is_downtown[a]) {
          int base = config.downtown.records_per_visit;
          r = phase == Phase::DuringLockdown
                  ? std::max(1, static_cast<int>(std::llround(base * config.downtown.suppression)))
                  : base;
        } else {
          r = static_cast<int>(ur.uniform_int(config.min_records_per_visit, config.max_records_per_visit));
        }
        per_visit.push_back(r);
        total += r;
      }
      // Selection sampling: `total` distinct bins in ascending order.
      std::vector<std::int64_t> bins;
      int needed = total;
      for (std::int64_t t = 0; t < kBinsPerDay && needed > 0; ++t) {
        auto left = static_cast<double>(kBinsPerDay - t);
        if (left * ur.uniform01() < needed) {
          bins.push_back(t);
          --needed;
        }
      }
      std::size_t next = 0;
      for (std::size_t v = 0; v < visits.size(); ++v) {
        for (int r = 0; r < per_visit[v]; ++r) {
          day_records.push_back({day_first_bin + bins[next++], u, visits[v]});
        }
      }
      day_events += visits.size() - 1;
    }
    std::stable_sort(day_records.begin(), day_records.end(),
                     [](const Pending& a, const Pending& b) { return a.bin < b.bin; });
    std::map<std::pair<std::int64_t, AntennaIndex>, std::uint64_t> agg;
    for (const auto& p : day_records) {
      s.individual.push_back({TimeBin{p.bin}, s.truth.user_ids[p.user], p.antenna});
      ++agg[{p.bin, p.antenna}];
    }
    for (const auto& [key, c] : agg) s.aggregate.push_back({TimeBin{key.first}, key.second, c});
    s.truth.daily_events[day] = day_events;
    s.truth.daily_records[day] = day_records.size();
    s.truth.daily_active_users[day] = day_active;
    s.truth.total_records += day_records.size();
  }

  // Case series: saturating cumulative curve per region, integer arithmetic only.
  for (std::size_t ri = 0; ri < lay.codes.size(); ++ri) {
    auto peak = config.case_peak * (2 + ri % 4) / 2;
    auto scale = static_cast<std::int64_t>(30 + 5 * (ri % 3));
    auto total_at = [&](std::int64_t t) -> std::uint64_t {
      if (t <= 0) return 0;
      auto tt = static_cast<std::uint64_t>(t * t);
      return peak * tt / (tt + static_cast<std::uint64_t>(scale * scale));
    };
    for (int day_index = 0; day_index < config.n_days; ++day_index) {
      Date day = config.start + std::chrono::days{day_index};
      auto t = (day - kStudyStart).count() + 1;
      CaseRecord r;
      r.date = day;
      r.region = lay.codes[ri];
      r.total = total_at(t);
      r.recovered = total_at(t - 14) * 8 / 10;
      r.deaths = total_at(t - 7) * 5 / 100;
      r.active = r.total - r.recovered - r.deaths;
      s.cases.push_back(r);
    }
  }
  return s;
}

void write_scenario(const Scenario& s, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream out(fs::path(dir) / name, std::ios::binary);
    if (!out) throw Error("cannot write " + (fs::path(dir) / name).string());
    return out;
  };
  {
    auto out = open("antennas.csv");
    s.registry.write_csv(out);
  }
  {
    auto out = open("regions.geojson");
    out << s.regions_geojson;
  }
  {
    auto out = open("individual.csv");
    out << kIndividualHeader << '\n';
    for (const auto& r : s.individual) out << format_individual_record(r, s.registry) << '\n';
  }
  {
    auto out = open("aggregate.csv");
    out << kAggregateHeader << '\n';
    for (const auto& r : s.aggregate) out << format_aggregate_record(r, s.registry) << '\n';
  }
  {
    auto out = open("cases.csv");
    out << kCasesHeader << '\n';
    for (const auto& r : s.cases) out << format_case_record(r) << '\n';
  }
  {
    auto out = open("ground_truth.json");
    auto j = s.truth.to_json(s.registry);
    j["config"] = s.config.to_json();
    out << j.dump(1) << '\n';
  }
}

}  // namespace mobiscope
