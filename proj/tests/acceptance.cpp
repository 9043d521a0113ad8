// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <future>
#include <set>
#include <string>

#include "api_fixture.hpp"
#include "golden.hpp"
#include "httplib.h"
#include "mobiscope/analytics.hpp"
#include "mobiscope/pipeline.hpp"
#include "mobiscope/server.hpp"
#include "query_gen.hpp"
#include "support.hpp"

using namespace mobiscope;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) {
      pass = false;
      detail = what;
    }
  }
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

Outcome oracle_equivalence() {
  Outcome o;
  auto t0 = Clock::now();
  int exact = 0;
  std::size_t largest = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    auto s = testing::oracle_scenario(seed, 50000);
    largest = std::max(largest, s.individual.size());
    Rng rng(seed * 31 + 7);
    bool individual = seed % 2 == 0;
    ResultSeries got, want;
    if (individual) {
      auto cube = build_cube(s.individual, s.registry);
      auto q = testing::random_query(rng, s.registry, s.regions.codes(), *cube.time_extent(), true);
      got = cube.query(q);
      want = brute_force_query(s.individual, s.registry, q);
    } else {
      auto cube = build_cube(s.aggregate, s.registry);
      auto q = testing::random_query(rng, s.registry, s.regions.codes(), *cube.time_extent(), false);
      got = cube.query(q);
      want = brute_force_query(s.aggregate, s.registry, q);
    }
    exact += got == want;
  }
  double secs = seconds_since(t0);
  o.require(largest <= 50000, "a dataset exceeded 50k records");
  o.require(exact == 100, std::to_string(100 - exact) + " pairs differ");
  o.require(secs < 60, "runtime over 60 s");
  o.detail = (o.pass ? "" : o.detail + "; ") + std::to_string(exact) + "/100 exact, largest " +
             std::to_string(largest) + " records" + fmt(", %.1f s", secs);
  return o;
}

Outcome conservation() {
  Outcome o;
  auto s = generate(testing::golden_config());
  auto n = s.registry.size();
  auto graphs = build_daily_graphs(s.individual, n);
  auto groups = group_user_days(s.individual);
  std::map<Date, std::uint64_t> per_user;
  for (const auto& g : groups.groups) {
    std::vector<IndividualRecord> run;
    for (auto i = g.begin; i < g.end; ++i) run.push_back(s.individual[groups.order[i]]);
    per_user[g.day] += extract_events(run).size();
  }
  for (const auto& [day, g] : graphs) {
    std::uint64_t in = 0, edges = 0;
    for (AntennaIndex a = 0; a < n; ++a) in += g.in_degree(a);
    for (const auto& e : g.edges()) edges += e.weight;
    o.require(in == edges, format_date(day) + ": in-degree sum != edge weight sum");
    o.require(edges == per_user[day], format_date(day) + ": edge weights != per-user transitions");
  }
  auto cal = ExclusionCalendar::study_default().with_coverage(
      DateRange{s.config.start, s.config.start + std::chrono::days{s.config.n_days}});
  auto weekly = weekly_mobility(graphs, cal);
  auto m = region_heatmap(graphs, cal, 1, 18, s.registry.antennas(), s.regions.codes());
  std::size_t weeks = 0;
  for (std::size_t r = 0; r < m.weeks.size(); ++r) {
    auto it = weekly.find(m.weeks[r]);
    if (it == weekly.end()) {
      o.require(m.raw_row_sum(r) == 0, "heatmap week without weekly total");
      continue;
    }
    ++weeks;
    o.require(scale_week(static_cast<double>(m.raw_row_sum(r)), m.weeks[r], cal) == it->second,
              "week " + std::to_string(m.weeks[r]) + ": heatmap sum != weekly_mobility");
  }
  o.detail = (o.pass ? "" : o.detail + "; ") + std::to_string(graphs.size()) + " days, " +
             std::to_string(weeks) + " weeks checked";
  return o;
}

Outcome fixed_constants() {
  Outcome o;
  AntennaTrafficTable t;
  t.totals.assign(1400, 1);
  t.phase_total = 1400;
  o.require(top_decile(t).size() == 140, "top_decile(1400) != 140");
  auto cal = ExclusionCalendar::study_default();
  o.require(cal.scale_factor(10) == Rational{7, 6}, "week 10 factor");
  o.require(cal.scale_factor(17) == Rational{7, 5}, "week 17 factor");
  o.require(cal.scale_factor(18) == Rational{7, 5}, "week 18 factor");
  o.require(scale_week(600, 10, cal) == 700 && scale_week(500, 17, cal) == 700 && scale_week(500, 18, cal) == 700,
            "scaled totals");
  for (int w = 1; w <= 18; ++w) {
    if (w != 10 && w != 17 && w != 18) o.require(cal.scale_factor(w) == Rational{1, 1}, "full week scaled");
  }
  for (std::size_t n = 1; n <= 10000; ++n) {
    auto c = classify_count(n);
    auto want = n == 1 ? MobilityClass::NoMobility
                : n <= 5 ? MobilityClass::Low
                : n <= 10 ? MobilityClass::Medium
                          : MobilityClass::High;
    o.require(c == want, "class of " + std::to_string(n));
  }
  o.require(kDefaultActivityThreshold == 50000.0, "activity threshold");
  o.require(kDefaultVariationK == 15, "variation k");
  VariationParams vp;
  o.require(vp.threshold == 50000.0 && vp.k == 15, "report defaults");
  o.detail = o.pass ? "140 of 1400, 7/6 and 7/5 exact, classes 1..10000, 50000, k=15" : o.detail;
  return o;
}

Scenario planted_scenario() {
  ScenarioConfig c;
  c.seed = 2020;
  c.n_users = 10000;
  c.n_days = 30;
  c.start = make_date(2020, 3, 6);
  c.n_antennas = 200;
  c.out_antennas = 10;
  c.downtown.count = 12;
  c.downtown.suppression = 0.2;
  return generate(c);
}

Outcome planted_recovery(const Scenario& s, double gen_secs) {
  Outcome o;
  auto t0 = Clock::now();
  auto cube = build_cube(s.aggregate, s.registry);
  auto pre = top_decile(phase_totals(cube, Phase::PreLockdown));
  auto during = top_decile(phase_totals(cube, Phase::DuringLockdown));
  auto d = displacement(pre, during);
  double secs = gen_secs + seconds_since(t0);
  std::set<AntennaIndex> planted(s.truth.planted_dropped.begin(), s.truth.planted_dropped.end());
  std::size_t found = 0, false_pos = 0;
  for (auto id : d.dropped) (planted.count(id) ? found : false_pos)++;
  o.require(planted.size() == 12, "scenario did not plant 12 antennas");
  o.require(found == 12, "recovered " + std::to_string(found) + " of 12");
  o.require(false_pos == 0, std::to_string(false_pos) + " unchanged antennas reported dropped");
  o.require(secs < 30, "runtime over 30 s");
  o.detail = (o.pass ? "" : o.detail + "; ") + std::to_string(found) + "/12 recovered, " +
             std::to_string(false_pos) + " false positives, " + std::to_string(s.individual.size()) +
             " records" + fmt(", %.1f s", secs);
  return o;
}

Outcome class_mix() {
  Outcome o;
  // Day-of-week and lockdown multipliers make each day's population a sample.
  ScenarioConfig c;
  c.seed = 5;
  c.n_users = 10000;
  c.n_days = 30;
  c.start = make_date(2020, 3, 6);
  c.n_antennas = 200;
  c.class_mix = {0.40, 0.41, 0.15, 0.04};
  c.dow_multipliers = {0.55, 0.95, 1.0, 1.0, 0.9, 0.85, 0.6};
  c.phase_multipliers = {1.0, 0.7, 0.85};
  auto s = generate(c);
  const double mix[4] = {40, 41, 15, 4};
  double worst = 0;
  auto counts = daily_class_counts(s.individual);
  for (const auto& [day, c] : counts) {
    auto sh = class_shares(c);
    for (int k = 0; k < 4; ++k) worst = std::max(worst, std::fabs(sh[static_cast<std::size_t>(k)] - mix[k]));
  }
  o.require(counts.size() == 30, "expected 30 days");
  o.require(worst <= 1.5, fmt("worst deviation %.3f points", worst));
  o.detail = (o.pass ? "" : o.detail + "; ") + std::to_string(counts.size()) + " days, " +
             std::to_string(counts.begin()->second.users()) + " users on the first" +
             fmt(", worst deviation %.3f points (limit 1.5)", worst);
  return o;
}

Outcome statistical_identities() {
  Outcome o;
  Rng rng(6);
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    auto n = static_cast<std::size_t>(rng.uniform_int(3, 60));
    std::vector<double> x(n), neg(n), aff(n), y(n), yaff(n);
    double a = 0.01 + 100 * rng.uniform01();
    double b = 1000 * (rng.uniform01() - 0.5);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = 1e4 * rng.uniform01();
      y[i] = 1e4 * rng.uniform01();
      neg[i] = -x[i];
      aff[i] = a * x[i] + b;
      yaff[i] = a * y[i] + b;
    }
    worst = std::max(worst, std::fabs(pearson(x, x) - 1.0));
    worst = std::max(worst, std::fabs(pearson(x, neg) + 1.0));
    worst = std::max(worst, std::fabs(pearson(x, aff) - 1.0));
    worst = std::max(worst, std::fabs(pearson(aff, yaff) - pearson(x, y)));
  }
  o.require(worst <= 1e-12, fmt("pearson deviation %.3g", worst));
  int days = 0;
  for (Date d = kStudyStart - std::chrono::days{40}; d < kStudyEnd + std::chrono::days{40};
       d += std::chrono::days{1}) {
    bool inside = d >= kStudyStart && d < kStudyEnd;
    int phases = 0;
    for (auto p : kAllPhases) phases += phase_range(p).contains(d);
    o.require(phases == (inside ? 1 : 0), "phase partition at " + format_date(d));
    if (!inside) continue;
    ++days;
    int w = week_of(d);
    int weeks = 0;
    for (int k = 1; k <= 18; ++k) weeks += week_range(k).contains(d);
    o.require(weeks == 1 && week_range(w).contains(d), "week partition at " + format_date(d));
    o.require(phase_range(phase_of(d)).contains(d), "phase_of at " + format_date(d));
  }
  o.detail = (o.pass ? "" : o.detail + "; ") + fmt("worst pearson deviation %.2g, ", worst) +
             std::to_string(days) + " days partitioned";
  return o;
}

Outcome service_contract() {
  Outcome o;
  testing::TempDir tmp;
  auto s = generate(testing::golden_config());
  auto built = std::make_shared<const Dataset>(assemble_dataset(
      s.regions, s.registry, s.aggregate, s.individual, CaseSeries::from_records(s.cases),
      ExclusionCalendar::study_default()));
  write_dataset(*built, tmp.file("cube"));
  auto loaded = std::make_shared<const Dataset>(load_dataset(tmp.file("cube")));

  const std::string body = R"({"select":"distinct_users","where":{"regions":["CE","SC"]},"group_by":"week"})";
  std::string sequential;
  std::size_t identical = 0;
  {
    testing::LiveServer live(loaded);
    httplib::Client c("127.0.0.1", live.port());
    auto r = c.Post("/api/query", body, "application/json");
    if (r && r->status == 200) sequential = r->body;
    std::vector<std::future<std::string>> fs;
    for (int i = 0; i < 64; ++i) {
      fs.push_back(std::async(std::launch::async, [&] {
        httplib::Client cc("127.0.0.1", live.port());
        auto res = cc.Post("/api/query", body, "application/json");
        return res && res->status == 200 ? res->body : std::string();
      }));
    }
    for (auto& f : fs) identical += !sequential.empty() && f.get() == sequential;
  }
  o.require(!sequential.empty(), "sequential request failed");
  o.require(sequential == to_json(run_query(*built, nlohmann::json::parse(body))).dump(), "not canonical");
  o.require(identical == 64, std::to_string(64 - identical) + " concurrent responses differ");

  Api before(built), after(loaded);
  std::size_t same = 0;
  auto requests = testing::endpoint_requests();
  for (const auto& rq : requests) {
    auto a = before.handle(rq.method, rq.path, rq.params, rq.body);
    auto b = after.handle(rq.method, rq.path, rq.params, rq.body);
    o.require(a.status == 200, rq.path + " answered " + std::to_string(a.status));
    bool eq = a.status == b.status && a.body == b.body && a.content_type == b.content_type;
    o.require(eq, rq.path + " changed after snapshot round-trip");
    same += eq;
  }
  o.detail = (o.pass ? "" : o.detail + "; ") + std::to_string(identical) + "/64 identical, " +
             std::to_string(same) + "/" + std::to_string(requests.size()) + " endpoints preserved";
  return o;
}

Outcome end_to_end() {
  Outcome o;
  std::size_t files = 0;
  std::map<std::string, std::string> first;
  for (int run = 0; run < 2; ++run) {
    testing::TempDir tmp;
    std::vector<std::string> failures;
    auto out = testing::cli_pipeline(tmp, failures);
    for (const auto& f : failures) o.require(false, f);
    if (run == 0) {
      first = out;
      for (const auto& [name, text] : out) {
        bool eq = text == testing::golden_text(name);
        o.require(eq, name + " differs from golden");
        files += eq;
      }
    } else {
      o.require(out == first, "second run differs from first");
    }
  }
  o.detail = (o.pass ? "" : o.detail + "; ") + std::to_string(files) + "/" + std::to_string(first.size()) +
             " files byte-exact, stable over 2 runs";
  return o;
}

template <class F>
Outcome guarded(F f) {
  try {
    return f();
  } catch (const std::exception& e) {
    return Outcome{false, std::string("exception: ") + e.what()};
  }
}

}  // namespace

int main() {
  int failed = 0;
  auto report = [&](int id, const char* name, const Outcome& o) {
    std::printf("%s  [%d] %s: %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  };
  report(1, "datacube oracle equivalence", guarded(oracle_equivalence));
  report(2, "conservation", guarded(conservation));
  report(3, "fixed constants", guarded(fixed_constants));

  auto t0 = Clock::now();
  std::optional<Scenario> planted;
  std::string gen_error;
  try {
    planted = planted_scenario();
  } catch (const std::exception& e) {
    gen_error = e.what();
  }
  double gen_secs = seconds_since(t0);
  if (planted) {
    report(4, "planted downtown recovery", guarded([&] { return planted_recovery(*planted, gen_secs); }));
  } else {
    report(4, "planted downtown recovery", Outcome{false, "generation failed: " + gen_error});
  }
  report(5, "class-mix recovery", guarded(class_mix));
  report(6, "statistical identities", guarded(statistical_identities));
  report(7, "service contract", guarded(service_contract));
  report(8, "end-to-end golden pipeline", guarded(end_to_end));
  std::printf("%d of 8 criteria passed\n", 8 - failed);
  return failed ? 1 : 0;
}
