#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "mobiscope/cases.hpp"
#include "mobiscope/core.hpp"
#include "mobiscope/ingest.hpp"
#include "mobiscope/mobility.hpp"

namespace mobiscope {

/// splitmix64 generator. Every draw is defined here rather than through
/// <random> distributions, so streams match across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next();
  /// Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  /// Uniform double in [0, 1).
  double uniform01();

  static std::uint64_t mix(std::uint64_t a, std::uint64_t b);

 private:
  std::uint64_t state_;
};

struct RegionLayout {
  int rows = 3;
  int cols = 4;
  double min_lat = -23.05;
  double max_lat = -22.75;
  double min_lon = -43.70;
  double max_lon = -43.10;
  std::vector<std::string> codes{"CE", "CO", "SC", "GU", "BA", "TI", "ZN", "ZS", "JA", "MA", "IR", "PE"};
  std::vector<std::string> spi{"high", "high", "low", "fair", "good", "fair", "low", "high", "low", "fair", "good", "low"};
};

struct DowntownPlant {
  int count = 12;
  std::string region = "CE";
  /// Records each visit leaves outside lockdown.
  int records_per_visit = 5;
  /// Traffic multiplier applied during lockdown.
  double suppression = 0.2;
  double attraction = 1.5;
};

struct ScenarioConfig {
  std::uint64_t seed = 42;
  int n_users = 1000;
  int n_antennas = 200;
  int out_antennas = 10;
  Date start = make_date(2020, 4, 5);
  int n_days = 14;
  /// no / low / medium / high.
  std::array<double, 4> class_mix{0.40, 0.41, 0.15, 0.04};
  std::array<double, 3> phase_multipliers{1.0, 1.0, 1.0};
  /// Sunday first.
  std::array<double, 7> dow_multipliers{1, 1, 1, 1, 1, 1, 1};
  RegionLayout regions;
  bool plant_downtown = true;
  DowntownPlant downtown;
  int min_records_per_visit = 1;
  int max_records_per_visit = 2;
  std::uint64_t case_peak = 4000;

  /// Throws Error on infeasible or inconsistent settings.
  void validate() const;
  static ScenarioConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct GroundTruth {
  std::vector<std::string> user_ids;
  std::vector<MobilityClass> user_classes;
  std::map<Date, std::uint64_t> daily_events;
  std::map<Date, std::uint64_t> daily_records;
  std::map<Date, std::uint64_t> daily_active_users;
  std::vector<AntennaIndex> planted_dropped;
  std::uint64_t total_records = 0;

  std::array<std::uint64_t, 4> class_counts() const;
  nlohmann::json to_json(const AntennaRegistry& registry) const;
};

struct Scenario {
  ScenarioConfig config;
  std::string regions_geojson;
  RegionSet regions;
  AntennaRegistry registry;
  std::vector<IndividualRecord> individual;
  std::vector<AggregateRecord> aggregate;
  std::vector<CaseRecord> cases;
  GroundTruth truth;
};

/// Deterministic for a given config.
Scenario generate(const ScenarioConfig& config);

/// Writes individual.csv, aggregate.csv, antennas.csv, regions.geojson,
/// cases.csv and ground_truth.json into `dir` (created if missing).
void write_scenario(const Scenario& s, const std::string& dir);

}  // namespace mobiscope
