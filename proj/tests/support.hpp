#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <unistd.h>

#include "mobiscope/ingest.hpp"
#include "mobiscope/synthgen.hpp"

namespace testing {

// Two square regions side by side: CE west of -43.2, SC east of it.
inline const char* kTwoRegions = R"({"type":"FeatureCollection","features":[
{"type":"Feature","properties":{"code":"CE","name":"Centro","spi":"high"},
 "geometry":{"type":"Polygon","coordinates":[[[-43.4,-23.1],[-43.2,-23.1],[-43.2,-22.8],[-43.4,-22.8],[-43.4,-23.1]]]}},
{"type":"Feature","properties":{"code":"SC","name":"Santa Cruz","spi":"low"},
 "geometry":{"type":"Polygon","coordinates":[[[-43.2,-23.1],[-43.0,-23.1],[-43.0,-22.8],[-43.2,-22.8],[-43.2,-23.1]]]}}
]})";

inline mobiscope::RegionSet two_regions() { return mobiscope::RegionSet::from_geojson(kTwoRegions); }

/// Three antennas in CE, two in SC, one outside.
inline mobiscope::AntennaRegistry small_registry(const mobiscope::RegionSet& regions) {
  std::istringstream in(
      "antenna_id,lat,lon\n"
      "A,-23.003431,-43.342206\n"
      "B,-22.950000,-43.300000\n"
      "C,-22.900000,-43.250000\n"
      "D,-23.050000,-43.150000\n"
      "E,-22.850000,-43.050000\n"
      "F,-20.837028,-43.563111\n");
  return mobiscope::AntennaRegistry::from_csv(in, regions);
}

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("mobiscope_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

/// Small seeded scenario shared by pipeline, server and golden tests.
inline mobiscope::ScenarioConfig small_config() {
  mobiscope::ScenarioConfig c;
  c.seed = 7;
  c.n_users = 300;
  c.n_antennas = 60;
  c.out_antennas = 4;
  c.start = mobiscope::make_date(2020, 3, 8);
  c.n_days = 21;
  c.downtown.count = 6;
  return c;
}

}  // namespace testing
