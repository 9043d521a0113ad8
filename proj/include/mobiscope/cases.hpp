#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "mobiscope/core.hpp"
#include "mobiscope/ingest.hpp"

namespace mobiscope {

inline constexpr std::string_view kCasesHeader = "date,region_code,active,recovered,deaths,total";

/// One region-day report. recovered/deaths/total are cumulative.
struct CaseRecord {
  Date date;
  std::string region;
  std::uint64_t active = 0;
  std::uint64_t recovered = 0;
  std::uint64_t deaths = 0;
  std::uint64_t total = 0;

  bool operator==(const CaseRecord&) const = default;
};

CaseRecord parse_case_record(std::string_view line, const std::set<std::string>& known_regions,
                             std::size_t line_no = 0);
std::string format_case_record(const CaseRecord& r);

struct CaseSummary {
  std::uint64_t active = 0;
  std::uint64_t recovered = 0;
  std::uint64_t deaths = 0;
  std::uint64_t total = 0;
  std::vector<std::string> warnings;
};

struct WeeklyCases {
  std::vector<int> weeks;
  std::vector<double> values;
  /// A requested day had no report and the last cumulative value was carried.
  bool carried_forward = false;
};

/// Per-region daily case series, immutable once loaded.
class CaseSeries {
 public:
  CaseSeries() = default;
  /// Validates record order independence, duplicates and monotonicity.
  static CaseSeries from_records(std::vector<CaseRecord> records);
  static CaseSeries from_csv(std::istream& in, const std::set<std::string>& known_regions);
  static CaseSeries from_file(const std::string& path, const std::set<std::string>& known_regions);

  std::vector<std::string> regions() const;
  const std::map<Date, CaseRecord>* region(const std::string& code) const;

  /// active/total from the last in-range report, recovered/deaths as
  /// in-range deltas against the last report before the range.
  CaseSummary summary(std::span<const std::string> regions, DateRange range) const;

  /// Per-week delta of cumulative total; weeks before the first report use 0.
  WeeklyCases weekly_new_cases(const std::string& region, int first_week, int last_week) const;

  void write_csv(std::ostream& out) const;

 private:
  std::map<std::string, std::map<Date, CaseRecord>> series_;
};

}  // namespace mobiscope
