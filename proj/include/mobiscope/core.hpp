#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mobiscope {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Date or time outside the supported study window.
class OutOfRange : public Error {
 public:
  using Error::Error;
};

using Date = std::chrono::sys_days;

inline constexpr Date kStudyStart{std::chrono::year{2020} / 3 / 1};
// Exclusive. Data runs through July 2.
inline constexpr Date kStudyEnd{std::chrono::year{2020} / 7 / 3};

inline constexpr std::int64_t kBinSeconds = 300;
inline constexpr std::int64_t kBinsPerDay = 86400 / kBinSeconds;
inline constexpr std::int64_t kBinsPerHour = 3600 / kBinSeconds;

Date make_date(int y, unsigned m, unsigned d);

/// Parses `YYYY-MM-DD`. Throws Error on malformed input.
Date parse_date(std::string_view text);
std::string format_date(Date d);

/// Day of week with 0 = Sunday.
int weekday(Date d);

/// Half-open range of days.
struct DateRange {
  Date start;
  Date end;

  bool contains(Date d) const { return d >= start && d < end; }
  int days() const { return static_cast<int>((end - start).count()); }
  bool empty() const { return end <= start; }
};

/// Index of a 5-minute interval counted from 2020-03-01T00:00:00 local time.
struct TimeBin {
  std::int64_t index = 0;

  static TimeBin of_day(Date d) { return TimeBin{(d - kStudyStart).count() * kBinsPerDay}; }
  std::int64_t start_seconds() const { return index * kBinSeconds; }
  Date day() const;
  int minute_of_day() const { return static_cast<int>((index % kBinsPerDay) * 5); }

  auto operator<=>(const TimeBin&) const = default;
};

/// Parses `YYYY-MM-DDTHH:MM:SS` into seconds since the study epoch. The value
/// may be negative or unaligned; callers validate.
std::int64_t parse_timestamp_seconds(std::string_view text);
std::string format_timestamp(TimeBin bin);

enum class Phase { PreLockdown, DuringLockdown, PostLockdown };

inline constexpr std::array<Phase, 3> kAllPhases{Phase::PreLockdown, Phase::DuringLockdown,
                                                 Phase::PostLockdown};

DateRange phase_range(Phase p);
Phase phase_of(Date d);
std::string_view phase_name(Phase p);
/// Accepts "pre", "during", "post" or the full enum names.
std::optional<Phase> parse_phase(std::string_view text);

/// Sunday-start weeks, 2020-03-01 opens week 1.
int week_of(Date d);
DateRange week_range(int week);

/// A small exact fraction, used for week scale factors.
struct Rational {
  std::int64_t num = 1;
  std::int64_t den = 1;

  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  bool operator==(const Rational& o) const { return num * o.den == o.num * den; }
};

/// Days dropped from weekly aggregates plus the window the corpus covers.
/// Weeks are rescaled to seven days by 7 / (days present).
class ExclusionCalendar {
 public:
  ExclusionCalendar(std::set<Date> excluded, std::optional<DateRange> coverage);

  /// The three data-loss days over the full study window.
  static ExclusionCalendar study_default();
  /// No exclusions, unbounded coverage; every scale factor is 1.
  static ExclusionCalendar none();

  bool is_excluded(Date d) const { return excluded_.count(d) > 0; }
  /// True when `d` is covered and not excluded.
  bool is_present(Date d) const;
  int days_present(int week) const;
  /// 7 / days_present(week); 0/1 when the week has no present day.
  Rational scale_factor(int week) const;

  const std::set<Date>& excluded_days() const { return excluded_; }
  const std::optional<DateRange>& coverage() const { return coverage_; }
  ExclusionCalendar with_coverage(std::optional<DateRange> coverage) const;

 private:
  std::set<Date> excluded_;
  std::optional<DateRange> coverage_;
};

inline constexpr int kMaxQuadDepth = 25;
inline constexpr double kMaxMercatorLat = 85.05112878;

/// Web-Mercator normalized coordinates in [0,1)^2.
struct MercatorPoint {
  double x;
  double y;
};

MercatorPoint to_mercator(double lat, double lon);

/// Quadrant digits from the root down: 0=NW, 1=NE, 2=SW, 3=SE.
class QuadPath {
 public:
  QuadPath() = default;
  QuadPath(std::uint32_t cell_x, std::uint32_t cell_y, int depth)
      : x_(cell_x), y_(cell_y), depth_(depth) {}

  int depth() const { return depth_; }
  int digit(int level) const;
  std::vector<int> digits() const;
  QuadPath prefix(int depth) const;
  bool is_prefix_of(const QuadPath& other) const;
  std::uint32_t cell_x() const { return x_; }
  std::uint32_t cell_y() const { return y_; }

  bool operator==(const QuadPath&) const = default;

 private:
  std::uint32_t x_ = 0;
  std::uint32_t y_ = 0;
  int depth_ = 0;
};

QuadPath quad_path(double lat, double lon, int depth);

}  // namespace mobiscope
