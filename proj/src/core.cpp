#include "mobiscope/core.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <numbers>

namespace mobiscope {

namespace {

template <typename Int>
bool parse_fixed(std::string_view text, std::size_t pos, std::size_t len, Int& out) {
  if (pos + len > text.size()) return false;
  auto first = text.data() + pos;
  auto [ptr, ec] = std::from_chars(first, first + len, out);
  return ec == std::errc{} && ptr == first + len;
}

}  // namespace

Date make_date(int y, unsigned m, unsigned d) {
  std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                  std::chrono::day{d}};
  if (!ymd.ok()) throw Error("invalid calendar date");
  return Date{ymd};
}

Date parse_date(std::string_view text) {
  int y = 0;
  unsigned m = 0;
  unsigned d = 0;
  if (text.size() != 10 || text[4] != '-' || text[7] != '-' || !parse_fixed(text, 0, 4, y) ||
      !parse_fixed(text, 5, 2, m) || !parse_fixed(text, 8, 2, d)) {
    throw Error("malformed date '" + std::string(text) + "'");
  }
  return make_date(y, m, d);
}

std::string format_date(Date d) {
  std::chrono::year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

int weekday(Date d) { return static_cast<int>(std::chrono::weekday{d}.c_encoding()); }

Date TimeBin::day() const {
  auto days = index >= 0 ? index / kBinsPerDay : -((-index + kBinsPerDay - 1) / kBinsPerDay);
  return kStudyStart + std::chrono::days{days};
}

std::int64_t parse_timestamp_seconds(std::string_view text) {
  if (text.size() != 19 || text[10] != 'T' || text[13] != ':' || text[16] != ':') {
    throw Error("malformed timestamp '" + std::string(text) + "'");
  }
  Date d = parse_date(text.substr(0, 10));
  int hh = 0;
  int mm = 0;
  int ss = 0;
  if (!parse_fixed(text, 11, 2, hh) || !parse_fixed(text, 14, 2, mm) ||
      !parse_fixed(text, 17, 2, ss) || hh > 23 || mm > 59 || ss > 59) {
    throw Error("malformed timestamp '" + std::string(text) + "'");
  }
  return (d - kStudyStart).count() * 86400 + hh * 3600 + mm * 60 + ss;
}

std::string format_timestamp(TimeBin bin) {
  int minute = bin.minute_of_day();
  char buf[32];
  std::snprintf(buf, sizeof buf, "%sT%02d:%02d:00", format_date(bin.day()).c_str(),
                minute / 60, minute % 60);
  return buf;
}

DateRange phase_range(Phase p) {
  switch (p) {
    case Phase::PreLockdown:
      return {kStudyStart, make_date(2020, 3, 16)};
    case Phase::DuringLockdown:
      return {make_date(2020, 3, 16), make_date(2020, 6, 1)};
    case Phase::PostLockdown:
      return {make_date(2020, 6, 1), kStudyEnd};
  }
  throw Error("unknown phase");
}

Phase phase_of(Date d) {
  for (Phase p : kAllPhases) {
    if (phase_range(p).contains(d)) return p;
  }
  throw OutOfRange("date " + format_date(d) + " outside the study window");
}

std::string_view phase_name(Phase p) {
  switch (p) {
    case Phase::PreLockdown:
      return "pre";
    case Phase::DuringLockdown:
      return "during";
    case Phase::PostLockdown:
      return "post";
  }
  return "?";
}

std::optional<Phase> parse_phase(std::string_view text) {
  if (text == "pre" || text == "PreLockdown") return Phase::PreLockdown;
  if (text == "during" || text == "DuringLockdown") return Phase::DuringLockdown;
  if (text == "post" || text == "PostLockdown") return Phase::PostLockdown;
  return std::nullopt;
}

int week_of(Date d) {
  if (d < kStudyStart) throw OutOfRange("date " + format_date(d) + " before study start");
  return static_cast<int>((d - kStudyStart).count() / 7) + 1;
}

DateRange week_range(int week) {
  if (week < 1) throw OutOfRange("week index must be >= 1");
  Date start = kStudyStart + std::chrono::days{7 * (week - 1)};
  return {start, start + std::chrono::days{7}};
}

ExclusionCalendar::ExclusionCalendar(std::set<Date> excluded, std::optional<DateRange> coverage)
    : excluded_(std::move(excluded)), coverage_(coverage) {}

ExclusionCalendar ExclusionCalendar::study_default() {
  return ExclusionCalendar({make_date(2020, 5, 5), make_date(2020, 6, 21), make_date(2020, 6, 22)},
                           DateRange{kStudyStart, kStudyEnd});
}

ExclusionCalendar ExclusionCalendar::none() { return ExclusionCalendar({}, std::nullopt); }

bool ExclusionCalendar::is_present(Date d) const {
  if (coverage_ && !coverage_->contains(d)) return false;
  return !is_excluded(d);
}

int ExclusionCalendar::days_present(int week) const {
  auto range = week_range(week);
  int n = 0;
  for (Date d = range.start; d < range.end; d += std::chrono::days{1}) {
    if (is_present(d)) ++n;
  }
  return n;
}

Rational ExclusionCalendar::scale_factor(int week) const {
  int present = days_present(week);
  if (present == 0) return {0, 1};
  return {7, present};
}

ExclusionCalendar ExclusionCalendar::with_coverage(std::optional<DateRange> coverage) const {
  return ExclusionCalendar(excluded_, coverage);
}

MercatorPoint to_mercator(double lat, double lon) {
  if (!(std::abs(lat) < kMaxMercatorLat)) throw OutOfRange("latitude outside Mercator domain");
  if (!(lon >= -180.0 && lon <= 180.0)) throw OutOfRange("longitude outside [-180, 180]");
  double lat_rad = lat * std::numbers::pi / 180.0;
  double x = (lon + 180.0) / 360.0;
  double y = (1.0 - std::log(std::tan(std::numbers::pi / 4.0 + lat_rad / 2.0)) / std::numbers::pi) /
             2.0;
  return {x, y};
}

int QuadPath::digit(int level) const {
  int shift = depth_ - 1 - level;
  int east = static_cast<int>((x_ >> shift) & 1u);
  int south = static_cast<int>((y_ >> shift) & 1u);
  return south * 2 + east;
}

std::vector<int> QuadPath::digits() const {
  std::vector<int> out(static_cast<std::size_t>(depth_));
  for (int i = 0; i < depth_; ++i) out[static_cast<std::size_t>(i)] = digit(i);
  return out;
}

QuadPath QuadPath::prefix(int depth) const {
  if (depth < 0 || depth > depth_) throw OutOfRange("prefix depth out of range");
  int shift = depth_ - depth;
  return QuadPath(x_ >> shift, y_ >> shift, depth);
}

bool QuadPath::is_prefix_of(const QuadPath& other) const {
  return depth_ <= other.depth_ && other.prefix(depth_) == *this;
}

QuadPath quad_path(double lat, double lon, int depth) {
  if (depth < 0 || depth > kMaxQuadDepth) throw OutOfRange("quadtree depth must be in [0, 25]");
  auto p = to_mercator(lat, lon);
  // Scaling by a power of two is exact, so each level's bit equals the
  // ">= 0.5 of the remaining fraction" rule.
  double cells = std::ldexp(1.0, depth);
  auto clamp_cell = [&](double v) {
    double c = std::floor(v * cells);
    if (c < 0) c = 0;
    if (c > cells - 1) c = cells - 1;
    return static_cast<std::uint32_t>(c);
  };
  return QuadPath(clamp_cell(p.x), clamp_cell(p.y), depth);
}

}  // namespace mobiscope
