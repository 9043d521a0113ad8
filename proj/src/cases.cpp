#include "mobiscope/cases.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>

namespace mobiscope {

namespace {

std::uint64_t parse_count(std::string_view s, std::size_t line) {
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || p != s.data() + s.size()) {
    throw ParseError(ParseErrorCode::Malformed, line, "bad count '" + std::string(s) + "'");
  }
  if (v < 0) throw ParseError(ParseErrorCode::NegativeCount, line, "negative count");
  return static_cast<std::uint64_t>(v);
}

// Value of the last report on or before `d`, 0 before the first.
std::uint64_t cumulative_total(const std::map<Date, CaseRecord>& s, Date d) {
  auto it = s.upper_bound(d);
  if (it == s.begin()) return 0;
  return std::prev(it)->second.total;
}

}  // namespace

CaseRecord parse_case_record(std::string_view line, const std::set<std::string>& known_regions,
                             std::size_t line_no) {
  auto f = detail::split_csv(detail::trim(line));
  if (f.size() != 6) throw ParseError(ParseErrorCode::Malformed, line_no, "expected 6 fields");
  CaseRecord r;
  try {
    r.date = parse_date(f[0]);
  } catch (const Error& e) {
    throw ParseError(ParseErrorCode::Malformed, line_no, e.what());
  }
  r.region = std::string(f[1]);
  r.active = parse_count(f[2], line_no);
  r.recovered = parse_count(f[3], line_no);
  r.deaths = parse_count(f[4], line_no);
  r.total = parse_count(f[5], line_no);
  if (!known_regions.count(r.region)) {
    throw ParseError(ParseErrorCode::UnknownRegion, line_no, "unknown region '" + r.region + "'");
  }
  if (r.active + r.recovered + r.deaths != r.total) {
    throw ParseError(ParseErrorCode::TotalMismatch, line_no,
                     "total != active + recovered + deaths");
  }
  return r;
}

std::string format_case_record(const CaseRecord& r) {
  return format_date(r.date) + ',' + r.region + ',' + std::to_string(r.active) + ',' +
         std::to_string(r.recovered) + ',' + std::to_string(r.deaths) + ',' +
         std::to_string(r.total);
}

CaseSeries CaseSeries::from_records(std::vector<CaseRecord> records) {
  CaseSeries s;
  for (auto& r : records) {
    auto& region = s.series_[r.region];
    if (!region.try_emplace(r.date, std::move(r)).second) {
      throw ParseError(ParseErrorCode::Malformed, 0,
                       "duplicate report for " + r.region + " on " + format_date(r.date));
    }
  }
  for (const auto& [code, days] : s.series_) {
    const CaseRecord* prev = nullptr;
    for (const auto& [d, r] : days) {
      if (prev && (r.recovered < prev->recovered || r.deaths < prev->deaths)) {
        throw ParseError(ParseErrorCode::NonMonotonic, 0,
                         "cumulative counts decrease for " + code + " on " + format_date(d));
      }
      prev = &r;
    }
  }
  return s;
}

CaseSeries CaseSeries::from_csv(std::istream& in, const std::set<std::string>& known_regions) {
  std::vector<CaseRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto view = detail::trim(line);
    if (line_no == 1) {
      if (view != kCasesHeader) {
        throw ParseError(ParseErrorCode::Malformed, line_no, "expected cases header");
      }
      continue;
    }
    if (view.empty()) continue;
    records.push_back(parse_case_record(view, known_regions, line_no));
  }
  return from_records(std::move(records));
}

CaseSeries CaseSeries::from_file(const std::string& path,
                                 const std::set<std::string>& known_regions) {
  std::ifstream in(path);
  if (!in) throw ParseError(ParseErrorCode::Malformed, 0, "cannot open " + path);
  return from_csv(in, known_regions);
}

std::vector<std::string> CaseSeries::regions() const {
  std::vector<std::string> out;
  for (const auto& [code, _] : series_) out.push_back(code);
  return out;
}

const std::map<Date, CaseRecord>* CaseSeries::region(const std::string& code) const {
  auto it = series_.find(code);
  return it == series_.end() ? nullptr : &it->second;
}

CaseSummary CaseSeries::summary(std::span<const std::string> regions, DateRange range) const {
  CaseSummary out;
  if (regions.empty()) {
    out.warnings.push_back("empty region selection");
    return out;
  }
  for (const auto& code : regions) {
    const auto* s = region(code);
    if (!s) {
      out.warnings.push_back("no case data for region " + code);
      continue;
    }
    auto last = s->lower_bound(range.end);
    if (last == s->begin() || std::prev(last)->first < range.start) {
      out.warnings.push_back("no case report for " + code + " in range");
      continue;
    }
    const auto& r = std::prev(last)->second;
    auto before = s->lower_bound(range.start);
    std::uint64_t base_rec = 0;
    std::uint64_t base_deaths = 0;
    if (before != s->begin()) {
      base_rec = std::prev(before)->second.recovered;
      base_deaths = std::prev(before)->second.deaths;
    }
    out.active += r.active;
    out.total += r.total;
    out.recovered += r.recovered - base_rec;
    out.deaths += r.deaths - base_deaths;
  }
  return out;
}

WeeklyCases CaseSeries::weekly_new_cases(const std::string& code, int first_week,
                                         int last_week) const {
  WeeklyCases out;
  const auto* s = region(code);
  for (int w = first_week; w <= last_week; ++w) {
    out.weeks.push_back(w);
    if (!s || s->empty()) {
      out.values.push_back(0);
      out.carried_forward = true;
      continue;
    }
    auto range = week_range(w);
    Date last_day = range.end - std::chrono::days{1};
    Date prev_day = range.start - std::chrono::days{1};
    auto now = cumulative_total(*s, last_day);
    auto before = cumulative_total(*s, prev_day);
    out.values.push_back(static_cast<double>(now) - static_cast<double>(before));
    Date first_report = s->begin()->first;
    for (Date d = range.start; d < range.end; d += std::chrono::days{1}) {
      if (d >= first_report && !s->count(d)) out.carried_forward = true;
    }
  }
  return out;
}

void CaseSeries::write_csv(std::ostream& out) const {
  out << kCasesHeader << '\n';
  for (const auto& [code, days] : series_) {
    for (const auto& [d, r] : days) out << format_case_record(r) << '\n';
  }
}

}  // namespace mobiscope
