#include "mobiscope/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

namespace mobiscope {

double AntennaTrafficTable::share(AntennaIndex id) const {
  if (phase_total == 0) return 0.0;
  return 100.0 * static_cast<double>(totals.at(id)) / static_cast<double>(phase_total);
}

AntennaTrafficTable phase_totals(std::span<const AggregateRecord> records, std::size_t antenna_count,
                                 Phase phase, const ExclusionCalendar& cal) {
  AntennaTrafficTable t;
  t.phase = phase;
  t.totals.assign(antenna_count, 0);
  auto range = phase_range(phase);
  for (const auto& r : records) {
    auto day = r.bin.day();
    if (!range.contains(day) || cal.is_excluded(day)) continue;
    t.totals.at(r.antenna) += r.connections;
    t.phase_total += r.connections;
  }
  if (t.phase_total == 0) {
    throw AnalyticsError("no traffic in phase " + std::string(phase_name(phase)));
  }
  return t;
}

AntennaTrafficTable phase_totals(const DataCube& cube, Phase phase, const ExclusionCalendar& cal) {
  AntennaTrafficTable t;
  t.phase = phase;
  t.totals.assign(cube.antennas().size(), 0);
  auto range = phase_range(phase);
  // Query each maximal run of non-excluded days.
  Date run_start = range.start;
  auto flush = [&](Date end) {
    if (end <= run_start) return;
    Query q;
    q.time = TimeInterval{TimeBin::of_day(run_start), TimeBin::of_day(end)};
    q.group_by = GroupBy::Antenna;
    auto res = cube.query(q);
    for (std::size_t i = 0; i < res.keys.size(); ++i) {
      t.totals.at(std::stoul(res.keys[i])) += res.values[i];
      t.phase_total += res.values[i];
    }
  };
  for (Date d = range.start; d < range.end; d += std::chrono::days{1}) {
    if (cal.is_excluded(d)) {
      flush(d);
      run_start = d + std::chrono::days{1};
    }
  }
  flush(range.end);
  if (t.phase_total == 0) {
    throw AnalyticsError("no traffic in phase " + std::string(phase_name(phase)));
  }
  return t;
}

std::vector<AntennaIndex> top_decile(const AntennaTrafficTable& table, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw AnalyticsError("fraction must be in (0, 1]");
  auto n = table.totals.size();
  auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
  k = std::min(k, n);
  std::vector<AntennaIndex> ids(n);
  std::iota(ids.begin(), ids.end(), 0u);
  std::stable_sort(ids.begin(), ids.end(), [&](AntennaIndex a, AntennaIndex b) {
    return table.totals[a] > table.totals[b];
  });
  ids.resize(k);
  return ids;
}

Displacement displacement(std::span<const AntennaIndex> top_a, std::span<const AntennaIndex> top_b) {
  std::set<AntennaIndex> a(top_a.begin(), top_a.end());
  std::set<AntennaIndex> b(top_b.begin(), top_b.end());
  Displacement d;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(d.dropped));
  std::set_difference(b.begin(), b.end(), a.begin(), a.end(), std::back_inserter(d.emergent));
  return d;
}

std::vector<double> HeatmapMatrix::column_series(std::size_t col) const {
  std::vector<double> out(weeks.size());
  for (std::size_t r = 0; r < weeks.size(); ++r) out[r] = at(r, col);
  return out;
}

double HeatmapMatrix::row_sum(std::size_t row) const {
  double s = 0;
  for (std::size_t c = 0; c < columns.size(); ++c) s += at(row, c);
  return s;
}

std::uint64_t HeatmapMatrix::raw_row_sum(std::size_t row) const {
  std::uint64_t s = 0;
  for (std::size_t c = 0; c < columns.size(); ++c) s += raw[row * columns.size() + c];
  return s;
}

HeatmapMatrix region_heatmap(const DailyGraphs& graphs, const ExclusionCalendar& cal,
                             int first_week, int last_week, std::span<const Antenna> antennas,
                             const std::vector<std::string>& region_order) {
  HeatmapMatrix m;
  for (int w = first_week; w <= last_week; ++w) m.weeks.push_back(w);

  std::vector<std::string> codes;
  std::set<std::string> seen;
  for (const auto& c : region_order) {
    if (c != kOutRegion && seen.insert(c).second) codes.push_back(c);
  }
  std::set<std::string> extra;
  for (const auto& a : antennas) {
    if (a.region != kOutRegion && !seen.count(a.region)) extra.insert(a.region);
  }
  codes.insert(codes.end(), extra.begin(), extra.end());
  codes.emplace_back(kOutRegion);
  for (const auto& code : codes) {
    HeatmapMatrix::RegionBlock block{code, m.columns.size(), 0};
    for (const auto& a : antennas) {
      if (a.region == code) m.columns.push_back(a.id);
    }
    block.count = m.columns.size() - block.first;
    if (block.count > 0) m.blocks.push_back(block);
  }

  std::vector<std::size_t> column_of(antennas.size(), 0);
  for (std::size_t c = 0; c < m.columns.size(); ++c) column_of[m.columns[c]] = c;
  auto& raw = m.raw;
  raw.assign(m.weeks.size() * m.columns.size(), 0);
  for (const auto& [day, g] : graphs) {
    if (!cal.is_present(day)) continue;
    auto w = week_of(day);
    if (w < first_week || w > last_week) continue;
    auto row = static_cast<std::size_t>(w - first_week);
    for (std::size_t a = 0; a < g.node_count() && a < antennas.size(); ++a) {
      raw[row * m.columns.size() + column_of[a]] += g.in_degree(static_cast<AntennaIndex>(a));
    }
  }
  m.cells.resize(raw.size());
  for (std::size_t r = 0; r < m.weeks.size(); ++r) {
    for (std::size_t c = 0; c < m.columns.size(); ++c) {
      auto i = r * m.columns.size() + c;
      m.cells[i] = scale_week(static_cast<double>(raw[i]), m.weeks[r], cal);
    }
  }
  return m;
}

ActivitySplit split_by_activity(const HeatmapMatrix& m, double threshold) {
  if (m.columns.empty()) throw AnalyticsError("heatmap has no antennas");
  ActivitySplit s;
  for (std::size_t c = 0; c < m.columns.size(); ++c) {
    double mean = 0;
    if (!m.weeks.empty()) {
      for (std::size_t r = 0; r < m.weeks.size(); ++r) mean += m.at(r, c);
      mean /= static_cast<double>(m.weeks.size());
    }
    (mean < threshold ? s.low : s.high).push_back(m.columns[c]);
  }
  std::sort(s.low.begin(), s.low.end());
  std::sort(s.high.begin(), s.high.end());
  return s;
}

VariationRanking variation_rank(const HeatmapMatrix& m, std::span<const AntennaIndex> group,
                                std::size_t k) {
  if (group.empty()) throw AnalyticsError("variation group is empty");
  std::map<AntennaIndex, std::size_t> column_of;
  for (std::size_t c = 0; c < m.columns.size(); ++c) column_of[m.columns[c]] = c;
  VariationRanking out;
  for (auto id : group) {
    auto it = column_of.find(id);
    if (it == column_of.end()) throw AnalyticsError("antenna " + std::to_string(id) + " not in heatmap");
    auto series = m.column_series(it->second);
    VariationEntry e{id, 0, 0, 0};
    if (!series.empty()) {
      double n = static_cast<double>(series.size());
      e.mean = std::accumulate(series.begin(), series.end(), 0.0) / n;
      double ss = 0;
      for (double v : series) ss += (v - e.mean) * (v - e.mean);
      e.stdev = std::sqrt(ss / n);
      auto [lo, hi] = std::minmax_element(series.begin(), series.end());
      e.range = *hi - *lo;
    }
    out.entries.push_back(e);
  }
  std::sort(out.entries.begin(), out.entries.end(), [](const auto& a, const auto& b) {
    return a.stdev != b.stdev ? a.stdev > b.stdev : a.antenna < b.antenna;
  });
  if (k > out.entries.size()) {
    out.truncated = true;
  } else {
    out.entries.resize(k);
  }
  return out;
}

double pearson(std::span<const double> x, std::span<const double> y, int lag) {
  if (x.size() != y.size()) {
    throw CorrelationError(CorrelationErrorCode::LengthMismatch, "series lengths differ");
  }
  auto n_total = static_cast<long>(x.size());
  std::vector<double> a;
  std::vector<double> b;
  for (long t = 0; t < n_total; ++t) {
    long u = t + lag;
    if (u < 0 || u >= n_total) continue;
    a.push_back(x[static_cast<std::size_t>(t)]);
    b.push_back(y[static_cast<std::size_t>(u)]);
  }
  if (a.size() < 3) {
    throw CorrelationError(CorrelationErrorCode::InsufficientPoints,
                           "need at least 3 aligned points");
  }
  double n = static_cast<double>(a.size());
  double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0;
  double saa = 0;
  double sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double da = a[i] - ma;
    double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0 || sbb == 0) {
    throw CorrelationError(CorrelationErrorCode::Undefined, "correlation of a constant series");
  }
  double r = sab / (std::sqrt(saa) * std::sqrt(sbb));
  return std::clamp(r, -1.0, 1.0);
}

std::vector<double> region_series(const HeatmapMatrix& m, const std::string& region) {
  std::vector<double> out(m.weeks.size(), 0.0);
  for (const auto& b : m.blocks) {
    if (b.code != region) continue;
    for (std::size_t r = 0; r < m.weeks.size(); ++r) {
      for (std::size_t c = b.first; c < b.first + b.count; ++c) out[r] += m.at(r, c);
    }
  }
  return out;
}

}  // namespace mobiscope
