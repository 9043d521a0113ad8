#include "mobiscope/mobility.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <set>

namespace mobiscope {

std::string_view class_name(MobilityClass c) {
  switch (c) {
    case MobilityClass::NoMobility: return "no";
    case MobilityClass::Low: return "low";
    case MobilityClass::Medium: return "medium";
    case MobilityClass::High: return "high";
  }
  return "?";
}

std::optional<MobilityClass> parse_class(std::string_view name) {
  for (auto c : kAllClasses) {
    if (class_name(c) == name) return c;
  }
  return std::nullopt;
}

MobilityClass classify_count(std::size_t n) {
  if (n == 0) throw Error("a present user visits at least one antenna");
  if (n == 1) return MobilityClass::NoMobility;
  if (n <= 5) return MobilityClass::Low;
  if (n <= 10) return MobilityClass::Medium;
  return MobilityClass::High;
}

std::optional<MobilityClass> classify_user_day(std::span<const IndividualRecord> records) {
  if (records.empty()) return std::nullopt;
  std::set<AntennaIndex> distinct;
  for (const auto& r : records) distinct.insert(r.antenna);
  return classify_count(distinct.size());
}

std::vector<Transition> extract_events(std::span<const AntennaIndex> antennas) {
  std::vector<Transition> out;
  for (std::size_t i = 1; i < antennas.size(); ++i) {
    if (antennas[i] != antennas[i - 1]) out.push_back({antennas[i - 1], antennas[i]});
  }
  return out;
}

std::vector<Transition> extract_events(std::span<const IndividualRecord> records) {
  std::vector<std::uint32_t> idx(records.size());
  std::iota(idx.begin(), idx.end(), 0u);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](auto a, auto b) { return records[a].bin < records[b].bin; });
  std::vector<AntennaIndex> seq;
  seq.reserve(records.size());
  for (auto i : idx) seq.push_back(records[i].antenna);
  return extract_events(std::span<const AntennaIndex>(seq));
}

MobilityGraph::MobilityGraph(Date day, std::size_t node_count)
    : day_(day), in_(node_count, 0), out_(node_count, 0) {}

void MobilityGraph::add(Transition t, std::uint64_t weight) {
  if (t.from == t.to) throw Error("mobility graphs carry no self-loops");
  if (t.from >= in_.size() || t.to >= in_.size()) throw Error("transition endpoint out of range");
  if (weight == 0) return;
  edges_[{t.from, t.to}] += weight;
  out_[t.from] += weight;
  in_[t.to] += weight;
  total_ += weight;
}

void MobilityGraph::merge(const MobilityGraph& other) {
  if (other.day_ != day_ || other.node_count() != node_count()) {
    throw Error("merged graphs must share day and node set");
  }
  for (const auto& [k, w] : other.edges_) add({k.first, k.second}, w);
}

std::vector<Edge> MobilityGraph::edges() const {
  std::vector<Edge> out;
  out.reserve(edges_.size());
  for (const auto& [k, w] : edges_) out.push_back({k.first, k.second, w});
  return out;
}

std::uint64_t MobilityGraph::weight(AntennaIndex from, AntennaIndex to) const {
  auto it = edges_.find({from, to});
  return it == edges_.end() ? 0 : it->second;
}

std::size_t MobilityGraph::nodes_active() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < in_.size(); ++i) {
    if (in_[i] || out_[i]) ++n;
  }
  return n;
}

std::uint64_t total_mobility_events(const MobilityGraph& g) {
  std::uint64_t total = 0;
  for (std::size_t i = 0; i < g.node_count(); ++i) total += g.in_degree(static_cast<AntennaIndex>(i));
  return total;
}

UserDayGroups group_user_days(std::span<const IndividualRecord> records) {
  UserDayGroups g;
  g.order.resize(records.size());
  std::iota(g.order.begin(), g.order.end(), 0u);
  std::stable_sort(g.order.begin(), g.order.end(), [&](std::uint32_t a, std::uint32_t b) {
    const auto& ra = records[a];
    const auto& rb = records[b];
    auto da = ra.bin.index / kBinsPerDay;
    auto db = rb.bin.index / kBinsPerDay;
    if (da != db) return da < db;
    if (ra.user != rb.user) return ra.user < rb.user;
    return ra.bin < rb.bin;
  });
  for (std::uint32_t i = 0; i < g.order.size();) {
    const auto& first = records[g.order[i]];
    auto day = first.bin.index / kBinsPerDay;
    std::uint32_t j = i + 1;
    while (j < g.order.size() && records[g.order[j]].bin.index / kBinsPerDay == day &&
           records[g.order[j]].user == first.user) {
      ++j;
    }
    g.groups.push_back({first.bin.day(), i, j});
    i = j;
  }
  return g;
}

namespace {

std::vector<AntennaIndex> sequence(std::span<const IndividualRecord> records,
                                   const UserDayGroups& g, const UserDayGroups::Group& grp) {
  std::vector<AntennaIndex> seq;
  seq.reserve(grp.end - grp.begin);
  for (auto i = grp.begin; i < grp.end; ++i) seq.push_back(records[g.order[i]].antenna);
  return seq;
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

MobilityGraph build_daily_graph(Date day, std::span<const IndividualRecord> records,
                                std::size_t node_count) {
  MobilityGraph graph(day, node_count);
  auto g = group_user_days(records);
  for (const auto& grp : g.groups) {
    if (grp.day != day) continue;
    for (auto t : extract_events(sequence(records, g, grp))) graph.add(t);
  }
  return graph;
}

DailyGraphs build_daily_graphs(std::span<const IndividualRecord> records, std::size_t node_count) {
  DailyGraphs graphs;
  auto g = group_user_days(records);
  for (const auto& grp : g.groups) {
    auto it = graphs.try_emplace(grp.day, grp.day, node_count).first;
    for (auto t : extract_events(sequence(records, g, grp))) it->second.add(t);
  }
  return graphs;
}

std::map<Date, ClassCounts> daily_class_counts(std::span<const IndividualRecord> records) {
  std::map<Date, ClassCounts> out;
  auto g = group_user_days(records);
  for (const auto& grp : g.groups) {
    auto seq = sequence(records, g, grp);
    std::sort(seq.begin(), seq.end());
    auto distinct = static_cast<std::size_t>(std::unique(seq.begin(), seq.end()) - seq.begin());
    ++out[grp.day].counts[static_cast<std::size_t>(classify_count(distinct))];
  }
  return out;
}

std::array<double, 4> class_shares(const ClassCounts& c) {
  auto n = c.users();
  if (n == 0) throw NoUsers("no users present");
  std::array<double, 4> out{};
  for (std::size_t i = 0; i < 4; ++i) {
    out[i] = 100.0 * static_cast<double>(c.counts[i]) / static_cast<double>(n);
  }
  return out;
}

std::array<double, 4> mobility_group_shares(std::span<const IndividualRecord> day_records) {
  ClassCounts total;
  for (const auto& [day, c] : daily_class_counts(day_records)) {
    for (std::size_t i = 0; i < 4; ++i) total.counts[i] += c.counts[i];
  }
  return class_shares(total);
}

std::map<int, double> weekly_mobility(const DailyGraphs& graphs, const ExclusionCalendar& cal) {
  std::map<int, std::uint64_t> raw;
  for (const auto& [day, g] : graphs) {
    if (!cal.is_present(day)) continue;
    raw[week_of(day)] += total_mobility_events(g);
  }
  std::map<int, double> out;
  for (const auto& [week, total] : raw) {
    out[week] = scale_week(static_cast<double>(total), week, cal);
  }
  return out;
}

DayOfWeekResult day_of_week_profile(const DailyGraphs& graphs, const ExclusionCalendar& cal,
                                    const std::vector<WeekGroup>& groups) {
  DayOfWeekResult result;
  for (const auto& wg : groups) {
    std::array<std::vector<double>, 7> per_day;
    bool any = false;
    for (const auto& [day, g] : graphs) {
      if (!cal.is_present(day)) continue;
      auto w = week_of(day);
      if (w < wg.first_week || w > wg.last_week) continue;
      per_day[static_cast<std::size_t>(weekday(day))].push_back(
          static_cast<double>(total_mobility_events(g)));
      any = true;
    }
    if (!any) {
      result.warnings.push_back("weeks " + std::to_string(wg.first_week) + "-" +
                                std::to_string(wg.last_week) + " have no data; omitted");
      continue;
    }
    DayOfWeekProfile p;
    p.weeks = wg;
    for (std::size_t d = 0; d < 7; ++d) {
      if (!per_day[d].empty()) p.weekday_means[d] = mean_of(per_day[d]);
    }
    std::vector<double> mon_thu;
    for (std::size_t d = 1; d <= 4; ++d) {
      if (p.weekday_means[d]) mon_thu.push_back(*p.weekday_means[d]);
    }
    if (!mon_thu.empty()) {
      double m = mean_of(mon_thu);
      p.mon_thu = m;
      p.mon_thu_min = *std::min_element(mon_thu.begin(), mon_thu.end());
      p.mon_thu_max = *std::max_element(mon_thu.begin(), mon_thu.end());
      double ss = 0;
      for (double v : mon_thu) ss += (v - m) * (v - m);
      p.mon_thu_stdev = std::sqrt(ss / static_cast<double>(mon_thu.size()));
    }
    p.friday = p.weekday_means[5];
    p.saturday = p.weekday_means[6];
    p.sunday = p.weekday_means[0];
    result.groups.push_back(p);
  }
  return result;
}

void write_graphs_csv(std::ostream& out, const DailyGraphs& graphs) {
  out << kGraphHeader << '\n';
  for (const auto& [day, g] : graphs) {
    auto d = format_date(day);
    for (const auto& e : g.edges()) {
      out << d << ',' << e.from << ',' << e.to << ',' << e.weight << '\n';
    }
  }
}

DailyGraphs read_graphs_csv(std::istream& in, std::size_t node_count) {
  DailyGraphs graphs;
  std::string line;
  std::size_t line_no = 0;
  auto to_u64 = [&](std::string_view s) {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || p != s.data() + s.size()) {
      throw ParseError(ParseErrorCode::Malformed, line_no, "bad integer");
    }
    return v;
  };
  while (std::getline(in, line)) {
    ++line_no;
    auto view = detail::trim(line);
    if (line_no == 1) {
      if (view != kGraphHeader) {
        throw ParseError(ParseErrorCode::Malformed, line_no, "expected graph header");
      }
      continue;
    }
    if (view.empty()) continue;
    auto f = detail::split_csv(view);
    if (f.size() != 4) throw ParseError(ParseErrorCode::Malformed, line_no, "expected 4 fields");
    Date day;
    try {
      day = parse_date(f[0]);
    } catch (const Error& e) {
      throw ParseError(ParseErrorCode::Malformed, line_no, e.what());
    }
    auto from = to_u64(f[1]);
    auto to = to_u64(f[2]);
    auto w = to_u64(f[3]);
    if (from >= node_count || to >= node_count) {
      throw ParseError(ParseErrorCode::UnknownAntenna, line_no, "antenna id out of range");
    }
    auto it = graphs.try_emplace(day, day, node_count).first;
    it->second.add({static_cast<AntennaIndex>(from), static_cast<AntennaIndex>(to)}, w);
  }
  return graphs;
}

nlohmann::json daily_summary_json(const DailyGraphs& graphs) {
  auto out = nlohmann::json::array();
  for (const auto& [day, g] : graphs) {
    out.push_back({{"day", format_date(day)},
                   {"total_events", total_mobility_events(g)},
                   {"nodes_active", g.nodes_active()}});
  }
  return out;
}

}  // namespace mobiscope
