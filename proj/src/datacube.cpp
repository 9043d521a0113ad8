#include "mobiscope/datacube.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

namespace mobiscope {

std::string_view error_code_name(CubeErrorCode code) {
  switch (code) {
    case CubeErrorCode::InvalidQuery: return "InvalidQuery";
    case CubeErrorCode::UnsupportedSelect: return "UnsupportedSelect";
    case CubeErrorCode::DepthOutOfRange: return "DepthOutOfRange";
    case CubeErrorCode::MixedRecordKinds: return "MixedRecordKinds";
    case CubeErrorCode::BadMagic: return "BadMagic";
    case CubeErrorCode::VersionMismatch: return "VersionMismatch";
    case CubeErrorCode::Truncated: return "Truncated";
    case CubeErrorCode::Corrupt: return "Corrupt";
    case CubeErrorCode::Io: return "Io";
  }
  return "Unknown";
}

CubeError::CubeError(CubeErrorCode code, const std::string& detail)
    : Error(std::string(error_code_name(code)) + ": " + detail), code_(code) {}

namespace {

constexpr char kMagic[4] = {'M', 'S', 'C', '1'};
constexpr std::uint32_t kSnapshotVersion = 1;

[[noreturn]] void invalid(const std::string& detail) {
  throw CubeError(CubeErrorCode::InvalidQuery, detail);
}

DataCube::Series series_from_sparse(const std::vector<std::pair<std::int64_t, std::uint64_t>>& s) {
  DataCube::Series out;
  if (s.empty()) return out;
  out.first_bin = s.front().first;
  auto span = s.back().first - s.front().first + 1;
  out.prefix.assign(static_cast<std::size_t>(span) + 1, 0);
  for (const auto& [bin, c] : s) out.prefix[static_cast<std::size_t>(bin - out.first_bin) + 1] += c;
  std::partial_sum(out.prefix.begin(), out.prefix.end(), out.prefix.begin());
  return out;
}

std::vector<DataCube::DayUsers> day_users_from_entries(const std::vector<DataCube::Entry>& entries) {
  std::vector<DataCube::DayUsers> out;
  for (std::size_t i = 0; i < entries.size();) {
    auto day = static_cast<std::int32_t>(entries[i].bin / kBinsPerDay);
    DataCube::DayUsers du{day, {}};
    while (i < entries.size() && entries[i].bin / kBinsPerDay == day) {
      du.users.push_back(entries[i].user);
      ++i;
    }
    std::sort(du.users.begin(), du.users.end());
    du.users.erase(std::unique(du.users.begin(), du.users.end()), du.users.end());
    out.push_back(std::move(du));
  }
  return out;
}

/// Sums several series bin by bin and unions their day summaries.
DataCube::Series merge_series(const std::vector<const DataCube::Series*>& parts) {
  DataCube::Series out;
  std::int64_t lo = 0;
  std::int64_t hi = 0;
  bool any = false;
  for (const auto* p : parts) {
    if (p->prefix.size() <= 1) continue;
    if (!any) {
      lo = p->first_bin;
      hi = p->end_bin();
      any = true;
    } else {
      lo = std::min(lo, p->first_bin);
      hi = std::max(hi, p->end_bin());
    }
  }
  if (any) {
    out.first_bin = lo;
    std::vector<std::uint64_t> counts(static_cast<std::size_t>(hi - lo), 0);
    for (const auto* p : parts) {
      for (std::size_t i = 0; i + 1 < p->prefix.size(); ++i) {
        counts[static_cast<std::size_t>(p->first_bin - lo) + i] += p->prefix[i + 1] - p->prefix[i];
      }
    }
    out.prefix.assign(counts.size() + 1, 0);
    std::partial_sum(counts.begin(), counts.end(), out.prefix.begin() + 1);
  }
  std::map<std::int32_t, std::vector<std::uint32_t>> days;
  for (const auto* p : parts) {
    for (const auto& du : p->day_users) {
      auto& v = days[du.day];
      v.insert(v.end(), du.users.begin(), du.users.end());
    }
  }
  for (auto& [day, users] : days) {
    std::sort(users.begin(), users.end());
    users.erase(std::unique(users.begin(), users.end()), users.end());
    out.day_users.push_back({day, std::move(users)});
  }
  return out;
}

std::uint64_t morton(const QuadPath& p) {
  std::uint64_t code = 0;
  for (int i = 0; i < p.depth(); ++i) code = (code << 2) | static_cast<std::uint64_t>(p.digit(i));
  return code;
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  return a >= 0 ? a / b : -((-a + b - 1) / b);
}

void sort_by_value(std::vector<std::pair<std::string, std::uint64_t>>& rows,
                   bool numeric_keys) {
  std::sort(rows.begin(), rows.end(), [&](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    if (numeric_keys && a.first.size() != b.first.size()) return a.first.size() < b.first.size();
    return a.first < b.first;
  });
}

ResultSeries to_series(const std::vector<std::pair<std::string, std::uint64_t>>& rows) {
  ResultSeries r;
  for (const auto& [k, v] : rows) {
    r.keys.push_back(k);
    r.values.push_back(v);
  }
  return r;
}

// --- snapshot encoding -----------------------------------------------------

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }
  void raw(const char* p, std::size_t n) { buf_.append(p, n); }
  std::string& buffer() { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw CubeError(CubeErrorCode::Truncated, "snapshot truncated");
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    auto n = u32();
    need(n);
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
};

std::uint64_t fnv1a(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : data) {
    h ^= static_cast<std::uint8_t>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace

namespace detail {

std::int64_t bucket_bins(GroupBy g) {
  switch (g) {
    case GroupBy::Hour: return kBinsPerHour;
    case GroupBy::Day: return kBinsPerDay;
    case GroupBy::Week: return 7 * kBinsPerDay;
    default: return 0;
  }
}

std::string time_key_label(GroupBy g, std::int64_t bucket) {
  switch (g) {
    case GroupBy::Hour: return format_timestamp(TimeBin{bucket * kBinsPerHour});
    case GroupBy::Day: return format_date(TimeBin{bucket * kBinsPerDay}.day());
    case GroupBy::Week: {
      char buf[24];
      std::snprintf(buf, sizeof buf, "W%02lld", static_cast<long long>(bucket + 1));
      return buf;
    }
    default: return "total";
  }
}

}  // namespace detail

std::string_view select_name(Select s) {
  return s == Select::Count ? "count" : "distinct_users";
}

std::string_view group_by_name(GroupBy g) {
  switch (g) {
    case GroupBy::None: return "none";
    case GroupBy::Hour: return "hour";
    case GroupBy::Day: return "day";
    case GroupBy::Week: return "week";
    case GroupBy::Antenna: return "antenna";
    case GroupBy::Region: return "region";
  }
  return "none";
}

void Query::validate() const {
  if (time) {
    if (time->start.index < 0) invalid("time interval starts before the study epoch");
    if (!(time->start < time->end)) invalid("time interval must satisfy start < end");
  }
  if (bbox && (!(bbox->min_lat <= bbox->max_lat) || !(bbox->min_lon <= bbox->max_lon))) {
    invalid("bbox must be well-ordered");
  }
  int spatial = (bbox ? 1 : 0) + (regions ? 1 : 0) + (antennas ? 1 : 0);
  if (spatial > 1) invalid("at most one of bbox, regions, antennas");
}

Query query_from_json(const nlohmann::json& j) {
  if (!j.is_object()) invalid("query must be a JSON object");
  Query q;
  for (const auto& [key, _] : j.items()) {
    if (key != "select" && key != "where" && key != "group_by" && key != "source") {
      invalid("unknown query field '" + key + "'");
    }
  }
  try {
    if (j.contains("select")) {
      auto s = j.at("select").get<std::string>();
      if (s == "count") {
        q.select = Select::Count;
      } else if (s == "distinct_users") {
        q.select = Select::DistinctUsers;
      } else {
        invalid("unknown select '" + s + "'");
      }
    }
    if (j.contains("group_by")) {
      auto g = j.at("group_by").get<std::string>();
      static const std::pair<const char*, GroupBy> names[] = {
          {"none", GroupBy::None},       {"hour", GroupBy::Hour},
          {"day", GroupBy::Day},         {"week", GroupBy::Week},
          {"antenna", GroupBy::Antenna}, {"region", GroupBy::Region}};
      bool found = false;
      for (const auto& [n, v] : names) {
        if (g == n) {
          q.group_by = v;
          found = true;
        }
      }
      if (!found) invalid("unknown group_by '" + g + "'");
    }
    if (j.contains("where")) {
      const auto& w = j.at("where");
      if (!w.is_object()) invalid("where must be an object");
      for (const auto& [key, val] : w.items()) {
        if (key == "time") {
          auto to_bin = [](const std::string& ts) {
            std::int64_t secs = 0;
            try {
              secs = parse_timestamp_seconds(ts);
            } catch (const Error& e) {
              invalid(e.what());
            }
            if (secs % kBinSeconds != 0) invalid("timestamp not on a 5-minute boundary: " + ts);
            return TimeBin{floor_div(secs, kBinSeconds)};
          };
          q.time = TimeInterval{to_bin(val.at("start").get<std::string>()),
                                to_bin(val.at("end").get<std::string>())};
        } else if (key == "bbox") {
          q.bbox = BBox{val.at("min_lat").get<double>(), val.at("min_lon").get<double>(),
                        val.at("max_lat").get<double>(), val.at("max_lon").get<double>()};
        } else if (key == "regions") {
          q.regions = val.get<std::vector<std::string>>();
        } else if (key == "antennas") {
          q.antennas = val.get<std::vector<AntennaIndex>>();
        } else {
          invalid("unknown where field '" + key + "'");
        }
      }
    }
  } catch (const nlohmann::json::exception& e) {
    invalid(e.what());
  }
  q.validate();
  return q;
}

nlohmann::json query_to_json(const Query& q) {
  nlohmann::json j;
  j["select"] = select_name(q.select);
  j["group_by"] = group_by_name(q.group_by);
  nlohmann::json w = nlohmann::json::object();
  if (q.time) {
    w["time"] = {{"start", format_timestamp(q.time->start)}, {"end", format_timestamp(q.time->end)}};
  }
  if (q.bbox) {
    w["bbox"] = {{"min_lat", q.bbox->min_lat},
                 {"min_lon", q.bbox->min_lon},
                 {"max_lat", q.bbox->max_lat},
                 {"max_lon", q.bbox->max_lon}};
  }
  if (q.regions) w["regions"] = *q.regions;
  if (q.antennas) w["antennas"] = *q.antennas;
  j["where"] = w;
  return j;
}

nlohmann::json to_json(const ResultSeries& r) {
  return nlohmann::json{{"keys", r.keys}, {"values", r.values}};
}

// --- DataCube --------------------------------------------------------------

std::uint64_t DataCube::Series::sum(std::int64_t from, std::int64_t to) const {
  auto lo = std::max(from, first_bin);
  auto hi = std::min(to, end_bin());
  if (lo >= hi) return 0;
  return prefix[static_cast<std::size_t>(hi - first_bin)] -
         prefix[static_cast<std::size_t>(lo - first_bin)];
}

std::uint64_t DataCube::total() const {
  return root_ < 0 ? 0 : nodes_[static_cast<std::size_t>(root_)].series.total();
}

std::optional<TimeInterval> DataCube::time_extent() const { return extent_; }

DataCube DataCube::assemble(CubeKind kind, int depth, std::vector<Antenna> antennas,
                            std::vector<std::string> users,
                            std::vector<std::vector<std::pair<std::int64_t, std::uint64_t>>> counts,
                            std::vector<std::vector<Entry>> entries, std::uint64_t record_count,
                            std::optional<TimeInterval> extent) {
  if (depth < 1 || depth > kMaxQuadDepth) {
    throw CubeError(CubeErrorCode::DepthOutOfRange, "depth must be in [1, 25]");
  }
  DataCube cube;
  cube.kind_ = kind;
  cube.depth_ = depth;
  cube.antennas_ = std::move(antennas);
  cube.users_ = std::move(users);
  cube.record_count_ = record_count;
  cube.extent_ = extent;

  auto n = cube.antennas_.size();
  counts.resize(n);
  entries.resize(n);
  cube.data_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& c = counts[i];
     auto& e = entries[i];
    if (kind == CubeKind::Individual) {
      std::sort(e.begin(), e.end());
      c.clear();
      for (const auto& en : e) {
        if (!c.empty() && c.back().first == en.bin) {
          ++c.back().second;
        } else {
          c.emplace_back(en.bin, 1);
        }
      }
    } else {
      std::sort(c.begin(), c.end());
    }
    cube.data_[i].series = series_from_sparse(c);
    if (kind == CubeKind::Individual) {
      cube.data_[i].series.day_users = day_users_from_entries(e);
      cube.data_[i].entries = std::move(e);
    }
  }

  if (n > 0) {
    std::vector<std::uint64_t> codes(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& a = cube.antennas_[i];
      double lat = std::clamp(a.lat, -kMaxMercatorLat + 1e-9, kMaxMercatorLat - 1e-9);
      codes[i] = morton(quad_path(lat, a.lon, depth));
    }
    std::vector<std::uint32_t> ids(n);
    std::iota(ids.begin(), ids.end(), 0u);
    std::sort(ids.begin(), ids.end(), [&](auto a, auto b) {
      return codes[a] != codes[b] ? codes[a] < codes[b] : a < b;
    });
    cube.root_ = cube.build_node(ids, codes);
    cube.position_.assign(n, 0);
    for (std::uint32_t p = 0; p < cube.order_.size(); ++p) cube.position_[cube.order_[p]] = p;
  }
  return cube;
}

std::uint32_t DataCube::build_node(std::span<std::uint32_t> ids,
                                   const std::vector<std::uint64_t>& codes) {
  auto index = static_cast<std::uint32_t>(nodes_.size());
  nodes_.emplace_back();
  Node node;
  node.order_begin = static_cast<std::uint32_t>(order_.size());
  auto diff = codes[ids.front()] ^ codes[ids.back()];
  std::vector<const Series*> parts;
  if (diff == 0) {
    node.level = depth_;
    for (auto id : ids) {
      order_.push_back(id);
      parts.push_back(&data_[id].series);
    }
  } else {
    int high_bit = 63 - std::countl_zero(diff);
    int level = depth_ - 1 - high_bit / 2;
    node.level = level;
    int shift = 2 * (depth_ - 1 - level);
    std::size_t start = 0;
    while (start < ids.size()) {
      auto digit = (codes[ids[start]] >> shift) & 3u;
      std::size_t end = start;
      while (end < ids.size() && ((codes[ids[end]] >> shift) & 3u) == digit) ++end;
      node.children.push_back(build_node(ids.subspan(start, end - start), codes));
      start = end;
    }
    for (auto c : node.children) parts.push_back(&nodes_[c].series);
  }
  node.order_end = static_cast<std::uint32_t>(order_.size());
  node.series = merge_series(parts);
  bool first = true;
  for (std::uint32_t p = node.order_begin; p < node.order_end; ++p) {
    const auto& a = antennas_[order_[p]];
    if (first) {
      node.extent = BBox{a.lat, a.lon, a.lat, a.lon};
      first = false;
    } else {
      node.extent.min_lat = std::min(node.extent.min_lat, a.lat);
      node.extent.max_lat = std::max(node.extent.max_lat, a.lat);
      node.extent.min_lon = std::min(node.extent.min_lon, a.lon);
      node.extent.max_lon = std::max(node.extent.max_lon, a.lon);
    }
  }
  nodes_[index] = std::move(node);
  return index;
}

std::vector<DataCube::Piece> DataCube::pieces(const std::vector<char>* chosen) const {
  std::vector<Piece> out;
  if (root_ < 0) return out;
  if (!chosen) {
    const auto& root = nodes_[static_cast<std::size_t>(root_)];
    out.push_back({&root.series, root.order_begin, root.order_end});
    return out;
  }
  std::vector<std::uint32_t> prefix(order_.size() + 1, 0);
  for (std::size_t p = 0; p < order_.size(); ++p) {
    prefix[p + 1] = prefix[p] + ((*chosen)[order_[p]] ? 1u : 0u);
  }
  collect(static_cast<std::uint32_t>(root_), prefix, out);
  return out;
}

void DataCube::collect(std::uint32_t index, const std::vector<std::uint32_t>& chosen_prefix,
                       std::vector<Piece>& out) const {
  const auto& node = nodes_[index];
  auto k = chosen_prefix[node.order_end] - chosen_prefix[node.order_begin];
  if (k == 0) return;
  if (k == node.order_end - node.order_begin) {
    out.push_back({&node.series, node.order_begin, node.order_end});
    return;
  }
  if (!node.children.empty()) {
    for (auto c : node.children) collect(c, chosen_prefix, out);
    return;
  }
  for (auto p = node.order_begin; p < node.order_end; ++p) {
    if (chosen_prefix[p + 1] != chosen_prefix[p]) {
      out.push_back({&data_[order_[p]].series, p, p + 1});
    }
  }
}

std::uint64_t DataCube::count(const std::vector<Piece>& ps, std::int64_t from,
                              std::int64_t to) const {
  std::uint64_t total = 0;
  for (const auto& p : ps) total += p.series->sum(from, to);
  return total;
}

std::uint64_t DataCube::distinct(const std::vector<Piece>& ps, std::int64_t from, std::int64_t to,
                                 std::vector<std::uint32_t>& marks, std::uint32_t& stamp) const {
  ++stamp;
  std::uint64_t n = 0;
  auto mark = [&](std::uint32_t u) {
    if (marks[u] != stamp) {
      marks[u] = stamp;
      ++n;
    }
  };
  auto rescan = [&](const Piece& p, std::int64_t lo, std::int64_t hi) {
    if (lo >= hi) return;
    for (auto pos = p.order_begin; pos < p.order_end; ++pos) {
      const auto& entries = data_[order_[pos]].entries;
      auto it = std::lower_bound(entries.begin(), entries.end(), Entry{lo, 0});
      for (; it != entries.end() && it->bin < hi; ++it) mark(it->user);
    }
  };
  auto first_full = floor_div(from + kBinsPerDay - 1, kBinsPerDay);
  auto last_full = floor_div(to, kBinsPerDay);
  for (const auto& p : ps) {
    if (first_full >= last_full) {
      rescan(p, from, to);
      continue;
    }
    rescan(p, from, first_full * kBinsPerDay);
    const auto& days = p.series->day_users;
    auto it = std::lower_bound(days.begin(), days.end(), first_full,
                               [](const DayUsers& d, std::int64_t v) { return d.day < v; });
    for (; it != days.end() && it->day < last_full; ++it) {
      for (auto u : it->users) mark(u);
    }
    rescan(p, last_full * kBinsPerDay, to);
  }
  return n;
}

ResultSeries DataCube::query(const Query& q) const {
  q.validate();
  if (q.select == Select::DistinctUsers && kind_ != CubeKind::Individual) {
    throw CubeError(CubeErrorCode::UnsupportedSelect,
                    "distinct_users requires a cube built from individual records");
  }
  const auto n = antennas_.size();
  std::optional<std::vector<char>> chosen;
  if (q.bbox || q.regions || q.antennas) {
    chosen.emplace(n, 0);
    if (q.bbox) {
      for (std::size_t i = 0; i < n; ++i) {
        (*chosen)[i] = q.bbox->contains(antennas_[i].lat, antennas_[i].lon) ? 1 : 0;
      }
    } else if (q.regions) {
      std::set<std::string> wanted(q.regions->begin(), q.regions->end());
      for (std::size_t i = 0; i < n; ++i) (*chosen)[i] = wanted.count(antennas_[i].region) ? 1 : 0;
    } else {
      for (auto id : *q.antennas) {
        if (id >= n) invalid("unknown antenna id " + std::to_string(id));
        (*chosen)[id] = 1;
      }
    }
  }

  auto interval = q.time ? q.time : extent_;
  ResultSeries out;
  std::vector<std::uint32_t> marks;
  std::uint32_t stamp = 0;
  if (q.select == Select::DistinctUsers) marks.assign(users_.size(), 0);

  auto evaluate = [&](const std::vector<Piece>& ps, std::int64_t from, std::int64_t to) {
    return q.select == Select::Count ? count(ps, from, to) : distinct(ps, from, to, marks, stamp);
  };

  switch (q.group_by) {
    case GroupBy::None: {
      out.keys.push_back("total");
      out.values.push_back(interval ? evaluate(pieces(chosen ? &*chosen : nullptr),
                                               interval->start.index, interval->end.index)
                                    : 0);
      return out;
    }
    case GroupBy::Hour:
    case GroupBy::Day:
    case GroupBy::Week: {
      if (!interval) return out;
      auto ps = pieces(chosen ? &*chosen : nullptr);
      auto width = detail::bucket_bins(q.group_by);
      auto s = interval->start.index;
      auto e = interval->end.index;
      for (auto b = floor_div(s, width); b <= floor_div(e - 1, width); ++b) {
        auto lo = std::max(s, b * width);
        auto hi = std::min(e, (b + 1) * width);
        out.keys.push_back(detail::time_key_label(q.group_by, b));
        out.values.push_back(evaluate(ps, lo, hi));
      }
      return out;
    }
    case GroupBy::Antenna: {
      if (!interval) return out;
      std::vector<std::pair<std::string, std::uint64_t>> rows;
      for (std::uint32_t id = 0; id < n; ++id) {
        if (chosen && !(*chosen)[id]) continue;
        auto pos = position_[id];
        std::vector<Piece> ps{{&data_[id].series, pos, pos + 1}};
        auto v = evaluate(ps, interval->start.index, interval->end.index);
        if (v > 0) rows.emplace_back(std::to_string(id), v);
      }
      sort_by_value(rows, true);
      return to_series(rows);
    }
    case GroupBy::Region: {
      if (!interval) return out;
      std::map<std::string, std::vector<char>> by_region;
      for (std::size_t i = 0; i < n; ++i) {
        if (chosen && !(*chosen)[i]) continue;
        auto& mask = by_region[antennas_[i].region];
        if (mask.empty()) mask.assign(n, 0);
        mask[i] = 1;
      }
      std::vector<std::pair<std::string, std::uint64_t>> rows;
      for (const auto& [code, mask] : by_region) {
        auto v = evaluate(pieces(&mask), interval->start.index, interval->end.index);
        if (v > 0) rows.emplace_back(code, v);
      }
      sort_by_value(rows, false);
      return to_series(rows);
    }
  }
  return out;
}

bool DataCube::audit() const {
  auto per_bin_equal = [](const Series& parent, const std::vector<const Series*>& parts) {
    auto merged = merge_series(parts);
    if (merged.total() != parent.total()) return false;
    if (parent.total() == 0) return true;
    auto lo = std::min(parent.first_bin, merged.first_bin);
    auto hi = std::max(parent.end_bin(), merged.end_bin());
    for (auto b = lo; b < hi; ++b) {
      if (parent.sum(b, b + 1) != merged.sum(b, b + 1)) return false;
    }
    if (merged.day_users.size() != parent.day_users.size()) return false;
    for (std::size_t i = 0; i < merged.day_users.size(); ++i) {
      if (merged.day_users[i].day != parent.day_users[i].day ||
          merged.day_users[i].users != parent.day_users[i].users) {
        return false;
      }
    }
    return true;
  };
  for (const auto& node : nodes_) {
    std::vector<const Series*> parts;
    if (node.children.empty()) {
      for (auto p = node.order_begin; p < node.order_end; ++p) {
        parts.push_back(&data_[order_[p]].series);
      }
    } else {
      std::uint32_t covered = 0;
      for (auto c : node.children) {
        parts.push_back(&nodes_[c].series);
        covered += nodes_[c].order_end - nodes_[c].order_begin;
      }
      if (covered != node.order_end - node.order_begin) return false;
    }
    if (!per_bin_equal(node.series, parts)) return false;
  }
  std::uint64_t units = 0;
  for (const auto& d : data_) units += d.series.total();
  return units == total();
}

void DataCube::write_snapshot(std::ostream& out) const {
  Writer w;
  w.raw(kMagic, 4);
  w.u32(kSnapshotVersion);
  w.u8(static_cast<std::uint8_t>(kind_));
  w.u32(static_cast<std::uint32_t>(depth_));
  w.u64(record_count_);
  w.u8(extent_ ? 1 : 0);
  w.i64(extent_ ? extent_->start.index : 0);
  w.i64(extent_ ? extent_->end.index : 0);
  w.u32(static_cast<std::uint32_t>(antennas_.size()));
  for (const auto& a : antennas_) {
    w.str(a.label);
    w.f64(a.lat);
    w.f64(a.lon);
    w.str(a.region);
  }
  w.u32(static_cast<std::uint32_t>(users_.size()));
  for (const auto& u : users_) w.str(u);
  for (const auto& d : data_) {
    if (kind_ == CubeKind::Individual) {
      w.u64(d.entries.size());
      for (const auto& e : d.entries) {
        w.i64(e.bin);
        w.u32(e.user);
      }
    } else {
      const auto& s = d.series;
      std::vector<std::pair<std::int64_t, std::uint64_t>> sparse;
      for (std::size_t i = 0; i + 1 < s.prefix.size(); ++i) {
        auto c = s.prefix[i + 1] - s.prefix[i];
        if (c) sparse.emplace_back(s.first_bin + static_cast<std::int64_t>(i), c);
      }
      w.u64(sparse.size());
      for (const auto& [bin, c] : sparse) {
        w.i64(bin);
        w.u64(c);
      }
    }
  }
  auto sum = fnv1a(w.buffer());
  w.u64(sum);
  out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
  if (!out) throw CubeError(CubeErrorCode::Io, "snapshot write failed");
}

void DataCube::write_snapshot(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CubeError(CubeErrorCode::Io, "cannot open " + path);
  write_snapshot(out);
}

DataCube DataCube::load_snapshot(std::istream& in) {
  std::ostringstream ss;
  ss << in.rdbuf();
  auto data = ss.str();
  if (data.size() < 4 || std::memcmp(data.data(), kMagic, 4) != 0) {
    throw CubeError(CubeErrorCode::BadMagic, "not a cube snapshot");
  }
  Reader r(std::string_view(data).substr(4));
  auto version = r.u32();
  if (version != kSnapshotVersion) {
    throw CubeError(CubeErrorCode::VersionMismatch,
                    "snapshot version " + std::to_string(version) + " unsupported");
  }
  auto kind_byte = r.u8();
  if (kind_byte > 1) throw CubeError(CubeErrorCode::Corrupt, "bad cube kind");
  auto kind = static_cast<CubeKind>(kind_byte);
  auto depth = static_cast<int>(r.u32());
  auto record_count = r.u64();
  auto has_extent = r.u8();
  auto ext_start = r.i64();
  auto ext_end = r.i64();
  std::optional<TimeInterval> extent;
  if (has_extent) extent = TimeInterval{TimeBin{ext_start}, TimeBin{ext_end}};
  auto n = r.u32();
  std::vector<Antenna> antennas;
  for (std::uint32_t i = 0; i < n; ++i) {
    Antenna a;
    a.id = i;
    a.label = r.str();
    a.lat = r.f64();
    a.lon = r.f64();
    a.region = r.str();
    antennas.push_back(std::move(a));
  }
  auto n_users = r.u32();
  std::vector<std::string> users;
  for (std::uint32_t i = 0; i < n_users; ++i) users.push_back(r.str());
  std::vector<std::vector<std::pair<std::int64_t, std::uint64_t>>> counts(n);
  std::vector<std::vector<Entry>> entries(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    auto m = r.u64();
    if (kind == CubeKind::Individual) {
      r.need(m * 12);
      for (std::uint64_t k = 0; k < m; ++k) {
        auto bin = r.i64();
        auto user = r.u32();
        if (user >= n_users) throw CubeError(CubeErrorCode::Corrupt, "user index out of range");
        entries[i].push_back({bin, user});
      }
    } else {
      r.need(m * 16);
      for (std::uint64_t k = 0; k < m; ++k) {
        auto bin = r.i64();
        auto c = r.u64();
        counts[i].emplace_back(bin, c);
      }
    }
  }
  auto body_len = 4 + r.pos();
  auto stored = r.u64();
  if (r.remaining() != 0) throw CubeError(CubeErrorCode::Corrupt, "trailing bytes");
  if (fnv1a(std::string_view(data).substr(0, body_len)) != stored) {
    throw CubeError(CubeErrorCode::Corrupt, "checksum mismatch");
  }
  return assemble(kind, depth, std::move(antennas), std::move(users), std::move(counts),
                  std::move(entries), record_count, extent);
}

DataCube DataCube::load_snapshot(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CubeError(CubeErrorCode::Io, "cannot open " + path);
  return load_snapshot(in);
}

// --- CubeBuilder -----------------------------------------------------------

CubeBuilder::CubeBuilder(const AntennaRegistry& registry, int depth, std::optional<CubeKind> kind)
    : kind_(kind), depth_(depth) {
  if (depth < 1 || depth > kMaxQuadDepth) {
    throw CubeError(CubeErrorCode::DepthOutOfRange, "depth must be in [1, 25]");
  }
  antennas_.assign(registry.antennas().begin(), registry.antennas().end());
  counts_.resize(registry.size());
  entries_.resize(registry.size());
}

void CubeBuilder::set_kind(CubeKind k) {
  if (kind_ && *kind_ != k) {
    throw CubeError(CubeErrorCode::MixedRecordKinds,
                    "aggregate and individual records cannot share a cube");
  }
  kind_ = k;
}

namespace {
void widen(std::optional<TimeInterval>& extent, TimeBin bin) {
  if (!extent) {
    extent = TimeInterval{bin, TimeBin{bin.index + 1}};
  } else {
    extent->start.index = std::min(extent->start.index, bin.index);
    extent->end.index = std::max(extent->end.index, bin.index + 1);
  }
}
}  // namespace

void CubeBuilder::add(const AggregateRecord& r) {
  set_kind(CubeKind::Aggregate);
  if (r.antenna >= counts_.size()) throw Error("record antenna not in registry");
  counts_[r.antenna].emplace_back(r.bin.index, r.connections);
  widen(extent_, r.bin);
  ++record_count_;
}

void CubeBuilder::add(const IndividualRecord& r) {
  set_kind(CubeKind::Individual);
  if (r.antenna >= entries_.size()) throw Error("record antenna not in registry");
  auto [it, inserted] = user_index_.try_emplace(r.user, static_cast<std::uint32_t>(users_.size()));
  if (inserted) users_.push_back(r.user);
  entries_[r.antenna].push_back({r.bin.index, it->second});
  widen(extent_, r.bin);
  ++record_count_;
}

DataCube CubeBuilder::finish() && {
  return DataCube::assemble(kind_.value_or(CubeKind::Aggregate), depth_, std::move(antennas_),
                            std::move(users_), std::move(counts_), std::move(entries_),
                            record_count_, extent_);
}

DataCube build_cube(std::span<const AggregateRecord> records, const AntennaRegistry& registry,
                    int depth) {
  CubeBuilder b(registry, depth, CubeKind::Aggregate);
  for (const auto& r : records) b.add(r);
  return std::move(b).finish();
}

DataCube build_cube(std::span<const IndividualRecord> records, const AntennaRegistry& registry,
                    int depth) {
  CubeBuilder b(registry, depth, CubeKind::Individual);
  for (const auto& r : records) b.add(r);
  return std::move(b).finish();
}

// --- brute force -----------------------------------------------------------

namespace {

struct ScanRow {
  std::int64_t bin;
  AntennaIndex antenna;
  std::uint64_t units;
  const std::string* user;
};

ResultSeries scan(const std::vector<ScanRow>& rows, const AntennaRegistry& registry,
                  const Query& q) {
  q.validate();
  auto keep_antenna = [&](AntennaIndex id) {
    const auto& a = registry.at(id);
    if (q.bbox) return q.bbox->contains(a.lat, a.lon);
    if (q.regions) {
      return std::find(q.regions->begin(), q.regions->end(), a.region) != q.regions->end();
    }
    if (q.antennas) {
      return std::find(q.antennas->begin(), q.antennas->end(), id) != q.antennas->end();
    }
    return true;
  };
  if (q.antennas) {
    for (auto id : *q.antennas) {
      if (id >= registry.size()) invalid("unknown antenna id " + std::to_string(id));
    }
  }
  std::optional<std::pair<std::int64_t, std::int64_t>> interval;
  if (q.time) {
    interval = {q.time->start.index, q.time->end.index};
  } else {
    for (const auto& r : rows) {
      if (!interval) {
        interval = {r.bin, r.bin + 1};
      } else {
        interval->first = std::min(interval->first, r.bin);
        interval->second = std::max(interval->second, r.bin + 1);
      }
    }
  }
  bool distinct = q.select == Select::DistinctUsers;
  std::map<std::string, std::uint64_t> sums;
  std::map<std::string, std::set<std::string>> users;
  std::map<std::int64_t, std::uint64_t> time_sums;
  std::map<std::int64_t, std::set<std::string>> time_users;
  bool time_group = q.group_by == GroupBy::Hour || q.group_by == GroupBy::Day ||
                    q.group_by == GroupBy::Week;
  std::int64_t width = time_group ? detail::bucket_bins(q.group_by) : 0;
  if (time_group && interval) {
    for (auto b = interval->first; b < interval->second; ++b) time_sums[floor_div(b, width)];
  }
  for (const auto& r : rows) {
    if (!interval || r.bin < interval->first || r.bin >= interval->second) continue;
    if (!keep_antenna(r.antenna)) continue;
    if (time_group) {
      auto key = floor_div(r.bin, width);
      time_sums[key] += r.units;
      if (distinct) time_users[key].insert(*r.user);
      continue;
    }
    std::string key = "total";
    if (q.group_by == GroupBy::Antenna) key = std::to_string(r.antenna);
    if (q.group_by == GroupBy::Region) key = registry.at(r.antenna).region;
    sums[key] += r.units;
    if (distinct) users[key].insert(*r.user);
  }
  ResultSeries out;
  if (time_group) {
    for (const auto& [k, v] : time_sums) {
      out.keys.push_back(detail::time_key_label(q.group_by, k));
      out.values.push_back(distinct ? time_users[k].size() : v);
    }
    return out;
  }
  if (q.group_by == GroupBy::None) {
    out.keys.push_back("total");
    out.values.push_back(distinct ? users["total"].size() : sums["total"]);
    return out;
  }
  std::vector<std::pair<std::string, std::uint64_t>> table;
  for (const auto& [k, v] : sums) {
    auto value = distinct ? users[k].size() : v;
    if (value > 0) table.emplace_back(k, value);
  }
  sort_by_value(table, q.group_by == GroupBy::Antenna);
  return to_series(table);
}

}  // namespace

ResultSeries brute_force_query(std::span<const AggregateRecord> records,
                               const AntennaRegistry& registry, const Query& q) {
  if (q.select == Select::DistinctUsers) {
    throw CubeError(CubeErrorCode::UnsupportedSelect, "aggregate records carry no users");
  }
  std::vector<ScanRow> rows;
  rows.reserve(records.size());
  for (const auto& r : records) rows.push_back({r.bin.index, r.antenna, r.connections, nullptr});
  return scan(rows, registry, q);
}

ResultSeries brute_force_query(std::span<const IndividualRecord> records,
                               const AntennaRegistry& registry, const Query& q) {
  std::vector<ScanRow> rows;
  rows.reserve(records.size());
  for (const auto& r : records) rows.push_back({r.bin.index, r.antenna, 1, &r.user});
  return scan(rows, registry, q);
}

}  // namespace mobiscope
