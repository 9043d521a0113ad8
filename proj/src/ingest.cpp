#include "mobiscope/ingest.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "json.hpp"

namespace mobiscope {

std::string_view error_code_name(ParseErrorCode code) {
  switch (code) {
    case ParseErrorCode::Malformed: return "Malformed";
    case ParseErrorCode::NegativeCount: return "NegativeCount";
    case ParseErrorCode::MisalignedTimestamp: return "MisalignedTimestamp";
    case ParseErrorCode::OutOfRange: return "OutOfRange";
    case ParseErrorCode::UnknownAntenna: return "UnknownAntenna";
    case ParseErrorCode::EmptyUserId: return "EmptyUserId";
    case ParseErrorCode::DuplicateAntenna: return "DuplicateAntenna";
    case ParseErrorCode::EmptyRegistry: return "EmptyRegistry";
    case ParseErrorCode::InvalidRegions: return "InvalidRegions";
    case ParseErrorCode::TotalMismatch: return "TotalMismatch";
    case ParseErrorCode::UnknownRegion: return "UnknownRegion";
    case ParseErrorCode::NonMonotonic: return "NonMonotonic";
  }
  return "Unknown";
}

ParseError::ParseError(ParseErrorCode code, std::size_t line, const std::string& detail)
    : Error("line " + std::to_string(line) + ": " + std::string(error_code_name(code)) + ": " +
            detail),
      code_(code),
      line_(line) {}

namespace detail {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return out;
}

}  // namespace detail

namespace {

using detail::split_csv;
using detail::trim;

double parse_double(std::string_view s, std::size_t line, const char* what) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw ParseError(ParseErrorCode::Malformed, line, std::string("bad ") + what);
  }
  return v;
}

std::pair<double, double> parse_coordinates(std::string_view lat_s, std::string_view lon_s,
                                            std::size_t line) {
  double lat = parse_double(lat_s, line, "latitude");
  double lon = parse_double(lon_s, line, "longitude");
  if (lat < -90 || lat > 90 || lon < -180 || lon > 180) {
    throw ParseError(ParseErrorCode::OutOfRange, line, "coordinates out of range");
  }
  return {lat, lon};
}

TimeBin parse_bin(std::string_view s, std::size_t line) {
  std::int64_t secs = 0;
  try {
    secs = parse_timestamp_seconds(s);
  } catch (const Error& e) {
    throw ParseError(ParseErrorCode::Malformed, line, e.what());
  }
  if (secs < 0) throw ParseError(ParseErrorCode::OutOfRange, line, "timestamp before study start");
  if (secs % kBinSeconds != 0) {
    throw ParseError(ParseErrorCode::MisalignedTimestamp, line,
                     "timestamp not on a 5-minute boundary");
  }
  return TimeBin{secs / kBinSeconds};
}

AntennaIndex resolve(const AntennaRegistry& registry, double lat, double lon, std::size_t line) {
  auto id = registry.find(lat, lon);
  if (!id) {
    throw ParseError(ParseErrorCode::UnknownAntenna, line,
                     "no antenna at " + format_coordinate(lat) + "," + format_coordinate(lon));
  }
  return *id;
}

std::uint64_t micro_key(double lat, double lon) {
  auto a = static_cast<std::uint64_t>(std::llround((lat + 90.0) * 1e6));
  auto b = static_cast<std::uint64_t>(std::llround((lon + 180.0) * 1e6));
  return (a << 32) | b;
}

std::uint64_t grid_key(std::int64_t gy, std::int64_t gx) {
  return (static_cast<std::uint64_t>(gy) << 32) ^ static_cast<std::uint64_t>(gx);
}

std::int64_t grid_cell(double v) {
  return static_cast<std::int64_t>(std::floor(v / AntennaRegistry::kMatchTolerance));
}

bool ring_contains(const Ring& ring, double lat, double lon) {
  bool inside = false;
  for (std::size_t i = 0, j = ring.size() - 1; i < ring.size(); j = i++) {
    const auto& a = ring[i];
    const auto& b = ring[j];
    if ((a.lat > lat) != (b.lat > lat)) {
      double cross = (b.lon - a.lon) * (lat - a.lat) / (b.lat - a.lat) + a.lon;
      if (lon < cross) inside = !inside;
    }
  }
  return inside;
}

Ring parse_ring(const nlohmann::json& j) {
  Ring ring;
  for (const auto& pt : j) {
    if (!pt.is_array() || pt.size() < 2) throw Error("bad coordinate");
    ring.push_back({pt[0].get<double>(), pt[1].get<double>()});
  }
  if (ring.size() < 3) throw Error("ring with fewer than 3 points");
  return ring;
}

Polygon parse_polygon(const nlohmann::json& j) {
  Polygon poly;
  for (const auto& r : j) poly.push_back(parse_ring(r));
  if (poly.empty()) throw Error("empty polygon");
  return poly;
}

template <typename Record, typename Parser>
IngestStats read_corpus(std::istream& in, std::string_view header, const IngestOptions& options,
                        Parser parse, const std::function<void(Record&&)>& sink) {
  IngestStats stats;
  std::string line;
  std::size_t line_no = 0;
  bool seen_header = false;
  std::optional<Date> first_day;
  std::optional<Date> last_day;
  while (std::getline(in, line)) {
    ++line_no;
    auto view = trim(line);
    if (!seen_header) {
      seen_header = true;
      if (view != header) {
        throw ParseError(ParseErrorCode::Malformed, line_no,
                         "expected header '" + std::string(header) + "'");
      }
      continue;
    }
    if (view.empty()) continue;
    ++stats.lines;
    try {
      Record r = parse(view, line_no);
      Date day = r.bin.day();
      if (options.drop_excluded && options.calendar.is_excluded(day)) {
        ++stats.excluded;
        continue;
      }
      if (!first_day || day < *first_day) first_day = day;
      if (!last_day || day > *last_day) last_day = day;
      ++stats.records;
      sink(std::move(r));
    } catch (const ParseError& e) {
      if (options.strict) throw;
      ++stats.errors;
      if (stats.error_samples.size() < options.max_error_samples) {
        stats.error_samples.emplace_back(e.what());
      }
    }
  }
  if (first_day) stats.coverage = DateRange{*first_day, *last_day + std::chrono::days{1}};
  return stats;
}

}  // namespace

std::string_view spi_name(SpiLevel s) {
  switch (s) {
    case SpiLevel::Low: return "low";
    case SpiLevel::Fair: return "fair";
    case SpiLevel::Good: return "good";
    case SpiLevel::High: return "high";
  }
  return "?";
}

bool Region::contains(double lat, double lon) const {
  for (const auto& poly : polygons) {
    bool inside = false;
    // Even-odd across the outer ring and holes.
    for (const auto& ring : poly) {
      if (ring_contains(ring, lat, lon)) inside = !inside;
    }
    if (inside) return true;
  }
  return false;
}

RegionSet RegionSet::from_geojson(std::string_view text) {
  RegionSet set;
  set.source_ = std::string(text);
  try {
    auto doc = nlohmann::json::parse(text);
    if (doc.value("type", "") != "FeatureCollection" || !doc.contains("features")) {
      throw Error("not a FeatureCollection");
    }
    for (const auto& f : doc.at("features")) {
      const auto& props = f.at("properties");
      Region r;
      r.code = props.at("code").get<std::string>();
      if (r.code.size() != 2 || r.code == kOutRegion) throw Error("region code must be 2 letters");
      if (set.find(r.code)) throw Error("duplicate region code " + r.code);
      r.name = props.value("name", r.code);
      auto spi = props.at("spi").get<std::string>();
      if (spi == "low") {
        r.spi = SpiLevel::Low;
      } else if (spi == "fair") {
        r.spi = SpiLevel::Fair;
      } else if (spi == "good") {
        r.spi = SpiLevel::Good;
      } else if (spi == "high") {
        r.spi = SpiLevel::High;
      } else {
        throw Error("unknown spi '" + spi + "'");
      }
      const auto& geom = f.at("geometry");
      auto type = geom.at("type").get<std::string>();
      if (type == "Polygon") {
        r.polygons.push_back(parse_polygon(geom.at("coordinates")));
      } else if (type == "MultiPolygon") {
        for (const auto& p : geom.at("coordinates")) r.polygons.push_back(parse_polygon(p));
      } else {
        throw Error("unsupported geometry " + type);
      }
      set.regions_.push_back(std::move(r));
    }
  } catch (const ParseError&) {
    throw;
  } catch (const std::exception& e) {
    throw ParseError(ParseErrorCode::InvalidRegions, 0, e.what());
  }
  return set;
}

RegionSet RegionSet::from_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(ParseErrorCode::InvalidRegions, 0, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_geojson(ss.str());
}

const Region* RegionSet::find(std::string_view code) const {
  for (const auto& r : regions_) {
    if (r.code == code) return &r;
  }
  return nullptr;
}

std::string RegionSet::locate(double lat, double lon) const {
  for (const auto& r : regions_) {
    if (r.contains(lat, lon)) return r.code;
  }
  return std::string(kOutRegion);
}

std::vector<std::string> RegionSet::codes() const {
  std::vector<std::string> out;
  for (const auto& r : regions_) out.push_back(r.code);
  return out;
}

AntennaIndex AntennaRegistry::add(std::string label, double lat, double lon, std::string region) {
  if (lat < -90 || lat > 90 || lon < -180 || lon > 180) {
    throw ParseError(ParseErrorCode::OutOfRange, 0, "antenna coordinates out of range");
  }
  auto key = micro_key(lat, lon);
  if (exact_.count(key)) {
    throw ParseError(ParseErrorCode::DuplicateAntenna, 0,
                     "duplicate antenna at " + format_coordinate(lat) + "," +
                         format_coordinate(lon));
  }
  auto id = static_cast<AntennaIndex>(antennas_.size());
  antennas_.push_back(Antenna{id, std::move(label), lat, lon, std::move(region)});
  exact_.emplace(key, id);
  grid_[grid_key(grid_cell(lat), grid_cell(lon))].push_back(id);
  return id;
}

std::optional<AntennaIndex> AntennaRegistry::find(double lat, double lon) const {
  if (auto it = exact_.find(micro_key(lat, lon)); it != exact_.end()) return it->second;
  auto gy = grid_cell(lat);
  auto gx = grid_cell(lon);
  std::optional<AntennaIndex> best;
  double best_d = 0;
  for (std::int64_t dy = -1; dy <= 1; ++dy) {
    for (std::int64_t dx = -1; dx <= 1; ++dx) {
      auto it = grid_.find(grid_key(gy + dy, gx + dx));
      if (it == grid_.end()) continue;
      for (auto id : it->second) {
        const auto& a = antennas_[id];
        double d = std::max(std::abs(a.lat - lat), std::abs(a.lon - lon));
        if (d <= kMatchTolerance && (!best || d < best_d || (d == best_d && id < *best))) {
          best = id;
          best_d = d;
        }
      }
    }
  }
  return best;
}

AntennaRegistry AntennaRegistry::from_csv(std::istream& in, const RegionSet& regions) {
  AntennaRegistry reg;
  std::string line;
  std::size_t line_no = 0;
  bool seen_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    auto view = trim(line);
    if (!seen_header) {
      seen_header = true;
      if (view != kAntennaHeader) {
        throw ParseError(ParseErrorCode::Malformed, line_no, "expected antenna header");
      }
      continue;
    }
    if (view.empty()) continue;
    auto f = split_csv(view);
    if (f.size() != 3 || f[0].empty()) {
      throw ParseError(ParseErrorCode::Malformed, line_no, "expected 3 fields");
    }
    auto [lat, lon] = parse_coordinates(f[1], f[2], line_no);
    try {
      reg.add(std::string(f[0]), lat, lon, regions.locate(lat, lon));
    } catch (const ParseError& e) {
      throw ParseError(e.code(), line_no, e.what());
    }
  }
  if (reg.empty()) throw ParseError(ParseErrorCode::EmptyRegistry, line_no, "no antennas");
  return reg;
}

AntennaRegistry AntennaRegistry::from_file(const std::string& path, const RegionSet& regions) {
  std::ifstream in(path);
  if (!in) throw ParseError(ParseErrorCode::Malformed, 0, "cannot open " + path);
  return from_csv(in, regions);
}

void AntennaRegistry::write_csv(std::ostream& out) const {
  out << kAntennaHeader << '\n';
  for (const auto& a : antennas_) {
    out << a.label << ',' << format_coordinate(a.lat) << ',' << format_coordinate(a.lon) << '\n';
  }
}

std::string format_coordinate(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

AggregateRecord parse_aggregate_record(std::string_view line, const AntennaRegistry& registry,
                                       std::size_t line_no) {
  auto f = split_csv(trim(line));
  if (f.size() != 4) throw ParseError(ParseErrorCode::Malformed, line_no, "expected 4 fields");
  AggregateRecord r;
  r.bin = parse_bin(f[0], line_no);
  auto [lat, lon] = parse_coordinates(f[1], f[2], line_no);
  std::int64_t count = 0;
  auto [ptr, ec] = std::from_chars(f[3].data(), f[3].data() + f[3].size(), count);
  if (f[3].empty() || ec != std::errc{} || ptr != f[3].data() + f[3].size()) {
    throw ParseError(ParseErrorCode::Malformed, line_no, "bad connection count");
  }
  if (count < 0) throw ParseError(ParseErrorCode::NegativeCount, line_no, "negative count");
  r.connections = static_cast<std::uint64_t>(count);
  r.antenna = resolve(registry, lat, lon, line_no);
  return r;
}

IndividualRecord parse_individual_record(std::string_view line, const AntennaRegistry& registry,
                                         std::size_t line_no) {
  auto f = split_csv(trim(line));
  if (f.size() != 4) throw ParseError(ParseErrorCode::Malformed, line_no, "expected 4 fields");
  IndividualRecord r;
  r.bin = parse_bin(f[0], line_no);
  if (f[1].empty()) throw ParseError(ParseErrorCode::EmptyUserId, line_no, "empty user id");
  r.user = std::string(f[1]);
  auto [lat, lon] = parse_coordinates(f[2], f[3], line_no);
  r.antenna = resolve(registry, lat, lon, line_no);
  return r;
}

std::string format_aggregate_record(const AggregateRecord& r, const AntennaRegistry& registry) {
  const auto& a = registry.at(r.antenna);
  return format_timestamp(r.bin) + ',' + format_coordinate(a.lat) + ',' +
         format_coordinate(a.lon) + ',' + std::to_string(r.connections);
}

std::string format_individual_record(const IndividualRecord& r, const AntennaRegistry& registry) {
  const auto& a = registry.at(r.antenna);
  return format_timestamp(r.bin) + ',' + r.user + ',' + format_coordinate(a.lat) + ',' +
         format_coordinate(a.lon);
}

IngestStats read_aggregate(std::istream& in, const AntennaRegistry& registry,
                           const std::function<void(AggregateRecord&&)>& sink,
                           const IngestOptions& options) {
  return read_corpus<AggregateRecord>(
      in, kAggregateHeader, options,
      [&](std::string_view l, std::size_t n) { return parse_aggregate_record(l, registry, n); },
      sink);
}

IngestStats read_individual(std::istream& in, const AntennaRegistry& registry,
                            const std::function<void(IndividualRecord&&)>& sink,
                            const IngestOptions& options) {
  return read_corpus<IndividualRecord>(
      in, kIndividualHeader, options,
      [&](std::string_view l, std::size_t n) { return parse_individual_record(l, registry, n); },
      sink);
}

double scale_week(double raw_total, int week, const ExclusionCalendar& calendar) {
  auto f = calendar.scale_factor(week);
  return raw_total * static_cast<double>(f.num) / static_cast<double>(f.den);
}

}  // namespace mobiscope
