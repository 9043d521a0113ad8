#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mobiscope/core.hpp"

namespace mobiscope {

enum class ParseErrorCode {
  Malformed,
  NegativeCount,
  MisalignedTimestamp,
  OutOfRange,
  UnknownAntenna,
  EmptyUserId,
  DuplicateAntenna,
  EmptyRegistry,
  InvalidRegions,
  TotalMismatch,
  UnknownRegion,
  NonMonotonic,
};

std::string_view error_code_name(ParseErrorCode code);

/// A rejected input line. `line` is 1-based, 0 when not tied to a file.
class ParseError : public Error {
 public:
  ParseError(ParseErrorCode code, std::size_t line, const std::string& detail);

  ParseErrorCode code() const { return code_; }
  std::size_t line() const { return line_; }

 private:
  ParseErrorCode code_;
  std::size_t line_;
};

// ---------------------------------------------------------------------------
// Regions

enum class SpiLevel { Low, Fair, Good, High };

std::string_view spi_name(SpiLevel s);

inline constexpr std::string_view kOutRegion = "OUT";

struct GeoPoint {
  double lon;
  double lat;
};

using Ring = std::vector<GeoPoint>;
/// Outer ring followed by holes.
using Polygon = std::vector<Ring>;

struct Region {
  std::string code;
  std::string name;
  SpiLevel spi = SpiLevel::Fair;
  std::vector<Polygon> polygons;

  bool contains(double lat, double lon) const;
};

class RegionSet {
 public:
  RegionSet() = default;
  /// Parses a GeoJSON FeatureCollection. Throws ParseError(InvalidRegions).
  static RegionSet from_geojson(std::string_view text);
  static RegionSet from_file(const std::string& path);

  const std::vector<Region>& regions() const { return regions_; }
  const Region* find(std::string_view code) const;
  /// Code of the first region containing the point, or OUT.
  std::string locate(double lat, double lon) const;
  /// The document as loaded, byte for byte.
  const std::string& source_text() const { return source_; }
  /// Codes in file order, without OUT.
  std::vector<std::string> codes() const;

 private:
  std::vector<Region> regions_;
  std::string source_;
};

// ---------------------------------------------------------------------------
// Antennas

using AntennaIndex = std::uint32_t;

struct Antenna {
  AntennaIndex id = 0;
  std::string label;
  double lat = 0;
  double lon = 0;
  std::string region;
};

/// Antennas keyed by coordinates. Ids are dense and follow insertion order.
class AntennaRegistry {
 public:
  static constexpr double kMatchTolerance = 1e-5;

  AntennaRegistry() = default;

  /// Reads `antenna_id,lat,lon` CSV and tags each antenna with its region.
  static AntennaRegistry from_csv(std::istream& in, const RegionSet& regions);
  static AntennaRegistry from_file(const std::string& path, const RegionSet& regions);

  AntennaIndex add(std::string label, double lat, double lon, std::string region);

  std::size_t size() const { return antennas_.size(); }
  bool empty() const { return antennas_.empty(); }
  const Antenna& at(AntennaIndex id) const { return antennas_.at(id); }
  std::span<const Antenna> antennas() const { return antennas_; }

  /// Exact microdegree match, else nearest antenna within kMatchTolerance.
  std::optional<AntennaIndex> find(double lat, double lon) const;

  void write_csv(std::ostream& out) const;

 private:
  std::vector<Antenna> antennas_;
  std::unordered_map<std::uint64_t, AntennaIndex> exact_;
  std::unordered_map<std::uint64_t, std::vector<AntennaIndex>> grid_;
};

// ---------------------------------------------------------------------------
// Records

struct AggregateRecord {
  TimeBin bin;
  AntennaIndex antenna = 0;
  std::uint64_t connections = 0;

  bool operator==(const AggregateRecord&) const = default;
};

struct IndividualRecord {
  TimeBin bin;
  std::string user;
  AntennaIndex antenna = 0;

  bool operator==(const IndividualRecord&) const = default;
};

inline constexpr std::string_view kAggregateHeader = "timestamp,lat,lon,connections";
inline constexpr std::string_view kIndividualHeader = "timestamp,user_id,lat,lon";
inline constexpr std::string_view kAntennaHeader = "antenna_id,lat,lon";

AggregateRecord parse_aggregate_record(std::string_view line, const AntennaRegistry& registry,
                                       std::size_t line_no = 0);
IndividualRecord parse_individual_record(std::string_view line, const AntennaRegistry& registry,
                                         std::size_t line_no = 0);

std::string format_aggregate_record(const AggregateRecord& r, const AntennaRegistry& registry);
std::string format_individual_record(const IndividualRecord& r, const AntennaRegistry& registry);

/// Six-decimal coordinate text, as used by every canonical CSV.
std::string format_coordinate(double v);

struct IngestOptions {
  ExclusionCalendar calendar = ExclusionCalendar::study_default();
  bool drop_excluded = true;
  /// Rethrow the first ParseError instead of counting it.
  bool strict = false;
  std::size_t max_error_samples = 20;
};

struct IngestStats {
  std::uint64_t lines = 0;
  std::uint64_t records = 0;
  std::uint64_t errors = 0;
  std::uint64_t excluded = 0;
  std::vector<std::string> error_samples;
  /// Days spanned by the accepted records, end exclusive.
  std::optional<DateRange> coverage;
};

/// Streams a CSV corpus line by line into `sink`. Header is required unless
/// the input is empty. lines = records + errors + excluded.
IngestStats read_aggregate(std::istream& in, const AntennaRegistry& registry,
                           const std::function<void(AggregateRecord&&)>& sink,
                           const IngestOptions& options = {});
IngestStats read_individual(std::istream& in, const AntennaRegistry& registry,
                            const std::function<void(IndividualRecord&&)>& sink,
                            const IngestOptions& options = {});

/// raw_total * scale_factor(week).
double scale_week(double raw_total, int week, const ExclusionCalendar& calendar);

namespace detail {
std::vector<std::string_view> split_csv(std::string_view line);
std::string_view trim(std::string_view s);
}  // namespace detail

}  // namespace mobiscope
