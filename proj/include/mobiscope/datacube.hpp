#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "mobiscope/core.hpp"
#include "mobiscope/ingest.hpp"

namespace mobiscope {

inline constexpr int kDefaultCubeDepth = 17;

enum class CubeErrorCode {
  InvalidQuery,
  UnsupportedSelect,
  DepthOutOfRange,
  MixedRecordKinds,
  BadMagic,
  VersionMismatch,
  Truncated,
  Corrupt,
  Io,
};

std::string_view error_code_name(CubeErrorCode code);

class CubeError : public Error {
 public:
  CubeError(CubeErrorCode code, const std::string& detail);
  CubeErrorCode code() const { return code_; }

 private:
  CubeErrorCode code_;
};

enum class CubeKind : std::uint8_t { Aggregate = 0, Individual = 1 };

enum class Select { Count, DistinctUsers };
enum class GroupBy { None, Hour, Day, Week, Antenna, Region };

/// Inclusive lat/lon box.
struct BBox {
  double min_lat;
  double min_lon;
  double max_lat;
  double max_lon;

  bool contains(double lat, double lon) const {
    return lat >= min_lat && lat <= max_lat && lon >= min_lon && lon <= max_lon;
  }
};

/// Half-open interval of bins.
struct TimeInterval {
  TimeBin start;
  TimeBin end;
};

struct Query {
  Select select = Select::Count;
  std::optional<TimeInterval> time;
  std::optional<BBox> bbox;
  std::optional<std::vector<std::string>> regions;
  std::optional<std::vector<AntennaIndex>> antennas;
  GroupBy group_by = GroupBy::None;

  /// Throws CubeError(InvalidQuery).
  void validate() const;
};

/// Time keys ascend; antenna and region keys sort by value desc, then key.
struct ResultSeries {
  std::vector<std::string> keys;
  std::vector<std::uint64_t> values;

  bool operator==(const ResultSeries&) const = default;
};

std::string_view select_name(Select s);
std::string_view group_by_name(GroupBy g);

/// Parses the query language. Unknown fields are rejected; a top-level
/// "source" member is ignored here (the server consumes it).
Query query_from_json(const nlohmann::json& j);
nlohmann::json query_to_json(const Query& q);
nlohmann::json to_json(const ResultSeries& r);

/// Immutable quadtree + time index. Construction goes through CubeBuilder
/// or load_snapshot.
class DataCube {
 public:
  struct DayUsers {
    std::int32_t day;  // days since study start
    std::vector<std::uint32_t> users;
  };

  struct Entry {
    std::int64_t bin;
    std::uint32_t user;
    auto operator<=>(const Entry&) const = default;
  };

  /// Prefix sums over a dense bin span, plus the distinct-user summaries.
  struct Series {
    std::int64_t first_bin = 0;
    std::vector<std::uint64_t> prefix{0};
    std::vector<DayUsers> day_users;

    std::uint64_t sum(std::int64_t from, std::int64_t to) const;
    std::uint64_t total() const { return prefix.back(); }
    std::int64_t end_bin() const { return first_bin + static_cast<std::int64_t>(prefix.size()) - 1; }
  };

  struct Node {
    BBox extent{};
    int level = 0;  // depth of the cell this node stands for
    std::vector<std::uint32_t> children;
    // Antennas covered, as a range of antenna_order().
    std::uint32_t order_begin = 0;
    std::uint32_t order_end = 0;
    Series series;
  };

  CubeKind kind() const { return kind_; }
  int depth() const { return depth_; }
  std::span<const Antenna> antennas() const { return antennas_; }
  std::span<const std::string> users() const { return users_; }
  std::uint64_t total() const;
  std::uint64_t record_count() const { return record_count_; }
  /// Bin extent of stored records, end exclusive; nullopt when empty.
  std::optional<TimeInterval> time_extent() const;
  bool has_distinct_users() const { return kind_ == CubeKind::Individual; }

  ResultSeries query(const Query& q) const;

  /// Walks every internal node and checks per-bin sums and user summaries
  /// against the children. Returns false on the first violation.
  bool audit() const;

  std::span<const Node> nodes() const { return nodes_; }
  std::span<const std::uint32_t> antenna_order() const { return order_; }

  void write_snapshot(std::ostream& out) const;
  void write_snapshot(const std::string& path) const;
  static DataCube load_snapshot(std::istream& in);
  static DataCube load_snapshot(const std::string& path);

 private:
  friend class CubeBuilder;

  struct AntennaData {
    Series series;
    std::vector<Entry> entries;  // individual cubes only, sorted
  };

  DataCube() = default;
  static DataCube assemble(CubeKind kind, int depth, std::vector<Antenna> antennas,
                           std::vector<std::string> users,
                           std::vector<std::vector<std::pair<std::int64_t, std::uint64_t>>> counts,
                           std::vector<std::vector<Entry>> entries, std::uint64_t record_count,
                           std::optional<TimeInterval> extent);
  std::uint32_t build_node(std::span<std::uint32_t> ids, const std::vector<std::uint64_t>& codes);

  struct Piece {
    const Series* series;
    std::uint32_t order_begin;
    std::uint32_t order_end;
  };

  // chosen == nullptr selects everything.
  std::vector<Piece> pieces(const std::vector<char>* chosen) const;
  void collect(std::uint32_t node, const std::vector<std::uint32_t>& chosen_prefix,
               std::vector<Piece>& out) const;
  std::uint64_t count(const std::vector<Piece>& pieces, std::int64_t from, std::int64_t to) const;
  std::uint64_t distinct(const std::vector<Piece>& pieces, std::int64_t from, std::int64_t to,
                         std::vector<std::uint32_t>& marks, std::uint32_t& stamp) const;

  CubeKind kind_ = CubeKind::Aggregate;
  int depth_ = kDefaultCubeDepth;
  std::vector<Antenna> antennas_;
  std::vector<std::string> users_;
  std::vector<AntennaData> data_;
  std::vector<Node> nodes_;
  std::vector<std::uint32_t> order_;
  std::vector<std::uint32_t> position_;  // inverse of order_
  std::int64_t root_ = -1;
  std::uint64_t record_count_ = 0;
  std::optional<TimeInterval> extent_;
};

/// Single-writer accumulator. The first record fixes the cube kind unless
/// one is given up front; mixing kinds throws MixedRecordKinds.
class CubeBuilder {
 public:
  CubeBuilder(const AntennaRegistry& registry, int depth = kDefaultCubeDepth,
              std::optional<CubeKind> kind = std::nullopt);

  void add(const AggregateRecord& r);
  void add(const IndividualRecord& r);
  DataCube finish() &&;

 private:
  void set_kind(CubeKind k);

  std::optional<CubeKind> kind_;
  std::vector<std::vector<std::pair<std::int64_t, std::uint64_t>>> counts_;
  std::vector<std::vector<DataCube::Entry>> entries_;
  std::unordered_map<std::string, std::uint32_t> user_index_;
  std::vector<std::string> users_;
  std::uint64_t record_count_ = 0;
  std::optional<TimeInterval> extent_;
  int depth_;
  std::vector<Antenna> antennas_;
};

DataCube build_cube(std::span<const AggregateRecord> records, const AntennaRegistry& registry,
                    int depth = kDefaultCubeDepth);
DataCube build_cube(std::span<const IndividualRecord> records, const AntennaRegistry& registry,
                    int depth = kDefaultCubeDepth);

/// Reference answer by full scan; same semantics as DataCube::query.
ResultSeries brute_force_query(std::span<const AggregateRecord> records,
                               const AntennaRegistry& registry, const Query& q);
ResultSeries brute_force_query(std::span<const IndividualRecord> records,
                               const AntennaRegistry& registry, const Query& q);

namespace detail {
std::string time_key_label(GroupBy g, std::int64_t bucket);
std::int64_t bucket_bins(GroupBy g);
}  // namespace detail

}  // namespace mobiscope
