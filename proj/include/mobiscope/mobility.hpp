#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mobiscope/core.hpp"
#include "mobiscope/ingest.hpp"

namespace mobiscope {

/// Distinct antennas per user-day: 1 / 2-5 / 6-10 / 11+.
enum class MobilityClass { NoMobility = 0, Low = 1, Medium = 2, High = 3 };

inline constexpr std::array<MobilityClass, 4> kAllClasses{
    MobilityClass::NoMobility, MobilityClass::Low, MobilityClass::Medium, MobilityClass::High};

std::string_view class_name(MobilityClass c);
std::optional<MobilityClass> parse_class(std::string_view name);

/// Throws Error for 0; callers treat an absent user separately.
MobilityClass classify_count(std::size_t distinct_antennas);

/// nullopt when the user has no record that day.
std::optional<MobilityClass> classify_user_day(std::span<const IndividualRecord> records);

struct Transition {
  AntennaIndex from;
  AntennaIndex to;
  auto operator<=>(const Transition&) const = default;
};

/// Records of one user on one day; ordered here by (bin, input order).
std::vector<Transition> extract_events(std::span<const IndividualRecord> records);
std::vector<Transition> extract_events(std::span<const AntennaIndex> antennas);

struct Edge {
  AntennaIndex from;
  AntennaIndex to;
  std::uint64_t weight;
  bool operator==(const Edge&) const = default;
};

class MobilityGraph {
 public:
  MobilityGraph(Date day, std::size_t node_count);

  void add(Transition t, std::uint64_t weight = 1);
  /// Commutative weighted-edge sum of two graphs for the same day.
  void merge(const MobilityGraph& other);

  Date day() const { return day_; }
  std::size_t node_count() const { return in_.size(); }
  /// Sorted by (from, to).
  std::vector<Edge> edges() const;
  std::uint64_t weight(AntennaIndex from, AntennaIndex to) const;
  std::uint64_t in_degree(AntennaIndex node) const { return in_.at(node); }
  std::uint64_t out_degree(AntennaIndex node) const { return out_.at(node); }
  std::uint64_t total_weight() const { return total_; }
  std::size_t nodes_active() const;

 private:
  Date day_;
  std::map<std::pair<AntennaIndex, AntennaIndex>, std::uint64_t> edges_;
  std::vector<std::uint64_t> in_;
  std::vector<std::uint64_t> out_;
  std::uint64_t total_ = 0;
};

using DailyGraphs = std::map<Date, MobilityGraph>;

/// Sum of in-degrees.
std::uint64_t total_mobility_events(const MobilityGraph& g);

/// Records are grouped by user and ordered by (bin, input order); records from
/// other days are ignored.
MobilityGraph build_daily_graph(Date day, std::span<const IndividualRecord> records,
                                std::size_t node_count);
DailyGraphs build_daily_graphs(std::span<const IndividualRecord> records, std::size_t node_count);

/// Index permutation grouping records into (day, user) runs, each run in
/// (bin, input order).
struct UserDayGroups {
  struct Group {
    Date day;
    std::uint32_t begin;
    std::uint32_t end;
  };
  std::vector<std::uint32_t> order;
  std::vector<Group> groups;
};

UserDayGroups group_user_days(std::span<const IndividualRecord> records);

struct ClassCounts {
  std::array<std::uint64_t, 4> counts{};
  std::uint64_t users() const { return counts[0] + counts[1] + counts[2] + counts[3]; }
};

class NoUsers : public Error {
 public:
  using Error::Error;
};

std::map<Date, ClassCounts> daily_class_counts(std::span<const IndividualRecord> records);
/// Percentages over users present; throws NoUsers when empty.
std::array<double, 4> class_shares(const ClassCounts& counts);
/// All records are taken as one day.
std::array<double, 4> mobility_group_shares(std::span<const IndividualRecord> day_records);

/// Week -> scaled event total over present days.
std::map<int, double> weekly_mobility(const DailyGraphs& graphs, const ExclusionCalendar& cal);

struct WeekGroup {
  int first_week;
  int last_week;
};

inline const std::vector<WeekGroup> kDefaultWeekGroups{{6, 7}, {8, 11}, {12, 13}, {14, 18}};

struct DayOfWeekProfile {
  WeekGroup weeks;
  /// Mean of the four Monday..Thursday means.
  std::optional<double> mon_thu;
  double mon_thu_min = 0;
  double mon_thu_max = 0;
  double mon_thu_stdev = 0;
  std::optional<double> friday;
  std::optional<double> saturday;
  std::optional<double> sunday;
  /// Mean daily events per weekday (0 = Sunday) over present days.
  std::array<std::optional<double>, 7> weekday_means;
};

struct DayOfWeekResult {
  std::vector<DayOfWeekProfile> groups;
  std::vector<std::string> warnings;
};

DayOfWeekResult day_of_week_profile(const DailyGraphs& graphs, const ExclusionCalendar& cal,
                                    const std::vector<WeekGroup>& groups = kDefaultWeekGroups);

// Export: `day,from_antenna,to_antenna,weight`.
inline constexpr std::string_view kGraphHeader = "day,from_antenna,to_antenna,weight";
void write_graphs_csv(std::ostream& out, const DailyGraphs& graphs);
DailyGraphs read_graphs_csv(std::istream& in, std::size_t node_count);
/// [{day, total_events, nodes_active}] in day order.
nlohmann::json daily_summary_json(const DailyGraphs& graphs);

}  // namespace mobiscope
