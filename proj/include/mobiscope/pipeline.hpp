#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mobiscope/analytics.hpp"
#include "mobiscope/cases.hpp"
#include "mobiscope/core.hpp"
#include "mobiscope/datacube.hpp"
#include "mobiscope/ingest.hpp"
#include "mobiscope/mobility.hpp"

namespace mobiscope {

/// A request parameter was missing or invalid. `code` is machine-readable.
class BadRequest : public Error {
 public:
  BadRequest(std::string code, const std::string& detail)
      : Error(detail), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

/// Everything analysis and serving read. Immutable once built.
struct Dataset {
  DataCube aggregate;
  DataCube individual;
  RegionSet regions;
  DailyGraphs graphs;
  std::map<Date, ClassCounts> class_counts;
  ExclusionCalendar calendar;
  std::optional<CaseSeries> cases;
  nlohmann::json manifest;

  std::span<const Antenna> antennas() const { return aggregate.antennas(); }
};

struct IngestInputs {
  std::string aggregate;
  std::string individual;
  std::string antennas;
  std::string regions;
  std::optional<std::string> cases;
};

struct IngestReport {
  std::size_t antennas = 0;
  IngestStats aggregate;
  IngestStats individual;

  bool has_errors() const { return aggregate.errors + individual.errors > 0; }
  nlohmann::json to_json() const;
};

nlohmann::json to_json(const IngestStats& s);

/// Builds a dataset from already-parsed inputs. The mobility calendar is the
/// given one narrowed to the days spanned by the individual records.
Dataset assemble_dataset(RegionSet regions, const AntennaRegistry& registry,
                         std::span<const AggregateRecord> aggregate,
                         std::span<const IndividualRecord> individual,
                         std::optional<CaseSeries> cases, const ExclusionCalendar& calendar,
                         int depth = kDefaultCubeDepth);

/// Streams the CSV corpora. Under options.strict the first bad line throws.
Dataset ingest_dataset(const IngestInputs& inputs, const IngestOptions& options, int depth,
                       IngestReport& report);

/// Writes the cube directory: aggregate.cube, individual.cube, graphs.csv,
/// daily_summary.json, class_counts.csv, antennas.csv, regions.geojson,
/// manifest.json and, when present, cases.csv.
void write_dataset(const Dataset& ds, const std::string& dir);

/// Overrides replace the directory's cases.csv / regions.geojson.
Dataset load_dataset(const std::string& dir, const std::optional<std::string>& cases_path = {},
                     const std::optional<std::string>& regions_path = {});

// ---------------------------------------------------------------------------
// Analyses shared by the CLI and the HTTP API.

enum class OutputFormat { Csv, Json };

struct Report {
  nlohmann::json json;
  std::string csv;

  /// Canonical JSON or CSV text, newline terminated.
  std::string render(OutputFormat f) const;
};

struct WeekSpan {
  std::optional<int> first;
  std::optional<int> last;
};

struct TopkParams {
  Phase phase_a = Phase::PreLockdown;
  Phase phase_b = Phase::DuringLockdown;
  double fraction = 0.10;
};

struct VariationParams {
  WeekSpan weeks;
  double threshold = kDefaultActivityThreshold;
  std::size_t k = kDefaultVariationK;
};

enum class CorrelateAgainst { Cases, Mobility };

struct CorrelateParams {
  std::string region;
  int lag = 0;
  WeekSpan weeks;
  CorrelateAgainst against = CorrelateAgainst::Cases;
};

/// Half-open day range; both ends default to the dataset coverage.
struct DaySpan {
  std::optional<Date> start;
  std::optional<Date> end;
};

/// Weeks spanned by the mobility calendar unless given; throws BadRequest.
std::pair<int, int> resolve_weeks(const Dataset& ds, const WeekSpan& w);

nlohmann::json antenna_json(const Antenna& a);

Report topk_report(const Dataset& ds, const TopkParams& p);
Report groups_report(const Dataset& ds, const DaySpan& span);
Report weekly_report(const Dataset& ds, const WeekSpan& weeks);
Report dayofweek_report(const Dataset& ds);
Report heatmap_report(const Dataset& ds, const WeekSpan& weeks);
Report variation_report(const Dataset& ds, const VariationParams& p);
Report correlate_report(const Dataset& ds, const CorrelateParams& p);
Report cases_report(const Dataset& ds, const std::vector<std::string>& regions, const DaySpan& span);

/// Runs a query against the cube named by the optional "source" member;
/// count defaults to the aggregate cube, distinct_users to the individual one.
ResultSeries run_query(const Dataset& ds, const nlohmann::json& body);

/// Six-decimal fixed text used by every CSV report.
std::string format_real(double v);

}  // namespace mobiscope
