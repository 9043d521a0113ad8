#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mobiscope/core.hpp"
#include "mobiscope/datacube.hpp"
#include "mobiscope/ingest.hpp"
#include "mobiscope/mobility.hpp"

namespace mobiscope {

class AnalyticsError : public Error {
 public:
  using Error::Error;
};

/// Per-antenna connection totals over one phase.
struct AntennaTrafficTable {
  Phase phase = Phase::PreLockdown;
  std::vector<std::uint64_t> totals;  // indexed by antenna id
  std::uint64_t phase_total = 0;

  /// Percent of the phase total.
  double share(AntennaIndex id) const;
};

/// Excluded days never count. Throws AnalyticsError when the phase is empty.
AntennaTrafficTable phase_totals(std::span<const AggregateRecord> records, std::size_t antenna_count,
                                 Phase phase,
                                 const ExclusionCalendar& cal = ExclusionCalendar::study_default());
/// Same table answered by the aggregate cube.
AntennaTrafficTable phase_totals(const DataCube& cube, Phase phase,
                                 const ExclusionCalendar& cal = ExclusionCalendar::study_default());

/// Top ceil(fraction * N) antennas by share, ties by id.
std::vector<AntennaIndex> top_decile(const AntennaTrafficTable& table, double fraction = 0.10);

struct Displacement {
  std::vector<AntennaIndex> dropped;   // in a, not in b
  std::vector<AntennaIndex> emergent;  // in b, not in a
};

Displacement displacement(std::span<const AntennaIndex> top_a, std::span<const AntennaIndex> top_b);

/// Weekly scaled in-edge totals, one column per antenna.
struct HeatmapMatrix {
  struct RegionBlock {
    std::string code;
    std::size_t first;
    std::size_t count;
  };

  std::vector<int> weeks;
  std::vector<AntennaIndex> columns;
  std::vector<RegionBlock> blocks;
  std::vector<double> cells;         // row-major, weeks x columns, scaled
  std::vector<std::uint64_t> raw;    // same layout, before week scaling

  double at(std::size_t row, std::size_t col) const { return cells[row * columns.size() + col]; }
  std::vector<double> column_series(std::size_t col) const;
  double row_sum(std::size_t row) const;
  std::uint64_t raw_row_sum(std::size_t row) const;
};

/// Columns: regions in `region_order`, any other codes sorted, OUT last; ids
/// ascending inside each block.
HeatmapMatrix region_heatmap(const DailyGraphs& graphs, const ExclusionCalendar& cal,
                             int first_week, int last_week, std::span<const Antenna> antennas,
                             const std::vector<std::string>& region_order);

inline constexpr double kDefaultActivityThreshold = 50000.0;
inline constexpr std::size_t kDefaultVariationK = 15;

struct ActivitySplit {
  std::vector<AntennaIndex> low;   // mean < threshold
  std::vector<AntennaIndex> high;  // mean >= threshold
};

ActivitySplit split_by_activity(const HeatmapMatrix& m,
                                double threshold = kDefaultActivityThreshold);

struct VariationEntry {
  AntennaIndex antenna;
  double stdev;  // population
  double range;  // max - min
  double mean;
};

struct VariationRanking {
  std::vector<VariationEntry> entries;
  /// Set when k exceeded the group size.
  bool truncated = false;
};

VariationRanking variation_rank(const HeatmapMatrix& m, std::span<const AntennaIndex> group,
                                std::size_t k = kDefaultVariationK);

enum class CorrelationErrorCode { LengthMismatch, InsufficientPoints, Undefined };

class CorrelationError : public AnalyticsError {
 public:
  CorrelationError(CorrelationErrorCode code, const std::string& detail)
      : AnalyticsError(detail), code_(code) {}
  CorrelationErrorCode code() const { return code_; }

 private:
  CorrelationErrorCode code_;
};

/// Pearson r of x[t] against y[t + lag] over the overlapping points.
double pearson(std::span<const double> x, std::span<const double> y, int lag = 0);

/// Sum of a region's column block per heatmap row.
std::vector<double> region_series(const HeatmapMatrix& m, const std::string& region);

}  // namespace mobiscope
