#include "mobiscope/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace mobiscope {

namespace fs = std::filesystem;

namespace {

constexpr const char* kClassCountsHeader = "day,no,low,medium,high";

nlohmann::json coverage_json(const std::optional<DateRange>& r) {
  if (!r) return nullptr;
  return {{"start", format_date(r->start)}, {"end", format_date(r->end)}};
}

std::optional<DateRange> intersect(const std::optional<DateRange>& a, DateRange b) {
  if (!a) return DateRange{b.start, b.start};
  auto lo = std::max(a->start, b.start);
  auto hi = std::min(a->end, b.end);
  if (hi < lo) hi = lo;
  return DateRange{lo, hi};
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  return out;
}

std::ifstream open_in(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot open " + p.string());
  return in;
}

std::string read_text(const fs::path& p) {
  auto in = open_in(p);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::set<std::string> code_set(const RegionSet& regions) {
  auto codes = regions.codes();
  return {codes.begin(), codes.end()};
}

std::string week_label(int w) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "W%02d", w);
  return buf;
}

nlohmann::json optional_real(const std::optional<double>& v) {
  if (!v) return nullptr;
  return *v;
}

std::string optional_text(const std::optional<double>& v) { return v ? format_real(*v) : ""; }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void write_class_counts(std::ostream& out, const std::map<Date, ClassCounts>& counts) {
  out << kClassCountsHeader << '\n';
  for (const auto& [day, c] : counts) {
    out << format_date(day);
    for (auto v : c.counts) out << ',' << v;
    out << '\n';
  }
}

std::map<Date, ClassCounts> read_class_counts(std::istream& in) {
  std::map<Date, ClassCounts> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    auto view = detail::trim(line);
    if (line_no == 1) {
      if (view != kClassCountsHeader) {
        throw ParseError(ParseErrorCode::Malformed, line_no, "expected class counts header");
      }
      continue;
    }
    if (view.empty()) continue;
    auto f = detail::split_csv(view);
    if (f.size() != 5) throw ParseError(ParseErrorCode::Malformed, line_no, "expected 5 fields");
    ClassCounts c;
    for (std::size_t i = 0; i < 4; ++i) {
      try {
        c.counts[i] = std::stoull(std::string(f[i + 1]));
      } catch (const std::exception&) {
        throw ParseError(ParseErrorCode::Malformed, line_no, "bad count");
      }
    }
    out[parse_date(f[0])] = c;
  }
  return out;
}

DateRange default_days(const Dataset& ds, const DaySpan& span) {
  DateRange cov = ds.calendar.coverage().value_or(DateRange{kStudyStart, kStudyEnd});
  DateRange r{span.start.value_or(cov.start), span.end.value_or(cov.end)};
  if (!(r.start < r.end)) throw BadRequest("empty_range", "date range is empty");
  return r;
}

}  // namespace

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

nlohmann::json to_json(const IngestStats& s) {
  return {{"lines", s.lines},
          {"records", s.records},
          {"errors", s.errors},
          {"excluded", s.excluded},
          {"error_samples", s.error_samples},
          {"coverage", coverage_json(s.coverage)}};
}

nlohmann::json IngestReport::to_json() const {
  return {{"antennas", antennas},
          {"aggregate", mobiscope::to_json(aggregate)},
          {"individual", mobiscope::to_json(individual)}};
}

Dataset assemble_dataset(RegionSet regions, const AntennaRegistry& registry,
                         std::span<const AggregateRecord> aggregate,
                         std::span<const IndividualRecord> individual,
                         std::optional<CaseSeries> cases, const ExclusionCalendar& calendar,
                         int depth) {
  std::optional<DateRange> coverage;
  for (const auto& r : individual) {
    auto d = r.bin.day();
    if (!coverage) {
      coverage = DateRange{d, d + std::chrono::days{1}};
    } else {
      coverage->start = std::min(coverage->start, d);
      coverage->end = std::max(coverage->end, d + std::chrono::days{1});
    }
  }
  auto cal = calendar.with_coverage(intersect(coverage, DateRange{kStudyStart, kStudyEnd}));
  nlohmann::json manifest = {
      {"format", "mobiscope-dataset"},
      {"version", 1},
      {"depth", depth},
      {"antennas", registry.size()},
      {"aggregate_records", aggregate.size()},
      {"individual_records", individual.size()},
      {"coverage", coverage_json(cal.coverage())},
      {"has_cases", cases.has_value()},
  };
  auto excluded = nlohmann::json::array();
  for (auto d : cal.excluded_days()) excluded.push_back(format_date(d));
  manifest["excluded_days"] = excluded;
  return Dataset{
      build_cube(aggregate, registry, depth),
      build_cube(individual, registry, depth),
      std::move(regions),
      build_daily_graphs(individual, registry.size()),
      daily_class_counts(individual),
      cal,
      std::move(cases),
      std::move(manifest),
  };
}

Dataset ingest_dataset(const IngestInputs& inputs, const IngestOptions& options, int depth,
                       IngestReport& report) {
  auto regions = RegionSet::from_file(inputs.regions);
  auto registry = AntennaRegistry::from_file(inputs.antennas, regions);
  report = IngestReport{};
  report.antennas = registry.size();
  std::vector<AggregateRecord> aggregate;
  std::vector<IndividualRecord> individual;
  {
    auto in = open_in(inputs.aggregate);
    report.aggregate = read_aggregate(
        in, registry, [&](AggregateRecord&& r) { aggregate.push_back(r); }, options);
  }
  {
    auto in = open_in(inputs.individual);
    report.individual = read_individual(
        in, registry, [&](IndividualRecord&& r) { individual.push_back(std::move(r)); }, options);
  }
  std::optional<CaseSeries> cases;
  if (inputs.cases) cases = CaseSeries::from_file(*inputs.cases, code_set(regions));
  auto ds = assemble_dataset(std::move(regions), registry, aggregate, individual, std::move(cases),
                             options.calendar, depth);
  ds.manifest["ingest"] = report.to_json();
  return ds;
}

void write_dataset(const Dataset& ds, const std::string& dir) {
  fs::path root(dir);
  fs::create_directories(root);
  ds.aggregate.write_snapshot((root / "aggregate.cube").string());
  ds.individual.write_snapshot((root / "individual.cube").string());
  {
    auto out = open_out(root / "graphs.csv");
    write_graphs_csv(out, ds.graphs);
  }
  {
    auto out = open_out(root / "daily_summary.json");
    out << daily_summary_json(ds.graphs).dump(1) << '\n';
  }
  {
    auto out = open_out(root / "class_counts.csv");
    write_class_counts(out, ds.class_counts);
  }
  {
    auto out = open_out(root / "antennas.csv");
    out << kAntennaHeader << '\n';
    for (const auto& a : ds.antennas()) {
      out << a.label << ',' << format_coordinate(a.lat) << ',' << format_coordinate(a.lon) << '\n';
    }
  }
  {
    auto out = open_out(root / "regions.geojson");
    out << ds.regions.source_text();
  }
  if (ds.cases) {
    auto out = open_out(root / "cases.csv");
    ds.cases->write_csv(out);
  }
  {
    auto out = open_out(root / "manifest.json");
    out << ds.manifest.dump(1) << '\n';
  }
}

Dataset load_dataset(const std::string& dir, const std::optional<std::string>& cases_path,
                     const std::optional<std::string>& regions_path) {
  fs::path root(dir);
  if (!fs::is_directory(root)) throw Error("not a dataset directory: " + dir);
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_text(root / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("bad manifest: ") + e.what());
  }
  if (manifest.value("format", "") != "mobiscope-dataset" || manifest.value("version", 0) != 1) {
    throw Error("unsupported dataset manifest");
  }
  auto regions = RegionSet::from_file(regions_path.value_or((root / "regions.geojson").string()));
  auto aggregate = DataCube::load_snapshot((root / "aggregate.cube").string());
  auto individual = DataCube::load_snapshot((root / "individual.cube").string());

  std::set<Date> excluded;
  std::optional<DateRange> coverage;
  try {
    for (const auto& d : manifest.at("excluded_days")) excluded.insert(parse_date(d.get<std::string>()));
    const auto& c = manifest.at("coverage");
    if (!c.is_null()) {
      coverage = DateRange{parse_date(c.at("start").get<std::string>()),
                           parse_date(c.at("end").get<std::string>())};
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("bad manifest: ") + e.what());
  }
  auto n = aggregate.antennas().size();
  DailyGraphs graphs;
  {
    auto in = open_in(root / "graphs.csv");
    graphs = read_graphs_csv(in, n);
  }
  // Days without any event have no edge rows.
  try {
    auto summary = nlohmann::json::parse(read_text(root / "daily_summary.json"));
    for (const auto& row : summary) {
      auto day = parse_date(row.at("day").get<std::string>());
      graphs.try_emplace(day, day, n);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("bad daily summary: ") + e.what());
  }
  std::map<Date, ClassCounts> counts;
  {
    auto in = open_in(root / "class_counts.csv");
    counts = read_class_counts(in);
  }
  std::optional<CaseSeries> cases;
  auto cases_file = cases_path.value_or((root / "cases.csv").string());
  if (cases_path || fs::exists(cases_file)) cases = CaseSeries::from_file(cases_file, code_set(regions));
  return Dataset{
      std::move(aggregate),
      std::move(individual),
      std::move(regions),
      std::move(graphs),
      std::move(counts),
      ExclusionCalendar(std::move(excluded), coverage),
      std::move(cases),
      std::move(manifest),
  };
}

// ---------------------------------------------------------------------------

std::string Report::render(OutputFormat f) const {
  if (f == OutputFormat::Json) return json.dump() + "\n";
  return csv;
}

nlohmann::json antenna_json(const Antenna& a) {
  return {{"id", a.id}, {"label", a.label}, {"lat", a.lat}, {"lon", a.lon}, {"region", a.region}};
}

std::pair<int, int> resolve_weeks(const Dataset& ds, const WeekSpan& w) {
  const auto last_study_week = week_of(kStudyEnd - std::chrono::days{1});
  int first = 0;
  int last = 0;
  if (w.first && w.last) {
    first = *w.first;
    last = *w.last;
  } else {
    const auto& cov = ds.calendar.coverage();
    if (!cov || cov->empty()) {
      if (!w.first || !w.last) throw BadRequest("no_coverage", "dataset has no mobility coverage");
    }
    first = w.first.value_or(cov ? week_of(cov->start) : 1);
    last = w.last.value_or(cov ? week_of(cov->end - std::chrono::days{1}) : last_study_week);
  }
  if (first < 1 || last > last_study_week || first > last) {
    throw BadRequest("bad_weeks", "week span must satisfy 1 <= first <= last <= " +
                                      std::to_string(last_study_week));
  }
  return {first, last};
}

Report topk_report(const Dataset& ds, const TopkParams& p) {
  if (!(p.fraction > 0.0 && p.fraction <= 1.0)) {
    throw BadRequest("bad_fraction", "fraction must be in (0, 1]");
  }
  auto ta = phase_totals(ds.aggregate, p.phase_a, ds.calendar);
  auto tb = phase_totals(ds.aggregate, p.phase_b, ds.calendar);
  auto top_a = top_decile(ta, p.fraction);
  auto top_b = top_decile(tb, p.fraction);
  auto d = displacement(top_a, top_b);
  auto antennas = ds.antennas();

  Report r;
  std::ostringstream csv;
  csv << "list,rank,antenna_id,label,region,lat,lon,total,share\n";
  auto ranked = [&](const char* name, const std::vector<AntennaIndex>& ids,
                    const AntennaTrafficTable& t) {
    auto arr = nlohmann::json::array();
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const auto& a = antennas[ids[i]];
      auto j = antenna_json(a);
      j["rank"] = i + 1;
      j["total"] = t.totals[a.id];
      j["share"] = t.share(a.id);
      arr.push_back(j);
      csv << name << ',' << i + 1 << ',' << a.id << ',' << csv_field(a.label) << ',' << a.region
          << ',' << format_coordinate(a.lat) << ',' << format_coordinate(a.lon) << ','
          << t.totals[a.id] << ',' << format_real(t.share(a.id)) << '\n';
    }
    return arr;
  };
  r.json["phase_a"] = std::string(phase_name(p.phase_a));
  r.json["phase_b"] = std::string(phase_name(p.phase_b));
  r.json["fraction"] = p.fraction;
  r.json["top_a"] = ranked("top_a", top_a, ta);
  r.json["top_b"] = ranked("top_b", top_b, tb);
  r.json["dropped"] = ranked("dropped", d.dropped, ta);
  r.json["emergent"] = ranked("emergent", d.emergent, tb);
  r.json["phase_totals"] = {{"a", ta.phase_total}, {"b", tb.phase_total}};
  r.csv = csv.str();
  return r;
}

Report groups_report(const Dataset& ds, const DaySpan& span) {
  auto range = default_days(ds, span);
  Report r;
  std::ostringstream csv;
  csv << "day,users,no,low,medium,high\n";
  auto days = nlohmann::json::array();
  for (auto it = ds.class_counts.lower_bound(range.start);
       it != ds.class_counts.end() && it->first < range.end; ++it) {
    if (it->second.users() == 0) continue;
    auto shares = class_shares(it->second);
    nlohmann::json row = {{"day", format_date(it->first)}, {"users", it->second.users()}};
    csv << format_date(it->first) << ',' << it->second.users();
    for (auto c : kAllClasses) {
      auto i = static_cast<std::size_t>(c);
      row[std::string(class_name(c))] = shares[i];
      row["counts"][std::string(class_name(c))] = it->second.counts[i];
      csv << ',' << format_real(shares[i]);
    }
    csv << '\n';
    days.push_back(row);
  }
  r.json = {{"start", format_date(range.start)}, {"end", format_date(range.end)}, {"days", days}};
  r.csv = csv.str();
  return r;
}

Report weekly_report(const Dataset& ds, const WeekSpan& weeks) {
  auto [first, last] = resolve_weeks(ds, weeks);
  auto scaled = weekly_mobility(ds.graphs, ds.calendar);
  std::map<int, std::uint64_t> raw;
  for (const auto& [day, g] : ds.graphs) {
    if (ds.calendar.is_present(day)) raw[week_of(day)] += total_mobility_events(g);
  }
  Report r;
  std::ostringstream csv;
  csv << "week,label,days_present,raw,scaled\n";
  auto rows = nlohmann::json::array();
  for (int w = first; w <= last; ++w) {
    auto present = ds.calendar.days_present(w);
    auto f = ds.calendar.scale_factor(w);
    auto rv = raw.count(w) ? raw[w] : 0;
    auto sv = scaled.count(w) ? scaled[w] : 0.0;
    rows.push_back({{"week", w},
                    {"label", week_label(w)},
                    {"days_present", present},
                    {"scale", {f.num, f.den}},
                    {"raw", rv},
                    {"scaled", sv}});
    csv << w << ',' << week_label(w) << ',' << present << ',' << rv << ',' << format_real(sv) << '\n';
  }
  r.json = {{"weeks", rows}};
  r.csv = csv.str();
  return r;
}

Report dayofweek_report(const Dataset& ds) {
  auto res = day_of_week_profile(ds.graphs, ds.calendar);
  Report r;
  std::ostringstream csv;
  csv << "first_week,last_week,mon_thu,mon_thu_min,mon_thu_max,mon_thu_stdev,friday,saturday,sunday\n";
  auto groups = nlohmann::json::array();
  for (const auto& g : res.groups) {
    auto means = nlohmann::json::array();
    for (const auto& m : g.weekday_means) means.push_back(optional_real(m));
    nlohmann::json row = {{"first_week", g.weeks.first_week},
                          {"last_week", g.weeks.last_week},
                          {"mon_thu", optional_real(g.mon_thu)},
                          {"friday", optional_real(g.friday)},
                          {"saturday", optional_real(g.saturday)},
                          {"sunday", optional_real(g.sunday)},
                          {"weekday_means", means}};
    if (g.mon_thu) {
      row["mon_thu_spread"] = {
          {"min", g.mon_thu_min}, {"max", g.mon_thu_max}, {"stdev", g.mon_thu_stdev}};
    } else {
      row["mon_thu_spread"] = nullptr;
    }
    groups.push_back(row);
    csv << g.weeks.first_week << ',' << g.weeks.last_week << ',' << optional_text(g.mon_thu) << ',';
    if (g.mon_thu) {
      csv << format_real(g.mon_thu_min) << ',' << format_real(g.mon_thu_max) << ','
          << format_real(g.mon_thu_stdev);
    } else {
      csv << ",,";
    }
    csv << ',' << optional_text(g.friday) << ',' << optional_text(g.saturday) << ','
        << optional_text(g.sunday) << '\n';
  }
  r.json = {{"groups", groups}, {"warnings", res.warnings}};
  r.csv = csv.str();
  return r;
}

namespace {

HeatmapMatrix heatmap_for(const Dataset& ds, int first, int last) {
  return region_heatmap(ds.graphs, ds.calendar, first, last, ds.antennas(), ds.regions.codes());
}

}  // namespace

Report heatmap_report(const Dataset& ds, const WeekSpan& weeks) {
  auto [first, last] = resolve_weeks(ds, weeks);
  auto m = heatmap_for(ds, first, last);
  auto antennas = ds.antennas();
  Report r;
  std::ostringstream csv;
  csv << "week,antenna_id,label,region,raw,value\n";
  auto columns = nlohmann::json::array();
  for (auto id : m.columns) {
    const auto& a = antennas[id];
    columns.push_back({{"id", a.id}, {"label", a.label}, {"region", a.region}});
  }
  auto blocks = nlohmann::json::array();
  for (const auto& b : m.blocks) {
    nlohmann::json j = {{"code", b.code}, {"first", b.first}, {"count", b.count}};
    if (const auto* reg = ds.regions.find(b.code)) {
      j["name"] = reg->name;
      j["spi"] = std::string(spi_name(reg->spi));
    } else {
      j["name"] = nullptr;
      j["spi"] = nullptr;
    }
    blocks.push_back(j);
  }
  auto cells = nlohmann::json::array();
  auto raw = nlohmann::json::array();
  for (std::size_t row = 0; row < m.weeks.size(); ++row) {
    auto line = nlohmann::json::array();
    auto raw_line = nlohmann::json::array();
    for (std::size_t c = 0; c < m.columns.size(); ++c) {
      line.push_back(m.at(row, c));
      raw_line.push_back(m.raw[row * m.columns.size() + c]);
      const auto& a = antennas[m.columns[c]];
      csv << m.weeks[row] << ',' << a.id << ',' << csv_field(a.label) << ',' << a.region << ','
          << m.raw[row * m.columns.size() + c] << ',' << format_real(m.at(row, c)) << '\n';
    }
    cells.push_back(line);
    raw.push_back(raw_line);
  }
  r.json = {{"weeks", m.weeks},   {"columns", columns}, {"blocks", blocks},
            {"cells", cells},     {"raw", raw}};
  r.csv = csv.str();
  return r;
}

Report variation_report(const Dataset& ds, const VariationParams& p) {
  auto [first, last] = resolve_weeks(ds, p.weeks);
  if (p.k == 0) throw BadRequest("bad_k", "k must be positive");
  auto m = heatmap_for(ds, first, last);
  if (m.columns.empty()) throw BadRequest("no_antennas", "dataset has no antennas");
  auto split = split_by_activity(m, p.threshold);
  auto antennas = ds.antennas();
  Report r;
  std::ostringstream csv;
  csv << "group,rank,antenna_id,label,region,stdev,range,mean\n";
  auto one = [&](const char* name, const std::vector<AntennaIndex>& group) -> nlohmann::json {
    if (group.empty()) return {{"size", 0}, {"truncated", true}, {"ranking", nlohmann::json::array()}};
    auto ranking = variation_rank(m, group, p.k);
    auto arr = nlohmann::json::array();
    for (std::size_t i = 0; i < ranking.entries.size(); ++i) {
      const auto& e = ranking.entries[i];
      const auto& a = antennas[e.antenna];
      arr.push_back({{"rank", i + 1},
                     {"id", a.id},
                     {"label", a.label},
                     {"region", a.region},
                     {"stdev", e.stdev},
                     {"range", e.range},
                     {"mean", e.mean}});
      csv << name << ',' << i + 1 << ',' << a.id << ',' << csv_field(a.label) << ',' << a.region
          << ',' << format_real(e.stdev) << ',' << format_real(e.range) << ','
          << format_real(e.mean) << '\n';
    }
    return {{"size", group.size()}, {"truncated", ranking.truncated}, {"ranking", arr}};
  };
  r.json = {{"first_week", first},
            {"last_week", last},
            {"threshold", p.threshold},
            {"k", p.k},
            {"low", one("low", split.low)},
            {"high", one("high", split.high)}};
  r.csv = csv.str();
  return r;
}

Report correlate_report(const Dataset& ds, const CorrelateParams& p) {
  if (!ds.regions.find(p.region)) throw BadRequest("unknown_region", "unknown region '" + p.region + "'");
  auto [first, last] = resolve_weeks(ds, p.weeks);
  auto m = heatmap_for(ds, first, last);
  auto mobility = region_series(m, p.region);
  std::vector<double> other;
  if (p.against == CorrelateAgainst::Cases) {
    if (!ds.cases) throw BadRequest("no_cases", "no case data loaded");
    other = ds.cases->weekly_new_cases(p.region, first, last).values;
  } else {
    other = mobility;
  }
  auto len = static_cast<long>(mobility.size());
  long n = std::max(0L, len - std::abs(static_cast<long>(p.lag)));
  Report r;
  r.json = {{"region", p.region},
            {"lag", p.lag},
            {"against", p.against == CorrelateAgainst::Cases ? "cases" : "mobility"},
            {"n", n},
            {"series", {{"weeks", m.weeks}, {"mobility", mobility}, {"other", other}}}};
  std::string r_text;
  try {
    double v = pearson(mobility, other, p.lag);
    r.json["r"] = v;
    r.json["undefined"] = false;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12f", v);
    r_text = buf;
  } catch (const CorrelationError& e) {
    if (e.code() != CorrelationErrorCode::Undefined) throw BadRequest("insufficient_points", e.what());
    r.json["r"] = nullptr;
    r.json["undefined"] = true;
  }
  r.csv = "region,lag,against,n,r\n" + p.region + ',' + std::to_string(p.lag) + ',' +
          r.json["against"].get<std::string>() + ',' + std::to_string(n) + ',' + r_text + '\n';
  return r;
}

Report cases_report(const Dataset& ds, const std::vector<std::string>& regions, const DaySpan& span) {
  if (!ds.cases) throw BadRequest("no_cases", "no case data loaded");
  DateRange range{span.start.value_or(kStudyStart), span.end.value_or(kStudyEnd)};
  if (!(range.start < range.end)) throw BadRequest("empty_range", "date range is empty");
  auto s = ds.cases->summary(regions, range);
  Report r;
  r.json = {{"regions", regions},
            {"start", format_date(range.start)},
            {"end", format_date(range.end)},
            {"active", s.active},
            {"recovered", s.recovered},
            {"deaths", s.deaths},
            {"total", s.total},
            {"warnings", s.warnings}};
  r.csv = "active,recovered,deaths,total\n" + std::to_string(s.active) + ',' +
          std::to_string(s.recovered) + ',' + std::to_string(s.deaths) + ',' +
          std::to_string(s.total) + '\n';
  return r;
}

ResultSeries run_query(const Dataset& ds, const nlohmann::json& body) {
  auto q = query_from_json(body);
  q.validate();
  bool individual = q.select == Select::DistinctUsers;
  if (body.contains("source")) {
    const auto& s = body.at("source");
    if (s == "aggregate") {
      individual = false;
    } else if (s == "individual") {
      individual = true;
    } else {
      throw CubeError(CubeErrorCode::InvalidQuery, "source must be 'aggregate' or 'individual'");
    }
  }
  return (individual ? ds.individual : ds.aggregate).query(q);
}

}  // namespace mobiscope
