// mobiscope command line: synth, ingest, analyze, serve.
// Exit codes: 0 success, 1 data error, 2 usage error.

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "mobiscope/pipeline.hpp"
#include "mobiscope/server.hpp"
#include "mobiscope/synthgen.hpp"

namespace ms = mobiscope;

namespace {

constexpr int kExitData = 1;
constexpr int kExitUsage = 2;

struct AnalyzeFlags {
  std::string data;
  std::optional<std::string> cases;
  std::optional<std::string> regions;
  std::string format = "json";
  std::string phase_a = "pre";
  std::string phase_b = "during";
  double fraction = 0.10;
  std::optional<std::string> start;
  std::optional<std::string> end;
  std::optional<int> first_week;
  std::optional<int> last_week;
  double threshold = ms::kDefaultActivityThreshold;
  int k = static_cast<int>(ms::kDefaultVariationK);
  std::string region;
  int lag = 0;
  std::string against = "cases";
};

ms::Phase to_phase(const std::string& s) {
  auto p = ms::parse_phase(s);
  if (!p) throw ms::BadRequest("unknown_phase", "unknown phase '" + s + "'");
  return *p;
}

std::optional<ms::Date> to_date(const std::optional<std::string>& s) {
  if (!s) return std::nullopt;
  try {
    return ms::parse_date(*s);
  } catch (const ms::Error&) {
    throw ms::BadRequest("bad_date", "expected YYYY-MM-DD, got '" + *s + "'");
  }
}

ms::Server* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatiotemporal datacube and mobility analytics over cellular connection logs"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a deterministic synthetic scenario");
  std::string synth_config;
  std::string synth_out;
  synth->add_option("--config", synth_config, "Scenario JSON")->required()->check(CLI::ExistingFile);
  synth->add_option("--out", synth_out, "Output directory")->required();

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Parse CSV corpora and write a cube directory");
  ms::IngestInputs inputs;
  std::string ingest_out;
  bool strict = false;
  bool keep_excluded = false;
  int depth = ms::kDefaultCubeDepth;
  std::optional<std::string> ingest_cases;
  ingest->add_option("--aggregate", inputs.aggregate, "Aggregate connections CSV")->required();
  ingest->add_option("--individual", inputs.individual, "Individual connections CSV")->required();
  ingest->add_option("--antennas", inputs.antennas, "Antenna registry CSV")->required();
  ingest->add_option("--regions", inputs.regions, "Region polygons GeoJSON")->required();
  ingest->add_option("--cases", ingest_cases, "Case series CSV copied into the cube directory");
  ingest->add_option("--out", ingest_out, "Cube directory")->required();
  ingest->add_option("--depth", depth, "Quadtree depth")->check(CLI::Range(1, ms::kMaxQuadDepth));
  ingest->add_flag("--strict", strict, "Fail on the first bad line");
  ingest->add_flag("--keep-excluded", keep_excluded, "Keep records on excluded days");

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Run an analysis over a cube directory");
  analyze->require_subcommand(1);
  AnalyzeFlags af;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--data", af.data, "Cube directory")->required();
    sub->add_option("--cases", af.cases, "Case series CSV override");
    sub->add_option("--regions", af.regions, "Region GeoJSON override");
    sub->add_option("--format", af.format, "Output format")->check(CLI::IsMember({"csv", "json"}));
  };
  auto weeks = [&](CLI::App* sub) {
    sub->add_option("--first-week", af.first_week, "First week (1 = week of 2020-03-01)");
    sub->add_option("--last-week", af.last_week, "Last week");
  };
  auto* a_topk = analyze->add_subcommand("topk", "Top-decile displacement between phases");
  common(a_topk);
  a_topk->add_option("--phase-a", af.phase_a, "pre|during|post");
  a_topk->add_option("--phase-b", af.phase_b, "pre|during|post");
  a_topk->add_option("--fraction", af.fraction, "Top fraction of antennas");
  auto* a_groups = analyze->add_subcommand("groups", "Per-day mobility class shares");
  common(a_groups);
  a_groups->add_option("--start", af.start, "First day, YYYY-MM-DD");
  a_groups->add_option("--end", af.end, "Day after the last, YYYY-MM-DD");
  auto* a_weekly = analyze->add_subcommand("weekly", "Weekly scaled mobility events");
  common(a_weekly);
  weeks(a_weekly);
  auto* a_dow = analyze->add_subcommand("dayofweek", "Day-of-week mobility profile");
  common(a_dow);
  auto* a_heat = analyze->add_subcommand("heatmap", "Weekly in-edge heatmap by antenna");
  common(a_heat);
  weeks(a_heat);
  auto* a_var = analyze->add_subcommand("variation", "Most variable antennas per activity group");
  common(a_var);
  weeks(a_var);
  a_var->add_option("--threshold", af.threshold, "Activity threshold on weekly mean");
  a_var->add_option("--k", af.k, "Antennas per group")->check(CLI::PositiveNumber);
  auto* a_corr = analyze->add_subcommand("correlate", "Weekly mobility vs case correlation");
  common(a_corr);
  weeks(a_corr);
  a_corr->add_option("--region", af.region, "Region code")->required();
  a_corr->add_option("--lag", af.lag, "Lag in weeks applied to the second series");
  a_corr->add_option("--against", af.against, "cases|mobility")
      ->check(CLI::IsMember({"cases", "mobility"}));

  // serve
  auto* serve = app.add_subcommand("serve", "Serve the HTTP API and UI bundle");
  std::string serve_data;
  std::optional<std::string> serve_cases;
  std::optional<std::string> serve_regions;
  ms::ServerOptions sopt;
  if (const char* env = std::getenv("MOBISCOPE_PORT")) sopt.port = std::atoi(env);
  std::optional<std::string> static_dir;
  serve->add_option("--data", serve_data, "Cube directory")->required();
  serve->add_option("--cases", serve_cases, "Case series CSV");
  serve->add_option("--regions", serve_regions, "Region GeoJSON");
  serve->add_option("--port", sopt.port, "Port, 0 picks a free one (env MOBISCOPE_PORT)")
      ->check(CLI::Range(0, 65535));
  serve->add_option("--host", sopt.host, "Bind address");
  serve->add_option("--static", static_dir, "UI bundle directory served at /");
  serve->add_option("--threads", sopt.threads, "Worker threads")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*synth) {
      nlohmann::json j;
      {
        std::ifstream in(synth_config);
        try {
          j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::parse_error& e) {
          std::cerr << "error: bad scenario config: " << e.what() << '\n';
          return kExitUsage;
        }
      }
      ms::ScenarioConfig cfg;
      try {
        cfg = ms::ScenarioConfig::from_json(j);
      } catch (const ms::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
      }
      auto s = ms::generate(cfg);
      ms::write_scenario(s, synth_out);
      std::cerr << "wrote " << s.individual.size() << " individual and " << s.aggregate.size()
                << " aggregate records for " << cfg.n_users << " users to " << synth_out << '\n';
      return 0;
    }

    if (*ingest) {
      ms::IngestOptions opts;
      opts.strict = strict;
      opts.drop_excluded = !keep_excluded;
      inputs.cases = ingest_cases;
      ms::IngestReport report;
      auto ds = ms::ingest_dataset(inputs, opts, depth, report);
      ms::write_dataset(ds, ingest_out);
      for (const auto* part : {"aggregate", "individual"}) {
        const auto& st = std::string(part) == "aggregate" ? report.aggregate : report.individual;
        std::cerr << part << ": " << st.lines << " lines, " << st.records << " records, "
                  << st.errors << " errors, " << st.excluded << " excluded\n";
        for (const auto& sample : st.error_samples) std::cerr << "  " << sample << '\n';
      }
      std::cout << report.to_json().dump() << '\n';
      return 0;
    }

    if (*analyze) {
      auto ds = ms::load_dataset(af.data, af.cases, af.regions);
      auto format = af.format == "csv" ? ms::OutputFormat::Csv : ms::OutputFormat::Json;
      ms::WeekSpan ws{af.first_week, af.last_week};
      ms::Report report;
      if (*a_topk) {
        report = ms::topk_report(ds, {to_phase(af.phase_a), to_phase(af.phase_b), af.fraction});
      } else if (*a_groups) {
        report = ms::groups_report(ds, {to_date(af.start), to_date(af.end)});
      } else if (*a_weekly) {
        report = ms::weekly_report(ds, ws);
      } else if (*a_dow) {
        report = ms::dayofweek_report(ds);
      } else if (*a_heat) {
        report = ms::heatmap_report(ds, ws);
      } else if (*a_var) {
        report = ms::variation_report(ds, {ws, af.threshold, static_cast<std::size_t>(af.k)});
      } else if (*a_corr) {
        report = ms::correlate_report(
            ds, {af.region, af.lag, ws,
                 af.against == "mobility" ? ms::CorrelateAgainst::Mobility : ms::CorrelateAgainst::Cases});
      }
      std::cout << report.render(format);
      return 0;
    }

    if (*serve) {
      auto ds = std::make_shared<const ms::Dataset>(ms::load_dataset(serve_data, serve_cases, serve_regions));
      sopt.static_dir = static_dir;
      ms::Server server(ds, sopt);
      int port = server.bind();
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "listening on " << sopt.host << ':' << port << '\n';
      server.listen();
      g_server = nullptr;
      return 0;
    }
  } catch (const ms::BadRequest& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
