#include "mobiscope/server.hpp"

#include <cctype>
#include <charconv>

// The library default of 5 drops connections under a burst of clients.
#define CPPHTTPLIB_LISTEN_BACKLOG 256
#include "httplib.h"

namespace mobiscope {

namespace {

constexpr const char* kPlaceholderPage =
    "<!doctype html>\n<html><head><meta charset=\"utf-8\"><title>mobiscope</title></head>\n"
    "<body><p>mobiscope API is running. No UI bundle was configured; start the server with "
    "--static pointing at the built web UI.</p></body></html>\n";

std::string snake(std::string_view camel) {
  std::string out;
  for (char c : camel) {
    if (std::isupper(static_cast<unsigned char>(c))) {
      if (!out.empty()) out += '_';
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else {
      out += c;
    }
  }
  return out;
}

ApiResponse json_response(int status, const nlohmann::json& j) {
  return ApiResponse{status, "application/json", j.dump()};
}

ApiResponse error_response(int status, const std::string& code, const std::string& detail) {
  return json_response(status, {{"error", code}, {"detail", detail}});
}

std::optional<std::string> param(const Params& p, const std::string& key) {
  auto it = p.find(key);
  if (it == p.end()) return std::nullopt;
  return it->second;
}

std::optional<int> int_param(const Params& p, const std::string& key) {
  auto v = param(p, key);
  if (!v) return std::nullopt;
  int out = 0;
  auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (v->empty() || ec != std::errc{} || ptr != v->data() + v->size()) {
    throw BadRequest("bad_parameter", "parameter '" + key + "' must be an integer");
  }
  return out;
}

std::optional<double> real_param(const Params& p, const std::string& key) {
  auto v = param(p, key);
  if (!v) return std::nullopt;
  try {
    std::size_t used = 0;
    double d = std::stod(*v, &used);
    if (used != v->size()) throw std::invalid_argument("trailing");
    return d;
  } catch (const std::exception&) {
    throw BadRequest("bad_parameter", "parameter '" + key + "' must be a number");
  }
}

std::optional<Date> date_param(const Params& p, const std::string& key) {
  auto v = param(p, key);
  if (!v) return std::nullopt;
  try {
    return parse_date(*v);
  } catch (const Error&) {
    throw BadRequest("bad_parameter", "parameter '" + key + "' must be YYYY-MM-DD");
  }
}

Phase phase_param(const Params& p, const std::string& key, Phase fallback) {
  auto v = param(p, key);
  if (!v) return fallback;
  auto ph = parse_phase(*v);
  if (!ph) throw BadRequest("unknown_phase", "unknown phase '" + *v + "'");
  return *ph;
}

WeekSpan week_params(const Params& p) { return {int_param(p, "first_week"), int_param(p, "last_week")}; }

std::vector<std::string> list_param(const Params& p, const std::string& key) {
  std::vector<std::string> out;
  auto [lo, hi] = p.equal_range(key);
  for (auto it = lo; it != hi; ++it) {
    std::string_view s = it->second;
    while (!s.empty()) {
      auto comma = s.find(',');
      auto item = detail::trim(s.substr(0, comma));
      if (!item.empty()) out.emplace_back(item);
      if (comma == std::string_view::npos) break;
      s.remove_prefix(comma + 1);
    }
  }
  return out;
}

nlohmann::json health_json(const Dataset& ds) {
  nlohmann::json cov = nullptr;
  if (ds.calendar.coverage()) {
    cov = {{"start", format_date(ds.calendar.coverage()->start)},
           {"end", format_date(ds.calendar.coverage()->end)}};
  }
  return {{"status", "ok"},
          {"antennas", ds.antennas().size()},
          {"records",
           {{"aggregate", ds.aggregate.record_count()}, {"individual", ds.individual.record_count()}}},
          {"coverage", cov},
          {"regions", ds.regions.codes()},
          {"has_cases", ds.cases.has_value()}};
}

}  // namespace

Api::Api(std::shared_ptr<const Dataset> data) : data_(std::move(data)) {
  if (!data_) throw Error("Api needs a dataset");
}

ApiResponse Api::handle(std::string_view method, std::string_view path, const Params& params,
                        std::string_view body) const {
  const auto& ds = *data_;
  auto get_only = [&]() -> std::optional<ApiResponse> {
    if (method != "GET") return error_response(405, "method_not_allowed", "use GET");
    return std::nullopt;
  };
  try {
    if (path == "/api/query") {
      if (method != "POST") return error_response(405, "method_not_allowed", "use POST");
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(body);
      } catch (const nlohmann::json::parse_error& e) {
        return error_response(400, "malformed_json", e.what());
      }
      return json_response(200, to_json(run_query(ds, j)));
    }
    if (path == "/api/health") {
      if (auto r = get_only()) return *r;
      return json_response(200, health_json(ds));
    }
    if (path == "/api/regions") {
      if (auto r = get_only()) return *r;
      return ApiResponse{200, "application/geo+json", ds.regions.source_text()};
    }
    if (path == "/api/topk") {
      if (auto r = get_only()) return *r;
      TopkParams p;
      p.phase_a = phase_param(params, "phase_a", Phase::PreLockdown);
      p.phase_b = phase_param(params, "phase_b", Phase::DuringLockdown);
      p.fraction = real_param(params, "fraction").value_or(0.10);
      return json_response(200, topk_report(ds, p).json);
    }
    if (path == "/api/mobility/groups") {
      if (auto r = get_only()) return *r;
      return json_response(
          200, groups_report(ds, {date_param(params, "start"), date_param(params, "end")}).json);
    }
    if (path == "/api/mobility/heatmap") {
      if (auto r = get_only()) return *r;
      return json_response(200, heatmap_report(ds, week_params(params)).json);
    }
    if (path == "/api/mobility/weekly") {
      if (auto r = get_only()) return *r;
      return json_response(200, weekly_report(ds, week_params(params)).json);
    }
    if (path == "/api/mobility/dayofweek") {
      if (auto r = get_only()) return *r;
      return json_response(200, dayofweek_report(ds).json);
    }
    if (path == "/api/mobility/variation") {
      if (auto r = get_only()) return *r;
      VariationParams p;
      p.weeks = week_params(params);
      p.threshold = real_param(params, "threshold").value_or(kDefaultActivityThreshold);
      auto k = int_param(params, "k").value_or(static_cast<int>(kDefaultVariationK));
      if (k < 1) throw BadRequest("bad_k", "k must be positive");
      p.k = static_cast<std::size_t>(k);
      return json_response(200, variation_report(ds, p).json);
    }
    if (path == "/api/cases") {
      if (auto r = get_only()) return *r;
      return json_response(200, cases_report(ds, list_param(params, "regions"),
                                             {date_param(params, "start"), date_param(params, "end")})
                                    .json);
    }
    if (path == "/api/correlate") {
      if (auto r = get_only()) return *r;
      CorrelateParams p;
      auto region = param(params, "region");
      if (!region) throw BadRequest("missing_parameter", "parameter 'region' is required");
      p.region = *region;
      p.lag = int_param(params, "lag").value_or(0);
      p.weeks = week_params(params);
      auto against = param(params, "against").value_or("cases");
      if (against == "cases") {
        p.against = CorrelateAgainst::Cases;
      } else if (against == "mobility") {
        p.against = CorrelateAgainst::Mobility;
      } else {
        throw BadRequest("bad_parameter", "against must be 'cases' or 'mobility'");
      }
      return json_response(200, correlate_report(ds, p).json);
    }
    return error_response(404, "not_found", "no endpoint " + std::string(path));
  } catch (const BadRequest& e) {
    return error_response(400, e.code(), e.what());
  } catch (const CubeError& e) {
    return error_response(400, snake(error_code_name(e.code())), e.what());
  } catch (const ParseError& e) {
    return error_response(400, snake(error_code_name(e.code())), e.what());
  } catch (const NoUsers& e) {
    return error_response(400, "no_users", e.what());
  } catch (const AnalyticsError& e) {
    return error_response(400, "analytics_error", e.what());
  } catch (const OutOfRange& e) {
    return error_response(400, "out_of_range", e.what());
  } catch (const nlohmann::json::exception& e) {
    return error_response(400, "invalid_query", e.what());
  } catch (const std::exception& e) {
    return error_response(500, "internal", e.what());
  }
}

struct Server::Impl {
  Api api;
  ServerOptions options;
  httplib::Server http;

  Impl(std::shared_ptr<const Dataset> data, ServerOptions opts)
      : api(std::move(data)), options(std::move(opts)) {
    auto threads = static_cast<std::size_t>(std::max(1, options.threads));
    http.new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
    auto route = [this](const httplib::Request& req, httplib::Response& res) {
      auto out = api.handle(req.method, req.path, req.params, req.body);
      res.status = out.status;
      res.set_content(out.body, out.content_type);
    };
    const std::string api_paths = R"(/api/.*)";
    http.Get(api_paths, route);
    http.Post(api_paths, route);
    http.Put(api_paths, route);
    http.Delete(api_paths, route);
    http.Patch(api_paths, route);
    if (options.static_dir) {
      if (!http.set_mount_point("/", *options.static_dir)) {
        throw Error("static directory not found: " + *options.static_dir);
      }
    } else {
      http.Get("/", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(kPlaceholderPage, "text/html");
      });
    }
    http.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
      if (!res.body.empty()) return;
      auto j = nlohmann::json{{"error", res.status == 404 ? "not_found" : "http_error"},
                              {"detail", "no resource " + req.path}};
      res.set_content(j.dump(), "application/json");
    });
  }
};

Server::Server(std::shared_ptr<const Dataset> data, ServerOptions options)
    : impl_(std::make_unique<Impl>(std::move(data), std::move(options))) {}

Server::~Server() { stop(); }

int Server::bind() {
  auto& o = impl_->options;
  if (o.port == 0) {
    int port = impl_->http.bind_to_any_port(o.host);
    if (port < 0) throw Error("cannot bind " + o.host);
    o.port = port;
  } else if (!impl_->http.bind_to_port(o.host, o.port)) {
    throw Error("cannot bind " + o.host + ":" + std::to_string(o.port));
  }
  return o.port;
}

void Server::listen() { impl_->http.listen_after_bind(); }

void Server::stop() {
  if (impl_) impl_->http.stop();
}

}  // namespace mobiscope
