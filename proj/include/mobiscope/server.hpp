#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include "mobiscope/pipeline.hpp"

namespace mobiscope {

using Params = std::multimap<std::string, std::string>;

struct ApiResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

/// Request routing over an immutable dataset. Safe to call from any number
/// of threads at once.
class Api {
 public:
  explicit Api(std::shared_ptr<const Dataset> data);

  ApiResponse handle(std::string_view method, std::string_view path, const Params& params,
                     std::string_view body) const;

  const Dataset& data() const { return *data_; }

 private:
  std::shared_ptr<const Dataset> data_;
};

struct ServerOptions {
  std::string host = "0.0.0.0";
  int port = 8080;
  /// Directory served at "/". A placeholder page is served when unset.
  std::optional<std::string> static_dir;
  int threads = 8;
};

class Server {
 public:
  Server(std::shared_ptr<const Dataset> data, ServerOptions options);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds the socket; port 0 picks a free one. Returns the bound port.
  int bind();
  /// Blocks until stop().
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace mobiscope
