#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "esource/error.hpp"

namespace esource::net {

struct Request {
  std::string method = "GET";
  std::string path;  // may carry a query string until routed
  std::map<std::string, std::string> query;
  std::map<std::string, std::string> headers;  // lower-cased names
  std::string body;
  std::map<std::string, std::string> params;  // filled by the router from {name} segments

  std::optional<std::string> header(std::string_view name) const;
  const std::string& param(const std::string& name) const;
  std::optional<std::string> query_param(const std::string& name) const;
  static Request get(std::string path);
  static Request post(std::string path, std::string body, std::string content_type = "application/json");
  Request& with_header(std::string name, std::string value);
};

struct Response {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
  std::map<std::string, std::string> headers;

  bool ok() const { return status >= 200 && status < 300; }
  nlohmann::json json() const;
  static Response json(const nlohmann::json& j, int status = 200);
  static Response xml(std::string body, int status = 200);
  static Response html(std::string body, int status = 200);
};

int http_status_for(Errc code) noexcept;
Response error_response(Errc code, const std::string& message);

/// Throws the Error carried by a non-2xx response (or a generic one).
void raise_for_status(const Response& r);

/// Percent-decoding for path segments and query values.
std::string url_decode(std::string_view s);
std::string url_encode(std::string_view s);

class Router {
 public:
  using Handler = std::function<Response(const Request&)>;

  /// Pattern segments of the form `{name}` bind path parameters.
  void add(std::string method, std::string pattern, Handler handler);
  /// Dispatches; Error exceptions become JSON error bodies, unmatched paths 404.
  Response handle(Request request) const;

 private:
  struct Route {
    std::string method;
    std::vector<std::string> segments;
    Handler handler;
  };
  std::vector<Route> routes_;
};

/// Client side of a connection. `target` names the remote component.
class Transport {
 public:
  virtual ~Transport() = default;
  /// Throws Error(TransportError) when the target cannot be reached.
  virtual Response send(const std::string& target, Request request) = 0;
};

struct TraceEntry {
  std::string from;
  std::string to;
  std::string method;
  std::string path;
  int status = 0;
  bool delivered = false;
  std::string request_body;
};

/// In-process network. Components attach a router under a name; clients are
/// handed out per origin name, so every exchange is traced with its initiator.
class Network {
 public:
  void attach(const std::string& name, const Router* router);
  void detach(const std::string& name);
  void set_reachable(const std::string& name, bool reachable);
  std::shared_ptr<Transport> client(std::string origin);

  std::vector<TraceEntry> trace() const;
  void clear_trace();

 private:
  friend class LoopbackTransport;
  Response deliver(const std::string& from, const std::string& to, Request request);

  mutable std::mutex mutex_;
  std::map<std::string, const Router*> routers_;
  std::map<std::string, bool> reachable_;
  std::vector<TraceEntry> trace_;
};

/// Real HTTP client; targets map to base URLs such as `http://127.0.0.1:8080`.
class HttpTransport : public Transport {
 public:
  void set_endpoint(const std::string& target, std::string base_url);
  /// Sends `x-site-token` on every request when set.
  void set_site_token(std::string token) { token_ = std::move(token); }
  Response send(const std::string& target, Request request) override;

 private:
  std::map<std::string, std::string> endpoints_;
  std::string token_;
};

/// Serves a Router over HTTP on a background thread.
class HttpServer {
 public:
  explicit HttpServer(const Router& router);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds and starts serving; port 0 picks a free port. Returns the port.
  int start(const std::string& host, int port);
  void stop();
  /// Blocks until stop() is called from another thread or a signal handler.
  void wait();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace esource::net
