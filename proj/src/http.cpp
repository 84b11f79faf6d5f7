#include "esource/net/http.hpp"

#include <algorithm>
#include <cctype>
#include <thread>

#include <httplib.h>

#include "esource/util/strings.hpp"

namespace esource::net {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

void split_query(Request& r) {
  auto q = r.path.find('?');
  if (q == std::string::npos) return;
  for (const auto& pair : split(std::string_view(r.path).substr(q + 1), '&')) {
    if (pair.empty()) continue;
    auto eq = pair.find('=');
    if (eq == std::string::npos) {
      r.query[url_decode(pair)] = "";
    } else {
      r.query[url_decode(pair.substr(0, eq))] = url_decode(pair.substr(eq + 1));
    }
  }
  r.path.resize(q);
}

std::vector<std::string> segments_of(std::string_view path) {
  std::vector<std::string> out;
  for (auto& s : split(path, '/')) {
    if (!s.empty()) out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

std::optional<std::string> Request::header(std::string_view name) const {
  auto it = headers.find(lower(name));
  if (it == headers.end()) return std::nullopt;
  return it->second;
}

const std::string& Request::param(const std::string& name) const {
  auto it = params.find(name);
  if (it == params.end()) throw Error(Errc::InvalidArgument, "missing path parameter " + name);
  return it->second;
}

std::optional<std::string> Request::query_param(const std::string& name) const {
  auto it = query.find(name);
  if (it == query.end()) return std::nullopt;
  return it->second;
}

Request Request::get(std::string path) {
  Request r;
  r.method = "GET";
  r.path = std::move(path);
  return r;
}

Request Request::post(std::string path, std::string body, std::string content_type) {
  Request r;
  r.method = "POST";
  r.path = std::move(path);
  r.body = std::move(body);
  r.headers["content-type"] = std::move(content_type);
  return r;
}

Request& Request::with_header(std::string name, std::string value) {
  headers[lower(name)] = std::move(value);
  return *this;
}

nlohmann::json Response::json() const {
  try {
    return nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::TransportError, std::string("response is not JSON: ") + e.what());
  }
}

Response Response::json(const nlohmann::json& j, int status) {
  Response r;
  r.status = status;
  r.body = j.dump();
  return r;
}

Response Response::xml(std::string body, int status) {
  Response r;
  r.status = status;
  r.body = std::move(body);
  r.content_type = "application/xml";
  return r;
}

Response Response::html(std::string body, int status) {
  Response r;
  r.status = status;
  r.body = std::move(body);
  r.content_type = "text/html; charset=utf-8";
  return r;
}

int http_status_for(Errc code) noexcept {
  switch (code) {
    case Errc::UnknownForm:
    case Errc::UnknownItem:
    case Errc::UnknownConcept:
    case Errc::UnknownSource:
    case Errc::UnknownTerminology:
    case Errc::UnknownPatient:
    case Errc::UnknownPractice:
    case Errc::UnknownArtefact:
    case Errc::UnknownSubject:
    case Errc::UnknownStudy:
    case Errc::UnknownArtifact:
    case Errc::NoActiveProtocol: return 404;
    case Errc::WrongWorkflowState:
    case Errc::AlreadyAssigned:
    case Errc::NotConsented:
    case Errc::SequenceViolation: return 409;
    case Errc::Unauthorized: return 401;
    case Errc::MalformedXml:
    case Errc::SchemaViolation:
    case Errc::DanglingQueryRef:
    case Errc::DuplicateQueryId:
    case Errc::TypeMismatch:
    case Errc::InvariantViolation:
    case Errc::UntranslatableFilter:
    case Errc::ValidationFailed:
    case Errc::InvalidConfig:
    case Errc::InvalidArgument: return 400;
    case Errc::RecordFetchFailed:
    case Errc::TssRejection:
    case Errc::TransportError: return 502;
    case Errc::PathEvaluationError:
    case Errc::StorageError: return 500;
  }
  return 500;
}

Response error_response(Errc code, const std::string& message) {
  return Response::json({{"error", std::string(to_string(code))}, {"message", message}}, http_status_for(code));
}

void raise_for_status(const Response& r) {
  if (r.ok()) return;
  try {
    auto j = nlohmann::json::parse(r.body);
    if (j.is_object() && j.contains("error")) {
      throw Error(errc_from_string(j["error"].get<std::string>()), j.value("message", ""));
    }
  } catch (const nlohmann::json::exception&) {
  }
  throw Error(Errc::TransportError, "HTTP " + std::to_string(r.status));
}

std::string url_decode(std::string_view s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '%' && i + 2 < s.size() && std::isxdigit(static_cast<unsigned char>(s[i + 1])) &&
        std::isxdigit(static_cast<unsigned char>(s[i + 2]))) {
      out += static_cast<char>(std::stoi(std::string(s.substr(i + 1, 2)), nullptr, 16));
      i += 2;
    } else if (s[i] == '+') {
      out += ' ';
    } else {
      out += s[i];
    }
  }
  return out;
}

std::string url_encode(std::string_view s) {
  static const char* hex = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
      out += static_cast<char>(c);
    } else {
      out += '%';
      out += hex[c >> 4];
      out += hex[c & 15];
    }
  }
  return out;
}

void Router::add(std::string method, std::string pattern, Handler handler) {
  routes_.push_back({std::move(method), segments_of(pattern), std::move(handler)});
}

Response Router::handle(Request request) const {
  split_query(request);
  auto segs = segments_of(request.path);
  bool path_known = false;
  for (const auto& route : routes_) {
    if (route.segments.size() != segs.size()) continue;
    std::map<std::string, std::string> params;
    bool match = true;
    for (std::size_t i = 0; i < segs.size() && match; ++i) {
      const auto& p = route.segments[i];
      if (p.size() > 2 && p.front() == '{' && p.back() == '}') {
        params[p.substr(1, p.size() - 2)] = url_decode(segs[i]);
      } else {
        match = p == segs[i];
      }
    }
    if (!match) continue;
    path_known = true;
    if (route.method != request.method) continue;
    request.params = std::move(params);
    try {
      return route.handler(request);
    } catch (const Error& e) {
      return error_response(e.code(), e.detail());
    } catch (const nlohmann::json::exception& e) {
      return error_response(Errc::InvalidArgument, e.what());
    } catch (const std::exception& e) {
      return error_response(Errc::StorageError, e.what());
    }
  }
  if (path_known) return error_response(Errc::InvalidArgument, request.method + " not allowed on " + request.path);
  return Response::json({{"error", "NotFound"}, {"message", request.path}}, 404);
}

// ---------------------------------------------------------------------------

class LoopbackTransport : public Transport {
 public:
  LoopbackTransport(Network& net, std::string origin) : net_(net), origin_(std::move(origin)) {}
  Response send(const std::string& target, Request request) override {
    return net_.deliver(origin_, target, std::move(request));
  }

 private:
  Network& net_;
  std::string origin_;
};

void Network::attach(const std::string& name, const Router* router) {
  std::lock_guard lock(mutex_);
  routers_[name] = router;
  reachable_.try_emplace(name, true);
}

void Network::detach(const std::string& name) {
  std::lock_guard lock(mutex_);
  routers_.erase(name);
}

void Network::set_reachable(const std::string& name, bool reachable) {
  std::lock_guard lock(mutex_);
  reachable_[name] = reachable;
}

std::shared_ptr<Transport> Network::client(std::string origin) {
  return std::make_shared<LoopbackTransport>(*this, std::move(origin));
}

std::vector<TraceEntry> Network::trace() const {
  std::lock_guard lock(mutex_);
  return trace_;
}

void Network::clear_trace() {
  std::lock_guard lock(mutex_);
  trace_.clear();
}

Response Network::deliver(const std::string& from, const std::string& to, Request request) {
  const Router* router = nullptr;
  std::size_t slot = 0;
  {
    std::lock_guard lock(mutex_);
    trace_.push_back({from, to, request.method, request.path, 0, false, request.body});
    slot = trace_.size() - 1;
    auto it = routers_.find(to);
    auto up = reachable_.find(to);
    if (it != routers_.end() && (up == reachable_.end() || up->second)) router = it->second;
  }
  if (!router) throw Error(Errc::TransportError, to + " is unreachable from " + from);
  auto response = router->handle(std::move(request));
  std::lock_guard lock(mutex_);
  trace_[slot].status = response.status;
  trace_[slot].delivered = true;
  return response;
}

// ---------------------------------------------------------------------------

void HttpTransport::set_endpoint(const std::string& target, std::string base_url) {
  endpoints_[target] = std::move(base_url);
}

Response HttpTransport::send(const std::string& target, Request request) {
  auto it = endpoints_.find(target);
  if (it == endpoints_.end()) throw Error(Errc::TransportError, "no endpoint configured for " + target);
  httplib::Client client(it->second);
  client.set_connection_timeout(5);
  client.set_read_timeout(30);
  httplib::Headers headers;
  for (const auto& [k, v] : request.headers) {
    if (k != "content-type") headers.emplace(k, v);
  }
  if (!token_.empty()) headers.emplace("x-site-token", token_);
  httplib::Result res;
  if (request.method == "GET") {
    res = client.Get(request.path, headers);
  } else {
    auto ct = request.header("content-type").value_or("application/json");
    res = client.Post(request.path, headers, request.body, ct);
  }
  if (!res) throw Error(Errc::TransportError, target + ": " + httplib::to_string(res.error()));
  Response out;
  out.status = res->status;
  out.body = res->body;
  out.content_type = res->get_header_value("Content-Type");
  return out;
}

struct HttpServer::Impl {
  explicit Impl(const Router& r) : router(r) {}
  const Router& router;
  httplib::Server server;
  std::thread thread;
};

HttpServer::HttpServer(const Router& router) : impl_(std::make_unique<Impl>(router)) {
  auto handler = [this](const httplib::Request& req, httplib::Response& res) {
    Request r;
    r.method = req.method;
    r.path = req.path;
    for (const auto& [k, v] : req.params) r.query[k] = v;
    for (const auto& [k, v] : req.headers) r.headers[lower(k)] = v;
    r.body = req.body;
    auto out = impl_->router.handle(std::move(r));
    res.status = out.status;
    for (const auto& [k, v] : out.headers) res.set_header(k, v);
    res.set_content(out.body, out.content_type);
  };
  impl_->server.Get(".*", handler);
  impl_->server.Post(".*", handler);
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(const std::string& host, int port) {
  int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error(Errc::TransportError, "cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void HttpServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

void HttpServer::wait() {
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace esource::net
