#include <gtest/gtest.h>

#include "esource/error.hpp"
#include "esource/net/http.hpp"

namespace esource::net {
namespace {

Router echo_router() {
  Router r;
  r.add("GET", "/items/{id}", [](const Request& q) {
    return Response::json({{"id", q.param("id")}, {"q", q.query_param("q").value_or("")}});
  });
  r.add("POST", "/items/{id}/tags/{tag}", [](const Request& q) {
    return Response::json({{"id", q.param("id")}, {"tag", q.param("tag")}, {"body", q.body}}, 201);
  });
  r.add("GET", "/boom", [](const Request&) -> Response { throw Error(Errc::UnknownSubject, "no such subject"); });
  r.add("GET", "/header", [](const Request& q) { return Response::json({{"t", q.header("X-Site-Token").value_or("")}}); });
  return r;
}

TEST(Router, BindsParametersAndQuery) {
  auto r = echo_router();
  auto got = r.handle(Request::get("/items/a%2Fb?q=x%20y"));
  ASSERT_EQ(got.status, 200);
  EXPECT_EQ(got.json().at("id"), "a/b");
  EXPECT_EQ(got.json().at("q"), "x y");
  auto posted = r.handle(Request::post("/items/7/tags/red", "payload"));
  EXPECT_EQ(posted.status, 201);
  EXPECT_EQ(posted.json().at("tag"), "red");
  EXPECT_EQ(posted.json().at("body"), "payload");
}

TEST(Router, UnmatchedAndErrors) {
  auto r = echo_router();
  EXPECT_EQ(r.handle(Request::get("/items")).status, 404);
  EXPECT_EQ(r.handle(Request::post("/items/1", "")).status, 400) << "known path, wrong method";
  auto boom = r.handle(Request::get("/boom"));
  EXPECT_EQ(boom.status, http_status_for(Errc::UnknownSubject));
  EXPECT_EQ(boom.json().at("error"), "UnknownSubject");
  EXPECT_THROW(raise_for_status(boom), Error);
  try {
    raise_for_status(boom);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::UnknownSubject);
  }
  EXPECT_NO_THROW(raise_for_status(Response::json({})));
}

TEST(Router, HeadersAreCaseInsensitive) {
  auto r = echo_router();
  auto got = r.handle(Request::get("/header").with_header("X-SITE-TOKEN", "abc"));
  EXPECT_EQ(got.json().at("t"), "abc");
}

TEST(UrlCoding, RoundTripsArbitraryBytes) {
  std::string all;
  for (int c = 1; c < 256; ++c) all += static_cast<char>(c);
  EXPECT_EQ(url_decode(url_encode(all)), all);
  EXPECT_EQ(url_encode("a b/c"), "a%20b%2Fc");
  EXPECT_EQ(url_encode("S.GORD-1_x~"), "S.GORD-1_x~");
  EXPECT_EQ(url_decode("%41%42+%2B"), "AB +");
}

TEST(StatusMapping, DistinctClassesForClientAndServerFaults) {
  EXPECT_EQ(http_status_for(Errc::Unauthorized), 401);
  EXPECT_EQ(http_status_for(Errc::UnknownStudy), 404);
  EXPECT_GE(http_status_for(Errc::SequenceViolation), 400);
  EXPECT_LT(http_status_for(Errc::SequenceViolation), 500);
  EXPECT_GE(http_status_for(Errc::StorageError), 500);
}

TEST(Network, TracesInitiatorAndReachability) {
  auto r = echo_router();
  Network net;
  net.attach("svc", &r);
  auto client = net.client("caller");
  EXPECT_TRUE(client->send("svc", Request::get("/items/1")).ok());
  net.set_reachable("svc", false);
  try {
    client->send("svc", Request::get("/items/2"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::TransportError);
  }
  EXPECT_THROW(client->send("elsewhere", Request::get("/")), Error);
  auto trace = net.trace();
  ASSERT_GE(trace.size(), 2u);
  EXPECT_EQ(trace[0].from, "caller");
  EXPECT_EQ(trace[0].to, "svc");
  EXPECT_TRUE(trace[0].delivered);
  EXPECT_EQ(trace[0].status, 200);
  EXPECT_FALSE(trace[1].delivered);
  net.clear_trace();
  EXPECT_TRUE(net.trace().empty());
}

TEST(HttpLoopback, ServesRouterOverRealSockets) {
  auto r = echo_router();
  HttpServer server(r);
  int port = server.start("127.0.0.1", 0);
  ASSERT_GT(port, 0);
  HttpTransport client;
  client.set_endpoint("svc", "http://127.0.0.1:" + std::to_string(port));
  client.set_site_token("tok");

  auto got = client.send("svc", Request::get("/items/a%20b?q=1"));
  ASSERT_EQ(got.status, 200) << got.body;
  EXPECT_EQ(got.json().at("id"), "a b");
  auto posted = client.send("svc", Request::post("/items/1/tags/t", "<x/>", "application/xml"));
  EXPECT_EQ(posted.status, 201);
  EXPECT_EQ(posted.json().at("body"), "<x/>");
  EXPECT_EQ(client.send("svc", Request::get("/header")).json().at("t"), "tok");
  EXPECT_EQ(client.send("svc", Request::get("/boom")).status, http_status_for(Errc::UnknownSubject));
  server.stop();

  try {
    client.send("svc", Request::get("/items/1"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::TransportError);
  }
  EXPECT_THROW(client.send("unknown", Request::get("/")), Error);
}

}  // namespace
}  // namespace esource::net
