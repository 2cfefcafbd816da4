#include <gtest/gtest.h>

#include <filesystem>

#include "topoleak/client.hpp"
#include "topoleak/errors.hpp"

using namespace topoleak;
using client::HttpRequest;
using client::HttpResponse;
using nlohmann::json;

namespace {

client::EndpointConfig endpoint() {
  client::EndpointConfig e;
  e.url = "http://127.0.0.1:1/v1";
  e.model = "test-model";
  return e;
}

std::string chat_body(const std::string& content) {
  return json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}}.dump();
}

// Replies with the user message echoed back.
HttpResponse echo(const HttpRequest& req) {
  const auto body = json::parse(req.body);
  return {200, chat_body("echo: " + body["messages"][1]["content"].get<std::string>())};
}

std::filesystem::path temp_file(const char* name) {
  const auto p = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove(p);
  return p;
}

}  // namespace

TEST(Client, EchoRequestShape) {
  HttpRequest seen;
  client::CallOptions opts;
  opts.transport = [&](const HttpRequest& req) {
    seen = req;
    return echo(req);
  };
  EXPECT_EQ(client::external_agent_call(endpoint(), "sys", "hello", opts), "echo: hello");
  EXPECT_EQ(seen.url, "http://127.0.0.1:1/v1/chat/completions");
  const auto body = json::parse(seen.body);
  EXPECT_EQ(body["model"], "test-model");
  EXPECT_EQ(body["messages"][0]["role"], "system");
  EXPECT_EQ(body["messages"][0]["content"], "sys");
  EXPECT_EQ(body["messages"][1]["role"], "user");
}

TEST(Client, RetriesThenFailsWithBackoff) {
  int calls = 0;
  std::vector<long long> sleeps;
  client::CallOptions opts;
  opts.transport = [&](const HttpRequest&) -> HttpResponse {
    ++calls;
    return {503, "busy"};
  };
  opts.sleep = [&](std::chrono::milliseconds d) { sleeps.push_back(d.count()); };
  try {
    client::external_agent_call(endpoint(), "s", "u", opts);
    FAIL() << "expected ExternalError";
  } catch (const ExternalError& e) {
    EXPECT_NE(std::string(e.what()).find("failed after 3 attempts"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("503"), std::string::npos);
  }
  EXPECT_EQ(calls, 3);
  EXPECT_EQ(sleeps, (std::vector<long long>{200, 400}));
}

TEST(Client, RecoversAfterTransientFailure) {
  int calls = 0;
  client::CallOptions opts;
  opts.transport = [&](const HttpRequest& req) -> HttpResponse {
    if (++calls == 1) throw ExternalError("connection refused");
    return echo(req);
  };
  opts.sleep = [](std::chrono::milliseconds) {};
  EXPECT_EQ(client::external_agent_call(endpoint(), "s", "x", opts), "echo: x");
  EXPECT_EQ(calls, 2);
}

TEST(Client, MalformedBodyIsNotRetried) {
  int calls = 0;
  client::CallOptions opts;
  opts.transport = [&](const HttpRequest&) -> HttpResponse {
    ++calls;
    return {200, "<html>"};
  };
  opts.sleep = [](std::chrono::milliseconds) {};
  EXPECT_THROW(client::external_agent_call(endpoint(), "s", "u", opts), ExternalError);
  EXPECT_EQ(calls, 1);
  calls = 0;
  opts.transport = [&](const HttpRequest&) -> HttpResponse {
    ++calls;
    return {200, R"({"choices": []})"};
  };
  EXPECT_THROW(client::external_agent_call(endpoint(), "s", "u", opts), ExternalError);
  EXPECT_EQ(calls, 1);
}

TEST(Client, RecordThenReplayGivesSameResult) {
  const auto log = temp_file("topoleak_client_replay.jsonl");
  client::Recorder recorder(log);
  client::CallOptions live;
  live.transport = echo;
  live.recorder = &recorder;
  const auto a = client::external_agent_call(endpoint(), "s", "first", live);
  const auto b = client::external_agent_call(endpoint(), "s", "second", live);

  client::CallOptions replay;
  replay.transport = client::replay_transport(log);
  replay.sleep = [](std::chrono::milliseconds) {};
  EXPECT_EQ(client::external_agent_call(endpoint(), "s", "second", replay), b);
  EXPECT_EQ(client::external_agent_call(endpoint(), "s", "first", replay), a);
  EXPECT_THROW(client::external_agent_call(endpoint(), "s", "never seen", replay), ExternalError);
  std::filesystem::remove(log);
}

TEST(Client, AuthHeaderFromEnvironment) {
  auto e = endpoint();
  e.auth_env = "TOPOLEAK_TEST_TOKEN_UNSET_XYZ";
  client::CallOptions opts;
  opts.transport = echo;
  EXPECT_THROW(client::external_agent_call(e, "s", "u", opts), ConfigError);
  ::setenv("TOPOLEAK_TEST_TOKEN_SET", "abc", 1);
  e.auth_env = "TOPOLEAK_TEST_TOKEN_SET";
  std::string auth;
  opts.transport = [&](const HttpRequest& req) {
    auth = req.headers.at("Authorization");
    return echo(req);
  };
  client::external_agent_call(e, "s", "u", opts);
  EXPECT_EQ(auth, "Bearer abc");
}

TEST(Client, RemoteEmbedder) {
  client::CallOptions opts;
  opts.transport = [](const HttpRequest& req) {
    const auto body = json::parse(req.body);
    json data = json::array();
    for (const auto& t : body["input"])
      data.push_back({{"embedding", {static_cast<double>(t.get<std::string>().size()), 1.0}}});
    return HttpResponse{200, json{{"data", data}}.dump()};
  };
  const auto embed = client::remote_embedder(endpoint(), opts);
  const auto out = embed({"ab", "abcd"});
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0], (std::vector<double>{2.0, 1.0}));
  EXPECT_EQ(out[1], (std::vector<double>{4.0, 1.0}));
}

TEST(Client, HttpTransportRejectsHttps) {
  const auto t = client::http_transport(std::chrono::seconds(1));
  EXPECT_THROW(t({"https://example.com/v1", "{}", {}}), ExternalError);
}

TEST(Client, EndpointJsonRoundTrip) {
  auto e = endpoint();
  e.max_attempts = 4;
  const auto back = client::EndpointConfig::from_json(e.to_json());
  EXPECT_EQ(back.to_json(), e.to_json());
  EXPECT_THROW(client::EndpointConfig::from_json(json{{"url", "http://x"}, {"max_attempts", 0}}), ConfigError);
}
