#include "topoleak/client.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <thread>

#include <httplib.h>

#include "topoleak/errors.hpp"
#include "topoleak/io.hpp"

namespace topoleak::client {

EndpointConfig EndpointConfig::from_json(const nlohmann::json& j) {
  static const std::set<std::string> known{"url",        "model",           "auth_env", "max_attempts",
                                           "backoff_ms", "backoff_factor", "timeout_s"};
  for (const auto& [key, value] : j.items())
    if (!known.contains(key)) throw ConfigError("endpoint: unknown key '" + key + "'");
  EndpointConfig c;
  c.url = j.at("url").get<std::string>();
  c.model = j.value("model", "");
  c.auth_env = j.value("auth_env", "");
  c.max_attempts = j.value("max_attempts", c.max_attempts);
  c.initial_backoff = std::chrono::milliseconds(j.value("backoff_ms", 200));
  c.backoff_factor = j.value("backoff_factor", c.backoff_factor);
  c.timeout = std::chrono::seconds(j.value("timeout_s", 60));
  if (c.max_attempts < 1) throw ConfigError("endpoint: max_attempts must be >= 1");
  return c;
}

nlohmann::json EndpointConfig::to_json() const {
  return {{"url", url},
          {"model", model},
          {"auth_env", auth_env},
          {"max_attempts", max_attempts},
          {"backoff_ms", initial_backoff.count()},
          {"backoff_factor", backoff_factor},
          {"timeout_s", timeout.count()}};
}

Transport http_transport(std::chrono::seconds timeout) {
  return [timeout](const HttpRequest& req) {
    constexpr std::string_view scheme = "http://";
    if (!req.url.starts_with(scheme))
      throw ExternalError("only http:// endpoints are supported: " + req.url);
    const auto slash = req.url.find('/', scheme.size());
    const std::string host = req.url.substr(0, slash);
    const std::string path = slash == std::string::npos ? "/" : req.url.substr(slash);
    httplib::Client cli(host);
    cli.set_connection_timeout(timeout);
    cli.set_read_timeout(timeout);
    httplib::Headers headers(req.headers.begin(), req.headers.end());
    auto res = cli.Post(path, headers, req.body, "application/json");
    if (!res) throw ExternalError("POST " + req.url + ": " + httplib::to_string(res.error()));
    return HttpResponse{res->status, res->body};
  };
}

Recorder::Recorder(std::filesystem::path path) : path_(std::move(path)) {}

void Recorder::record(const HttpRequest& req, const HttpResponse& resp) {
  // Headers are left out so credentials never reach the run directory.
  const nlohmann::json line = {{"request", {{"url", req.url}, {"body", req.body}}},
                               {"response", {{"status", resp.status}, {"body", resp.body}}}};
  std::lock_guard lock(mu_);
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  if (!out) throw ExternalError("cannot append to " + path_.string());
  out << line.dump() << '\n';
}

Transport replay_transport(const std::filesystem::path& log) {
  auto table = std::make_shared<std::map<std::pair<std::string, std::string>, HttpResponse>>();
  std::ifstream in(log, std::ios::binary);
  if (!in) throw ExternalError("cannot open replay log " + log.string());
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    const auto& rq = j.at("request");
    const auto& rs = j.at("response");
    // Later successful responses win over earlier failed attempts.
    (*table)[{rq.at("url").get<std::string>(), rq.at("body").get<std::string>()}] =
        HttpResponse{rs.at("status").get<int>(), rs.at("body").get<std::string>()};
  }
  return [table](const HttpRequest& req) {
    const auto it = table->find({req.url, req.body});
    if (it == table->end()) throw ExternalError("replay: no recorded response for request to " + req.url);
    return it->second;
  };
}

namespace {

std::string join_url(const std::string& base, std::string_view path) {
  if (!base.empty() && base.back() == '/') return base + std::string(path.substr(1));
  return base + std::string(path);
}

nlohmann::json post_with_retries(const EndpointConfig& endpoint, const std::string& path,
                                 const nlohmann::json& payload, const CallOptions& options) {
  const Transport transport = options.transport ? options.transport : http_transport(endpoint.timeout);
  const Sleeper sleep = options.sleep ? options.sleep : [](std::chrono::milliseconds d) {
    std::this_thread::sleep_for(d);
  };
  HttpRequest req{join_url(endpoint.url, path), payload.dump(), {}};
  if (!endpoint.auth_env.empty()) {
    const char* token = std::getenv(endpoint.auth_env.c_str());
    if (token == nullptr) throw ConfigError("environment variable " + endpoint.auth_env + " is not set");
    req.headers["Authorization"] = std::string("Bearer ") + token;
  }

  std::string last_error;
  auto delay = endpoint.initial_backoff;
  for (int attempt = 1; attempt <= endpoint.max_attempts; ++attempt) {
    try {
      const HttpResponse resp = transport(req);
      if (options.recorder != nullptr) options.recorder->record(req, resp);
      if (resp.status >= 200 && resp.status < 300) {
        auto body = nlohmann::json::parse(resp.body, nullptr, false);
        if (body.is_discarded()) throw ExternalError("malformed response: body is not JSON");
        return body;
      }
      last_error = "HTTP status " + std::to_string(resp.status);
    } catch (const ExternalError& e) {
      if (std::string_view(e.what()).starts_with("malformed")) throw;
      last_error = e.what();
    }
    if (attempt < endpoint.max_attempts) {
      sleep(delay);
      delay = std::chrono::milliseconds(
          static_cast<long long>(static_cast<double>(delay.count()) * endpoint.backoff_factor));
    }
  }
  throw ExternalError("request to " + req.url + " failed after " + std::to_string(endpoint.max_attempts) +
                      " attempts: " + last_error);
}

}  // namespace

std::string external_agent_call(const EndpointConfig& endpoint, const std::string& system_prompt,
                                const std::string& user_prompt, const CallOptions& options) {
  const nlohmann::json payload = {
      {"model", endpoint.model},
      {"messages",
       {{{"role", "system"}, {"content", system_prompt}}, {{"role", "user"}, {"content", user_prompt}}}}};
  const auto body = post_with_retries(endpoint, "/chat/completions", payload, options);
  try {
    return body.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw ExternalError("malformed response: missing choices[0].message.content");
  }
}

embedding::RemoteEmbedFn remote_embedder(const EndpointConfig& endpoint, CallOptions options) {
  return [endpoint, options](const std::vector<std::string>& texts) {
    const nlohmann::json payload = {{"model", endpoint.model}, {"input", texts}};
    const auto body = post_with_retries(endpoint, "/embeddings", payload, options);
    std::vector<std::vector<double>> out;
    try {
      for (const auto& row : body.at("data")) out.push_back(row.at("embedding").get<std::vector<double>>());
    } catch (const nlohmann::json::exception&) {
      throw ExternalError("malformed response: missing data[].embedding");
    }
    return out;
  };
}

}  // namespace topoleak::client
