#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "topoleak/embedding.hpp"

namespace topoleak::client {

struct EndpointConfig {
  /// Base URL, e.g. http://127.0.0.1:8000/v1 (plain http only).
  std::string url;
  std::string model;
  /// Name of the environment variable holding the bearer token; empty for none.
  std::string auth_env;
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{200};
  double backoff_factor = 2.0;
  std::chrono::seconds timeout{60};

  static EndpointConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct HttpRequest {
  std::string url;   // full URL including path
  std::string body;  // JSON
  std::map<std::string, std::string> headers;
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// Performs one POST. Throws ExternalError on a transport failure.
using Transport = std::function<HttpResponse(const HttpRequest&)>;

/// POST over plain http via cpp-httplib.
Transport http_transport(std::chrono::seconds timeout);

/// Appends {"request": ..., "response": ...} lines to a JSONL file. Safe for
/// concurrent callers.
class Recorder {
 public:
  explicit Recorder(std::filesystem::path path);
  void record(const HttpRequest& req, const HttpResponse& resp);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::mutex mu_;
};

/// Serves responses from a recorded log, keyed by (url, body). Unknown
/// requests raise ExternalError.
Transport replay_transport(const std::filesystem::path& log);

using Sleeper = std::function<void(std::chrono::milliseconds)>;

struct CallOptions {
  Transport transport;           // defaults to http_transport
  Recorder* recorder = nullptr;  // optional
  Sleeper sleep;                 // defaults to std::this_thread::sleep_for
};

/// Chat-completions call; returns choices[0].message.content verbatim.
/// Non-2xx statuses and transport errors are retried with exponential
/// backoff; the last error is raised as ExternalError after max_attempts.
std::string external_agent_call(const EndpointConfig& endpoint, const std::string& system_prompt,
                                const std::string& user_prompt, const CallOptions& options = {});

/// Embedding backend over an /embeddings endpoint.
embedding::RemoteEmbedFn remote_embedder(const EndpointConfig& endpoint, CallOptions options = {});

}  // namespace topoleak::client
