#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace nerh {

enum class Purpose { Extraction, Structuring, Matching, Verification };
std::string_view to_string(Purpose p);
Purpose parse_purpose(std::string_view s);

struct ChatParams {
  double temperature = 0.0;
  std::optional<std::int64_t> seed = 42;
  std::optional<int> max_tokens;

  bool operator==(const ChatParams&) const = default;
};

struct ChatRequest {
  std::string model_id;
  std::string prompt;
  ChatParams params;
  Purpose purpose = Purpose::Extraction;
};

enum class ExchangeMode { Live, Replayed };

struct ChatExchange {
  ChatRequest request;
  std::string response_text;
  double latency_s = 0.0;
  ExchangeMode mode = ExchangeMode::Live;
  int retries = 0;
  std::string key;
};

/// Canonical request identity: SHA-256 (hex) over the JSON document
/// {"model", "params", "prompt"} with CRLF/CR normalized to LF. The purpose
/// tag is not part of the key.
std::string fixture_key(const ChatRequest& request);

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// Minimal HTTP surface the gateway needs. Implementations throw
/// TransportError on connection failure and TimeoutError on timeouts.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse post_json(const std::string& path, const std::string& body,
                                 std::chrono::milliseconds timeout) = 0;
  virtual HttpResponse get(const std::string& path, std::chrono::milliseconds timeout) = 0;
};

/// Talks to an Ollama-compatible server (POST /api/generate, GET /api/tags).
std::unique_ptr<Transport> make_http_transport(const std::string& base_url);

/// One JSON file per exchange, named <key>.json. Writes are serialized and
/// atomic (temp file + rename).
class FixtureStore {
 public:
  explicit FixtureStore(std::filesystem::path dir);

  std::optional<ChatExchange> load(const std::string& key) const;
  void save(const ChatExchange& exchange);
  std::filesystem::path path_for(const std::string& key) const;
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  mutable std::mutex write_mutex_;
};

nlohmann::json exchange_to_json(const ChatExchange& ex);
ChatExchange exchange_from_json(const nlohmann::json& j);

enum class GatewayMode { Live, Record, Replay };
std::string_view to_string(GatewayMode m);
GatewayMode parse_gateway_mode(std::string_view s);

inline constexpr std::string_view kEndpointEnvVar = "NERH_ENDPOINT";
inline constexpr std::string_view kDefaultEndpoint = "http://localhost:11434";

struct GatewayOptions {
  GatewayMode mode = GatewayMode::Replay;
  std::string endpoint = std::string(kDefaultEndpoint);
  std::filesystem::path fixture_dir;
  int retries = 2;
  std::chrono::milliseconds initial_backoff{500};
  std::chrono::milliseconds timeout{120'000};
  int max_in_flight = 1;
  /// When false, a replay miss falls through to a live call that is recorded.
  bool strict_replay = true;
};

/// Endpoint from NERH_ENDPOINT when set, otherwise `configured`.
std::string resolve_endpoint(const std::string& configured);

struct GatewayLogEntry {
  std::string key;
  std::string model_id;
  Purpose purpose;
  ExchangeMode mode;
  int retries;
  double latency_s;
};

/// Chat-completion access with live, record and replay modes.
///
/// Thread-safe. Concurrent calls are bounded by max_in_flight; replay lookups
/// do not count against the bound.
class Gateway {
 public:
  /// `transport` may be null in replay mode, or to use the HTTP transport for
  /// options.endpoint.
  explicit Gateway(GatewayOptions options, std::shared_ptr<Transport> transport = nullptr);

  ChatExchange chat(const ChatRequest& request);
  bool health_check(const std::string& model_id);

  GatewayMode mode() const { return options_.mode; }
  const GatewayOptions& options() const { return options_; }

  /// Number of chat() calls issued with the given purpose.
  std::size_t call_count(Purpose p) const;
  std::vector<GatewayLogEntry> log() const;

 private:
  ChatExchange call_live(const ChatRequest& request, const std::string& key);
  void acquire_slot();
  void release_slot();

  GatewayOptions options_;
  std::shared_ptr<Transport> transport_;
  std::unique_ptr<FixtureStore> store_;

  std::mutex slot_mutex_;
  std::condition_variable slot_cv_;
  int in_flight_ = 0;

  mutable std::mutex log_mutex_;
  std::vector<GatewayLogEntry> log_;
  std::map<Purpose, std::size_t> calls_;
};

}  // namespace nerh
