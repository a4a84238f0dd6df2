#include "nerh/llm_gateway.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include "nerh/errors.hpp"
#include "nerh/text.hpp"

namespace nerh {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

std::string_view to_string(Purpose p) {
  switch (p) {
    case Purpose::Extraction: return "extraction";
    case Purpose::Structuring: return "structuring";
    case Purpose::Matching: return "matching";
    case Purpose::Verification: return "verification";
  }
  return "extraction";
}

Purpose parse_purpose(std::string_view s) {
  if (s == "extraction") return Purpose::Extraction;
  if (s == "structuring") return Purpose::Structuring;
  if (s == "matching") return Purpose::Matching;
  if (s == "verification") return Purpose::Verification;
  throw ParseError("unknown purpose '" + std::string(s) + "'");
}

std::string_view to_string(GatewayMode m) {
  switch (m) {
    case GatewayMode::Live: return "live";
    case GatewayMode::Record: return "record";
    case GatewayMode::Replay: return "replay";
  }
  return "live";
}

GatewayMode parse_gateway_mode(std::string_view s) {
  if (s == "live") return GatewayMode::Live;
  if (s == "record") return GatewayMode::Record;
  if (s == "replay") return GatewayMode::Replay;
  throw ParseError("unknown gateway mode '" + std::string(s) + "'");
}

namespace {

std::string normalize_line_endings(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\r') {
      out.push_back('\n');
      if (i + 1 < s.size() && s[i + 1] == '\n') ++i;
    } else {
      out.push_back(s[i]);
    }
  }
  return out;
}

json params_to_json(const ChatParams& p) {
  json j = json::object();
  j["temperature"] = p.temperature;
  j["seed"] = p.seed ? json(*p.seed) : json(nullptr);
  j["max_tokens"] = p.max_tokens ? json(*p.max_tokens) : json(nullptr);
  return j;
}

ChatParams params_from_json(const json& j) {
  ChatParams p;
  p.temperature = j.value("temperature", 0.0);
  if (j.contains("seed") && !j["seed"].is_null()) p.seed = j["seed"].get<std::int64_t>();
  else p.seed.reset();
  if (j.contains("max_tokens") && !j["max_tokens"].is_null()) p.max_tokens = j["max_tokens"].get<int>();
  return p;
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 digest failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xF]);
  }
  return out;
}

class HttpTransport final : public Transport {
 public:
  explicit HttpTransport(std::string base_url) : base_url_(std::move(base_url)) {}

  HttpResponse post_json(const std::string& path, const std::string& body,
                         std::chrono::milliseconds timeout) override {
    auto client = make_client(timeout);
    const auto start = Clock::now();
    auto res = client.Post(path, body, "application/json");
    return finish(res, start, timeout);
  }

  HttpResponse get(const std::string& path, std::chrono::milliseconds timeout) override {
    auto client = make_client(timeout);
    const auto start = Clock::now();
    auto res = client.Get(path);
    return finish(res, start, timeout);
  }

 private:
  httplib::Client make_client(std::chrono::milliseconds timeout) const {
    httplib::Client client(base_url_);
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout).count(),
                                  (timeout.count() % 1000) * 1000);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    return client;
  }

  HttpResponse finish(const httplib::Result& res, Clock::time_point start,
                      std::chrono::milliseconds timeout) const {
    if (!res) {
      const auto err = res.error();
      const auto elapsed = Clock::now() - start;
      const std::string what = base_url_ + ": " + httplib::to_string(err);
      if (err == httplib::Error::ConnectionTimeout || elapsed >= timeout) throw TimeoutError(what);
      throw TransportError(what);
    }
    return {res->status, res->body};
  }

  std::string base_url_;
};

std::string response_text_from(const std::string& body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error& e) {
    throw TransportError(std::string("endpoint returned non-JSON body: ") + e.what());
  }
  if (j.contains("response") && j["response"].is_string()) return j["response"].get<std::string>();
  if (j.contains("message") && j["message"].is_object() && j["message"].contains("content"))
    return j["message"]["content"].get<std::string>();
  throw TransportError("endpoint response has neither 'response' nor 'message.content'");
}

}  // namespace

std::string fixture_key(const ChatRequest& request) {
  json canon = json::object();
  canon["model"] = request.model_id;
  canon["params"] = params_to_json(request.params);
  canon["prompt"] = normalize_line_endings(request.prompt);
  return sha256_hex(canon.dump(-1, ' ', false, json::error_handler_t::replace));
}

std::unique_ptr<Transport> make_http_transport(const std::string& base_url) {
  return std::make_unique<HttpTransport>(base_url);
}

json exchange_to_json(const ChatExchange& ex) {
  json j;
  j["key"] = ex.key;
  j["request"] = {{"model_id", ex.request.model_id},
                  {"prompt", ex.request.prompt},
                  {"params", params_to_json(ex.request.params)},
                  {"purpose", std::string(to_string(ex.request.purpose))}};
  j["response_text"] = ex.response_text;
  j["latency_s"] = ex.latency_s;
  j["retries"] = ex.retries;
  return j;
}

ChatExchange exchange_from_json(const json& j) {
  ChatExchange ex;
  ex.key = j.at("key").get<std::string>();
  const json& r = j.at("request");
  ex.request.model_id = r.at("model_id").get<std::string>();
  ex.request.prompt = r.at("prompt").get<std::string>();
  ex.request.params = params_from_json(r.at("params"));
  ex.request.purpose = parse_purpose(r.value("purpose", "extraction"));
  ex.response_text = j.at("response_text").get<std::string>();
  ex.latency_s = j.value("latency_s", 0.0);
  ex.retries = j.value("retries", 0);
  return ex;
}

FixtureStore::FixtureStore(std::filesystem::path dir) : dir_(std::move(dir)) {}

std::filesystem::path FixtureStore::path_for(const std::string& key) const {
  return dir_ / (key + ".json");
}

std::optional<ChatExchange> FixtureStore::load(const std::string& key) const {
  std::ifstream in(path_for(key), std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    ChatExchange ex = exchange_from_json(json::parse(ss.str()));
    ex.mode = ExchangeMode::Replayed;
    return ex;
  } catch (const std::exception& e) {
    throw ParseError(path_for(key).string() + ": corrupt fixture: " + e.what());
  }
}

void FixtureStore::save(const ChatExchange& exchange) {
  std::lock_guard lock(write_mutex_);
  std::filesystem::create_directories(dir_);
  const auto final_path = path_for(exchange.key);
  auto tmp = final_path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write fixture " + tmp.string());
    out << exchange_to_json(exchange).dump(2, ' ', false, json::error_handler_t::replace) << '\n';
  }
  std::filesystem::rename(tmp, final_path);
}

std::string resolve_endpoint(const std::string& configured) {
  if (const char* env = std::getenv(std::string(kEndpointEnvVar).c_str()); env && *env) return env;
  return configured;
}

Gateway::Gateway(GatewayOptions options, std::shared_ptr<Transport> transport)
    : options_(std::move(options)), transport_(std::move(transport)) {
  if (options_.max_in_flight < 1) options_.max_in_flight = 1;
  if (!options_.fixture_dir.empty()) store_ = std::make_unique<FixtureStore>(options_.fixture_dir);
  if ((options_.mode == GatewayMode::Record || options_.mode == GatewayMode::Replay) && !store_)
    throw PreconditionError("record/replay mode requires a fixture directory");
  const bool may_go_live = options_.mode != GatewayMode::Replay || !options_.strict_replay;
  if (!transport_ && may_go_live) transport_ = make_http_transport(options_.endpoint);
}

void Gateway::acquire_slot() {
  std::unique_lock lock(slot_mutex_);
  slot_cv_.wait(lock, [&] { return in_flight_ < options_.max_in_flight; });
  ++in_flight_;
}

void Gateway::release_slot() {
  {
    std::lock_guard lock(slot_mutex_);
    --in_flight_;
  }
  slot_cv_.notify_one();
}

ChatExchange Gateway::chat(const ChatRequest& request) {
  if (request.model_id.empty()) throw PreconditionError("chat request without model id");
  if (!(request.params.temperature >= 0.0)) throw PreconditionError("temperature must be >= 0");

  const std::string key = fixture_key(request);
  ChatExchange ex;
  if (options_.mode == GatewayMode::Replay) {
    if (auto stored = store_->load(key)) {
      ex = std::move(*stored);
      ex.request.purpose = request.purpose;
    } else if (options_.strict_replay) {
      throw MissingFixture(key);
    } else {
      ex = call_live(request, key);
      store_->save(ex);
    }
  } else {
    ex = call_live(request, key);
    if (options_.mode == GatewayMode::Record) store_->save(ex);
  }

  std::lock_guard lock(log_mutex_);
  ++calls_[request.purpose];
  log_.push_back({key, request.model_id, request.purpose, ex.mode, ex.retries, ex.latency_s});
  return ex;
}

ChatExchange Gateway::call_live(const ChatRequest& request, const std::string& key) {
  json body = json::object();
  body["model"] = request.model_id;
  body["prompt"] = request.prompt;
  body["stream"] = false;
  json opts = json::object();
  opts["temperature"] = request.params.temperature;
  if (request.params.seed) opts["seed"] = *request.params.seed;
  if (request.params.max_tokens) opts["num_predict"] = *request.params.max_tokens;
  body["options"] = std::move(opts);
  const std::string payload = body.dump(-1, ' ', false, json::error_handler_t::replace);

  acquire_slot();
  struct Release {
    Gateway* g;
    ~Release() { g->release_slot(); }
  } release{this};

  const auto start = Clock::now();
  auto backoff = options_.initial_backoff;
  for (int attempt = 0;; ++attempt) {
    try {
      const HttpResponse res = transport_->post_json("/api/generate", payload, options_.timeout);
      if (res.status >= 200 && res.status < 300) {
        ChatExchange ex;
        ex.request = request;
        ex.response_text = response_text_from(res.body);
        ex.latency_s = std::chrono::duration<double>(Clock::now() - start).count();
        ex.mode = ExchangeMode::Live;
        ex.retries = attempt;
        ex.key = key;
        return ex;
      }
      if (attempt >= options_.retries)
        throw TransportError("endpoint returned HTTP " + std::to_string(res.status), res.status,
                             attempt + 1);
      spdlog::warn("chat {}: HTTP {} (attempt {}), retrying", request.model_id, res.status, attempt + 1);
    } catch (const TimeoutError& e) {
      if (attempt >= options_.retries) throw TimeoutError(e.what(), 0, attempt + 1);
      spdlog::warn("chat {}: timeout (attempt {}), retrying", request.model_id, attempt + 1);
    } catch (const TransportError& e) {
      if (attempt >= options_.retries || e.status() != 0) throw;
      spdlog::warn("chat {}: {} (attempt {}), retrying", request.model_id, e.what(), attempt + 1);
    }
    std::this_thread::sleep_for(backoff);
    backoff *= 2;
  }
}

bool Gateway::health_check(const std::string& model_id) {
  if (options_.mode == GatewayMode::Replay) return true;
  try {
    const HttpResponse res = transport_->get("/api/tags", options_.timeout);
    if (res.status != 200) {
      spdlog::warn("health check: endpoint returned HTTP {}", res.status);
      return false;
    }
    const json j = json::parse(res.body);
    for (const auto& m : j.value("models", json::array())) {
      for (const char* field : {"name", "model"}) {
        if (!m.contains(field) || !m[field].is_string()) continue;
        const std::string name = m[field].get<std::string>();
        if (name == model_id || name == model_id + ":latest") return true;
      }
    }
    return false;
  } catch (const std::exception& e) {
    spdlog::warn("health check for {} failed: {}", model_id, e.what());
    return false;
  }
}

std::size_t Gateway::call_count(Purpose p) const {
  std::lock_guard lock(log_mutex_);
  auto it = calls_.find(p);
  return it == calls_.end() ? 0 : it->second;
}

std::vector<GatewayLogEntry> Gateway::log() const {
  std::lock_guard lock(log_mutex_);
  return log_;
}

}  // namespace nerh
