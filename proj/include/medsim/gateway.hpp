#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "medsim/promptkit.hpp"
#include "medsim/text.hpp"

namespace medsim {

enum class Role : std::uint8_t { user, assistant };

struct ChatMessage {
  Role role = Role::user;
  std::string text;
};

struct ChatRequest {
  std::string system;
  std::vector<ChatMessage> messages;
  // Request metadata (judge kind, profile fields, round counters). Remote
  // backends ignore it; scripted backends match and template on it.
  Slots vars;
  std::string model;
  double temperature = 0.0;
  std::optional<std::int64_t> seed;
};

struct BackendConfig {
  std::string kind = "scripted";  // "scripted" or "http"
  std::string endpoint;           // base URL, e.g. http://localhost:8000/v1
  std::string model = "scripted";
  std::string api_key_env;        // name of the env var holding a bearer token
  double temperature = 0.7;
  std::optional<std::int64_t> seed = 42;
  int max_retries = 3;
  int timeout_ms = 60000;
  int max_in_flight = 4;
  int backoff_ms = 250;
  std::filesystem::path script;  // scripted backends
};

inline constexpr double kAgentTemperature = 0.7;
inline constexpr double kJudgeTemperature = 0.0;
inline constexpr std::int64_t kDefaultSeed = 42;

// Relative script paths resolve against base_dir. Missing fields keep the
// defaults above, except that `temperature` defaults to `default_temperature`.
BackendConfig backend_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir,
                                double default_temperature);
nlohmann::json backend_to_json(const BackendConfig& c);

class ChatTransport {
 public:
  virtual ~ChatTransport() = default;
  // Returns the assistant text or throws TransientError / RemoteError.
  virtual std::string complete(const ChatRequest& req) = 0;
};

// OpenAI-compatible POST {endpoint}/chat/completions.
class HttpTransport final : public ChatTransport {
 public:
  explicit HttpTransport(BackendConfig cfg);
  std::string complete(const ChatRequest& req) override;

 private:
  BackendConfig cfg_;
  std::string host_;
  std::string base_path_;
};

// Deterministic offline backend driven by a script:
//   responses  queue consumed first, one entry per call
//   rules      first rule whose `when` matches answers; a rule has one of
//              `respond` (template over request vars), `cycle` (indexed by the
//              number of assistant messages so far, last entry repeats) or
//              `each` (builds a JSON list/object over a newline-separated var)
//   default    fallback text
//   fail_first {"count": n, "status": s} fails the first n calls
class ScriptedTransport final : public ChatTransport {
 public:
  explicit ScriptedTransport(nlohmann::json script);
  static std::shared_ptr<ScriptedTransport> from_file(const std::filesystem::path& path);

  std::string complete(const ChatRequest& req) override;
  std::size_t calls() const { return calls_.load(); }

 private:
  nlohmann::json script_;
  std::mutex mutex_;
  std::size_t queue_pos_ = 0;
  int failures_left_ = 0;
  std::atomic<std::size_t> calls_{0};
};

// Retries, backoff, in-flight limiting and call accounting over a transport.
class ChatClient {
 public:
  using Sleeper = std::function<void(int ms)>;

  ChatClient(BackendConfig cfg, std::shared_ptr<ChatTransport> transport, Sleeper sleeper = {});

  std::string chat(const std::string& system, const std::vector<ChatMessage>& messages,
                   const Slots& vars = {});
  const BackendConfig& config() const { return cfg_; }
  // Completed transport attempts, successful or not.
  std::size_t attempts() const { return attempts_.load(); }
  std::size_t calls() const { return calls_.load(); }
  std::size_t peak_in_flight() const { return peak_.load(); }

 private:
  BackendConfig cfg_;
  std::shared_ptr<ChatTransport> transport_;
  Sleeper sleeper_;
  std::mutex mutex_;
  std::condition_variable cv_;
  int in_flight_ = 0;
  std::atomic<std::size_t> attempts_{0};
  std::atomic<std::size_t> calls_{0};
  std::atomic<std::size_t> peak_{0};
};

std::shared_ptr<ChatClient> make_client(const BackendConfig& cfg);

// --- structured judge output -----------------------------------------------

// Parses and validates a judge answer for `kind`; returns a normalized record.
// Throws JudgeFormatError carrying `raw`.
nlohmann::json extract_structured(JudgeKind kind, const std::string& raw);
// Inverse of extract_structured for well-formed records.
std::string render_structured(JudgeKind kind, const nlohmann::json& record);
// Short description of the expected answer format, used in repair prompts.
std::string schema_hint(JudgeKind kind);

// First complete JSON document embedded in `text`, if any.
std::optional<nlohmann::json> find_json_document(std::string_view text);

// Judge access with one format-repair re-prompt and an optional on-disk cache
// keyed by template version, model and prompt text.
class JudgeClient {
 public:
  JudgeClient(std::shared_ptr<ChatClient> client, std::optional<std::filesystem::path> cache_dir = {});

  nlohmann::json ask(const JudgePrompt& prompt);
  ChatClient& chat_client() { return *client_; }
  std::size_t cache_hits() const { return cache_hits_.load(); }
  std::size_t repairs() const { return repairs_.load(); }

 private:
  std::string cache_key(const JudgePrompt& prompt) const;

  std::shared_ptr<ChatClient> client_;
  std::optional<std::filesystem::path> cache_dir_;
  std::mutex cache_mutex_;
  std::atomic<std::size_t> cache_hits_{0};
  std::atomic<std::size_t> repairs_{0};
};

}  // namespace medsim
