#include "medsim/gateway.hpp"

#include <httplib.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <regex>
#include <set>
#include <thread>

#include "medsim/error.hpp"
#include "medsim/profile.hpp"

namespace medsim {

using nlohmann::json;

BackendConfig backend_from_json(const json& j, const std::filesystem::path& base_dir,
                                double default_temperature) {
  if (!j.is_object()) throw ConfigError("backend config must be an object");
  BackendConfig c;
  c.temperature = default_temperature;
  c.kind = j.value("kind", c.kind);
  if (c.kind != "scripted" && c.kind != "http") throw ConfigError("unknown backend kind '" + c.kind + "'");
  c.endpoint = j.value("endpoint", c.endpoint);
  c.model = j.value("model", c.kind == "scripted" ? std::string("scripted") : std::string());
  c.api_key_env = j.value("api_key_env", c.api_key_env);
  c.temperature = j.value("temperature", c.temperature);
  if (auto it = j.find("seed"); it != j.end()) {
    if (it->is_null()) c.seed.reset();
    else c.seed = it->get<std::int64_t>();
  }
  c.max_retries = j.value("max_retries", c.max_retries);
  c.timeout_ms = j.value("timeout_ms", c.timeout_ms);
  c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
  c.backoff_ms = j.value("backoff_ms", c.backoff_ms);
  if (c.temperature < 0) throw ConfigError("backend temperature must be >= 0");
  if (c.max_retries < 0) throw ConfigError("backend max_retries must be >= 0");
  if (c.kind == "scripted") {
    if (!j.contains("script")) throw ConfigError("scripted backend needs a 'script' path");
    std::filesystem::path p = j.at("script").get<std::string>();
    if (p.is_relative()) p = base_dir / p;
    if (!std::filesystem::exists(p)) throw ConfigError("script not found: " + p.string());
    c.script = p;
  } else {
    if (c.endpoint.empty()) throw ConfigError("http backend needs an 'endpoint'");
    if (c.model.empty()) throw ConfigError("http backend needs a 'model'");
  }
  return c;
}

json backend_to_json(const BackendConfig& c) {
  json j{{"kind", c.kind},
         {"model", c.model},
         {"temperature", c.temperature},
         {"seed", c.seed ? json(*c.seed) : json(nullptr)},
         {"max_retries", c.max_retries},
         {"timeout_ms", c.timeout_ms},
         {"max_in_flight", c.max_in_flight}};
  if (c.kind == "http") j["endpoint"] = c.endpoint;
  else j["script"] = c.script.filename().string();
  return j;
}

// --- HTTP -------------------------------------------------------------------

HttpTransport::HttpTransport(BackendConfig cfg) : cfg_(std::move(cfg)) {
  static const std::regex kUrl(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(cfg_.endpoint, m, kUrl)) throw ConfigError("invalid endpoint URL '" + cfg_.endpoint + "'");
  host_ = m[1].str();
  base_path_ = m[2].matched ? m[2].str() : std::string();
  while (!base_path_.empty() && base_path_.back() == '/') base_path_.pop_back();
}

std::string HttpTransport::complete(const ChatRequest& req) {
  json messages = json::array();
  if (!req.system.empty()) messages.push_back({{"role", "system"}, {"content", req.system}});
  for (auto& m : req.messages) {
    messages.push_back({{"role", m.role == Role::user ? "user" : "assistant"}, {"content", m.text}});
  }
  json body{{"model", req.model}, {"messages", messages}, {"temperature", req.temperature}};
  if (req.seed) body["seed"] = *req.seed;

  httplib::Client cli(host_);
  const auto secs = cfg_.timeout_ms / 1000;
  const auto usecs = (cfg_.timeout_ms % 1000) * 1000;
  cli.set_connection_timeout(secs, usecs);
  cli.set_read_timeout(secs, usecs);
  cli.set_write_timeout(secs, usecs);
  httplib::Headers headers;
  if (!cfg_.api_key_env.empty()) {
    if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key && *key) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
  }
  auto res = cli.Post(base_path_ + "/chat/completions", headers, body.dump(), "application/json");
  if (!res) {
    const auto err = res.error();
    const std::string what = "request to " + host_ + " failed: " + httplib::to_string(err);
    if (err == httplib::Error::Read || err == httplib::Error::Write ||
        err == httplib::Error::ConnectionTimeout) {
      throw TimeoutError(what);
    }
    throw ConnectionError(what);
  }
  if (res->status == 429) throw RateLimitError(res->body);
  if (res->status < 200 || res->status >= 300) throw RemoteError(res->status, res->body);
  try {
    auto j = json::parse(res->body);
    auto& content = j.at("choices").at(0).at("message").at("content");
    if (!content.is_string()) throw RemoteError(res->status, "response content is not text");
    return content.get<std::string>();
  } catch (const json::exception& e) {
    throw RemoteError(res->status, std::string("malformed completion body: ") + e.what());
  }
}

// --- scripted ---------------------------------------------------------------

namespace {

std::string last_user(const ChatRequest& req) {
  for (auto it = req.messages.rbegin(); it != req.messages.rend(); ++it) {
    if (it->role == Role::user) return it->text;
  }
  return {};
}

std::size_t assistant_count(const ChatRequest& req) {
  std::size_t n = 0;
  for (auto& m : req.messages) n += m.role == Role::assistant;
  return n;
}

// Every condition present in `when` must hold.
bool matches(const json& when, const ChatRequest& req, const Slots& vars, const std::string* item) {
  if (!when.is_object()) return true;
  for (auto& [key, cond] : when.items()) {
    if (key == "system_contains") {
      if (!contains_ci(req.system, cond.get<std::string>())) return false;
    } else if (key == "last_user_contains") {
      if (!contains_ci(last_user(req), cond.get<std::string>())) return false;
    } else if (key == "last_user_regex") {
      std::regex re(cond.get<std::string>(), std::regex::icase);
      if (!std::regex_search(last_user(req), re)) return false;
    } else if (key == "var_equals" || key == "var_contains") {
      for (auto& [name, value] : cond.items()) {
        auto it = vars.find(name);
        if (it == vars.end()) return false;
        const auto expected = value.get<std::string>();
        if (key == "var_equals" ? it->second != expected : !contains_ci(it->second, expected)) return false;
      }
    } else if (key == "var_regex") {
      for (auto& [name, value] : cond.items()) {
        auto it = vars.find(name);
        if (it == vars.end()) return false;
        std::regex re(value.get<std::string>(), std::regex::icase);
        if (!std::regex_search(it->second, re)) return false;
      }
    } else if (key == "item") {
      if (!item || *item != cond.get<std::string>()) return false;
    } else if (key == "item_contains") {
      if (!item || !contains_ci(*item, cond.get<std::string>())) return false;
    } else if (key == "min_assistant_turns") {
      if (assistant_count(req) < cond.get<std::size_t>()) return false;
    } else {
      throw ConfigError("unknown script condition '" + key + "'");
    }
  }
  return true;
}

json render_value(const json& v, const Slots& vars) {
  if (v.is_string()) return render_slots(v.get<std::string>(), vars, "script");
  if (v.is_array()) {
    json out = json::array();
    for (auto& e : v) out.push_back(render_value(e, vars));
    return out;
  }
  if (v.is_object()) {
    json out = json::object();
    for (auto& [k, e] : v.items()) out[k] = render_value(e, vars);
    return out;
  }
  return v;
}

std::string render_each(const json& each, const ChatRequest& req, const Slots& vars) {
  const auto var = each.at("var").get<std::string>();
  auto it = vars.find(var);
  if (it == vars.end()) throw TemplateError(var, "script 'each' var '" + var + "' not in request");
  const bool as_object = each.value("as", "list") == "object";
  json out = as_object ? json::object() : json::array();
  std::size_t index = 0;
  for (auto& item : split_lines(it->second)) {
    if (item.empty()) continue;
    Slots local = vars;
    local["item"] = item;
    local["index"] = std::to_string(index++);
    const json* chosen = &each.at("value");
    if (auto cases = each.find("cases"); cases != each.end()) {
      for (auto& c : *cases) {
        if (matches(c.value("when", json::object()), req, local, &item)) {
          chosen = &c.at("value");
          break;
        }
      }
    }
    json rendered = render_value(*chosen, local);
    if (as_object) {
      out[item] = std::move(rendered);
    } else {
      out.push_back(std::move(rendered));
    }
  }
  return out.dump();
}

}  // namespace

ScriptedTransport::ScriptedTransport(json script) : script_(std::move(script)) {
  if (!script_.is_object()) throw ConfigError("script must be a JSON object");
  if (auto it = script_.find("fail_first"); it != script_.end()) failures_left_ = it->value("count", 0);
}

std::shared_ptr<ScriptedTransport> ScriptedTransport::from_file(const std::filesystem::path& path) {
  try {
    return std::make_shared<ScriptedTransport>(json::parse(read_text_file(path)));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string(), e.what());
  }
}

std::string ScriptedTransport::complete(const ChatRequest& req) {
  ++calls_;
  {
    std::lock_guard lock(mutex_);
    if (failures_left_ > 0) {
      --failures_left_;
      const int status = script_.at("fail_first").value("status", 500);
      if (status == 0) throw TimeoutError("scripted timeout");
      if (status == 429) throw RateLimitError("scripted rate limit");
      throw RemoteError(status, "scripted failure");
    }
    if (auto q = script_.find("responses"); q != script_.end() && queue_pos_ < q->size()) {
      return (*q)[queue_pos_++].get<std::string>();
    }
  }

  Slots vars = req.vars;
  const auto turns = assistant_count(req);
  vars["turn"] = std::to_string(turns + 1);
  vars["last_user"] = last_user(req);

  if (auto rules = script_.find("rules"); rules != script_.end()) {
    for (auto& rule : *rules) {
      if (!matches(rule.value("when", json::object()), req, vars, nullptr)) continue;
      if (auto r = rule.find("respond"); r != rule.end()) {
        return render_slots(r->get<std::string>(), vars, "script");
      }
      if (auto c = rule.find("cycle"); c != rule.end()) {
        if (c->empty()) throw ConfigError("script cycle is empty");
        const auto idx = std::min(turns, c->size() - 1);
        return render_slots((*c)[idx].get<std::string>(), vars, "script");
      }
      if (auto e = rule.find("each"); e != rule.end()) return render_each(*e, req, vars);
      throw ConfigError("script rule has no respond, cycle or each");
    }
  }
  if (auto d = script_.find("default"); d != script_.end()) {
    return render_slots(d->get<std::string>(), vars, "script");
  }
  throw RemoteError(404, "scripted backend has no response for this request");
}

// --- client -----------------------------------------------------------------

ChatClient::ChatClient(BackendConfig cfg, std::shared_ptr<ChatTransport> transport, Sleeper sleeper)
    : cfg_(std::move(cfg)), transport_(std::move(transport)), sleeper_(std::move(sleeper)) {
  if (!sleeper_) {
    sleeper_ = [](int ms) { std::this_thread::sleep_for(std::chrono::milliseconds(ms)); };
  }
}

std::string ChatClient::chat(const std::string& system, const std::vector<ChatMessage>& messages,
                             const Slots& vars) {
  ChatRequest req;
  req.system = system;
  req.messages = messages;
  req.vars = vars;
  req.model = cfg_.model;
  req.temperature = cfg_.temperature;
  req.seed = cfg_.seed;

  if (cfg_.max_in_flight > 0) {
    std::unique_lock lock(mutex_);
    cv_.wait(lock, [&] { return in_flight_ < cfg_.max_in_flight; });
    ++in_flight_;
    std::size_t now = static_cast<std::size_t>(in_flight_);
    std::size_t prev = peak_.load();
    while (now > prev && !peak_.compare_exchange_weak(prev, now)) {
    }
  }
  struct Release {
    ChatClient* self;
    ~Release() {
      if (self->cfg_.max_in_flight <= 0) return;
      {
        std::lock_guard lock(self->mutex_);
        --self->in_flight_;
      }
      self->cv_.notify_one();
    }
  } release{this};

  ++calls_;
  for (int attempt = 0;; ++attempt) {
    try {
      ++attempts_;
      std::string out = transport_->complete(req);
      if (trim(out).empty()) throw TransientError("backend returned an empty response");
      return out;
    } catch (const TransientError&) {
      if (attempt >= cfg_.max_retries) throw;
    } catch (const RemoteError& e) {
      if (!e.transient() || attempt >= cfg_.max_retries) throw;
    }
    sleeper_(cfg_.backoff_ms * (1 << std::min(attempt, 10)));
  }
}

std::shared_ptr<ChatClient> make_client(const BackendConfig& cfg) {
  std::shared_ptr<ChatTransport> t;
  if (cfg.kind == "http") {
    t = std::make_shared<HttpTransport>(cfg);
  } else if (cfg.kind == "scripted") {
    t = ScriptedTransport::from_file(cfg.script);
  } else {
    throw ConfigError("unknown backend kind '" + cfg.kind + "'");
  }
  return std::make_shared<ChatClient>(cfg, std::move(t));
}

// --- structured extraction --------------------------------------------------

std::optional<json> find_json_document(std::string_view text) {
  for (std::size_t start = 0; start < text.size(); ++start) {
    const char open = text[start];
    if (open != '{' && open != '[') continue;
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < text.size(); ++i) {
      const char c = text[i];
      if (in_string) {
        if (escaped) escaped = false;
        else if (c == '\\') escaped = true;
        else if (c == '"') in_string = false;
        continue;
      }
      if (c == '"') in_string = true;
      else if (c == '{' || c == '[') ++depth;
      else if (c == '}' || c == ']') {
        if (--depth == 0) {
          auto parsed = json::parse(text.substr(start, i - start + 1), nullptr, false);
          if (!parsed.is_discarded()) return parsed;
          break;
        }
      }
    }
  }
  return std::nullopt;
}

namespace {

[[noreturn]] void fail(const std::string& raw, const std::string& what) { throw JudgeFormatError(what, raw); }

std::optional<long long> as_int(const json& v) {
  if (v.is_number_integer()) return v.get<long long>();
  if (v.is_number_float()) {
    double d = v.get<double>();
    if (std::floor(d) == d) return static_cast<long long>(d);
    return std::nullopt;
  }
  if (v.is_string()) {
    const auto s = trim(v.get<std::string>());
    if (s.empty()) return std::nullopt;
    char* end = nullptr;
    long long n = std::strtoll(s.c_str(), &end, 10);
    if (end != s.c_str() + s.size()) return std::nullopt;
    return n;
  }
  return std::nullopt;
}

long long int_field(const json& obj, const char* key, long long lo, long long hi, const std::string& raw) {
  auto it = obj.find(key);
  if (it == obj.end()) fail(raw, std::string("missing key '") + key + "'");
  auto n = as_int(*it);
  if (!n) fail(raw, std::string("'") + key + "' is not an integer");
  if (*n < lo || *n > hi) {
    fail(raw, std::string("'") + key + "' = " + std::to_string(*n) + " outside " + std::to_string(lo) + ".." + std::to_string(hi));
  }
  return *n;
}

std::string text_field(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return {};
  return it->is_string() ? it->get<std::string>() : it->dump();
}

json require_document(const std::string& raw, bool want_array) {
  auto doc = find_json_document(raw);
  if (!doc) fail(raw, "no JSON document found");
  if (want_array) {
    if (doc->is_array()) return *doc;
    // Some models wrap the list in an object with a single key.
    if (doc->is_object() && doc->size() == 1 && doc->begin()->is_array()) return *doc->begin();
    fail(raw, "expected a JSON list");
  }
  if (!doc->is_object()) fail(raw, "expected a JSON object");
  return *doc;
}

struct Bracket {
  std::string reason;
  long long score;
};

Bracket parse_bracket(const std::string& text, long long lo, long long hi, const std::string& raw) {
  const auto r = text.find("[REASON]");
  const auto s = text.rfind("[RESULT]");
  if (s == std::string::npos) fail(raw, "missing [RESULT]");
  std::string reason;
  if (r != std::string::npos && r < s) {
    reason = text.substr(r + 8, s - r - 8);
    reason = trim(reason);
    if (!reason.empty() && reason.front() == ':') reason = trim(reason.substr(1));
    if (!reason.empty() && reason.back() == ',') reason = trim(reason.substr(0, reason.size() - 1));
  }
  std::size_t i = s + 8;
  while (i < text.size() && (text[i] == ':' || std::isspace(static_cast<unsigned char>(text[i])))) ++i;
  std::size_t j = i;
  if (j < text.size() && text[j] == '-') ++j;
  while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
  if (j == i || (j == i + 1 && text[i] == '-')) fail(raw, "[RESULT] is not followed by an integer");
  long long score = std::stoll(text.substr(i, j - i));
  if (score < lo || score > hi) {
    fail(raw, "[RESULT] " + std::to_string(score) + " outside " + std::to_string(lo) + ".." + std::to_string(hi));
  }
  return {reason, score};
}

std::string normalize_category(std::string s) {
  s = to_lower(trim(s));
  while (!s.empty() && (s.front() == '\'' || s.front() == '"' || s.front() == '`')) s.erase(0, 1);
  while (!s.empty() && (s.back() == '\'' || s.back() == '"' || s.back() == '.')) s.pop_back();
  for (auto& c : s) {
    if (c == ' ' || c == '-') c = '_';
  }
  return s;
}

// Validates `value` against a shape whose leaves are strings; non-string
// leaves in the answer are stringified, null becomes "Not recorded".
json normalize_shape(const json& shape, const json& value, const std::string& path, const std::string& raw) {
  if (shape.is_object()) {
    if (!value.is_object()) fail(raw, "'" + path + "' must be an object");
    json out = json::object();
    for (auto& [k, sub] : shape.items()) {
      auto it = value.find(k);
      const std::string child = path.empty() ? k : path + "." + k;
      if (it == value.end()) fail(raw, "missing key '" + child + "'");
      out[k] = normalize_shape(sub, *it, child, raw);
    }
    return out;
  }
  if (value.is_string()) return value;
  if (value.is_null()) return std::string(kNotRecorded);
  if (value.is_array()) {
    std::vector<std::string> parts;
    for (auto& e : value) parts.push_back(e.is_string() ? e.get<std::string>() : e.dump());
    return join(parts, "; ");
  }
  if (value.is_object()) fail(raw, "'" + path + "' must be a string");
  return value.dump();
}

const json& shape_for(JudgeKind kind) {
  static const json note_extract = json::parse(R"({
    "demographics": {"occupation": "", "living_situation": "", "children": ""},
    "social_history": {"exercise": "", "tobacco": "", "alcohol": "", "illicit_drug": "", "sexual_history": ""},
    "allergies": "", "medical_history": "", "family_medical_history": "", "medical_device": "",
    "present_illness": {"positive": "", "negative": ""}})");
  static const json note_impute = json::parse(R"({
    "demographics": {"occupation": "", "living_situation": "", "children": ""},
    "social_history": {"exercise": "", "tobacco": "", "alcohol": "", "illicit_drug": "", "sexual_history": ""}})");
  static const json profile_extract = json::parse(R"({
    "social_history": {"tobacco": "", "alcohol": "", "illicit_drug": "", "sexual_history": "", "exercise": "",
                       "marital_status": "", "children": "", "living_situation": "", "occupation": "", "insurance": ""},
    "previous_medical_history": {"allergies": "", "family_medical_history": "", "medical_device": "", "medical_history": ""},
    "current_visit_information": {"present_illness": {"positive": "", "negative": ""}, "chief_complaint": "",
                                  "pain": "", "medication": "", "arrival_transport": ""}})");
  switch (kind) {
    case JudgeKind::note_extract: return note_extract;
    case JudgeKind::note_impute: return note_impute;
    default: return profile_extract;
  }
}

const std::set<std::string>& sentence_categories() {
  static const std::set<std::string> cats{"politeness", "emotion", "inquiry", "meta_information", "information"};
  return cats;
}

}  // namespace

json extract_structured(JudgeKind kind, const std::string& raw) {
  if (trim(raw).empty()) fail(raw, "empty judge output");
  switch (kind) {
    case JudgeKind::fidelity: {
      auto b = parse_bracket(raw, 1, 4, raw);
      return {{"reason", b.reason}, {"score", b.score}};
    }
    case JudgeKind::consistency: {
      json doc = require_document(raw, false);
      json out = json::object();
      for (auto& [key, v] : doc.items()) {
        if (v.is_string()) {
          auto b = parse_bracket(v.get<std::string>(), 1, 4, raw);
          out[key] = {{"reason", b.reason}, {"score", b.score}};
        } else if (auto n = as_int(v); n && *n >= 1 && *n <= 4) {
          out[key] = {{"reason", ""}, {"score", *n}};
        } else {
          fail(raw, "consistency value for '" + key + "' is not a rubric answer");
        }
      }
      return out;
    }
    case JudgeKind::sentence_class: {
      json doc = require_document(raw, false);
      auto it = doc.find("prediction");
      if (it == doc.end() || !it->is_string()) fail(raw, "missing string 'prediction'");
      auto cat = normalize_category(it->get<std::string>());
      if (!sentence_categories().contains(cat)) fail(raw, "unknown sentence category '" + it->get<std::string>() + "'");
      return {{"explanation", text_field(doc, "explanation")}, {"prediction", cat}};
    }
    case JudgeKind::item_link: {
      json doc = require_document(raw, true);
      json out = json::array();
      for (auto& e : doc) {
        if (!e.is_object()) fail(raw, "item_link entries must be objects");
        auto it = e.find("category");
        if (it == e.end() || !it->is_string()) fail(raw, "item_link entry without 'category'");
        auto cat = normalize_category(it->get<std::string>());
        auto key = parse_item(cat);
        if (!key || *key == ItemKey::disposition) fail(raw, "unknown category '" + it->get<std::string>() + "'");
        out.push_back({{"category", std::string(item_name(*key))},
                       {"explanation", text_field(e, "explanation")},
                       {"prediction", int_field(e, "prediction", 0, 1, raw)}});
      }
      return out;
    }
    case JudgeKind::nli: {
      json doc = require_document(raw, true);
      json out = json::array();
      for (auto& e : doc) {
        if (!e.is_object()) fail(raw, "nli entries must be objects");
        out.push_back({{"profile", text_field(e, "profile")},
                       {"explanation", text_field(e, "explanation")},
                       {"entailment_prediction", int_field(e, "entailment_prediction", -1, 1, raw)}});
      }
      return out;
    }
    case JudgeKind::unsupported: {
      json doc = require_document(raw, false);
      return {{"explanation", text_field(doc, "explanation")}, {"prediction", int_field(doc, "prediction", 0, 1, raw)}};
    }
    case JudgeKind::plausibility: {
      json doc = require_document(raw, false);
      return {{"explanation", text_field(doc, "explanation")},
              {"likelihood_rating", int_field(doc, "likelihood_rating", 1, 4, raw)}};
    }
    case JudgeKind::note_filter: {
      json doc = require_document(raw, false);
      return {{"explanation", text_field(doc, "explanation")},
              {"likelihood_rating", int_field(doc, "likelihood_rating", 1, 5, raw)}};
    }
    case JudgeKind::profile_extract:
    case JudgeKind::note_extract:
    case JudgeKind::note_impute:
      return normalize_shape(shape_for(kind), require_document(raw, false), "", raw);
    case JudgeKind::ddx: {
      std::string t = trim(raw);
      std::size_t i = 0;
      while (i < t.size() && !std::isalpha(static_cast<unsigned char>(t[i]))) ++i;
      std::size_t j = i;
      while (j < t.size() && std::isalpha(static_cast<unsigned char>(t[j]))) ++j;
      const auto word = to_lower(t.substr(i, j - i));
      if (word == "y" || word == "yes") return {{"answer", "Y"}};
      if (word == "n" || word == "no") return {{"answer", "N"}};
      fail(raw, "expected Y or N");
    }
  }
  fail(raw, "unknown judge kind");
}

std::string render_structured(JudgeKind kind, const json& record) {
  auto bracket = [](const json& r) {
    return "[REASON]: " + r.at("reason").get<std::string>() + ", [RESULT]: " + std::to_string(r.at("score").get<long long>());
  };
  switch (kind) {
    case JudgeKind::fidelity: return bracket(record);
    case JudgeKind::consistency: {
      json out = json::object();
      for (auto& [k, v] : record.items()) out[k] = bracket(v);
      return out.dump(2);
    }
    case JudgeKind::sentence_class: {
      json out = record;
      if (out.at("prediction") == "meta_information") out["prediction"] = "meta-information";
      return out.dump();
    }
    case JudgeKind::ddx: return record.at("answer").get<std::string>();
    default: return record.dump(2);
  }
}

std::string schema_hint(JudgeKind kind) {
  switch (kind) {
    case JudgeKind::fidelity:
      return "[REASON]: write a brief feedback for criteria, [RESULT]: an integer number between 1 and 4";
    case JudgeKind::consistency:
      return "A JSON object whose keys are the GT keys and whose values are strings formatted as "
             "'[REASON]: write a brief feedback for criteria, [RESULT]: an integer number between 1 and 4'";
    case JudgeKind::sentence_class:
      return R"({"explanation": "...", "prediction": "politeness" | "emotion" | "inquiry" | "meta-information" | "information"})";
    case JudgeKind::item_link:
      return R"([{"category": "<category name>", "explanation": "...", "prediction": 0 or 1}, ...])";
    case JudgeKind::nli:
      return R"([{"profile": "<profile item>", "explanation": "...", "entailment_prediction": 1 or 0 or -1}, ...])";
    case JudgeKind::unsupported: return R"({"explanation": "...", "prediction": 1 or 0})";
    case JudgeKind::plausibility: return R"({"explanation": "...", "likelihood_rating": 1 to 4})";
    case JudgeKind::note_filter: return R"({"explanation": "...", "likelihood_rating": 1 to 5})";
    case JudgeKind::profile_extract:
    case JudgeKind::note_extract:
    case JudgeKind::note_impute: return shape_for(kind).dump(2);
    case JudgeKind::ddx: return "Y or N";
  }
  return {};
}

// --- judge client -----------------------------------------------------------

JudgeClient::JudgeClient(std::shared_ptr<ChatClient> client, std::optional<std::filesystem::path> cache_dir)
    : client_(std::move(client)), cache_dir_(std::move(cache_dir)) {}

std::string JudgeClient::cache_key(const JudgePrompt& prompt) const {
  std::string material = TemplateStore::standard().version();
  material += '\x1f';
  material += client_->config().model;
  material += '\x1f';
  material += judge_kind_name(prompt.kind);
  material += '\x1f';
  material += prompt.system;
  material += '\x1f';
  material += prompt.user;
  return sha256_hex(material);
}

json JudgeClient::ask(const JudgePrompt& prompt) {
  std::filesystem::path cache_file;
  if (cache_dir_) {
    const auto key = cache_key(prompt);
    cache_file = *cache_dir_ / key.substr(0, 2) / (key + ".json");
    if (std::filesystem::exists(cache_file)) {
      try {
        auto entry = json::parse(read_text_file(cache_file));
        auto record = extract_structured(prompt.kind, entry.at("raw").get<std::string>());
        ++cache_hits_;
        return record;
      } catch (const std::exception&) {
        // Unreadable entries are treated as misses and overwritten.
      }
    }
  }

  std::vector<ChatMessage> messages{{Role::user, prompt.user}};
  std::string raw = client_->chat(prompt.system, messages, prompt.vars);
  json record;
  try {
    record = extract_structured(prompt.kind, raw);
  } catch (const JudgeFormatError& first) {
    ++repairs_;
    messages.push_back({Role::assistant, raw});
    messages.push_back({Role::user, build_repair_prompt(first.what(), schema_hint(prompt.kind))});
    Slots vars = prompt.vars;
    vars["repair"] = "true";
    raw = client_->chat(prompt.system, messages, vars);
    record = extract_structured(prompt.kind, raw);
  }

  if (cache_dir_) {
    json entry{{"kind", std::string(judge_kind_name(prompt.kind))}, {"model", client_->config().model}, {"raw", raw}};
    std::lock_guard lock(cache_mutex_);
    write_text_file(cache_file, entry.dump());
  }
  return record;
}

}  // namespace medsim
