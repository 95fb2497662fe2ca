#include <doctest.h>
#include <httplib.h>

#include <atomic>
#include <cstdlib>
#include <thread>

#include "common.hpp"
#include "medsim/error.hpp"
#include "medsim/gateway.hpp"

using namespace medsim;
using nlohmann::json;

namespace {

// Minimal OpenAI-compatible server on an ephemeral loopback port.
struct FakeServer {
  httplib::Server http;
  std::thread thread;
  int port = 0;
  std::atomic<int> hits{0};
  std::atomic<int> fail_first{0};
  int fail_status = 500;
  json last_body;
  std::string last_auth;
  std::mutex m;

  FakeServer() {
    http.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      const int n = ++hits;
      {
        std::lock_guard lock(m);
        last_body = json::parse(req.body);
        last_auth = req.get_header_value("Authorization");
      }
      if (n <= fail_first.load()) {
        res.status = fail_status;
        res.set_content("{\"error\": \"busy\"}", "application/json");
        return;
      }
      json reply{{"choices", json::array({{{"message", {{"role", "assistant"}, {"content", "pong " + std::to_string(n)}}}}})}};
      res.set_content(reply.dump(), "application/json");
    });
    port = http.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { http.listen_after_bind(); });
    http.wait_until_ready();
  }
  ~FakeServer() {
    http.stop();
    thread.join();
  }
  BackendConfig config() const {
    BackendConfig c;
    c.kind = "http";
    c.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1";
    c.model = "test-model";
    c.temperature = 0.7;
    c.timeout_ms = 5000;
    return c;
  }
};

}  // namespace

TEST_CASE("http transport sends the chat request and reads the reply") {
  FakeServer server;
  auto cfg = server.config();
  cfg.api_key_env = "MEDSIM_TEST_KEY";
  setenv("MEDSIM_TEST_KEY", "secret", 1);
  std::vector<int> sleeps;
  ChatClient client(cfg, std::make_shared<HttpTransport>(cfg), [&](int ms) { sleeps.push_back(ms); });
  CHECK(client.chat("be brief", {{Role::user, "ping"}}) == "pong 1");
  std::lock_guard lock(server.m);
  CHECK(server.last_body.at("model") == "test-model");
  CHECK(server.last_body.at("temperature") == 0.7);
  CHECK(server.last_body.at("seed") == 42);
  CHECK(server.last_body.at("messages").size() == 2);
  CHECK(server.last_body.at("messages")[0].at("role") == "system");
  CHECK(server.last_auth == "Bearer secret");
  CHECK(sleeps.empty());
}

TEST_CASE("server errors are retried with exponential backoff") {
  FakeServer server;
  server.fail_first = 2;
  auto cfg = server.config();
  cfg.backoff_ms = 10;
  std::vector<int> sleeps;
  ChatClient client(cfg, std::make_shared<HttpTransport>(cfg), [&](int ms) { sleeps.push_back(ms); });
  CHECK(client.chat("", {{Role::user, "ping"}}) == "pong 3");
  CHECK(client.attempts() == 3);
  CHECK(sleeps == std::vector<int>{10, 20});
}

TEST_CASE("rate limits retry; exhausted retries surface the error") {
  FakeServer server;
  server.fail_first = 10;
  server.fail_status = 429;
  auto cfg = server.config();
  cfg.max_retries = 2;
  ChatClient client(cfg, std::make_shared<HttpTransport>(cfg), [](int) {});
  CHECK_THROWS_AS(client.chat("", {{Role::user, "ping"}}), RateLimitError);
  CHECK(server.hits == 3);
}

TEST_CASE("client errors are not retried") {
  FakeServer server;
  server.fail_first = 10;
  server.fail_status = 400;
  auto cfg = server.config();
  ChatClient client(cfg, std::make_shared<HttpTransport>(cfg), [](int) {});
  try {
    client.chat("", {{Role::user, "ping"}});
    FAIL("expected RemoteError");
  } catch (const RemoteError& e) {
    CHECK(e.status() == 400);
  }
  CHECK(server.hits == 1);
}

TEST_CASE("an unreachable endpoint is a connection error after retries") {
  int port = 0;
  {
    FakeServer server;
    port = server.port;
  }
  BackendConfig cfg;
  cfg.kind = "http";
  cfg.endpoint = "http://127.0.0.1:" + std::to_string(port);
  cfg.max_retries = 1;
  cfg.timeout_ms = 500;
  ChatClient client(cfg, std::make_shared<HttpTransport>(cfg), [](int) {});
  CHECK_THROWS_AS(client.chat("", {{Role::user, "x"}}), TransientError);
  CHECK(client.attempts() == 2);
}

TEST_CASE("in-flight requests are capped") {
  FakeServer server;
  auto cfg = server.config();
  cfg.max_in_flight = 2;
  ChatClient client(cfg, std::make_shared<HttpTransport>(cfg), [](int) {});
  std::vector<std::thread> threads;
  for (int i = 0; i < 8; ++i) threads.emplace_back([&] { client.chat("", {{Role::user, "x"}}); });
  for (auto& t : threads) t.join();
  CHECK(client.calls() == 8);
  CHECK(client.peak_in_flight() <= 2);
}

TEST_CASE("scripted transport: queue, rules, cycle, each and failures") {
  json script{{"responses", json::array({"first"})},
              {"fail_first", {{"count", 1}, {"status", 503}}},
              {"rules", json::array({
                            {{"when", {{"var_equals", {{"kind", "list"}}}}},
                             {"each", {{"var", "items"}, {"value", {{"name", "{{item}}"}, {"i", "{{index}}"}}}}}},
                            {{"when", {{"last_user_contains", "hello"}}}, {"respond", "hi {{name}}"}},
                            {{"when", {{"var_equals", {{"agent", "doctor"}}}}}, {"cycle", json::array({"q1", "q2"})}},
                        })},
              {"default", "fallback"}};
  auto t = std::make_shared<ScriptedTransport>(script);
  ChatClient c({}, t, [](int) {});
  CHECK(c.chat("", {{Role::user, "x"}}) == "first");  // failure retried, then queue
  CHECK(c.attempts() == 2);
  CHECK(c.chat("", {{Role::user, "hello there"}}, {{"name", "Bo"}}) == "hi Bo");
  CHECK(c.chat("", {}, {{"agent", "doctor"}}) == "q1");
  CHECK(c.chat("", {{Role::assistant, "q1"}, {Role::user, "a"}}, {{"agent", "doctor"}}) == "q2");
  CHECK(c.chat("", {{Role::assistant, "q1"}, {Role::assistant, "q2"}}, {{"agent", "doctor"}}) == "q2");
  const auto list = json::parse(c.chat("", {}, {{"kind", "list"}, {"items", "a\nb"}}));
  CHECK(list == json::array({{{"name", "a"}, {"i", "0"}}, {{"name", "b"}, {"i", "1"}}}));
  CHECK(c.chat("", {{Role::user, "x"}}) == "fallback");
}

TEST_CASE("scripted transport rejects unknown conditions") {
  auto t = std::make_shared<ScriptedTransport>(json{{"rules", json::array({{{"when", {{"bogus", 1}}}, {"respond", "x"}}})}});
  CHECK_THROWS_AS(t->complete({}), ConfigError);
}

TEST_CASE("backend config parsing") {
  const auto dir = testkit::demo_dir();
  auto c = backend_from_json(json{{"kind", "scripted"}, {"script", "judge.script.json"}}, dir, kJudgeTemperature);
  CHECK(c.temperature == 0.0);
  CHECK(c.script == dir / "judge.script.json");
  CHECK_THROWS_AS(backend_from_json(json{{"kind", "scripted"}, {"script", "nope.json"}}, dir, 0.0), ConfigError);
  CHECK_THROWS_AS(backend_from_json(json{{"kind", "http"}}, dir, 0.0), ConfigError);
  CHECK_THROWS_AS(backend_from_json(json{{"kind", "carrier-pigeon"}}, dir, 0.0), ConfigError);
  auto h = backend_from_json(json{{"kind", "http"}, {"endpoint", "http://x/v1"}, {"model", "m"}, {"seed", nullptr}}, dir, 0.7);
  CHECK_FALSE(h.seed);
  CHECK(h.temperature == 0.7);
}

TEST_CASE("structured extraction per judge kind") {
  CHECK(extract_structured(JudgeKind::fidelity, "[REASON]: fine, [RESULT]: 3").at("score") == 3);
  CHECK_THROWS_AS(extract_structured(JudgeKind::fidelity, "[REASON]: fine, [RESULT]: 7"), JudgeFormatError);
  CHECK(extract_structured(JudgeKind::sentence_class, "Sure! {\"explanation\": \"x\", \"prediction\": \"Meta-Information\"}")
            .at("prediction") == "meta_information");
  CHECK(extract_structured(JudgeKind::ddx, "Yes.").at("answer") == "Y");
  CHECK(extract_structured(JudgeKind::ddx, " n").at("answer") == "N");
  CHECK_THROWS_AS(extract_structured(JudgeKind::ddx, "maybe"), JudgeFormatError);
  CHECK_THROWS_AS(extract_structured(JudgeKind::nli, "[{\"profile\": \"a\", \"entailment_prediction\": 2}]"), JudgeFormatError);
  const auto cons = extract_structured(JudgeKind::consistency, R"({"pain": "[REASON]: ok, [RESULT]: 4", "age": 2})");
  CHECK(cons.at("pain").at("score") == 4);
  CHECK(cons.at("age").at("score") == 2);
  try {
    extract_structured(JudgeKind::unsupported, "no json here");
  } catch (const JudgeFormatError& e) {
    CHECK(e.raw() == "no json here");
  }
}

TEST_CASE("structured records render back to parseable answers") {
  const json fid{{"reason", "ok"}, {"score", 2}};
  CHECK(extract_structured(JudgeKind::fidelity, render_structured(JudgeKind::fidelity, fid)) == fid);
  const json sc{{"explanation", "x"}, {"prediction", "meta_information"}};
  CHECK(extract_structured(JudgeKind::sentence_class, render_structured(JudgeKind::sentence_class, sc)) == sc);
}

TEST_CASE("find_json_document skips prose and braces inside strings") {
  CHECK(find_json_document("Answer: {\"a\": \"}\"} trailing") == json{{"a", "}"}});
  CHECK_FALSE(find_json_document("nothing"));
  CHECK(find_json_document("{bad} [1, 2]") == json::array({1, 2}));
}

TEST_CASE("judge client repairs one malformed answer") {
  testkit::ScriptedJudge judge(json{{"responses", json::array({"I think it is fine", "{\"explanation\": \"x\", \"prediction\": 0}"})}});
  const auto out = (*judge).ask(build_judge_prompt(JudgeKind::unsupported, {{"profile", "p"}, {"history", "h"}, {"sentence", "s"}}));
  CHECK(out.at("prediction") == 0);
  CHECK((*judge).repairs() == 1);
  CHECK(judge.calls() == 2);
}

TEST_CASE("judge client gives up after a second malformed answer") {
  testkit::ScriptedJudge judge(json{{"default", "still not json"}});
  CHECK_THROWS_AS((*judge).ask(build_judge_prompt(JudgeKind::unsupported, {{"profile", "p"}, {"history", "h"}, {"sentence", "s"}})),
                  JudgeFormatError);
  CHECK(judge.calls() == 2);
}

TEST_CASE("judge cache answers repeated prompts without a call") {
  const auto dir = testkit::scratch("judge-cache");
  auto transport = std::make_shared<ScriptedTransport>(json{{"default", "Y"}});
  auto client = std::make_shared<ChatClient>(BackendConfig{}, transport, [](int) {});
  JudgeClient a(client, dir);
  const auto prompt = build_judge_prompt(JudgeKind::ddx, {{"ddx", "Flu"}, {"ans", "Flu"}});
  CHECK(a.ask(prompt).at("answer") == "Y");
  JudgeClient b(client, dir);
  CHECK(b.ask(prompt).at("answer") == "Y");
  CHECK(transport->calls() == 1);
  CHECK(b.cache_hits() == 1);
}
