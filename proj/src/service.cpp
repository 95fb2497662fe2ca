#include "medsim/service.hpp"

#include <httplib.h>

#include <algorithm>
#include <iomanip>
#include <regex>
#include <set>
#include <sstream>

#include "medsim/error.hpp"
#include "medsim/facteval.hpp"
#include "medsim/fideval.hpp"
#include "medsim/stats.hpp"

namespace medsim {

using nlohmann::json;
namespace fs = std::filesystem;

struct Service::Server {
  httplib::Server http;
};

namespace {

class HttpError : public Error {
 public:
  HttpError(int status, const std::string& what) : Error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

HttpResponse error(int status, const std::string& message) { return {status, {{"error", message}}}; }

json parse_body(const std::string& body) {
  if (trim(body).empty()) return json::object();
  try {
    auto j = json::parse(body);
    if (!j.is_object()) throw HttpError(400, "request body must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw HttpError(400, std::string("request body is not JSON: ") + e.what());
  }
}

std::string item_id(const std::string& session, int turn, int sentence) {
  return session + ":" + std::to_string(turn) + ":" + std::to_string(sentence);
}

// What a human doctor may see before taking the history.
json visit_basics(const PatientProfile& p) {
  return {{"age", p.age}, {"gender", p.gender}, {"arrival_transport", p.arrival_transport}};
}

}  // namespace

json transcript_to_json(const Transcript& t) {
  json out;
  json turns = json::array();
  std::istringstream in(transcript_to_jsonl(t));
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = json::parse(line);
    const auto record = j.at("record").get<std::string>();
    j.erase("record");
    if (record == "session") out = j;
    else turns.push_back(j);
  }
  out["turns"] = turns;
  return out;
}

Service::Service(RunConfig cfg, std::shared_ptr<ChatClient> patient)
    : cfg_(std::move(cfg)), layout_{cfg_.out}, patient_(std::move(patient)) {
  if (cfg_.assets) set_asset_dir(*cfg_.assets);
  for (auto& p : load_profiles(cfg_.profiles)) profiles_.emplace(p.profile_id, p);
  lexicons_ = load_lexicons(cfg_.lexicon_dir);
  fs::create_directories(layout_.sessions());
  fs::create_directories(layout_.annotations());
  // Reload consultations persisted by an earlier process.
  std::vector<fs::path> files;
  for (auto& e : fs::directory_iterator(layout_.sessions())) {
    if (e.path().extension() == ".transcript") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (auto& f : files) {
    auto t = load_transcript(f);
    auto p = profiles_.find(t.profile_id);
    if (p == profiles_.end()) continue;
    auto s = std::make_unique<Live>();
    s->clock = make_clock();
    const auto id = t.session_id;
    s->session = std::make_unique<ConsultationSession>(std::move(t), p->second, *s->clock);
    sessions_[id] = std::move(s);
    ++next_id_;
  }
  load_ratings();
}

std::unique_ptr<Clock> Service::make_clock() const {
  if (cfg_.fixed_clock) return std::make_unique<FixedClock>(0, 1000);
  return std::make_unique<SystemClock>();
}

HttpResponse Service::handle(const std::string& method, const std::string& path, const std::string& body) {
  static const std::regex session_re(R"(^/sessions/([A-Za-z0-9_.-]+)(/(turns|ddx|survey))?$)");
  static const std::regex annotation_re(R"(^/annotations/([A-Za-z0-9_.-]+)(/(ratings|agreement))?$)");
  try {
    std::smatch m;
    if (path == "/sessions") {
      if (method != "POST") return error(405, "use POST");
      return create_session(parse_body(body));
    }
    if (std::regex_match(path, m, session_re)) {
      const auto id = m[1].str();
      const auto action = m[3].str();
      if (action.empty()) return method == "GET" ? get_session(id) : error(405, "use GET");
      if (method != "POST") return error(405, "use POST");
      const auto req = parse_body(body);
      if (action == "turns") return add_turn(id, req);
      if (action == "ddx") return submit_ddx(id, req);
      return submit_survey(id, req);
    }
    if (path == "/annotations") return method == "GET" ? list_annotations() : error(405, "use GET");
    if (std::regex_match(path, m, annotation_re)) {
      const auto id = m[1].str();
      const auto action = m[3].str();
      if (action.empty()) return method == "GET" ? get_annotation(id) : error(405, "use GET");
      if (action == "ratings") return method == "POST" ? add_ratings(id, parse_body(body)) : error(405, "use POST");
      return method == "GET" ? agreement(id) : error(405, "use GET");
    }
    return error(404, "no route for " + path);
  } catch (const HttpError& e) {
    return error(e.status(), e.what());
  } catch (const NotFoundError& e) {
    return error(404, e.what());
  } catch (const ParseError& e) {
    return error(400, e.what());
  } catch (const PreconditionError& e) {
    return error(409, e.what());
  } catch (const InsufficientDataError& e) {
    return error(422, e.what());
  } catch (const TransientError& e) {
    return error(502, std::string("patient backend unavailable: ") + e.what());
  } catch (const RemoteError& e) {
    return error(502, std::string("patient backend failed: ") + e.what());
  } catch (const json::exception& e) {
    return error(400, e.what());
  } catch (const std::exception& e) {
    return error(500, e.what());
  }
}

Service::Live& Service::live(const std::string& id) {
  std::lock_guard lock(mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw NotFoundError("no session '" + id + "'");
  return *it->second;
}

void Service::persist(const Live& s) const {
  save_transcript(transcript_path(layout_.sessions(), s.session->transcript().session_id), s.session->transcript());
}

HttpResponse Service::create_session(const json& req) {
  const auto profile_id = req.value("profile_id", std::string());
  auto p = profiles_.find(profile_id);
  if (p == profiles_.end()) throw NotFoundError("no profile '" + profile_id + "'");
  std::string id;
  int n = 0;
  {
    std::lock_guard lock(mutex_);
    n = next_id_++;
    std::ostringstream os;
    os << "s" << std::setw(4) << std::setfill('0') << n;
    id = os.str();
  }
  PersonaSpec persona;
  if (req.contains("persona")) {
    persona = persona_from_json(req.at("persona"));
    if (auto v = validate_persona(persona); !v.ok()) throw HttpError(400, "persona not allowed: " + v.violations[0].message);
  } else {
    const auto all = enumerate_personas();
    persona = all[Rng(splitmix64(cfg_.seed + static_cast<std::uint64_t>(n))).below(all.size())];
  }
  auto s = std::make_unique<Live>();
  s->clock = make_clock();
  const SessionConfig scfg{req.value("total_idx", cfg_.total_idx), cfg_.top_k_diagnosis, cfg_.seed};
  s->session = std::make_unique<ConsultationSession>(id, p->second, persona,
                                                     session_words(lexicons_, persona, cfg_.seed, id), scfg, *s->clock);
  persist(*s);
  json out{{"session_id", id},
           {"profile_id", profile_id},
           {"persona", cfg_.reveal_persona ? json(persona_code(persona)) : json(nullptr)},
           {"total_idx", scfg.total_idx},
           {"patient", visit_basics(p->second)}};
  std::lock_guard lock(mutex_);
  sessions_[id] = std::move(s);
  return {201, out};
}

HttpResponse Service::get_session(const std::string& id) {
  auto& s = live(id);
  std::lock_guard lock(s.mutex);
  auto out = transcript_to_json(s.session->transcript());
  if (!cfg_.reveal_persona) {
    out.erase("persona");
    out.erase("words");
  }
  out["patient"] = visit_basics(s.session->profile());
  out["current_round"] = s.session->current_round();
  return {200, out};
}

HttpResponse Service::add_turn(const std::string& id, const json& req) {
  const auto text = trim(req.value("text", std::string()));
  if (text.empty()) throw HttpError(400, "a turn needs non-empty 'text'");
  auto& s = live(id);
  std::lock_guard lock(s.mutex);
  if (!s.session->awaiting_doctor()) throw PreconditionError("session " + id + " is not awaiting a doctor turn");
  // Work on a copy so a failed patient call leaves the session unchanged.
  ConsultationSession next = *s.session;
  next.add_doctor_turn(text);
  next.add_patient_turn(patient_->chat(next.patient_system(), next.patient_messages(), next.patient_vars()));
  *s.session = std::move(next);
  persist(s);
  const auto& t = s.session->transcript();
  json reply = transcript_to_json(t).at("turns").back();
  return {200,
          {{"patient", reply},
           {"finished", t.complete()},
           {"termination", t.termination ? json(termination_name(*t.termination)) : json(nullptr)},
           {"current_round", s.session->current_round()}}};
}

HttpResponse Service::submit_ddx(const std::string& id, const json& req) {
  if (!req.contains("ddx") || !req.at("ddx").is_array()) throw HttpError(400, "'ddx' must be a list");
  std::vector<std::string> ddx;
  for (auto& d : req.at("ddx")) {
    if (!d.is_string()) throw HttpError(400, "'ddx' entries must be strings");
    if (auto v = trim(d.get<std::string>()); !v.empty()) ddx.push_back(v);
  }
  if (ddx.empty() || ddx.size() > 3) throw HttpError(400, "submit between one and three diagnoses");
  auto& s = live(id);
  std::lock_guard lock(s.mutex);
  s.session->end_by_user(ddx);
  persist(s);
  return {200, {{"session_id", id}, {"ddx_list", ddx}, {"termination", "user_ended"}}};
}

HttpResponse Service::submit_survey(const std::string& id, const json& req) {
  auto& s = live(id);
  std::lock_guard lock(s.mutex);
  const auto& t = s.session->transcript();
  if (!t.complete() || !t.ddx_list) throw PreconditionError("the survey opens after the DDx is submitted");
  const auto path = layout_.sessions() / (id + ".survey.json");
  if (fs::exists(path)) throw PreconditionError("survey for " + id + " was already submitted");
  if (!req.contains("scores") || !req.at("scores").is_object()) throw HttpError(400, "'scores' must be an object");
  const auto& scores = req.at("scores");
  json out = json::array();
  for (auto c : kCriteria) {
    const auto name = std::string(criterion_name(c));
    if (!scores.contains(name) || !scores.at(name).is_number_integer()) throw HttpError(400, "missing score for '" + name + "'");
    const int v = scores.at(name).get<int>();
    if (v < 1 || v > 4) throw HttpError(400, "score for '" + name + "' must be 1..4");
    FidelityScore f;
    f.session_id = id;
    f.criterion = c;
    f.score = v;
    f.source = ScoreSource::human;
    f.rater = req.value("rater_id", std::string("doctor"));
    out.push_back(fidelity_score_to_json(f));
  }
  for (auto& [key, _] : scores.items()) {
    if (!parse_criterion(key)) throw HttpError(400, "unknown criterion '" + key + "'");
  }
  write_text_file(path, out.dump(2) + "\n");
  return {201, {{"session_id", id}, {"scores", out}}};
}

// --- annotation ----------------------------------------------------------------

namespace {

struct Annotated {
  Transcript transcript;
  std::vector<SentenceVerdict> verdicts;
};

Annotated load_annotated(const RunLayout& layout, const std::string& id) {
  const auto t = transcript_path(layout.transcripts(), id);
  const auto v = layout.verdicts() / (id + ".jsonl");
  if (!fs::exists(t) || !fs::exists(v)) throw NotFoundError("no evaluated session '" + id + "'");
  return {load_transcript(t), load_verdicts(v)};
}

}  // namespace

HttpResponse Service::list_annotations() {
  json out = json::array();
  if (!fs::exists(layout_.verdicts())) return {200, out};
  std::vector<fs::path> files;
  for (auto& e : fs::directory_iterator(layout_.verdicts())) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (auto& f : files) {
    if (f.extension() != ".jsonl") continue;
    const auto verdicts = load_verdicts(f);
    const auto flagged = std::count_if(verdicts.begin(), verdicts.end(), [](auto& v) { return v.unsupported; });
    const auto id = f.stem().string();
    if (!fs::exists(transcript_path(layout_.transcripts(), id))) continue;
    out.push_back({{"session_id", id}, {"n_sentences", verdicts.size()}, {"n_unsupported", flagged}});
  }
  return {200, out};
}

HttpResponse Service::get_annotation(const std::string& id) {
  const auto a = load_annotated(layout_, id);
  auto p = profiles_.find(a.transcript.profile_id);
  if (p == profiles_.end()) throw NotFoundError("no profile '" + a.transcript.profile_id + "'");
  std::map<std::pair<int, int>, const SentenceVerdict*> by_pos;
  for (auto& v : a.verdicts) by_pos[{v.turn_index, v.sentence_index}] = &v;
  json turns = json::array();
  for (auto& turn : a.transcript.turns) {
    json sentences = json::array();
    for (auto& s : turn.sentences) {
      json js{{"sentence_index", s.index}, {"text", s.text}};
      if (auto it = by_pos.find({turn.turn_index, s.index}); it != by_pos.end()) {
        js["category"] = category_name(it->second->category);
        js["unsupported"] = it->second->unsupported;
      }
      sentences.push_back(js);
    }
    turns.push_back({{"turn_index", turn.turn_index},
                     {"role", speaker_name(turn.role)},
                     {"text", turn.text},
                     {"sentences", sentences}});
  }
  return {200,
          {{"session_id", id},
           {"persona", persona_code(a.transcript.persona)},
           {"profile", profile_to_json(p->second)},
           {"turns", turns}}};
}

HttpResponse Service::add_ratings(const std::string& id, const json& req) {
  const auto rater = trim(req.value("rater_id", std::string()));
  if (rater.empty()) throw HttpError(400, "ratings need a 'rater_id'");
  if (!req.contains("ratings") || !req.at("ratings").is_array()) throw HttpError(400, "'ratings' must be a list");
  const auto a = load_annotated(layout_, id);
  std::set<std::pair<int, int>> flagged;
  for (auto& v : a.verdicts) {
    if (v.unsupported) flagged.insert({v.turn_index, v.sentence_index});
  }
  std::map<std::string, int> accepted;
  for (auto& r : req.at("ratings")) {
    const int turn = r.at("turn_index").get<int>();
    const int sentence = r.at("sentence_index").get<int>();
    const int rating = r.at("rating").get<int>();
    if (!flagged.contains({turn, sentence})) {
      throw HttpError(400, "sentence " + std::to_string(turn) + ":" + std::to_string(sentence) + " is not flagged unsupported");
    }
    if (rating < 1 || rating > 4) throw HttpError(400, "ratings must be 1..4");
    accepted[item_id(id, turn, sentence)] = rating;
  }
  // A submission rates every flagged sentence of the session.
  if (accepted.size() != flagged.size()) {
    throw HttpError(400, "rate all " + std::to_string(flagged.size()) + " flagged sentences, got " +
                             std::to_string(accepted.size()));
  }
  std::lock_guard lock(ratings_mutex_);
  for (auto& [item, rating] : accepted) ratings_[{item, rater}] = rating;
  save_ratings();
  return {200, {{"session_id", id}, {"rater_id", rater}, {"stored", accepted.size()}}};
}

HttpResponse Service::agreement(const std::string& id) {
  std::vector<RatingMatrix::Entry> entries;
  {
    std::lock_guard lock(ratings_mutex_);
    const auto prefix = id + ":";
    for (auto& [key, rating] : ratings_) {
      if (key.first.rfind(prefix, 0) == 0) entries.push_back({key.first, key.second, rating});
    }
  }
  if (entries.empty()) throw NotFoundError("no ratings for '" + id + "'");
  const auto m = RatingMatrix::from_entries(entries);
  json pairs = json::array();
  for (auto& r : pairwise_agreement(m, AcMethod::ac1, cfg_.n_bootstrap, cfg_.seed)) pairs.push_back(agreement_to_json(r));
  return {200, {{"session_id", id}, {"n_items", m.n_items()}, {"n_raters", m.n_raters()}, {"pairwise_AC1", pairs}}};
}

void Service::load_ratings() {
  const auto path = layout_.annotations() / "ratings.csv";
  if (!fs::exists(path)) return;
  const auto m = RatingMatrix::load_csv(path);
  for (std::size_t i = 0; i < m.n_items(); ++i) {
    for (std::size_t r = 0; r < m.n_raters(); ++r) {
      if (m.ratings[i][r]) ratings_[{m.item_ids[i], m.rater_ids[r]}] = *m.ratings[i][r];
    }
  }
}

void Service::save_ratings() const {
  std::string out = "item_id,rater_id,rating\n";
  for (auto& [key, rating] : ratings_) out += key.first + "," + key.second + "," + std::to_string(rating) + "\n";
  write_text_file(layout_.annotations() / "ratings.csv", out);
}

// --- HTTP wiring ---------------------------------------------------------------

namespace {

void install_routes(httplib::Server& http, Service& svc) {
  auto dispatch = [&svc](const httplib::Request& req, httplib::Response& res) {
    auto r = svc.handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  http.Get(".*", dispatch);
  http.Post(".*", dispatch);
  http.Put(".*", dispatch);
  http.Delete(".*", dispatch);
}

}  // namespace

bool Service::listen(const std::string& host, int port) {
  server_ = std::make_shared<Server>();
  install_routes(server_->http, *this);
  return server_->http.listen(host, port);
}

int Service::bind_any_port(const std::string& host) {
  server_ = std::make_shared<Server>();
  install_routes(server_->http, *this);
  return server_->http.bind_to_any_port(host);
}

bool Service::listen_after_bind() { return server_ && server_->http.listen_after_bind(); }

void Service::stop() {
  if (server_) server_->http.stop();
}

}  // namespace medsim
