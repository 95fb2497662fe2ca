#include "medsim/orchestrator.hpp"

#include <cctype>
#include <mutex>
#include <set>

#include "medsim/error.hpp"

namespace medsim {

using nlohmann::json;

std::string_view speaker_name(Speaker s) { return s == Speaker::doctor ? "doctor" : "patient"; }

std::string_view termination_name(Termination t) {
  switch (t) {
    case Termination::ddx_emitted: return "ddx_emitted";
    case Termination::round_limit: return "round_limit";
    case Termination::user_ended: return "user_ended";
    case Termination::aborted: return "aborted";
  }
  return "?";
}

std::optional<Termination> parse_termination(std::string_view s) {
  for (auto t : {Termination::ddx_emitted, Termination::round_limit, Termination::user_ended, Termination::aborted}) {
    if (termination_name(t) == s) return t;
  }
  return std::nullopt;
}

int Transcript::doctor_turns() const {
  int n = 0;
  for (auto& turn : turns) n += turn.role == Speaker::doctor;
  return n;
}

int Transcript::patient_turns() const { return static_cast<int>(turns.size()) - doctor_turns(); }

// --- persistence -------------------------------------------------------------

std::string transcript_to_jsonl(const Transcript& t) {
  json header{{"record", "session"},
              {"session_id", t.session_id},
              {"profile_id", t.profile_id},
              {"persona", persona_code(t.persona)},
              {"words", word_sample_to_json(t.words)},
              {"total_idx", t.total_idx},
              {"top_k_diagnosis", t.top_k_diagnosis},
              {"seed", t.seed},
              {"template_version", t.template_version},
              {"termination", t.termination ? json(termination_name(*t.termination)) : json(nullptr)},
              {"ddx_list", t.ddx_list ? json(*t.ddx_list) : json(nullptr)},
              {"abort_reason", t.abort_reason ? json(*t.abort_reason) : json(nullptr)},
              {"started_ms", t.started_ms},
              {"ended_ms", t.ended_ms ? json(*t.ended_ms) : json(nullptr)}};
  std::string out = header.dump() + "\n";
  for (auto& turn : t.turns) {
    json sentences = json::array();
    for (auto& s : turn.sentences) sentences.push_back(s.text);
    json line{{"record", "turn"},
              {"turn_index", turn.turn_index},
              {"round", turn.round},
              {"role", speaker_name(turn.role)},
              {"text", turn.text},
              {"sentences", sentences},
              {"dazed_phase", turn.dazed_phase ? json(dazed_phase_name(*turn.dazed_phase)) : json(nullptr)},
              {"timestamp_ms", turn.timestamp_ms}};
    out += line.dump() + "\n";
  }
  return out;
}

namespace {

template <class T>
std::optional<T> opt(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<T>();
}

std::optional<DazedPhase> parse_dazed_phase(std::string_view s) {
  for (auto p : {DazedPhase::high, DazedPhase::moderate, DazedPhase::normal}) {
    if (dazed_phase_name(p) == s) return p;
  }
  return std::nullopt;
}

}  // namespace

Transcript transcript_from_jsonl(std::string_view text, const std::string& source) {
  auto lines = split_lines(text);
  Transcript t;
  bool have_header = false;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    const std::string where = source + ":" + std::to_string(i + 1);
    try {
      auto j = json::parse(lines[i]);
      const auto record = j.at("record").get<std::string>();
      if (record == "session") {
        if (have_header) throw ParseError(where, "duplicate session header");
        have_header = true;
        t.session_id = j.at("session_id").get<std::string>();
        t.profile_id = j.at("profile_id").get<std::string>();
        t.persona = persona_from_json(j.at("persona"));
        t.words = word_sample_from_json(j.at("words"));
        t.total_idx = j.at("total_idx").get<int>();
        t.top_k_diagnosis = j.at("top_k_diagnosis").get<int>();
        t.seed = j.at("seed").get<std::uint64_t>();
        t.template_version = j.at("template_version").get<std::string>();
        if (auto term = opt<std::string>(j, "termination")) {
          t.termination = parse_termination(*term);
          if (!t.termination) throw ParseError(where, "unknown termination '" + *term + "'");
        }
        t.ddx_list = opt<std::vector<std::string>>(j, "ddx_list");
        t.abort_reason = opt<std::string>(j, "abort_reason");
        t.started_ms = j.at("started_ms").get<std::int64_t>();
        t.ended_ms = opt<std::int64_t>(j, "ended_ms");
      } else if (record == "turn") {
        if (!have_header) throw ParseError(where, "turn record before session header");
        Turn turn;
        turn.turn_index = j.at("turn_index").get<int>();
        turn.round = j.at("round").get<int>();
        const auto role = j.at("role").get<std::string>();
        if (role == "doctor") turn.role = Speaker::doctor;
        else if (role == "patient") turn.role = Speaker::patient;
        else throw ParseError(where, "unknown role '" + role + "'");
        turn.text = j.at("text").get<std::string>();
        int m = 0;
        for (auto& s : j.at("sentences")) turn.sentences.push_back({s.get<std::string>(), m++, turn.turn_index});
        if (auto phase = opt<std::string>(j, "dazed_phase")) {
          turn.dazed_phase = parse_dazed_phase(*phase);
          if (!turn.dazed_phase) throw ParseError(where, "unknown dazed phase '" + *phase + "'");
        }
        turn.timestamp_ms = j.at("timestamp_ms").get<std::int64_t>();
        t.turns.push_back(std::move(turn));
      } else {
        throw ParseError(where, "unknown record type '" + record + "'");
      }
    } catch (const json::exception& e) {
      throw ParseError(where, e.what());
    }
  }
  if (!have_header) throw ParseError(source, "missing session header");
  return t;
}

void save_transcript(const std::filesystem::path& path, const Transcript& t) {
  write_text_file(path, transcript_to_jsonl(t));
}

Transcript load_transcript(const std::filesystem::path& path) {
  return transcript_from_jsonl(read_text_file(path), path.string());
}

std::filesystem::path transcript_path(const std::filesystem::path& dir, const std::string& session_id) {
  return dir / (session_id + ".transcript");
}

ValidationResult validate_transcript(const Transcript& t) {
  ValidationResult r;
  auto add = [&](std::string path, std::string msg) { r.violations.push_back({std::move(path), std::move(msg)}); };
  for (std::size_t i = 0; i < t.turns.size(); ++i) {
    const auto& turn = t.turns[i];
    const Speaker expected = i % 2 == 0 ? Speaker::doctor : Speaker::patient;
    const std::string path = "turns[" + std::to_string(i) + "]";
    if (turn.role != expected) add(path + ".role", "roles must alternate starting with the doctor");
    if (turn.turn_index != static_cast<int>(i)) add(path + ".turn_index", "turn_index out of sequence");
    if (turn.round != static_cast<int>(i / 2) + 1) add(path + ".round", "round out of sequence");
  }
  // The forced final round is the only doctor turn past total_idx.
  if (t.doctor_turns() > t.total_idx + 1) add("turns", "more doctor turns than total_idx plus the final round");
  if (t.termination) {
    switch (*t.termination) {
      case Termination::ddx_emitted:
        if (!t.ddx_list || t.ddx_list->empty()) add("ddx_list", "ddx_emitted requires a DDx list");
        break;
      case Termination::round_limit:
        if (t.doctor_turns() != t.total_idx + 1) add("termination", "round_limit requires the forced final round");
        break;
      case Termination::user_ended:
        if (!t.ddx_list || t.ddx_list->empty()) add("ddx_list", "user_ended requires the submitted DDx list");
        break;
      case Termination::aborted:
        if (!t.abort_reason) add("abort_reason", "aborted sessions record a reason");
        break;
    }
    if (*t.termination != Termination::aborted && *t.termination != Termination::user_ended &&
        t.turns.size() % 2 != 0) {
      add("turns", "completed sessions end with the patient's reply");
    }
  }
  return r;
}

std::string render_history(const Transcript& t, std::optional<std::size_t> n_turns) {
  const std::size_t n = std::min(t.turns.size(), n_turns.value_or(t.turns.size()));
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    if (!out.empty()) out += "\n";
    out += t.turns[i].role == Speaker::doctor ? "Doctor: " : "Patient: ";
    out += t.turns[i].text;
  }
  return out;
}

// --- text analysis -----------------------------------------------------------

std::optional<std::vector<std::string>> extract_ddx(std::string_view doctor_text) {
  const auto pos = doctor_text.find(kDdxMarker);
  if (pos == std::string_view::npos) return std::nullopt;
  std::string_view rest = doctor_text.substr(pos + kDdxMarker.size());
  std::vector<std::string> out;
  std::string current;
  int depth = 0;
  auto flush = [&] {
    auto item = trim(current);
    while (!item.empty() && (item.front() == ':' || item.front() == '-')) item = trim(item.substr(1));
    while (!item.empty() && item.back() == '.') item.pop_back();
    if (!item.empty()) out.push_back(item);
    current.clear();
  };
  for (char c : rest) {
    if (c == '(') ++depth;
    if (c == ')' && depth > 0) --depth;
    if (depth == 0 && (c == ',' || c == ';' || c == '\n')) {
      flush();
    } else {
      current += c;
    }
  }
  flush();
  if (out.empty()) return std::nullopt;
  return out;
}

namespace {

const std::set<std::string>& abbreviations() {
  static std::mutex m;
  static std::map<std::filesystem::path, std::set<std::string>> cache;
  const auto path = asset_dir() / "segmentation" / "abbreviations.txt";
  std::lock_guard lock(m);
  auto it = cache.find(path);
  if (it == cache.end()) {
    std::set<std::string> words;
    for (auto& line : split_lines(read_text_file(path))) {
      auto w = trim(line);
      if (!w.empty() && w.front() != '#') words.insert(to_lower(w));
    }
    it = cache.emplace(path, std::move(words)).first;
  }
  return it->second;
}

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

}  // namespace

std::vector<Sentence> split_sentences(std::string_view text, int turn_index) {
  const auto& abbrev = abbreviations();
  std::vector<Sentence> out;
  auto emit = [&](std::size_t begin, std::size_t end) {
    auto s = trim(text.substr(begin, end - begin));
    if (!s.empty()) out.push_back({std::move(s), static_cast<int>(out.size()), turn_index});
  };
  std::size_t start = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (c == '\n') {
      emit(start, i);
      start = ++i;
      continue;
    }
    if (c != '.' && c != '!' && c != '?') {
      ++i;
      continue;
    }
    // Absorb runs like "?!" or "..." and closing quotes or brackets.
    std::size_t end = i + 1;
    while (end < text.size() && std::string_view(".!?\"')]").find(text[end]) != std::string_view::npos) ++end;
    if (end < text.size() && !is_space(text[end])) {
      i = end;  // "8.5", "e.g.x", "U.S.A"
      continue;
    }
    if (c == '.' && end == i + 1) {
      std::size_t w = i;
      while (w > start && !is_space(text[w - 1])) --w;
      if (abbrev.contains(to_lower(text.substr(w, i + 1 - w)))) {
        i = end;
        continue;
      }
    }
    emit(start, end);
    start = i = end;
  }
  emit(start, text.size());
  return out;
}

DialogueStats dialogue_stats(const Transcript& t) {
  DialogueStats s;
  s.n_turns = static_cast<int>(t.turns.size());
  s.n_rounds = t.doctor_turns();
  auto stats_for = [&](Speaker role) -> std::optional<RoleStats> {
    RoleStats r;
    for (auto& turn : t.turns) {
      if (turn.role != role) continue;
      ++r.utterances;
      r.sentences += static_cast<int>(turn.sentences.size());
      for (auto& sentence : turn.sentences) r.words += static_cast<int>(word_count(sentence.text));
    }
    if (r.utterances == 0) return std::nullopt;
    r.sentences_per_utterance = static_cast<double>(r.sentences) / r.utterances;
    r.words_per_sentence = r.sentences == 0 ? 0.0 : static_cast<double>(r.words) / r.sentences;
    return r;
  };
  s.doctor = stats_for(Speaker::doctor);
  s.patient = stats_for(Speaker::patient);
  return s;
}

json dialogue_stats_to_json(const DialogueStats& s) {
  auto role = [](const std::optional<RoleStats>& r) -> json {
    if (!r) return nullptr;
    return {{"utterances", r->utterances},
            {"sentences", r->sentences},
            {"words", r->words},
            {"sentences_per_utterance", r->sentences_per_utterance},
            {"words_per_sentence", r->words_per_sentence}};
  };
  return {{"n_turns", s.n_turns}, {"n_rounds", s.n_rounds}, {"doctor", role(s.doctor)}, {"patient", role(s.patient)}};
}

// --- session -------------------------------------------------------------------

ConsultationSession::ConsultationSession(std::string session_id, PatientProfile profile, PersonaSpec persona,
                                         WordSample words, SessionConfig cfg, Clock& clock)
    : profile_(std::move(profile)), clock_(&clock) {
  if (auto v = validate_persona(persona); !v.ok()) throw PreconditionError("invalid persona: " + v.violations[0].message);
  if (cfg.total_idx < 1) throw PreconditionError("total_idx must be at least 1");
  if (cfg.top_k_diagnosis < 1) throw PreconditionError("top_k_diagnosis must be at least 1");
  t_.session_id = std::move(session_id);
  t_.profile_id = profile_.profile_id;
  t_.persona = persona;
  t_.words = std::move(words);
  t_.total_idx = cfg.total_idx;
  t_.top_k_diagnosis = cfg.top_k_diagnosis;
  t_.seed = cfg.seed;
  t_.template_version = TemplateStore::standard().version();
  t_.started_ms = clock_->now_ms();
  ctx_ = make_prompt_context(profile_, persona, t_.words, cfg.total_idx, cfg.top_k_diagnosis);
  patient_system_ = build_patient_prompt(ctx_);
}

ConsultationSession::ConsultationSession(Transcript transcript, PatientProfile profile, Clock& clock)
    : t_(std::move(transcript)), profile_(std::move(profile)), clock_(&clock) {
  if (t_.profile_id != profile_.profile_id) {
    throw AlignmentError("transcript profile '" + t_.profile_id + "' does not match '" + profile_.profile_id + "'");
  }
  ctx_ = make_prompt_context(profile_, t_.persona, t_.words, t_.total_idx, t_.top_k_diagnosis);
  patient_system_ = build_patient_prompt(ctx_);
}

bool ConsultationSession::awaiting_doctor() const { return !finished() && t_.turns.size() % 2 == 0; }
bool ConsultationSession::awaiting_patient() const { return !finished() && t_.turns.size() % 2 == 1; }

int ConsultationSession::current_round() const { return static_cast<int>(t_.turns.size() / 2) + 1; }

std::string ConsultationSession::doctor_system() const {
  PromptContext ctx = ctx_;
  ctx.curr_idx = current_round();
  return build_doctor_prompt(ctx, final_round());
}

std::vector<ChatMessage> ConsultationSession::doctor_messages() const {
  std::vector<ChatMessage> out;
  for (auto& turn : t_.turns) out.push_back({turn.role == Speaker::doctor ? Role::assistant : Role::user, turn.text});
  return out;
}

Slots ConsultationSession::doctor_vars() const {
  return {{"agent", "doctor"},
          {"profile_id", t_.profile_id},
          {"gender", ctx_.gender},
          {"age", ctx_.age},
          {"arrival_transport", ctx_.arrival_transport},
          {"curr_idx", std::to_string(current_round())},
          {"total_idx", std::to_string(t_.total_idx)},
          {"final_round", final_round() ? "true" : "false"}};
}

std::string ConsultationSession::patient_system() const { return patient_system_; }

std::vector<ChatMessage> ConsultationSession::patient_messages() const {
  std::vector<ChatMessage> out;
  for (auto& turn : t_.turns) out.push_back({turn.role == Speaker::patient ? Role::assistant : Role::user, turn.text});
  return out;
}

Slots ConsultationSession::patient_vars() const {
  Slots vars = profile_slots(profile_);
  const int patient_turn = t_.patient_turns() + 1;
  vars["agent"] = "patient";
  vars["persona"] = persona_code(t_.persona);
  vars["personality"] = std::string(personality_name(t_.persona.personality));
  vars["language"] = std::string(cefr_name(t_.persona.language));
  vars["recall"] = std::string(recall_name(t_.persona.recall));
  vars["confusion"] = std::string(confusion_name(t_.persona.confusion));
  vars["patient_turn"] = std::to_string(patient_turn);
  vars["dazed_phase"] = std::string(dazed_phase_name(default_confusion_schedule().phase_at(patient_turn)));
  vars["round"] = std::to_string(current_round());
  return vars;
}

void ConsultationSession::append(Speaker role, std::string text) {
  Turn turn;
  turn.role = role;
  turn.turn_index = static_cast<int>(t_.turns.size());
  turn.round = static_cast<int>(t_.turns.size() / 2) + 1;
  turn.sentences = split_sentences(text, turn.turn_index);
  turn.text = std::move(text);
  if (role == Speaker::patient && t_.persona.confusion == Confusion::high) {
    turn.dazed_phase = default_confusion_schedule().phase_at(t_.patient_turns() + 1);
  }
  turn.timestamp_ms = clock_->now_ms();
  t_.turns.push_back(std::move(turn));
}

void ConsultationSession::add_doctor_turn(std::string text) {
  if (!awaiting_doctor()) throw PreconditionError("session " + t_.session_id + " is not awaiting a doctor turn");
  append(Speaker::doctor, std::move(text));
}

void ConsultationSession::add_patient_turn(std::string text) {
  if (!awaiting_patient()) throw PreconditionError("session " + t_.session_id + " is not awaiting a patient turn");
  const bool forced = current_round() > t_.total_idx;
  append(Speaker::patient, std::move(text));
  auto ddx = extract_ddx(t_.turns[t_.turns.size() - 2].text);
  if (forced) {
    t_.termination = Termination::round_limit;
    t_.ddx_list = std::move(ddx);
  } else if (ddx) {
    t_.termination = Termination::ddx_emitted;
    t_.ddx_list = std::move(ddx);
  }
  if (t_.termination) t_.ended_ms = clock_->now_ms();
}

void ConsultationSession::end_by_user(std::vector<std::string> ddx) {
  if (finished()) throw PreconditionError("session " + t_.session_id + " has already ended");
  for (auto& d : ddx) d = trim(d);
  std::erase_if(ddx, [](const std::string& d) { return d.empty(); });
  if (ddx.empty()) throw PreconditionError("a DDx submission needs at least one diagnosis");
  t_.termination = Termination::user_ended;
  t_.ddx_list = std::move(ddx);
  t_.ended_ms = clock_->now_ms();
}

void ConsultationSession::abort(std::string reason) {
  if (finished()) return;
  t_.termination = Termination::aborted;
  t_.abort_reason = std::move(reason);
  t_.ended_ms = clock_->now_ms();
}

Transcript run_consultation(const PatientProfile& profile, const PersonaSpec& persona, const WordSample& words,
                            ChatClient& doctor, ChatClient& patient, const SessionConfig& cfg, Clock& clock,
                            const std::string& session_id) {
  ConsultationSession session(session_id, profile, persona, words, cfg, clock);
  try {
    while (!session.finished()) {
      if (session.awaiting_doctor()) {
        session.add_doctor_turn(doctor.chat(session.doctor_system(), session.doctor_messages(), session.doctor_vars()));
      } else {
        session.add_patient_turn(
            patient.chat(session.patient_system(), session.patient_messages(), session.patient_vars()));
      }
    }
  } catch (const TransientError& e) {
    session.abort(std::string("backend unavailable: ") + e.what());
  } catch (const RemoteError& e) {
    session.abort(std::string("backend error: ") + e.what());
  }
  return session.transcript();
}

}  // namespace medsim
