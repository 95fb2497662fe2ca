#include "medsim/run.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <set>
#include <tuple>

#include "medsim/dialeval.hpp"
#include "medsim/error.hpp"
#include "medsim/facteval.hpp"
#include "medsim/fideval.hpp"
#include "medsim/support.hpp"

namespace medsim {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

fs::path require_existing(const fs::path& base, const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_string()) throw ConfigError(std::string("config needs a '") + key + "' path");
  auto p = resolve(base, it->get<std::string>());
  if (!fs::exists(p)) throw ConfigError(std::string("'") + key + "' does not exist: " + p.string());
  return p;
}

std::optional<fs::path> optional_existing(const fs::path& base, const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return require_existing(base, j, key);
}

void apply_assets(const RunConfig& cfg) {
  if (cfg.assets) set_asset_dir(*cfg.assets);
}

std::string rel_path(const fs::path& p, const fs::path& root) { return fs::relative(p, root).generic_string(); }

std::map<std::string, PatientProfile> profiles_by_id(const fs::path& path) {
  std::map<std::string, PatientProfile> out;
  for (auto& p : load_profiles(path)) {
    const auto id = p.profile_id;
    if (!out.emplace(id, std::move(p)).second) throw ConfigError("duplicate profile id '" + id + "'");
  }
  return out;
}

std::unique_ptr<Clock> session_clock(const RunConfig& cfg) {
  if (cfg.fixed_clock) return std::make_unique<FixedClock>(0, 1000);
  return std::make_unique<SystemClock>();
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError(path.string(), e.what());
  }
}

void write_json(const fs::path& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

// Completed transcripts on disk, ordered by file name.
std::vector<fs::path> transcript_files(const RunLayout& layout) {
  std::vector<fs::path> out;
  if (!fs::exists(layout.transcripts())) return out;
  for (auto& e : fs::directory_iterator(layout.transcripts())) {
    if (e.is_regular_file() && e.path().extension() == ".transcript") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

bool evaluable(const Transcript& t) { return t.complete() && *t.termination != Termination::aborted; }

}  // namespace

RunConfig run_config_from_json(const json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c;
  c.base_dir = base_dir;
  c.source = j;
  try {
    const auto& backends = j.at("backends");
    c.patient = backend_from_json(backends.at("patient"), base_dir, kAgentTemperature);
    c.doctor = backend_from_json(backends.at("doctor"), base_dir, kAgentTemperature);
    c.judge = backend_from_json(backends.at("judge"), base_dir, kJudgeTemperature);
  } catch (const json::out_of_range& e) {
    throw ConfigError(std::string("config backends: ") + e.what());
  }
  c.profiles = require_existing(base_dir, j, "profiles");
  c.lexicon_dir = require_existing(base_dir, j, "lexicon_dir");
  if (!j.contains("out") || !j.at("out").is_string()) throw ConfigError("config needs an 'out' directory");
  c.out = resolve(base_dir, j.at("out").get<std::string>());
  c.seed = j.value("seed", kDefaultSeed);
  c.total_idx = j.value("total_idx", kDefaultTotalIdx);
  c.top_k_diagnosis = j.value("top_k_diagnosis", kDefaultTopK);
  c.concurrency = j.value("concurrency", 4);
  c.n_bootstrap = j.value("n_bootstrap", kDefaultBootstrap);
  c.reveal_persona = j.value("reveal_persona", true);
  if (c.total_idx < 1) throw ConfigError("total_idx must be at least 1");
  if (c.top_k_diagnosis < 1) throw ConfigError("top_k_diagnosis must be at least 1");
  if (c.concurrency < 1) throw ConfigError("concurrency must be at least 1");

  const auto personas = j.value("personas", json("random"));
  if (personas.is_string() && personas.get<std::string>() == "random") {
    c.assignment = Assignment::random;
  } else if (personas.is_array() && !personas.empty()) {
    for (auto& p : personas) {
      PersonaSpec spec;
      try {
        spec = persona_from_json(p);
      } catch (const ParseError& e) {
        throw ConfigError(std::string("personas: ") + e.what());
      }
      if (auto v = validate_persona(spec); !v.ok()) {
        throw ConfigError("persona " + persona_code(spec) + " is not allowed: " + v.violations[0].message);
      }
      c.personas.push_back(spec);
    }
    const auto mode = j.value("assignment", std::string("cycle"));
    if (mode == "cycle") c.assignment = Assignment::cycle;
    else if (mode == "cross") c.assignment = Assignment::cross;
    else throw ConfigError("assignment must be 'cycle' or 'cross'");
  } else {
    throw ConfigError("personas must be \"random\" or a non-empty list");
  }

  const auto clock = j.value("clock", std::string("system"));
  if (clock != "system" && clock != "fixed") throw ConfigError("clock must be 'system' or 'fixed'");
  c.fixed_clock = clock == "fixed";
  c.assets = optional_existing(base_dir, j, "assets");
  if (j.contains("judge_cache") && j.at("judge_cache").is_string()) {
    c.judge_cache = resolve(base_dir, j.at("judge_cache").get<std::string>());
  }
  c.ratings = optional_existing(base_dir, j, "ratings");
  c.gold = optional_existing(base_dir, j, "gold");
  c.raw_records = optional_existing(base_dir, j, "raw_records");
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return run_config_from_json(j, fs::absolute(path).parent_path());
}

std::string session_id_for(const std::string& profile_id, const PersonaSpec& persona) {
  return profile_id + "__" + persona_code(persona);
}

std::vector<SessionPlan> plan_sessions(const std::vector<PatientProfile>& profiles, const RunConfig& cfg) {
  std::vector<SessionPlan> out;
  auto add = [&](const PatientProfile& p, const PersonaSpec& s) {
    out.push_back({session_id_for(p.profile_id, s), p.profile_id, s});
  };
  switch (cfg.assignment) {
    case Assignment::cycle:
      for (std::size_t i = 0; i < profiles.size(); ++i) add(profiles[i], cfg.personas[i % cfg.personas.size()]);
      break;
    case Assignment::cross:
      for (auto& p : profiles) {
        for (auto& s : cfg.personas) add(p, s);
      }
      break;
    case Assignment::random: {
      const auto all = enumerate_personas();
      Rng rng(cfg.seed);
      std::vector<PersonaSpec> deck;
      for (auto& p : profiles) {
        if (deck.empty()) {
          deck = all;
          for (std::size_t i = deck.size() - 1; i > 0; --i) std::swap(deck[i], deck[rng.below(i + 1)]);
          std::reverse(deck.begin(), deck.end());
        }
        add(p, deck.back());
        deck.pop_back();
      }
      break;
    }
  }
  return out;
}

WordSample session_words(const std::vector<CefrLexicon>& lexicons, const PersonaSpec& persona, std::uint64_t seed,
                         const std::string& session_id) {
  return sample_cefr_words(lexicons, persona.language, splitmix64(seed ^ stable_hash(session_id)));
}

Backends make_backends(const RunConfig& cfg) {
  return {make_client(cfg.patient), make_client(cfg.doctor), make_client(cfg.judge)};
}

// --- simulate ----------------------------------------------------------------------

SimulateResult cmd_simulate(const RunConfig& cfg) { return cmd_simulate(cfg, make_backends(cfg)); }

SimulateResult cmd_simulate(const RunConfig& cfg, const Backends& backends) {
  apply_assets(cfg);
  // Everything that can fail on configuration is checked before any session.
  const auto profiles = load_profiles(cfg.profiles);
  for (auto& p : profiles) {
    if (auto v = validate_profile(p); !v.ok()) {
      throw ConfigError("profile '" + p.profile_id + "' is invalid at " + v.violations[0].path + ": " +
                        v.violations[0].message);
    }
  }
  std::map<std::string, const PatientProfile*> by_id;
  for (auto& p : profiles) by_id[p.profile_id] = &p;
  const auto lexicons = load_lexicons(cfg.lexicon_dir);
  const auto plans = plan_sessions(profiles, cfg);
  TemplateStore::standard();
  PersonaTables::standard();

  const RunLayout layout{cfg.out};
  fs::create_directories(layout.transcripts());
  SimulateResult result;
  result.planned = static_cast<int>(plans.size());

  std::vector<std::size_t> todo;
  std::vector<std::optional<Termination>> outcome(plans.size());
  for (std::size_t i = 0; i < plans.size(); ++i) {
    const auto path = transcript_path(layout.transcripts(), plans[i].session_id);
    if (fs::exists(path)) {
      try {
        auto t = load_transcript(path);
        if (evaluable(t)) {
          outcome[i] = t.termination;
          ++result.skipped;
          continue;
        }
      } catch (const ParseError&) {
        // Unreadable leftovers are simulated again.
      }
    }
    todo.push_back(i);
  }

  std::mutex m;
  std::map<std::string, std::string> failures;
  parallel_for(todo.size(), static_cast<std::size_t>(cfg.concurrency), [&](std::size_t n) {
    const auto& plan = plans[todo[n]];
    auto clock = session_clock(cfg);
    const SessionConfig scfg{cfg.total_idx, cfg.top_k_diagnosis, cfg.seed};
    try {
      auto t = run_consultation(*by_id.at(plan.profile_id), plan.persona,
                                session_words(lexicons, plan.persona, cfg.seed, plan.session_id), *backends.doctor,
                                *backends.patient, scfg, *clock, plan.session_id);
      save_transcript(transcript_path(layout.transcripts(), plan.session_id), t);
      std::lock_guard lock(m);
      outcome[todo[n]] = t.termination;
    } catch (const Error& e) {
      std::lock_guard lock(m);
      failures[plan.session_id] = e.what();
    }
  });

  json sessions = json::array();
  for (std::size_t i = 0; i < plans.size(); ++i) {
    const auto& plan = plans[i];
    json entry{{"session_id", plan.session_id},
               {"profile_id", plan.profile_id},
               {"persona", persona_code(plan.persona)},
               {"transcript", rel_path(transcript_path(layout.transcripts(), plan.session_id), layout.root)}};
    if (outcome[i]) {
      entry["termination"] = termination_name(*outcome[i]);
      if (*outcome[i] == Termination::aborted) ++result.aborted;
      result.transcripts.push_back(transcript_path(layout.transcripts(), plan.session_id));
    } else {
      entry["termination"] = nullptr;
      entry["error"] = failures.count(plan.session_id) ? failures[plan.session_id] : "not run";
      ++result.aborted;
    }
    sessions.push_back(std::move(entry));
  }
  result.completed = static_cast<int>(todo.size()) - static_cast<int>(failures.size());
  write_json(layout.manifest(), {{"seed", cfg.seed},
                                 {"template_version", TemplateStore::standard().version()},
                                 {"persona_tables_version", PersonaTables::standard().version()},
                                 {"total_idx", cfg.total_idx},
                                 {"top_k_diagnosis", cfg.top_k_diagnosis},
                                 {"config", cfg.source},
                                 {"sessions", sessions}});
  return result;
}

// --- evaluate ----------------------------------------------------------------------

EvaluateResult cmd_evaluate(const RunConfig& cfg) { return cmd_evaluate(cfg, make_backends(cfg)); }

EvaluateResult cmd_evaluate(const RunConfig& cfg, const Backends& backends) {
  apply_assets(cfg);
  const RunLayout layout{cfg.out};
  const auto files = transcript_files(layout);
  std::vector<Transcript> transcripts;
  for (auto& f : files) {
    auto t = load_transcript(f);
    if (evaluable(t)) transcripts.push_back(std::move(t));
  }
  if (transcripts.empty()) throw EmptyInputError("no completed transcripts under " + layout.transcripts().string());
  const auto profiles = profiles_by_id(cfg.profiles);
  for (auto& t : transcripts) {
    if (!profiles.contains(t.profile_id)) throw AlignmentError("transcript " + t.session_id + " names unknown profile '" + t.profile_id + "'");
  }
  fs::create_directories(layout.verdicts());
  fs::create_directories(layout.evaluations());

  JudgeClient judge(backends.judge, cfg.judge_cache.value_or(layout.root / "cache"));
  const auto& rubric = FidelityRubric::standard();
  const std::size_t calls_before = backends.judge->calls();
  std::atomic<int> failed{0};

  parallel_for(transcripts.size(), static_cast<std::size_t>(cfg.concurrency), [&](std::size_t i) {
    const auto& t = transcripts[i];
    const auto& profile = profiles.at(t.profile_id);
    json record{{"session_id", t.session_id}, {"profile_id", t.profile_id}, {"persona", persona_code(t.persona)}};
    json errors = json::object();
    auto step = [&](const char* name, auto&& fn) {
      try {
        fn();
      } catch (const Error& e) {
        errors[name] = e.what();
      }
    };
    step("factuality", [&] {
      save_verdicts(layout.verdicts() / (t.session_id + ".jsonl"), evaluate_factuality(t, profile, judge));
      record["verdicts"] = rel_path(layout.verdicts() / (t.session_id + ".jsonl"), layout.root);
    });
    step("coverage", [&] {
      auto derived = extract_profile(t, judge);
      json scores = json::object();
      for (auto& [key, s] : score_overlap(profile, derived, judge)) {
        scores[std::string(item_name(key))] = {{"score", s.score}, {"reason", s.reason}};
      }
      record["derived"] = derived_to_json(derived);
      record["scores"] = scores;
    });
    step("fidelity", [&] {
      json scores = json::array();
      for (auto& s : judge_transcript_fidelity(t, rubric, judge)) scores.push_back(fidelity_score_to_json(s));
      record["fidelity"] = scores;
    });
    step("ddx", [&] {
      if (!t.ddx_list) return;
      record["ddx"] = {{"predicted", *t.ddx_list},
                       {"truth", profile.diagnosis},
                       {"correct", judge_ddx(*t.ddx_list, profile.diagnosis, judge)}};
    });
    record["errors"] = errors;
    if (!errors.empty()) ++failed;
    write_json(layout.evaluations() / (t.session_id + ".json"), record);
  });

  EvaluateResult r;
  r.report = build_report(cfg);
  write_json(layout.report(), r.report);
  r.evaluated = static_cast<int>(transcripts.size());
  r.failed = failed.load();
  r.judge_calls = backends.judge->calls() - calls_before;
  return r;
}

// --- report ------------------------------------------------------------------------

json build_report(const RunConfig& cfg) {
  apply_assets(cfg);
  const RunLayout layout{cfg.out};
  const auto profiles = profiles_by_id(cfg.profiles);
  std::vector<SentenceVerdict> verdicts;
  std::vector<PatientProfile> originals;
  std::vector<DerivedProfile> deriveds;
  std::vector<std::map<ItemKey, int>> scores;
  std::vector<FidelityScore> fidelity;
  std::vector<DdxCase> ddx_cases;
  int ddx_correct = 0;
  std::map<std::string, bool> ddx_verdicts;
  std::map<std::string, json> failures{{"factuality", json::array()},
                                       {"coverage", json::array()},
                                       {"fidelity", json::array()},
                                       {"ddx", json::array()}};
  std::map<std::string, int> evaluated{{"factuality", 0}, {"coverage", 0}, {"fidelity", 0}, {"ddx", 0}};
  json sessions = json::array();
  json fidelity_checks = json::array();
  double doc_spu = 0, doc_wps = 0, pat_spu = 0, pat_wps = 0, turns = 0;
  int n_doc = 0, n_pat = 0, n_transcripts = 0;

  for (auto& file : transcript_files(layout)) {
    const auto t = load_transcript(file);
    ++n_transcripts;
    json entry{{"session_id", t.session_id},
               {"profile_id", t.profile_id},
               {"persona", persona_code(t.persona)},
               {"termination", t.termination ? json(termination_name(*t.termination)) : json(nullptr)},
               {"transcript", rel_path(file, layout.root)}};
    const auto eval_path = layout.evaluations() / (t.session_id + ".json");
    if (!evaluable(t) || !fs::exists(eval_path)) {
      entry["evaluation"] = nullptr;
      sessions.push_back(std::move(entry));
      continue;
    }
    entry["evaluation"] = rel_path(eval_path, layout.root);
    const json record = read_json(eval_path);
    const auto& errors = record.at("errors");
    for (auto& [name, msg] : errors.items()) failures[name].push_back({{"session_id", t.session_id}, {"error", msg}});

    const auto stats = dialogue_stats(t);
    turns += stats.n_turns;
    if (stats.doctor) {
      ++n_doc;
      doc_spu += stats.doctor->sentences_per_utterance;
      doc_wps += stats.doctor->words_per_sentence;
    }
    if (stats.patient) {
      ++n_pat;
      pat_spu += stats.patient->sentences_per_utterance;
      pat_wps += stats.patient->words_per_sentence;
    }

    if (!errors.contains("factuality")) {
      ++evaluated["factuality"];
      auto vs = load_verdicts(layout.root / record.at("verdicts").get<std::string>());
      verdicts.insert(verdicts.end(), vs.begin(), vs.end());
      entry["verdicts"] = record.at("verdicts");
    }
    if (!errors.contains("coverage")) {
      ++evaluated["coverage"];
      originals.push_back(profiles.at(t.profile_id));
      deriveds.push_back(derived_from_json(record.at("derived")));
      std::map<ItemKey, int> s;
      for (auto& [name, v] : record.at("scores").items()) s[*parse_item(name)] = v.at("score").get<int>();
      scores.push_back(std::move(s));
    }
    if (!errors.contains("fidelity")) {
      ++evaluated["fidelity"];
      int n = 0;
      for (auto& s : record.at("fidelity")) {
        fidelity.push_back(fidelity_score_from_json(s));
        ++n;
      }
      const auto expected = static_cast<int>(applicability(t.persona).size());
      if (n != expected) {
        fidelity_checks.push_back({{"session_id", t.session_id}, {"scored", n}, {"applicable", expected}});
      }
    }
    if (!errors.contains("ddx") && record.contains("ddx")) {
      ++evaluated["ddx"];
      const bool ok = record.at("ddx").at("correct").get<bool>();
      ddx_verdicts[t.session_id] = ok;
      ddx_correct += ok;
    }
    sessions.push_back(std::move(entry));
  }

  json report;
  report["run"] = {{"seed", cfg.seed},
                   {"template_version", TemplateStore::standard().version()},
                   {"rubric_version", FidelityRubric::standard().version()},
                   {"judge_model", cfg.judge.model},
                   {"n_transcripts", n_transcripts},
                   {"n_bootstrap", cfg.n_bootstrap}};

  const auto fact = summarize_factuality(verdicts);
  report["factuality"] = factuality_to_json(fact);
  json checks;
  checks["factuality"] = json::array();
  for (auto& v : validate_summary(fact).violations) checks["factuality"].push_back(v.path + ": " + v.message);

  const auto coverage = compute_coverage(originals, deriveds, scores);
  report["coverage"] = coverage_to_json(coverage);
  checks["coverage"] = json::array();
  for (auto& v : validate_coverage(coverage).violations) checks["coverage"].push_back(v.path + ": " + v.message);
  checks["fidelity"] = fidelity_checks;

  report["fidelity"] = {{"n_scores", fidelity.size()}, {"criteria", fidelity_summary_to_json(summarize_fidelity(fidelity))}};
  if (ddx_verdicts.empty()) {
    report["ddx"] = nullptr;
  } else {
    report["ddx"] = {{"n", ddx_verdicts.size()},
                     {"n_correct", ddx_correct},
                     {"rate", static_cast<double>(ddx_correct) / static_cast<double>(ddx_verdicts.size())},
                     {"verdicts", ddx_verdicts}};
  }
  auto mean = [](double sum, int n) { return n == 0 ? json(nullptr) : json(sum / n); };
  report["dialogue_stats"] = {{"mean_turns", mean(turns, n_doc)},
                              {"doctor", {{"sentences_per_utterance", mean(doc_spu, n_doc)},
                                          {"words_per_sentence", mean(doc_wps, n_doc)}}},
                              {"patient", {{"sentences_per_utterance", mean(pat_spu, n_pat)},
                                           {"words_per_sentence", mean(pat_wps, n_pat)}}}};

  std::optional<fs::path> ratings = cfg.ratings;
  if (!ratings && fs::exists(layout.annotations() / "ratings.csv")) ratings = layout.annotations() / "ratings.csv";
  if (ratings) {
    const auto m = RatingMatrix::load_csv(*ratings);
    json agreement;
    for (auto method : {AcMethod::ac1, AcMethod::ac2}) {
      try {
        agreement[std::string(ac_method_name(method))] = agreement_to_json(gwet_ac(m, method, cfg.n_bootstrap, cfg.seed));
      } catch (const InsufficientDataError& e) {
        agreement[std::string(ac_method_name(method))] = {{"error", e.what()}};
      }
    }
    json pairs = json::array();
    try {
      for (auto& r : pairwise_agreement(m, AcMethod::ac1, cfg.n_bootstrap, cfg.seed)) pairs.push_back(agreement_to_json(r));
    } catch (const InsufficientDataError& e) {
      pairs = {{{"error", e.what()}}};
    }
    agreement["pairwise_AC1"] = pairs;
    report["agreement"] = agreement;
  } else {
    report["agreement"] = nullptr;
  }

  if (cfg.gold) {
    const auto gold = load_gold(*cfg.gold);
    std::set<std::tuple<std::string, int, int>> keys;
    for (auto& g : gold) keys.insert({g.session_id, g.turn_index, g.sentence_index});
    std::vector<SentenceVerdict> pred;
    for (auto& v : verdicts) {
      if (keys.contains({v.session_id, v.turn_index, v.sentence_index})) pred.push_back(v);
    }
    report["classifier_validation"] = classifier_validation_to_json(classifier_validation(gold, pred));
  } else {
    report["classifier_validation"] = nullptr;
  }

  json completeness = json::object();
  for (auto& [name, n] : evaluated) completeness[name] = {{"evaluated", n}, {"failed", failures[name]}};
  report["completeness"] = completeness;
  report["checks"] = checks;
  report["sessions"] = sessions;
  return report;
}

json cmd_report(const RunConfig& cfg) {
  auto report = build_report(cfg);
  write_json(RunLayout{cfg.out}.report(), report);
  return report;
}

json cmd_agree(const fs::path& ratings_csv, int categories, int n_bootstrap, std::uint64_t seed) {
  const auto m = RatingMatrix::load_csv(ratings_csv, categories);
  json out;
  for (auto method : {AcMethod::ac1, AcMethod::ac2}) {
    out[std::string(ac_method_name(method))] = agreement_to_json(gwet_ac(m, method, n_bootstrap, seed));
  }
  json pairs = json::array();
  for (auto& r : pairwise_agreement(m, AcMethod::ac1, n_bootstrap, seed)) pairs.push_back(agreement_to_json(r));
  out["pairwise_AC1"] = pairs;
  return out;
}

// --- ingest ------------------------------------------------------------------------

IngestSummary cmd_ingest(const RunConfig& cfg) {
  auto client = make_client(cfg.judge);
  JudgeClient judge(client, cfg.judge_cache.value_or(cfg.out / "cache"));
  return cmd_ingest(cfg, judge);
}

IngestSummary cmd_ingest(const RunConfig& cfg, JudgeClient& judge) {
  apply_assets(cfg);
  if (!cfg.raw_records) throw ConfigError("ingest needs a 'raw_records' path in the config");
  const auto records = load_raw_records(*cfg.raw_records);
  IngestSummary s;
  std::vector<PatientProfile> accepted;
  std::string rejections;
  for (auto& r : records) {
    ++s.records;
    json rejection{{"record_id", r.record_id}};
    try {
      auto result = ingest_note(r, judge);
      if (result.profile) {
        accepted.push_back(std::move(*result.profile));
        ++s.accepted;
        continue;
      }
      rejection["reason"] = result.rejection;
      rejection["alignment_score"] = result.alignment_score;
    } catch (const IngestError& e) {
      rejection["reason"] = std::string("ingestion failed: ") + e.what();
    } catch (const JudgeFormatError& e) {
      rejection["reason"] = std::string("judge answer unusable: ") + e.what();
    }
    ++s.rejected;
    rejections += rejection.dump() + "\n";
  }
  fs::create_directories(cfg.out);
  save_profiles(cfg.out / "profiles.jsonl", accepted);
  write_text_file(cfg.out / "ingest_rejections.jsonl", rejections);
  return s;
}

}  // namespace medsim
