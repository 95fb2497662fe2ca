#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "medsim/run.hpp"

namespace medsim {

struct HttpResponse {
  int status = 200;
  nlohmann::json body;
};

// Backend for the practice and annotation front ends.
//
//   POST /sessions                         start a consultation with a human doctor
//   GET  /sessions/{id}                    transcript so far
//   POST /sessions/{id}/turns              doctor question, returns the patient reply
//   POST /sessions/{id}/ddx                end the session with 1..3 diagnoses
//   POST /sessions/{id}/survey             six criteria rated 1..4, after the DDx
//   GET  /annotations                      evaluated sessions with unsupported sentences
//   GET  /annotations/{id}                 full profile and flagged sentences
//   POST /annotations/{id}/ratings         plausibility ratings for flagged sentences
//   GET  /annotations/{id}/agreement       pairwise AC1 between raters
//
// State lives under cfg.out: sessions/ for live consultations and surveys,
// annotations/ratings.csv for ratings. Evaluated sessions are read from the
// transcripts/ and verdicts/ directories of the same run.
class Service {
 public:
  Service(RunConfig cfg, std::shared_ptr<ChatClient> patient);

  // Routes one request. Never throws; errors become 4xx/5xx bodies with an
  // "error" field.
  HttpResponse handle(const std::string& method, const std::string& path, const std::string& body);

  // Blocks serving HTTP until stop() is called.
  bool listen(const std::string& host, int port);
  // Binds to an ephemeral port and returns it; serve with listen_after_bind().
  int bind_any_port(const std::string& host);
  bool listen_after_bind();
  void stop();

 private:
  struct Live {
    std::mutex mutex;
    std::unique_ptr<Clock> clock;
    std::unique_ptr<ConsultationSession> session;
  };

  HttpResponse create_session(const nlohmann::json& req);
  HttpResponse get_session(const std::string& id);
  HttpResponse add_turn(const std::string& id, const nlohmann::json& req);
  HttpResponse submit_ddx(const std::string& id, const nlohmann::json& req);
  HttpResponse submit_survey(const std::string& id, const nlohmann::json& req);
  HttpResponse list_annotations();
  HttpResponse get_annotation(const std::string& id);
  HttpResponse add_ratings(const std::string& id, const nlohmann::json& req);
  HttpResponse agreement(const std::string& id);

  Live& live(const std::string& id);
  void persist(const Live& s) const;
  std::unique_ptr<Clock> make_clock() const;
  void load_ratings();
  void save_ratings() const;

  RunConfig cfg_;
  RunLayout layout_;
  std::shared_ptr<ChatClient> patient_;
  std::map<std::string, PatientProfile> profiles_;
  std::vector<CefrLexicon> lexicons_;
  std::mutex mutex_;
  std::map<std::string, std::unique_ptr<Live>> sessions_;
  int next_id_ = 1;
  std::mutex ratings_mutex_;
  // (item id, rater id) -> rating, item ids as "{session}:{turn}:{sentence}"
  std::map<std::pair<std::string, std::string>, int> ratings_;
  struct Server;
  std::shared_ptr<Server> server_;
};

nlohmann::json transcript_to_json(const Transcript& t);

}  // namespace medsim
