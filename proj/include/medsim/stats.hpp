#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "medsim/facteval.hpp"
#include "medsim/gateway.hpp"

namespace medsim {

// Items x raters grid of ordinal ratings in 1..categories; missing allowed.
struct RatingMatrix {
  int categories = 4;
  std::vector<std::string> item_ids;
  std::vector<std::string> rater_ids;
  std::vector<std::vector<std::optional<int>>> ratings;  // [item][rater]

  struct Entry {
    std::string item_id;
    std::string rater_id;
    int rating = 0;
  };

  // Items and raters keep first-appearance order. Duplicate (item, rater)
  // pairs and out-of-range ratings raise ParseError.
  static RatingMatrix from_entries(const std::vector<Entry>& entries, int categories = 4);
  // Comma-separated item_id,rater_id,rating lines with an optional header.
  static RatingMatrix load_csv(const std::filesystem::path& path, int categories = 4);

  std::size_t n_items() const { return item_ids.size(); }
  std::size_t n_raters() const { return rater_ids.size(); }
  // The two named columns, keeping only items both raters scored.
  RatingMatrix pair(std::size_t a, std::size_t b) const;
};

enum class AcMethod : std::uint8_t { ac1, ac2 };

std::string_view ac_method_name(AcMethod m);

// Agreement weight between categories i and j (1-based): identity for AC1,
// linear 1 - |i-j|/(Q-1) for AC2.
double agreement_weight(AcMethod m, int i, int j, int categories);

// Gwet's coefficient with chance agreement from category prevalence. Items
// with fewer than two ratings do not count toward observed agreement. Fewer
// than two such items raise InsufficientDataError.
double gwet_coefficient(const RatingMatrix& m, AcMethod method);

struct AgreementResult {
  AcMethod method = AcMethod::ac1;
  double coefficient = 0.0;
  std::optional<double> ci_low;
  std::optional<double> ci_high;
  int n_bootstrap = 0;  // requested resamples
  int n_valid = 0;      // resamples that produced a coefficient
  int n_items = 0;
  int n_raters = 0;
  std::string rater_a;  // pairwise results only
  std::string rater_b;
};

inline constexpr int kDefaultBootstrap = 1000;

// Percentile CI from resampling items with replacement. Iteration b draws from
// its own generator seeded with splitmix64(seed + b), so results do not
// depend on `workers`.
AgreementResult gwet_ac(const RatingMatrix& m, AcMethod method, int n_bootstrap = kDefaultBootstrap,
                        std::uint64_t seed = kDefaultSeed, std::size_t workers = 1);
std::vector<AgreementResult> pairwise_agreement(const RatingMatrix& m, AcMethod method,
                                                int n_bootstrap = kDefaultBootstrap,
                                                std::uint64_t seed = kDefaultSeed);
nlohmann::json agreement_to_json(const AgreementResult& r);

// Linear-interpolation sample quantile (R type 7) of unsorted values.
double quantile(std::vector<double> values, double p);

// --- DDx accuracy ------------------------------------------------------------------

struct DdxCase {
  std::string case_id;
  std::vector<std::string> ddx;
  std::string truth;
};

struct DdxAccuracy {
  int n = 0;
  int n_correct = 0;
  double rate = 0.0;
  std::map<std::string, bool> verdicts;  // case_id -> judged correct
};

bool judge_ddx(const std::vector<std::string>& ddx, const std::string& truth, JudgeClient& judge);
DdxAccuracy ddx_accuracy(const std::vector<DdxCase>& cases, JudgeClient& judge);
nlohmann::json ddx_accuracy_to_json(const DdxAccuracy& a);

// --- classifier validation ---------------------------------------------------------

struct GoldSentence {
  std::string session_id;
  int turn_index = 0;
  int sentence_index = 0;
  bool information = false;
  std::set<ItemKey> links;
  std::map<ItemKey, NliLabel> nli;
  bool unsupported = false;
};

GoldSentence gold_from_json(const nlohmann::json& j);
std::vector<GoldSentence> load_gold(const std::filesystem::path& path);

// Metrics with an empty denominator are absent. F1 is absent when P or R is,
// and 0 when both are 0.
struct ClassifierValidation {
  int n_sentences = 0;
  std::optional<double> accuracy;  // information vs. not
  std::optional<double> recall;    // of gold information sentences
  std::optional<double> p_item;
  std::optional<double> r_item;
  std::optional<double> f1_item;
  std::optional<double> acc_val;
  std::optional<double> p_unsupp;
  std::optional<double> r_unsupp;
  std::optional<double> f1_unsupp;
};

std::optional<double> f1_score(std::optional<double> p, std::optional<double> r);

// Linkage and unsupported metrics pool counts over all sentences. Acc_val
// compares labels on items both sides linked and labelled.
ClassifierValidation classifier_validation(const std::vector<GoldSentence>& gold,
                                           const std::vector<SentenceVerdict>& pred);
nlohmann::json classifier_validation_to_json(const ClassifierValidation& v);

}  // namespace medsim
