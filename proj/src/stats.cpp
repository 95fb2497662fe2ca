#include "medsim/stats.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "medsim/error.hpp"
#include "medsim/support.hpp"

namespace medsim {

using nlohmann::json;

RatingMatrix RatingMatrix::from_entries(const std::vector<Entry>& entries, int categories) {
  if (categories < 2) throw PreconditionError("a rating scale needs at least two categories");
  RatingMatrix m;
  m.categories = categories;
  std::map<std::string, std::size_t> items;
  std::map<std::string, std::size_t> raters;
  for (auto& e : entries) {
    if (!items.contains(e.item_id)) {
      items.emplace(e.item_id, m.item_ids.size());
      m.item_ids.push_back(e.item_id);
    }
    if (!raters.contains(e.rater_id)) {
      raters.emplace(e.rater_id, m.rater_ids.size());
      m.rater_ids.push_back(e.rater_id);
    }
  }
  m.ratings.assign(m.item_ids.size(), std::vector<std::optional<int>>(m.rater_ids.size()));
  for (auto& e : entries) {
    if (e.rating < 1 || e.rating > categories) {
      throw ParseError("ratings", "rating " + std::to_string(e.rating) + " for item '" + e.item_id +
                                      "' outside 1.." + std::to_string(categories));
    }
    auto& cell = m.ratings[items[e.item_id]][raters[e.rater_id]];
    if (cell) throw ParseError("ratings", "rater '" + e.rater_id + "' rated item '" + e.item_id + "' twice");
    cell = e.rating;
  }
  return m;
}

RatingMatrix RatingMatrix::load_csv(const std::filesystem::path& path, int categories) {
  std::vector<Entry> entries;
  const auto lines = split_lines(read_text_file(path));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto line = trim(lines[i]);
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(i + 1);
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      auto comma = line.find(',', start);
      cells.push_back(trim(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (cells.size() != 3) throw ParseError(where, "expected item_id,rater_id,rating");
    if (entries.empty() && i == 0 && to_lower(cells[2]) == "rating") continue;
    char* end = nullptr;
    const long rating = std::strtol(cells[2].c_str(), &end, 10);
    if (cells[2].empty() || *end != '\0') throw ParseError(where, "rating '" + cells[2] + "' is not an integer");
    entries.push_back({cells[0], cells[1], static_cast<int>(rating)});
  }
  try {
    return from_entries(entries, categories);
  } catch (const ParseError& e) {
    throw ParseError(path.string(), e.what());
  }
}

RatingMatrix RatingMatrix::pair(std::size_t a, std::size_t b) const {
  RatingMatrix m;
  m.categories = categories;
  m.rater_ids = {rater_ids.at(a), rater_ids.at(b)};
  for (std::size_t i = 0; i < n_items(); ++i) {
    if (ratings[i][a] && ratings[i][b]) {
      m.item_ids.push_back(item_ids[i]);
      m.ratings.push_back({ratings[i][a], ratings[i][b]});
    }
  }
  return m;
}

std::string_view ac_method_name(AcMethod m) { return m == AcMethod::ac1 ? "AC1" : "AC2"; }

double agreement_weight(AcMethod m, int i, int j, int categories) {
  if (m == AcMethod::ac1) return i == j ? 1.0 : 0.0;
  return 1.0 - static_cast<double>(std::abs(i - j)) / (categories - 1);
}

namespace {

// Per-item category counts r_ik for the selected rows.
struct Counts {
  int q = 0;
  std::vector<std::vector<double>> r;  // [item][k]
};

Counts category_counts(const RatingMatrix& m, const std::vector<std::size_t>& rows) {
  Counts c;
  c.q = m.categories;
  c.r.reserve(rows.size());
  for (auto i : rows) {
    std::vector<double> counts(m.categories, 0.0);
    for (auto& cell : m.ratings[i]) {
      if (cell) counts[*cell - 1] += 1.0;
    }
    c.r.push_back(std::move(counts));
  }
  return c;
}

double coefficient_from_counts(const Counts& c, AcMethod method) {
  const int q = c.q;
  std::vector<std::vector<double>> w(q, std::vector<double>(q));
  double total_weight = 0.0;
  for (int k = 0; k < q; ++k) {
    for (int l = 0; l < q; ++l) {
      w[k][l] = agreement_weight(method, k + 1, l + 1, q);
      total_weight += w[k][l];
    }
  }
  double pa_sum = 0.0;
  int n2 = 0;
  int n1 = 0;
  std::vector<double> pi(q, 0.0);
  for (auto& row : c.r) {
    double ri = 0.0;
    for (double v : row) ri += v;
    if (ri < 1.0) continue;
    ++n1;
    for (int k = 0; k < q; ++k) pi[k] += row[k] / ri;
    if (ri < 2.0) continue;
    ++n2;
    double agree = 0.0;
    for (int k = 0; k < q; ++k) {
      double weighted = 0.0;
      for (int l = 0; l < q; ++l) weighted += w[k][l] * row[l];
      agree += row[k] * (weighted - 1.0);
    }
    pa_sum += agree / (ri * (ri - 1.0));
  }
  if (n2 < 2) throw InsufficientDataError("agreement needs at least two items rated by two or more raters");
  const double pa = pa_sum / n2;
  double spread = 0.0;
  for (int k = 0; k < q; ++k) {
    pi[k] /= n1;
    spread += pi[k] * (1.0 - pi[k]);
  }
  const double pe = total_weight * spread / (q * (q - 1.0));
  return (pa - pe) / (1.0 - pe);
}

}  // namespace

double gwet_coefficient(const RatingMatrix& m, AcMethod method) {
  std::vector<std::size_t> rows(m.n_items());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return coefficient_from_counts(category_counts(m, rows), method);
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw EmptyInputError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

AgreementResult gwet_ac(const RatingMatrix& m, AcMethod method, int n_bootstrap, std::uint64_t seed,
                        std::size_t workers) {
  AgreementResult r;
  r.method = method;
  r.coefficient = gwet_coefficient(m, method);
  r.n_bootstrap = n_bootstrap;
  r.n_items = static_cast<int>(m.n_items());
  r.n_raters = static_cast<int>(m.n_raters());
  if (n_bootstrap <= 0) return r;

  std::vector<std::size_t> all(m.n_items());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const Counts full = category_counts(m, all);
  std::vector<std::optional<double>> draws(n_bootstrap);
  parallel_for(draws.size(), workers, [&](std::size_t b) {
    Rng rng(splitmix64(seed + b));
    Counts sample;
    sample.q = full.q;
    sample.r.reserve(full.r.size());
    for (std::size_t i = 0; i < full.r.size(); ++i) sample.r.push_back(full.r[rng.below(full.r.size())]);
    try {
      draws[b] = coefficient_from_counts(sample, method);
    } catch (const InsufficientDataError&) {
      // Resamples without two multiply-rated items carry no information.
    }
  });
  std::vector<double> valid;
  for (auto& d : draws) {
    if (d) valid.push_back(*d);
  }
  r.n_valid = static_cast<int>(valid.size());
  if (!valid.empty()) {
    r.ci_low = quantile(valid, 0.025);
    r.ci_high = quantile(valid, 0.975);
  }
  return r;
}

std::vector<AgreementResult> pairwise_agreement(const RatingMatrix& m, AcMethod method, int n_bootstrap,
                                                std::uint64_t seed) {
  std::vector<AgreementResult> out;
  for (std::size_t a = 0; a < m.n_raters(); ++a) {
    for (std::size_t b = a + 1; b < m.n_raters(); ++b) {
      auto r = gwet_ac(m.pair(a, b), method, n_bootstrap, seed);
      r.rater_a = m.rater_ids[a];
      r.rater_b = m.rater_ids[b];
      out.push_back(std::move(r));
    }
  }
  return out;
}

json agreement_to_json(const AgreementResult& r) {
  json out{{"method", ac_method_name(r.method)},
           {"coefficient", r.coefficient},
           {"ci_low", r.ci_low ? json(*r.ci_low) : json(nullptr)},
           {"ci_high", r.ci_high ? json(*r.ci_high) : json(nullptr)},
           {"n_bootstrap", r.n_bootstrap},
           {"n_valid", r.n_valid},
           {"n_items", r.n_items},
           {"n_raters", r.n_raters}};
  if (!r.rater_a.empty()) {
    out["rater_a"] = r.rater_a;
    out["rater_b"] = r.rater_b;
  }
  return out;
}

// --- DDx accuracy ------------------------------------------------------------------

bool judge_ddx(const std::vector<std::string>& ddx, const std::string& truth, JudgeClient& judge) {
  if (ddx.empty()) throw PreconditionError("DDx judging needs at least one predicted diagnosis");
  auto out = judge.ask(build_judge_prompt(JudgeKind::ddx, {{"ddx", join(ddx, ", ")}, {"ans", truth}}));
  return out.at("answer").get<std::string>() == "Y";
}

DdxAccuracy ddx_accuracy(const std::vector<DdxCase>& cases, JudgeClient& judge) {
  if (cases.empty()) throw EmptyInputError("no DDx cases to score");
  DdxAccuracy a;
  for (auto& c : cases) {
    const bool ok = judge_ddx(c.ddx, c.truth, judge);
    a.verdicts[c.case_id] = ok;
    ++a.n;
    a.n_correct += ok;
  }
  a.rate = static_cast<double>(a.n_correct) / a.n;
  return a;
}

json ddx_accuracy_to_json(const DdxAccuracy& a) {
  return {{"n", a.n}, {"n_correct", a.n_correct}, {"rate", a.rate}, {"verdicts", a.verdicts}};
}

// --- classifier validation ---------------------------------------------------------

GoldSentence gold_from_json(const json& j) {
  try {
    GoldSentence g;
    g.session_id = j.at("session_id").get<std::string>();
    g.turn_index = j.at("turn_index").get<int>();
    g.sentence_index = j.at("sentence_index").get<int>();
    g.information = j.at("information").get<bool>();
    for (auto& name : j.value("links", json::array())) {
      auto key = parse_item(name.get<std::string>());
      if (!key) throw ParseError("gold", "unknown item '" + name.get<std::string>() + "'");
      g.links.insert(*key);
    }
    for (auto& [name, label] : j.value("nli", json::object()).items()) {
      auto key = parse_item(name);
      auto l = parse_nli_label(label.get<std::string>());
      if (!key || !l) throw ParseError("gold", "bad NLI entry '" + name + "'");
      g.nli[*key] = *l;
    }
    g.unsupported = j.value("unsupported", false);
    return g;
  } catch (const json::exception& e) {
    throw ParseError("gold", e.what());
  }
}

std::vector<GoldSentence> load_gold(const std::filesystem::path& path) {
  std::vector<GoldSentence> out;
  const auto lines = split_lines(read_text_file(path));
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    try {
      out.push_back(gold_from_json(json::parse(lines[i])));
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(i + 1), e.what());
    }
  }
  return out;
}

std::optional<double> f1_score(std::optional<double> p, std::optional<double> r) {
  if (!p || !r) return std::nullopt;
  if (*p + *r == 0.0) return 0.0;
  return 2.0 * *p * *r / (*p + *r);
}

ClassifierValidation classifier_validation(const std::vector<GoldSentence>& gold,
                                           const std::vector<SentenceVerdict>& pred) {
  using Key = std::tuple<std::string, int, int>;
  std::map<Key, const SentenceVerdict*> by_key;
  for (auto& v : pred) {
    if (!by_key.emplace(Key{v.session_id, v.turn_index, v.sentence_index}, &v).second) {
      throw AlignmentError("duplicate prediction for " + v.session_id + " (" + std::to_string(v.turn_index) + ", " +
                           std::to_string(v.sentence_index) + ")");
    }
  }
  if (gold.size() != pred.size()) {
    throw AlignmentError(std::to_string(gold.size()) + " gold sentences but " + std::to_string(pred.size()) +
                         " predictions");
  }
  auto ratio = [](long num, long den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  long correct = 0, gold_info = 0, info_hit = 0;
  long item_tp = 0, item_pred = 0, item_gold = 0;
  long val_total = 0, val_correct = 0;
  long un_tp = 0, un_pred = 0, un_gold = 0;
  for (auto& g : gold) {
    auto it = by_key.find(Key{g.session_id, g.turn_index, g.sentence_index});
    if (it == by_key.end()) {
      throw AlignmentError("no prediction for " + g.session_id + " (" + std::to_string(g.turn_index) + ", " +
                           std::to_string(g.sentence_index) + ")");
    }
    const auto& p = *it->second;
    const bool p_info = p.category == SentenceCategory::information;
    correct += p_info == g.information;
    if (g.information) {
      ++gold_info;
      info_hit += p_info;
    }
    const auto keys = linked_keys(p.links);
    const std::set<ItemKey> p_links(keys.begin(), keys.end());
    item_pred += static_cast<long>(p_links.size());
    item_gold += static_cast<long>(g.links.size());
    for (auto k : p_links) {
      if (!g.links.contains(k)) continue;
      ++item_tp;
      auto gl = g.nli.find(k);
      auto pl = p.nli.find(k);
      if (gl != g.nli.end() && pl != p.nli.end()) {
        ++val_total;
        val_correct += gl->second == pl->second;
      }
    }
    un_pred += p.unsupported;
    un_gold += g.unsupported;
    un_tp += p.unsupported && g.unsupported;
  }
  ClassifierValidation v;
  v.n_sentences = static_cast<int>(gold.size());
  v.accuracy = ratio(correct, static_cast<long>(gold.size()));
  v.recall = ratio(info_hit, gold_info);
  v.p_item = ratio(item_tp, item_pred);
  v.r_item = ratio(item_tp, item_gold);
  v.f1_item = f1_score(v.p_item, v.r_item);
  v.acc_val = ratio(val_correct, val_total);
  v.p_unsupp = ratio(un_tp, un_pred);
  v.r_unsupp = ratio(un_tp, un_gold);
  v.f1_unsupp = f1_score(v.p_unsupp, v.r_unsupp);
  return v;
}

json classifier_validation_to_json(const ClassifierValidation& v) {
  auto num = [](const std::optional<double>& x) { return x ? json(*x) : json(nullptr); };
  return {{"n_sentences", v.n_sentences}, {"accuracy", num(v.accuracy)}, {"recall", num(v.recall)},
          {"p_item", num(v.p_item)},      {"r_item", num(v.r_item)},     {"f1_item", num(v.f1_item)},
          {"acc_val", num(v.acc_val)},    {"p_unsupp", num(v.p_unsupp)}, {"r_unsupp", num(v.r_unsupp)},
          {"f1_unsupp", num(v.f1_unsupp)}};
}

}  // namespace medsim
