#include <string>

#include "medsim/error.hpp"
#include "medsim/gateway.hpp"
#include "medsim/profile.hpp"
#include "medsim/promptkit.hpp"

namespace medsim {

using nlohmann::json;

namespace {

// Items the imputation step may complete.
struct ImputeField {
  const char* section;
  const char* key;
  Field PatientProfile::*member;
};

constexpr ImputeField kImputeFields[] = {
    {"demographics", "occupation", &PatientProfile::occupation},
    {"demographics", "living_situation", &PatientProfile::living_situation},
    {"demographics", "children", &PatientProfile::children},
    {"social_history", "exercise", &PatientProfile::exercise},
    {"social_history", "tobacco", &PatientProfile::tobacco},
    {"social_history", "alcohol", &PatientProfile::alcohol},
    {"social_history", "illicit_drug", &PatientProfile::illicit_drug},
    {"social_history", "sexual_history", &PatientProfile::sexual_history},
};

bool has_placeholder(const Field& f) { return f && f->find("___") != std::string::npos; }

Field value_of(const json& v) {
  auto s = trim(v.get<std::string>());
  if (s.empty() || s == kNotRecorded) return std::nullopt;
  return s;
}

std::string or_not_recorded(const std::string& s) {
  return trim(s).empty() ? std::string(kNotRecorded) : s;
}

json ask(JudgeClient& judge, JudgeKind kind, const Slots& slots) {
  try {
    return judge.ask(build_judge_prompt(kind, slots));
  } catch (const TransientError& e) {
    throw IngestError(std::string(judge_kind_name(kind)) + " call failed: " + e.what());
  } catch (const RemoteError& e) {
    throw IngestError(std::string(judge_kind_name(kind)) + " call failed: " + e.what());
  }
}

}  // namespace

IngestResult ingest_note(const RawRecord& r, JudgeClient& judge) {
  IngestResult result;
  auto outcome = apply_cohort_filters(r);
  if (!outcome.accepted) {
    std::string reasons;
    for (auto& reason : outcome.reasons) {
      if (!reasons.empty()) reasons += "; ";
      reasons += std::string(filter_rule_name(reason.rule)) + ": " + reason.detail;
    }
    result.rejection = "cohort filters: " + reasons;
    return result;
  }
  PatientProfile p = *outcome.normalized;

  // Step 1: structure the note-derived items. Values supplied upstream win.
  const json ex = ask(judge, JudgeKind::note_extract,
                      {{"allergies", or_not_recorded(r.note.allergies)},
                       {"chief_complaint", or_not_recorded(r.note.chief_complaint)},
                       {"hpi", or_not_recorded(r.note.hpi)},
                       {"pmh", or_not_recorded(r.note.pmh)},
                       {"social_history", or_not_recorded(r.note.social_history)},
                       {"family_history", or_not_recorded(r.note.family_history)}});
  auto fill = [&](Field& target, const char* key, const json& v) {
    for (auto& [k, _] : r.extracted) {
      if (k == key) return;
    }
    target = value_of(v);
  };
  fill(p.occupation, "occupation", ex["demographics"]["occupation"]);
  fill(p.living_situation, "living_situation", ex["demographics"]["living_situation"]);
  fill(p.children, "children", ex["demographics"]["children"]);
  fill(p.exercise, "exercise", ex["social_history"]["exercise"]);
  fill(p.tobacco, "tobacco", ex["social_history"]["tobacco"]);
  fill(p.alcohol, "alcohol", ex["social_history"]["alcohol"]);
  fill(p.illicit_drug, "illicit_drug", ex["social_history"]["illicit_drug"]);
  fill(p.sexual_history, "sexual_history", ex["social_history"]["sexual_history"]);
  fill(p.allergies, "allergies", ex["allergies"]);
  fill(p.medical_history, "medical_history", ex["medical_history"]);
  fill(p.family_medical_history, "family_medical_history", ex["family_medical_history"]);
  fill(p.medical_device, "medical_device", ex["medical_device"]);
  fill(p.present_illness.positive, "present_illness_positive", ex["present_illness"]["positive"]);
  fill(p.present_illness.negative, "present_illness_negative", ex["present_illness"]["negative"]);

  // Step 2: keep only profiles that plausibly lead to the recorded diagnosis.
  const json score = ask(judge, JudgeKind::note_filter, profile_slots(p));
  result.alignment_score = score["likelihood_rating"].get<int>();
  result.alignment_explanation = score["explanation"].get<std::string>();
  if (result.alignment_score < kMinAlignmentScore) {
    result.rejection = "alignment score " + std::to_string(result.alignment_score) + " below " +
                       std::to_string(kMinAlignmentScore);
    return result;
  }

  // Step 3: complete absent lifestyle items without touching valid data.
  bool needs_imputation = false;
  for (auto& f : kImputeFields) {
    const Field& v = p.*(f.member);
    needs_imputation = needs_imputation || !v || has_placeholder(v);
  }
  if (needs_imputation) {
    Slots slots = profile_slots(p);
    slots["present_illness"] = "positive: " + display(p.present_illness.positive) +
                               "; negative (denied): " + display(p.present_illness.negative);
    const json imputed = ask(judge, JudgeKind::note_impute, slots);
    for (auto& f : kImputeFields) {
      Field& v = p.*(f.member);
      if (v && !has_placeholder(v)) continue;
      if (auto filled = value_of(imputed[f.section][f.key]); filled && !has_placeholder(filled)) v = filled;
    }
  }

  result.profile = std::move(p);
  return result;
}

}  // namespace medsim
