#include "pheno/annotate.hpp"

#include <algorithm>

#include "pheno/error.hpp"
#include "pheno/http.hpp"
#include "pheno/unicode.hpp"
#include "pheno/util.hpp"

namespace pheno::annotate {

using nlohmann::json;

void BackendConfig::validate() const {
  if (batch_size == 0) throw ValidationError("batch_size must be at least 1");
  if (max_inflight == 0) throw ValidationError("max_inflight must be at least 1");
}

// ---------------------------------------------------------------------------

HttpNerBackend::HttpNerBackend(BackendConfig config) : config_(std::move(config)) { config_.validate(); }

json HttpNerBackend::annotate(const std::vector<std::string>& texts) {
  return http::post_json(config_.endpoint, json{{"texts", texts}}, config_.timeout, "PHENO_NER_TOKEN");
}

// ---------------------------------------------------------------------------

MockNerBackend::MockNerBackend(Lexicon lexicon) {
  for (auto& [term, concept_id] : lexicon) {
    if (term.empty()) throw ValidationError("mock lexicon contains an empty term");
    if (unicode::lower(term) != term) {
      throw ValidationError("mock lexicon term \"" + term + "\" is not lowercase");
    }
    terms_.push_back({unicode::decode(term), concept_id});
  }
  std::stable_sort(terms_.begin(), terms_.end(),
                   [](const Term& a, const Term& b) { return a.folded.size() > b.folded.size(); });
}

json MockNerBackend::annotate_one(std::string_view text) const {
  const auto decoded = unicode::decode(text);
  std::u32string folded;
  folded.reserve(decoded.size());
  for (char32_t c : decoded) folded.push_back(unicode::lower_simple(c));

  json annotations = json::array();
  std::size_t i = 0;
  while (i < folded.size()) {
    const bool token_start =
        unicode::is_word_char(folded[i]) && (i == 0 || !unicode::is_word_char(folded[i - 1]));
    const Term* hit = nullptr;
    if (token_start) {
      for (const auto& term : terms_) {
        const std::size_t end = i + term.folded.size();
        if (end > folded.size()) continue;
        if (end < folded.size() && unicode::is_word_char(folded[end])) continue;
        if (std::u32string_view(folded).substr(i, term.folded.size()) == term.folded) {
          hit = &term;
          break;
        }
      }
    }
    if (!hit) {
      ++i;
      continue;
    }
    const std::size_t end = i + hit->folded.size();
    annotations.push_back({
        {"mention", unicode::encode(std::u32string_view(decoded).substr(i, end - i))},
        {"span", {{"begin", i}, {"end", end}}},
        {"obj", "disease"},
        {"id", json::array({hit->concept_id.is_none() ? std::string("CUI-less") : hit->concept_id.str()})},
        {"prob", 1.0},
    });
    i = end;
  }
  return json{{"annotations", annotations}};
}

json MockNerBackend::annotate(const std::vector<std::string>& texts) {
  json results = json::array();
  for (const auto& t : texts) results.push_back(annotate_one(t));
  return json{{"results", results}};
}

Lexicon load_lexicon(const std::filesystem::path& path) {
  Lexicon lexicon;
  const auto lines = io::read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (io::trim(lines[i]).empty() || lines[i][0] == '#') continue;
    const auto tab = lines[i].find('\t');
    if (tab == std::string::npos) {
      throw ValidationError(path.string() + ": line " + std::to_string(i + 1) +
                            ": expected term<TAB>concept");
    }
    const auto concept_text = io::trim(lines[i].substr(tab + 1));
    const auto concept_id = ConceptId::parse(concept_text);
    if (!concept_id) {
      throw ValidationError(path.string() + ": line " + std::to_string(i + 1) + ": bad concept \"" +
                            concept_text + "\"");
    }
    lexicon[io::trim(lines[i].substr(0, tab))] = *concept_id;
  }
  return lexicon;
}

// ---------------------------------------------------------------------------

std::vector<NormalizedAnnotation> parse_backend_response(const json& payload, std::string_view submitted_text,
                                                         const std::string& record_id) try {
  if (!payload.is_object() || !payload.contains("annotations") || !payload["annotations"].is_array()) {
    throw ValidationError("response entry lacks an \"annotations\" list");
  }
  const auto text = unicode::decode(submitted_text);
  std::vector<NormalizedAnnotation> out;
  for (const auto& entry : payload["annotations"]) {
    if (!entry.is_object()) throw ValidationError("annotation entry is not an object");
    if (entry.value("obj", std::string()) != "disease") continue;

    const auto& span = entry.at("span");
    const auto begin = span.at("begin").get<long long>();
    const auto end = span.at("end").get<long long>();
    if (begin < 0 || end <= begin || static_cast<std::size_t>(end) > text.size()) {
      throw ValidationError("span [" + std::to_string(begin) + ", " + std::to_string(end) +
                            ") outside submitted text of length " + std::to_string(text.size()));
    }
    NormalizedAnnotation a;
    a.record_id = record_id;
    a.span = {static_cast<std::size_t>(begin), static_cast<std::size_t>(end)};
    a.surface = unicode::encode(std::u32string_view(text).substr(a.span.begin, a.span.length()));
    if (auto mention = entry.find("mention"); mention != entry.end() && mention->get<std::string>() != a.surface) {
      throw ValidationError("mention \"" + mention->get<std::string>() + "\" does not match span text \"" +
                            a.surface + "\"");
    }

    a.concept_id = ConceptId::none();
    if (auto ids = entry.find("id"); ids != entry.end() && ids->is_array()) {
      for (const auto& id : *ids) {
        if (!id.is_string()) continue;
        if (auto parsed = ConceptId::parse(id.get<std::string>()); parsed && !parsed->is_none()) {
          a.concept_id = *parsed;
          break;
        }
      }
    }
    if (auto prob = entry.find("prob"); prob != entry.end() && prob->is_number()) {
      a.confidence = std::clamp(prob->get<double>(), 0.0, 1.0);
    }
    a.source = AnnotationSource::ner_backend;
    out.push_back(std::move(a));
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.span < y.span; });
  return out;
} catch (const json::exception& e) {
  throw ValidationError(std::string("malformed response entry: ") + e.what());
}

// ---------------------------------------------------------------------------

namespace {

// Returns the response's "results" array or throws BackendError when the
// reply does not line up with the request.
const json& results_of(const json& response, std::size_t expected) {
  if (!response.is_object() || !response.contains("results") || !response["results"].is_array()) {
    throw BackendError("response lacks a \"results\" list");
  }
  const auto& results = response["results"];
  if (results.size() != expected) {
    throw BackendError("response has " + std::to_string(results.size()) + " results for " +
                       std::to_string(expected) + " texts");
  }
  return results;
}

void fill_from_result(AnnotationOutcome& outcome, const json& result) {
  try {
    outcome.annotations = parse_backend_response(result, outcome.text, outcome.record_id);
    outcome.status = OutcomeStatus::ok;
    outcome.error.clear();
  } catch (const std::exception& e) {
    outcome.annotations.clear();
    outcome.status = OutcomeStatus::failed;
    outcome.error = std::string("parse error: ") + e.what();
  }
}

void submit_single(AnnotationOutcome& outcome, NerBackend& backend, std::size_t attempts_left) {
  while (attempts_left-- > 0) {
    ++outcome.attempts;
    try {
      const auto response = backend.annotate({outcome.text});
      fill_from_result(outcome, results_of(response, 1)[0]);
      return;
    } catch (const std::exception& e) {
      outcome.status = OutcomeStatus::failed;
      outcome.error = e.what();
    }
  }
}

}  // namespace

std::vector<AnnotationOutcome> annotate_batch(const std::vector<SurveyRecord>& records, NerBackend& backend,
                                              const BackendConfig& config) {
  config.validate();
  std::vector<AnnotationOutcome> outcomes(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    outcomes[i].record_id = records[i].record_id;
    outcomes[i].text = target_text(records[i]);
  }

  const std::size_t chunks = (records.size() + config.batch_size - 1) / config.batch_size;
  bounded_for_each(chunks, config.max_inflight, [&](std::size_t chunk) {
    const std::size_t first = chunk * config.batch_size;
    const std::size_t last = std::min(records.size(), first + config.batch_size);
    std::vector<std::string> texts;
    for (std::size_t i = first; i < last; ++i) texts.push_back(outcomes[i].text);

    try {
      for (std::size_t i = first; i < last; ++i) ++outcomes[i].attempts;
      const auto response = backend.annotate(texts);
      const auto& results = results_of(response, texts.size());
      for (std::size_t i = first; i < last; ++i) fill_from_result(outcomes[i], results[i - first]);
    } catch (const std::exception& e) {
      // The whole chunk failed; isolate records so one bad input cannot sink the rest.
      for (std::size_t i = first; i < last; ++i) {
        outcomes[i].status = OutcomeStatus::failed;
        outcomes[i].error = e.what();
        submit_single(outcomes[i], backend, config.retry_budget);
      }
    }
  });
  return outcomes;
}

// ---------------------------------------------------------------------------

nlohmann::ordered_json outcome_to_json(const AnnotationOutcome& outcome) {
  nlohmann::ordered_json obj;
  obj["record_id"] = outcome.record_id;
  obj["status"] = outcome.status == OutcomeStatus::ok ? "ok" : "failed";
  obj["text"] = outcome.text;
  obj["annotations"] = nlohmann::ordered_json::array();
  for (const auto& a : outcome.annotations) {
    nlohmann::ordered_json entry;
    entry["span"] = {a.span.begin, a.span.end};
    entry["surface"] = a.surface;
    entry["concept"] = a.concept_id.str();
    if (a.confidence) entry["confidence"] = *a.confidence;
    obj["annotations"].push_back(std::move(entry));
  }
  if (outcome.status == OutcomeStatus::failed) obj["error"] = outcome.error;
  return obj;
}

AnnotationOutcome outcome_from_json(const json& obj) {
  AnnotationOutcome outcome;
  outcome.record_id = obj.at("record_id").get<std::string>();
  const auto status = obj.at("status").get<std::string>();
  if (status != "ok" && status != "failed") throw ValidationError("unknown status \"" + status + "\"");
  outcome.status = status == "ok" ? OutcomeStatus::ok : OutcomeStatus::failed;
  outcome.text = obj.at("text").get<std::string>();
  outcome.error = obj.value("error", std::string());
  const auto length = unicode::length(outcome.text);
  for (const auto& entry : obj.at("annotations")) {
    NormalizedAnnotation a;
    a.record_id = outcome.record_id;
    const auto& span = entry.at("span");
    a.span = {span.at(0).get<std::size_t>(), span.at(1).get<std::size_t>()};
    if (a.span.begin >= a.span.end || a.span.end > length) {
      throw ValidationError("record \"" + outcome.record_id + "\": span out of bounds");
    }
    a.surface = unicode::substr(outcome.text, a.span);
    const auto concept_text = entry.at("concept").get<std::string>();
    const auto concept_id = ConceptId::parse(concept_text);
    if (!concept_id) throw ValidationError("bad concept \"" + concept_text + "\"");
    a.concept_id = *concept_id;
    if (entry.contains("confidence")) a.confidence = entry["confidence"].get<double>();
    a.source = AnnotationSource::ner_backend;
    outcome.annotations.push_back(std::move(a));
  }
  return outcome;
}

std::string write_outcomes(const std::vector<AnnotationOutcome>& outcomes) {
  std::string out;
  for (const auto& o : outcomes) {
    out += outcome_to_json(o).dump();
    out += '\n';
  }
  return out;
}

std::vector<AnnotationOutcome> read_outcomes(std::string_view content) {
  std::vector<AnnotationOutcome> outcomes;
  const auto lines = io::split_lines(content);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (io::trim(lines[i]).empty()) continue;
    try {
      outcomes.push_back(outcome_from_json(json::parse(lines[i])));
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(i + 1) + ": " + e.what());
    } catch (const std::exception& e) {
      throw ValidationError("line " + std::to_string(i + 1) + ": malformed prediction: " + e.what());
    }
  }
  return outcomes;
}

}  // namespace pheno::annotate
