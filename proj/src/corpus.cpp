#include "pheno/corpus.hpp"

#include <algorithm>
#include <set>

#include "pheno/error.hpp"
#include "pheno/unicode.hpp"
#include "pheno/util.hpp"

namespace pheno::corpus {

namespace {

using nlohmann::json;

std::string line_prefix(std::size_t line_no) { return "line " + std::to_string(line_no) + ": "; }

const json& require(const json& obj, const char* key, std::size_t line_no) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ValidationError(line_prefix(line_no) + "missing key \"" + key + "\"");
  return *it;
}

std::string require_string(const json& obj, const char* key, std::size_t line_no) {
  const auto& value = require(obj, key, line_no);
  if (!value.is_string()) {
    throw ValidationError(line_prefix(line_no) + "\"" + key + "\" must be a string");
  }
  return value.get<std::string>();
}

bool mentions_keyword(const std::string& question, const std::vector<std::string>& keywords) {
  const auto folded = unicode::lower(question);
  return std::any_of(keywords.begin(), keywords.end(), [&](const std::string& k) {
    return !k.empty() && folded.find(unicode::lower(k)) != std::string::npos;
  });
}

SurveyRecord parse_record(const json& obj, std::size_t line_no, const IngestOptions& options) {
  if (!obj.is_object()) throw ValidationError(line_prefix(line_no) + "record must be an object");
  SurveyRecord record;
  record.record_id = require_string(obj, "record_id", line_no);
  if (record.record_id.empty()) throw ValidationError(line_prefix(line_no) + "empty record_id");
  record.question_text = require_string(obj, "question_text", line_no);
  record.answer_text = require_string(obj, "answer_text", line_no);

  const auto type_name = require_string(obj, "field_type", line_no);
  const auto type = parse_field_type(type_name);
  if (!type) {
    throw ValidationError(line_prefix(line_no) + "unknown field_type \"" + type_name + "\"");
  }
  record.field_type = *type;

  if (auto it = obj.find("preceding_questions"); it != obj.end()) {
    if (!it->is_array()) {
      throw ValidationError(line_prefix(line_no) + "\"preceding_questions\" must be a list");
    }
    for (const auto& q : *it) {
      if (!q.is_string()) {
        throw ValidationError(line_prefix(line_no) + "\"preceding_questions\" must hold strings");
      }
      record.preceding_questions.push_back(q.get<std::string>());
    }
  }

  if (auto it = obj.find("expects_disease"); it != obj.end()) {
    if (!it->is_boolean()) {
      throw ValidationError(line_prefix(line_no) + "\"expects_disease\" must be a boolean");
    }
    record.expects_disease = it->get<bool>();
  } else {
    record.expects_disease = mentions_keyword(record.question_text, options.disease_keywords);
  }
  return record;
}

}  // namespace

std::vector<SurveyRecord> ingest_records(std::string_view content, const IngestOptions& options) {
  std::vector<SurveyRecord> records;
  std::set<std::string> seen;
  const auto lines = io::split_lines(content);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    if (io::trim(lines[i]).empty()) continue;
    json obj;
    try {
      obj = json::parse(lines[i]);
    } catch (const json::parse_error& e) {
      throw ValidationError(line_prefix(line_no) + "malformed record: " + e.what());
    }
    auto record = parse_record(obj, line_no, options);
    if (!seen.insert(record.record_id).second) {
      throw ValidationError(line_prefix(line_no) + "duplicate record_id \"" + record.record_id + "\"");
    }
    records.push_back(std::move(record));
  }
  return records;
}

std::vector<SurveyRecord> ingest_records_file(const std::filesystem::path& path,
                                              const IngestOptions& options) {
  return ingest_records(io::read_file(path), options);
}

nlohmann::ordered_json record_to_json(const SurveyRecord& record) {
  nlohmann::ordered_json obj;
  obj["record_id"] = record.record_id;
  obj["question_text"] = record.question_text;
  obj["answer_text"] = record.answer_text;
  obj["field_type"] = std::string(to_string(record.field_type));
  obj["preceding_questions"] = record.preceding_questions;
  obj["expects_disease"] = record.expects_disease;
  return obj;
}

std::string write_records(const std::vector<SurveyRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += record_to_json(r).dump();
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<SurveyRecord> draw_stratum(std::vector<const SurveyRecord*> pool, std::size_t quota,
                                       SeededRng& rng) {
  // Shuffle within each field type, then deal round-robin across types so
  // every available type appears once before any repeats.
  std::vector<std::vector<const SurveyRecord*>> by_type;
  for (FieldType type : kAllFieldTypes) {
    std::vector<const SurveyRecord*> group;
    for (const auto* r : pool) {
      if (r->field_type == type) group.push_back(r);
    }
    if (!group.empty()) {
      rng.shuffle(group);
      by_type.push_back(std::move(group));
    }
  }
  rng.shuffle(by_type);

  std::vector<SurveyRecord> picked;
  for (std::size_t round = 0; picked.size() < quota; ++round) {
    for (const auto& group : by_type) {
      if (picked.size() == quota) break;
      if (round < group.size()) picked.push_back(*group[round]);
    }
  }
  return picked;
}

}  // namespace

std::vector<SurveyRecord> stratified_sample(const std::vector<SurveyRecord>& records, std::size_t n,
                                            uint64_t seed) {
  if (n > records.size()) {
    throw ValidationError("sample size " + std::to_string(n) + " exceeds corpus size " +
                          std::to_string(records.size()));
  }
  std::vector<const SurveyRecord*> expected, unexpected;
  for (const auto& r : records) (r.expects_disease ? expected : unexpected).push_back(&r);

  const std::size_t want_expected = (n + 1) / 2;
  const std::size_t want_unexpected = n / 2;
  if (expected.size() < want_expected || unexpected.size() < want_unexpected) {
    throw ValidationError("stratum shortfall: need " + std::to_string(want_expected) +
                          " expecting-disease / " + std::to_string(want_unexpected) +
                          " not, available " + std::to_string(expected.size()) + " / " +
                          std::to_string(unexpected.size()));
  }

  SeededRng rng(seed);
  auto out = draw_stratum(std::move(expected), want_expected, rng);
  auto rest = draw_stratum(std::move(unexpected), want_unexpected, rng);
  out.insert(out.end(), std::make_move_iterator(rest.begin()), std::make_move_iterator(rest.end()));
  return out;
}

// ---------------------------------------------------------------------------

GroundTruth import_doccano(std::string_view content) {
  GroundTruth truth;
  const auto lines = io::split_lines(content);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    if (io::trim(lines[i]).empty()) continue;
    json obj;
    try {
      obj = json::parse(lines[i]);
    } catch (const json::parse_error& e) {
      throw ValidationError(line_prefix(line_no) + "malformed Doccano line: " + e.what());
    }
    if (!obj.is_object()) throw ValidationError(line_prefix(line_no) + "expected an object");

    std::string record_id;
    if (auto it = obj.find("record_id"); it != obj.end() && it->is_string()) {
      record_id = it->get<std::string>();
    } else if (auto id = obj.find("id"); id != obj.end() && (id->is_string() || id->is_number_integer())) {
      record_id = id->is_string() ? id->get<std::string>() : std::to_string(id->get<long long>());
    } else {
      record_id = "line-" + std::to_string(line_no);
    }
    if (truth.texts.count(record_id)) {
      throw ValidationError(line_prefix(line_no) + "duplicate record \"" + record_id + "\"");
    }

    const auto text = require_string(obj, "text", line_no);
    const auto decoded = unicode::decode(text);
    auto& annotations = truth.annotations[record_id];

    const json empty = json::array();
    const auto label_it = obj.find("label");
    const json& labels = label_it == obj.end() ? empty : *label_it;
    if (!labels.is_array()) throw ValidationError(line_prefix(line_no) + "\"label\" must be a list");
    for (const auto& label : labels) {
      if (!label.is_array() || label.size() != 3 || !label[0].is_number_integer() ||
          !label[1].is_number_integer() || !label[2].is_string()) {
        throw ValidationError(line_prefix(line_no) + "label entries must be [begin, end, concept]");
      }
      const auto begin = label[0].get<long long>();
      const auto end = label[1].get<long long>();
      if (begin < 0 || end <= begin || static_cast<std::size_t>(end) > decoded.size()) {
        throw ValidationError(line_prefix(line_no) + "span [" + std::to_string(begin) + ", " +
                              std::to_string(end) + ") out of bounds for text of length " +
                              std::to_string(decoded.size()));
      }
      const auto label_text = label[2].get<std::string>();
      const auto concept_id = ConceptId::parse(label_text);
      if (!concept_id) {
        throw ValidationError(line_prefix(line_no) + "label \"" + label_text +
                              "\" is neither a MeSH concept id nor NONE");
      }
      NormalizedAnnotation a;
      a.record_id = record_id;
      a.span = {static_cast<std::size_t>(begin), static_cast<std::size_t>(end)};
      a.surface = unicode::encode(std::u32string_view(decoded).substr(a.span.begin, a.span.length()));
      a.concept_id = *concept_id;
      a.source = AnnotationSource::human;
      annotations.push_back(std::move(a));
    }
    std::stable_sort(annotations.begin(), annotations.end(),
                     [](const auto& a, const auto& b) { return a.span < b.span; });
    for (std::size_t k = 1; k < annotations.size(); ++k) {
      if (annotations[k].span == annotations[k - 1].span) {
        throw ValidationError(line_prefix(line_no) + "two labels share span [" +
                              std::to_string(annotations[k].span.begin) + ", " +
                              std::to_string(annotations[k].span.end) + ")");
      }
    }
    truth.texts.emplace(record_id, text);
  }
  return truth;
}

GroundTruth import_doccano_file(const std::filesystem::path& path) {
  return import_doccano(io::read_file(path));
}

std::string export_doccano(const AnnotationCollection& annotations,
                           const std::map<std::string, std::string>& texts) {
  for (const auto& [record_id, list] : annotations) {
    if (!texts.count(record_id)) {
      throw ValidationError("no text for record \"" + record_id + "\"");
    }
  }
  std::string out;
  for (const auto& [record_id, text] : texts) {
    nlohmann::ordered_json line;
    line["record_id"] = record_id;
    line["text"] = text;
    line["label"] = nlohmann::ordered_json::array();
    if (auto it = annotations.find(record_id); it != annotations.end()) {
      auto sorted = it->second;
      std::stable_sort(sorted.begin(), sorted.end(),
                       [](const auto& a, const auto& b) { return a.span < b.span; });
      const auto length = unicode::length(text);
      for (const auto& a : sorted) {
        if (a.span.end > length || a.span.begin >= a.span.end) {
          throw ValidationError("record \"" + record_id + "\": span out of bounds");
        }
        line["label"].push_back({a.span.begin, a.span.end, a.concept_id.str()});
      }
    }
    out += line.dump();
    out += '\n';
  }
  return out;
}

}  // namespace pheno::corpus
