#include "pheno/types.hpp"

#include <algorithm>
#include <cctype>

#include "pheno/error.hpp"

namespace pheno {

std::string_view to_string(FieldType type) {
  switch (type) {
    case FieldType::slider: return "slider";
    case FieldType::descriptive: return "descriptive";
    case FieldType::binary: return "binary";
    case FieldType::ratio: return "ratio";
    case FieldType::dropdown: return "dropdown";
    case FieldType::checkbox: return "checkbox";
  }
  return "descriptive";
}

std::optional<FieldType> parse_field_type(std::string_view name) {
  for (FieldType t : kAllFieldTypes) {
    if (to_string(t) == name) return t;
  }
  return std::nullopt;
}

std::string target_text(const SurveyRecord& record) {
  if (record.question_text.empty()) return record.answer_text;
  return record.question_text + " " + record.answer_text;
}

std::optional<ConceptId> ConceptId::parse(std::string_view text) {
  if (text == "NONE") return ConceptId{};
  constexpr std::string_view prefix = "mesh:D";
  if (text.size() <= prefix.size() || text.substr(0, prefix.size()) != prefix) return std::nullopt;
  const auto digits = text.substr(prefix.size());
  if (!std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    return std::nullopt;
  }
  return ConceptId(std::string(text.substr(prefix.size() - 1)));
}

ConceptId ConceptId::mesh(std::string_view text) {
  auto id = parse(text);
  if (!id || id->is_none()) {
    throw ValidationError("not a MeSH concept id: \"" + std::string(text) + "\"");
  }
  return *id;
}

std::string ConceptId::str() const { return is_none() ? "NONE" : "mesh:" + identifier_; }

std::string_view to_string(AnnotationSource source) {
  switch (source) {
    case AnnotationSource::ner_backend: return "ner_backend";
    case AnnotationSource::llm: return "llm";
    case AnnotationSource::human: return "human";
  }
  return "human";
}

void sort_annotations(AnnotationCollection& collection) {
  for (auto& [id, annotations] : collection) {
    std::stable_sort(annotations.begin(), annotations.end(),
                     [](const auto& a, const auto& b) { return a.span < b.span; });
  }
}

}  // namespace pheno
