#pragma once

#include <compare>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pheno {

/// Survey question kinds seen in the cohort exports.
enum class FieldType { slider, descriptive, binary, ratio, dropdown, checkbox };

std::string_view to_string(FieldType type);
std::optional<FieldType> parse_field_type(std::string_view name);
inline constexpr FieldType kAllFieldTypes[] = {FieldType::slider,   FieldType::descriptive,
                                               FieldType::binary,   FieldType::ratio,
                                               FieldType::dropdown, FieldType::checkbox};

struct SurveyRecord {
  std::string record_id;
  std::string question_text;
  std::string answer_text;
  FieldType field_type = FieldType::descriptive;
  std::vector<std::string> preceding_questions;
  bool expects_disease = false;

  bool operator==(const SurveyRecord&) const = default;
};

/// The text the NER backend sees and every span indexes: question and answer
/// joined by one space, or the bare answer when the question is empty.
std::string target_text(const SurveyRecord& record);

/// Half-open span in Unicode scalar values.
struct TextSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - begin; }
  auto operator<=>(const TextSpan&) const = default;
};

/// A MeSH concept identifier ("mesh:D001249") or the NONE sentinel.
class ConceptId {
public:
  ConceptId() = default;

  static ConceptId none() { return {}; }
  /// Accepts "mesh:D<digits>" or "NONE"; anything else yields nullopt.
  static std::optional<ConceptId> parse(std::string_view text);
  /// Like parse() but rejects NONE and throws ValidationError on bad input.
  static ConceptId mesh(std::string_view text);

  bool is_none() const { return identifier_.empty(); }
  /// "D001249", empty for NONE.
  const std::string& identifier() const { return identifier_; }
  /// Canonical rendering: "mesh:D001249" or "NONE".
  std::string str() const;

  auto operator<=>(const ConceptId&) const = default;

private:
  explicit ConceptId(std::string identifier) : identifier_(std::move(identifier)) {}
  std::string identifier_;
};

enum class AnnotationSource { ner_backend, llm, human };
std::string_view to_string(AnnotationSource source);

struct NormalizedAnnotation {
  std::string record_id;
  TextSpan span;
  std::string surface;
  ConceptId concept_id;
  std::optional<double> confidence;
  AnnotationSource source = AnnotationSource::human;

  bool operator==(const NormalizedAnnotation&) const = default;
};

/// record_id -> annotations sorted by (begin, end).
using AnnotationCollection = std::map<std::string, std::vector<NormalizedAnnotation>>;

/// Sorts every record's annotations by span, stable for equal spans.
void sort_annotations(AnnotationCollection& collection);

}  // namespace pheno
