#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pheno/types.hpp"

namespace pheno::corpus {

// ---------------------------------------------------------------------------
// Record ingestion
// ---------------------------------------------------------------------------

struct IngestOptions {
  /// When a record omits expects_disease, it is derived from these keywords
  /// (case-insensitive substring of the question). Empty: default to false.
  std::vector<std::string> disease_keywords;
};

/// Parses a line-delimited record file. Blank lines are skipped.
/// Throws ValidationError naming the line (malformed JSON, unknown
/// field_type) or the record id (duplicates).
std::vector<SurveyRecord> ingest_records(std::string_view content, const IngestOptions& options = {});
std::vector<SurveyRecord> ingest_records_file(const std::filesystem::path& path,
                                              const IngestOptions& options = {});

nlohmann::ordered_json record_to_json(const SurveyRecord& record);
std::string write_records(const std::vector<SurveyRecord>& records);

// ---------------------------------------------------------------------------
// Text normalization
// ---------------------------------------------------------------------------

struct PreprocessConfig {
  bool nfc = true;
  bool lowercase = true;
  bool acronyms = true;
  bool punctuation = true;
  bool spelling = false;
  bool whitespace = true;

  /// Acronym -> expansion. Matching is whole-token and case-insensitive.
  std::vector<std::pair<std::string, std::string>> acronym_map;
  /// Known-good words for spelling correction, in tie-break order.
  std::vector<std::string> lexicon;
  std::vector<std::string> disease_keywords;

  /// Every step disabled; tests and callers switch on what they need.
  static PreprocessConfig none();
  /// Key/value file: steps, acronym_map, lexicon, disease_keywords.
  /// Relative paths resolve against the config file's directory.
  static PreprocessConfig load(const std::filesystem::path& path);
};

struct NormalizedText {
  std::string text;
  /// offset_map[i]: raw offset where normalized character i starts.
  std::vector<std::size_t> offset_map;
  /// end_map[i]: raw offset one past the raw characters that produced i.
  std::vector<std::size_t> end_map;

  /// Maps a span over `text` back onto the raw input.
  TextSpan to_raw(TextSpan span) const;
};

/// NFC, lowercase, acronym expansion, punctuation normalization, spelling
/// correction, whitespace collapse, in that order, each optional.
NormalizedText normalize_text(std::string_view raw, const PreprocessConfig& config);

/// Normalizes question, answer, and preceding questions of every record.
std::vector<SurveyRecord> normalize_records(std::vector<SurveyRecord> records,
                                            const PreprocessConfig& config);

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

/// ceil(n/2) records expecting a disease and floor(n/2) not, each stratum
/// cycling through field types before repeating one. Pure in (records, n, seed).
std::vector<SurveyRecord> stratified_sample(const std::vector<SurveyRecord>& records, std::size_t n,
                                            uint64_t seed);

// ---------------------------------------------------------------------------
// Doccano
// ---------------------------------------------------------------------------

struct GroundTruth {
  AnnotationCollection annotations;
  /// record_id -> the text the spans index.
  std::map<std::string, std::string> texts;
};

/// Lines of {"record_id"?, "text", "label": [[begin, end, "mesh:D..."|"NONE"], ...]}.
/// Records without record_id fall back to Doccano's "id", then to "line-<n>".
GroundTruth import_doccano(std::string_view content);
GroundTruth import_doccano_file(const std::filesystem::path& path);

/// One line per text, ordered by record id. Throws if an annotation set
/// refers to a record with no text.
std::string export_doccano(const AnnotationCollection& annotations,
                           const std::map<std::string, std::string>& texts);

}  // namespace pheno::corpus
