#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pheno/types.hpp"

namespace pheno::annotate {

struct BackendConfig {
  std::string endpoint;
  std::size_t batch_size = 8;
  std::size_t max_inflight = 4;
  std::size_t retry_budget = 2;
  std::chrono::milliseconds timeout{30000};

  /// Throws ValidationError when batch_size or max_inflight is zero.
  void validate() const;
};

/// Anything that speaks the NER wire contract:
///   request  {"texts": [string, ...]}
///   response {"results": [{"annotations": [{"mention", "span": {"begin", "end"},
///                                            "obj", "id": [string, ...]}]}]}
/// Implementations throw BackendError on transport failure and must be safe
/// to call from several threads at once.
class NerBackend {
public:
  virtual ~NerBackend() = default;
  virtual nlohmann::json annotate(const std::vector<std::string>& texts) = 0;
};

/// POSTs the request to an HTTP(S) endpoint. A bearer token is read from
/// PHENO_NER_TOKEN when set.
class HttpNerBackend final : public NerBackend {
public:
  explicit HttpNerBackend(BackendConfig config);
  nlohmann::json annotate(const std::vector<std::string>& texts) override;

private:
  BackendConfig config_;
};

using Lexicon = std::map<std::string, ConceptId>;

/// Deterministic stand-in for the NER service: case-insensitive, longest
/// match, whole-token lexicon scan.
class MockNerBackend final : public NerBackend {
public:
  /// Terms must be non-empty and lowercase; throws ValidationError otherwise.
  explicit MockNerBackend(Lexicon lexicon);
  nlohmann::json annotate(const std::vector<std::string>& texts) override;

  /// The response entry for a single text.
  nlohmann::json annotate_one(std::string_view text) const;

private:
  struct Term {
    std::u32string folded;
    ConceptId concept_id;
  };
  std::vector<Term> terms_;  // longest first
};

/// Reads "term<TAB>mesh:D..." lines.
Lexicon load_lexicon(const std::filesystem::path& path);

/// One response entry -> disease annotations over `submitted_text`.
/// Non-disease entries are dropped; "CUI-less" or an empty id list yields
/// NONE; the first parseable MeSH id wins. Throws ValidationError when a
/// span falls outside the text or the mention disagrees with the span.
std::vector<NormalizedAnnotation> parse_backend_response(const nlohmann::json& payload,
                                                         std::string_view submitted_text,
                                                         const std::string& record_id = {});

enum class OutcomeStatus { ok, failed };

struct AnnotationOutcome {
  std::string record_id;
  OutcomeStatus status = OutcomeStatus::ok;
  std::string text;  // what was submitted
  std::vector<NormalizedAnnotation> annotations;
  std::string error;
  std::size_t attempts = 0;
};

/// Splits records into submission-order chunks of batch_size and dispatches
/// them with at most max_inflight requests outstanding. A chunk that fails
/// as a whole is retried record by record, each record getting retry_budget
/// retries. Output order equals input order.
std::vector<AnnotationOutcome> annotate_batch(const std::vector<SurveyRecord>& records, NerBackend& backend,
                                              const BackendConfig& config);

nlohmann::ordered_json outcome_to_json(const AnnotationOutcome& outcome);
AnnotationOutcome outcome_from_json(const nlohmann::json& obj);
std::string write_outcomes(const std::vector<AnnotationOutcome>& outcomes);
/// Reads a predictions file written by write_outcomes.
std::vector<AnnotationOutcome> read_outcomes(std::string_view content);

}  // namespace pheno::annotate
