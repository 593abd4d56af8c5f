#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pheno/ontology.hpp"
#include "pheno/templates.hpp"
#include "pheno/types.hpp"

namespace pheno::orchestrate {

// ---------------------------------------------------------------------------
// Strategy configuration
// ---------------------------------------------------------------------------

enum class Strategy { zero_shot_concept, zero_shot_mention, few_shot, cot, rag_fsi, rag_fsi_flags };
enum class CotVariant { none, simple, strong, hybrid };

struct PromptSpec {
  Strategy strategy = Strategy::zero_shot_concept;
  CotVariant cot = CotVariant::none;
  std::size_t shots = 0;        // few-shot examples, one of {0, 1, 2, 3, 5}
  std::size_t retrieval_k = 0;  // documents per prompt when retrieval is on
  bool use_rag = false;
  bool use_fsi = false;

  static PromptSpec zero_shot_concept();
  static PromptSpec zero_shot_mention();
  static PromptSpec few_shot(std::size_t k);
  /// hybrid adds `shots` examples; `retrieval_k` > 0 grounds any variant.
  static PromptSpec chain_of_thought(CotVariant variant, std::size_t shots = 1, std::size_t retrieval_k = 0);
  static PromptSpec rag_fsi(std::size_t retrieval_k = 3, std::size_t shots = 5);
  static PromptSpec rag_fsi_flags(bool use_rag, bool use_fsi, std::size_t retrieval_k = 3, std::size_t shots = 5);

  /// Parses CLI names: zero-shot[:concept|:mention], fsi:<k>, cot:<variant>,
  /// rag-cot:<variant>, rag-fsi, rag-fsi-flags. Throws ValidationError.
  static PromptSpec parse(std::string_view name);
  static const std::vector<std::string>& valid_names();
  std::string name() const;

  bool retrieval_active() const;
  bool examples_active() const;
  /// Number of few-shot examples the prompt carries.
  std::size_t example_count() const;
  /// Throws ValidationError on out-of-range shot counts or a zero
  /// retrieval depth with retrieval on.
  void validate() const;
};

std::string_view to_string(CotVariant variant);

// ---------------------------------------------------------------------------
// Prompt construction
// ---------------------------------------------------------------------------

struct FewShotExample {
  std::string question;
  std::string mention;
  ConceptId concept_id;
  std::string concept_name;
  std::string verdict;  // e.g. "AGREE" or "DISAGREE mesh:D003920"

  bool operator==(const FewShotExample&) const = default;
};

/// Line-delimited {"question", "mention", "concept_id", "concept_name", "verdict"}.
/// Every verdict must parse as AGREE or DISAGREE.
std::vector<FewShotExample> load_example_pool(std::string_view content);

/// k distinct examples in seeded selection order; k == 0 gives none.
std::vector<FewShotExample> select_few_shot(const std::vector<FewShotExample>& pool, std::size_t k, uint64_t seed);

struct PromptContext {
  SurveyRecord record;
  NormalizedAnnotation mention;
  ConceptId backend_concept;
  std::string backend_concept_name;
  std::vector<ontology::RagDocument> retrieved_docs;
  std::vector<FewShotExample> examples;
};

struct PromptSection {
  std::string name;  // task, documents, examples, reasoning, case, answer_format
  std::string text;
};

/// Sections in fixed order: task, documents, examples, reasoning, case,
/// answer format. Sections whose flag is off are omitted; a section whose
/// flag is on but whose context is empty throws ValidationError naming it.
std::vector<PromptSection> build_prompt_sections(const PromptSpec& spec, const PromptContext& ctx,
                                                 const templates::TemplateRegistry& registry =
                                                     templates::TemplateRegistry::builtin());
std::string build_prompt(const PromptSpec& spec, const PromptContext& ctx,
                         const templates::TemplateRegistry& registry = templates::TemplateRegistry::builtin());

/// "- q" per line, or "(none)".
std::string render_preceding_questions(const std::vector<std::string>& questions);
/// Numbered document items under the documents header.
std::string render_documents(const std::vector<ontology::RagDocument>& docs,
                             const templates::TemplateRegistry& registry = templates::TemplateRegistry::builtin());

// ---------------------------------------------------------------------------
// Verdicts
// ---------------------------------------------------------------------------

enum class VerdictKind { agree, disagree, unparseable };
std::string_view to_string(VerdictKind kind);
std::optional<VerdictKind> parse_verdict_kind(std::string_view name);

struct LlmVerdict {
  VerdictKind kind = VerdictKind::unparseable;
  std::optional<ConceptId> proposal;  // only with disagree
  std::string raw_text;
  bool hallucinated = false;
  std::string error;  // backend failure detail, if any

  bool operator==(const LlmVerdict&) const = default;
};

/// First "mesh:D<digits>" in the text (prefix case-insensitive), canonicalized.
std::optional<ConceptId> find_concept_id(std::string_view text);

/// Total: the first standalone AGREE/DISAGREE token (any case) decides the
/// kind; a disagreement carries the first concept id found in the text.
LlmVerdict parse_verdict(std::string_view text);

/// True iff the verdict proposes a concept missing from the store.
bool detect_hallucination(const LlmVerdict& verdict, const ontology::OntologyStore& store);

// ---------------------------------------------------------------------------
// LLM backends
// ---------------------------------------------------------------------------

struct LlmParams {
  int max_tokens = 512;
  double temperature = 0.0;
};

class LlmBackend {
public:
  virtual ~LlmBackend() = default;
  virtual const std::string& name() const = 0;
  /// Throws BackendError on failure. Must tolerate concurrent calls.
  virtual std::string complete(std::string_view prompt, const LlmParams& params) = 0;
};

/// {"prompt", "max_tokens", "temperature"} -> {"text"}. Bearer token from
/// PHENO_LLM_TOKEN when set.
class HttpLlmBackend final : public LlmBackend {
public:
  HttpLlmBackend(std::string name, std::string endpoint,
                 std::chrono::milliseconds timeout = std::chrono::milliseconds(60000));
  const std::string& name() const override { return name_; }
  std::string complete(std::string_view prompt, const LlmParams& params) override;

private:
  std::string name_;
  std::string endpoint_;
  std::chrono::milliseconds timeout_;
};

/// Answers from an ordered list of (regex, response) rules; the first rule
/// whose pattern is found in the prompt wins. No match is a backend failure.
class ScriptedLlmBackend final : public LlmBackend {
public:
  struct Rule {
    std::string pattern;
    std::string response;
  };

  explicit ScriptedLlmBackend(std::vector<Rule> rules, std::string name = "scripted");
  /// Line-delimited {"pattern", "response"}.
  static std::vector<Rule> load_rules(const std::filesystem::path& path);

  const std::string& name() const override { return name_; }
  std::string complete(std::string_view prompt, const LlmParams& params) override;

  std::size_t calls() const;

private:
  std::string name_;
  std::vector<Rule> rules_;
  std::vector<std::regex> compiled_;
  mutable std::mutex mutex_;
  std::size_t calls_ = 0;
};

// ---------------------------------------------------------------------------
// Strategy runs
// ---------------------------------------------------------------------------

struct RunOptions {
  PromptSpec spec;
  LlmParams params;
  std::size_t retry_budget = 1;
  std::size_t max_inflight = 1;
  uint64_t seed = 0;
};

struct JudgedAnnotation {
  NormalizedAnnotation annotation;
  LlmVerdict verdict;
  std::string prompt;
};

struct StrategyInputs {
  const std::vector<SurveyRecord>& records;
  const ontology::OntologyStore& store;
  /// Required when the prompt turns retrieval on.
  const ontology::Retriever* retriever = nullptr;
  /// Required when the prompt carries examples.
  const std::vector<FewShotExample>* example_pool = nullptr;
  const templates::TemplateRegistry& templates = templates::TemplateRegistry::builtin();
};

/// Judges every backend annotation, in order. Retrieval queries use the
/// mention surface plus the question; one example set is drawn per run.
/// Backend failures after retries become unparseable verdicts.
std::vector<JudgedAnnotation> run_strategy(const StrategyInputs& inputs,
                                           const std::vector<NormalizedAnnotation>& annotations,
                                           const RunOptions& options, LlmBackend& llm);

/// Context for one annotation, with the backend concept's name resolved
/// from the store.
PromptContext make_context(const SurveyRecord& record, const NormalizedAnnotation& annotation,
                           const ontology::OntologyStore& store);

struct ChainResult {
  LlmVerdict verdict;
  /// The concept the chain settles on: the generator's proposal when the
  /// evaluator agrees, the evaluator's counter-proposal otherwise.
  std::optional<ConceptId> accepted;
  std::string generator_text;
  bool evaluator_called = false;
};

/// The generator proposes a concept for the mention; the evaluator judges
/// that proposal with an agreement prompt built from `spec`. Only the
/// generator's answer (not its reasoning) reaches the evaluator.
ChainResult chain_validate(LlmBackend& generator, LlmBackend& evaluator, const PromptContext& ctx,
                           const PromptSpec& spec, const ontology::OntologyStore* store = nullptr,
                           const LlmParams& params = {},
                           const templates::TemplateRegistry& registry = templates::TemplateRegistry::builtin());

nlohmann::ordered_json verdict_to_json(const JudgedAnnotation& judged);
std::string write_verdicts(const std::vector<JudgedAnnotation>& judged);

// ---------------------------------------------------------------------------
// RAFT data preparation
// ---------------------------------------------------------------------------

struct RaftQuestion {
  std::string question;
  ConceptId gold;
};

struct RaftDatapoint {
  std::string question;
  ontology::RagDocument oracle;
  std::vector<ontology::RagDocument> distractors;
  std::string cot_answer;

  bool operator==(const RaftDatapoint&) const = default;
};

/// Line-delimited {"question", "concept_id"}.
std::vector<RaftQuestion> load_raft_questions(std::string_view content);

/// Reasoning steps quoting the oracle's name and id, ending "ANSWER: <id>".
std::string render_cot_answer(const ontology::OntologyConcept& concept_entry, std::string_view question,
                              const templates::TemplateRegistry& registry = templates::TemplateRegistry::builtin());

/// Distractors are the n nearest non-oracle concepts by embedding (hard
/// negatives) when `index` is given, else a seeded random draw.
std::vector<RaftDatapoint> build_raft_dataset(const ontology::OntologyStore& store,
                                              const std::vector<RaftQuestion>& questions, std::size_t n_distractors,
                                              uint64_t seed, const ontology::VectorIndex* index,
                                              const templates::TemplateRegistry& registry =
                                                  templates::TemplateRegistry::builtin());

/// Throws ValidationError if any datapoint has the oracle among its
/// distractors, a repeated distractor, or a distractor count other than n.
void check_raft_invariants(const std::vector<RaftDatapoint>& dataset, std::size_t n_distractors);

std::string write_raft(const std::vector<RaftDatapoint>& dataset);

}  // namespace pheno::orchestrate
