#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pheno/ontology.hpp"
#include "pheno/orchestrate.hpp"
#include "pheno/types.hpp"

namespace pheno::evaluate {

// ---------------------------------------------------------------------------
// Confusion metrics
// ---------------------------------------------------------------------------

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t tn = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + tn + fp + fn; }
  ConfusionCounts& operator+=(const ConfusionCounts& other);
  bool operator==(const ConfusionCounts&) const = default;
};

/// Each metric is absent when its denominator is zero.
struct MetricsReport {
  std::optional<double> recall;  // TPR
  std::optional<double> fpr;
  std::optional<double> tnr;
  std::optional<double> fnr;
  std::optional<double> precision;
  std::optional<double> f1;
  std::optional<double> accuracy;
};

MetricsReport compute_metrics(const ConfusionCounts& counts);

// ---------------------------------------------------------------------------
// Mention and concept agreement
// ---------------------------------------------------------------------------

struct MatchedPair {
  NormalizedAnnotation predicted;
  NormalizedAnnotation gold;
};

struct MentionMatch {
  std::vector<MatchedPair> pairs;
  ConfusionCounts counts;
};

/// Exact-span, one-to-one matching per record. A record with neither gold
/// nor predicted mentions adds one TN. Records present only in the gold
/// collection contribute their gold mentions as FN. Throws ValidationError
/// for predicted records missing from gold.
MentionMatch match_mentions(const AnnotationCollection& predicted, const AnnotationCollection& gold);

struct ConceptAccuracy {
  std::size_t correct = 0;
  std::size_t total = 0;
  std::optional<double> accuracy;
};

/// NONE matching NONE counts as correct.
ConceptAccuracy match_concepts(const std::vector<MatchedPair>& pairs);

// ---------------------------------------------------------------------------
// Text similarity
// ---------------------------------------------------------------------------

struct RougeScore {
  std::size_t n = 1;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Clipped n-gram overlap over lowercased word tokens. Throws
/// ValidationError when n == 0.
RougeScore rouge_n(std::string_view candidate, std::string_view reference, std::size_t n);

double coherence_score(std::string_view candidate, std::string_view reference,
                       const ontology::EmbeddingProvider& provider);

struct SummaryPair {
  std::string candidate;
  std::string reference;
};

/// Line-delimited {"candidate", "reference"}.
std::vector<SummaryPair> load_summary_pairs(std::string_view content);

/// Macro averages over the pairs; absent for an empty list.
std::optional<RougeScore> mean_rouge(const std::vector<SummaryPair>& pairs, std::size_t n);
std::optional<double> mean_coherence(const std::vector<SummaryPair>& pairs,
                                     const ontology::EmbeddingProvider& provider);

// ---------------------------------------------------------------------------
// Verdict scoring
// ---------------------------------------------------------------------------

/// One judged backend annotation as persisted by a strategy run.
struct VerdictRecord {
  std::string record_id;
  TextSpan span;
  ConceptId backend_concept;
  orchestrate::VerdictKind kind = orchestrate::VerdictKind::unparseable;
  std::optional<ConceptId> proposal;
  bool hallucinated = false;
};

VerdictRecord to_record(const orchestrate::JudgedAnnotation& judged);
/// Line-delimited {"record_id", "span", "backend_concept", "kind", "proposal", "hallucinated"}.
std::vector<VerdictRecord> read_verdicts(std::string_view content);

/// Concept after the verdict: the proposal when disagreeing with one, the
/// backend concept otherwise. Absent for unparseable verdicts.
std::optional<ConceptId> post_verdict_concept(const VerdictRecord& verdict);

struct AlignmentReport {
  double bern2_alignment_accuracy = 0.0;
  double gt_alignment_accuracy = 0.0;
};

/// The gold concept of a verdict is the gold annotation with the identical
/// span in the same record; a mention with no such gold is spurious, so only
/// a disagreement judges it correctly. Throws ValidationError for an empty
/// verdict list.
AlignmentReport alignment_accuracy(const std::vector<VerdictRecord>& verdicts, const AnnotationCollection& gold);

struct AlignmentConfusion {
  ConfusionCounts bern2;
  ConfusionCounts gt;
};

/// Binary views of the same judgments. BERN2: positive means the backend
/// concept is right; agreeing is predicting positive. GT: TP when the
/// post-verdict concept is the gold one, FP when it is not, FN when the
/// verdict is unparseable.
AlignmentConfusion alignment_confusion(const std::vector<VerdictRecord>& verdicts, const AnnotationCollection& gold);

std::optional<double> hallucination_rate(const std::vector<VerdictRecord>& verdicts);

/// Each value over the group maximum. Throws ValidationError when the list
/// is empty or no value is positive.
std::vector<std::pair<std::string, double>> normalised_performance(
    const std::vector<std::pair<std::string, double>>& values);

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

struct Table1Row {
  std::string task;
  ConfusionCounts counts;
  ConceptAccuracy nen;
};

struct Table2Row {
  std::string prompt;  // row group
  std::string model;
  std::optional<double> correct_answers;  // fractions
  std::optional<double> hallucination_rate;
};

struct Table3Row {
  std::string group;
  std::string model;
  MetricsReport bern2;
  MetricsReport gt;
};

struct Table4Row {
  std::string group;
  std::string model;
  std::optional<RougeScore> rouge1;
  std::optional<double> coherence;
  std::optional<double> bern2_alignment_accuracy;
  std::optional<double> gt_alignment_accuracy;
};

struct Table5Row {
  std::string run;
  std::optional<double> bern2_alignment_accuracy;
  std::optional<double> gt_alignment_accuracy;
};

struct Table6Row {
  std::string model;  // row group
  std::string variant;
  std::optional<double> true_positive;  // fractions of all judgments
  std::optional<double> false_negative;
  std::optional<double> normalised;     // filled by fill_normalised
};

struct Table7Row {
  std::string embedding;
  std::optional<RougeScore> rouge1;
  std::optional<double> coherence;
};

struct Report {
  std::vector<Table1Row> table1;
  std::vector<Table2Row> table2;
  std::vector<Table3Row> table3;
  std::vector<Table4Row> table4;
  std::vector<Table5Row> table5;
  std::vector<Table6Row> table6;
  std::vector<Table7Row> table7;
};

/// Normalises every present true-positive rate by the maximum across all
/// rows. Rows without a rate stay absent.
void fill_normalised(std::vector<Table6Row>& rows);

/// Table 6 rates from BERN2 alignment counts: TP and FN over all judgments.
Table6Row cot_row(std::string model, std::string variant, const ConfusionCounts& bern2);

struct RenderedReport {
  std::string markdown;
  /// (file name, contents), one per table, in table order.
  std::vector<std::pair<std::string, std::string>> csv;
};

/// Markdown rounds (percentages to 1 or 2 decimals, fractions to 2); CSVs
/// keep full precision. Absent values render "NR".
RenderedReport render_report(const Report& report);

/// Column headers of each CSV, in table order.
const std::vector<std::vector<std::string>>& csv_headers();

}  // namespace pheno::evaluate
