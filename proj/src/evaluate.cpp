#include "pheno/evaluate.hpp"

#include <algorithm>
#include <map>
#include <set>

#include <fmt/format.h>
#include <json.hpp>

#include "pheno/error.hpp"
#include "pheno/unicode.hpp"
#include "pheno/util.hpp"

namespace pheno::evaluate {

using nlohmann::json;
using orchestrate::VerdictKind;

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& other) {
  tp += other.tp;
  tn += other.tn;
  fp += other.fp;
  fn += other.fn;
  return *this;
}

namespace {

std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

MetricsReport compute_metrics(const ConfusionCounts& c) {
  MetricsReport m;
  m.recall = ratio(c.tp, c.tp + c.fn);
  m.fnr = ratio(c.fn, c.tp + c.fn);
  m.fpr = ratio(c.fp, c.tn + c.fp);
  m.tnr = ratio(c.tn, c.tn + c.fp);
  m.precision = ratio(c.tp, c.tp + c.fp);
  m.accuracy = ratio(c.tp + c.tn, c.total());
  if (m.precision && m.recall && *m.precision + *m.recall > 0) {
    m.f1 = 2 * *m.precision * *m.recall / (*m.precision + *m.recall);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Agreement
// ---------------------------------------------------------------------------

MentionMatch match_mentions(const AnnotationCollection& predicted, const AnnotationCollection& gold) {
  std::vector<std::string> unknown;
  for (const auto& [id, _] : predicted) {
    if (!gold.contains(id)) unknown.push_back(id);
  }
  if (!unknown.empty()) {
    std::string list;
    for (const auto& id : unknown) list += (list.empty() ? "" : ", ") + id;
    throw ValidationError("predicted records missing from gold: " + list);
  }

  static const std::vector<NormalizedAnnotation> kEmpty;
  MentionMatch result;
  for (const auto& [id, gold_list] : gold) {
    const auto it = predicted.find(id);
    const auto& pred_list = it == predicted.end() ? kEmpty : it->second;
    if (gold_list.empty() && pred_list.empty()) {
      ++result.counts.tn;
      continue;
    }
    std::vector<bool> used(gold_list.size(), false);
    for (const auto& p : pred_list) {
      bool matched = false;
      for (std::size_t g = 0; g < gold_list.size(); ++g) {
        if (!used[g] && gold_list[g].span == p.span) {
          used[g] = true;
          result.pairs.push_back({p, gold_list[g]});
          matched = true;
          break;
        }
      }
      ++(matched ? result.counts.tp : result.counts.fp);
    }
    result.counts.fn += static_cast<std::size_t>(std::count(used.begin(), used.end(), false));
  }
  return result;
}

ConceptAccuracy match_concepts(const std::vector<MatchedPair>& pairs) {
  ConceptAccuracy acc;
  acc.total = pairs.size();
  for (const auto& pair : pairs) {
    if (pair.predicted.concept_id == pair.gold.concept_id) ++acc.correct;
  }
  acc.accuracy = ratio(acc.correct, acc.total);
  return acc;
}

// ---------------------------------------------------------------------------
// Text similarity
// ---------------------------------------------------------------------------

namespace {

std::map<std::vector<std::string>, std::size_t> ngram_counts(const std::vector<std::string>& tokens, std::size_t n) {
  std::map<std::vector<std::string>, std::size_t> counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                      tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

double harmonic(double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; }

}  // namespace

RougeScore rouge_n(std::string_view candidate, std::string_view reference, std::size_t n) {
  if (n == 0) throw ValidationError("ROUGE gram order must be at least 1");
  RougeScore score;
  score.n = n;
  const auto cand = unicode::word_tokens(candidate);
  const auto ref = unicode::word_tokens(reference);
  if (cand.size() < n || ref.size() < n) return score;

  const auto cand_counts = ngram_counts(cand, n);
  const auto ref_counts = ngram_counts(ref, n);
  std::size_t overlap = 0;
  for (const auto& [gram, count] : cand_counts) {
    if (auto it = ref_counts.find(gram); it != ref_counts.end()) overlap += std::min(count, it->second);
  }
  score.precision = static_cast<double>(overlap) / static_cast<double>(cand.size() - n + 1);
  score.recall = static_cast<double>(overlap) / static_cast<double>(ref.size() - n + 1);
  score.f1 = harmonic(score.precision, score.recall);
  return score;
}

double coherence_score(std::string_view candidate, std::string_view reference,
                       const ontology::EmbeddingProvider& provider) {
  const auto a = provider.embed(candidate);
  const auto b = provider.embed(reference);
  return ontology::cosine(a, b);
}

std::vector<SummaryPair> load_summary_pairs(std::string_view content) {
  std::vector<SummaryPair> pairs;
  const auto lines = io::split_lines(content);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (io::trim(lines[i]).empty()) continue;
    try {
      const auto obj = json::parse(lines[i]);
      pairs.push_back({obj.at("candidate").get<std::string>(), obj.at("reference").get<std::string>()});
    } catch (const json::exception& e) {
      throw ValidationError("line " + std::to_string(i + 1) + ": malformed summary pair: " + e.what());
    }
  }
  return pairs;
}

std::optional<RougeScore> mean_rouge(const std::vector<SummaryPair>& pairs, std::size_t n) {
  if (pairs.empty()) return std::nullopt;
  RougeScore mean;
  mean.n = n;
  for (const auto& pair : pairs) {
    const auto s = rouge_n(pair.candidate, pair.reference, n);
    mean.precision += s.precision;
    mean.recall += s.recall;
    mean.f1 += s.f1;
  }
  const auto count = static_cast<double>(pairs.size());
  mean.precision /= count;
  mean.recall /= count;
  mean.f1 /= count;
  return mean;
}

std::optional<double> mean_coherence(const std::vector<SummaryPair>& pairs,
                                     const ontology::EmbeddingProvider& provider) {
  if (pairs.empty()) return std::nullopt;
  double sum = 0.0;
  for (const auto& pair : pairs) sum += coherence_score(pair.candidate, pair.reference, provider);
  return sum / static_cast<double>(pairs.size());
}

// ---------------------------------------------------------------------------
// Verdicts
// ---------------------------------------------------------------------------

VerdictRecord to_record(const orchestrate::JudgedAnnotation& judged) {
  return {judged.annotation.record_id, judged.annotation.span, judged.annotation.concept_id, judged.verdict.kind,
          judged.verdict.proposal, judged.verdict.hallucinated};
}

std::vector<VerdictRecord> read_verdicts(std::string_view content) {
  std::vector<VerdictRecord> verdicts;
  const auto lines = io::split_lines(content);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (io::trim(lines[i]).empty()) continue;
    const auto where = "line " + std::to_string(i + 1) + ": ";
    try {
      const auto obj = json::parse(lines[i]);
      VerdictRecord v;
      v.record_id = obj.at("record_id").get<std::string>();
      const auto& span = obj.at("span");
      if (!span.is_array() || span.size() != 2) throw ValidationError(where + "span must be [begin, end]");
      v.span = {span[0].get<std::size_t>(), span[1].get<std::size_t>()};
      const auto backend = ConceptId::parse(obj.at("backend_concept").get<std::string>());
      if (!backend) throw ValidationError(where + "bad backend_concept");
      v.backend_concept = *backend;
      const auto kind = orchestrate::parse_verdict_kind(obj.at("kind").get<std::string>());
      if (!kind) throw ValidationError(where + "unknown verdict kind");
      v.kind = *kind;
      if (const auto it = obj.find("proposal"); it != obj.end() && !it->is_null()) {
        v.proposal = ConceptId::parse(it->get<std::string>());
        if (!v.proposal) throw ValidationError(where + "bad proposal");
      }
      v.hallucinated = obj.value("hallucinated", false);
      verdicts.push_back(std::move(v));
    } catch (const json::exception& e) {
      throw ValidationError(where + "malformed verdict: " + e.what());
    }
  }
  return verdicts;
}

std::optional<ConceptId> post_verdict_concept(const VerdictRecord& verdict) {
  switch (verdict.kind) {
    case VerdictKind::agree: return verdict.backend_concept;
    case VerdictKind::disagree: return verdict.proposal ? *verdict.proposal : verdict.backend_concept;
    case VerdictKind::unparseable: return std::nullopt;
  }
  return std::nullopt;
}

namespace {

std::optional<ConceptId> gold_concept(const VerdictRecord& v, const AnnotationCollection& gold) {
  const auto it = gold.find(v.record_id);
  if (it == gold.end()) return std::nullopt;
  for (const auto& g : it->second) {
    if (g.span == v.span) return g.concept_id;
  }
  return std::nullopt;
}

}  // namespace

AlignmentConfusion alignment_confusion(const std::vector<VerdictRecord>& verdicts, const AnnotationCollection& gold) {
  AlignmentConfusion c;
  for (const auto& v : verdicts) {
    const auto truth = gold_concept(v, gold);
    const bool backend_right = truth && *truth == v.backend_concept;
    switch (v.kind) {
      case VerdictKind::agree: ++(backend_right ? c.bern2.tp : c.bern2.fp); break;
      case VerdictKind::disagree: ++(backend_right ? c.bern2.fn : c.bern2.tn); break;
      case VerdictKind::unparseable: ++(backend_right ? c.bern2.fn : c.bern2.fp); break;
    }
    const auto final_concept = post_verdict_concept(v);
    if (!final_concept) {
      ++c.gt.fn;
    } else {
      ++(truth && *truth == *final_concept ? c.gt.tp : c.gt.fp);
    }
  }
  return c;
}

AlignmentReport alignment_accuracy(const std::vector<VerdictRecord>& verdicts, const AnnotationCollection& gold) {
  if (verdicts.empty()) throw ValidationError("alignment accuracy of an empty verdict list");
  std::size_t bern2 = 0;
  std::size_t gt = 0;
  for (const auto& v : verdicts) {
    const auto truth = gold_concept(v, gold);
    const bool backend_right = truth && *truth == v.backend_concept;
    if ((v.kind == VerdictKind::agree && backend_right) || (v.kind == VerdictKind::disagree && !backend_right)) {
      ++bern2;
    }
    const auto final_concept = post_verdict_concept(v);
    if (final_concept && truth && *final_concept == *truth) ++gt;
  }
  const auto n = static_cast<double>(verdicts.size());
  return {static_cast<double>(bern2) / n, static_cast<double>(gt) / n};
}

std::optional<double> hallucination_rate(const std::vector<VerdictRecord>& verdicts) {
  const auto flagged = std::count_if(verdicts.begin(), verdicts.end(), [](const auto& v) { return v.hallucinated; });
  return ratio(static_cast<std::size_t>(flagged), verdicts.size());
}

std::vector<std::pair<std::string, double>> normalised_performance(
    const std::vector<std::pair<std::string, double>>& values) {
  double max = 0.0;
  for (const auto& [_, v] : values) max = std::max(max, v);
  if (!(max > 0.0)) throw ValidationError("normalised performance needs at least one positive value");
  std::vector<std::pair<std::string, double>> out;
  out.reserve(values.size());
  for (const auto& [label, v] : values) out.emplace_back(label, v / max);
  return out;
}

void fill_normalised(std::vector<Table6Row>& rows) {
  std::vector<std::pair<std::string, double>> values;
  for (const auto& row : rows) {
    if (row.true_positive) values.emplace_back(row.model + "/" + row.variant, *row.true_positive);
  }
  if (values.empty()) return;
  const auto normalised = normalised_performance(values);
  std::size_t k = 0;
  for (auto& row : rows) {
    if (row.true_positive) row.normalised = normalised[k++].second;
  }
}

Table6Row cot_row(std::string model, std::string variant, const ConfusionCounts& bern2) {
  Table6Row row{std::move(model), std::move(variant), ratio(bern2.tp, bern2.total()), ratio(bern2.fn, bern2.total()),
                std::nullopt};
  return row;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

namespace {

constexpr std::string_view kAbsent = "NR";

struct Cell {
  std::optional<double> value;
  double scale = 1.0;  // 100 for percentages
  int decimals = 2;
};

Cell pct(std::optional<double> v, int decimals) { return {v, 100.0, decimals}; }
Cell frac(std::optional<double> v) { return {v, 1.0, 2}; }

std::string show(const Cell& c) {
  if (!c.value) return std::string(kAbsent);
  return fmt::format("{:.{}f}", *c.value * c.scale, c.decimals);
}

std::string full(const Cell& c) {
  if (!c.value) return std::string(kAbsent);
  return fmt::format("{}", *c.value * c.scale);
}

std::string csv_field(std::string_view text) {
  if (text.find_first_of(",\"\n") == std::string_view::npos) return std::string(text);
  std::string out = "\"";
  for (char ch : text) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

std::string md_field(std::string_view text) {
  std::string out;
  for (char ch : text) {
    if (ch == '|') out += '\\';
    out += ch;
  }
  return out;
}

struct TableBuilder {
  TableBuilder(std::string title_, std::vector<std::string> md_headers_, std::vector<std::string> csv_headers_)
      : title(std::move(title_)), md_headers(std::move(md_headers_)), csv_headers(std::move(csv_headers_)) {}

  std::string title;
  std::vector<std::string> md_headers;
  std::vector<std::string> csv_headers;
  std::string md;
  std::string csv;
  std::string current_group;

  void begin() {
    md = "## " + title + "\n\n|";
    for (const auto& h : md_headers) md += " " + h + " |";
    md += "\n|";
    for (std::size_t i = 0; i < md_headers.size(); ++i) md += i == 0 ? " --- |" : " ---: |";
    md += "\n";
    for (std::size_t i = 0; i < csv_headers.size(); ++i) csv += (i ? "," : "") + csv_headers[i];
    csv += "\n";
  }

  void group(const std::string& name) {
    if (name.empty() || name == current_group) return;
    current_group = name;
    md += "| **" + md_field(name) + "** |";
    for (std::size_t i = 1; i < md_headers.size(); ++i) md += " |";
    md += "\n";
  }

  void row(const std::vector<std::string>& labels, std::string_view md_label, const std::vector<Cell>& cells,
           const std::vector<std::string>& extra_csv = {}) {
    md += "| " + md_field(md_label) + " |";
    for (const auto& c : cells) md += " " + show(c) + " |";
    md += "\n";
    std::string line;
    for (const auto& l : labels) line += (line.empty() ? "" : ",") + csv_field(l);
    for (const auto& c : cells) line += "," + full(c);
    for (const auto& e : extra_csv) line += "," + e;
    csv += line + "\n";
  }

  void finish(std::size_t rows) {
    if (rows == 0) {
      md += "| (no runs) |";
      for (std::size_t i = 1; i < md_headers.size(); ++i) md += " |";
      md += "\n";
    }
    md += "\n";
  }
};

std::optional<double> opt_rouge(const std::optional<RougeScore>& s, double RougeScore::*field) {
  if (!s) return std::nullopt;
  return (*s).*field;
}

}  // namespace

const std::vector<std::vector<std::string>>& csv_headers() {
  static const std::vector<std::vector<std::string>> headers = {
      {"task", "ner_f1", "ner_accuracy", "ner_true_positive", "ner_true_negative", "ner_false_positive",
       "ner_false_negative", "nen_accuracy", "tp", "tn", "fp", "fn", "nen_correct", "nen_total"},
      {"prompt", "model", "correct_answers", "hallucination_rate"},
      {"group", "model", "bern2_f1", "bern2_p", "bern2_r", "bern2_a", "gt_f1", "gt_p", "gt_r", "gt_a"},
      {"group", "model", "rouge1_f1", "rouge1_p", "rouge1_r", "coherence", "bern2_alignment_accuracy",
       "gt_alignment_accuracy"},
      {"run", "bern2_alignment_accuracy", "gt_alignment_accuracy"},
      {"model", "variant", "normalised_performance", "true_positive", "false_negative"},
      {"embedding", "rouge1_f1", "rouge1_p", "rouge1_r", "coherence"},
  };
  return headers;
}

RenderedReport render_report(const Report& report) {
  const auto& headers = csv_headers();
  RenderedReport out;
  out.markdown =
      "# Phenotyping evaluation report\n\nNR = not recorded. Spans index the question and answer joined by one "
      "space, or the answer alone when there is no question.\n\n";
  auto emit = [&](TableBuilder& t, const std::string& file) {
    out.markdown += t.md;
    out.csv.emplace_back(file, t.csv);
  };

  {
    TableBuilder t{"Table 1. NER and NEN against ground truth",
                   {"Task", "NER F1 (%)", "NER accuracy (%)", "NER true positive (%)", "NER true negative (%)",
                    "NER false positive (%)", "NER false negative (%)", "NEN accuracy (%)"},
                   headers[0]};
    t.begin();
    for (const auto& r : report.table1) {
      const auto m = compute_metrics(r.counts);
      t.row({r.task}, r.task,
            {pct(m.f1, 1), pct(m.accuracy, 1), pct(m.recall, 1), pct(m.tnr, 1), pct(m.fpr, 1), pct(m.fnr, 1),
             pct(r.nen.accuracy, 1)},
            {std::to_string(r.counts.tp), std::to_string(r.counts.tn), std::to_string(r.counts.fp),
             std::to_string(r.counts.fn), std::to_string(r.nen.correct), std::to_string(r.nen.total)});
    }
    t.finish(report.table1.size());
    emit(t, "table1_ner_nen.csv");
  }
  {
    TableBuilder t{"Table 2. Zero-shot prompting", {"Prompt / model", "correct answers (%)", "hallucination rate (%)"},
                   headers[1]};
    t.begin();
    for (const auto& r : report.table2) {
      t.group(r.prompt);
      t.row({r.prompt, r.model}, r.model, {pct(r.correct_answers, 2), pct(r.hallucination_rate, 2)});
    }
    t.finish(report.table2.size());
    emit(t, "table2_zero_shot.csv");
  }
  {
    TableBuilder t{"Table 3. Alignment of fine-tuned model outputs",
                   {"Model", "BERN2 alignment F1 (%)", "BERN2 alignment P (%)", "BERN2 alignment R (%)",
                    "BERN2 alignment A (%)", "GT alignment F1 (%)", "GT alignment P (%)", "GT alignment R (%)",
                    "GT alignment A (%)"},
                   headers[2]};
    t.begin();
    for (const auto& r : report.table3) {
      t.group(r.group);
      t.row({r.group, r.model}, r.model,
            {pct(r.bern2.f1, 2), pct(r.bern2.precision, 2), pct(r.bern2.recall, 2), pct(r.bern2.accuracy, 2),
             pct(r.gt.f1, 2), pct(r.gt.precision, 2), pct(r.gt.recall, 2), pct(r.gt.accuracy, 2)});
    }
    t.finish(report.table3.size());
    emit(t, "table3_fine_tuned.csv");
  }
  {
    TableBuilder t{"Table 4. Few-shot inference with retrieval",
                   {"Model", "ROUGE-1 F1", "ROUGE-1 P", "ROUGE-1 R", "Coherence", "BERN2 alignment accuracy",
                    "GT alignment accuracy"},
                   headers[3]};
    t.begin();
    for (const auto& r : report.table4) {
      t.group(r.group);
      t.row({r.group, r.model}, r.model,
            {frac(opt_rouge(r.rouge1, &RougeScore::f1)), frac(opt_rouge(r.rouge1, &RougeScore::precision)),
             frac(opt_rouge(r.rouge1, &RougeScore::recall)), frac(r.coherence), frac(r.bern2_alignment_accuracy),
             frac(r.gt_alignment_accuracy)});
    }
    t.finish(report.table4.size());
    emit(t, "table4_rag_fsi.csv");
  }
  {
    TableBuilder t{"Table 5. Retrieval few-shot inference with binary flags",
                   {"Run", "BERN2 alignment accuracy", "GT alignment accuracy"}, headers[4]};
    t.begin();
    for (const auto& r : report.table5) {
      t.row({r.run}, r.run, {frac(r.bern2_alignment_accuracy), frac(r.gt_alignment_accuracy)});
    }
    t.finish(report.table5.size());
    emit(t, "table5_binary_flags.csv");
  }
  {
    TableBuilder t{"Table 6. Chain-of-thought prompting",
                   {"Model / variant", "normalised performance", "true positive (%)", "false negative (%)"},
                   headers[5]};
    t.begin();
    for (const auto& r : report.table6) {
      t.group(r.model);
      t.row({r.model, r.variant}, r.variant, {frac(r.normalised), pct(r.true_positive, 2), pct(r.false_negative, 2)});
    }
    t.finish(report.table6.size());
    emit(t, "table6_cot.csv");
  }
  {
    TableBuilder t{"Table 7. Embeddings", {"Embedding", "ROUGE-1 F1", "ROUGE-1 P", "ROUGE-1 R", "coherence"},
                   headers[6]};
    t.begin();
    for (const auto& r : report.table7) {
      t.row({r.embedding}, r.embedding,
            {frac(opt_rouge(r.rouge1, &RougeScore::f1)), frac(opt_rouge(r.rouge1, &RougeScore::precision)),
             frac(opt_rouge(r.rouge1, &RougeScore::recall)), frac(r.coherence)});
    }
    t.finish(report.table7.size());
    emit(t, "table7_embeddings.csv");
  }
  return out;
}

}  // namespace pheno::evaluate
