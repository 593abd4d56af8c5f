#include <algorithm>

#include "pheno/error.hpp"
#include "pheno/orchestrate.hpp"
#include "pheno/unicode.hpp"
#include "pheno/util.hpp"

namespace pheno::orchestrate {

using nlohmann::json;

// ---------------------------------------------------------------------------
// PromptSpec
// ---------------------------------------------------------------------------

PromptSpec PromptSpec::zero_shot_concept() { return {}; }

PromptSpec PromptSpec::zero_shot_mention() {
  PromptSpec s;
  s.strategy = Strategy::zero_shot_mention;
  return s;
}

PromptSpec PromptSpec::few_shot(std::size_t k) {
  PromptSpec s;
  s.strategy = Strategy::few_shot;
  s.shots = k;
  s.use_fsi = k > 0;
  return s;
}

PromptSpec PromptSpec::chain_of_thought(CotVariant variant, std::size_t shots, std::size_t retrieval_k) {
  PromptSpec s;
  s.strategy = Strategy::cot;
  s.cot = variant;
  s.use_fsi = variant == CotVariant::hybrid;
  s.shots = s.use_fsi ? shots : 0;
  s.use_rag = retrieval_k > 0;
  s.retrieval_k = retrieval_k;
  return s;
}

PromptSpec PromptSpec::rag_fsi(std::size_t retrieval_k, std::size_t shots) {
  PromptSpec s;
  s.strategy = Strategy::rag_fsi;
  s.use_rag = true;
  s.use_fsi = true;
  s.retrieval_k = retrieval_k;
  s.shots = shots;
  return s;
}

PromptSpec PromptSpec::rag_fsi_flags(bool use_rag, bool use_fsi, std::size_t retrieval_k, std::size_t shots) {
  PromptSpec s = rag_fsi(retrieval_k, shots);
  s.strategy = Strategy::rag_fsi_flags;
  s.use_rag = use_rag;
  s.use_fsi = use_fsi;
  return s;
}

std::string_view to_string(CotVariant variant) {
  switch (variant) {
    case CotVariant::none: return "none";
    case CotVariant::simple: return "simple";
    case CotVariant::strong: return "strong";
    case CotVariant::hybrid: return "hybrid";
  }
  return "none";
}

namespace {

std::optional<CotVariant> parse_cot(std::string_view name) {
  for (auto v : {CotVariant::none, CotVariant::simple, CotVariant::strong, CotVariant::hybrid}) {
    if (to_string(v) == name) return v;
  }
  return std::nullopt;
}

[[noreturn]] void unknown_strategy(std::string_view name) {
  std::string valid;
  for (const auto& n : PromptSpec::valid_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw ValidationError("unknown strategy \"" + std::string(name) + "\"; valid: " + valid);
}

}  // namespace

const std::vector<std::string>& PromptSpec::valid_names() {
  static const std::vector<std::string> names = {
      "zero-shot",  "zero-shot:concept", "zero-shot:mention", "fsi:<0|1|2|3|5>",
      "cot:<none|simple|strong|hybrid>", "rag-cot:<none|simple|strong|hybrid>", "rag-fsi", "rag-fsi-flags"};
  return names;
}

PromptSpec PromptSpec::parse(std::string_view name) {
  if (name == "zero-shot" || name == "zero-shot:concept") return zero_shot_concept();
  if (name == "zero-shot:mention") return zero_shot_mention();
  if (name == "rag-fsi") return rag_fsi();
  if (name == "rag-fsi-flags") return rag_fsi_flags(true, true);
  if (name.starts_with("fsi:")) {
    const auto k = name.substr(4);
    if (k.size() == 1 && k[0] >= '0' && k[0] <= '9') {
      auto spec = few_shot(static_cast<std::size_t>(k[0] - '0'));
      spec.validate();
      return spec;
    }
    unknown_strategy(name);
  }
  for (std::string_view prefix : {"cot:", "rag-cot:"}) {
    if (name.starts_with(prefix)) {
      if (auto v = parse_cot(name.substr(prefix.size()))) {
        return chain_of_thought(*v, 1, prefix == "rag-cot:" ? 3 : 0);
      }
      unknown_strategy(name);
    }
  }
  unknown_strategy(name);
}

std::string PromptSpec::name() const {
  switch (strategy) {
    case Strategy::zero_shot_concept: return "zero-shot:concept";
    case Strategy::zero_shot_mention: return "zero-shot:mention";
    case Strategy::few_shot: return "fsi:" + std::to_string(shots);
    case Strategy::cot: return std::string(use_rag ? "rag-cot:" : "cot:") + std::string(to_string(cot));
    case Strategy::rag_fsi: return "rag-fsi";
    case Strategy::rag_fsi_flags:
      return std::string("rag-fsi-flags(rag=") + (use_rag ? "on" : "off") + ",fsi=" + (use_fsi ? "on" : "off") + ")";
  }
  return "zero-shot:concept";
}

bool PromptSpec::retrieval_active() const { return use_rag; }
bool PromptSpec::examples_active() const { return use_fsi && shots > 0; }
std::size_t PromptSpec::example_count() const { return examples_active() ? shots : 0; }

void PromptSpec::validate() const {
  static constexpr std::size_t kAllowedShots[] = {0, 1, 2, 3, 5};
  if (std::find(std::begin(kAllowedShots), std::end(kAllowedShots), shots) == std::end(kAllowedShots)) {
    throw ValidationError("shot count " + std::to_string(shots) + " not in {0, 1, 2, 3, 5}");
  }
  if (use_rag && retrieval_k == 0) throw ValidationError("retrieval_k must be at least 1 when retrieval is on");
  if (strategy == Strategy::cot && cot == CotVariant::hybrid && shots == 0) {
    throw ValidationError("hybrid chain-of-thought needs at least one example");
  }
}

// ---------------------------------------------------------------------------
// Prompts
// ---------------------------------------------------------------------------

std::vector<FewShotExample> load_example_pool(std::string_view content) {
  std::vector<FewShotExample> pool;
  const auto lines = io::split_lines(content);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (io::trim(lines[i]).empty()) continue;
    const auto where = "line " + std::to_string(i + 1) + ": ";
    try {
      const auto obj = json::parse(lines[i]);
      FewShotExample ex;
      ex.question = obj.at("question").get<std::string>();
      ex.mention = obj.at("mention").get<std::string>();
      const auto id_text = obj.at("concept_id").get<std::string>();
      const auto id = ConceptId::parse(id_text);
      if (!id) throw ValidationError(where + "bad concept_id \"" + id_text + "\"");
      ex.concept_id = *id;
      ex.concept_name = obj.value("concept_name", std::string());
      ex.verdict = obj.at("verdict").get<std::string>();
      if (parse_verdict(ex.verdict).kind == VerdictKind::unparseable) {
        throw ValidationError(where + "expected verdict \"" + ex.verdict + "\" is neither AGREE nor DISAGREE");
      }
      pool.push_back(std::move(ex));
    } catch (const json::exception& e) {
      throw ValidationError(where + "malformed example: " + e.what());
    }
  }
  return pool;
}

std::vector<FewShotExample> select_few_shot(const std::vector<FewShotExample>& pool, std::size_t k, uint64_t seed) {
  if (k > pool.size()) {
    throw ValidationError("example pool holds " + std::to_string(pool.size()) + " examples, " + std::to_string(k) +
                          " requested");
  }
  std::vector<std::size_t> order(pool.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  SeededRng rng(seed);
  // Partial Fisher-Yates: the first k slots are the selection.
  for (std::size_t i = 0; i < k; ++i) std::swap(order[i], order[i + rng.below(order.size() - i)]);
  std::vector<FewShotExample> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(pool[order[i]]);
  return out;
}

std::string render_preceding_questions(const std::vector<std::string>& questions) {
  if (questions.empty()) return "(none)";
  std::string out;
  for (const auto& q : questions) {
    if (!out.empty()) out += '\n';
    out += "- " + q;
  }
  return out;
}

std::string render_documents(const std::vector<ontology::RagDocument>& docs,
                             const templates::TemplateRegistry& registry) {
  std::string items;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (i > 0) items += "\n\n";
    items += registry.render("document_item", {{"index", std::to_string(i + 1)}, {"body", docs[i].body}});
  }
  return registry.render("documents", {{"documents", items}});
}

namespace {

templates::Variables case_variables(const PromptContext& ctx) {
  return {
      {"preceding_questions", render_preceding_questions(ctx.record.preceding_questions)},
      {"question", ctx.record.question_text},
      {"answer", ctx.record.answer_text},
      {"mention", ctx.mention.surface},
      {"concept_id", ctx.backend_concept.str()},
      {"concept_name", ctx.backend_concept_name},
  };
}

std::string examples_section(const std::vector<FewShotExample>& examples,
                             const templates::TemplateRegistry& registry) {
  std::string items;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& ex = examples[i];
    if (i > 0) items += "\n\n";
    items += registry.render("example_item", {{"index", std::to_string(i + 1)},
                                              {"question", ex.question},
                                              {"mention", ex.mention},
                                              {"concept_name", ex.concept_name},
                                              {"concept_id", ex.concept_id.str()},
                                              {"verdict", ex.verdict}});
  }
  return registry.render("examples", {{"examples", items}});
}

[[noreturn]] void missing_section(std::string_view section) {
  throw ValidationError("prompt context lacks the required " + std::string(section) + " section");
}

}  // namespace

std::vector<PromptSection> build_prompt_sections(const PromptSpec& spec, const PromptContext& ctx,
                                                 const templates::TemplateRegistry& registry) {
  spec.validate();
  const bool mention_variant = spec.strategy == Strategy::zero_shot_mention;
  std::vector<PromptSection> sections;

  sections.push_back({"task", registry.get(mention_variant ? "task_concept_vs_mention" : "task_concept_vs_concept")});

  if (spec.retrieval_active()) {
    if (ctx.retrieved_docs.empty()) missing_section("retrieved_documents");
    sections.push_back({"documents", render_documents(ctx.retrieved_docs, registry)});
  }
  if (spec.examples_active()) {
    if (ctx.examples.empty()) missing_section("few_shot_examples");
    sections.push_back({"examples", examples_section(ctx.examples, registry)});
  }
  if (spec.strategy == Strategy::cot && spec.cot != CotVariant::none) {
    sections.push_back({"reasoning", registry.get(spec.cot == CotVariant::simple ? "cot_simple" : "cot_strong")});
  }
  if (ctx.mention.surface.empty()) missing_section("mention");
  sections.push_back({"case", registry.render(mention_variant ? "case_concept_vs_mention" : "case_concept_vs_concept",
                                              case_variables(ctx))});
  sections.push_back({"answer_format", registry.get("answer_format")});
  return sections;
}

std::string build_prompt(const PromptSpec& spec, const PromptContext& ctx,
                         const templates::TemplateRegistry& registry) {
  std::string prompt;
  for (const auto& section : build_prompt_sections(spec, ctx, registry)) {
    if (!prompt.empty()) prompt += "\n\n";
    prompt += section.text;
  }
  return prompt;
}

// ---------------------------------------------------------------------------
// Verdicts
// ---------------------------------------------------------------------------

std::string_view to_string(VerdictKind kind) {
  switch (kind) {
    case VerdictKind::agree: return "agree";
    case VerdictKind::disagree: return "disagree";
    case VerdictKind::unparseable: return "unparseable";
  }
  return "unparseable";
}

std::optional<VerdictKind> parse_verdict_kind(std::string_view name) {
  for (auto k : {VerdictKind::agree, VerdictKind::disagree, VerdictKind::unparseable}) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

std::optional<ConceptId> find_concept_id(std::string_view text) {
  auto lower_ascii = [](char c) { return c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c; };
  auto is_digit = [](char c) { return c >= '0' && c <= '9'; };
  constexpr std::string_view prefix = "mesh:";
  for (std::size_t i = 0; i + prefix.size() + 2 <= text.size(); ++i) {
    bool match = true;
    for (std::size_t k = 0; k < prefix.size() && match; ++k) match = lower_ascii(text[i + k]) == prefix[k];
    if (!match) continue;
    const std::size_t d = i + prefix.size();
    if (lower_ascii(text[d]) != 'd' || !is_digit(text[d + 1])) continue;
    std::size_t end = d + 1;
    while (end < text.size() && is_digit(text[end])) ++end;
    return ConceptId::mesh("mesh:D" + std::string(text.substr(d + 1, end - d - 1)));
  }
  return std::nullopt;
}

LlmVerdict parse_verdict(std::string_view text) {
  LlmVerdict verdict;
  verdict.raw_text = std::string(text);
  const auto decoded = unicode::decode(text);
  auto word = [](char32_t c) { return c == U'_' || unicode::is_word_char(c); };

  std::size_t i = 0;
  while (i < decoded.size()) {
    if (!word(decoded[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    std::string token;
    bool ascii = true;
    while (j < decoded.size() && word(decoded[j])) {
      const char32_t c = decoded[j];
      if (c >= 128) ascii = false;
      else token.push_back(static_cast<char>(c >= U'a' && c <= U'z' ? c - U'a' + U'A' : c));
      ++j;
    }
    if (ascii && (token == "AGREE" || token == "DISAGREE")) {
      verdict.kind = token == "AGREE" ? VerdictKind::agree : VerdictKind::disagree;
      if (verdict.kind == VerdictKind::disagree) verdict.proposal = find_concept_id(text);
      return verdict;
    }
    i = j;
  }
  return verdict;
}

bool detect_hallucination(const LlmVerdict& verdict, const ontology::OntologyStore& store) {
  return verdict.kind == VerdictKind::disagree && verdict.proposal && !verdict.proposal->is_none() &&
         !store.contains(*verdict.proposal);
}

}  // namespace pheno::orchestrate
