#include <map>

#include "pheno/error.hpp"
#include "pheno/http.hpp"
#include "pheno/orchestrate.hpp"
#include "pheno/util.hpp"

namespace pheno::orchestrate {

using nlohmann::json;
using nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

HttpLlmBackend::HttpLlmBackend(std::string name, std::string endpoint, std::chrono::milliseconds timeout)
    : name_(std::move(name)), endpoint_(std::move(endpoint)), timeout_(timeout) {}

std::string HttpLlmBackend::complete(std::string_view prompt, const LlmParams& params) {
  const json body = {{"prompt", prompt}, {"max_tokens", params.max_tokens}, {"temperature", params.temperature}};
  try {
    const auto reply = http::post_json(endpoint_, body, timeout_, "PHENO_LLM_TOKEN");
    if (!reply.is_object() || !reply.contains("text") || !reply["text"].is_string()) {
      throw BackendError("reply lacks a \"text\" string");
    }
    return reply["text"].get<std::string>();
  } catch (const BackendError& e) {
    throw BackendError("llm " + name_ + ": " + e.what());
  }
}

ScriptedLlmBackend::ScriptedLlmBackend(std::vector<Rule> rules, std::string name)
    : name_(std::move(name)), rules_(std::move(rules)) {
  for (const auto& rule : rules_) {
    try {
      compiled_.emplace_back(rule.pattern, std::regex::ECMAScript);
    } catch (const std::regex_error& e) {
      throw ValidationError("bad scripted pattern \"" + rule.pattern + "\": " + e.what());
    }
  }
}

std::vector<ScriptedLlmBackend::Rule> ScriptedLlmBackend::load_rules(const std::filesystem::path& path) {
  std::vector<Rule> rules;
  const auto lines = io::read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (io::trim(lines[i]).empty()) continue;
    try {
      const auto obj = json::parse(lines[i]);
      rules.push_back({obj.at("pattern").get<std::string>(), obj.at("response").get<std::string>()});
    } catch (const json::exception& e) {
      throw ValidationError(path.string() + " line " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return rules;
}

std::string ScriptedLlmBackend::complete(std::string_view prompt, const LlmParams&) {
  {
    std::lock_guard lock(mutex_);
    ++calls_;
  }
  for (std::size_t i = 0; i < rules_.size(); ++i) {
    if (std::regex_search(prompt.begin(), prompt.end(), compiled_[i])) return rules_[i].response;
  }
  throw BackendError("llm " + name_ + ": no scripted response matches the prompt");
}

std::size_t ScriptedLlmBackend::calls() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

namespace {

std::string concept_name(const ConceptId& id, const ontology::OntologyStore& store) {
  if (id.is_none()) return "no concept";
  if (const auto* c = store.find(id)) return c->preferred_name;
  return "unknown concept";
}

struct Completion {
  std::optional<std::string> text;
  std::string error;
};

Completion complete_with_retries(LlmBackend& llm, const std::string& prompt, const LlmParams& params,
                                 std::size_t retry_budget) {
  Completion out;
  for (std::size_t attempt = 0; attempt <= retry_budget; ++attempt) {
    try {
      out.text = llm.complete(prompt, params);
      return out;
    } catch (const BackendError& e) {
      out.error = e.what();
    }
  }
  return out;
}

}  // namespace

PromptContext make_context(const SurveyRecord& record, const NormalizedAnnotation& annotation,
                           const ontology::OntologyStore& store) {
  PromptContext ctx;
  ctx.record = record;
  ctx.mention = annotation;
  ctx.backend_concept = annotation.concept_id;
  ctx.backend_concept_name = concept_name(annotation.concept_id, store);
  return ctx;
}

std::vector<JudgedAnnotation> run_strategy(const StrategyInputs& inputs,
                                           const std::vector<NormalizedAnnotation>& annotations,
                                           const RunOptions& options, LlmBackend& llm) {
  const auto& spec = options.spec;
  spec.validate();
  if (spec.retrieval_active() && inputs.retriever == nullptr) {
    throw ValidationError(spec.name() + " needs a retriever");
  }
  std::vector<FewShotExample> examples;
  if (spec.examples_active()) {
    if (inputs.example_pool == nullptr) throw ValidationError(spec.name() + " needs an example pool");
    examples = select_few_shot(*inputs.example_pool, spec.example_count(), derive_seed(options.seed, "few_shot"));
  }

  std::map<std::string, const SurveyRecord*, std::less<>> by_id;
  for (const auto& r : inputs.records) by_id.emplace(r.record_id, &r);
  for (const auto& a : annotations) {
    if (!by_id.contains(a.record_id)) throw ValidationError("annotation for unknown record \"" + a.record_id + "\"");
  }

  std::vector<JudgedAnnotation> judged(annotations.size());
  bounded_for_each(annotations.size(), options.max_inflight, [&](std::size_t i) {
    const auto& annotation = annotations[i];
    const auto& record = *by_id.find(annotation.record_id)->second;
    auto ctx = make_context(record, annotation, inputs.store);
    if (spec.retrieval_active()) {
      ctx.retrieved_docs =
          inputs.retriever->retrieve(annotation.surface, annotation.surface + " " + record.question_text,
                                     spec.retrieval_k);
    }
    ctx.examples = examples;

    JudgedAnnotation& out = judged[i];
    out.annotation = annotation;
    out.prompt = build_prompt(spec, ctx, inputs.templates);
    const auto completion = complete_with_retries(llm, out.prompt, options.params, options.retry_budget);
    if (completion.text) {
      out.verdict = parse_verdict(*completion.text);
    } else {
      out.verdict.error = completion.error;
    }
    out.verdict.hallucinated = detect_hallucination(out.verdict, inputs.store);
  });
  return judged;
}

ChainResult chain_validate(LlmBackend& generator, LlmBackend& evaluator, const PromptContext& ctx,
                           const PromptSpec& spec, const ontology::OntologyStore* store, const LlmParams& params,
                           const templates::TemplateRegistry& registry) {
  ChainResult result;

  std::string gen_prompt = registry.get("task_generate");
  if (spec.retrieval_active() && !ctx.retrieved_docs.empty()) {
    gen_prompt += "\n\n" + render_documents(ctx.retrieved_docs, registry);
  }
  gen_prompt += "\n\n" + registry.render("case_generate",
                                          {{"preceding_questions", render_preceding_questions(ctx.record.preceding_questions)},
                                           {"question", ctx.record.question_text},
                                           {"answer", ctx.record.answer_text},
                                           {"mention", ctx.mention.surface}});
  gen_prompt += "\n\n" + registry.get("answer_generate");

  try {
    result.generator_text = generator.complete(gen_prompt, params);
  } catch (const BackendError& e) {
    result.verdict.error = e.what();
    return result;
  }
  const auto proposal = find_concept_id(result.generator_text);
  if (!proposal) {
    result.verdict.raw_text = result.generator_text;
    result.verdict.error = "generator gave no concept id";
    return result;
  }

  PromptContext judged = ctx;
  judged.backend_concept = *proposal;
  judged.backend_concept_name = store ? concept_name(*proposal, *store) : "proposed concept";
  const auto eval_prompt = build_prompt(spec, judged, registry);
  result.evaluator_called = true;
  try {
    result.verdict = parse_verdict(evaluator.complete(eval_prompt, params));
  } catch (const BackendError& e) {
    result.verdict.error = e.what();
    return result;
  }
  if (result.verdict.kind == VerdictKind::agree) result.accepted = proposal;
  if (result.verdict.kind == VerdictKind::disagree) result.accepted = result.verdict.proposal;
  if (store) result.verdict.hallucinated = detect_hallucination(result.verdict, *store);
  return result;
}

ordered_json verdict_to_json(const JudgedAnnotation& judged) {
  const auto& a = judged.annotation;
  const auto& v = judged.verdict;
  ordered_json obj;
  obj["record_id"] = a.record_id;
  obj["span"] = {a.span.begin, a.span.end};
  obj["surface"] = a.surface;
  obj["backend_concept"] = a.concept_id.str();
  obj["kind"] = to_string(v.kind);
  obj["proposal"] = v.proposal ? ordered_json(v.proposal->str()) : ordered_json(nullptr);
  obj["hallucinated"] = v.hallucinated;
  obj["raw_text"] = v.raw_text;
  if (!v.error.empty()) obj["error"] = v.error;
  return obj;
}

std::string write_verdicts(const std::vector<JudgedAnnotation>& judged) {
  std::string out;
  for (const auto& j : judged) out += verdict_to_json(j).dump() + "\n";
  return out;
}

}  // namespace pheno::orchestrate
