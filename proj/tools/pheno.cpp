// pheno: survey phenotyping pipeline driver.
//
// Exit codes: 0 success, 1 validation or usage error, 2 missing input,
// 3 backend failure.

#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "pheno/annotate.hpp"
#include "pheno/corpus.hpp"
#include "pheno/error.hpp"
#include "pheno/evaluate.hpp"
#include "pheno/ontology.hpp"
#include "pheno/orchestrate.hpp"
#include "pheno/templates.hpp"
#include "pheno/util.hpp"

#ifndef PHENO_VERSION
#define PHENO_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace pheno;

namespace {

// ---------------------------------------------------------------------------
// Settings: config file values overridden by flags
// ---------------------------------------------------------------------------

struct ReportSection {
  std::string name;
  std::map<std::string, std::string> values;
};

class Settings {
public:
  void load(const fs::path& path) {
    if (!fs::is_regular_file(path)) throw InputError("config file not found: " + path.string());
    boost::property_tree::ptree tree;
    try {
      boost::property_tree::read_ini(path.string(), tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
      throw ValidationError("config " + path.string() + ": " + e.message() + " (line " +
                            std::to_string(e.line()) + ")");
    }
    base_ = fs::absolute(path).parent_path();
    for (const auto& [section, entries] : tree) {
      if (section.rfind("report.", 0) == 0) {
        ReportSection r{section.substr(7), {}};
        for (const auto& [key, value] : entries) r.values[key] = value.data();
        reports_.push_back(std::move(r));
        continue;
      }
      for (const auto& [key, value] : entries) values_[section + "." + key] = value.data();
    }
  }

  void set(const std::string& key, const std::string& value) {
    values_[key] = value;
    from_flag_.insert(key);
  }

  std::optional<std::string> get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end() || it->second.empty()) return std::nullopt;
    return it->second;
  }

  std::string get_or(const std::string& key, const std::string& fallback) const {
    return get(key).value_or(fallback);
  }

  std::size_t size_or(const std::string& key, std::size_t fallback) const {
    const auto v = get(key);
    if (!v) return fallback;
    try {
      std::size_t used = 0;
      const long long n = std::stoll(*v, &used);
      if (used != v->size() || n < 0) throw std::invalid_argument("");
      return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
      throw ValidationError(key + " must be a non-negative integer, got \"" + *v + "\"");
    }
  }

  double double_or(const std::string& key, double fallback) const {
    const auto v = get(key);
    if (!v) return fallback;
    try {
      return std::stod(*v);
    } catch (const std::exception&) {
      throw ValidationError(key + " must be a number, got \"" + *v + "\"");
    }
  }

  /// Config paths resolve against the config file; flag paths against the cwd.
  std::optional<fs::path> path(const std::string& key) const {
    const auto v = get(key);
    if (!v) return std::nullopt;
    return resolve(*v, from_flag_.contains(key));
  }

  fs::path require_path(const std::string& key) const {
    auto p = path(key);
    if (!p) throw ValidationError("no value for " + key + " (set it in the config or pass the flag)");
    return *p;
  }

  fs::path resolve(const std::string& value, bool from_flag) const {
    fs::path p(value);
    if (p.is_relative() && !from_flag && !base_.empty()) p = base_ / p;
    return p.lexically_normal();
  }

  const std::vector<ReportSection>& reports() const { return reports_; }

  ordered_json snapshot() const {
    ordered_json obj = ordered_json::object();
    for (const auto& [k, v] : values_) obj[k] = v;
    return obj;
  }

private:
  std::map<std::string, std::string> values_;
  std::set<std::string> from_flag_;
  std::vector<ReportSection> reports_;
  fs::path base_;
};

// Flag values land here and are copied into Settings after parsing.
struct FlagBinding {
  std::string key;
  std::string value;
  CLI::Option* option = nullptr;
};

class Flags {
public:
  void add(CLI::App* app, const std::string& name, const std::string& key, const std::string& help) {
    auto& b = bindings_.emplace_back(std::make_unique<FlagBinding>());
    b->key = key;
    b->option = app->add_option(name, b->value, help);
  }

  void apply(Settings& settings) const {
    for (const auto& b : bindings_) {
      if (b->option->count() > 0) settings.set(b->key, b->value);
    }
  }

private:
  std::vector<std::unique_ptr<FlagBinding>> bindings_;
};

// ---------------------------------------------------------------------------
// Manifests
// ---------------------------------------------------------------------------

std::string timestamp() {
  std::time_t t = std::time(nullptr);
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) t = static_cast<std::time_t>(std::stoll(epoch));
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class Manifest {
public:
  Manifest(std::string command, fs::path path, const Settings& settings)
      : path_(std::move(path)) {
    doc_["tool"] = "pheno";
    doc_["version"] = PHENO_VERSION;
    doc_["command"] = std::move(command);
    doc_["created"] = timestamp();
    doc_["config"] = settings.snapshot();
    doc_["inputs"] = ordered_json::object();
    doc_["outputs"] = ordered_json::object();
  }

  void input(const std::string& label, const fs::path& file) {
    doc_["inputs"][label] = {{"path", file.string()}, {"sha256", io::sha256_hex(io::read_file(file))}};
  }
  void note(const std::string& key, ordered_json value) { doc_[key] = std::move(value); }

  /// Persists the manifest; called before results and again after them.
  void write() const { io::write_atomic(path_, doc_.dump(2) + "\n"); }

  void output(const std::string& label, const fs::path& file, std::string_view contents) {
    doc_["outputs"][label] = {{"path", file.string()}, {"sha256", io::sha256_hex(contents)}};
  }

private:
  fs::path path_;
  ordered_json doc_;
};

fs::path manifest_path(const fs::path& output) { return fs::path(output.string() + ".manifest.json"); }

void write_result(Manifest& manifest, const std::string& label, const fs::path& path, const std::string& contents) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  io::write_atomic(path, contents);
  manifest.output(label, path, contents);
}

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

fs::path output_path(const Settings& s, const std::string& key, const std::string& default_name) {
  if (auto p = s.path(key)) return *p;
  return s.path("paths.output_dir").value_or(fs::path("out")) / default_name;
}

// An earlier stage's output, unless the key names another file.
fs::path input_path(const Settings& s, const std::string& key, const std::string& default_name) {
  return output_path(s, key, default_name);
}

uint64_t seed_of(const Settings& s) {
  const auto v = s.get("run.seed");
  if (!v) return 0;
  try {
    std::size_t used = 0;
    const auto seed = std::stoull(*v, &used);
    if (used != v->size()) throw std::invalid_argument("");
    return seed;
  } catch (const std::exception&) {
    throw ValidationError("seed must be a non-negative integer, got \"" + *v + "\"");
  }
}

bool parse_switch(const std::string& key, const std::string& value) {
  if (value == "on" || value == "true" || value == "1") return true;
  if (value == "off" || value == "false" || value == "0") return false;
  throw ValidationError(key + " must be on or off, got \"" + value + "\"");
}

// ---------------------------------------------------------------------------
// Shared loaders
// ---------------------------------------------------------------------------

std::shared_ptr<const ontology::EmbeddingProvider> embedding_provider(const Settings& s, const std::string& name) {
  const std::string prefix = name == "default" ? "embedding." : "embedding." + name + ".";
  if (const auto endpoint = s.get(prefix + "endpoint")) {
    return std::make_shared<ontology::RemoteEmbeddingProvider>(name, *endpoint, s.size_or(prefix + "dimension", 768),
                                                               std::chrono::milliseconds(
                                                                   s.size_or(prefix + "timeout_ms", 30000)));
  }
  if (name != "default") throw ValidationError("embedding \"" + name + "\" has no endpoint configured");
  return std::make_shared<ontology::HashedBagOfWords>(name);
}

templates::TemplateRegistry template_registry(const Settings& s) {
  if (auto dir = s.path("paths.templates")) return templates::TemplateRegistry::load(*dir);
  return templates::TemplateRegistry::builtin();
}

std::unique_ptr<orchestrate::LlmBackend> llm_backend(const Settings& s) {
  if (auto scripted = s.path("llm.scripted")) {
    return std::make_unique<orchestrate::ScriptedLlmBackend>(orchestrate::ScriptedLlmBackend::load_rules(*scripted));
  }
  if (auto endpoint = s.get("llm.endpoint")) {
    return std::make_unique<orchestrate::HttpLlmBackend>(s.get_or("llm.name", "llm"), *endpoint,
                                                         std::chrono::milliseconds(s.size_or("llm.timeout_ms", 60000)));
  }
  throw ValidationError("no LLM backend configured (llm.endpoint or --scripted-llm)");
}

AnnotationCollection predictions_collection(const std::vector<annotate::AnnotationOutcome>& outcomes,
                                            std::size_t& failed) {
  AnnotationCollection collection;
  failed = 0;
  for (const auto& o : outcomes) {
    if (o.status == annotate::OutcomeStatus::failed) ++failed;
    auto& list = collection[o.record_id];
    list.insert(list.end(), o.annotations.begin(), o.annotations.end());
  }
  sort_annotations(collection);
  return collection;
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

int cmd_ingest(const Settings& s) {
  const auto input = s.require_path("paths.corpus");
  const auto output = output_path(s, "paths.records", "records.jsonl");

  corpus::PreprocessConfig pre = corpus::PreprocessConfig::none();
  const auto pre_path = s.path("preprocess.config");
  if (pre_path) pre = corpus::PreprocessConfig::load(*pre_path);

  Manifest manifest("ingest", manifest_path(output), s);
  manifest.input("corpus", input);
  if (pre_path) manifest.input("preprocess", *pre_path);

  auto records = corpus::ingest_records_file(input, {pre.disease_keywords});
  if (pre_path) records = corpus::normalize_records(std::move(records), pre);
  if (const auto n = s.get("ingest.sample")) {
    const auto seed = derive_seed(seed_of(s), "sample");
    records = corpus::stratified_sample(records, s.size_or("ingest.sample", 0), seed);
    manifest.note("seed", seed_of(s));
  }

  ensure_parent(output);
  manifest.write();
  write_result(manifest, "records", output, corpus::write_records(records));
  manifest.write();

  std::map<std::string, std::size_t> by_type;
  std::size_t expecting = 0;
  for (const auto& r : records) {
    ++by_type[std::string(to_string(r.field_type))];
    if (r.expects_disease) ++expecting;
  }
  std::cout << records.size() << " records\n";
  for (const auto& [type, count] : by_type) std::cout << "  " << type << ": " << count << "\n";
  std::cout << "  expecting a disease: " << expecting << "\n";
  return 0;
}

int cmd_annotate(const Settings& s) {
  const auto records_path = input_path(s, "paths.records", "records.jsonl");
  const auto output = output_path(s, "paths.predictions", "predictions.jsonl");

  annotate::BackendConfig config;
  config.endpoint = s.get_or("ner.endpoint", "");
  config.batch_size = s.size_or("ner.batch_size", config.batch_size);
  config.max_inflight = s.size_or("ner.max_inflight", config.max_inflight);
  config.retry_budget = s.size_or("ner.retry_budget", config.retry_budget);
  config.timeout = std::chrono::milliseconds(s.size_or("ner.timeout_ms", 30000));
  config.validate();

  Manifest manifest("annotate", manifest_path(output), s);
  manifest.input("records", records_path);

  std::unique_ptr<annotate::NerBackend> backend;
  if (auto lexicon = s.path("ner.mock_lexicon")) {
    manifest.input("mock_lexicon", *lexicon);
    backend = std::make_unique<annotate::MockNerBackend>(annotate::load_lexicon(*lexicon));
  } else if (!config.endpoint.empty()) {
    backend = std::make_unique<annotate::HttpNerBackend>(config);
  } else {
    throw ValidationError("no NER backend configured (ner.endpoint or --mock-lexicon)");
  }
  const auto records = corpus::ingest_records_file(records_path);

  ensure_parent(output);
  manifest.write();
  const auto outcomes = annotate::annotate_batch(records, *backend, config);
  write_result(manifest, "predictions", output, annotate::write_outcomes(outcomes));

  std::size_t failed = 0;
  std::size_t mentions = 0;
  for (const auto& o : outcomes) {
    if (o.status == annotate::OutcomeStatus::failed) ++failed;
    mentions += o.annotations.size();
  }
  manifest.note("failed_records", failed);
  manifest.write();

  std::cout << outcomes.size() << " records annotated, " << mentions << " mentions, " << failed << " failed\n";
  if (!outcomes.empty() && failed == outcomes.size()) {
    std::cerr << "error: every record failed; last error: " << outcomes.back().error << "\n";
    return 3;
  }
  return 0;
}

orchestrate::PromptSpec strategy_spec(const Settings& s) {
  const auto flags = s.get("run.flags");
  const auto name = s.get_or("run.strategy", flags ? "rag-fsi-flags" : "zero-shot");
  auto spec = orchestrate::PromptSpec::parse(name);

  if (const auto k = s.get("run.retrieval_k")) {
    spec.retrieval_k = s.size_or("run.retrieval_k", spec.retrieval_k);
    if (spec.strategy == orchestrate::Strategy::cot) spec.use_rag = spec.retrieval_k > 0;
  }
  if (s.get("run.shots")) spec.shots = s.size_or("run.shots", spec.shots);

  if (flags) {
    if (spec.strategy != orchestrate::Strategy::rag_fsi_flags && spec.strategy != orchestrate::Strategy::rag_fsi) {
      throw ValidationError("--flags applies to rag-fsi-flags, not " + spec.name());
    }
    bool rag = true;
    bool fsi = true;
    std::string_view rest = *flags;
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      const auto item = io::trim(rest.substr(0, comma));
      rest = comma == std::string_view::npos ? std::string_view() : rest.substr(comma + 1);
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw ValidationError("flag \"" + item + "\" must look like rag=off");
      const auto key = item.substr(0, eq);
      const bool on = parse_switch(key, item.substr(eq + 1));
      if (key == "rag") rag = on;
      else if (key == "fsi") fsi = on;
      else throw ValidationError("unknown flag \"" + key + "\"; valid: rag, fsi");
    }
    spec = orchestrate::PromptSpec::rag_fsi_flags(rag, fsi, spec.retrieval_k, spec.shots);
  }
  spec.validate();
  return spec;
}

int cmd_run(const Settings& s) {
  const auto spec = strategy_spec(s);
  const auto records_path = input_path(s, "paths.records", "records.jsonl");
  const auto predictions_path = input_path(s, "paths.predictions", "predictions.jsonl");
  const auto ontology_path = s.require_path("paths.ontology");
  const auto output = output_path(s, "paths.verdicts", "verdicts.jsonl");
  const auto seed = seed_of(s);

  Manifest manifest("run", manifest_path(output), s);
  manifest.note("strategy", spec.name());
  manifest.note("seed", seed);
  manifest.input("records", records_path);
  manifest.input("predictions", predictions_path);
  manifest.input("ontology", ontology_path);

  const auto registry = template_registry(s);
  manifest.note("template_version", registry.version());
  const auto records = corpus::ingest_records_file(records_path);
  const auto outcomes = annotate::read_outcomes(io::read_file(predictions_path));
  const auto store = ontology::OntologyStore::load(ontology_path);

  std::vector<orchestrate::FewShotExample> pool;
  if (spec.examples_active()) {
    const auto pool_path = s.require_path("paths.examples");
    manifest.input("examples", pool_path);
    pool = orchestrate::load_example_pool(io::read_file(pool_path));
  }
  std::unique_ptr<ontology::VectorIndex> index;
  std::unique_ptr<ontology::Retriever> retriever;
  if (spec.retrieval_active()) {
    index = std::make_unique<ontology::VectorIndex>(store, embedding_provider(s, s.get_or("run.embedding", "default")));
    retriever = std::make_unique<ontology::Retriever>(store, *index);
  }
  auto llm = llm_backend(s);
  if (auto scripted = s.path("llm.scripted")) manifest.input("scripted_llm", *scripted);

  std::vector<NormalizedAnnotation> annotations;
  for (const auto& o : outcomes) annotations.insert(annotations.end(), o.annotations.begin(), o.annotations.end());

  orchestrate::RunOptions options;
  options.spec = spec;
  options.seed = seed;
  options.params.max_tokens = static_cast<int>(s.size_or("llm.max_tokens", 512));
  options.params.temperature = s.double_or("llm.temperature", 0.0);
  options.retry_budget = s.size_or("llm.retry_budget", 1);
  options.max_inflight = s.size_or("llm.max_inflight", 1);
  if (options.max_inflight == 0) throw ValidationError("llm.max_inflight must be at least 1");

  ensure_parent(output);
  manifest.write();
  orchestrate::StrategyInputs inputs{records, store, retriever.get(), spec.examples_active() ? &pool : nullptr,
                                     registry};
  const auto judged = orchestrate::run_strategy(inputs, annotations, options, *llm);
  write_result(manifest, "verdicts", output, orchestrate::write_verdicts(judged));

  if (auto dump = s.path("run.dump_prompts")) {
    std::string text;
    for (std::size_t i = 0; i < judged.size(); ++i) {
      text += fmt::format("=== prompt {} ({} [{}, {}))\n", i + 1, judged[i].annotation.record_id,
                          judged[i].annotation.span.begin, judged[i].annotation.span.end);
      text += judged[i].prompt + "\n\n";
    }
    write_result(manifest, "prompts", *dump, text);
  }
  manifest.write();

  std::map<orchestrate::VerdictKind, std::size_t> kinds;
  std::size_t hallucinated = 0;
  for (const auto& j : judged) {
    ++kinds[j.verdict.kind];
    if (j.verdict.hallucinated) ++hallucinated;
  }
  std::cout << spec.name() << ": " << judged.size() << " verdicts (agree " << kinds[orchestrate::VerdictKind::agree]
            << ", disagree " << kinds[orchestrate::VerdictKind::disagree] << ", unparseable "
            << kinds[orchestrate::VerdictKind::unparseable] << ", hallucinated " << hallucinated << ")\n";
  return 0;
}

std::string fixed3(const std::optional<double>& v) { return v ? fmt::format("{:.3f}", *v) : "NR"; }

std::vector<std::size_t> selected_tables(const std::string& spec) {
  if (spec == "all") return {1, 2, 3, 4, 5, 6, 7};
  std::vector<std::size_t> out;
  std::string_view rest = spec;
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    const auto item = io::trim(rest.substr(0, comma));
    rest = comma == std::string_view::npos ? std::string_view() : rest.substr(comma + 1);
    if (item.size() != 1 || item[0] < '1' || item[0] > '7') {
      throw ValidationError("--tables takes \"all\" or numbers 1-7, got \"" + item + "\"");
    }
    out.push_back(static_cast<std::size_t>(item[0] - '0'));
  }
  return out;
}

int cmd_eval(const Settings& s) {
  const auto predictions_path = input_path(s, "paths.predictions", "predictions.jsonl");
  const auto gold_path = s.require_path("paths.gold");
  const auto out_dir = s.path("eval.out_dir").value_or(s.path("paths.output_dir").value_or("out") / "report");
  const auto tables = selected_tables(s.get_or("eval.tables", "all"));

  Manifest manifest("eval", out_dir / "manifest.json", s);
  manifest.input("predictions", predictions_path);
  manifest.input("gold", gold_path);

  const auto outcomes = annotate::read_outcomes(io::read_file(predictions_path));
  const auto truth = corpus::import_doccano_file(gold_path);

  std::vector<std::string> text_mismatch;
  for (const auto& o : outcomes) {
    const auto it = truth.texts.find(o.record_id);
    if (it != truth.texts.end() && o.status == annotate::OutcomeStatus::ok && it->second != o.text) {
      text_mismatch.push_back(o.record_id);
    }
  }
  if (!text_mismatch.empty()) {
    std::string list;
    for (const auto& id : text_mismatch) list += (list.empty() ? "" : ", ") + id;
    throw ValidationError("prediction and gold texts differ for records: " + list);
  }

  std::size_t failed = 0;
  const auto predicted = predictions_collection(outcomes, failed);
  const auto match = evaluate::match_mentions(predicted, truth.annotations);
  const auto nen = evaluate::match_concepts(match.pairs);
  const auto metrics = evaluate::compute_metrics(match.counts);

  evaluate::Report report;
  report.table1.push_back({s.get_or("eval.backend_label", "BERN2"), match.counts, nen});

  auto load_verdicts = [&](const std::string& label, const fs::path& path) {
    manifest.input(label, path);
    return evaluate::read_verdicts(io::read_file(path));
  };
  auto summaries = [&](const std::string& label, const std::map<std::string, std::string>& values) {
    std::vector<evaluate::SummaryPair> pairs;
    if (const auto it = values.find("summaries"); it != values.end()) {
      const auto path = s.resolve(it->second, false);
      manifest.input(label + ".summaries", path);
      pairs = evaluate::load_summary_pairs(io::read_file(path));
    }
    return pairs;
  };

  for (const auto& section : s.reports()) {
    const auto& v = section.values;
    auto value = [&](const std::string& key) {
      const auto it = v.find(key);
      return it == v.end() ? std::string() : it->second;
    };
    const auto table = value("table");
    const auto label = value("label").empty() ? section.name : value("label");
    const auto group = value("group");
    std::vector<evaluate::VerdictRecord> verdicts;
    if (!value("verdicts").empty()) verdicts = load_verdicts(section.name, s.resolve(value("verdicts"), false));
    auto need_verdicts = [&] {
      if (verdicts.empty()) throw ValidationError("report." + section.name + " needs a non-empty verdicts file");
    };

    if (table == "2") {
      need_verdicts();
      const bool record_hallucination = value("hallucination").empty() || parse_switch("hallucination", value("hallucination"));
      report.table2.push_back({group, label, evaluate::alignment_accuracy(verdicts, truth.annotations).bern2_alignment_accuracy,
                               record_hallucination ? evaluate::hallucination_rate(verdicts) : std::nullopt});
    } else if (table == "3") {
      need_verdicts();
      const auto c = evaluate::alignment_confusion(verdicts, truth.annotations);
      report.table3.push_back({group, label, evaluate::compute_metrics(c.bern2), evaluate::compute_metrics(c.gt)});
    } else if (table == "4") {
      evaluate::Table4Row row{group, label, std::nullopt, std::nullopt, std::nullopt, std::nullopt};
      const auto pairs = summaries(section.name, v);
      const auto provider = embedding_provider(s, value("embedding").empty() ? "default" : value("embedding"));
      row.rouge1 = evaluate::mean_rouge(pairs, 1);
      row.coherence = evaluate::mean_coherence(pairs, *provider);
      if (!verdicts.empty()) {
        const auto a = evaluate::alignment_accuracy(verdicts, truth.annotations);
        row.bern2_alignment_accuracy = a.bern2_alignment_accuracy;
        row.gt_alignment_accuracy = a.gt_alignment_accuracy;
      }
      report.table4.push_back(row);
    } else if (table == "5") {
      need_verdicts();
      const auto a = evaluate::alignment_accuracy(verdicts, truth.annotations);
      report.table5.push_back({label, a.bern2_alignment_accuracy, a.gt_alignment_accuracy});
    } else if (table == "6") {
      need_verdicts();
      const auto c = evaluate::alignment_confusion(verdicts, truth.annotations);
      report.table6.push_back(evaluate::cot_row(group, label, c.bern2));
    } else if (table == "7") {
      const auto pairs = summaries(section.name, v);
      const auto provider = embedding_provider(s, value("embedding").empty() ? "default" : value("embedding"));
      report.table7.push_back({label, evaluate::mean_rouge(pairs, 1), evaluate::mean_coherence(pairs, *provider)});
    } else {
      throw ValidationError("report." + section.name + ": table must be 2-7, got \"" + table + "\"");
    }
  }
  if (const auto extra = s.get("eval.verdicts")) {
    const auto verdicts = load_verdicts("verdicts", *s.path("eval.verdicts"));
    if (verdicts.empty()) throw ValidationError("verdicts file is empty");
    const auto c = evaluate::alignment_confusion(verdicts, truth.annotations);
    report.table3.push_back({"Runs", s.get_or("eval.verdicts_label", "verdicts"), evaluate::compute_metrics(c.bern2),
                             evaluate::compute_metrics(c.gt)});
  }
  evaluate::fill_normalised(report.table6);

  fs::create_directories(out_dir);
  manifest.write();
  const auto rendered = evaluate::render_report(report);
  write_result(manifest, "report", out_dir / "report.md", rendered.markdown);
  for (const auto t : tables) {
    const auto& [name, contents] = rendered.csv[t - 1];
    write_result(manifest, name, out_dir / name, contents);
  }
  manifest.write();

  const auto& c = match.counts;
  std::cout << "records " << truth.texts.size() << "\n";
  std::cout << "tp " << c.tp << " fp " << c.fp << " fn " << c.fn << " tn " << c.tn << "\n";
  std::cout << "precision " << fixed3(metrics.precision) << "\n";
  std::cout << "recall " << fixed3(metrics.recall) << "\n";
  std::cout << "f1 " << fixed3(metrics.f1) << "\n";
  std::cout << "accuracy " << fixed3(metrics.accuracy) << "\n";
  std::cout << "nen_accuracy " << fixed3(nen.accuracy) << "\n";
  if (failed > 0) std::cout << "failed_records " << failed << "\n";
  std::cout << "report " << (out_dir / "report.md").string() << "\n";
  return 0;
}

int cmd_raft(const Settings& s, const std::string& usage) {
  const auto n = s.size_or("raft.n_distractors", 3);
  if (n == 0) {
    std::cerr << "error: --n must be at least 1\n" << usage;
    return 1;
  }
  const auto ontology_path = s.require_path("paths.ontology");
  const auto questions_path = s.require_path("paths.questions");
  const auto output = output_path(s, "paths.raft", "raft.jsonl");
  const auto seed = seed_of(s);
  const auto mode = s.get_or("raft.distractors", "hard");
  if (mode != "hard" && mode != "random") throw ValidationError("raft.distractors must be hard or random");

  Manifest manifest("raft", manifest_path(output), s);
  manifest.note("seed", seed);
  manifest.input("ontology", ontology_path);
  manifest.input("questions", questions_path);

  const auto registry = template_registry(s);
  const auto store = ontology::OntologyStore::load(ontology_path);
  const auto questions = orchestrate::load_raft_questions(io::read_file(questions_path));
  std::unique_ptr<ontology::VectorIndex> index;
  if (mode == "hard") {
    index = std::make_unique<ontology::VectorIndex>(store, embedding_provider(s, s.get_or("raft.embedding", "default")));
  }
  const auto dataset = orchestrate::build_raft_dataset(store, questions, n, seed, index.get(), registry);
  orchestrate::check_raft_invariants(dataset, n);

  ensure_parent(output);
  manifest.write();
  write_result(manifest, "raft", output, orchestrate::write_raft(dataset));
  manifest.write();
  std::cout << dataset.size() << " datapoints, " << n << " distractors each (" << mode << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Disease phenotyping of survey data: ingest, annotate, verify, evaluate"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", PHENO_VERSION);

  std::string config_path;
  app.add_option("-c,--config", config_path, "INI config file; flags override its values");
  Flags flags;
  flags.add(&app, "--seed", "run.seed", "Seed for every random draw");
  flags.add(&app, "--out-dir", "paths.output_dir", "Default directory for outputs");

  auto* ingest = app.add_subcommand("ingest", "Validate a record file and persist the corpus");
  flags.add(ingest, "-i,--input", "paths.corpus", "Raw line-delimited survey records");
  flags.add(ingest, "-o,--output", "paths.records", "Validated corpus");
  flags.add(ingest, "--preprocess", "preprocess.config", "Preprocessing config file");
  flags.add(ingest, "--sample", "ingest.sample", "Draw a stratified sample of this size");

  auto* annotate_cmd = app.add_subcommand("annotate", "Run the NER backend over the corpus");
  flags.add(annotate_cmd, "--records", "paths.records", "Validated corpus");
  flags.add(annotate_cmd, "-o,--output", "paths.predictions", "Predictions file");
  flags.add(annotate_cmd, "--mock-lexicon", "ner.mock_lexicon", "Use the lexicon-driven mock backend");
  flags.add(annotate_cmd, "--endpoint", "ner.endpoint", "NER service URL");
  flags.add(annotate_cmd, "--batch-size", "ner.batch_size", "Texts per request");
  flags.add(annotate_cmd, "--max-inflight", "ner.max_inflight", "Concurrent requests");
  flags.add(annotate_cmd, "--retry-budget", "ner.retry_budget", "Retries per record");

  auto* run = app.add_subcommand("run", "Verify backend annotations with an LLM strategy");
  flags.add(run, "--records", "paths.records", "Validated corpus");
  flags.add(run, "--predictions", "paths.predictions", "Predictions file");
  flags.add(run, "--ontology", "paths.ontology", "Ontology concepts");
  flags.add(run, "--examples", "paths.examples", "Few-shot example pool");
  flags.add(run, "--templates", "paths.templates", "Template directory overriding the built-ins");
  flags.add(run, "-o,--output", "paths.verdicts", "Verdicts file");
  flags.add(run, "--strategy", "run.strategy", "zero-shot[:concept|:mention], fsi:<k>, cot:<v>, rag-cot:<v>, rag-fsi, rag-fsi-flags");
  flags.add(run, "--retrieval-k", "run.retrieval_k", "Documents per prompt");
  flags.add(run, "--shots", "run.shots", "Few-shot examples per prompt");
  flags.add(run, "--flags", "run.flags", "Binary flags, e.g. rag=on,fsi=off");
  flags.add(run, "--dump-prompts", "run.dump_prompts", "Write every rendered prompt here");
  flags.add(run, "--scripted-llm", "llm.scripted", "Answer from a scripted rule file");
  flags.add(run, "--llm-endpoint", "llm.endpoint", "LLM service URL");
  flags.add(run, "--max-inflight", "llm.max_inflight", "Concurrent LLM calls");

  auto* eval = app.add_subcommand("eval", "Score predictions and verdicts against gold");
  flags.add(eval, "--predictions", "paths.predictions", "Predictions file");
  flags.add(eval, "--gold", "paths.gold", "Gold annotations (Doccano format)");
  flags.add(eval, "--verdicts", "eval.verdicts", "Verdicts to score as an extra alignment row");
  flags.add(eval, "--tables", "eval.tables", "\"all\" or a comma list of table numbers");
  flags.add(eval, "-o,--output", "eval.out_dir", "Report directory");

  auto* raft = app.add_subcommand("raft", "Build a RAFT fine-tuning dataset");
  flags.add(raft, "--ontology", "paths.ontology", "Ontology concepts");
  flags.add(raft, "--questions", "paths.questions", "Questions with gold concepts");
  flags.add(raft, "-n,--n", "raft.n_distractors", "Distractor documents per question");
  flags.add(raft, "--distractors", "raft.distractors", "hard (nearest concepts) or random");
  flags.add(raft, "--templates", "paths.templates", "Template directory overriding the built-ins");
  flags.add(raft, "-o,--output", "paths.raft", "Dataset file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    Settings settings;
    if (!config_path.empty()) settings.load(config_path);
    flags.apply(settings);

    if (ingest->parsed()) return cmd_ingest(settings);
    if (annotate_cmd->parsed()) return cmd_annotate(settings);
    if (run->parsed()) return cmd_run(settings);
    if (eval->parsed()) return cmd_eval(settings);
    if (raft->parsed()) return cmd_raft(settings, raft->help());
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const BackendError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
