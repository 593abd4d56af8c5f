#include <doctest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>

#include <json.hpp>

#include "pheno/util.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using pheno::io::read_file;

namespace {

struct Result {
  int code = -1;
  std::string output;  // stdout and stderr
};

Result pheno_cli(const std::string& args) {
  const std::string command = std::string("SOURCE_DATE_EPOCH=0 ") + PHENO_CLI + " " + args + " 2>&1";
  Result r;
  FILE* pipe = ::popen(command.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf{};
  while (const auto n = std::fread(buf.data(), 1, buf.size(), pipe)) r.output.append(buf.data(), n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string config() { return "-c " + test_support::fixture("e2e/pheno.ini").string(); }

// Scratch dir with records and predictions from the fixture pipeline.
fs::path annotated(const std::string& name) {
  const auto dir = test_support::scratch(name);
  const auto base = config() + " --out-dir " + dir.string();
  REQUIRE(pheno_cli(base + " ingest").code == 0);
  REQUIRE(pheno_cli(base + " annotate").code == 0);
  return dir;
}

std::size_t lines_in(const std::string& text) { return pheno::io::split_lines(text).size(); }

}  // namespace

TEST_CASE("ingest") {
  const auto dir = test_support::scratch("ingest");
  auto r = pheno_cli(config() + " --out-dir " + dir.string() + " ingest");
  CHECK(r.code == 0);
  CHECK(r.output.find("20 records") != std::string::npos);
  CHECK(r.output.find("descriptive: ") != std::string::npos);
  CHECK(fs::exists(dir / "records.jsonl"));
  const auto manifest = nlohmann::json::parse(read_file(dir / "records.jsonl.manifest.json"));
  CHECK(manifest["command"] == "ingest");
  CHECK(manifest["created"] == "1970-01-01T00:00:00Z");
  CHECK(manifest["config"]["run.seed"] == "7");
  CHECK(manifest["inputs"]["corpus"]["sha256"].get<std::string>().size() == 64);
  CHECK(manifest["outputs"]["records"]["sha256"] == pheno::io::sha256_hex(read_file(dir / "records.jsonl")));

  r = pheno_cli("ingest -i " + (dir / "absent.jsonl").string() + " -o " + (dir / "x.jsonl").string());
  CHECK(r.code == 2);

  const auto first_line = pheno::io::split_lines(test_support::read_fixture("e2e/records.jsonl")).front();
  test_support::write_file(dir / "dup.jsonl", first_line + "\n" + first_line + "\n");
  r = pheno_cli("ingest -i " + (dir / "dup.jsonl").string() + " -o " + (dir / "x.jsonl").string());
  CHECK(r.code == 1);
  CHECK(r.output.find("\"r01\"") != std::string::npos);

  r = pheno_cli(config() + " --out-dir " + dir.string() + " --seed 3 ingest --sample 4 -o " +
                (dir / "sample.jsonl").string());
  CHECK(r.code == 0);
  CHECK(r.output.find("4 records") != std::string::npos);
  CHECK(r.output.find("expecting a disease: 2") != std::string::npos);
}

TEST_CASE("usage errors") {
  CHECK(pheno_cli("").code == 1);
  CHECK(pheno_cli("frobnicate").code == 1);
  CHECK(pheno_cli("eval --tables 9").code == 1);
  CHECK(pheno_cli("-c /nonexistent/pheno.ini ingest").code == 2);
  CHECK(pheno_cli("--version").code == 0);
}

TEST_CASE("annotate is reproducible") {
  const auto dir = annotated("annotate");
  const auto first = read_file(dir / "predictions.jsonl");
  CHECK(lines_in(first) == 20);
  const auto base = config() + " --out-dir " + dir.string();
  const auto r = pheno_cli(base + " annotate --batch-size 3 --max-inflight 4");
  CHECK(r.code == 0);
  CHECK(r.output.find("20 records annotated, 10 mentions, 0 failed") != std::string::npos);
  CHECK(read_file(dir / "predictions.jsonl") == first);
  CHECK(read_file(dir / "predictions.jsonl.manifest.json").find("\"failed_records\": 0") != std::string::npos);

  const auto down = pheno_cli("annotate --records " + (dir / "records.jsonl").string() +
                              " --endpoint http://127.0.0.1:1/ner --retry-budget 0 -o " + (dir / "down.jsonl").string());
  CHECK(down.code == 3);
  const auto partial = read_file(dir / "down.jsonl");
  CHECK(lines_in(partial) == 20);
  CHECK(partial.find("\"status\":\"failed\"") != std::string::npos);
}

TEST_CASE("eval reports the fixture confusion") {
  const auto dir = annotated("eval");
  const auto base = config() + " --out-dir " + dir.string();
  auto r = pheno_cli(base + " eval --tables all");
  CHECK(r.code == 0);
  CHECK(r.output.find("tp 8 fp 2 fn 2 tn 8") != std::string::npos);
  CHECK(r.output.find("precision 0.800") != std::string::npos);
  CHECK(r.output.find("recall 0.800") != std::string::npos);
  CHECK(r.output.find("f1 0.800") != std::string::npos);
  CHECK(r.output.find("accuracy 0.800") != std::string::npos);
  CHECK(r.output.find("nen_accuracy 0.875") != std::string::npos);
  std::size_t csvs = 0;
  for (const auto& entry : fs::directory_iterator(dir / "report")) csvs += entry.path().extension() == ".csv";
  CHECK(csvs == 7);
  CHECK(fs::exists(dir / "report" / "report.md"));
  CHECK(fs::exists(dir / "report" / "manifest.json"));

  const auto only = dir / "only";
  r = pheno_cli(base + " eval --tables 1,6 -o " + only.string());
  CHECK(r.code == 0);
  CHECK(fs::exists(only / "table1_ner_nen.csv"));
  CHECK(fs::exists(only / "table6_cot.csv"));
  CHECK_FALSE(fs::exists(only / "table2_zero_shot.csv"));

  CHECK(pheno_cli(base + " eval --gold " + (dir / "missing.jsonl").string()).code == 2);

  test_support::write_file(dir / "stray.jsonl",
                           R"({"record_id":"zz","status":"ok","text":"x","annotations":[]})" "\n");
  r = pheno_cli(base + " eval --predictions " + (dir / "stray.jsonl").string());
  CHECK(r.code == 1);
  CHECK(r.output.find("zz") != std::string::npos);
}

TEST_CASE("run strategies") {
  const auto dir = annotated("run");
  const auto base = config() + " --out-dir " + dir.string();

  SUBCASE("rag-fsi is deterministic") {
    const auto a = dir / "a.jsonl", b = dir / "b.jsonl";
    REQUIRE(pheno_cli(base + " run --strategy rag-fsi --retrieval-k 3 --seed 7 -o " + a.string()).code == 0);
    REQUIRE(pheno_cli(base + " run --strategy rag-fsi --retrieval-k 3 --seed 7 --max-inflight 4 -o " + b.string())
                .code == 0);
    CHECK(read_file(a) == read_file(b));
    CHECK(lines_in(read_file(a)) == 10);
    const auto manifest = nlohmann::json::parse(read_file(a.string() + ".manifest.json"));
    CHECK(manifest["seed"] == 7);
    CHECK(manifest["strategy"] == "rag-fsi");
  }
  SUBCASE("strong chain-of-thought scaffold") {
    const auto prompts = dir / "prompts.txt";
    REQUIRE(pheno_cli(base + " run --strategy cot:strong --dump-prompts " + prompts.string() + " -o " +
                      (dir / "cot.jsonl").string())
                .code == 0);
    const auto text = read_file(prompts);
    CHECK(text.find("=== prompt 10 ") != std::string::npos);
    CHECK(text.find("Let's think step by step.\n1. Restate the disease mention") != std::string::npos);
  }
  SUBCASE("both flags off equal zero-shot") {
    const auto z = dir / "z.jsonl", f = dir / "f.jsonl";
    REQUIRE(pheno_cli(base + " run --strategy zero-shot -o " + z.string()).code == 0);
    const auto r = pheno_cli(base + " run --strategy rag-fsi-flags --flags rag=off,fsi=off -o " + f.string());
    REQUIRE(r.code == 0);
    CHECK(r.output.find("rag-fsi-flags(rag=off,fsi=off)") != std::string::npos);
    CHECK(read_file(z) == read_file(f));
    const auto verdicts = read_file(z);
    CHECK(verdicts.find("\"proposal\":\"mesh:D999999\",\"hallucinated\":true") != std::string::npos);
  }
  SUBCASE("errors") {
    auto r = pheno_cli(base + " run --strategy tree-of-thought");
    CHECK(r.code == 1);
    CHECK(r.output.find("rag-fsi") != std::string::npos);
    CHECK(pheno_cli(base + " run --flags rag=maybe").code == 1);
    CHECK(pheno_cli(base + " run --ontology " + (dir / "none.jsonl").string()).code == 2);
    const auto ontology = test_support::fixture("ontology50.jsonl").string();
    CHECK(pheno_cli("run --records " + (dir / "records.jsonl").string() + " --predictions " +
                    (dir / "predictions.jsonl").string() + " --ontology " + ontology +
                    " --llm-endpoint http://127.0.0.1:1/llm -o " + (dir / "u.jsonl").string())
              .code == 0);
    CHECK(read_file(dir / "u.jsonl").find("\"kind\":\"unparseable\"") != std::string::npos);
  }
  SUBCASE("verdicts feed the report") {
    const auto v = dir / "v.jsonl";
    REQUIRE(pheno_cli(base + " run -o " + v.string()).code == 0);
    const auto r = pheno_cli(base + " eval --verdicts " + v.string() + " -o " + (dir / "rep").string());
    CHECK(r.code == 0);
    const auto table3 = read_file(dir / "rep" / "table3_fine_tuned.csv");
    CHECK(lines_in(table3) == 2);
    CHECK(table3.find("Runs,verdicts,") != std::string::npos);
  }
}

TEST_CASE("report sections fill tables 2 to 7") {
  const auto dir = annotated("report");
  const auto base = config() + " --out-dir " + dir.string();
  REQUIRE(pheno_cli(base + " run -o " + (dir / "zs.jsonl").string()).code == 0);
  std::string ini = pheno::io::read_file(test_support::fixture("e2e/pheno.ini"));
  for (const auto& [key, value] : std::vector<std::pair<std::string, std::string>>{
           {"corpus", "records.jsonl"}, {"gold", "gold.jsonl"}, {"ontology", "../ontology50.jsonl"},
           {"examples", "examples.jsonl"}, {"questions", "raft_questions.jsonl"}}) {
    const auto from = key + " = " + value;
    const auto at = ini.find(from);
    REQUIRE(at != std::string::npos);
    ini.replace(at, from.size(), key + " = " + (test_support::fixture("e2e") / value).lexically_normal().string());
  }
  for (const auto* k : {"mock_lexicon = lexicon.tsv", "scripted = scripted_llm.jsonl"}) {
    const std::string entry = k;
    const auto eq = entry.find(" = ");
    ini.replace(ini.find(entry), entry.size(),
                entry.substr(0, eq + 3) + (test_support::fixture("e2e") / entry.substr(eq + 3)).string());
  }
  const auto verdicts = (dir / "zs.jsonl").string();
  const auto summaries = test_support::fixture("e2e/summaries.jsonl").string();
  ini += "\n[report.zs]\ntable = 2\ngroup = Concept vs Concept\nlabel = scripted\nverdicts = " + verdicts +
         "\n[report.ft]\ntable = 3\ngroup = Fine-tuned\nverdicts = " + verdicts +
         "\n[report.rag]\ntable = 4\ngroup = RAG-FSI\nverdicts = " + verdicts + "\nsummaries = " + summaries +
         "\n[report.flags]\ntable = 5\nlabel = rag=off,fsi=off\nverdicts = " + verdicts +
         "\n[report.cot]\ntable = 6\ngroup = scripted\nlabel = none\nverdicts = " + verdicts +
         "\n[report.emb]\ntable = 7\nlabel = default\nsummaries = " + summaries + "\n";
  test_support::write_file(dir / "report.ini", ini);

  const auto r = pheno_cli("-c " + (dir / "report.ini").string() + " --out-dir " + dir.string() + " eval");
  REQUIRE(r.code == 0);
  const auto md = read_file(dir / "report" / "report.md");
  CHECK(md.find("(no runs)") == std::string::npos);
  CHECK(md.find("| **Concept vs Concept** |") != std::string::npos);
  CHECK(md.find("| scripted | ") != std::string::npos);
  CHECK(md.find("| rag=off,fsi=off | ") != std::string::npos);
  CHECK(md.find("| none | 1.00 | ") != std::string::npos);
  CHECK(read_file(dir / "report" / "table5_binary_flags.csv").find("\"rag=off,fsi=off\",") != std::string::npos);
  const auto manifest = nlohmann::json::parse(read_file(dir / "report" / "manifest.json"));
  CHECK(manifest["inputs"].contains("rag.summaries"));

  test_support::write_file(dir / "bad.ini", ini + "[report.bad]\ntable = 9\n");
  CHECK(pheno_cli("-c " + (dir / "bad.ini").string() + " --out-dir " + dir.string() + " eval").code == 1);
}

TEST_CASE("raft") {
  const auto dir = test_support::scratch("raft");
  const auto base = config() + " --out-dir " + dir.string();
  auto r = pheno_cli(base + " raft -n 3");
  CHECK(r.code == 0);
  const auto first = read_file(dir / "raft.jsonl");
  const auto lines = pheno::io::split_lines(first);
  CHECK(lines.size() == 10);
  for (const auto& line : lines) CHECK(nlohmann::json::parse(line)["distractors"].size() == 3);
  REQUIRE(pheno_cli(base + " raft -n 3").code == 0);
  CHECK(read_file(dir / "raft.jsonl") == first);

  REQUIRE(pheno_cli(base + " --seed 1 raft -n 3 --distractors random -o " + (dir / "r1.jsonl").string()).code == 0);
  REQUIRE(pheno_cli(base + " --seed 1 raft -n 3 --distractors random -o " + (dir / "r2.jsonl").string()).code == 0);
  REQUIRE(pheno_cli(base + " --seed 2 raft -n 3 --distractors random -o " + (dir / "r3.jsonl").string()).code == 0);
  CHECK(read_file(dir / "r1.jsonl") == read_file(dir / "r2.jsonl"));
  CHECK(read_file(dir / "r1.jsonl") != read_file(dir / "r3.jsonl"));

  r = pheno_cli(base + " raft -n 0");
  CHECK(r.code == 1);
  CHECK(r.output.find("Usage") != std::string::npos);
}
