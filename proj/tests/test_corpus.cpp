#include <doctest.h>

#include <algorithm>
#include <functional>
#include <map>
#include <set>

#include "pheno/corpus.hpp"
#include "pheno/error.hpp"
#include "pheno/unicode.hpp"
#include "pheno/util.hpp"
#include "support.hpp"

using namespace pheno;
using namespace pheno::corpus;

namespace {

std::string record_line(const std::string& id, const std::string& type, bool expects = false) {
  return R"({"record_id":")" + id + R"(","question_text":"Q )" + id + R"(","answer_text":"A","field_type":")" + type +
         R"(","preceding_questions":[],"expects_disease":)" + (expects ? "true" : "false") + "}";
}

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("ingest_records") {
  SUBCASE("one binary record") {
    const auto records = ingest_records(record_line("r1", "binary") + "\n");
    REQUIRE(records.size() == 1);
    CHECK(records[0].field_type == FieldType::binary);
    CHECK(records[0].record_id == "r1");
  }
  SUBCASE("duplicate id names the id") {
    const auto msg = error_of([] { ingest_records(record_line("r1", "binary") + "\n" + record_line("r1", "slider")); });
    CHECK(msg.find("\"r1\"") != std::string::npos);
    CHECK(msg.find("duplicate") != std::string::npos);
  }
  SUBCASE("unknown field type names the line") {
    const auto msg = error_of([] { ingest_records(record_line("r1", "binary") + "\n" + record_line("r2", "matrix")); });
    CHECK(msg.find("line 2") != std::string::npos);
    CHECK(msg.find("matrix") != std::string::npos);
  }
  SUBCASE("malformed line") {
    CHECK_THROWS_WITH_AS(ingest_records("{not json"), doctest::Contains("line 1"), ValidationError);
    CHECK_THROWS_AS(ingest_records(R"({"record_id":"","question_text":"q","answer_text":"a","field_type":"binary"})"),
                    ValidationError);
  }
  SUBCASE("optional fields and keyword derivation") {
    const auto line = R"({"record_id":"r9","question_text":"Was your child DIAGNOSED with anything?","answer_text":"no","field_type":"descriptive"})";
    auto records = ingest_records(line);
    CHECK(records[0].preceding_questions.empty());
    CHECK_FALSE(records[0].expects_disease);
    records = ingest_records(line, {{"diagnosed"}});
    CHECK(records[0].expects_disease);
  }
  SUBCASE("blank lines are skipped and order kept") {
    const auto records = ingest_records(record_line("b", "slider") + "\n\n" + record_line("a", "ratio") + "\n");
    REQUIRE(records.size() == 2);
    CHECK(records[0].record_id == "b");
    CHECK(records[1].record_id == "a");
  }
  SUBCASE("write then ingest is the identity") {
    const auto records = ingest_records(test_support::read_fixture("e2e/records.jsonl"));
    CHECK(records.size() == 20);
    CHECK(ingest_records(write_records(records)) == records);
  }
  CHECK_THROWS_AS(ingest_records_file(test_support::fixture("absent.jsonl")), InputError);
}

TEST_CASE("normalize_text") {
  SUBCASE("lowercase only keeps the identity map") {
    auto config = PreprocessConfig::none();
    config.lowercase = true;
    const auto n = normalize_text("ASTHMA?", config);
    CHECK(n.text == "asthma?");
    CHECK(n.offset_map == std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6});
  }
  SUBCASE("acronym expansion maps spans back to raw text") {
    auto config = PreprocessConfig::none();
    config.lowercase = true;
    config.acronyms = true;
    config.acronym_map = {{"dx", "diagnosis"}};
    const auto n = normalize_text("dx of RSV", config);
    CHECK(n.text == "diagnosis of rsv");
    CHECK(n.to_raw({13, 16}) == TextSpan{6, 9});
    CHECK(n.to_raw({0, 9}) == TextSpan{0, 2});
  }
  SUBCASE("empty input") {
    const auto n = normalize_text("", PreprocessConfig{});
    CHECK(n.text.empty());
    CHECK(n.offset_map.empty());
  }
  SUBCASE("full pipeline") {
    auto config = PreprocessConfig::none();
    config.nfc = config.lowercase = config.acronyms = config.punctuation = config.spelling = config.whitespace = true;
    config.acronym_map = {{"OSA", "obstructive sleep apnoea"}, {"OSA syndrome", "ignored"}};
    config.lexicon = {"asthma", "eczema"};
    const auto n = normalize_text("  Cafe\xCC\x81:  OSA and asthmaa!!  \xE2\x80\x9C" "exzema\xE2\x80\x9D  ", config);
    CHECK(n.text == "caf\xC3\xA9: obstructive sleep apnoea and asthma! \"eczema\"");
    CHECK(n.offset_map.size() == unicode::length(n.text));
  }
  SUBCASE("acronyms match whole tokens only, longest key first") {
    auto config = PreprocessConfig::none();
    config.acronyms = true;
    config.acronym_map = {{"uti", "urinary tract infection"}, {"recurrent uti", "recurrent urinary tract infections"}};
    CHECK(normalize_text("Recurrent UTI, utility bill", config).text ==
          "recurrent urinary tract infections, utility bill");
  }
  SUBCASE("spelling skips short, numeric and known tokens") {
    auto config = PreprocessConfig::none();
    config.spelling = true;
    config.lexicon = {"asthma", "ashma", "at"};
    CHECK(normalize_text("astma ashma an 2019 asthmaa", config).text == "asthma ashma an 2019 asthma");
  }
  SUBCASE("offset map is monotone and total on random text") {
    SeededRng rng(5);
    const std::vector<std::string> pieces = {"A", "b", " ", "  ", "\t", "DX", "\xC3\x89", "E\xCC\x81", "!", "?!",
                                             "\xE2\x80\x94", "\xE2\x80\xA6", "\xE2\x80\x9C", "asthmaa", "\xC4\xB0", "7"};
    auto config = PreprocessConfig::none();
    config.nfc = config.lowercase = config.acronyms = config.punctuation = config.spelling = config.whitespace = true;
    config.acronym_map = {{"dx", "diagnosis"}};
    config.lexicon = {"asthma"};
    for (int round = 0; round < 300; ++round) {
      std::string raw;
      const auto len = rng.below(12);
      for (std::size_t i = 0; i < len; ++i) raw += pieces[rng.below(pieces.size())];
      const auto n = normalize_text(raw, config);
      const auto raw_len = unicode::length(raw);
      CAPTURE(raw);
      REQUIRE(n.offset_map.size() == unicode::length(n.text));
      REQUIRE(n.end_map.size() == n.offset_map.size());
      for (std::size_t i = 0; i < n.offset_map.size(); ++i) {
        CHECK(n.offset_map[i] < raw_len);
        CHECK(n.offset_map[i] < n.end_map[i]);
        CHECK(n.end_map[i] <= raw_len);
        if (i > 0) CHECK(n.offset_map[i - 1] <= n.offset_map[i]);
      }
    }
  }
  SUBCASE("config file") {
    const auto config = PreprocessConfig::load(test_support::fixture("preprocess/preprocess.ini"));
    CHECK(config.spelling);
    CHECK(config.acronym_map.size() == 2);
    CHECK(config.lexicon.size() == 4);
    CHECK(config.disease_keywords == std::vector<std::string>{"diagnosed", "illness", "condition"});
    CHECK(normalize_text("ADHD,  mild astma", config).text == "attention deficit hyperactivity disorder, mild asthma");
  }
}

TEST_CASE("normalize_records keeps ids and rewrites text") {
  auto records = ingest_records(test_support::read_fixture("e2e/records.jsonl"));
  auto config = PreprocessConfig::none();
  config.lowercase = true;
  const auto out = normalize_records(records, config);
  REQUIRE(out.size() == records.size());
  CHECK(out[5].record_id == "r06");
  CHECK(out[5].answer_text == "adhd diagnosed last year");
}

TEST_CASE("stratified_sample") {
  std::vector<SurveyRecord> corpus;
  for (int i = 0; i < 1000; ++i) {
    SurveyRecord r;
    r.record_id = "r" + std::to_string(i);
    r.expects_disease = i < 500;
    r.field_type = kAllFieldTypes[static_cast<std::size_t>(i) % std::size(kAllFieldTypes)];
    corpus.push_back(r);
  }
  SUBCASE("equal split") {
    const auto sample = stratified_sample(corpus, 100, 1);
    REQUIRE(sample.size() == 100);
    const auto expected = std::count_if(sample.begin(), sample.end(), [](const auto& r) { return r.expects_disease; });
    CHECK(expected == 50);
    std::set<std::string> ids;
    for (const auto& r : sample) ids.insert(r.record_id);
    CHECK(ids.size() == 100);
  }
  SUBCASE("odd n gives the extra record to the disease stratum") {
    const auto sample = stratified_sample(corpus, 7, 1);
    CHECK(std::count_if(sample.begin(), sample.end(), [](const auto& r) { return r.expects_disease; }) == 4);
  }
  SUBCASE("field types are covered before one repeats") {
    const auto sample = stratified_sample(corpus, 24, 3);
    for (bool stratum : {true, false}) {
      std::vector<FieldType> seen;
      for (const auto& r : sample) {
        if (r.expects_disease == stratum) seen.push_back(r.field_type);
      }
      REQUIRE(seen.size() == 12);
      CHECK(std::set<FieldType>(seen.begin(), seen.begin() + 6).size() == 6);
      CHECK(std::set<FieldType>(seen.begin() + 6, seen.end()).size() == 6);
    }
  }
  SUBCASE("exhaustion") {
    std::vector<SurveyRecord> small(corpus.begin() + 498, corpus.begin() + 502);
    const auto sample = stratified_sample(small, 4, 11);
    CHECK(sample.size() == 4);
  }
  SUBCASE("determinism and seed sensitivity") {
    CHECK(stratified_sample(corpus, 40, 9) == stratified_sample(corpus, 40, 9));
    CHECK(stratified_sample(corpus, 40, 9) != stratified_sample(corpus, 40, 10));
  }
  SUBCASE("shortfall") {
    std::vector<SurveyRecord> skewed(corpus.begin() + 495, corpus.end());  // 5 expected, 500 not
    const auto msg = error_of([&] { stratified_sample(skewed, 20, 1); });
    CHECK(msg.find("5") != std::string::npos);
    CHECK_THROWS_AS(stratified_sample(corpus, 1001, 1), ValidationError);
  }
}

TEST_CASE("doccano import") {
  SUBCASE("one label") {
    const auto truth = import_doccano(R"({"text":"has asthma","label":[[4,10,"mesh:D001249"]]})");
    REQUIRE(truth.annotations.size() == 1);
    const auto& [id, list] = *truth.annotations.begin();
    CHECK(id == "line-1");
    REQUIRE(list.size() == 1);
    CHECK(list[0].surface == "asthma");
    CHECK(list[0].concept_id == ConceptId::mesh("mesh:D001249"));
    CHECK(list[0].source == AnnotationSource::human);
    CHECK(truth.texts.at("line-1") == "has asthma");
  }
  SUBCASE("negative record") {
    const auto truth = import_doccano(R"({"id":17,"text":"no issues","label":[]})");
    REQUIRE(truth.annotations.count("17") == 1);
    CHECK(truth.annotations.at("17").empty());
  }
  SUBCASE("errors") {
    CHECK_THROWS_WITH_AS(import_doccano(R"({"text":"has asthma","label":[[4,20,"mesh:D001249"]]})"),
                         doctest::Contains("line 1"), ValidationError);
    CHECK_THROWS_AS(import_doccano(R"({"text":"has asthma","label":[[4,10,"asthma"]]})"), ValidationError);
    CHECK_THROWS_AS(import_doccano(R"({"text":"has asthma","label":[[4,10,"NONE"],[4,10,"NONE"]]})"),
                    ValidationError);
    CHECK_THROWS_AS(import_doccano(R"({"label":[]})"), ValidationError);
  }
  SUBCASE("offsets count scalar values") {
    const auto truth = import_doccano("{\"record_id\":\"u\",\"text\":\"\xF0\x9F\x98\x80 asthma\",\"label\":[[2,8,\"NONE\"]]}");
    CHECK(truth.annotations.at("u")[0].surface == "asthma");
  }
}

TEST_CASE("doccano export") {
  AnnotationCollection annotations;
  std::map<std::string, std::string> texts{{"a", "has asthma"}, {"b", "no issues"}};
  NormalizedAnnotation ann{"a", {4, 10}, "asthma", ConceptId::mesh("mesh:D001249"), std::nullopt, AnnotationSource::human};
  annotations["a"].push_back(ann);
  annotations["b"];
  const auto out = export_doccano(annotations, texts);
  CHECK(out == "{\"record_id\":\"a\",\"text\":\"has asthma\",\"label\":[[4,10,\"mesh:D001249\"]]}\n"
               "{\"record_id\":\"b\",\"text\":\"no issues\",\"label\":[]}\n");
  CHECK(import_doccano(out).annotations == annotations);

  annotations["c"].push_back(ann);
  CHECK_THROWS_WITH_AS(export_doccano(annotations, texts), doctest::Contains("\"c\""), ValidationError);
}

TEST_CASE("doccano round trip on the annotated fixture") {
  const auto content = test_support::read_fixture("doccano25.jsonl");
  const auto truth = import_doccano(content);
  CHECK(truth.texts.size() == 25);
  for (const auto& [id, list] : truth.annotations) {
    for (const auto& a : list) CHECK(a.surface == unicode::substr(truth.texts.at(id), a.span));
  }
  CHECK(export_doccano(truth.annotations, truth.texts) == content);
}
