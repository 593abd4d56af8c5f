#include <doctest.h>

#include <atomic>
#include <chrono>
#include <set>
#include <thread>

#include "pheno/error.hpp"
#include "pheno/templates.hpp"
#include "pheno/types.hpp"
#include "pheno/unicode.hpp"
#include "pheno/util.hpp"
#include "support.hpp"

using namespace pheno;

TEST_CASE("concept ids parse strictly and render canonically") {
  const auto asthma = ConceptId::parse("mesh:D001249");
  REQUIRE(asthma);
  CHECK(asthma->str() == "mesh:D001249");
  CHECK(asthma->identifier() == "D001249");
  CHECK_FALSE(asthma->is_none());

  const auto none = ConceptId::parse("NONE");
  REQUIRE(none);
  CHECK(none->is_none());
  CHECK(none->str() == "NONE");

  for (const char* bad : {"", "mesh:", "mesh:D", "D001249", "MESH:D001249", "mesh:d001249", "mesh:D12x", "none",
                          "mesh:D001249 "}) {
    CAPTURE(bad);
    CHECK_FALSE(ConceptId::parse(bad));
  }
  CHECK_THROWS_AS(ConceptId::mesh("NONE"), ValidationError);
  CHECK_THROWS_AS(ConceptId::mesh("D1"), ValidationError);
  CHECK(ConceptId::mesh("mesh:D1") < ConceptId::mesh("mesh:D2"));
}

TEST_CASE("field types round-trip through their names") {
  for (auto type : kAllFieldTypes) CHECK(parse_field_type(to_string(type)) == type);
  CHECK_FALSE(parse_field_type("matrix"));
}

TEST_CASE("target text joins question and answer") {
  SurveyRecord r;
  r.question_text = "Any illness?";
  r.answer_text = "asthma";
  CHECK(target_text(r) == "Any illness? asthma");
  r.question_text.clear();
  CHECK(target_text(r) == "asthma");
}

TEST_CASE("unicode helpers count scalar values") {
  const std::string text = "caf\xC3\xA9 \xF0\x9F\x98\x80 ok";  // "café 😀 ok"
  CHECK(unicode::length(text) == 9);
  CHECK(unicode::substr(text, {0, 4}) == "caf\xC3\xA9");
  CHECK(unicode::substr(text, {5, 6}) == "\xF0\x9F\x98\x80");
  CHECK_THROWS_AS(unicode::substr(text, {5, 10}), ValidationError);
  CHECK(unicode::encode(unicode::decode(text)) == text);

  CHECK(unicode::is_valid_utf8(text));
  CHECK_FALSE(unicode::is_valid_utf8("\xC3"));
  CHECK(unicode::decode("a\xFF" "b") == U"a�b");

  CHECK(unicode::lower("ÄRZTIN Asthma") == "ärztin asthma");
  CHECK(unicode::lower(U'İ') == U"i̇");  // full mapping grows
  CHECK(unicode::lower_simple(U'İ') == U'i');

  const auto tokens = unicode::word_tokens("Asthma, ECZEMA & hay-fever (2019)");
  CHECK(tokens == std::vector<std::string>{"asthma", "eczema", "hay", "fever", "2019"});
}

TEST_CASE("seeded rng is reproducible and bounded") {
  SeededRng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.below(1000);
    CHECK(x == b.below(1000));
    CHECK(x < 1000);
    differs |= x != c.below(1000);
  }
  CHECK(differs);

  std::vector<int> items{1, 2, 3, 4, 5, 6, 7, 8};
  auto copy = items;
  SeededRng(9).shuffle(items);
  SeededRng(9).shuffle(copy);
  CHECK(items == copy);
  std::sort(copy.begin(), copy.end());
  CHECK(copy == std::vector<int>{1, 2, 3, 4, 5, 6, 7, 8});

  CHECK(derive_seed(1, "sample") == derive_seed(1, "sample"));
  CHECK(derive_seed(1, "sample") != derive_seed(1, "few_shot"));
  CHECK(derive_seed(1, "sample") != derive_seed(2, "sample"));
}

TEST_CASE("fnv1a64 matches published test vectors") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("bounded_for_each visits every index within the window") {
  constexpr std::size_t kCount = 64;
  constexpr std::size_t kWindow = 3;
  std::atomic<int> inflight{0};
  std::atomic<int> peak{0};
  std::vector<std::atomic<int>> visits(kCount);
  bounded_for_each(kCount, kWindow, [&](std::size_t i) {
    const int now = ++inflight;
    int seen = peak.load();
    while (now > seen && !peak.compare_exchange_weak(seen, now)) {
    }
    std::this_thread::sleep_for(std::chrono::microseconds(200));
    ++visits[i];
    --inflight;
  });
  for (const auto& v : visits) CHECK(v.load() == 1);
  CHECK(peak.load() <= static_cast<int>(kWindow));

  CHECK_THROWS_AS(bounded_for_each(10, 4,
                                   [](std::size_t i) {
                                     if (i == 5) throw ValidationError("boom");
                                   }),
                  ValidationError);
  bounded_for_each(0, 4, [](std::size_t) { FAIL("called on empty range"); });
}

TEST_CASE("io helpers") {
  CHECK(io::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(io::trim("  a b \t\n") == "a b");
  CHECK(io::split_lines("a\r\nb\n\nc\n") == std::vector<std::string>{"a", "b", "", "c"});
  CHECK(io::split_lines("") == std::vector<std::string>{});

  const auto dir = test_support::scratch("io");
  const auto path = dir / "out.txt";
  io::write_atomic(path, "first");
  io::write_atomic(path, "second");
  CHECK(io::read_file(path) == "second");
  CHECK_FALSE(std::filesystem::exists(dir / "out.txt.tmp"));
  CHECK_THROWS_AS(io::read_file(dir / "missing.txt"), InputError);
}

TEST_CASE("templates substitute named placeholders") {
  using templates::render;
  CHECK(render("Hi {{name}}, {{name}}!", {{"name", "Ann"}}) == "Hi Ann, Ann!");
  CHECK(render("no placeholders", {}) == "no placeholders");
  CHECK_THROWS_AS(render("{{missing}}", {}), ValidationError);
  CHECK_THROWS_AS(render("{{open", {{"open", "x"}}), ValidationError);

  const auto& builtin = templates::TemplateRegistry::builtin();
  CHECK(builtin.version() == "1");
  CHECK(builtin.get("cot_simple") == "Let's think step by step.");
  CHECK(builtin.get("answer_format") ==
        "Answer AGREE or DISAGREE; if DISAGREE, give the correct concept as mesh:Dxxxxxx");
  CHECK_THROWS_AS(builtin.get("nope"), ValidationError);

  const auto dir = test_support::scratch("templates");
  test_support::write_file(dir / "cot_simple.tmpl", "Think carefully.\n");
  test_support::write_file(dir / "VERSION", "2\n");
  const auto custom = templates::TemplateRegistry::load(dir);
  CHECK(custom.get("cot_simple") == "Think carefully.");
  CHECK(custom.version() == "2");
  CHECK(custom.get("answer_format") == builtin.get("answer_format"));
  CHECK_THROWS_AS(templates::TemplateRegistry::load(dir / "absent"), InputError);
}
