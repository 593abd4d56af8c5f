#include <doctest.h>

#include <cmath>
#include <map>

#include "pheno/error.hpp"
#include "pheno/ontology.hpp"
#include "pheno/util.hpp"
#include "support.hpp"

using namespace pheno;
using namespace pheno::ontology;

namespace {

// Returns the vector registered for a text, so rankings are fully controlled.
class TableProvider final : public EmbeddingProvider {
public:
  explicit TableProvider(std::map<std::string, EmbeddingVector> table) : table_(std::move(table)) {}
  const std::string& name() const override { return name_; }
  std::size_t dimension() const override { return 2; }
  EmbeddingVector embed(std::string_view text) const override {
    if (auto it = table_.find(std::string(text)); it != table_.end()) return it->second;
    return {1.0, 0.0};
  }

private:
  std::string name_ = "table";
  std::map<std::string, EmbeddingVector> table_;
};

OntologyConcept make_concept(const std::string& id, const std::string& name, const std::string& description = "",
                             std::vector<std::string> synonyms = {}) {
  return {ConceptId::mesh(id), name, description, std::move(synonyms)};
}

const OntologyStore& fixture_store() {
  static const OntologyStore store = OntologyStore::load(test_support::fixture("ontology50.jsonl"));
  return store;
}

}  // namespace

TEST_CASE("store loading") {
  const auto& store = fixture_store();
  CHECK(store.size() == 50);
  for (std::size_t i = 1; i < store.size(); ++i) CHECK(store.concepts()[i - 1].concept_id < store.concepts()[i].concept_id);
  const auto* asthma = store.find(ConceptId::mesh("mesh:D001249"));
  REQUIRE(asthma != nullptr);
  CHECK(asthma->preferred_name == "Asthma");
  CHECK_FALSE(store.contains(ConceptId::mesh("mesh:D999999")));

  CHECK_THROWS_WITH_AS(OntologyStore::parse(R"({"concept_id":"mesh:D1","preferred_name":"A"}
{"concept_id":"mesh:D1","preferred_name":"B"})"),
                       doctest::Contains("line 2"), ValidationError);
  CHECK_THROWS_AS(OntologyStore::parse(R"({"concept_id":"NONE","preferred_name":"A"})"), ValidationError);
  CHECK_THROWS_AS(OntologyStore::parse(R"({"concept_id":"mesh:D1","preferred_name":"  "})"), ValidationError);
  CHECK_THROWS_AS(OntologyStore::load(test_support::fixture("missing.jsonl")), InputError);
}

TEST_CASE("exact lookup folds case and whitespace") {
  const auto& store = fixture_store();
  auto hits = store.lookup_exact("  BRONCHIAL Asthma ");
  REQUIRE(hits.size() == 1);
  CHECK(hits[0]->concept_id == ConceptId::mesh("mesh:D001249"));
  CHECK(store.lookup_exact("Asthma").size() == 1);
  CHECK(store.lookup_exact("asthm").empty());

  const OntologyStore shared({make_concept("mesh:D2", "B", "", {"twin"}), make_concept("mesh:D1", "A", "", {"Twin"})});
  hits = shared.lookup_exact("twin");
  REQUIRE(hits.size() == 2);
  CHECK(hits[0]->concept_id == ConceptId::mesh("mesh:D1"));
}

TEST_CASE("rag documents") {
  const auto doc = build_rag_document(
      make_concept("mesh:D001249", "Asthma", "Airway disorder.", {"bronchial asthma", "asthmatic"}));
  CHECK(doc.concept_id == ConceptId::mesh("mesh:D001249"));
  CHECK(doc.body ==
        "NAME: Asthma\nID: mesh:D001249\nDESCRIPTION: Airway disorder.\nSYNONYMS: bronchial asthma; asthmatic");
  CHECK(build_rag_document(make_concept("mesh:D1", "X")).body.ends_with("SYNONYMS: (none)"));
  CHECK(retrieval_text(make_concept("mesh:D1", "X", "Desc.", {"y"})) == "X; y. Desc.");
}

TEST_CASE("stemming") {
  CHECK(stem("allergies") == "allergy");
  CHECK(stem("wheezing") == "wheez");
  CHECK(stem("diagnosed") == "diagnos");
  CHECK(stem("bronchitis") == "bronchitis");
  CHECK(stem("asthma") == "asthma");
  CHECK(stem("infections") == "infection");
  CHECK(retrieval_tokens("Ear Infections!") == std::vector<std::string>{"ear", "infection"});
}

TEST_CASE("hashed embeddings") {
  const HashedBagOfWords provider;
  CHECK(provider.name() == "default");
  const auto v = provider.embed("asthma asthma wheeze");
  REQUIRE(v.size() == HashedBagOfWords::kDimension);
  double norm = 0.0;
  for (double x : v) norm += x * x;
  CHECK(norm == doctest::Approx(1.0));
  CHECK(v[HashedBagOfWords::bucket("asthma")] > v[HashedBagOfWords::bucket("wheeze")]);
  CHECK(HashedBagOfWords::bucket("asthma") == fnv1a64("asthma") % 256);
  CHECK(provider.embed("Wheezing") == provider.embed("wheez"));
  CHECK_THROWS_AS(provider.embed(""), ValidationError);
  CHECK_THROWS_AS(provider.embed(" ?! "), ValidationError);
}

TEST_CASE("cosine") {
  const std::vector<double> a{1, 0}, b{1, 1}, zero{0, 0}, three{1, 2, 3};
  CHECK(cosine(a, b) == doctest::Approx(0.7071).epsilon(1e-4));
  CHECK(cosine(a, a) == doctest::Approx(1.0));
  CHECK(cosine(a, zero) == 0.0);
  CHECK_THROWS_AS(cosine(a, three), ValidationError);
}

TEST_CASE("top_k ordering") {
  const OntologyStore store({make_concept("mesh:D3", "c"), make_concept("mesh:D1", "a"), make_concept("mesh:D2", "b"),
                             make_concept("mesh:D4", "d")});
  auto provider = std::make_shared<TableProvider>(std::map<std::string, EmbeddingVector>{
      {"a", {1, 0}}, {"b", {0, 1}}, {"c", {1, 1}}, {"d", {1, 1}}, {"q", {1, 0.9}}});
  const VectorIndex index(store, provider);
  CHECK(index.entries().size() == 4);

  const auto all = index.top_k("q", 10);
  REQUIRE(all.size() == 4);
  CHECK(all[0].concept_id == ConceptId::mesh("mesh:D3"));  // tie with D4, lower id first
  CHECK(all[1].concept_id == ConceptId::mesh("mesh:D4"));
  CHECK(all[0].score == all[1].score);
  CHECK(all[2].concept_id == ConceptId::mesh("mesh:D1"));
  for (std::size_t k = 1; k <= 4; ++k) {
    const auto part = index.top_k("q", k);
    REQUIRE(part.size() == k);
    for (std::size_t i = 0; i < k; ++i) CHECK(part[i].concept_id == all[i].concept_id);
  }
  const auto excluded = index.top_k(*index.vector_of(ConceptId::mesh("mesh:D3")), 2, {ConceptId::mesh("mesh:D3")});
  CHECK(excluded[0].concept_id == ConceptId::mesh("mesh:D4"));
  CHECK_THROWS_AS(index.top_k("q", 0), ValidationError);
  CHECK_THROWS_AS(index.top_k("   ", 1), ValidationError);
}

TEST_CASE("retriever puts exact synonym hits first") {
  const auto& store = fixture_store();
  const VectorIndex index(store, std::make_shared<HashedBagOfWords>());
  const Retriever retriever(store, index);

  const auto docs = retriever.retrieve("cold", "cold weather makes the child cough", 3);
  REQUIRE(docs.size() == 3);
  CHECK(docs[0].concept_id == ConceptId::mesh("mesh:D003139"));
  CHECK(docs[1].concept_id != docs[0].concept_id);
  CHECK(docs[2].concept_id != docs[1].concept_id);

  const auto only_exact = retriever.retrieve("hay fever", "", 2);
  REQUIRE(only_exact.size() == 1);
  CHECK_THROWS_AS(retriever.retrieve("asthma", "asthma", 0), ValidationError);

  const auto by_name = retriever.retrieve("no such term", "Asthma", 1);
  CHECK(by_name[0].concept_id == ConceptId::mesh("mesh:D001249"));
}
