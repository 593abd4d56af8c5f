#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pheno/types.hpp"

namespace pheno::ontology {

struct OntologyConcept {
  ConceptId concept_id;
  std::string preferred_name;
  std::string description;
  std::vector<std::string> synonyms;

  bool operator==(const OntologyConcept&) const = default;
};

/// Immutable concept store with a case-folded name/synonym index.
class OntologyStore {
public:
  OntologyStore() = default;
  /// Throws ValidationError on duplicate ids, NONE ids, or empty names.
  explicit OntologyStore(std::vector<OntologyConcept> concepts);

  /// Line-delimited {"concept_id", "preferred_name", "description", "synonyms"}.
  static OntologyStore load(const std::filesystem::path& path);
  static OntologyStore parse(std::string_view content);

  /// Sorted by ascending concept id.
  const std::vector<OntologyConcept>& concepts() const { return concepts_; }
  std::size_t size() const { return concepts_.size(); }
  const OntologyConcept* find(const ConceptId& id) const;
  bool contains(const ConceptId& id) const { return find(id) != nullptr; }

  /// Concepts whose preferred name or a synonym equals `term` after
  /// trimming and case folding; ascending id.
  std::vector<const OntologyConcept*> lookup_exact(std::string_view term) const;

private:
  std::vector<OntologyConcept> concepts_;
  std::map<std::string, std::vector<std::size_t>> by_term_;
};

struct RagDocument {
  ConceptId concept_id;
  std::string body;

  bool operator==(const RagDocument&) const = default;
};

/// NAME / ID / DESCRIPTION / SYNONYMS, one labeled line each.
RagDocument build_rag_document(const OntologyConcept& concept_entry);

/// The text a concept is embedded under: the document's content fields
/// without the id line, so concepts differing only in id tie exactly.
std::string retrieval_text(const OntologyConcept& concept_entry);

/// Light suffix stripper used for retrieval tokens only.
std::string stem(std::string_view token);
/// Lowercased, stemmed word tokens.
std::vector<std::string> retrieval_tokens(std::string_view text);

using EmbeddingVector = std::vector<double>;

class EmbeddingProvider {
public:
  virtual ~EmbeddingProvider() = default;
  /// Label used in reports ("default", "pubmed", "jina", ...).
  virtual const std::string& name() const = 0;
  virtual std::size_t dimension() const = 0;
  /// Unit-norm vector. Throws ValidationError for empty or whitespace-only
  /// text and BackendError (carrying the provider name) on remote failure.
  virtual EmbeddingVector embed(std::string_view text) const = 0;
  virtual std::vector<EmbeddingVector> embed_all(const std::vector<std::string>& texts) const;
};

/// Built-in fallback: stemmed tokens hashed (FNV-1a) into 256 buckets,
/// counts L2-normalized.
class HashedBagOfWords final : public EmbeddingProvider {
public:
  static constexpr std::size_t kDimension = 256;

  explicit HashedBagOfWords(std::string name = "default") : name_(std::move(name)) {}
  const std::string& name() const override { return name_; }
  std::size_t dimension() const override { return kDimension; }
  EmbeddingVector embed(std::string_view text) const override;

  static std::size_t bucket(std::string_view token);

private:
  std::string name_;
};

/// Speaks {"texts": [...]} -> {"vectors": [[...], ...]}. Bearer token from
/// PHENO_EMBEDDING_TOKEN when set.
class RemoteEmbeddingProvider final : public EmbeddingProvider {
public:
  RemoteEmbeddingProvider(std::string name, std::string endpoint, std::size_t dimension,
                          std::chrono::milliseconds timeout = std::chrono::milliseconds(30000));
  const std::string& name() const override { return name_; }
  std::size_t dimension() const override { return dimension_; }
  EmbeddingVector embed(std::string_view text) const override;
  std::vector<EmbeddingVector> embed_all(const std::vector<std::string>& texts) const override;

private:
  std::string name_;
  std::string endpoint_;
  std::size_t dimension_;
  std::chrono::milliseconds timeout_;
};

/// Throws ValidationError on dimension mismatch. Zero vectors give 0.
double cosine(std::span<const double> u, std::span<const double> v);

struct ScoredConcept {
  ConceptId concept_id;
  double score = 0.0;
};

/// Exhaustive cosine index over every concept in a store.
class VectorIndex {
public:
  VectorIndex(const OntologyStore& store, std::shared_ptr<const EmbeddingProvider> provider);

  const EmbeddingProvider& provider() const { return *provider_; }
  const std::vector<std::pair<ConceptId, EmbeddingVector>>& entries() const { return entries_; }
  const EmbeddingVector* vector_of(const ConceptId& id) const;

  /// Descending cosine, ties by ascending id, at most k. Throws
  /// ValidationError when k == 0 or the query is empty.
  std::vector<ScoredConcept> top_k(std::string_view query, std::size_t k) const;
  std::vector<ScoredConcept> top_k(std::span<const double> query, std::size_t k,
                                   const std::vector<ConceptId>& exclude = {}) const;

private:
  std::shared_ptr<const EmbeddingProvider> provider_;
  std::vector<std::pair<ConceptId, EmbeddingVector>> entries_;  // ascending id
};

/// Exact synonym hits first, then nearest neighbours: synonym-exact matches
/// never lose to approximate ones.
class Retriever {
public:
  Retriever(const OntologyStore& store, const VectorIndex& index) : store_(store), index_(index) {}

  /// `term` is matched exactly; `query` drives the similarity ranking.
  std::vector<RagDocument> retrieve(std::string_view term, std::string_view query, std::size_t k) const;

private:
  const OntologyStore& store_;
  const VectorIndex& index_;
};

}  // namespace pheno::ontology
