#include "pheno/ontology.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <json.hpp>

#include "pheno/error.hpp"
#include "pheno/http.hpp"
#include "pheno/unicode.hpp"
#include "pheno/util.hpp"

namespace pheno::ontology {

using nlohmann::json;

namespace {

std::string fold_term(std::string_view term) { return unicode::lower(io::trim(term)); }

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace

OntologyStore::OntologyStore(std::vector<OntologyConcept> concepts) : concepts_(std::move(concepts)) {
  std::sort(concepts_.begin(), concepts_.end(),
            [](const auto& a, const auto& b) { return a.concept_id < b.concept_id; });
  for (std::size_t i = 0; i < concepts_.size(); ++i) {
    const auto& c = concepts_[i];
    if (c.concept_id.is_none()) throw ValidationError("concept without an id");
    if (i > 0 && concepts_[i - 1].concept_id == c.concept_id) {
      throw ValidationError("duplicate concept_id " + c.concept_id.str());
    }
    if (io::trim(c.preferred_name).empty()) {
      throw ValidationError("concept " + c.concept_id.str() + " has an empty preferred_name");
    }
    std::set<std::string> terms{fold_term(c.preferred_name)};
    for (const auto& s : c.synonyms) {
      if (!io::trim(s).empty()) terms.insert(fold_term(s));
    }
    for (const auto& t : terms) by_term_[t].push_back(i);
  }
}

OntologyStore OntologyStore::parse(std::string_view content) {
  std::vector<OntologyConcept> concepts;
  std::set<ConceptId> seen;
  const auto lines = io::split_lines(content);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (io::trim(lines[i]).empty()) continue;
    const auto where = "line " + std::to_string(i + 1) + ": ";
    try {
      const auto obj = json::parse(lines[i]);
      OntologyConcept c;
      const auto id_text = obj.at("concept_id").get<std::string>();
      const auto id = ConceptId::parse(id_text);
      if (!id || id->is_none()) throw ValidationError(where + "bad concept_id \"" + id_text + "\"");
      c.concept_id = *id;
      c.preferred_name = obj.value("preferred_name", std::string());
      if (io::trim(c.preferred_name).empty()) throw ValidationError(where + "missing preferred_name");
      c.description = obj.value("description", std::string());
      c.synonyms = obj.value("synonyms", std::vector<std::string>{});
      if (!seen.insert(c.concept_id).second) {
        throw ValidationError(where + "duplicate concept_id " + c.concept_id.str());
      }
      concepts.push_back(std::move(c));
    } catch (const json::exception& e) {
      throw ValidationError(where + "malformed concept: " + e.what());
    }
  }
  return OntologyStore(std::move(concepts));
}

OntologyStore OntologyStore::load(const std::filesystem::path& path) { return parse(io::read_file(path)); }

const OntologyConcept* OntologyStore::find(const ConceptId& id) const {
  auto it = std::lower_bound(concepts_.begin(), concepts_.end(), id,
                             [](const OntologyConcept& c, const ConceptId& key) { return c.concept_id < key; });
  return it != concepts_.end() && it->concept_id == id ? &*it : nullptr;
}

std::vector<const OntologyConcept*> OntologyStore::lookup_exact(std::string_view term) const {
  std::vector<const OntologyConcept*> out;
  if (auto it = by_term_.find(fold_term(term)); it != by_term_.end()) {
    for (std::size_t i : it->second) out.push_back(&concepts_[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------

RagDocument build_rag_document(const OntologyConcept& c) {
  std::string synonyms;
  for (const auto& s : c.synonyms) {
    if (!synonyms.empty()) synonyms += "; ";
    synonyms += s;
  }
  if (synonyms.empty()) synonyms = "(none)";
  return {c.concept_id, "NAME: " + c.preferred_name + "\nID: " + c.concept_id.str() +
                            "\nDESCRIPTION: " + c.description + "\nSYNONYMS: " + synonyms};
}

std::string retrieval_text(const OntologyConcept& c) {
  std::string text = c.preferred_name;
  for (const auto& s : c.synonyms) text += "; " + s;
  if (!c.description.empty()) text += ". " + c.description;
  return text;
}

std::string stem(std::string_view token) {
  std::string s(token);
  if (s.size() > 4 && ends_with(s, "ies")) {
    s.replace(s.size() - 3, 3, "y");
  } else if (ends_with(s, "sses")) {
    s.erase(s.size() - 2);
  } else if (s.size() > 3 && ends_with(s, "s") && !ends_with(s, "ss") && !ends_with(s, "us") &&
             !ends_with(s, "is")) {
    s.pop_back();
  }
  if (s.size() >= 6 && ends_with(s, "ing")) {
    s.erase(s.size() - 3);
  } else if (s.size() >= 5 && ends_with(s, "ed")) {
    s.erase(s.size() - 2);
  }
  return s;
}

std::vector<std::string> retrieval_tokens(std::string_view text) {
  auto tokens = unicode::word_tokens(text);
  for (auto& t : tokens) t = stem(t);
  return tokens;
}

// ---------------------------------------------------------------------------

std::vector<EmbeddingVector> EmbeddingProvider::embed_all(const std::vector<std::string>& texts) const {
  std::vector<EmbeddingVector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(embed(t));
  return out;
}

std::size_t HashedBagOfWords::bucket(std::string_view token) { return fnv1a64(token) % kDimension; }

EmbeddingVector HashedBagOfWords::embed(std::string_view text) const {
  const auto tokens = retrieval_tokens(text);
  if (tokens.empty()) throw ValidationError("cannot embed text without word tokens");
  EmbeddingVector v(kDimension, 0.0);
  for (const auto& t : tokens) v[bucket(t)] += 1.0;
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

RemoteEmbeddingProvider::RemoteEmbeddingProvider(std::string name, std::string endpoint, std::size_t dimension,
                                                 std::chrono::milliseconds timeout)
    : name_(std::move(name)), endpoint_(std::move(endpoint)), dimension_(dimension), timeout_(timeout) {}

EmbeddingVector RemoteEmbeddingProvider::embed(std::string_view text) const {
  return embed_all({std::string(text)}).front();
}

std::vector<EmbeddingVector> RemoteEmbeddingProvider::embed_all(const std::vector<std::string>& texts) const {
  for (const auto& t : texts) {
    if (io::trim(t).empty()) throw ValidationError("cannot embed empty text");
  }
  if (texts.empty()) return {};
  try {
    const auto reply = http::post_json(endpoint_, json{{"texts", texts}}, timeout_, "PHENO_EMBEDDING_TOKEN");
    const auto& vectors = reply.at("vectors");
    if (!vectors.is_array() || vectors.size() != texts.size()) {
      throw BackendError("expected " + std::to_string(texts.size()) + " vectors");
    }
    std::vector<EmbeddingVector> out;
    for (const auto& v : vectors) {
      auto vec = v.get<EmbeddingVector>();
      if (vec.size() != dimension_) {
        throw BackendError("vector of dimension " + std::to_string(vec.size()) + ", expected " +
                           std::to_string(dimension_));
      }
      double norm = 0.0;
      for (double x : vec) norm += x * x;
      if (norm == 0.0) throw BackendError("zero vector");
      norm = std::sqrt(norm);
      for (double& x : vec) x /= norm;
      out.push_back(std::move(vec));
    }
    return out;
  } catch (const BackendError& e) {
    throw BackendError("embedding provider \"" + name_ + "\": " + e.what());
  } catch (const json::exception& e) {
    throw BackendError("embedding provider \"" + name_ + "\": malformed reply: " + e.what());
  }
}

double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) {
    throw ValidationError("dimension mismatch: " + std::to_string(u.size()) + " vs " + std::to_string(v.size()));
  }
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  if (uu == 0.0 || vv == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
}

// ---------------------------------------------------------------------------

VectorIndex::VectorIndex(const OntologyStore& store, std::shared_ptr<const EmbeddingProvider> provider)
    : provider_(std::move(provider)) {
  if (!provider_) throw ValidationError("vector index needs an embedding provider");
  std::vector<std::string> texts;
  for (const auto& c : store.concepts()) texts.push_back(retrieval_text(c));
  auto vectors = provider_->embed_all(texts);
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    entries_.emplace_back(store.concepts()[i].concept_id, std::move(vectors[i]));
  }
}

const EmbeddingVector* VectorIndex::vector_of(const ConceptId& id) const {
  auto it = std::lower_bound(entries_.begin(), entries_.end(), id,
                             [](const auto& e, const ConceptId& key) { return e.first < key; });
  return it != entries_.end() && it->first == id ? &it->second : nullptr;
}

std::vector<ScoredConcept> VectorIndex::top_k(std::string_view query, std::size_t k) const {
  if (k == 0) throw ValidationError("k must be positive");
  if (io::trim(query).empty()) throw ValidationError("empty query");
  const auto q = provider_->embed(query);
  return top_k(q, k);
}

std::vector<ScoredConcept> VectorIndex::top_k(std::span<const double> query, std::size_t k,
                                              const std::vector<ConceptId>& exclude) const {
  if (k == 0) throw ValidationError("k must be positive");
  std::vector<ScoredConcept> scored;
  scored.reserve(entries_.size());
  for (const auto& [id, vec] : entries_) {
    if (std::find(exclude.begin(), exclude.end(), id) != exclude.end()) continue;
    scored.push_back({id, cosine(query, vec)});
  }
  std::sort(scored.begin(), scored.end(), [](const ScoredConcept& a, const ScoredConcept& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.concept_id < b.concept_id;
  });
  if (scored.size() > k) scored.resize(k);
  return scored;
}

std::vector<RagDocument> Retriever::retrieve(std::string_view term, std::string_view query, std::size_t k) const {
  if (k == 0) throw ValidationError("k must be positive");
  std::vector<RagDocument> docs;
  std::vector<ConceptId> taken;
  for (const auto* c : store_.lookup_exact(term)) {
    if (docs.size() == k) break;
    docs.push_back(build_rag_document(*c));
    taken.push_back(c->concept_id);
  }
  if (docs.size() < k && !io::trim(query).empty()) {
    const auto q = index_.provider().embed(query);
    for (const auto& hit : index_.top_k(q, k - docs.size(), taken)) {
      docs.push_back(build_rag_document(*store_.find(hit.concept_id)));
    }
  }
  return docs;
}

}  // namespace pheno::ontology
