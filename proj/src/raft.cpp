#include <set>

#include "pheno/error.hpp"
#include "pheno/orchestrate.hpp"
#include "pheno/util.hpp"

namespace pheno::orchestrate {

using nlohmann::json;
using nlohmann::ordered_json;

std::vector<RaftQuestion> load_raft_questions(std::string_view content) {
  std::vector<RaftQuestion> questions;
  const auto lines = io::split_lines(content);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (io::trim(lines[i]).empty()) continue;
    const auto where = "line " + std::to_string(i + 1) + ": ";
    try {
      const auto obj = json::parse(lines[i]);
      const auto id_text = obj.at("concept_id").get<std::string>();
      const auto id = ConceptId::parse(id_text);
      if (!id || id->is_none()) throw ValidationError(where + "bad concept_id \"" + id_text + "\"");
      questions.push_back({obj.at("question").get<std::string>(), *id});
    } catch (const json::exception& e) {
      throw ValidationError(where + "malformed question: " + e.what());
    }
  }
  return questions;
}

std::string render_cot_answer(const ontology::OntologyConcept& concept_entry, std::string_view question,
                              const templates::TemplateRegistry& registry) {
  return registry.render("raft_cot_answer", {{"question", std::string(question)},
                                             {"concept_name", concept_entry.preferred_name},
                                             {"concept_id", concept_entry.concept_id.str()},
                                             {"description", concept_entry.description}});
}

std::vector<RaftDatapoint> build_raft_dataset(const ontology::OntologyStore& store,
                                              const std::vector<RaftQuestion>& questions, std::size_t n_distractors,
                                              uint64_t seed, const ontology::VectorIndex* index,
                                              const templates::TemplateRegistry& registry) {
  if (n_distractors == 0) throw ValidationError("RAFT needs at least one distractor");
  if (store.size() < n_distractors + 1) {
    throw ValidationError("ontology holds " + std::to_string(store.size()) + " concepts; " +
                          std::to_string(n_distractors) + " distractors plus an oracle need " +
                          std::to_string(n_distractors + 1));
  }
  SeededRng rng(derive_seed(seed, "raft"));
  const auto& concepts = store.concepts();

  std::vector<RaftDatapoint> dataset;
  dataset.reserve(questions.size());
  for (const auto& q : questions) {
    const auto* oracle = store.find(q.gold);
    if (oracle == nullptr) throw ValidationError("gold concept " + q.gold.str() + " is not in the ontology");

    RaftDatapoint point;
    point.question = q.question;
    point.oracle = ontology::build_rag_document(*oracle);
    point.cot_answer = render_cot_answer(*oracle, q.question, registry);

    if (index != nullptr) {
      const auto* vec = index->vector_of(oracle->concept_id);
      if (vec == nullptr) throw ValidationError("index has no vector for " + oracle->concept_id.str());
      for (const auto& hit : index->top_k(*vec, n_distractors, {oracle->concept_id})) {
        point.distractors.push_back(ontology::build_rag_document(*store.find(hit.concept_id)));
      }
    } else {
      std::vector<std::size_t> pool;
      for (std::size_t i = 0; i < concepts.size(); ++i) {
        if (concepts[i].concept_id != oracle->concept_id) pool.push_back(i);
      }
      for (std::size_t i = 0; i < n_distractors; ++i) {
        std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
        point.distractors.push_back(ontology::build_rag_document(concepts[pool[i]]));
      }
    }
    dataset.push_back(std::move(point));
  }
  check_raft_invariants(dataset, n_distractors);
  return dataset;
}

void check_raft_invariants(const std::vector<RaftDatapoint>& dataset, std::size_t n_distractors) {
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& point = dataset[i];
    const auto where = "datapoint " + std::to_string(i) + ": ";
    if (point.distractors.size() != n_distractors) {
      throw ValidationError(where + std::to_string(point.distractors.size()) + " distractors, expected " +
                            std::to_string(n_distractors));
    }
    std::set<ConceptId> seen;
    for (const auto& d : point.distractors) {
      if (d.concept_id == point.oracle.concept_id) throw ValidationError(where + "oracle among distractors");
      if (!seen.insert(d.concept_id).second) throw ValidationError(where + "repeated distractor " + d.concept_id.str());
    }
  }
}

std::string write_raft(const std::vector<RaftDatapoint>& dataset) {
  std::string out;
  for (const auto& point : dataset) {
    ordered_json obj;
    obj["question"] = point.question;
    obj["oracle"] = point.oracle.body;
    obj["distractors"] = ordered_json::array();
    for (const auto& d : point.distractors) obj["distractors"].push_back(d.body);
    obj["cot_answer"] = point.cot_answer;
    out += obj.dump() + "\n";
  }
  return out;
}

}  // namespace pheno::orchestrate
