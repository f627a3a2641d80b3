#include "factrank/rank.hpp"

#include <algorithm>
#include <mutex>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

#include "factrank/verbalize.hpp"

namespace factrank {

namespace {

bool ranks_before(const ScoredTriple& a, const ScoredTriple& b) {
  if (a.relevance != b.relevance) return a.relevance > b.relevance;
  return a.id < b.id;
}

} // namespace

double combine_scores(double sim_triple, double sim_relation, Combiner combiner) {
  if (combiner == Combiner::RawProduct) return sim_triple * sim_relation;
  return std::max(sim_triple, 0.0) * std::max(sim_relation, 0.0);
}

std::vector<ScoredTriple> score_candidates(std::string_view query, const CandidateSet& candidates,
                                           const KbSnapshot& kb,
                                           const EmbeddingProvider& provider,
                                           const RelationEmbeddings& relations,
                                           const RankOptions& options) {
  if (relations.provider() != &provider) {
    throw std::invalid_argument(
        "relation catalog was embedded by a different provider instance");
  }
  std::vector<ScoredTriple> out(candidates.ids.size());
  if (candidates.ids.empty()) return out;

  const EmbeddingVector query_vec = provider.embed(query);

  auto score_range = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      TripleId id = candidates.ids[i];
      auto triple = kb.find_triple(id);
      if (!triple) throw std::out_of_range("candidate triple not in snapshot");
      ScoredTriple s;
      s.id = id;
      s.sim_triple = dot(query_vec, provider.embed(verbalize(*triple, kb).text));
      s.sim_relation = dot(query_vec, relations.vector_for(triple->relation));
      s.relevance = combine_scores(s.sim_triple, s.sim_relation, options.combiner);
      out[i] = std::move(s);
    }
  };

  unsigned threads = std::max(1u, options.threads);
  if (threads == 1 || candidates.ids.size() < 2 * threads) {
    score_range(0, candidates.ids.size());
    return out;
  }
  // Each worker owns a disjoint index range; output is schedule-independent.
  std::vector<std::thread> workers;
  std::size_t chunk = (candidates.ids.size() + threads - 1) / threads;
  std::exception_ptr failure;
  std::mutex failure_mu;
  for (unsigned w = 0; w < threads; ++w) {
    std::size_t begin = w * chunk;
    std::size_t end = std::min(candidates.ids.size(), begin + chunk);
    if (begin >= end) break;
    workers.emplace_back([&, begin, end] {
      try {
        score_range(begin, end);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
      }
    });
  }
  for (auto& t : workers) t.join();
  if (failure) std::rethrow_exception(failure);
  return out;
}

std::vector<EntityId> query_entities(std::string_view query, const KbSnapshot& kb,
                                     const SpanSource* detector) {
  GazetteerDetector gazetteer;
  const SpanSource& source = detector ? *detector : static_cast<const SpanSource&>(gazetteer);
  std::vector<EntityId> entities;
  for (const MentionSpan& span : source.detect(query, kb)) {
    MentionCandidates mc = candidate_entities(span, kb);
    entities.insert(entities.end(), mc.entities.begin(), mc.entities.end());
  }
  std::sort(entities.begin(), entities.end());
  entities.erase(std::unique(entities.begin(), entities.end()), entities.end());
  return entities;
}

RetrievalResult retrieve(std::string_view query, const KbSnapshot& kb,
                         const EmbeddingProvider& provider, const RelationEmbeddings& relations,
                         const RankOptions& options, const SpanSource* detector) {
  if (options.k == 0) throw std::invalid_argument("k must be positive");
  RetrievalResult result;
  result.query = std::string(query);
  result.k = options.k;

  std::vector<EntityId> entities = query_entities(query, kb, detector);
  if (entities.empty()) return result;

  CandidateSet pool = kb.triples_for_entities(entities, options.candidate_cap);
  result.truncated_pool = pool.truncated;
  if (pool.ids.empty()) return result;

  std::vector<ScoredTriple> scored =
      score_candidates(query, pool, kb, provider, relations, options);
  std::size_t keep = std::min(options.k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + keep, scored.end(), ranks_before);
  scored.resize(keep);
  result.scored = std::move(scored);
  return result;
}

std::map<std::size_t, RetrievalResult> sweep_k(std::string_view query, const KbSnapshot& kb,
                                               const EmbeddingProvider& provider,
                                               const RelationEmbeddings& relations,
                                               std::span<const std::size_t> ks,
                                               RankOptions options, const SpanSource* detector) {
  if (ks.empty()) throw std::invalid_argument("k sweep needs at least one k");
  std::size_t k_max = *std::max_element(ks.begin(), ks.end());
  options.k = k_max;
  RetrievalResult full = retrieve(query, kb, provider, relations, options, detector);

  std::map<std::size_t, RetrievalResult> out;
  for (std::size_t k : ks) {
    if (k == 0) throw std::invalid_argument("k must be positive");
    RetrievalResult r;
    r.query = full.query;
    r.k = k;
    r.truncated_pool = full.truncated_pool;
    std::size_t keep = std::min(k, full.scored.size());
    r.scored.assign(full.scored.begin(), full.scored.begin() + keep);
    out.emplace(k, std::move(r));
  }
  return out;
}

std::string render_retrieval_jsonl(const RetrievalResult& result, const KbSnapshot& kb) {
  std::string out;
  for (std::size_t i = 0; i < result.scored.size(); ++i) {
    const ScoredTriple& s = result.scored[i];
    auto triple = kb.find_triple(s.id);
    if (!triple) throw std::out_of_range("scored triple not in snapshot");
    nlohmann::json j;
    j["rank"] = i + 1;
    j["head"] = kb.entity_name(triple->head);
    j["relation"] = kb.relation_label(triple->relation);
    j["tail"] = kb.entity_name(triple->tail);
    j["sim_triple"] = s.sim_triple;
    j["sim_relation"] = s.sim_relation;
    j["relevance"] = s.relevance;
    out += j.dump();
    out.push_back('\n');
  }
  return out;
}

} // namespace factrank
