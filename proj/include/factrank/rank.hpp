#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "factrank/embed.hpp"
#include "factrank/kb_store.hpp"
#include "factrank/mentions.hpp"

namespace factrank {

struct ScoredTriple {
  TripleId id{};
  double sim_triple = 0.0;    // Emb(query) . Emb(verbalized triple)
  double sim_relation = 0.0;  // Emb(query) . Emb(relation phrase)
  double relevance = 0.0;
};

struct RetrievalResult {
  std::string query;
  std::size_t k = 0;
  std::vector<ScoredTriple> scored;  // non-increasing relevance, ties by ascending id
  bool truncated_pool = false;
};

// ClampedProduct (default): max(sim_triple,0) * max(sim_relation,0), so two
// strongly negative factors cannot combine into a high score. RawProduct is
// the literal product.
enum class Combiner { ClampedProduct, RawProduct };

struct RankOptions {
  std::size_t k = 8;
  Combiner combiner = Combiner::ClampedProduct;
  std::size_t candidate_cap = kDefaultCandidateCap;
  unsigned threads = 1;  // per-candidate scoring is schedule-independent
};

double combine_scores(double sim_triple, double sim_relation, Combiner combiner);

// Scores every candidate. The relation catalog must come from the provider
// instance passed here (one embedding space); a mismatch throws
// std::invalid_argument. Candidate order is preserved.
std::vector<ScoredTriple> score_candidates(std::string_view query, const CandidateSet& candidates,
                                           const KbSnapshot& kb,
                                           const EmbeddingProvider& provider,
                                           const RelationEmbeddings& relations,
                                           const RankOptions& options = {});

// Full pipeline: detect mentions, collect candidate entities, pool their
// triples, score, and keep the top k (selection by relevance desc, id asc).
// No mentions or no candidates is not an error: the result is empty.
RetrievalResult retrieve(std::string_view query, const KbSnapshot& kb,
                         const EmbeddingProvider& provider, const RelationEmbeddings& relations,
                         const RankOptions& options = {},
                         const SpanSource* detector = nullptr);

// One scoring pass shared across all k values, so smaller-k results are
// prefixes of larger-k results by construction.
std::map<std::size_t, RetrievalResult> sweep_k(std::string_view query, const KbSnapshot& kb,
                                               const EmbeddingProvider& provider,
                                               const RelationEmbeddings& relations,
                                               std::span<const std::size_t> ks,
                                               RankOptions options = {},
                                               const SpanSource* detector = nullptr);

// Union of candidate entities over all detected mentions, ascending, deduped.
std::vector<EntityId> query_entities(std::string_view query, const KbSnapshot& kb,
                                     const SpanSource* detector = nullptr);

// JSON-lines rendering used verbatim by both the CLI and the HTTP service:
// one object per rank with the triple as strings and all three scores.
std::string render_retrieval_jsonl(const RetrievalResult& result, const KbSnapshot& kb);

} // namespace factrank
