#pragma once

// Brute-force reference implementations used to check the engine. These scan
// every entity and every triple with no indexes, no caches and no partial
// sorts, so they share nothing with the production query path beyond the
// normalization and verbalization definitions they are specified against.

#include <string>
#include <string_view>
#include <vector>

#include "factrank/embed.hpp"
#include "factrank/kb_store.hpp"
#include "factrank/mentions.hpp"
#include "factrank/rank.hpp"

namespace oracle {

// Token-set containment against every entity name, one by one.
std::vector<factrank::EntityId> candidates(const std::vector<std::string>& mention_tokens,
                                           const factrank::KbSnapshot& kb);

// Greedy left-to-right longest match using the brute-force containment check.
std::vector<factrank::MentionSpan> detect_mentions(std::string_view text,
                                                   const factrank::KbSnapshot& kb);

// Linear scan of all triples for head or tail membership, ascending id,
// truncated at cap.
std::vector<factrank::TripleId> pool(const factrank::KbSnapshot& kb,
                                     const std::vector<factrank::EntityId>& entities,
                                     std::size_t cap);

// Score every pooled triple (relation vectors embedded inline, no catalog
// cache), full sort, take k.
factrank::RetrievalResult retrieve(std::string_view query, const factrank::KbSnapshot& kb,
                                   const factrank::EmbeddingProvider& provider, std::size_t k,
                                   factrank::Combiner combiner = factrank::Combiner::ClampedProduct,
                                   std::size_t cap = factrank::kDefaultCandidateCap);

} // namespace oracle
