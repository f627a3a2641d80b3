#include "support/oracle.hpp"

#include <algorithm>
#include <limits>
#include <set>

#include "factrank/text.hpp"
#include "factrank/verbalize.hpp"

namespace oracle {

using namespace factrank;

namespace {

bool subset_of(const std::set<std::string>& needles, const std::set<std::string>& haystack) {
  return std::includes(haystack.begin(), haystack.end(), needles.begin(), needles.end());
}

std::set<std::string> name_token_set(const KbSnapshot& kb, EntityId e) {
  auto toks = normalize_tokens(kb.entity_name(e));
  return {toks.begin(), toks.end()};
}

} // namespace

std::vector<EntityId> candidates(const std::vector<std::string>& mention_tokens,
                                 const KbSnapshot& kb) {
  std::set<std::string> needles(mention_tokens.begin(), mention_tokens.end());
  std::vector<EntityId> out;
  for (std::size_t i = 0; i < kb.entity_count(); ++i) {
    EntityId e{static_cast<std::uint32_t>(i)};
    if (subset_of(needles, name_token_set(kb, e))) out.push_back(e);
  }
  return out;  // ascending by construction
}

std::vector<MentionSpan> detect_mentions(std::string_view text, const KbSnapshot& kb) {
  std::vector<std::set<std::string>> names;
  names.reserve(kb.entity_count());
  for (std::size_t i = 0; i < kb.entity_count(); ++i) {
    names.push_back(name_token_set(kb, EntityId{static_cast<std::uint32_t>(i)}));
  }
  auto some_entity_contains = [&](const std::set<std::string>& run) {
    return std::any_of(names.begin(), names.end(),
                       [&](const std::set<std::string>& n) { return subset_of(run, n); });
  };

  std::vector<Token> toks = scan_tokens(text);
  std::vector<MentionSpan> out;
  std::size_t i = 0;
  while (i < toks.size()) {
    if (toks[i].is_mask) {
      ++i;
      continue;
    }
    std::set<std::string> run{toks[i].norm};
    if (!some_entity_contains(run)) {
      ++i;
      continue;
    }
    std::size_t j = i + 1;
    while (j < toks.size() && !toks[j].is_mask) {
      std::set<std::string> next = run;
      next.insert(toks[j].norm);
      if (!some_entity_contains(next)) break;
      run = std::move(next);
      ++j;
    }
    bool content = false;
    for (std::size_t t = i; t < j; ++t) {
      if (toks[t].capitalized || !is_stopword(toks[t].norm)) content = true;
    }
    if (content) {
      MentionSpan m;
      m.begin = toks[i].begin;
      m.end = toks[j - 1].end;
      m.surface = std::string(text.substr(m.begin, m.end - m.begin));
      for (std::size_t t = i; t < j; ++t) m.tokens.push_back(toks[t].norm);
      out.push_back(std::move(m));
      i = j;
    } else {
      ++i;
    }
  }
  return out;
}

std::vector<TripleId> pool(const KbSnapshot& kb, const std::vector<EntityId>& entities,
                           std::size_t cap) {
  std::set<EntityId> wanted(entities.begin(), entities.end());
  std::vector<TripleId> out;
  for (const Triple& t : kb.triples()) {
    if (wanted.contains(t.head) || wanted.contains(t.tail)) out.push_back(t.id);
  }
  if (out.size() > cap) out.resize(cap);
  return out;
}

RetrievalResult retrieve(std::string_view query, const KbSnapshot& kb,
                         const EmbeddingProvider& provider, std::size_t k, Combiner combiner,
                         std::size_t cap) {
  RetrievalResult result;
  result.query = std::string(query);
  result.k = k;

  std::set<EntityId> entity_set;
  for (const MentionSpan& m : oracle::detect_mentions(query, kb)) {
    for (EntityId e : oracle::candidates(m.tokens, kb)) entity_set.insert(e);
  }
  if (entity_set.empty()) return result;

  std::vector<EntityId> entities(entity_set.begin(), entity_set.end());
  std::vector<TripleId> ids = pool(kb, entities, std::numeric_limits<std::size_t>::max());
  if (ids.size() > cap) {
    ids.resize(cap);
    result.truncated_pool = true;
  }
  if (ids.empty()) return result;

  EmbeddingVector query_vec = provider.embed(query);
  std::vector<ScoredTriple> scored;
  for (TripleId id : ids) {
    Triple t = *kb.find_triple(id);
    ScoredTriple s;
    s.id = id;
    s.sim_triple = dot(query_vec, provider.embed(verbalize(t, kb).text));
    s.sim_relation =
        dot(query_vec, provider.embed(relation_phrase(kb.relation_label(t.relation))));
    if (combiner == Combiner::RawProduct) {
      s.relevance = s.sim_triple * s.sim_relation;
    } else {
      s.relevance = std::max(s.sim_triple, 0.0) * std::max(s.sim_relation, 0.0);
    }
    scored.push_back(s);
  }
  std::sort(scored.begin(), scored.end(), [](const ScoredTriple& a, const ScoredTriple& b) {
    if (a.relevance != b.relevance) return a.relevance > b.relevance;
    return a.id < b.id;
  });
  if (scored.size() > k) scored.resize(k);
  result.scored = std::move(scored);
  return result;
}

} // namespace oracle
