#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "factrank/rank.hpp"

namespace factrank {

// Entity anchor inside a parsed sentence, byte offsets into the sentence text
// after the markup has been replaced by the surface form.
struct Anchor {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::string target;  // canonical entity name as written in the markup
};

struct AnchoredSentence {
  std::string text;
  std::vector<Anchor> anchors;  // in-bounds, non-overlapping, ordered by begin
};

struct SentenceError {
  std::size_t sentence = 0;  // 1-based position in the input stream
  std::string message;
};

struct ParsedCorpus {
  std::vector<AnchoredSentence> sentences;
  std::vector<SentenceError> errors;
};

// Anchored markup: "[[Entity_Name]]" or "[[Entity_Name|surface text]]".
// Sentences split at '.' followed by whitespace, outside anchors, guarded by
// a small abbreviation list. Sentences with broken anchors are skipped and
// reported.
ParsedCorpus parse_anchored(std::string_view markup);

// Default pronoun filter for sentence starts; overridable via options.
std::span<const std::string_view> default_pronouns();

// False when the sentence starts with a configured pronoun or has no anchors.
bool eligible(const AnchoredSentence& sentence, std::span<const std::string> pronouns);

struct TrainingExample {
  std::string masked_text;
  std::vector<std::string> gold_tokens;       // surface tokens of the masked anchor
  std::vector<std::size_t> mask_indices;      // whitespace-token positions of the masks
  std::string target_entity;                  // anchor target (diagnostic)
  RetrievalResult retrieved;
};

struct BuildOptions {
  std::size_t k = 8;
  std::uint64_t seed = 0;
  std::vector<std::string> pronouns;  // empty -> defaults
  RankOptions rank;
};

struct BuildStats {
  std::size_t sentences = 0;
  std::size_t parse_errors = 0;
  std::size_t skipped_pronoun = 0;
  std::size_t skipped_anchorless = 0;
  std::size_t emitted = 0;
  std::size_t retrieval_failures = 0;
};

// Per eligible sentence: pick one anchor with the seeded generator, mask its
// surface tokens, retrieve context for the masked text, emit. A retrieval
// failure still emits the example, with an empty retrieval.
BuildStats build_examples(std::string_view markup, const KbSnapshot& kb,
                          const EmbeddingProvider& provider, const RelationEmbeddings& relations,
                          const BuildOptions& options,
                          const std::function<void(const TrainingExample&)>& sink);

// JSONL record: {"masked_text","gold_tokens","mask_indices","triples":[[h,r,t,relevance],...]}
std::string example_to_json(const TrainingExample& example, const KbSnapshot& kb);

} // namespace factrank
