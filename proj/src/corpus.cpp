#include "factrank/corpus.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <random>

#include <nlohmann/json.hpp>

#include "factrank/text.hpp"
#include "factrank/verbalize.hpp"

namespace factrank {

namespace {

constexpr std::array<std::string_view, 7> kDefaultPronouns = {
    "he", "she", "her", "his", "they", "them", "it",
};

constexpr std::array<std::string_view, 18> kAbbreviations = {
    "mr", "mrs", "ms", "dr",  "prof", "sr",  "jr",  "st",  "vs",
    "etc", "e.g", "i.e", "fig", "vol",  "no",  "inc", "ltd", "co",
};

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

// Word immediately before a period, for the abbreviation guard. Single
// letters count as initials ("J. R. R. Tolkien").
bool abbreviation_before(std::string_view text, std::size_t dot) {
  std::size_t begin = dot;
  while (begin > 0 && !is_space(text[begin - 1])) --begin;
  std::string word = ascii_lower(text.substr(begin, dot - begin));
  if (word.size() == 1 && word[0] >= 'a' && word[0] <= 'z') return true;
  return std::find(kAbbreviations.begin(), kAbbreviations.end(), word) != kAbbreviations.end();
}

struct Chunk {
  std::size_t begin = 0;
  std::size_t end = 0;
};

// Sentence boundaries: '.' followed by whitespace, outside closed anchors.
// An unmatched "[[" does not suppress boundaries; the sentence containing it
// fails anchor parsing later.
std::vector<Chunk> split_sentences(std::string_view text) {
  std::vector<Chunk> chunks;
  std::size_t start = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text.compare(i, 2, "[[") == 0) {
      std::size_t close = text.find("]]", i + 2);
      if (close != std::string_view::npos) {
        i = close + 2;
        continue;
      }
    }
    if (text[i] == '.' && i + 1 < text.size() && is_space(text[i + 1]) &&
        !abbreviation_before(text, i)) {
      chunks.push_back({start, i + 1});
      i += 2;
      start = i;
      continue;
    }
    ++i;
  }
  if (start < text.size()) chunks.push_back({start, text.size()});
  return chunks;
}

struct SentenceParse {
  AnchoredSentence sentence;
  bool ok = false;
  std::string error;
};

SentenceParse parse_sentence(std::string_view raw) {
  SentenceParse out;
  std::size_t i = 0;
  while (i < raw.size()) {
    if (raw.compare(i, 2, "[[") != 0) {
      out.sentence.text.push_back(raw[i]);
      ++i;
      continue;
    }
    std::size_t close = raw.find("]]", i + 2);
    if (close == std::string_view::npos) {
      out.error = "unclosed anchor";
      return out;
    }
    std::string_view body = raw.substr(i + 2, close - i - 2);
    std::size_t pipe = body.find('|');
    std::string_view target = pipe == std::string_view::npos ? body : body.substr(0, pipe);
    std::string_view surface = pipe == std::string_view::npos ? body : body.substr(pipe + 1);
    if (target.empty() || surface.empty() || normalize_tokens(surface).empty()) {
      out.error = "empty anchor target or surface";
      return out;
    }
    if (body.find("[[") != std::string_view::npos) {
      out.error = "nested anchor";
      return out;
    }
    // The anchor covers the trimmed surface; padding whitespace in the markup
    // stays plain text so mask substitution round-trips exactly.
    std::size_t lead = 0;
    while (lead < surface.size() && is_space(surface[lead])) ++lead;
    std::size_t trail = surface.size();
    while (trail > lead && is_space(surface[trail - 1])) --trail;
    Anchor a;
    a.begin = out.sentence.text.size() + lead;
    out.sentence.text.append(surface);
    a.end = out.sentence.text.size() - (surface.size() - trail);
    a.target = std::string(target);
    out.sentence.anchors.push_back(std::move(a));
    i = close + 2;
  }
  out.ok = true;
  return out;
}

std::vector<std::string> whitespace_split(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (is_space(text[i])) {
      ++i;
      continue;
    }
    std::size_t begin = i;
    while (i < text.size() && !is_space(text[i])) ++i;
    out.emplace_back(text.substr(begin, i - begin));
  }
  return out;
}

std::size_t count_ws_tokens(std::string_view text) {
  return whitespace_split(text).size();
}

} // namespace

std::span<const std::string_view> default_pronouns() {
  return kDefaultPronouns;
}

ParsedCorpus parse_anchored(std::string_view markup) {
  ParsedCorpus out;
  std::size_t ordinal = 0;
  for (const Chunk& c : split_sentences(markup)) {
    std::string_view raw = markup.substr(c.begin, c.end - c.begin);
    while (!raw.empty() && is_space(raw.front())) raw.remove_prefix(1);
    while (!raw.empty() && is_space(raw.back())) raw.remove_suffix(1);
    if (raw.empty()) continue;
    ++ordinal;
    SentenceParse parsed = parse_sentence(raw);
    if (!parsed.ok) {
      out.errors.push_back({ordinal, parsed.error});
      continue;
    }
    out.sentences.push_back(std::move(parsed.sentence));
  }
  return out;
}

bool eligible(const AnchoredSentence& sentence, std::span<const std::string> pronouns) {
  if (sentence.anchors.empty()) return false;
  std::vector<std::string> toks = normalize_tokens(sentence.text);
  if (toks.empty()) return false;
  return std::find(pronouns.begin(), pronouns.end(), toks.front()) == pronouns.end();
}

BuildStats build_examples(std::string_view markup, const KbSnapshot& kb,
                          const EmbeddingProvider& provider, const RelationEmbeddings& relations,
                          const BuildOptions& options,
                          const std::function<void(const TrainingExample&)>& sink) {
  BuildStats stats;
  std::vector<std::string> pronouns = options.pronouns;
  if (pronouns.empty()) {
    for (auto p : kDefaultPronouns) pronouns.emplace_back(p);
  }

  ParsedCorpus corpus = parse_anchored(markup);
  stats.parse_errors = corpus.errors.size();
  stats.sentences = corpus.sentences.size() + corpus.errors.size();

  std::mt19937_64 rng(options.seed);
  RankOptions rank = options.rank;
  rank.k = options.k;

  for (const AnchoredSentence& sentence : corpus.sentences) {
    if (sentence.anchors.empty()) {
      ++stats.skipped_anchorless;
      continue;
    }
    if (!eligible(sentence, pronouns)) {
      ++stats.skipped_pronoun;
      continue;
    }
    // mt19937_64 output is pinned by the standard; modulo keeps the stream
    // identical everywhere, unlike uniform_int_distribution.
    const Anchor& anchor = sentence.anchors[rng() % sentence.anchors.size()];
    std::string_view text = sentence.text;
    std::string_view surface = text.substr(anchor.begin, anchor.end - anchor.begin);

    TrainingExample ex;
    ex.gold_tokens = whitespace_split(surface);
    ex.target_entity = anchor.target;
    std::string masks;
    for (std::size_t m = 0; m < ex.gold_tokens.size(); ++m) {
      if (m > 0) masks.push_back(' ');
      masks.append(kMaskToken);
    }
    ex.masked_text = std::string(text.substr(0, anchor.begin));
    ex.masked_text += masks;
    ex.masked_text += text.substr(anchor.end);

    std::string_view prefix = text.substr(0, anchor.begin);
    std::size_t first_index = count_ws_tokens(prefix);
    if (!prefix.empty() && !is_space(prefix.back())) --first_index;  // mask glues to prefix tail
    for (std::size_t m = 0; m < ex.gold_tokens.size(); ++m) {
      ex.mask_indices.push_back(first_index + m);
    }

    try {
      ex.retrieved = retrieve(ex.masked_text, kb, provider, relations, rank);
    } catch (const std::exception&) {
      ++stats.retrieval_failures;
      ex.retrieved = RetrievalResult{};
      ex.retrieved.query = ex.masked_text;
      ex.retrieved.k = options.k;
    }
    sink(ex);
    ++stats.emitted;
  }
  return stats;
}

std::string example_to_json(const TrainingExample& example, const KbSnapshot& kb) {
  nlohmann::json j;
  j["masked_text"] = example.masked_text;
  j["gold_tokens"] = example.gold_tokens;
  j["mask_indices"] = example.mask_indices;
  nlohmann::json triples = nlohmann::json::array();
  for (const ScoredTriple& s : example.retrieved.scored) {
    auto triple = kb.find_triple(s.id);
    if (!triple) throw std::out_of_range("retrieved triple not in snapshot");
    triples.push_back(nlohmann::json::array({kb.entity_name(triple->head),
                                             kb.relation_label(triple->relation),
                                             kb.entity_name(triple->tail), s.relevance}));
  }
  j["triples"] = std::move(triples);
  return j.dump();
}

} // namespace factrank
