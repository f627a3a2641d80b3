#include "factrank/mentions.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

#include "factrank/text.hpp"

namespace factrank {

namespace {

std::vector<EntityId> intersect(const std::vector<EntityId>& a, const std::vector<EntityId>& b) {
  std::vector<EntityId> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

MentionSpan make_span(std::string_view text, std::span<const Token> run) {
  MentionSpan m;
  m.begin = run.front().begin;
  m.end = run.back().end;
  m.surface = std::string(text.substr(m.begin, m.end - m.begin));
  for (const Token& t : run) m.tokens.push_back(t.norm);
  return m;
}

bool has_content_token(std::span<const Token> run) {
  return std::any_of(run.begin(), run.end(), [](const Token& t) {
    return t.capitalized || !is_stopword(t.norm);
  });
}

} // namespace

std::vector<MentionSpan> GazetteerDetector::detect(std::string_view text,
                                                   const KbSnapshot& kb) const {
  std::vector<MentionSpan> out;
  std::vector<Token> toks = scan_tokens(text);
  std::size_t i = 0;
  while (i < toks.size()) {
    if (toks[i].is_mask) {
      ++i;
      continue;
    }
    const std::vector<EntityId>* first = kb.entities_with_token(toks[i].norm);
    if (first == nullptr || first->empty()) {
      ++i;
      continue;
    }
    // Extending a run only intersects postings, so the match is monotone:
    // grow until the candidate set empties.
    std::vector<EntityId> candidates = *first;
    std::size_t j = i + 1;
    while (j < toks.size() && !toks[j].is_mask) {
      const std::vector<EntityId>* next = kb.entities_with_token(toks[j].norm);
      if (next == nullptr) break;
      std::vector<EntityId> narrowed = intersect(candidates, *next);
      if (narrowed.empty()) break;
      candidates = std::move(narrowed);
      ++j;
    }
    std::span<const Token> run(toks.data() + i, j - i);
    if (has_content_token(run)) {
      out.push_back(make_span(text, run));
      i = j;
    } else {
      ++i;
    }
  }
  return out;
}

std::vector<MentionSpan> detect_mentions(std::string_view text, const KbSnapshot& kb) {
  return GazetteerDetector{}.detect(text, kb);
}

MentionCandidates candidate_entities(const MentionSpan& mention, const KbSnapshot& kb) {
  if (mention.tokens.empty()) {
    throw std::invalid_argument("mention has no tokens");
  }
  MentionCandidates out;
  out.mention = mention;
  const std::vector<EntityId>* first = kb.entities_with_token(mention.tokens.front());
  if (first == nullptr) return out;
  std::vector<EntityId> candidates = *first;
  for (std::size_t i = 1; i < mention.tokens.size() && !candidates.empty(); ++i) {
    const std::vector<EntityId>* next = kb.entities_with_token(mention.tokens[i]);
    if (next == nullptr) {
      candidates.clear();
      break;
    }
    candidates = intersect(candidates, *next);
  }
  out.entities = std::move(candidates);
  return out;
}

std::vector<MentionSpan> spans_from_records(std::istream& records, std::string_view text) {
  std::vector<MentionSpan> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(records, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t tab1 = line.find('\t');
    std::size_t tab2 = tab1 == std::string::npos ? std::string::npos : line.find('\t', tab1 + 1);
    if (tab2 == std::string::npos) {
      throw std::runtime_error("span record line " + std::to_string(line_no) +
                               ": expected start<TAB>end<TAB>label");
    }
    std::size_t begin = 0, end = 0;
    try {
      begin = std::stoull(line.substr(0, tab1));
      end = std::stoull(line.substr(tab1 + 1, tab2 - tab1 - 1));
    } catch (const std::exception&) {
      throw std::runtime_error("span record line " + std::to_string(line_no) +
                               ": offsets must be integers");
    }
    if (begin >= end || end > text.size()) {
      throw std::runtime_error("span record line " + std::to_string(line_no) +
                               ": span out of range");
    }
    MentionSpan m;
    m.begin = begin;
    m.end = end;
    m.surface = std::string(text.substr(begin, end - begin));
    m.tokens = normalize_tokens(m.surface);
    if (m.tokens.empty()) {
      throw std::runtime_error("span record line " + std::to_string(line_no) +
                               ": span has no tokens");
    }
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<MentionSpan> RecordSpanSource::detect(std::string_view text,
                                                  const KbSnapshot& kb) const {
  (void)kb;
  std::istringstream in(records_);
  return spans_from_records(in, text);
}

} // namespace factrank
