#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "factrank/kb_store.hpp"

namespace factrank {

// A detected entity mention: byte span into the query text plus the
// normalized tokens the span covers.
struct MentionSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::string surface;
  std::vector<std::string> tokens;
};

struct MentionCandidates {
  MentionSpan mention;
  std::vector<EntityId> entities;  // ascending
};

// Detector seam: the gazetteer is the default; external NER output can be
// supplied through the same interface.
class SpanSource {
 public:
  virtual ~SpanSource() = default;
  virtual std::vector<MentionSpan> detect(std::string_view text, const KbSnapshot& kb) const = 0;
};

// Left-to-right longest-match over the entity-name token index. A run is a
// mention when its token set is contained in some entity's name tokens and it
// has at least one capitalized or non-stopword token. Mask placeholders never
// join a run. Runs do not overlap.
class GazetteerDetector final : public SpanSource {
 public:
  std::vector<MentionSpan> detect(std::string_view text, const KbSnapshot& kb) const override;
};

std::vector<MentionSpan> detect_mentions(std::string_view text, const KbSnapshot& kb);

// Entities whose name tokens contain every token of the mention, ascending.
MentionCandidates candidate_entities(const MentionSpan& mention, const KbSnapshot& kb);

// Reads newline-delimited records "start<TAB>end<TAB>label" with byte offsets
// into the exact query text; label is informational only. Throws
// std::runtime_error on unparsable records or out-of-range spans.
class RecordSpanSource final : public SpanSource {
 public:
  explicit RecordSpanSource(std::string records) : records_(std::move(records)) {}
  std::vector<MentionSpan> detect(std::string_view text, const KbSnapshot& kb) const override;

 private:
  std::string records_;
};

std::vector<MentionSpan> spans_from_records(std::istream& records, std::string_view text);

} // namespace factrank
