#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace factrank {

enum class EntityId : std::uint32_t {};
enum class RelationId : std::uint32_t {};
enum class TripleId : std::uint64_t {};

constexpr std::size_t to_index(EntityId id) { return static_cast<std::size_t>(id); }
constexpr std::size_t to_index(RelationId id) { return static_cast<std::size_t>(id); }
constexpr std::uint64_t to_index(TripleId id) { return static_cast<std::uint64_t>(id); }

// A fact <head, relation, tail>. Triple ids are monotone per store and never
// reused; removing and re-adding the same fact yields a fresh id.
struct Triple {
  EntityId head{};
  RelationId relation{};
  EntityId tail{};
  TripleId id{};
};

struct KbStats {
  std::size_t triples = 0;
  std::size_t entities = 0;  // interned entities; removal keeps them interned
  std::size_t relations = 0;
};

// Per-query candidate pool, ascending triple id. `truncated` is set when the
// pool hit the configured cap and was cut at the cap boundary.
struct CandidateSet {
  std::vector<TripleId> ids;
  bool truncated = false;
};

inline constexpr std::size_t kDefaultCandidateCap = 50'000;

// Immutable view of the knowledge base. Safe for concurrent readers; produced
// and swapped atomically by KnowledgeBase.
class KbSnapshot {
 public:
  KbSnapshot() = default;

  const std::string& entity_name(EntityId id) const;
  const std::string& relation_label(RelationId id) const;
  std::optional<EntityId> find_entity(std::string_view canonical_name) const;
  std::optional<RelationId> find_relation(std::string_view label) const;
  std::optional<Triple> find_triple(TripleId id) const;
  std::optional<TripleId> find_fact(std::string_view head, std::string_view relation,
                                    std::string_view tail) const;

  // All live triples, ascending id.
  const std::vector<Triple>& triples() const { return triples_; }
  std::size_t entity_count() const { return entity_names_.size(); }
  std::size_t relation_count() const { return relation_labels_.size(); }
  KbStats stats() const;
  std::uint64_t version() const { return version_; }

  // Sorted posting list of entities whose name contains the token; null when
  // the token is unknown.
  const std::vector<EntityId>* entities_with_token(std::string_view normalized_token) const;

  // Triples where the entity appears as head or tail, ascending id.
  std::span<const TripleId> triples_of_entity(EntityId id) const;

  // Union of adjacency over the given entities, deduplicated, ascending id,
  // truncated at `cap` (smallest ids kept).
  CandidateSet triples_for_entities(std::span<const EntityId> entities,
                                    std::size_t cap = kDefaultCandidateCap) const;

  // Canonical dump: lines "head\trelation\ttail" sorted lexicographically by
  // (head, relation, tail), LF-terminated. Ingesting a dump reproduces it.
  std::string canonical_tsv() const;

 private:
  friend class KnowledgeBase;
  friend struct KbMutator;

  struct TripleKey {
    std::uint32_t head;
    std::uint32_t relation;
    std::uint32_t tail;
    bool operator==(const TripleKey&) const = default;
  };
  struct TripleKeyHash {
    std::size_t operator()(const TripleKey& k) const;
  };

  std::vector<std::string> entity_names_;
  std::vector<std::string> relation_labels_;
  std::unordered_map<std::string, EntityId> entity_ids_;
  std::unordered_map<std::string, RelationId> relation_ids_;
  std::vector<Triple> triples_;  // ascending id
  std::unordered_map<TripleKey, TripleId, TripleKeyHash> fact_index_;
  std::vector<std::vector<TripleId>> adjacency_;  // by entity index, ascending
  std::unordered_map<std::string, std::vector<EntityId>> token_index_;
  std::uint64_t next_triple_id_ = 0;
  std::uint64_t version_ = 0;
};

struct IngestFilterConfig {
  std::vector<std::string> relation_blocklist{"image", "logo", "url", "sameAs"};
  bool url_filter = true;  // drop triples whose tail starts with http:// or https://
};

struct IngestOptions {
  IngestFilterConfig filters;
  bool strict = false;  // abort on the first malformed line
};

struct LineError {
  std::size_t line = 0;  // 1-based
  std::string message;
};

struct IngestReport {
  std::size_t lines = 0;
  std::size_t kept = 0;
  std::size_t duplicates = 0;
  std::size_t dropped_blocklist = 0;
  std::size_t dropped_url = 0;
  std::vector<LineError> errors;
};

// Parse a TSV triple stream (head\trelation\ttail per line), apply filters,
// dedupe, and build a snapshot. Malformed lines are reported and skipped
// unless options.strict, which throws std::runtime_error at the first one.
std::shared_ptr<const KbSnapshot> ingest_tsv(std::istream& source, const IngestOptions& options,
                                             IngestReport& report);

// Mutable store. Reads go through immutable snapshots; mutations are
// serialized by a single writer and publish a fresh snapshot atomically.
class KnowledgeBase {
 public:
  KnowledgeBase();
  explicit KnowledgeBase(std::shared_ptr<const KbSnapshot> initial);
  KnowledgeBase(const KnowledgeBase&) = delete;
  KnowledgeBase& operator=(const KnowledgeBase&) = delete;

  std::shared_ptr<const KbSnapshot> snapshot() const;

  struct AddResult {
    TripleId id{};
    bool duplicate = false;
  };

  // Interns entities/relation as needed. Empty fields or fields containing a
  // TAB or newline throw std::invalid_argument. An exact duplicate returns the
  // existing id with duplicate=true and leaves the store untouched.
  AddResult add_triple(std::string_view head, std::string_view relation, std::string_view tail);

  // Returns false for an unknown id. Entities and relations stay interned.
  bool remove_triple(TripleId id);

 private:
  mutable std::mutex snap_mu_;
  std::mutex writer_mu_;
  std::shared_ptr<const KbSnapshot> snap_;
};

// Snapshot files are the canonical TSV; indexes are rebuilt on load.
std::shared_ptr<const KbSnapshot> load_kb_file(const std::filesystem::path& path);
void save_kb_file(const KbSnapshot& kb, const std::filesystem::path& path);

} // namespace factrank
