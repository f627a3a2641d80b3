#include "factrank/kb_store.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <istream>
#include <set>
#include <stdexcept>

#include "factrank/text.hpp"

namespace factrank {

namespace {

bool valid_field(std::string_view f) {
  return !f.empty() && f.find('\t') == std::string_view::npos &&
         f.find('\n') == std::string_view::npos && f.find('\r') == std::string_view::npos;
}

bool url_tail(std::string_view tail) {
  return tail.starts_with("http://") || tail.starts_with("https://");
}

void insert_sorted(std::vector<TripleId>& ids, TripleId id) {
  auto it = std::lower_bound(ids.begin(), ids.end(), id);
  if (it == ids.end() || *it != id) ids.insert(it, id);
}

void erase_sorted(std::vector<TripleId>& ids, TripleId id) {
  auto it = std::lower_bound(ids.begin(), ids.end(), id);
  if (it != ids.end() && *it == id) ids.erase(it);
}

} // namespace

std::size_t KbSnapshot::TripleKeyHash::operator()(const TripleKey& k) const {
  std::uint64_t x = (std::uint64_t{k.head} << 32) | k.tail;
  x ^= std::uint64_t{k.relation} * 0x9E3779B97F4A7C15ULL;
  x ^= x >> 33;
  x *= 0xFF51AFD7ED558CCDULL;
  x ^= x >> 33;
  return static_cast<std::size_t>(x);
}

const std::string& KbSnapshot::entity_name(EntityId id) const {
  return entity_names_.at(to_index(id));
}

const std::string& KbSnapshot::relation_label(RelationId id) const {
  return relation_labels_.at(to_index(id));
}

std::optional<EntityId> KbSnapshot::find_entity(std::string_view canonical_name) const {
  auto it = entity_ids_.find(std::string(canonical_name));
  if (it == entity_ids_.end()) return std::nullopt;
  return it->second;
}

std::optional<RelationId> KbSnapshot::find_relation(std::string_view label) const {
  auto it = relation_ids_.find(std::string(label));
  if (it == relation_ids_.end()) return std::nullopt;
  return it->second;
}

std::optional<Triple> KbSnapshot::find_triple(TripleId id) const {
  auto it = std::lower_bound(triples_.begin(), triples_.end(), id,
                             [](const Triple& t, TripleId v) { return t.id < v; });
  if (it == triples_.end() || it->id != id) return std::nullopt;
  return *it;
}

std::optional<TripleId> KbSnapshot::find_fact(std::string_view head, std::string_view relation,
                                              std::string_view tail) const {
  auto h = find_entity(head);
  auto r = find_relation(relation);
  auto t = find_entity(tail);
  if (!h || !r || !t) return std::nullopt;
  TripleKey key{static_cast<std::uint32_t>(to_index(*h)),
                static_cast<std::uint32_t>(to_index(*r)),
                static_cast<std::uint32_t>(to_index(*t))};
  auto it = fact_index_.find(key);
  if (it == fact_index_.end()) return std::nullopt;
  return it->second;
}

KbStats KbSnapshot::stats() const {
  return KbStats{triples_.size(), entity_names_.size(), relation_labels_.size()};
}

const std::vector<EntityId>* KbSnapshot::entities_with_token(
    std::string_view normalized_token) const {
  auto it = token_index_.find(std::string(normalized_token));
  if (it == token_index_.end()) return nullptr;
  return &it->second;
}

std::span<const TripleId> KbSnapshot::triples_of_entity(EntityId id) const {
  const auto& ids = adjacency_.at(to_index(id));
  return {ids.data(), ids.size()};
}

CandidateSet KbSnapshot::triples_for_entities(std::span<const EntityId> entities,
                                              std::size_t cap) const {
  CandidateSet out;
  for (EntityId e : entities) {
    auto adj = triples_of_entity(e);
    out.ids.insert(out.ids.end(), adj.begin(), adj.end());
  }
  std::sort(out.ids.begin(), out.ids.end());
  out.ids.erase(std::unique(out.ids.begin(), out.ids.end()), out.ids.end());
  if (out.ids.size() > cap) {
    out.ids.resize(cap);
    out.truncated = true;
  }
  return out;
}

std::string KbSnapshot::canonical_tsv() const {
  std::vector<std::array<std::string_view, 3>> rows;
  rows.reserve(triples_.size());
  for (const Triple& t : triples_) {
    rows.push_back({std::string_view(entity_name(t.head)),
                    std::string_view(relation_label(t.relation)),
                    std::string_view(entity_name(t.tail))});
  }
  std::sort(rows.begin(), rows.end());
  std::string out;
  for (const auto& r : rows) {
    out.append(r[0]);
    out.push_back('\t');
    out.append(r[1]);
    out.push_back('\t');
    out.append(r[2]);
    out.push_back('\n');
  }
  return out;
}

// Applies mutations to a privately owned snapshot copy before it is published.
struct KbMutator {
  KbSnapshot& kb;

  EntityId intern_entity(std::string_view name) {
    auto it = kb.entity_ids_.find(std::string(name));
    if (it != kb.entity_ids_.end()) return it->second;
    EntityId id{static_cast<std::uint32_t>(kb.entity_names_.size())};
    kb.entity_names_.emplace_back(name);
    kb.entity_ids_.emplace(std::string(name), id);
    kb.adjacency_.emplace_back();
    std::set<std::string> seen;
    for (auto& tok : normalize_tokens(name)) {
      if (!seen.insert(tok).second) continue;
      kb.token_index_[tok].push_back(id);  // ids intern in order, list stays sorted
    }
    return id;
  }

  RelationId intern_relation(std::string_view label) {
    auto it = kb.relation_ids_.find(std::string(label));
    if (it != kb.relation_ids_.end()) return it->second;
    RelationId id{static_cast<std::uint32_t>(kb.relation_labels_.size())};
    kb.relation_labels_.emplace_back(label);
    kb.relation_ids_.emplace(std::string(label), id);
    return id;
  }

  // Returns the existing id when the fact is already present.
  std::pair<TripleId, bool> insert(std::string_view head, std::string_view relation,
                                   std::string_view tail) {
    EntityId h = intern_entity(head);
    RelationId r = intern_relation(relation);
    EntityId t = intern_entity(tail);
    KbSnapshot::TripleKey key{static_cast<std::uint32_t>(to_index(h)),
                              static_cast<std::uint32_t>(to_index(r)),
                              static_cast<std::uint32_t>(to_index(t))};
    auto it = kb.fact_index_.find(key);
    if (it != kb.fact_index_.end()) return {it->second, true};
    TripleId id{kb.next_triple_id_++};
    kb.triples_.push_back(Triple{h, r, t, id});
    kb.fact_index_.emplace(key, id);
    insert_sorted(kb.adjacency_[to_index(h)], id);
    insert_sorted(kb.adjacency_[to_index(t)], id);
    return {id, false};
  }

  void set_version(std::uint64_t v) { kb.version_ = v; }

  bool erase(TripleId id) {
    auto it = std::lower_bound(kb.triples_.begin(), kb.triples_.end(), id,
                               [](const Triple& t, TripleId v) { return t.id < v; });
    if (it == kb.triples_.end() || it->id != id) return false;
    Triple t = *it;
    kb.triples_.erase(it);
    kb.fact_index_.erase(KbSnapshot::TripleKey{
        static_cast<std::uint32_t>(to_index(t.head)),
        static_cast<std::uint32_t>(to_index(t.relation)),
        static_cast<std::uint32_t>(to_index(t.tail))});
    erase_sorted(kb.adjacency_[to_index(t.head)], id);
    erase_sorted(kb.adjacency_[to_index(t.tail)], id);
    return true;
  }
};

std::shared_ptr<const KbSnapshot> ingest_tsv(std::istream& source, const IngestOptions& options,
                                             IngestReport& report) {
  auto snap = std::make_shared<KbSnapshot>();
  KbMutator mut{*snap};
  const auto& block = options.filters.relation_blocklist;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(source, line)) {
    ++line_no;
    ++report.lines;
    if (!line.empty() && line.back() == '\r') line.pop_back();

    std::size_t tab1 = line.find('\t');
    std::size_t tab2 = tab1 == std::string::npos ? std::string::npos : line.find('\t', tab1 + 1);
    std::string_view head, relation, tail;
    bool ok = tab2 != std::string::npos && line.find('\t', tab2 + 1) == std::string::npos;
    if (ok) {
      head = std::string_view(line).substr(0, tab1);
      relation = std::string_view(line).substr(tab1 + 1, tab2 - tab1 - 1);
      tail = std::string_view(line).substr(tab2 + 1);
      ok = !head.empty() && !relation.empty() && !tail.empty();
    }
    if (!ok) {
      if (options.strict) {
        throw std::runtime_error("malformed KB line " + std::to_string(line_no) +
                                 ": expected head<TAB>relation<TAB>tail");
      }
      report.errors.push_back({line_no, "expected head<TAB>relation<TAB>tail"});
      continue;
    }
    if (std::find(block.begin(), block.end(), relation) != block.end()) {
      ++report.dropped_blocklist;
      continue;
    }
    if (options.filters.url_filter && url_tail(tail)) {
      ++report.dropped_url;
      continue;
    }
    auto [id, dup] = mut.insert(head, relation, tail);
    (void)id;
    if (dup) {
      ++report.duplicates;
    } else {
      ++report.kept;
    }
  }
  mut.set_version(1);
  return snap;
}

KnowledgeBase::KnowledgeBase() : snap_(std::make_shared<const KbSnapshot>()) {}

KnowledgeBase::KnowledgeBase(std::shared_ptr<const KbSnapshot> initial)
    : snap_(std::move(initial)) {
  if (!snap_) snap_ = std::make_shared<const KbSnapshot>();
}

std::shared_ptr<const KbSnapshot> KnowledgeBase::snapshot() const {
  std::lock_guard lock(snap_mu_);
  return snap_;
}

KnowledgeBase::AddResult KnowledgeBase::add_triple(std::string_view head,
                                                   std::string_view relation,
                                                   std::string_view tail) {
  if (!valid_field(head) || !valid_field(relation) || !valid_field(tail)) {
    throw std::invalid_argument("triple fields must be non-empty and free of TAB/newline");
  }
  std::lock_guard writer(writer_mu_);
  auto current = snapshot();
  {
    // Duplicate probe against the current snapshot avoids a useless copy.
    KbSnapshot::TripleKey key;
    auto h = current->find_entity(head);
    auto r = current->find_relation(relation);
    auto t = current->find_entity(tail);
    if (h && r && t) {
      key = {static_cast<std::uint32_t>(to_index(*h)), static_cast<std::uint32_t>(to_index(*r)),
             static_cast<std::uint32_t>(to_index(*t))};
      auto it = current->fact_index_.find(key);
      if (it != current->fact_index_.end()) return {it->second, true};
    }
  }
  auto next = std::make_shared<KbSnapshot>(*current);
  KbMutator mut{*next};
  auto [id, dup] = mut.insert(head, relation, tail);
  next->version_ = current->version() + 1;
  {
    std::lock_guard lock(snap_mu_);
    snap_ = std::move(next);
  }
  return {id, dup};
}

bool KnowledgeBase::remove_triple(TripleId id) {
  std::lock_guard writer(writer_mu_);
  auto current = snapshot();
  if (!current->find_triple(id)) return false;
  auto next = std::make_shared<KbSnapshot>(*current);
  KbMutator mut{*next};
  bool removed = mut.erase(id);
  next->version_ = current->version() + 1;
  {
    std::lock_guard lock(snap_mu_);
    snap_ = std::move(next);
  }
  return removed;
}

std::shared_ptr<const KbSnapshot> load_kb_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open KB file: " + path.string());
  IngestOptions options;
  options.filters.relation_blocklist.clear();  // snapshots load verbatim
  options.filters.url_filter = false;
  options.strict = true;
  IngestReport report;
  return ingest_tsv(in, options, report);
}

void save_kb_file(const KbSnapshot& kb, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write KB file: " + path.string());
  out << kb.canonical_tsv();
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

} // namespace factrank
