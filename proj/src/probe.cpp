#include "factrank/probe.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "factrank/text.hpp"
#include "factrank/verbalize.hpp"

namespace factrank {

namespace {

bool has_whitespace(std::string_view s) {
  return std::any_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isspace(c) != 0; });
}

std::size_t count_masks(std::string_view s) {
  std::size_t n = 0;
  for (std::size_t pos = s.find(kMaskToken); pos != std::string_view::npos;
       pos = s.find(kMaskToken, pos + kMaskToken.size())) {
    ++n;
  }
  return n;
}

bool answers_match(std::string_view predicted, std::string_view answer, bool case_insensitive) {
  if (!case_insensitive) return predicted == answer;
  return ascii_lower(predicted) == ascii_lower(answer);
}

std::vector<std::string> split_ws(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (std::isspace(static_cast<unsigned char>(text[i])) != 0) {
      ++i;
      continue;
    }
    std::size_t begin = i;
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i])) == 0) ++i;
    out.emplace_back(text.substr(begin, i - begin));
  }
  return out;
}

nlohmann::json triples_json(const RetrievalResult& retrieved, const KbSnapshot& kb) {
  nlohmann::json arr = nlohmann::json::array();
  for (const ScoredTriple& s : retrieved.scored) {
    auto triple = kb.find_triple(s.id);
    if (!triple) continue;
    arr.push_back(nlohmann::json::array({kb.entity_name(triple->head),
                                         kb.relation_label(triple->relation),
                                         kb.entity_name(triple->tail), s.relevance}));
  }
  return arr;
}

std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 33;
  x *= 0xFF51AFD7ED558CCDULL;
  x ^= x >> 33;
  x *= 0xC4CEB9FE1A85EC53ULL;
  x ^= x >> 33;
  return x;
}

std::uint64_t fnv64(std::string_view s, std::uint64_t h = 0xCBF29CE484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

// Probe-keyed stream: random-source sampling is independent of probe order.
std::uint64_t probe_seed(std::uint64_t seed, const Probe& probe) {
  return mix64(seed ^ fnv64(probe.answer, fnv64(probe.query)));
}

// k distinct indices in [0, n) by Floyd's algorithm; deterministic given rng.
std::set<std::size_t> sample_indices(std::mt19937_64& rng, std::size_t n, std::size_t k) {
  std::set<std::size_t> out;
  if (k >= n) {
    for (std::size_t i = 0; i < n; ++i) out.insert(i);
    return out;
  }
  for (std::size_t i = n - k; i < n; ++i) {
    std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
    if (!out.insert(j).second) out.insert(i);
  }
  return out;
}

RetrievalResult random_triples(const Probe& probe, const KbSnapshot& kb,
                               const EvalOptions& options) {
  RetrievalResult result;
  result.query = probe.query;
  result.k = options.k;
  const auto& triples = kb.triples();
  std::mt19937_64 rng(probe_seed(options.seed, probe));
  for (std::size_t idx : sample_indices(rng, triples.size(), options.k)) {
    ScoredTriple s;
    s.id = triples[idx].id;  // scores stay zero: the draw carries no signal
    result.scored.push_back(s);
  }
  return result;
}

RetrievalResult context_for(const Probe& probe, const KbSnapshot& kb,
                            const EmbeddingProvider& provider,
                            const RelationEmbeddings& relations, const EvalOptions& options) {
  switch (options.source) {
    case TripleSource::None: {
      RetrievalResult r;
      r.query = probe.query;
      r.k = options.k;
      return r;
    }
    case TripleSource::Random:
      return random_triples(probe, kb, options);
    case TripleSource::Relevant:
    default: {
      RankOptions rank = options.rank;
      rank.k = options.k;
      return retrieve(probe.query, kb, provider, relations, rank);
    }
  }
}

} // namespace

std::vector<Probe> load_probes(std::istream& in, std::vector<std::string>* errors) {
  std::vector<Probe> out;
  std::string line;
  std::size_t line_no = 0;
  auto report = [&](const std::string& msg) {
    if (errors) errors->push_back("line " + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || is_ascii_space(line)) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      report("not a JSON object");
      continue;
    }
    if (!j.contains("query") || !j["query"].is_string() || !j.contains("answer") ||
        !j["answer"].is_string()) {
      report("missing string fields query/answer");
      continue;
    }
    Probe p;
    p.query = j["query"].get<std::string>();
    p.answer = j["answer"].get<std::string>();
    p.relation = j.value("relation", std::string{});
    p.subset = j.value("subset", std::string{});
    if (count_masks(p.query) != 1) {
      report("query must contain exactly one " + std::string(kMaskToken));
      continue;
    }
    if (p.answer.empty() || has_whitespace(p.answer)) {
      report("answer must be a single non-empty token");
      continue;
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<std::string> KbLookupPredictor::predict(std::string_view query,
                                                    const RetrievalResult& retrieved) const {
  const KbSnapshot& kb = *kb_;
  std::vector<Token> toks = scan_tokens(query);
  std::size_t mask_tok = toks.size();
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (toks[i].is_mask) {
      mask_tok = i;
      break;
    }
  }
  std::vector<MentionSpan> mentions = detect_mentions(query, kb);
  auto in_mention = [&](const Token& t) {
    return std::any_of(mentions.begin(), mentions.end(), [&](const MentionSpan& m) {
      return t.begin >= m.begin && t.end <= m.end;
    });
  };
  std::set<std::string> before_mask, after_mask;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (toks[i].is_mask || in_mention(toks[i])) continue;
    (i < mask_tok ? before_mask : after_mask).insert(toks[i].norm);
  }

  struct TokenScore {
    double score;
    std::size_t first_seen;
  };
  std::map<std::string, TokenScore> scores;
  std::size_t order = 0;
  for (const ScoredTriple& s : retrieved.scored) {
    auto triple = kb.find_triple(s.id);
    if (!triple) continue;
    std::size_t forward = 0, reversed = 0;
    for (const std::string& rt : normalize_tokens(relation_phrase(
             kb.relation_label(triple->relation)))) {
      if (before_mask.contains(rt)) ++forward;
      if (after_mask.contains(rt)) ++reversed;
    }
    EntityId slot = forward > reversed ? triple->tail : triple->head;
    for (const std::string& tok : split_ws(entity_phrase(kb.entity_name(slot)))) {
      auto [it, inserted] = scores.try_emplace(tok, TokenScore{s.relevance, order});
      if (!inserted && s.relevance > it->second.score) it->second.score = s.relevance;
      ++order;
    }
  }

  std::vector<std::pair<std::string, TokenScore>> ranked(scores.begin(), scores.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second.score != b.second.score) return a.second.score > b.second.score;
    return a.second.first_seen < b.second.first_seen;
  });
  std::vector<std::string> out;
  out.reserve(ranked.size());
  for (auto& [tok, _] : ranked) out.push_back(tok);
  return out;
}

RemotePredictor::RemotePredictor(std::string base_url, std::shared_ptr<const KbSnapshot> kb,
                                 Options options)
    : base_url_(std::move(base_url)), kb_(std::move(kb)), options_(options) {
  name_ = "remote:" + base_url_;
}

std::vector<std::string> RemotePredictor::predict(std::string_view query,
                                                  const RetrievalResult& retrieved) const {
  nlohmann::json body;
  body["query"] = std::string(query);
  body["triples"] = triples_json(retrieved, *kb_);
  std::string payload = body.dump();

  httplib::Result res;
  for (int attempt = 0; attempt <= options_.retries; ++attempt) {
    httplib::Client client(base_url_);
    client.set_connection_timeout(0, options_.timeout_ms * 1000);
    client.set_read_timeout(0, options_.timeout_ms * 1000);
    res = client.Post("/predict", payload, "application/json");
    if (res && res->status < 500) break;
  }
  if (!res || res->status >= 500) {
    throw std::runtime_error("predictor endpoint unreachable: " + base_url_);
  }
  nlohmann::json reply = nlohmann::json::parse(res->body, nullptr, false);
  if (res->status != 200 || reply.is_discarded() || !reply.contains("tokens") ||
      !reply["tokens"].is_array()) {
    throw std::runtime_error("predictor response is not {tokens:[...]}");
  }
  std::vector<std::string> out;
  for (const auto& t : reply["tokens"]) {
    if (!t.is_string()) throw std::runtime_error("predictor token is not a string");
    out.push_back(t.get<std::string>());
  }
  return out;
}

double SubsetStats::macro() const {
  if (per_relation.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& [_, r] : per_relation) sum += r.p_at_1();
  return sum / static_cast<double>(per_relation.size());
}

EvalReport evaluate(std::span<const Probe> probes, const KbSnapshot& kb,
                    const EmbeddingProvider& provider, const RelationEmbeddings& relations,
                    const Predictor& predictor, const EvalOptions& options) {
  if (probes.empty()) {
    throw std::invalid_argument("P@1 over an empty probe set is undefined");
  }
  EvalReport report;
  report.total = probes.size();

  struct Row {
    bool correct = false;
    std::string top;
    RetrievalResult retrieved;
  };
  std::vector<Row> rows(probes.size());

  // Probes shard across workers by index; each row is written exactly once,
  // so aggregation below is independent of the schedule.
  unsigned workers = std::max(1u, options.rank.threads);
  EvalOptions inner = options;
  if (workers > 1) inner.rank.threads = 1;
  auto eval_range = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const Probe& p = probes[i];
      Row& row = rows[i];
      row.retrieved = context_for(p, kb, provider, relations, inner);
      std::vector<std::string> prediction = predictor.predict(p.query, row.retrieved);
      if (!prediction.empty()) row.top = std::move(prediction.front());
      row.correct =
          !row.top.empty() && answers_match(row.top, p.answer, options.case_insensitive);
    }
  };
  if (workers == 1 || probes.size() < 2 * workers) {
    eval_range(0, probes.size());
  } else {
    std::vector<std::thread> pool;
    std::size_t chunk = (probes.size() + workers - 1) / workers;
    std::exception_ptr failure;
    std::mutex failure_mu;
    for (unsigned w = 0; w < workers; ++w) {
      std::size_t begin = w * chunk;
      std::size_t end = std::min(probes.size(), begin + chunk);
      if (begin >= end) break;
      pool.emplace_back([&, begin, end] {
        try {
          eval_range(begin, end);
        } catch (...) {
          std::lock_guard lock(failure_mu);
          if (!failure) failure = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
  }

  for (std::size_t i = 0; i < probes.size(); ++i) {
    const Probe& p = probes[i];
    const Row& row = rows[i];
    RelationStats& rel = report.per_relation[p.relation];
    ++rel.count;
    SubsetStats& sub = report.per_subset[p.subset];
    ++sub.count;
    RelationStats& sub_rel = sub.per_relation[p.relation];
    ++sub_rel.count;
    if (row.correct) {
      ++report.correct;
      ++rel.correct;
      ++sub.correct;
      ++sub_rel.correct;
    } else {
      FailureRecord f;
      f.probe = p;
      f.prediction = row.top;
      for (const ScoredTriple& s : row.retrieved.scored) {
        auto triple = kb.find_triple(s.id);
        if (!triple) continue;
        f.triples.emplace_back(kb.entity_name(triple->head),
                               kb.relation_label(triple->relation),
                               kb.entity_name(triple->tail), s.relevance);
      }
      report.failures.push_back(std::move(f));
    }
  }

  report.micro_p_at_1 = static_cast<double>(report.correct) / static_cast<double>(report.total);
  double macro_sum = 0.0;
  for (const auto& [_, rel] : report.per_relation) macro_sum += rel.p_at_1();
  report.macro_p_at_1 = macro_sum / static_cast<double>(report.per_relation.size());
  return report;
}

EvalReport ablate(std::span<const Probe> probes, const KbSnapshot& kb,
                  const EmbeddingProvider& provider, const RelationEmbeddings& relations,
                  const Predictor& predictor, const EvalOptions& options) {
  return evaluate(probes, kb, provider, relations, predictor, options);
}

std::vector<UpdateCase> load_update_cases(std::istream& in, std::vector<std::string>* errors) {
  std::vector<UpdateCase> out;
  std::string line;
  std::size_t line_no = 0;
  auto report = [&](const std::string& msg) {
    if (errors) errors->push_back("line " + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || is_ascii_space(line)) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object() || !j.contains("fact") || !j["fact"].is_object()) {
      report("expected an object with a fact object");
      continue;
    }
    const auto& fact = j["fact"];
    if (!fact.contains("head") || !fact.contains("relation") || !fact.contains("tail")) {
      report("fact must have head/relation/tail");
      continue;
    }
    UpdateCase c;
    c.probe.query = j.value("query", std::string{});
    c.probe.answer = j.value("answer", std::string{});
    c.probe.relation = j.value("relation", std::string{});
    c.probe.subset = j.value("subset", std::string{});
    c.fact = {fact["head"].get<std::string>(), fact["relation"].get<std::string>(),
              fact["tail"].get<std::string>()};
    if (count_masks(c.probe.query) != 1 || c.probe.answer.empty()) {
      report("probe must have one mask and a non-empty answer");
      continue;
    }
    out.push_back(std::move(c));
  }
  return out;
}

UpdateOutcome update_experiment(std::span<const UpdateCase> cases, KnowledgeBase& kb,
                                const EmbeddingProvider& provider,
                                RelationEmbeddingCache& relation_cache,
                                const PredictorFactory& predictor_factory,
                                const EvalOptions& options, bool persist) {
  if (cases.empty()) {
    throw std::invalid_argument("update experiment needs at least one case");
  }
  UpdateOutcome outcome;
  RankOptions rank = options.rank;
  rank.k = options.k;

  auto top_token = [&](const KbSnapshot& snap, const Probe& probe,
                       std::shared_ptr<const KbSnapshot> owned) {
    auto relations = relation_cache.get(snap, provider);
    RetrievalResult r = retrieve(probe.query, snap, provider, *relations, rank);
    std::vector<std::string> prediction =
        predictor_factory(std::move(owned))->predict(probe.query, r);
    return prediction.empty() ? std::string{} : prediction.front();
  };

  for (const UpdateCase& c : cases) {
    UpdateTrace trace;
    trace.c = c;
    auto before_snap = kb.snapshot();
    if (before_snap->find_fact(c.fact[0], c.fact[1], c.fact[2])) {
      trace.skipped_existing = true;
      ++outcome.skipped;
      outcome.traces.push_back(std::move(trace));
      continue;
    }
    trace.before = top_token(*before_snap, c.probe, before_snap);

    auto added = kb.add_triple(c.fact[0], c.fact[1], c.fact[2]);
    auto after_snap = kb.snapshot();
    trace.after = top_token(*after_snap, c.probe, after_snap);
    trace.corrected = answers_match(trace.after, c.probe.answer, options.case_insensitive);

    if (!persist) kb.remove_triple(added.id);

    ++outcome.attempted;
    if (trace.corrected) ++outcome.corrected;
    outcome.traces.push_back(std::move(trace));
  }
  outcome.fraction = outcome.attempted == 0
                         ? 0.0
                         : static_cast<double>(outcome.corrected) / outcome.attempted;
  return outcome;
}

nlohmann::json report_to_json(const EvalReport& report) {
  nlohmann::json j;
  j["total"] = report.total;
  j["correct"] = report.correct;
  j["micro_p_at_1"] = report.micro_p_at_1;
  j["macro_p_at_1"] = report.macro_p_at_1;
  nlohmann::json rels = nlohmann::json::object();
  for (const auto& [name, r] : report.per_relation) {
    rels[name] = {{"count", r.count}, {"correct", r.correct}, {"p_at_1", r.p_at_1()}};
  }
  j["per_relation"] = std::move(rels);
  nlohmann::json subs = nlohmann::json::object();
  for (const auto& [name, s] : report.per_subset) {
    subs[name] = {{"count", s.count},
                  {"correct", s.correct},
                  {"micro_p_at_1", s.micro()},
                  {"macro_p_at_1", s.macro()}};
  }
  j["per_subset"] = std::move(subs);
  nlohmann::json fails = nlohmann::json::array();
  for (const FailureRecord& f : report.failures) {
    nlohmann::json triples = nlohmann::json::array();
    for (const auto& [h, r, t, rel] : f.triples) {
      triples.push_back(nlohmann::json::array({h, r, t, rel}));
    }
    fails.push_back({{"query", f.probe.query},
                     {"answer", f.probe.answer},
                     {"relation", f.probe.relation},
                     {"subset", f.probe.subset},
                     {"prediction", f.prediction},
                     {"triples", std::move(triples)}});
  }
  j["failures"] = std::move(fails);
  return j;
}

std::string report_table(const EvalReport& report) {
  std::ostringstream out;
  char line[160];
  out << "relation                          count  correct     P@1\n";
  for (const auto& [name, r] : report.per_relation) {
    std::snprintf(line, sizeof(line), "%-32s %6zu  %7zu  %6.4f\n",
                  name.empty() ? "(untagged)" : name.c_str(), r.count, r.correct, r.p_at_1());
    out << line;
  }
  if (report.per_subset.size() > 1 || !report.per_subset.contains(std::string{})) {
    out << "subset                            count    micro   macro\n";
    for (const auto& [name, s] : report.per_subset) {
      std::snprintf(line, sizeof(line), "%-32s %6zu  %7.4f  %6.4f\n",
                    name.empty() ? "(untagged)" : name.c_str(), s.count, s.micro(), s.macro());
      out << line;
    }
  }
  std::snprintf(line, sizeof(line),
                "overall: %zu probes, %zu correct, micro P@1 %.4f, macro P@1 %.4f\n",
                report.total, report.correct, report.micro_p_at_1, report.macro_p_at_1);
  out << line;
  return out.str();
}

nlohmann::json update_outcome_to_json(const UpdateOutcome& outcome) {
  nlohmann::json traces = nlohmann::json::array();
  for (const UpdateTrace& t : outcome.traces) {
    traces.push_back({{"query", t.c.probe.query},
                      {"answer", t.c.probe.answer},
                      {"fact", nlohmann::json::array({t.c.fact[0], t.c.fact[1], t.c.fact[2]})},
                      {"before", t.before},
                      {"after", t.after},
                      {"corrected", t.corrected},
                      {"skipped_existing", t.skipped_existing}});
  }
  return nlohmann::json{{"attempted", outcome.attempted},
                        {"corrected", outcome.corrected},
                        {"skipped", outcome.skipped},
                        {"fraction", outcome.fraction},
                        {"cases", std::move(traces)}};
}

} // namespace factrank
