#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "factrank/rank.hpp"

namespace factrank {

// One cloze-style probe: a query with exactly one mask and a single-token
// answer. relation/subset tags drive report aggregation.
struct Probe {
  std::string query;
  std::string answer;
  std::string relation;
  std::string subset;
};

// JSONL {"query","answer","relation","subset"}. Invalid records are skipped
// and reported through `errors`.
std::vector<Probe> load_probes(std::istream& in, std::vector<std::string>* errors = nullptr);

// Seam for the model under evaluation: it sees the masked query and the
// retrieved context, and returns a ranked token list (possibly empty).
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual std::string_view name() const = 0;
  virtual std::vector<std::string> predict(std::string_view query,
                                           const RetrievalResult& retrieved) const = 0;
};

// Retrieval-only baseline. For each retrieved triple in rank order it
// proposes the display tokens of the slot-side argument: the tail when the
// query's non-mention tokens before the mask overlap the relation phrase more
// than the tokens after it (the forward "head relation [MASK]" reading),
// otherwise the head. Tokens score by triple relevance, deduplicated keeping
// the maximum, ranked by score then first proposal.
class KbLookupPredictor final : public Predictor {
 public:
  explicit KbLookupPredictor(std::shared_ptr<const KbSnapshot> kb) : kb_(std::move(kb)) {}

  std::string_view name() const override { return "builtin"; }
  std::vector<std::string> predict(std::string_view query,
                                   const RetrievalResult& retrieved) const override;

 private:
  std::shared_ptr<const KbSnapshot> kb_;
};

struct RemotePredictorOptions {
  int timeout_ms = 5000;
  int retries = 2;
};

// HTTP client for POST <base_url>/predict with
// {"query":...,"triples":[[h,r,t,relevance],...]} returning {"tokens":[...]}.
class RemotePredictor final : public Predictor {
 public:
  using Options = RemotePredictorOptions;

  RemotePredictor(std::string base_url, std::shared_ptr<const KbSnapshot> kb,
                  Options options = {});

  std::string_view name() const override { return name_; }
  std::vector<std::string> predict(std::string_view query,
                                   const RetrievalResult& retrieved) const override;

 private:
  std::string base_url_;
  std::shared_ptr<const KbSnapshot> kb_;
  Options options_;
  std::string name_;
};

struct RelationStats {
  std::size_t count = 0;
  std::size_t correct = 0;
  double p_at_1() const { return count == 0 ? 0.0 : static_cast<double>(correct) / count; }
};

struct SubsetStats {
  std::size_t count = 0;
  std::size_t correct = 0;
  std::map<std::string, RelationStats> per_relation;
  double micro() const { return count == 0 ? 0.0 : static_cast<double>(correct) / count; }
  double macro() const;
};

struct FailureRecord {
  Probe probe;
  std::string prediction;  // top token, empty when the predictor was silent
  std::vector<std::tuple<std::string, std::string, std::string, double>> triples;
};

struct EvalReport {
  std::size_t total = 0;
  std::size_t correct = 0;
  double micro_p_at_1 = 0.0;
  double macro_p_at_1 = 0.0;  // unweighted mean over relations
  std::map<std::string, RelationStats> per_relation;
  std::map<std::string, SubsetStats> per_subset;
  std::vector<FailureRecord> failures;
};

enum class TripleSource { Relevant, Random, None };

struct EvalOptions {
  std::size_t k = 8;
  bool case_insensitive = false;  // answers match by exact string by default
  TripleSource source = TripleSource::Relevant;
  std::uint64_t seed = 0;  // drives the Random source only
  RankOptions rank;
};

// Scores P@1 per probe (top predicted token vs answer) and aggregates.
// Throws std::invalid_argument on an empty probe set.
EvalReport evaluate(std::span<const Probe> probes, const KbSnapshot& kb,
                    const EmbeddingProvider& provider, const RelationEmbeddings& relations,
                    const Predictor& predictor, const EvalOptions& options = {});

// evaluate with the triple source overridden: Relevant uses retrieval, Random
// substitutes k seeded uniform KB triples, None supplies no context.
EvalReport ablate(std::span<const Probe> probes, const KbSnapshot& kb,
                  const EmbeddingProvider& provider, const RelationEmbeddings& relations,
                  const Predictor& predictor, const EvalOptions& options);

struct UpdateCase {
  Probe probe;
  std::array<std::string, 3> fact;  // head, relation, tail expected absent from the KB
};

std::vector<UpdateCase> load_update_cases(std::istream& in,
                                          std::vector<std::string>* errors = nullptr);

struct UpdateTrace {
  UpdateCase c;
  std::string before;  // top token prior to the update
  std::string after;
  bool corrected = false;
  bool skipped_existing = false;
};

struct UpdateOutcome {
  std::vector<UpdateTrace> traces;
  std::size_t attempted = 0;
  std::size_t corrected = 0;
  std::size_t skipped = 0;
  double fraction = 0.0;  // corrected / attempted
};

using PredictorFactory =
    std::function<std::unique_ptr<Predictor>(std::shared_ptr<const KbSnapshot>)>;

// For each case: record the prediction, add the fact, re-run, record again.
// Without `persist` the added fact is removed afterwards, leaving the KB dump
// bit-identical. Cases whose fact already exists are skipped with a notice.
UpdateOutcome update_experiment(std::span<const UpdateCase> cases, KnowledgeBase& kb,
                                const EmbeddingProvider& provider,
                                RelationEmbeddingCache& relation_cache,
                                const PredictorFactory& predictor_factory,
                                const EvalOptions& options, bool persist = false);

nlohmann::json report_to_json(const EvalReport& report);
std::string report_table(const EvalReport& report);
nlohmann::json update_outcome_to_json(const UpdateOutcome& outcome);

} // namespace factrank
