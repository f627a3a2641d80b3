#pragma once

#include <memory>
#include <string>

#include "factrank/config.hpp"
#include "factrank/embed.hpp"
#include "factrank/probe.hpp"
#include "factrank/rank.hpp"

namespace factrank {

// Owns the mutable store, the embedding provider and the relation-catalog
// cache. One instance backs a CLI invocation or a running service.
class Engine {
 public:
  // Loads the KB from config.kb_path (empty path -> empty KB).
  explicit Engine(EngineConfig config);
  Engine(EngineConfig config, std::shared_ptr<const KbSnapshot> initial);

  KnowledgeBase& kb() { return kb_; }
  const EngineConfig& config() const { return config_; }
  const EmbeddingProvider& provider() const { return *provider_; }
  RelationEmbeddingCache& relation_cache() { return relation_cache_; }

  RankOptions rank_options(std::size_t k_override = 0) const;
  EvalOptions eval_options(std::size_t k_override = 0) const;

  // Retrieval over the current snapshot with the engine's defaults.
  RetrievalResult retrieve_query(std::string_view query, std::size_t k_override = 0,
                                 const SpanSource* detector = nullptr);

  std::unique_ptr<Predictor> make_predictor(std::string_view spec,
                                            std::shared_ptr<const KbSnapshot> snapshot) const;
  PredictorFactory predictor_factory(std::string_view spec) const;

 private:
  EngineConfig config_;
  std::unique_ptr<EmbeddingProvider> provider_;
  KnowledgeBase kb_;
  RelationEmbeddingCache relation_cache_;
};

} // namespace factrank
