#include "factrank/engine.hpp"

#include <stdexcept>

namespace factrank {

namespace {

std::unique_ptr<EmbeddingProvider> build_provider(const EngineConfig& config) {
  ProviderOptions options;
  options.l2_normalize = config.l2_normalize;
  options.file_fallback_to_hashed = config.file_fallback_to_hashed;
  options.remote_timeout_ms = config.remote_timeout_ms;
  options.remote_retries = config.remote_retries;
  return make_provider(config.provider, options);
}

std::shared_ptr<const KbSnapshot> load_initial(const EngineConfig& config) {
  if (config.kb_path.empty()) return std::make_shared<const KbSnapshot>();
  return load_kb_file(config.kb_path);
}

} // namespace

Engine::Engine(EngineConfig config) : Engine(std::move(config), nullptr) {}

Engine::Engine(EngineConfig config, std::shared_ptr<const KbSnapshot> initial)
    : config_(std::move(config)),
      provider_(build_provider(config_)),
      kb_(initial ? std::move(initial) : load_initial(config_)) {
  config_.validate();
}

RankOptions Engine::rank_options(std::size_t k_override) const {
  RankOptions options;
  options.k = k_override == 0 ? config_.k : k_override;
  options.combiner = config_.raw_product ? Combiner::RawProduct : Combiner::ClampedProduct;
  options.candidate_cap = config_.candidate_cap;
  options.threads = config_.threads;
  return options;
}

EvalOptions Engine::eval_options(std::size_t k_override) const {
  EvalOptions options;
  options.k = k_override == 0 ? config_.k : k_override;
  options.case_insensitive = config_.case_insensitive;
  options.rank = rank_options(options.k);
  return options;
}

RetrievalResult Engine::retrieve_query(std::string_view query, std::size_t k_override,
                                       const SpanSource* detector) {
  auto snap = kb_.snapshot();
  auto relations = relation_cache_.get(*snap, *provider_);
  return retrieve(query, *snap, *provider_, *relations, rank_options(k_override), detector);
}

std::unique_ptr<Predictor> Engine::make_predictor(
    std::string_view spec, std::shared_ptr<const KbSnapshot> snapshot) const {
  if (spec.empty() || spec == "builtin") {
    return std::make_unique<KbLookupPredictor>(std::move(snapshot));
  }
  if (spec.starts_with("remote:")) {
    RemotePredictor::Options options;
    options.timeout_ms = config_.remote_timeout_ms;
    options.retries = config_.remote_retries;
    return std::make_unique<RemotePredictor>(std::string(spec.substr(7)), std::move(snapshot),
                                             options);
  }
  throw std::invalid_argument("unknown predictor spec: " + std::string(spec) +
                              " (expected builtin|remote:<url>)");
}

PredictorFactory Engine::predictor_factory(std::string_view spec) const {
  std::string owned(spec);
  return [this, owned](std::shared_ptr<const KbSnapshot> snapshot) {
    return make_predictor(owned, std::move(snapshot));
  };
}

} // namespace factrank
