#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "factrank/kb_store.hpp"

namespace factrank {

using EmbeddingVector = std::vector<double>;

double dot(const EmbeddingVector& a, const EmbeddingVector& b);

class EmbeddingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Remote endpoint unreachable after the configured retries; retryable.
class RemoteUnavailableError : public EmbeddingError {
 public:
  using EmbeddingError::EmbeddingError;
};

// Remote endpoint answered but the payload violates the contract; not retryable.
class MalformedResponseError : public EmbeddingError {
 public:
  using EmbeddingError::EmbeddingError;
};

// File-backed table has no row for the requested text.
class MissingKeyError : public EmbeddingError {
 public:
  using EmbeddingError::EmbeddingError;
};

// Text -> fixed-dimension vector. Implementations are immutable after
// construction and deterministic: identical text yields identical bytes.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::string_view name() const = 0;
  virtual std::size_t dimension() const = 0;
  // Throws std::invalid_argument when text trims to empty.
  virtual EmbeddingVector embed(std::string_view text) const = 0;
};

// Signed feature hashing of the lowercased token bag, unit weight per token
// occurrence. The hash is fixed for cross-run reproducibility:
//   h = splitmix64(fnv1a64(token bytes) ^ kTokenHashSeed)
//   bucket = h mod D
//   sign   = +1 when popcount(h) is even, else -1
// Vectors are consumed raw (inner product); optional L2 normalization.
class HashedProvider final : public EmbeddingProvider {
 public:
  static constexpr std::uint64_t kTokenHashSeed = 0x9E3779B97F4A7C15ULL;
  static constexpr std::size_t kDefaultDimension = 768;

  explicit HashedProvider(std::size_t dimension = kDefaultDimension, bool l2_normalize = false);

  static std::uint64_t token_hash(std::string_view token);

  std::string_view name() const override { return name_; }
  std::size_t dimension() const override { return dimension_; }
  EmbeddingVector embed(std::string_view text) const override;

 private:
  std::size_t dimension_;
  bool l2_normalize_;
  std::string name_;
};

struct FileProviderOptions {
  bool fallback_to_hashed = false;
  bool l2_normalize = false;
};

// Exact-string lookup table "key<TAB>f1 f2 ... fD". Missing keys throw
// MissingKeyError unless fallback_to_hashed routes them to a HashedProvider
// of the same dimension.
class FileProvider final : public EmbeddingProvider {
 public:
  using Options = FileProviderOptions;

  static FileProvider load(std::istream& table, Options options = {});
  static FileProvider load_file(const std::filesystem::path& path, Options options = {});

  std::string_view name() const override { return name_; }
  std::size_t dimension() const override { return dimension_; }
  EmbeddingVector embed(std::string_view text) const override;

 private:
  FileProvider(std::unordered_map<std::string, EmbeddingVector> table, std::size_t dimension,
               Options options);

  std::unordered_map<std::string, EmbeddingVector> table_;
  std::size_t dimension_;
  Options options_;
  std::unique_ptr<HashedProvider> fallback_;
  std::string name_;
};

struct RemoteProviderOptions {
  std::size_t dimension = 768;
  int timeout_ms = 5000;
  int retries = 2;
  bool l2_normalize = false;
};

// HTTP client for POST <base_url>/embed with {"texts":[...]} returning
// {"vectors":[[...],...],"dim":D}. Connection failures and 5xx responses are
// retried `retries` times, then surface as RemoteUnavailableError; contract
// violations surface immediately as MalformedResponseError.
class RemoteProvider final : public EmbeddingProvider {
 public:
  using Options = RemoteProviderOptions;

  RemoteProvider(std::string base_url, Options options = {});

  std::string_view name() const override { return name_; }
  std::size_t dimension() const override { return options_.dimension; }
  EmbeddingVector embed(std::string_view text) const override;

 private:
  std::string base_url_;
  Options options_;
  std::string name_;
};

// Cached Emb(relation_phrase(label)) for every relation of one KB snapshot,
// bound to the provider instance that produced it.
class RelationEmbeddings {
 public:
  RelationEmbeddings(std::vector<EmbeddingVector> vectors, const EmbeddingProvider* provider);

  const EmbeddingVector& vector_for(RelationId id) const;
  std::size_t size() const { return vectors_.size(); }
  const EmbeddingProvider* provider() const { return provider_; }

 private:
  std::vector<EmbeddingVector> vectors_;
  const EmbeddingProvider* provider_;
};

RelationEmbeddings embed_relation_catalog(const KbSnapshot& kb, const EmbeddingProvider& provider);

// Rebuilds only when the relation catalog grows or the provider changes;
// relations are never un-interned so the count identifies the catalog.
class RelationEmbeddingCache {
 public:
  std::shared_ptr<const RelationEmbeddings> get(const KbSnapshot& kb,
                                                const EmbeddingProvider& provider);

 private:
  std::mutex mu_;
  std::shared_ptr<const RelationEmbeddings> cached_;
};

struct ProviderOptions {
  bool l2_normalize = false;
  bool file_fallback_to_hashed = false;
  int remote_timeout_ms = 5000;
  int remote_retries = 2;
  std::size_t remote_dimension = 768;
};

// Spec grammar: "hashed" | "hashed:<dim>" | "file:<path>" | "remote:<url>".
std::unique_ptr<EmbeddingProvider> make_provider(std::string_view spec,
                                                 const ProviderOptions& options = {});

} // namespace factrank
