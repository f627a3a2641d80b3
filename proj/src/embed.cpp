#include "factrank/embed.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "factrank/text.hpp"
#include "factrank/verbalize.hpp"

namespace factrank {

namespace {

void l2_normalize(EmbeddingVector& v) {
  double norm2 = 0.0;
  for (double x : v) norm2 += x * x;
  if (norm2 <= 0.0) return;
  double inv = 1.0 / std::sqrt(norm2);
  for (double& x : v) x *= inv;
}

void require_nonempty(std::string_view text) {
  if (is_ascii_space(text)) {
    throw std::invalid_argument("cannot embed empty text");
  }
}

void require_finite(const EmbeddingVector& v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw std::runtime_error(std::string(what) + ": non-finite value");
  }
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

} // namespace

double dot(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: dimension mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

HashedProvider::HashedProvider(std::size_t dimension, bool l2_normalize)
    : dimension_(dimension), l2_normalize_(l2_normalize) {
  if (dimension_ == 0) throw std::invalid_argument("dimension must be positive");
  name_ = "hashed:" + std::to_string(dimension_);
}

std::uint64_t HashedProvider::token_hash(std::string_view token) {
  std::uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a offset basis
  for (unsigned char c : token) {
    h ^= c;
    h *= 0x100000001B3ULL;  // FNV prime
  }
  return splitmix64(h ^ kTokenHashSeed);
}

EmbeddingVector HashedProvider::embed(std::string_view text) const {
  require_nonempty(text);
  EmbeddingVector out(dimension_, 0.0);
  for (const std::string& tok : normalize_tokens(text)) {
    std::uint64_t h = token_hash(tok);
    std::size_t bucket = static_cast<std::size_t>(h % dimension_);
    double sign = (std::popcount(h) % 2 == 0) ? 1.0 : -1.0;
    out[bucket] += sign;
  }
  if (l2_normalize_) l2_normalize(out);
  return out;
}

FileProvider::FileProvider(std::unordered_map<std::string, EmbeddingVector> table,
                           std::size_t dimension, Options options)
    : table_(std::move(table)), dimension_(dimension), options_(options) {
  if (options_.fallback_to_hashed) {
    fallback_ = std::make_unique<HashedProvider>(dimension_, options_.l2_normalize);
  }
  name_ = "file:" + std::to_string(dimension_);
}

FileProvider FileProvider::load(std::istream& in, Options options) {
  std::unordered_map<std::string, EmbeddingVector> table;
  std::size_t dimension = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) {
      throw std::runtime_error("embedding table line " + std::to_string(line_no) +
                               ": expected key<TAB>floats");
    }
    std::string key = line.substr(0, tab);
    EmbeddingVector vec;
    const char* p = line.data() + tab + 1;
    const char* end = line.data() + line.size();
    while (p < end) {
      while (p < end && *p == ' ') ++p;
      if (p == end) break;
      double value = 0.0;
      auto [next, ec] = std::from_chars(p, end, value);
      if (ec != std::errc{}) {
        throw std::runtime_error("embedding table line " + std::to_string(line_no) +
                                 ": bad float");
      }
      vec.push_back(value);
      p = next;
    }
    require_finite(vec, "embedding table");
    if (vec.empty()) {
      throw std::runtime_error("embedding table line " + std::to_string(line_no) + ": no values");
    }
    if (dimension == 0) {
      dimension = vec.size();
    } else if (vec.size() != dimension) {
      throw std::runtime_error("embedding table line " + std::to_string(line_no) +
                               ": dimension mismatch");
    }
    table[std::move(key)] = std::move(vec);
  }
  if (dimension == 0) throw std::runtime_error("embedding table is empty");
  return FileProvider(std::move(table), dimension, options);
}

FileProvider FileProvider::load_file(const std::filesystem::path& path, Options options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open embedding table: " + path.string());
  return load(in, options);
}

EmbeddingVector FileProvider::embed(std::string_view text) const {
  require_nonempty(text);
  auto it = table_.find(std::string(text));
  if (it != table_.end()) {
    EmbeddingVector out = it->second;
    if (options_.l2_normalize) l2_normalize(out);
    return out;
  }
  if (fallback_) return fallback_->embed(text);
  throw MissingKeyError("no embedding for key: " + std::string(text));
}

RemoteProvider::RemoteProvider(std::string base_url, Options options)
    : base_url_(std::move(base_url)), options_(options) {
  if (options_.dimension == 0) throw std::invalid_argument("dimension must be positive");
  name_ = "remote:" + base_url_;
}

EmbeddingVector RemoteProvider::embed(std::string_view text) const {
  require_nonempty(text);
  nlohmann::json body;
  body["texts"] = nlohmann::json::array({std::string(text)});
  std::string payload = body.dump();

  httplib::Result res;
  for (int attempt = 0; attempt <= options_.retries; ++attempt) {
    httplib::Client client(base_url_);
    client.set_connection_timeout(0, options_.timeout_ms * 1000);
    client.set_read_timeout(0, options_.timeout_ms * 1000);
    res = client.Post("/embed", payload, "application/json");
    if (res && res->status < 500) break;
  }
  if (!res || res->status >= 500) {
    throw RemoteUnavailableError("embedding endpoint unreachable: " + base_url_);
  }
  if (res->status != 200) {
    throw MalformedResponseError("embedding endpoint returned status " +
                                 std::to_string(res->status));
  }
  nlohmann::json reply = nlohmann::json::parse(res->body, nullptr, false);
  if (reply.is_discarded() || !reply.contains("vectors") || !reply.contains("dim") ||
      !reply["vectors"].is_array() || reply["vectors"].size() != 1) {
    throw MalformedResponseError("embedding response is not {vectors:[[...]],dim:D}");
  }
  if (reply["dim"].get<std::size_t>() != options_.dimension) {
    throw MalformedResponseError("embedding response dimension mismatch");
  }
  EmbeddingVector out;
  try {
    out = reply["vectors"][0].get<EmbeddingVector>();
  } catch (const nlohmann::json::exception&) {
    throw MalformedResponseError("embedding vector is not a float array");
  }
  if (out.size() != options_.dimension) {
    throw MalformedResponseError("embedding vector length mismatch");
  }
  for (double x : out) {
    if (!std::isfinite(x)) throw MalformedResponseError("embedding vector has non-finite value");
  }
  if (options_.l2_normalize) l2_normalize(out);
  return out;
}

RelationEmbeddings::RelationEmbeddings(std::vector<EmbeddingVector> vectors,
                                       const EmbeddingProvider* provider)
    : vectors_(std::move(vectors)), provider_(provider) {}

const EmbeddingVector& RelationEmbeddings::vector_for(RelationId id) const {
  if (to_index(id) >= vectors_.size()) {
    throw std::out_of_range("relation id outside the embedded catalog; rebuild the catalog");
  }
  return vectors_[to_index(id)];
}

RelationEmbeddings embed_relation_catalog(const KbSnapshot& kb,
                                          const EmbeddingProvider& provider) {
  std::vector<EmbeddingVector> vectors;
  vectors.reserve(kb.relation_count());
  for (std::size_t i = 0; i < kb.relation_count(); ++i) {
    vectors.push_back(
        provider.embed(relation_phrase(kb.relation_label(RelationId{static_cast<std::uint32_t>(i)}))));
  }
  return RelationEmbeddings(std::move(vectors), &provider);
}

std::shared_ptr<const RelationEmbeddings> RelationEmbeddingCache::get(
    const KbSnapshot& kb, const EmbeddingProvider& provider) {
  std::lock_guard lock(mu_);
  if (cached_ && cached_->provider() == &provider && cached_->size() == kb.relation_count()) {
    return cached_;
  }
  cached_ = std::make_shared<const RelationEmbeddings>(embed_relation_catalog(kb, provider));
  return cached_;
}

std::unique_ptr<EmbeddingProvider> make_provider(std::string_view spec,
                                                 const ProviderOptions& options) {
  if (spec == "hashed") {
    return std::make_unique<HashedProvider>(HashedProvider::kDefaultDimension,
                                            options.l2_normalize);
  }
  if (spec.starts_with("hashed:")) {
    std::size_t dim = 0;
    auto rest = spec.substr(7);
    auto [p, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), dim);
    if (ec != std::errc{} || p != rest.data() + rest.size() || dim == 0) {
      throw std::invalid_argument("bad provider spec: " + std::string(spec));
    }
    return std::make_unique<HashedProvider>(dim, options.l2_normalize);
  }
  if (spec.starts_with("file:")) {
    FileProvider::Options fo;
    fo.fallback_to_hashed = options.file_fallback_to_hashed;
    fo.l2_normalize = options.l2_normalize;
    return std::make_unique<FileProvider>(
        FileProvider::load_file(std::filesystem::path(std::string(spec.substr(5))), fo));
  }
  if (spec.starts_with("remote:")) {
    RemoteProvider::Options ro;
    ro.dimension = options.remote_dimension;
    ro.timeout_ms = options.remote_timeout_ms;
    ro.retries = options.remote_retries;
    ro.l2_normalize = options.l2_normalize;
    return std::make_unique<RemoteProvider>(std::string(spec.substr(7)), ro);
  }
  throw std::invalid_argument("unknown provider spec: " + std::string(spec) +
                              " (expected hashed|hashed:<dim>|file:<path>|remote:<url>)");
}

} // namespace factrank
