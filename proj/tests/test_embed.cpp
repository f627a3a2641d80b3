#include <doctest.h>

#include <bit>
#include <random>
#include <sstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "factrank/embed.hpp"
#include "factrank/text.hpp"

using namespace factrank;

namespace {

// Independent dot-product computation: sum over token pairs whose hashes
// collide on the bucket, weighted by the sign product. Never builds vectors.
double collision_dot(std::string_view a, std::string_view b, std::size_t dim) {
  auto parts = [&](std::string_view text) {
    std::vector<std::pair<std::size_t, double>> out;
    for (const std::string& tok : normalize_tokens(text)) {
      std::uint64_t h = HashedProvider::token_hash(tok);
      out.emplace_back(static_cast<std::size_t>(h % dim),
                       std::popcount(h) % 2 == 0 ? 1.0 : -1.0);
    }
    return out;
  };
  double sum = 0.0;
  for (const auto& [ba, sa] : parts(a)) {
    for (const auto& [bb, sb] : parts(b)) {
      if (ba == bb) sum += sa * sb;
    }
  }
  return sum;
}

} // namespace

TEST_CASE("hashed provider is deterministic and bucketed") {
  HashedProvider provider;
  CHECK(provider.dimension() == 768);

  EmbeddingVector v1 = provider.embed("warren buffett");
  EmbeddingVector v2 = provider.embed("warren buffett");
  CHECK(v1 == v2);  // bitwise

  SUBCASE("self dot-product is positive and matches the collision sum") {
    CHECK(dot(v1, v1) > 0.0);
    CHECK(dot(v1, v1) == collision_dot("warren buffett", "warren buffett", 768));
  }
  SUBCASE("empty or whitespace text is rejected") {
    CHECK_THROWS_AS(provider.embed(""), std::invalid_argument);
    CHECK_THROWS_AS(provider.embed("   \t"), std::invalid_argument);
  }
  SUBCASE("case folds before hashing") {
    CHECK(provider.embed("Warren") == provider.embed("warren"));
  }
}

TEST_CASE("property: hashed dot equals the collision sum on short strings") {
  std::mt19937_64 rng(31337);
  const char* words[] = {"alpha", "beta", "gamma", "delta", "epsilon",
                         "zeta",  "eta",  "theta", "iota",  "kappa"};
  HashedProvider small(32);  // small dimension forces collisions
  for (int trial = 0; trial < 100; ++trial) {
    auto make = [&] {
      std::string s;
      std::size_t n = 1 + rng() % 10;
      for (std::size_t i = 0; i < n; ++i) {
        if (i) s.push_back(' ');
        s += words[rng() % 10];
      }
      return s;
    };
    std::string a = make(), b = make();
    CHECK(dot(small.embed(a), small.embed(b)) == doctest::Approx(collision_dot(a, b, 32)));
  }
}

TEST_CASE("file provider looks up exact keys") {
  std::istringstream table(
      "warren buffett\t1 0 2 0\n"
      "has occupation\t0 1 0 3\n");
  FileProvider provider = FileProvider::load(table);
  CHECK(provider.dimension() == 4);
  CHECK(provider.embed("warren buffett") == EmbeddingVector{1, 0, 2, 0});

  SUBCASE("missing key is a hard error by default") {
    CHECK_THROWS_AS(provider.embed("unknown"), MissingKeyError);
  }
  SUBCASE("missing key falls back to hashed when configured") {
    std::istringstream again("warren buffett\t1 0 2 0\n");
    FileProviderOptions options;
    options.fallback_to_hashed = true;
    FileProvider with_fallback = FileProvider::load(again, options);
    EmbeddingVector fb = with_fallback.embed("unknown");
    CHECK(fb == HashedProvider(4).embed("unknown"));
  }
  SUBCASE("ragged rows are rejected") {
    std::istringstream bad("a\t1 2\nb\t1 2 3\n");
    CHECK_THROWS_AS(FileProvider::load(bad), std::runtime_error);
  }
}

TEST_CASE("remote provider round-trips and reports distinct errors") {
  httplib::Server server;
  int calls = 0;
  server.Post("/embed", [&](const httplib::Request& req, httplib::Response& res) {
    ++calls;
    auto body = nlohmann::json::parse(req.body);
    nlohmann::json reply;
    reply["dim"] = 4;
    nlohmann::json vectors = nlohmann::json::array();
    for (const auto& text : body["texts"]) {
      double len = static_cast<double>(text.get<std::string>().size());
      vectors.push_back({len, 1.0, 0.0, -1.0});
    }
    reply["vectors"] = vectors;
    res.set_content(reply.dump(), "application/json");
  });
  server.Post("/embed-bad", [&](const httplib::Request&, httplib::Response& res) {
    res.set_content("{\"nope\":true}", "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread worker([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  RemoteProviderOptions options;
  options.dimension = 4;
  options.retries = 0;
  options.timeout_ms = 2000;
  std::string base = "http://127.0.0.1:" + std::to_string(port);

  SUBCASE("success") {
    RemoteProvider provider(base, options);
    CHECK(provider.embed("abcd") == EmbeddingVector{4.0, 1.0, 0.0, -1.0});
  }
  SUBCASE("dimension mismatch is malformed, not retryable") {
    RemoteProviderOptions wrong = options;
    wrong.dimension = 7;
    RemoteProvider provider(base, wrong);
    CHECK_THROWS_AS(provider.embed("abcd"), MalformedResponseError);
  }
  SUBCASE("unreachable endpoint is a retryable error") {
    RemoteProviderOptions fast = options;
    fast.timeout_ms = 200;
    fast.retries = 1;
    RemoteProvider provider("http://127.0.0.1:1", fast);
    CHECK_THROWS_AS(provider.embed("abcd"), RemoteUnavailableError);
  }

  server.stop();
  worker.join();
}

TEST_CASE("relation catalog embeds phrases and refreshes on growth") {
  KnowledgeBase kb;
  kb.add_triple("Warren_Buffett", "hasOccupation", "Investor");
  HashedProvider provider;
  RelationEmbeddingCache cache;

  auto snap1 = kb.snapshot();
  auto catalog1 = cache.get(*snap1, provider);
  REQUIRE(catalog1->size() == 1);
  auto rel = snap1->find_relation("hasOccupation");
  REQUIRE(rel.has_value());
  CHECK(catalog1->vector_for(*rel) == provider.embed("has occupation"));

  SUBCASE("cache is reused while the catalog is stable") {
    kb.add_triple("Warren_Buffett", "hasOccupation", "Philanthropist");
    auto snap2 = kb.snapshot();
    CHECK(cache.get(*snap2, provider) == catalog1);
  }
  SUBCASE("a new relation grows the map by one") {
    kb.add_triple("Warren_Buffett", "birthPlace", "Omaha");
    auto snap2 = kb.snapshot();
    auto catalog2 = cache.get(*snap2, provider);
    CHECK(catalog2->size() == 2);
  }
  SUBCASE("empty KB yields an empty map") {
    KnowledgeBase empty;
    auto snap = empty.snapshot();
    CHECK(cache.get(*snap, provider)->size() == 0);
  }
}

TEST_CASE("provider specs parse") {
  CHECK(make_provider("hashed")->dimension() == 768);
  CHECK(make_provider("hashed:32")->dimension() == 32);
  CHECK_THROWS_AS(make_provider("hashed:zero"), std::invalid_argument);
  CHECK_THROWS_AS(make_provider("bogus"), std::invalid_argument);
}

TEST_CASE("l2 normalization is a provider flag") {
  HashedProvider raw(64, false);
  HashedProvider normalized(64, true);
  EmbeddingVector v = normalized.embed("warren buffett chairman");
  CHECK(dot(v, v) == doctest::Approx(1.0));
  CHECK(raw.embed("warren buffett chairman") != v);
}
