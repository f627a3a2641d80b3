#include <doctest.h>

#include <sstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "factrank/service.hpp"

using namespace factrank;
using nlohmann::json;

namespace {

struct LiveService {
  Engine engine;
  KbService service;
  httplib::Client client;

  explicit LiveService(std::shared_ptr<const KbSnapshot> snap, EngineConfig cfg = make_config())
      : engine(std::move(cfg), std::move(snap)),
        service(engine),
        client("127.0.0.1", [this] {
          int port = service.start_background("127.0.0.1");
          REQUIRE(port > 0);
          return port;
        }()) {}

  static EngineConfig make_config() {
    EngineConfig cfg;
    cfg.provider = "hashed:64";
    return cfg;
  }
};

std::shared_ptr<const KbSnapshot> kb_from(const std::string& tsv) {
  std::istringstream in(tsv);
  IngestReport report;
  return ingest_tsv(in, {}, report);
}

} // namespace

TEST_CASE("health and stats report the snapshot counts") {
  LiveService live(std::make_shared<const KbSnapshot>());

  auto health = live.client.Get("/health");
  REQUIRE(health);
  CHECK(health->status == 200);
  json h = json::parse(health->body);
  CHECK(h["status"] == "ok");
  CHECK(h["kb_triples"] == 0);

  auto stats = live.client.Get("/stats");
  REQUIRE(stats);
  json s = json::parse(stats->body);
  CHECK(s["triples"] == 0);
  CHECK(s["entities"] == 0);
  CHECK(s["relations"] == 0);
}

TEST_CASE("update then retrieve over HTTP sees the new fact") {
  LiveService live(kb_from("Phil_Mogg\tbirthPlace\tLondon\n"));

  // before: no member-of fact, retrieval scores only the distractor
  json query = {{"query", "Phil Mogg is a member of [MASK]"}, {"k", 8}};
  auto before = live.client.Post("/retrieve", query.dump(), "application/json");
  REQUIRE(before);
  CHECK(before->status == 200);
  CHECK(before->body.find("UFO_(band)") == std::string::npos);

  json add = {{"head", "Phil_Mogg"}, {"relation", "member of"}, {"tail", "UFO_(band)"}};
  auto added = live.client.Post("/triples", add.dump(), "application/json");
  REQUIRE(added);
  CHECK(added->status == 200);
  json a = json::parse(added->body);
  CHECK_FALSE(a["duplicate"].get<bool>());

  auto after = live.client.Post("/retrieve", query.dump(), "application/json");
  REQUIRE(after);
  std::istringstream lines(after->body);
  std::string first_line;
  REQUIRE(std::getline(lines, first_line));
  json top = json::parse(first_line);
  CHECK(top["tail"] == "UFO_(band)");  // the new fact ranks first, no rebuild

  SUBCASE("duplicate insert reports the same id") {
    auto again = live.client.Post("/triples", add.dump(), "application/json");
    REQUIRE(again);
    json b = json::parse(again->body);
    CHECK(b["duplicate"].get<bool>());
    CHECK(b["triple_id"] == a["triple_id"]);
  }
  SUBCASE("delete removes and reports missing ids") {
    std::string path = "/triples/" + std::to_string(a["triple_id"].get<std::uint64_t>());
    auto removed = live.client.Delete(path);
    REQUIRE(removed);
    CHECK(removed->status == 200);
    CHECK(json::parse(removed->body)["removed"].get<bool>());

    auto missing = live.client.Delete("/triples/99999");
    REQUIRE(missing);
    CHECK(missing->status == 404);
  }
}

TEST_CASE("malformed bodies get a 400 with a message") {
  LiveService live(std::make_shared<const KbSnapshot>());

  auto bad1 = live.client.Post("/retrieve", "not json", "application/json");
  REQUIRE(bad1);
  CHECK(bad1->status == 400);
  CHECK(json::parse(bad1->body).contains("error"));

  auto bad2 = live.client.Post("/retrieve", R"({"k":3})", "application/json");
  REQUIRE(bad2);
  CHECK(bad2->status == 400);

  auto bad3 = live.client.Post("/triples", R"({"head":"a"})", "application/json");
  REQUIRE(bad3);
  CHECK(bad3->status == 400);

  auto bad4 = live.client.Post("/triples", R"({"head":"","relation":"r","tail":"t"})",
                               "application/json");
  REQUIRE(bad4);
  CHECK(bad4->status == 400);

  auto bad5 = live.client.Post("/probe/run", "", "text/plain");
  REQUIRE(bad5);
  CHECK(bad5->status == 400);
}

TEST_CASE("probe run over HTTP returns the evaluation report") {
  LiveService live(kb_from(
      "Alder_Holt\thasOccupation\tInvestor\n"
      "Alder_Holt\tbirthPlace\tLisbon\n"));

  std::string probes =
      R"({"query":"Alder Holt has occupation [MASK]","answer":"Investor","relation":"occ","subset":"s"})"
      "\n"
      R"({"query":"Alder Holt was employed as [MASK]","answer":"Wrong","relation":"occ","subset":"s"})"
      "\n";
  auto res = live.client.Post("/probe/run", probes, "application/x-ndjson");
  REQUIRE(res);
  CHECK(res->status == 200);
  json report = json::parse(res->body);
  CHECK(report["total"] == 2);
  CHECK(report["correct"] == 1);
  CHECK(report["micro_p_at_1"] == doctest::Approx(0.5));
  REQUIRE(report["failures"].size() == 1);
}

TEST_CASE("service /retrieve equals the library rendering byte for byte") {
  auto snap = kb_from(
      "Warren_Buffett\tchairman of\tBerkshire_Hathaway\n"
      "Warren_Buffett\tbirthPlace\tOmaha\n");
  LiveService live(snap);

  json query = {{"query", "Warren Buffett is the chairman of [MASK]"}, {"k", 4}};
  auto res = live.client.Post("/retrieve", query.dump(), "application/json");
  REQUIRE(res);

  HashedProvider provider(64);
  auto relations = embed_relation_catalog(*snap, provider);
  RankOptions options;
  options.k = 4;
  RetrievalResult expect = retrieve("Warren Buffett is the chairman of [MASK]", *snap, provider,
                                    relations, options);
  CHECK(res->body == render_retrieval_jsonl(expect, *snap));
}
