#include <doctest.h>

#include <algorithm>
#include <random>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "factrank/probe.hpp"
#include "factrank/verbalize.hpp"
#include "support/random_kb.hpp"

using namespace factrank;

namespace {

std::shared_ptr<const KbSnapshot> kb_from(const std::string& tsv) {
  std::istringstream in(tsv);
  IngestReport report;
  return ingest_tsv(in, {}, report);
}

// Ten probes over a small KB; the first seven facts exist, the last three
// subjects do not, so the builtin predictor scores exactly 7/10.
struct P70Fixture {
  std::shared_ptr<const KbSnapshot> kb;
  std::vector<Probe> probes;
};

P70Fixture p70() {
  std::ostringstream tsv;
  const char* subjects[] = {"Alder_Holt",  "Birch_Lowell", "Cedar_Marsh", "Derwent_Crane",
                           "Elm_Fairfax", "Fenwick_Oak",  "Grove_Ingram"};
  const char* answers[] = {"Investor", "Architect", "Chemist", "Historian",
                           "Pilot",    "Sculptor",  "Botanist"};
  for (int i = 0; i < 7; ++i) {
    tsv << subjects[i] << "\thasOccupation\t" << answers[i] << "\n";
    tsv << subjects[i] << "\tbirthPlace\tLisbon\n";
  }
  P70Fixture f;
  f.kb = kb_from(tsv.str());
  for (int i = 0; i < 7; ++i) {
    Probe p;
    p.query = std::string(entity_phrase(subjects[i])) + " has occupation [MASK]";
    p.answer = answers[i];
    p.relation = "hasOccupation";
    p.subset = "jobs";
    f.probes.push_back(p);
  }
  for (const char* ghost : {"Missing_One", "Missing_Two", "Missing_Three"}) {
    Probe p;
    p.query = std::string(entity_phrase(ghost)) + " has occupation [MASK]";
    p.answer = "Nothing";
    p.relation = "hasOccupation";
    p.subset = "jobs";
    f.probes.push_back(p);
  }
  return f;
}

} // namespace

TEST_CASE("probe loading validates the invariants") {
  std::istringstream in(
      R"({"query":"Phil Mogg is a member of [MASK]","answer":"UFO","relation":"memberOf","subset":"t"})"
      "\n"
      R"({"query":"no mask here","answer":"x"})"
      "\n"
      R"({"query":"two [MASK] masks [MASK]","answer":"x"})"
      "\n"
      R"({"query":"ok [MASK]","answer":"two words"})"
      "\n"
      R"(not json)"
      "\n");
  std::vector<std::string> errors;
  auto probes = load_probes(in, &errors);
  REQUIRE(probes.size() == 1);
  CHECK(probes[0].answer == "UFO");
  CHECK(errors.size() == 4);
}

TEST_CASE("builtin predictor proposes the slot side of the top triple") {
  auto kb = kb_from(
      "Phil_Mogg\tmember of\tUFO_(band)\n"
      "Phil_Mogg\tbirthPlace\tLondon\n");
  HashedProvider provider;
  auto relations = embed_relation_catalog(*kb, provider);
  KbLookupPredictor predictor(kb);

  SUBCASE("forward reading proposes tail tokens, top token first") {
    RankOptions options;
    options.k = 8;
    RetrievalResult r =
        retrieve("Phil Mogg is a member of [MASK]", *kb, provider, relations, options);
    REQUIRE_FALSE(r.scored.empty());
    auto ranked = predictor.predict("Phil Mogg is a member of [MASK]", r);
    REQUIRE_FALSE(ranked.empty());
    CHECK(ranked[0] == "UFO");
  }
  SUBCASE("reversed reading proposes the head") {
    RankOptions options;
    options.k = 8;
    RetrievalResult r =
        retrieve("[MASK] is a member of UFO", *kb, provider, relations, options);
    if (!r.scored.empty()) {
      auto ranked = predictor.predict("[MASK] is a member of UFO", r);
      REQUIRE_FALSE(ranked.empty());
      CHECK(ranked[0] == "Phil");
    }
  }
  SUBCASE("empty retrieval gives an empty ranking") {
    RetrievalResult empty;
    empty.query = "whatever [MASK]";
    CHECK(predictor.predict("whatever [MASK]", empty).empty());
  }
  SUBCASE("duplicate proposals keep the larger relevance") {
    RetrievalResult two;
    two.query = "Phil Mogg is a member of [MASK]";
    auto id0 = kb->find_fact("Phil_Mogg", "member of", "UFO_(band)");
    REQUIRE(id0.has_value());
    ScoredTriple strong{*id0, 3.0, 2.0, 6.0};
    ScoredTriple weak{*id0, 1.0, 1.0, 1.0};
    two.scored = {strong, weak};
    auto ranked = predictor.predict("Phil Mogg is a member of [MASK]", two);
    REQUIRE_FALSE(ranked.empty());
    CHECK(ranked[0] == "UFO");
  }
}

TEST_CASE("evaluate scores P@1 and aggregates") {
  P70Fixture f = p70();
  HashedProvider provider;
  auto relations = embed_relation_catalog(*f.kb, provider);
  KbLookupPredictor predictor(f.kb);

  SUBCASE("hand-scored fixture lands at 0.70 micro") {
    EvalReport report = evaluate(f.probes, *f.kb, provider, relations, predictor, {});
    CHECK(report.total == 10);
    CHECK(report.correct == 7);
    CHECK(report.micro_p_at_1 == doctest::Approx(0.70));
    CHECK(report.failures.size() == 3);
  }
  SUBCASE("all-correct subset reports 1.0 everywhere") {
    std::vector<Probe> good(f.probes.begin(), f.probes.begin() + 7);
    EvalReport report = evaluate(good, *f.kb, provider, relations, predictor, {});
    CHECK(report.micro_p_at_1 == 1.0);
    CHECK(report.macro_p_at_1 == 1.0);
    for (const auto& [_, rel] : report.per_relation) CHECK(rel.p_at_1() == 1.0);
    CHECK(report.failures.empty());
  }
  SUBCASE("macro and micro follow the two-relation arithmetic") {
    // nine correct of one relation, one incorrect of another
    std::vector<Probe> probes(f.probes.begin(), f.probes.begin() + 7);
    // repeat two correct probes to reach nine of the first relation
    probes.push_back(probes[0]);
    probes.push_back(probes[1]);
    Probe lone;
    lone.query = "Missing Person was born in [MASK]";
    lone.answer = "Nowhere";
    lone.relation = "birthPlace";
    lone.subset = "jobs";
    probes.push_back(lone);

    EvalReport report = evaluate(probes, *f.kb, provider, relations, predictor, {});
    CHECK(report.total == 10);
    CHECK(report.micro_p_at_1 == doctest::Approx(0.90));
    CHECK(report.macro_p_at_1 == doctest::Approx(0.50));
  }
  SUBCASE("empty probe set is an error") {
    CHECK_THROWS_AS(evaluate({}, *f.kb, provider, relations, predictor, {}),
                    std::invalid_argument);
  }
  SUBCASE("permutation invariance of the aggregates") {
    EvalReport base = evaluate(f.probes, *f.kb, provider, relations, predictor, {});
    std::vector<Probe> shuffled = f.probes;
    std::mt19937_64 rng(5);
    for (std::size_t i = shuffled.size(); i > 1; --i) {
      std::swap(shuffled[i - 1], shuffled[rng() % i]);
    }
    EvalReport perm = evaluate(shuffled, *f.kb, provider, relations, predictor, {});
    CHECK(perm.micro_p_at_1 == base.micro_p_at_1);
    CHECK(perm.macro_p_at_1 == base.macro_p_at_1);
    CHECK(perm.correct == base.correct);
  }
  SUBCASE("macro and micro identities hold by recomputation") {
    EvalReport report = evaluate(f.probes, *f.kb, provider, relations, predictor, {});
    std::size_t correct = 0, total = 0;
    double macro = 0.0;
    for (const auto& [_, rel] : report.per_relation) {
      correct += rel.correct;
      total += rel.count;
      macro += rel.p_at_1();
    }
    CHECK(total == report.total);
    CHECK(correct == report.correct);
    CHECK(report.micro_p_at_1 == doctest::Approx(double(correct) / double(total)));
    CHECK(report.macro_p_at_1 == doctest::Approx(macro / report.per_relation.size()));
  }
}

TEST_CASE("ablation modes") {
  P70Fixture f = p70();
  HashedProvider provider;
  auto relations = embed_relation_catalog(*f.kb, provider);
  KbLookupPredictor predictor(f.kb);

  SUBCASE("none gives the retrieval-driven baseline no knowledge") {
    EvalOptions options;
    options.source = TripleSource::None;
    EvalReport report = ablate(f.probes, *f.kb, provider, relations, predictor, options);
    CHECK(report.micro_p_at_1 == 0.0);
  }
  SUBCASE("random is seeded and reproducible") {
    EvalOptions options;
    options.source = TripleSource::Random;
    options.seed = 42;
    EvalReport a = ablate(f.probes, *f.kb, provider, relations, predictor, options);
    EvalReport b = ablate(f.probes, *f.kb, provider, relations, predictor, options);
    CHECK(nlohmann::json(report_to_json(a)).dump() == nlohmann::json(report_to_json(b)).dump());

    options.seed = 43;
    EvalReport c = ablate(f.probes, *f.kb, provider, relations, predictor, options);
    (void)c;  // different seed must still be a valid report
    CHECK(c.total == a.total);
  }
  SUBCASE("relevant beats random on this fixture") {
    EvalOptions relevant;
    EvalReport rel = ablate(f.probes, *f.kb, provider, relations, predictor, relevant);
    EvalOptions random_opts;
    random_opts.source = TripleSource::Random;
    random_opts.seed = 42;
    EvalReport rnd = ablate(f.probes, *f.kb, provider, relations, predictor, random_opts);
    CHECK(rel.micro_p_at_1 >= rnd.micro_p_at_1);
  }
}

TEST_CASE("update_experiment corrects constructed failures and restores the KB") {
  // Base KB with distractor facts only; the probe-relevant facts are missing.
  std::ostringstream tsv;
  const char* subjects[] = {"Alder_Holt", "Birch_Lowell", "Cedar_Marsh"};
  for (const char* s : subjects) tsv << s << "\tbirthPlace\tLisbon\n";
  KnowledgeBase kb(kb_from(tsv.str()));
  HashedProvider provider;
  RelationEmbeddingCache cache;

  std::vector<UpdateCase> cases;
  const char* bands[] = {"Ultramarine", "Vortexia", "Windrose"};
  for (int i = 0; i < 3; ++i) {
    UpdateCase c;
    c.probe.query = std::string(entity_phrase(subjects[i])) + " is a member of [MASK]";
    c.probe.answer = bands[i];
    c.probe.relation = "memberOf";
    c.fact = {subjects[i], "memberOf", std::string(bands[i]) + "_(band)"};
    cases.push_back(c);
  }

  std::string dump_before = kb.snapshot()->canonical_tsv();
  PredictorFactory factory = [](std::shared_ptr<const KbSnapshot> snap) {
    return std::make_unique<KbLookupPredictor>(std::move(snap));
  };
  UpdateOutcome outcome = update_experiment(cases, kb, provider, cache, factory, {}, false);

  CHECK(outcome.attempted == 3);
  CHECK(outcome.corrected == 3);
  CHECK(outcome.fraction == 1.0);
  for (const UpdateTrace& t : outcome.traces) {
    CHECK(t.before != t.c.probe.answer);
    CHECK(t.after == t.c.probe.answer);
  }
  CHECK(kb.snapshot()->canonical_tsv() == dump_before);  // bit-identical restore

  SUBCASE("persist keeps the added facts") {
    UpdateOutcome kept = update_experiment(cases, kb, provider, cache, factory, {}, true);
    CHECK(kept.corrected == 3);
    CHECK(kb.snapshot()->canonical_tsv() != dump_before);
  }
  SUBCASE("existing facts are skipped with a notice") {
    kb.add_triple(cases[0].fact[0], cases[0].fact[1], cases[0].fact[2]);
    UpdateOutcome partial = update_experiment(cases, kb, provider, cache, factory, {}, false);
    CHECK(partial.skipped == 1);
    CHECK(partial.attempted == 2);
  }
  SUBCASE("empty case list is an error") {
    CHECK_THROWS_AS(update_experiment({}, kb, provider, cache, factory, {}, false),
                    std::invalid_argument);
  }
}

TEST_CASE("remote predictor posts the query and ranked triples") {
  auto kb = kb_from("Phil_Mogg\tmember of\tUFO_(band)\n");
  HashedProvider provider;
  auto relations = embed_relation_catalog(*kb, provider);

  httplib::Server server;
  nlohmann::json seen;
  server.Post("/predict", [&](const httplib::Request& req, httplib::Response& res) {
    seen = nlohmann::json::parse(req.body);
    res.set_content(R"({"tokens":["UFO","parliament"]})", "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread worker([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  RemotePredictorOptions options;
  options.retries = 0;
  RemotePredictor predictor("http://127.0.0.1:" + std::to_string(port), kb, options);
  RankOptions rank;
  rank.k = 8;
  RetrievalResult r = retrieve("Phil Mogg is a member of [MASK]", *kb, provider, relations, rank);
  auto ranked = predictor.predict("Phil Mogg is a member of [MASK]", r);
  REQUIRE(ranked.size() == 2);
  CHECK(ranked[0] == "UFO");
  CHECK(seen["query"] == "Phil Mogg is a member of [MASK]");
  REQUIRE(seen["triples"].size() == 1);
  CHECK(seen["triples"][0][0] == "Phil_Mogg");
  CHECK(seen["triples"][0][2] == "UFO_(band)");

  SUBCASE("bad reply is an error") {
    httplib::Server bad;
    bad.Post("/predict", [](const httplib::Request&, httplib::Response& res) {
      res.set_content("garbage", "application/json");
    });
    int bad_port = bad.bind_to_any_port("127.0.0.1");
    REQUIRE(bad_port > 0);
    std::thread bad_worker([&] { bad.listen_after_bind(); });
    bad.wait_until_ready();
    RemotePredictor broken("http://127.0.0.1:" + std::to_string(bad_port), kb, options);
    CHECK_THROWS_AS(broken.predict("x [MASK]", r), std::runtime_error);
    bad.stop();
    bad_worker.join();
  }

  server.stop();
  worker.join();
}

TEST_CASE("ablate(relevant) is a pure function of its inputs") {
  std::mt19937_64 rng(17);
  testgen::RandomKbOptions options;
  options.max_triples = 40;
  auto kb = testgen::random_kb(rng, options);
  HashedProvider provider;
  auto relations = embed_relation_catalog(*kb, provider);
  KbLookupPredictor predictor(kb);

  std::vector<Probe> probes;
  for (int i = 0; i < 5; ++i) {
    Probe p;
    p.query = testgen::random_query(rng, *kb);
    if (p.query.find("[MASK]") == std::string::npos) p.query += " [MASK]";
    p.answer = "whatever";
    p.relation = "r" + std::to_string(i % 2);
    probes.push_back(p);
  }
  EvalReport a = evaluate(probes, *kb, provider, relations, predictor, {});
  EvalReport b = evaluate(probes, *kb, provider, relations, predictor, {});
  CHECK(report_to_json(a).dump() == report_to_json(b).dump());
}
