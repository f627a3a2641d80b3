#include "factrank/service.hpp"

#include <sstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace factrank {

using nlohmann::json;

namespace {

void reply_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& message) {
  reply_json(res, status, json{{"error", message}});
}

} // namespace

struct KbService::Impl {
  explicit Impl(Engine& e) : engine(e) { install_routes(); }

  Engine& engine;
  httplib::Server server;

  void install_routes() {
    server.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
      auto snap = engine.kb().snapshot();
      reply_json(res, 200, json{{"status", "ok"}, {"kb_triples", snap->stats().triples}});
    });

    server.Get("/stats", [this](const httplib::Request&, httplib::Response& res) {
      auto snap = engine.kb().snapshot();
      KbStats stats = snap->stats();
      reply_json(res, 200,
                 json{{"triples", stats.triples},
                      {"entities", stats.entities},
                      {"relations", stats.relations}});
    });

    server.Post("/retrieve", [this](const httplib::Request& req, httplib::Response& res) {
      json body = json::parse(req.body, nullptr, false);
      if (body.is_discarded() || !body.is_object() || !body.contains("query") ||
          !body["query"].is_string()) {
        reply_error(res, 400, "expected {\"query\": string, \"k\": int?}");
        return;
      }
      std::size_t k = engine.config().k;
      if (body.contains("k")) {
        if (!body["k"].is_number_unsigned() || body["k"].get<std::size_t>() == 0) {
          reply_error(res, 400, "k must be a positive integer");
          return;
        }
        k = body["k"].get<std::size_t>();
      }
      try {
        auto snap = engine.kb().snapshot();
        auto relations = engine.relation_cache().get(*snap, engine.provider());
        RetrievalResult result = retrieve(body["query"].get<std::string>(), *snap,
                                          engine.provider(), *relations,
                                          engine.rank_options(k));
        res.status = 200;
        res.set_content(render_retrieval_jsonl(result, *snap), "application/x-ndjson");
      } catch (const std::exception& e) {
        reply_error(res, 400, e.what());
      }
    });

    server.Post("/triples", [this](const httplib::Request& req, httplib::Response& res) {
      json body = json::parse(req.body, nullptr, false);
      if (body.is_discarded() || !body.is_object() || !body.contains("head") ||
          !body.contains("relation") || !body.contains("tail") || !body["head"].is_string() ||
          !body["relation"].is_string() || !body["tail"].is_string()) {
        reply_error(res, 400, "expected {\"head\",\"relation\",\"tail\"} strings");
        return;
      }
      try {
        auto added = engine.kb().add_triple(body["head"].get<std::string>(),
                                            body["relation"].get<std::string>(),
                                            body["tail"].get<std::string>());
        reply_json(res, 200,
                   json{{"triple_id", to_index(added.id)}, {"duplicate", added.duplicate}});
      } catch (const std::invalid_argument& e) {
        reply_error(res, 400, e.what());
      }
    });

    server.Delete(R"(/triples/(\d+))", [this](const httplib::Request& req,
                                              httplib::Response& res) {
      std::uint64_t id = 0;
      try {
        id = std::stoull(req.matches[1].str());
      } catch (const std::exception&) {
        reply_error(res, 400, "triple id must be an integer");
        return;
      }
      bool removed = engine.kb().remove_triple(TripleId{id});
      reply_json(res, removed ? 200 : 404, json{{"removed", removed}});
    });

    server.Post("/probe/run", [this](const httplib::Request& req, httplib::Response& res) {
      std::istringstream in(req.body);
      std::vector<std::string> errors;
      std::vector<Probe> probes = load_probes(in, &errors);
      if (probes.empty()) {
        reply_error(res, 400,
                    errors.empty() ? "no probes in request body" : "no valid probes: " + errors[0]);
        return;
      }
      try {
        auto snap = engine.kb().snapshot();
        auto relations = engine.relation_cache().get(*snap, engine.provider());
        KbLookupPredictor predictor(snap);
        EvalReport report = evaluate(probes, *snap, engine.provider(), *relations, predictor,
                                     engine.eval_options());
        json body = report_to_json(report);
        if (!errors.empty()) body["skipped_records"] = errors;
        reply_json(res, 200, body);
      } catch (const std::exception& e) {
        reply_error(res, 400, e.what());
      }
    });
  }
};

KbService::KbService(Engine& engine) : impl_(std::make_unique<Impl>(engine)) {}

KbService::~KbService() {
  stop();
}

bool KbService::listen(const std::string& host, int port) {
  return impl_->server.listen(host, port);
}

int KbService::start_background(const std::string& host) {
  int port = impl_->server.bind_to_any_port(host);
  if (port <= 0) return -1;
  background_ = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return port;
}

void KbService::stop() {
  if (impl_) impl_->server.stop();
  if (background_.joinable()) background_.join();
}

} // namespace factrank
