#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "factrank/config.hpp"
#include "factrank/corpus.hpp"
#include "factrank/engine.hpp"
#include "factrank/service.hpp"

namespace fs = std::filesystem;
using factrank::EngineConfig;
using nlohmann::json;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void fail(const std::string& message) {
  std::cerr << json{{"error", message}}.dump() << "\n";
  std::exit(1);
}

// Defaults < config file < environment < command-line flags.
struct CommonFlags {
  std::optional<std::string> config_path;
  std::optional<std::string> kb_path;
  std::optional<std::string> provider;
  std::optional<std::size_t> k;
  std::optional<std::size_t> cap;
  std::optional<unsigned> threads;
  bool l2_normalize = false;
  bool raw_product = false;
  bool case_insensitive = false;
  bool file_fallback = false;

  void add_to(CLI::App& cmd, bool with_kb = true) {
    cmd.add_option("--config", config_path, "flat key=value config file");
    if (with_kb) cmd.add_option("--kb", kb_path, "KB snapshot (canonical TSV)");
    cmd.add_option("--provider", provider,
                   "embedding provider: hashed|hashed:<dim>|file:<path>|remote:<url>");
    cmd.add_option("--k", k, "number of triples to keep");
    cmd.add_option("--cap", cap, "candidate pool cap before ranking");
    cmd.add_option("--threads", threads, "worker threads for scoring");
    cmd.add_flag("--l2-normalize", l2_normalize, "L2-normalize embeddings");
    cmd.add_flag("--raw-product", raw_product, "score by the raw product, no clamping");
    cmd.add_flag("--case-insensitive", case_insensitive, "case-insensitive answer matching");
    cmd.add_flag("--file-fallback", file_fallback,
                 "file provider falls back to hashed on missing keys");
  }

  EngineConfig resolve() const {
    EngineConfig cfg;
    if (config_path) cfg = factrank::load_config_file(*config_path, cfg);
    factrank::apply_env_overrides(cfg);
    if (kb_path) cfg.kb_path = *kb_path;
    if (provider) cfg.provider = *provider;
    if (k) cfg.k = *k;
    if (cap) cfg.candidate_cap = *cap;
    if (threads) cfg.threads = *threads;
    if (l2_normalize) cfg.l2_normalize = true;
    if (raw_product) cfg.raw_product = true;
    if (case_insensitive) cfg.case_insensitive = true;
    if (file_fallback) cfg.file_fallback_to_hashed = true;
    cfg.validate();
    return cfg;
  }
};

int cmd_ingest(const std::string& in_path, const std::string& out_path,
               const std::optional<std::string>& blocklist, bool no_url_filter, bool strict,
               const CommonFlags& common) {
  EngineConfig cfg = common.resolve();
  factrank::IngestOptions options;
  options.filters = cfg.filters;
  options.strict = strict;
  if (blocklist) {
    options.filters.relation_blocklist.clear();
    std::stringstream ss(*blocklist);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) options.filters.relation_blocklist.push_back(item);
    }
  }
  if (no_url_filter) options.filters.url_filter = false;

  std::ifstream in(in_path, std::ios::binary);
  if (!in) fail("cannot open input: " + in_path);
  factrank::IngestReport report;
  auto snap = factrank::ingest_tsv(in, options, report);
  factrank::save_kb_file(*snap, out_path);

  for (const auto& e : report.errors) {
    std::cerr << json{{"warning", e.message}, {"line", e.line}}.dump() << "\n";
  }
  factrank::KbStats stats = snap->stats();
  std::cout << json{{"triples", stats.triples},
                    {"entities", stats.entities},
                    {"relations", stats.relations},
                    {"lines", report.lines},
                    {"duplicates", report.duplicates},
                    {"dropped_blocklist", report.dropped_blocklist},
                    {"dropped_url", report.dropped_url},
                    {"malformed", report.errors.size()}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_retrieve(const std::string& query, const std::optional<std::string>& spans_path,
                 const CommonFlags& common) {
  EngineConfig cfg = common.resolve();
  if (cfg.kb_path.empty()) fail("retrieve needs --kb");
  factrank::Engine engine(cfg);

  std::unique_ptr<factrank::SpanSource> detector;
  if (spans_path) {
    detector = std::make_unique<factrank::RecordSpanSource>(read_file(*spans_path));
  }
  factrank::RetrievalResult result = engine.retrieve_query(query, 0, detector.get());
  if (result.truncated_pool) {
    std::cerr << json{{"warning", "candidate pool truncated at cap"},
                      {"cap", cfg.candidate_cap}}
                     .dump()
              << "\n";
  }
  std::cout << factrank::render_retrieval_jsonl(result, *engine.kb().snapshot());
  return 0;
}

int cmd_build_corpus(const std::string& in_path, const std::string& out_path, std::uint64_t seed,
                     const std::optional<std::string>& pronouns, const CommonFlags& common) {
  EngineConfig cfg = common.resolve();
  if (cfg.kb_path.empty()) fail("build-corpus needs --kb");
  factrank::Engine engine(cfg);

  std::string markup;
  fs::path in(in_path);
  if (fs::is_directory(in)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(in)) {
      if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      markup += read_file(f);
      if (!markup.empty() && markup.back() != '\n') markup.push_back('\n');
    }
  } else {
    markup = read_file(in);
  }

  factrank::BuildOptions options;
  options.k = cfg.k;
  options.seed = seed;
  options.rank = engine.rank_options();
  if (pronouns) {
    std::stringstream ss(*pronouns);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) options.pronouns.push_back(item);
    }
  } else {
    options.pronouns = cfg.pronouns;
  }

  std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
  if (!out) fail("cannot write output: " + out_path);

  auto snap = engine.kb().snapshot();
  auto relations = engine.relation_cache().get(*snap, engine.provider());
  factrank::BuildStats stats = factrank::build_examples(
      markup, *snap, engine.provider(), *relations, options,
      [&](const factrank::TrainingExample& ex) {
        out << factrank::example_to_json(ex, *snap) << "\n";
      });
  if (!out) fail("write failed: " + out_path);

  std::cout << json{{"sentences", stats.sentences},
                    {"emitted", stats.emitted},
                    {"skipped_pronoun", stats.skipped_pronoun},
                    {"skipped_anchorless", stats.skipped_anchorless},
                    {"parse_errors", stats.parse_errors},
                    {"retrieval_failures", stats.retrieval_failures}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_probe(const std::optional<std::string>& probes_path, const std::string& predictor_spec,
              const std::optional<std::string>& ablate_mode, std::uint64_t seed,
              const std::optional<std::string>& update_path, bool persist,
              const std::optional<std::string>& sweep_spec, const CommonFlags& common) {
  EngineConfig cfg = common.resolve();
  if (cfg.kb_path.empty()) fail("probe needs --kb");
  factrank::Engine engine(cfg);

  if (update_path) {
    std::ifstream in(*update_path);
    if (!in) fail("cannot open update cases: " + *update_path);
    std::vector<std::string> errors;
    std::vector<factrank::UpdateCase> cases = factrank::load_update_cases(in, &errors);
    for (const auto& e : errors) std::cerr << json{{"warning", e}}.dump() << "\n";
    if (cases.empty()) fail("no valid update cases");
    factrank::UpdateOutcome outcome = factrank::update_experiment(
        cases, engine.kb(), engine.provider(), engine.relation_cache(),
        engine.predictor_factory(predictor_spec), engine.eval_options(), persist);
    std::cout << factrank::update_outcome_to_json(outcome).dump(2) << "\n";
    return 0;
  }

  if (!probes_path) fail("probe needs --probes (or --update-experiment)");
  std::ifstream in(*probes_path);
  if (!in) fail("cannot open probes: " + *probes_path);
  std::vector<std::string> errors;
  std::vector<factrank::Probe> probes = factrank::load_probes(in, &errors);
  for (const auto& e : errors) std::cerr << json{{"warning", e}}.dump() << "\n";
  if (probes.empty()) fail("no valid probes");

  factrank::EvalOptions options = engine.eval_options();
  options.seed = seed;
  if (ablate_mode) {
    if (*ablate_mode == "random") {
      options.source = factrank::TripleSource::Random;
    } else if (*ablate_mode == "none") {
      options.source = factrank::TripleSource::None;
    } else {
      fail("--ablate must be random or none");
    }
  }

  auto snap = engine.kb().snapshot();
  auto relations = engine.relation_cache().get(*snap, engine.provider());
  auto predictor = engine.make_predictor(predictor_spec, snap);

  if (sweep_spec) {
    std::vector<std::size_t> ks;
    std::stringstream ss(*sweep_spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) ks.push_back(std::stoull(item));
    }
    if (ks.empty()) fail("--sweep-k needs at least one k");
    json sweep = json::object();
    for (std::size_t k : ks) {
      factrank::EvalOptions per_k = options;
      per_k.k = k;
      per_k.rank.k = k;
      factrank::EvalReport report =
          factrank::ablate(probes, *snap, engine.provider(), *relations, *predictor, per_k);
      std::cout << "k=" << k << " micro P@1 " << report.micro_p_at_1 << " macro P@1 "
                << report.macro_p_at_1 << "\n";
      sweep[std::to_string(k)] = factrank::report_to_json(report);
    }
    std::cout << json{{"sweep", std::move(sweep)}}.dump(2) << "\n";
    return 0;
  }

  factrank::EvalReport report =
      factrank::ablate(probes, *snap, engine.provider(), *relations, *predictor, options);
  std::cout << factrank::report_table(report);
  std::cout << factrank::report_to_json(report).dump(2) << "\n";
  return 0;
}

int cmd_update(const std::vector<std::string>& adds, const std::optional<std::string>& add_file,
               const std::vector<std::string>& removes, const std::vector<std::uint64_t>& remove_ids,
               const std::optional<std::string>& out_path, const CommonFlags& common) {
  EngineConfig cfg = common.resolve();
  if (cfg.kb_path.empty()) fail("update needs --kb");
  factrank::Engine engine(cfg);
  factrank::KnowledgeBase& kb = engine.kb();

  auto split_triple = [](const std::string& spec) -> std::array<std::string, 3> {
    std::size_t tab1 = spec.find('\t');
    std::size_t tab2 = tab1 == std::string::npos ? std::string::npos : spec.find('\t', tab1 + 1);
    if (tab2 == std::string::npos) {
      throw std::runtime_error("triple must be head<TAB>relation<TAB>tail: " + spec);
    }
    return {spec.substr(0, tab1), spec.substr(tab1 + 1, tab2 - tab1 - 1), spec.substr(tab2 + 1)};
  };

  std::vector<std::array<std::string, 3>> to_add;
  for (const auto& a : adds) to_add.push_back(split_triple(a));
  if (add_file) {
    std::ifstream in(*add_file);
    if (!in) fail("cannot open add file: " + *add_file);
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      to_add.push_back(split_triple(line));
    }
  }

  for (const auto& [h, r, t] : to_add) {
    auto result = kb.add_triple(h, r, t);
    std::cout << json{{"op", "add"},
                      {"head", h},
                      {"relation", r},
                      {"tail", t},
                      {"triple_id", to_index(result.id)},
                      {"duplicate", result.duplicate}}
                     .dump()
              << "\n";
  }
  for (const auto& spec : removes) {
    auto [h, r, t] = split_triple(spec);
    auto snap = kb.snapshot();
    auto id = snap->find_fact(h, r, t);
    bool removed = id ? kb.remove_triple(*id) : false;
    std::cout << json{{"op", "remove"}, {"head", h}, {"relation", r}, {"tail", t},
                      {"removed", removed}}
                     .dump()
              << "\n";
  }
  for (std::uint64_t id : remove_ids) {
    bool removed = kb.remove_triple(factrank::TripleId{id});
    std::cout << json{{"op", "remove"}, {"triple_id", id}, {"removed", removed}}.dump() << "\n";
  }

  factrank::save_kb_file(*kb.snapshot(), out_path ? *out_path : cfg.kb_path);
  return 0;
}

int cmd_serve(const std::optional<std::string>& bind, const CommonFlags& common) {
  EngineConfig cfg = common.resolve();
  if (bind) cfg.bind = *bind;
  auto [host, port] = factrank::parse_bind(cfg.bind);
  factrank::Engine engine(cfg);
  factrank::KbService service(engine);
  std::cerr << json{{"listening", cfg.bind}}.dump() << "\n";
  if (!service.listen(host, port)) {
    fail("cannot bind " + cfg.bind);
  }
  return 0;
}

int cmd_dump(const CommonFlags& common) {
  EngineConfig cfg = common.resolve();
  if (cfg.kb_path.empty()) fail("dump needs --kb");
  auto snap = factrank::load_kb_file(cfg.kb_path);
  std::cout << snap->canonical_tsv();
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"contextual fact retrieval engine and probe harness"};
  app.require_subcommand(1);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "build a KB snapshot from a triple TSV");
  std::string ingest_in, ingest_out;
  std::optional<std::string> ingest_blocklist;
  bool ingest_no_url = false, ingest_strict = false;
  CommonFlags ingest_common;
  ingest->add_option("--in", ingest_in, "input TSV (head\\trelation\\ttail)")->required();
  ingest->add_option("--out", ingest_out, "output snapshot path")->required();
  ingest->add_option("--blocklist", ingest_blocklist, "comma-separated relation blocklist");
  ingest->add_flag("--no-url-filter", ingest_no_url, "keep triples with URL tails");
  ingest->add_flag("--strict", ingest_strict, "abort on the first malformed line");
  ingest_common.add_to(*ingest, /*with_kb=*/false);

  // retrieve
  auto* retrieve = app.add_subcommand("retrieve", "rank KB triples for a query");
  std::string retrieve_query;
  std::optional<std::string> retrieve_spans;
  CommonFlags retrieve_common;
  retrieve->add_option("--query", retrieve_query, "query text, may contain [MASK]")->required();
  retrieve->add_option("--spans", retrieve_spans,
                       "mention spans file (start\\tend\\tlabel), replaces the gazetteer");
  retrieve_common.add_to(*retrieve);

  // build-corpus
  auto* build = app.add_subcommand("build-corpus", "emit masked training examples");
  std::string build_in, build_out;
  std::uint64_t build_seed = 0;
  std::optional<std::string> build_pronouns;
  CommonFlags build_common;
  build->add_option("--in", build_in, "anchored markup file or directory")->required();
  build->add_option("--out", build_out, "output JSONL path")->required();
  build->add_option("--seed", build_seed, "RNG seed for anchor choice")->required();
  build->add_option("--pronouns", build_pronouns, "comma-separated pronoun filter override");
  build_common.add_to(*build);

  // probe
  auto* probe = app.add_subcommand("probe", "evaluate a predictor on probes");
  std::optional<std::string> probe_file, probe_ablate, probe_update, probe_sweep;
  std::string probe_predictor = "builtin";
  std::uint64_t probe_seed = 0;
  bool probe_persist = false;
  CommonFlags probe_common;
  probe->add_option("--probes", probe_file, "probe JSONL file");
  probe->add_option("--predictor", probe_predictor, "builtin|remote:<url>");
  probe->add_option("--ablate", probe_ablate, "triple source override: random|none");
  probe->add_option("--seed", probe_seed, "seed for --ablate random");
  probe->add_option("--update-experiment", probe_update,
                    "run knowledge-update cases from a JSONL file instead of evaluation");
  probe->add_flag("--persist", probe_persist, "keep facts added by the update experiment");
  probe->add_option("--sweep-k", probe_sweep, "comma-separated k values to sweep");
  probe_common.add_to(*probe);

  // update
  auto* update = app.add_subcommand("update", "add or remove triples in a snapshot");
  std::vector<std::string> update_adds, update_removes;
  std::vector<std::uint64_t> update_remove_ids;
  std::optional<std::string> update_add_file, update_out;
  CommonFlags update_common;
  update->add_option("--add", update_adds, "triple head<TAB>relation<TAB>tail (repeatable)");
  update->add_option("--add-file", update_add_file, "TSV file of triples to add");
  update->add_option("--remove", update_removes, "triple to remove by content (repeatable)");
  update->add_option("--remove-id", update_remove_ids, "triple id to remove (repeatable)");
  update->add_option("--out", update_out, "output snapshot path (defaults to --kb)");
  update_common.add_to(*update);

  // serve
  auto* serve = app.add_subcommand("serve", "run the HTTP service");
  std::optional<std::string> serve_bind;
  CommonFlags serve_common;
  serve->add_option("--bind", serve_bind, "host:port to listen on");
  serve_common.add_to(*serve);

  // dump
  auto* dump = app.add_subcommand("dump", "print the canonical TSV of a snapshot");
  CommonFlags dump_common;
  dump_common.add_to(*dump);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n" << app.help();
    return 2;
  }

  try {
    if (*ingest) {
      return cmd_ingest(ingest_in, ingest_out, ingest_blocklist, ingest_no_url, ingest_strict,
                        ingest_common);
    }
    if (*retrieve) return cmd_retrieve(retrieve_query, retrieve_spans, retrieve_common);
    if (*build) return cmd_build_corpus(build_in, build_out, build_seed, build_pronouns,
                                        build_common);
    if (*probe) {
      return cmd_probe(probe_file, probe_predictor, probe_ablate, probe_seed, probe_update,
                       probe_persist, probe_sweep, probe_common);
    }
    if (*update) {
      return cmd_update(update_adds, update_add_file, update_removes, update_remove_ids,
                        update_out, update_common);
    }
    if (*serve) return cmd_serve(serve_bind, serve_common);
    if (*dump) return cmd_dump(dump_common);
  } catch (const std::exception& e) {
    fail(e.what());
  }
  return 0;
}
