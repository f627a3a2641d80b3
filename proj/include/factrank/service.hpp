#pragma once

#include <memory>
#include <string>
#include <thread>

#include "factrank/engine.hpp"

namespace factrank {

// HTTP front end over one Engine. Read handlers work on the snapshot current
// at request time; mutations funnel through the store's single writer, so a
// request never sees a half-applied update.
//
//   GET    /health        -> {"kb_triples":N,"status":"ok"}
//   GET    /stats         -> {"entities":N,"relations":N,"triples":N}
//   POST   /retrieve      {"query":s,"k":n?}        -> ScoredTriple JSON lines
//   POST   /triples       {"head","relation","tail"} -> {"duplicate":b,"triple_id":N}
//   DELETE /triples/<id>  -> {"removed":b}
//   POST   /probe/run     probe JSONL body           -> EvalReport JSON
class KbService {
 public:
  explicit KbService(Engine& engine);
  ~KbService();

  KbService(const KbService&) = delete;
  KbService& operator=(const KbService&) = delete;

  // Blocks; false when the address cannot be bound (port busy etc).
  bool listen(const std::string& host, int port);

  // Test support: bind an ephemeral port and serve on a background thread.
  int start_background(const std::string& host);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::thread background_;
};

} // namespace factrank
