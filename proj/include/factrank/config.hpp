#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "factrank/kb_store.hpp"

namespace factrank {

// Flat key-value configuration shared by the CLI and the service. Layering:
// built-in defaults, then config file, then FACTRANK_* environment variables,
// then command-line flags.
struct EngineConfig {
  std::string kb_path;
  std::string provider = "hashed";  // hashed | hashed:<dim> | file:<path> | remote:<url>
  std::size_t k = 8;
  std::size_t candidate_cap = kDefaultCandidateCap;
  IngestFilterConfig filters;
  std::vector<std::string> pronouns;  // empty -> built-in defaults
  std::string bind = "127.0.0.1:8080";
  bool l2_normalize = false;
  bool raw_product = false;
  bool case_insensitive = false;
  bool file_fallback_to_hashed = false;
  unsigned threads = 1;
  int remote_timeout_ms = 5000;
  int remote_retries = 2;

  // Throws std::invalid_argument on violated invariants (k >= 1, cap >= k,
  // parsable provider spec and bind address).
  void validate() const;
};

// Lines "key = value", '#' comments, unknown keys rejected. List values are
// comma-separated; booleans accept on/off/true/false/1/0.
EngineConfig load_config_file(const std::filesystem::path& path, EngineConfig base = {});
void apply_config_line(EngineConfig& config, std::string_view key, std::string_view value);

// FACTRANK_KB_PATH, FACTRANK_PROVIDER, FACTRANK_K, FACTRANK_CANDIDATE_CAP,
// FACTRANK_RELATION_BLOCKLIST, FACTRANK_URL_FILTER, FACTRANK_PRONOUNS,
// FACTRANK_BIND, FACTRANK_THREADS.
void apply_env_overrides(EngineConfig& config);

std::pair<std::string, int> parse_bind(const std::string& bind);

} // namespace factrank
