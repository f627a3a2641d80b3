#include "factrank/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <stdexcept>

#include "factrank/text.hpp"

namespace factrank {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string> split_list(std::string_view value) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= value.size()) {
    std::size_t comma = value.find(',', start);
    std::string_view item =
        comma == std::string_view::npos ? value.substr(start) : value.substr(start, comma - start);
    item = trim(item);
    if (!item.empty()) out.emplace_back(item);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

bool parse_bool(std::string_view value, std::string_view key) {
  std::string v = ascii_lower(value);
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw std::invalid_argument("config key " + std::string(key) + ": expected on/off, got '" +
                              std::string(value) + "'");
}

template <typename T>
T parse_number(std::string_view value, std::string_view key) {
  T out{};
  auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || p != value.data() + value.size()) {
    throw std::invalid_argument("config key " + std::string(key) + ": expected a number, got '" +
                                std::string(value) + "'");
  }
  return out;
}

} // namespace

void EngineConfig::validate() const {
  if (k == 0) throw std::invalid_argument("k must be >= 1");
  if (candidate_cap < k) throw std::invalid_argument("candidate_cap must be >= k");
  if (threads == 0) throw std::invalid_argument("threads must be >= 1");
  if (!(provider == "hashed" || provider.starts_with("hashed:") ||
        provider.starts_with("file:") || provider.starts_with("remote:"))) {
    throw std::invalid_argument("provider spec must be hashed|hashed:<dim>|file:<path>|remote:<url>");
  }
  parse_bind(bind);
}

void apply_config_line(EngineConfig& config, std::string_view key, std::string_view value) {
  if (key == "kb_path") {
    config.kb_path = std::string(value);
  } else if (key == "provider") {
    config.provider = std::string(value);
  } else if (key == "k") {
    config.k = parse_number<std::size_t>(value, key);
  } else if (key == "candidate_cap") {
    config.candidate_cap = parse_number<std::size_t>(value, key);
  } else if (key == "relation_blocklist") {
    config.filters.relation_blocklist = split_list(value);
  } else if (key == "url_filter") {
    config.filters.url_filter = parse_bool(value, key);
  } else if (key == "pronouns") {
    config.pronouns = split_list(value);
  } else if (key == "bind") {
    config.bind = std::string(value);
  } else if (key == "l2_normalize") {
    config.l2_normalize = parse_bool(value, key);
  } else if (key == "raw_product") {
    config.raw_product = parse_bool(value, key);
  } else if (key == "case_insensitive") {
    config.case_insensitive = parse_bool(value, key);
  } else if (key == "file_fallback_to_hashed") {
    config.file_fallback_to_hashed = parse_bool(value, key);
  } else if (key == "threads") {
    config.threads = parse_number<unsigned>(value, key);
  } else if (key == "remote_timeout_ms") {
    config.remote_timeout_ms = parse_number<int>(value, key);
  } else if (key == "remote_retries") {
    config.remote_retries = parse_number<int>(value, key);
  } else {
    throw std::invalid_argument("unknown config key: " + std::string(key));
  }
}

EngineConfig load_config_file(const std::filesystem::path& path, EngineConfig base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view v = trim(line);
    if (v.empty() || v.front() == '#') continue;
    std::size_t eq = v.find('=');
    if (eq == std::string_view::npos) {
      throw std::runtime_error("config line " + std::to_string(line_no) +
                               ": expected key = value");
    }
    try {
      apply_config_line(base, trim(v.substr(0, eq)), trim(v.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return base;
}

void apply_env_overrides(EngineConfig& config) {
  static constexpr std::pair<const char*, const char*> kVars[] = {
      {"FACTRANK_KB_PATH", "kb_path"},
      {"FACTRANK_PROVIDER", "provider"},
      {"FACTRANK_K", "k"},
      {"FACTRANK_CANDIDATE_CAP", "candidate_cap"},
      {"FACTRANK_RELATION_BLOCKLIST", "relation_blocklist"},
      {"FACTRANK_URL_FILTER", "url_filter"},
      {"FACTRANK_PRONOUNS", "pronouns"},
      {"FACTRANK_BIND", "bind"},
      {"FACTRANK_THREADS", "threads"},
  };
  for (const auto& [env, key] : kVars) {
    if (const char* value = std::getenv(env)) {
      apply_config_line(config, key, value);
    }
  }
}

std::pair<std::string, int> parse_bind(const std::string& bind) {
  std::size_t colon = bind.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 >= bind.size()) {
    throw std::invalid_argument("bind address must be host:port");
  }
  int port = 0;
  const char* begin = bind.data() + colon + 1;
  const char* end = bind.data() + bind.size();
  auto [p, ec] = std::from_chars(begin, end, port);
  if (ec != std::errc{} || p != end || port < 0 || port > 65535) {
    throw std::invalid_argument("bind address has an invalid port");
  }
  return {bind.substr(0, colon), port};
}

} // namespace factrank
