#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>

#include "httplib.h"
#include "hypkt/agents.hpp"
#include "hypkt/error.hpp"
#include "json.hpp"

namespace hypkt::agents {

using nlohmann::json;

namespace {

std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

HttpClientOptions HttpClientOptions::from_env() {
  HttpClientOptions o;
  o.endpoint = env_or("HYPKT_LLM_ENDPOINT", "");
  o.api_key = env_or("HYPKT_LLM_API_KEY", "");
  o.model = env_or("HYPKT_LLM_MODEL", o.model);
  o.audit_path = env_or("HYPKT_LLM_AUDIT", "");
  return o;
}

HttpLLMClient::HttpLLMClient(HttpClientOptions options) : options_(std::move(options)) {
  if (options_.endpoint.empty()) {
    throw Error(Errc::invalid_argument, "LLM endpoint not set (HYPKT_LLM_ENDPOINT)");
  }
  const auto scheme = options_.endpoint.find("://");
  if (scheme == std::string::npos || options_.endpoint.compare(0, scheme, "http") != 0) {
    throw Error(Errc::invalid_argument, "LLM endpoint must be an http:// URL: " + options_.endpoint);
  }
}

std::string HttpLLMClient::send(const std::string& prompt, const Schema& schema) {
  std::lock_guard<std::mutex> lock(mutex_);
  const auto scheme = options_.endpoint.find("://");
  const auto slash = options_.endpoint.find('/', scheme + 3);
  const std::string origin = options_.endpoint.substr(0, slash);
  const std::string path = slash == std::string::npos ? "/" : options_.endpoint.substr(slash);

  std::string keys;
  for (const auto& k : schema.required_keys) keys += (keys.empty() ? "" : ", ") + k;
  const json request = {
      {"model", options_.model},
      {"temperature", 0},
      {"response_format", {{"type", "json_object"}}},
      {"messages",
       json::array({{{"role", "system"}, {"content", "Reply with one JSON object containing the keys: " + keys + "."}},
                    {{"role", "user"}, {"content", prompt}}})}};
  const std::string body = request.dump();

  httplib::Client client(origin);
  client.set_connection_timeout(options_.timeout_seconds, 0);
  client.set_read_timeout(options_.timeout_seconds, 0);
  httplib::Headers headers;
  if (!options_.api_key.empty()) headers.emplace("Authorization", "Bearer " + options_.api_key);
  auto res = client.Post(path, headers, body, "application/json");

  const std::size_t seq = ++sequence_;
  const int status = res ? res->status : -1;
  const std::string reply_body = res ? res->body : std::string();
  if (!options_.audit_path.empty()) {
    std::ofstream audit(options_.audit_path, std::ios::app);
    audit << json{{"seq", seq}, {"time", utc_now()}, {"endpoint", options_.endpoint}, {"schema", schema.name},
                  {"request", request}, {"status", status}, {"response", reply_body}}
                 .dump()
          << '\n';
  }
  if (!res) throw Error(Errc::transport_error, "LLM request failed: " + httplib::to_string(res.error()));
  if (status < 200 || status >= 300) {
    throw Error(Errc::transport_error, "LLM endpoint returned HTTP " + std::to_string(status), reply_body);
  }
  try {
    const json doc = json::parse(reply_body);
    return doc.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception& e) {
    throw Error(Errc::parse_error, std::string("malformed chat completion: ") + e.what(), reply_body);
  }
}

}  // namespace hypkt::agents
