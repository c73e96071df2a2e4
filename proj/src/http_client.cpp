#include "mrdrag/http_client.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <regex>
#include <thread>

namespace mrdrag {

BaseUrl parse_base_url(std::string_view url) {
  static const std::regex re(R"(^(https?)://([^/:]+)(?::(\d+))?(/.*)?$)");
  std::cmatch m;
  if (!std::regex_match(url.begin(), url.end(), m, re)) {
    throw Error(ErrorCode::ConfigError, "invalid base URL '" + std::string(url) + "'");
  }
  BaseUrl out;
  out.scheme = m[1].str();
  out.host = m[2].str();
  out.port = m[3].matched ? std::stoi(m[3].str()) : (out.scheme == "https" ? 443 : 80);
  out.path = m[4].matched ? m[4].str() : "";
  while (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
  return out;
}

namespace {

struct Attempt {
  int status = 0;  // 0 = transport failure
  std::string body;
  std::string cause;
};

Attempt post_once(const BaseUrl& url, const RemoteEndpoint& endpoint, const std::string& full_path,
                  const std::string& body) {
  httplib::Headers headers;
  if (!endpoint.api_key.empty()) headers.emplace("Authorization", "Bearer " + endpoint.api_key);

  auto run = [&](auto& client) {
    client.set_connection_timeout(endpoint.timeout);
    client.set_read_timeout(endpoint.timeout);
    client.set_write_timeout(endpoint.timeout);
    Attempt a;
    auto res = client.Post(full_path, headers, body, "application/json");
    if (!res) {
      a.cause = "transport error: " + httplib::to_string(res.error());
      return a;
    }
    a.status = res->status;
    a.body = res->body;
    if (a.status < 200 || a.status >= 300) a.cause = "HTTP " + std::to_string(a.status) + ": " + res->body.substr(0, 200);
    return a;
  };

  if (url.scheme == "https") {
    httplib::SSLClient client(url.host, url.port);
    return run(client);
  }
  httplib::Client client(url.host, url.port);
  return run(client);
}

bool retryable(const Attempt& a) { return a.status == 0 || a.status == 429 || a.status >= 500; }

}  // namespace

std::string post_json_with_retries(const RemoteEndpoint& endpoint, std::string_view path, const std::string& body) {
  const BaseUrl url = parse_base_url(endpoint.base_url);
  const std::string full_path = url.path + std::string(path);
  auto backoff = endpoint.initial_backoff;
  std::string cause = "no attempt made";
  const int attempts = std::max(1, endpoint.attempts);
  for (int i = 1; i <= attempts; ++i) {
    Attempt a = post_once(url, endpoint, full_path, body);
    if (a.status >= 200 && a.status < 300) return a.body;
    cause = a.cause;
    if (!retryable(a)) break;
    if (i < attempts) {
      spdlog::warn("POST {}{} attempt {}/{} failed ({}); retrying in {} ms", endpoint.base_url, path, i, attempts,
                   cause, backoff.count());
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
  throw Error(ErrorCode::BackendUnavailable, "POST " + endpoint.base_url + std::string(path) + ": " + cause);
}

}  // namespace mrdrag
