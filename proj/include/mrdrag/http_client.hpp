#pragma once

#include <string>
#include <string_view>

#include "mrdrag/embedding.hpp"

namespace mrdrag {

struct BaseUrl {
  std::string scheme;  // "http" or "https"
  std::string host;
  int port = 0;
  std::string path;    // prefix without trailing slash, e.g. "/v1"
};

/// Throws Error(ConfigError) for anything that is not http(s)://host[:port][/path].
BaseUrl parse_base_url(std::string_view url);

/// POSTs a JSON body to endpoint.base_url + path with bearer auth and
/// returns the 2xx response body. Transport failures, 429 and 5xx are retried
/// endpoint.attempts times with exponential backoff starting at
/// endpoint.initial_backoff; other statuses fail at once. Exhaustion raises
/// Error(BackendUnavailable) with the last cause in the message.
std::string post_json_with_retries(const RemoteEndpoint& endpoint, std::string_view path, const std::string& body);

}  // namespace mrdrag
