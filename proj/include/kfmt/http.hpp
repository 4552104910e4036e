#pragma once

#include <chrono>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace kfmt {

struct HttpResult {
  int status = 0;  // 0 when the request never produced a response
  std::string body;
  std::string transport_error;

  bool ok() const noexcept { return status >= 200 && status < 300; }
};

using HttpHeaders = std::vector<std::pair<std::string, std::string>>;

// Thin blocking JSON-over-HTTP client. `base_url` may carry a path prefix
// ("http://host:8080/v1"); request paths are appended to it.
class HttpJsonClient {
 public:
  explicit HttpJsonClient(std::string_view base_url,
                          std::chrono::seconds timeout = std::chrono::seconds(120));

  HttpResult post(std::string_view path, const std::string& body,
                  const HttpHeaders& headers = {}) const;
  HttpResult get(std::string_view path) const;

  const std::string& origin() const noexcept { return origin_; }
  const std::string& prefix() const noexcept { return prefix_; }

 private:
  std::string origin_;  // scheme://host[:port]
  std::string prefix_;  // path prefix without trailing slash
  std::chrono::seconds timeout_;
};

}  // namespace kfmt
