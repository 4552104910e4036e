#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "kfmt/http.hpp"

#include "httplib.h"
#include "kfmt/error.hpp"

namespace kfmt {

HttpJsonClient::HttpJsonClient(std::string_view base_url, std::chrono::seconds timeout)
    : timeout_(timeout) {
  auto scheme_end = base_url.find("://");
  if (scheme_end == std::string_view::npos) {
    throw Error(ErrorCode::config_invalid, "URL needs a scheme: " + std::string(base_url));
  }
  auto path_start = base_url.find('/', scheme_end + 3);
  origin_ = std::string(base_url.substr(0, path_start));
  if (path_start != std::string_view::npos) {
    prefix_ = std::string(base_url.substr(path_start));
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
  }
}

namespace {

HttpResult to_result(const httplib::Result& res) {
  HttpResult out;
  if (!res) {
    out.transport_error = httplib::to_string(res.error());
    return out;
  }
  out.status = res->status;
  out.body = res->body;
  return out;
}

httplib::Client make_client(const std::string& origin, std::chrono::seconds timeout) {
  httplib::Client cli(origin);
  cli.set_connection_timeout(timeout);
  cli.set_read_timeout(timeout);
  cli.set_write_timeout(timeout);
  return cli;
}

}  // namespace

HttpResult HttpJsonClient::post(std::string_view path, const std::string& body,
                                const HttpHeaders& headers) const {
  auto cli = make_client(origin_, timeout_);
  httplib::Headers h;
  for (const auto& [k, v] : headers) h.emplace(k, v);
  return to_result(cli.Post(prefix_ + std::string(path), h, body, "application/json"));
}

HttpResult HttpJsonClient::get(std::string_view path) const {
  auto cli = make_client(origin_, timeout_);
  return to_result(cli.Get(prefix_ + std::string(path)));
}

}  // namespace kfmt
