#include "paisa/net.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "httplib.h"

namespace paisa::net {

Endpoint Endpoint::parse(std::string_view text) {
  const auto colon = text.rfind(':');
  if (colon == std::string_view::npos) throw Error("expected host:port, got '" + std::string(text) + "'");
  Endpoint e;
  if (colon > 0) e.host = std::string(text.substr(0, colon));
  const std::string port(text.substr(colon + 1));
  char* end = nullptr;
  const long p = std::strtol(port.c_str(), &end, 10);
  if (port.empty() || *end != '\0' || p < 0 || p > 65535) throw Error("bad port in '" + std::string(text) + "'");
  e.port = static_cast<std::uint16_t>(p);
  return e;
}

EpochSeconds wall_clock() {
  return static_cast<EpochSeconds>(
      std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch())
          .count());
}

namespace {

sockaddr_in resolve_ipv4(const Endpoint& ep) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_DGRAM;
  addrinfo* res = nullptr;
  if (getaddrinfo(ep.host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr) {
    throw Error("cannot resolve " + ep.host);
  }
  sockaddr_in addr{};
  std::memcpy(&addr, res->ai_addr, sizeof addr);
  freeaddrinfo(res);
  addr.sin_port = htons(ep.port);
  return addr;
}

int udp_socket() {
  const int fd = ::socket(AF_INET, SOCK_DGRAM, 0);
  if (fd < 0) throw Error(std::string("socket: ") + std::strerror(errno));
  return fd;
}

bool wait_readable(int fd, int timeout_ms) {
  pollfd p{fd, POLLIN, 0};
  return ::poll(&p, 1, timeout_ms) > 0 && (p.revents & POLLIN);
}

}  // namespace

UdpSyncServer::UdpSyncServer(server::ManufacturerServer& srv, const Endpoint& bind, Clock clock)
    : srv_(srv), clock_(std::move(clock)) {
  fd_ = udp_socket();
  const sockaddr_in addr = resolve_ipv4(bind);
  if (::bind(fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0) {
    const std::string err = std::strerror(errno);
    ::close(fd_);
    throw Error("bind " + bind.str() + ": " + err);
  }
  sockaddr_in bound{};
  socklen_t len = sizeof bound;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
}

UdpSyncServer::~UdpSyncServer() {
  stop();
  if (fd_ >= 0) ::close(fd_);
}

void UdpSyncServer::start() {
  if (running_.exchange(true)) return;
  worker_ = std::thread([this] { loop(); });
}

void UdpSyncServer::stop() {
  running_ = false;
  if (worker_.joinable()) worker_.join();
}

void UdpSyncServer::loop() {
  std::uint8_t buf[512];
  while (running_) {
    if (!wait_readable(fd_, 100)) continue;
    sockaddr_in peer{};
    socklen_t len = sizeof peer;
    const ssize_t n = ::recvfrom(fd_, buf, sizeof buf, 0, reinterpret_cast<sockaddr*>(&peer), &len);
    if (n <= 0) continue;
    const auto reply = srv_.handle_datagram(ByteView(buf, static_cast<std::size_t>(n)), clock_());
    if (reply) {
      ::sendto(fd_, reply->data(), reply->size(), 0, reinterpret_cast<const sockaddr*>(&peer), len);
    }
  }
}

UdpSyncTransport::UdpSyncTransport(const Endpoint& server, std::chrono::milliseconds timeout)
    : timeout_(timeout) {
  fd_ = udp_socket();
  const sockaddr_in addr = resolve_ipv4(server);
  if (::connect(fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0) {
    const std::string err = std::strerror(errno);
    ::close(fd_);
    throw Error("connect " + server.str() + ": " + err);
  }
}

UdpSyncTransport::~UdpSyncTransport() {
  if (fd_ >= 0) ::close(fd_);
}

std::optional<sync::SyncResp> UdpSyncTransport::request(const sync::SyncReq& req) {
  const Bytes out = sync::encode(req);
  if (::send(fd_, out.data(), out.size(), 0) < 0) return std::nullopt;
  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  std::uint8_t buf[512];
  for (;;) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0 || !wait_readable(fd_, static_cast<int>(left.count()))) return std::nullopt;
    const ssize_t n = ::recv(fd_, buf, sizeof buf, 0);
    if (n <= 0) continue;
    auto msg = sync::decode(ByteView(buf, static_cast<std::size_t>(n)));
    if (!msg) continue;
    if (auto* resp = std::get_if<sync::SyncResp>(&*msg); resp && resp->n_dev1 == req.n_dev1) return *resp;
  }
}

void UdpSyncTransport::acknowledge(const sync::SyncAck& ack) {
  const Bytes out = sync::encode(ack);
  ::send(fd_, out.data(), out.size(), 0);
}

struct HttpManifestServer::Impl {
  httplib::Server http;
};

HttpManifestServer::HttpManifestServer(const server::ManufacturerServer& srv, const Endpoint& bind)
    : impl_(std::make_unique<Impl>()) {
  auto& http = impl_->http;
  http.Get(R"(/r/(.+))", [&srv](const httplib::Request& req, httplib::Response& res) {
    const std::string key = req.matches[1];
    std::optional<std::string> target;
    if (key.size() == layout::kShortUrl && wire::ShortUrl::is_valid(as_bytes(key))) {
      target = srv.resolve(wire::ShortUrl(key));
    }
    if (!target) {
      res.status = 404;
      return;
    }
    res.set_redirect(*target, 302);
  });
  http.Get(R"(/manifests/[0-9a-f]+\.json)", [&srv](const httplib::Request& req, httplib::Response& res) {
    if (auto doc = srv.serve_manifest(req.path)) {
      res.set_content(*doc, "application/json");
    } else {
      res.status = 404;
    }
  });
  const int port = bind.port == 0 ? http.bind_to_any_port(bind.host) : (http.bind_to_port(bind.host, bind.port) ? bind.port : -1);
  if (port <= 0) throw Error("cannot listen on " + bind.str());
  port_ = static_cast<std::uint16_t>(port);
}

HttpManifestServer::~HttpManifestServer() { stop(); }

void HttpManifestServer::start() {
  if (worker_.joinable()) return;
  worker_ = std::thread([this] { impl_->http.listen_after_bind(); });
  impl_->http.wait_until_ready();
}

void HttpManifestServer::stop() {
  impl_->http.stop();
  if (worker_.joinable()) worker_.join();
}

HttpFetcher::HttpFetcher(std::string resolver, std::chrono::milliseconds timeout)
    : resolver_(std::move(resolver)), timeout_(timeout) {}

namespace {

// Splits "scheme://host[:port]/path" into origin and path.
std::optional<std::pair<std::string, std::string>> split_url(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) return std::nullopt;
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return std::make_pair(url, std::string("/"));
  return std::make_pair(url.substr(0, slash), url.substr(slash));
}

}  // namespace

std::optional<std::string> HttpFetcher::resolve(const wire::ShortUrl& key) {
  httplib::Client cli(resolver_);
  cli.set_connection_timeout(timeout_);
  cli.set_read_timeout(timeout_);
  cli.set_follow_location(false);
  auto res = cli.Get("/r/" + key.str());
  if (!res || res->status != 302 || !res->has_header("Location")) return std::nullopt;
  return res->get_header_value("Location");
}

std::optional<std::string> HttpFetcher::fetch(const std::string& full_url) {
  auto parts = split_url(full_url);
  if (!parts || !parts->first.starts_with("http://")) return std::nullopt;
  httplib::Client cli(parts->first);
  cli.set_connection_timeout(timeout_);
  cli.set_read_timeout(timeout_);
  auto res = cli.Get(parts->second);
  if (!res || res->status != 200) return std::nullopt;
  return res->body;
}

}  // namespace paisa::net
