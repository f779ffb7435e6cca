#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <thread>

#include "paisa/device.hpp"
#include "paisa/receiver.hpp"
#include "paisa/server.hpp"

// Live transports: Time Sync over UDP, manifests and short links over HTTP.
namespace paisa::net {

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  /// "host:port" or ":port". Throws Error on anything else.
  static Endpoint parse(std::string_view text);
  [[nodiscard]] std::string str() const { return host + ":" + std::to_string(port); }
};

using Clock = std::function<EpochSeconds()>;
EpochSeconds wall_clock();

/// Answers Time Sync datagrams on a UDP socket.
class UdpSyncServer {
 public:
  UdpSyncServer(server::ManufacturerServer& srv, const Endpoint& bind, Clock clock = wall_clock);
  ~UdpSyncServer();
  UdpSyncServer(const UdpSyncServer&) = delete;
  UdpSyncServer& operator=(const UdpSyncServer&) = delete;

  [[nodiscard]] std::uint16_t port() const { return port_; }
  void start();
  void stop();

 private:
  void loop();

  server::ManufacturerServer& srv_;
  Clock clock_;
  int fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> running_{false};
  std::thread worker_;
};

/// Device side of Time Sync over UDP. request() waits up to `timeout`.
class UdpSyncTransport final : public device::SyncTransport {
 public:
  UdpSyncTransport(const Endpoint& server, std::chrono::milliseconds timeout);
  ~UdpSyncTransport() override;
  UdpSyncTransport(const UdpSyncTransport&) = delete;
  UdpSyncTransport& operator=(const UdpSyncTransport&) = delete;

  std::optional<sync::SyncResp> request(const sync::SyncReq& req) override;
  void acknowledge(const sync::SyncAck& ack) override;

 private:
  int fd_ = -1;
  std::chrono::milliseconds timeout_;
};

/// GET /r/<short url>   -> 302 to the full manifest URL
/// GET /manifests/<id>.json -> manifest document
class HttpManifestServer {
 public:
  HttpManifestServer(const server::ManufacturerServer& srv, const Endpoint& bind);
  ~HttpManifestServer();
  HttpManifestServer(const HttpManifestServer&) = delete;
  HttpManifestServer& operator=(const HttpManifestServer&) = delete;

  [[nodiscard]] std::uint16_t port() const { return port_; }
  void start();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::uint16_t port_ = 0;
  std::thread worker_;
};

/// Resolves short URLs against `resolver` ("http://host:port") and follows
/// the resulting manifest URLs.
class HttpFetcher final : public receiver::ManifestFetcher {
 public:
  explicit HttpFetcher(std::string resolver, std::chrono::milliseconds timeout = std::chrono::seconds(5));

 protected:
  std::optional<std::string> resolve(const wire::ShortUrl& key) override;
  std::optional<std::string> fetch(const std::string& full_url) override;

 private:
  std::string resolver_;
  std::chrono::milliseconds timeout_;
};

}  // namespace paisa::net
