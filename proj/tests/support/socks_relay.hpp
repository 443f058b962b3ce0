#pragma once

#include <atomic>
#include <cstdint>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace testsupport {

// Minimal SOCKS5 server (no auth, CONNECT only). Every destination is
// relayed to 127.0.0.1:target_port; the destination the client asked for is
// recorded so tests can tell remote from local name resolution.
class SocksRelay {
 public:
  struct Connect {
    int atyp = 0;  // 1 = IPv4, 3 = domain name, 4 = IPv6
    std::string host;
    int port = 0;
  };

  explicit SocksRelay(int target_port);
  ~SocksRelay();
  SocksRelay(const SocksRelay&) = delete;
  SocksRelay& operator=(const SocksRelay&) = delete;

  int port() const { return port_; }
  std::vector<Connect> connects() const;

 private:
  void accept_loop();
  void serve(int client);

  int target_port_;
  int listen_fd_ = -1;
  int port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread acceptor_;
  mutable std::mutex mu_;
  std::vector<Connect> connects_;
  std::vector<std::thread> sessions_;
};

}  // namespace testsupport
