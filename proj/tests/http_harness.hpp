#pragma once

// A Service behind a real HTTP server on an ephemeral loopback port.

#include <memory>
#include <thread>

#include <httplib.h>

#include "fixtures.hpp"
#include "stan/demo_model.hpp"
#include "stan/http.hpp"

namespace harness {

class LiveServer {
 public:
  LiveServer() {
    stan::ServiceOptions o;
    o.data_dir = dir_.path();
    o.model = std::make_shared<stan::GaussianModel>(stan::demo_model());
    svc_ = std::make_unique<stan::Service>(o);
    stan::mount_routes(server_, *svc_);
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~LiveServer() {
    server_.stop();
    thread_.join();
  }
  LiveServer(const LiveServer&) = delete;
  LiveServer& operator=(const LiveServer&) = delete;

  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(60, 0);
    return c;
  }
  stan::Service& service() { return *svc_; }

 private:
  fixtures::TempDir dir_{"stan-http"};
  std::unique_ptr<stan::Service> svc_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

inline std::string body_of(const stan::Bytes& b) { return {b.begin(), b.end()}; }

}  // namespace harness
