#pragma once

// HTTP + server-sent-events API over live sessions.

#include <memory>
#include <string>

#include "machstate/analytics.hpp"
#include "machstate/session.hpp"

namespace machstate {

struct ServerOptions {
  std::string host = "0.0.0.0";
  int port = 8080;            // 0 picks a free port
  std::string static_dir;     // console assets, optional
  std::string log_dir;        // session logs written here on close, optional
};

class ApiServer {
 public:
  ApiServer(std::shared_ptr<const CompiledModel> model, ServerOptions options);
  ~ApiServer();
  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  /// Binds and starts serving on a background thread. Returns the bound port.
  int start();
  /// Blocks until stop() is called from elsewhere.
  void wait();
  void stop();
  int port() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace machstate
