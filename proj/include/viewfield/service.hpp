#pragma once

#include "viewfield/dataset.hpp"
#include "viewfield/net.hpp"
#include "viewfield/scene.hpp"

#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace viewfield {

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 8080;
  int workers = 0;  ///< 0: resolve_threads()
  double timeout_seconds = 30.0;
  std::string cors_origin = "*";
  double test_fraction = 0.2;  ///< latent map points come from this split
  std::uint64_t split_seed = 0;
  std::size_t max_latent_points = 5000;
  /// Named perception metrics, (name, expression).
  std::vector<std::pair<std::string, std::string>> metrics;
};

/// HTTP/JSON API over a loaded scene, model and ground-truth dataset.
/// Endpoints answer 503 until load() has succeeded.
class Service {
 public:
  explicit Service(ServiceOptions options);
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Validates that scene, model and dataset agree, then swaps them in.
  void load(Scene scene, ModelParams model, std::vector<ViewSample> dataset);

  /// Binds to options.port (0 picks a free port) and returns the bound port.
  int bind();
  /// Serves until stop(); call after bind().
  void run();
  void stop();
  /// Blocks until the server accepts connections.
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace viewfield
