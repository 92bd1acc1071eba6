#pragma once

#include "viewfield/dataset.hpp"
#include "viewfield/net.hpp"

#include "json.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace viewfield {

struct TrainConfig {
  int epochs = 100;
  int batch_size = 1024;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  bool shuffle = true;

  void validate() const;
};

struct TrainReport {
  std::vector<double> epoch_loss;
  std::optional<double> test_rmse;
  double wall_seconds = 0;
  std::size_t train_samples = 0;
  std::size_t test_samples = 0;
  TrainConfig config;
};

nlohmann::json to_json(const TrainReport& report);

/// Called after every epoch with (epoch index, mean loss).
using EpochCallback = std::function<void(int, double)>;

struct TrainResult {
  ModelParams model;
  TrainReport report;
};

/// Adam on the mean squared error. The model's metadata (normalizer, class
/// names, bins) is kept; only weights change. When `test` is non-empty the
/// report carries its final RMSE.
TrainResult train(std::span<const ViewSample> data, const TrainConfig& config, ModelParams initial,
                  std::span<const ViewSample> test = {}, const EpochCallback& on_epoch = {});

/// sqrt(mean over samples and components of the squared error).
double evaluate_rmse(const ModelParams& model, std::span<const ViewSample> data);

/// Same, for any predictor producing one distribution per sample.
double rmse(std::span<const ViewSample> data, const std::vector<ThematicDistribution>& predictions);

}  // namespace viewfield
