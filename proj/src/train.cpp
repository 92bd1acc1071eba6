#include "viewfield/train.hpp"

#include "viewfield/error.hpp"
#include "viewfield/random.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

namespace viewfield {

void TrainConfig::validate() const {
  if (epochs < 1) throw UserError("train: epochs must be >= 1");
  if (batch_size < 1) throw UserError("train: batch size must be >= 1");
  if (!(learning_rate > 0)) throw UserError("train: learning rate must be > 0");
  if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1)) throw UserError("train: moment decay must lie in [0, 1)");
  if (!(epsilon > 0)) throw UserError("train: epsilon must be > 0");
}

nlohmann::json to_json(const TrainReport& r) {
  const auto& c = r.config;
  return {{"epoch_loss", r.epoch_loss},
          {"final_train_loss", r.epoch_loss.empty() ? 0.0 : r.epoch_loss.back()},
          {"test_rmse", r.test_rmse ? nlohmann::json(*r.test_rmse) : nlohmann::json(nullptr)},
          {"wall_seconds", r.wall_seconds},
          {"train_samples", r.train_samples},
          {"test_samples", r.test_samples},
          {"config",
           {{"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"epsilon", c.epsilon},
            {"seed", c.seed},
            {"shuffle", c.shuffle}}}};
}

namespace {

void check_targets(std::span<const ViewSample> data, int k) {
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (static_cast<int>(data[i].m_gt.size()) != k) {
      throw UserError("sample " + std::to_string(i) + ": expected " + std::to_string(k) + " components");
    }
    if (!data[i].m_gt.on_simplex()) throw UserError("sample " + std::to_string(i) + ": target is not on the simplex");
  }
}

class Adam {
 public:
  Adam(const Network<float>& shape, const TrainConfig& c) : c_(c), m_(shape.k()), v_(shape.k()) {}

  void step(Network<float>& net, const Network<float>& g) {
    ++t_;
    const float b1 = static_cast<float>(c_.beta1), b2 = static_cast<float>(c_.beta2);
    const float lr_t = static_cast<float>(c_.learning_rate * std::sqrt(1 - std::pow(c_.beta2, t_)) /
                                          (1 - std::pow(c_.beta1, t_)));
    const float eps_t = static_cast<float>(c_.epsilon * std::sqrt(1 - std::pow(c_.beta2, t_)));
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
      update(net.layers[i].W.array(), g.layers[i].W.array(), m_.layers[i].W.array(), v_.layers[i].W.array(), b1, b2,
             lr_t, eps_t);
      update(net.layers[i].b.array(), g.layers[i].b.array(), m_.layers[i].b.array(), v_.layers[i].b.array(), b1, b2,
             lr_t, eps_t);
    }
  }

 private:
  template <typename P, typename G>
  static void update(P p, const G& g, P m, P v, float b1, float b2, float lr_t, float eps_t) {
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g.square();
    p -= lr_t * m / (v.sqrt() + eps_t);
  }

  TrainConfig c_;
  Network<float> m_, v_;
  int t_ = 0;
};

}  // namespace

TrainResult train(std::span<const ViewSample> data, const TrainConfig& config, ModelParams initial,
                  std::span<const ViewSample> test, const EpochCallback& on_epoch) {
  config.validate();
  if (data.empty()) throw UserError("train: empty dataset");
  const int k = initial.k();
  check_targets(data, k);
  const auto start = std::chrono::steady_clock::now();

  const auto n = static_cast<Eigen::Index>(data.size());
  std::vector<Viewpoint> views(data.size());
  Eigen::MatrixXf targets(k, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    views[i] = data[i].viewpoint;
    for (int c = 0; c < k; ++c) targets(c, i) = static_cast<float>(data[i].m_gt[c]);
  }
  ForwardTrace<float> all;
  encode_batch<float>(initial.meta.normalizer, views, all);

  ModelParams model = std::move(initial);
  Adam adam(model.net, config);
  Network<float> grads(k);
  ForwardTrace<float> trace;
  Eigen::MatrixXf batch_targets;
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Rng rng(config.seed);

  TrainReport report;
  report.config = config;
  report.train_samples = data.size();
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (config.shuffle) rng.shuffle(std::span(order));
    double loss_sum = 0;
    for (Eigen::Index b0 = 0, batch = 0; b0 < n; b0 += config.batch_size, ++batch) {
      const Eigen::Index len = std::min<Eigen::Index>(config.batch_size, n - b0);
      const std::span<const Eigen::Index> idx(order.data() + b0, len);
      trace.pos = all.pos(Eigen::all, idx);
      trace.dir = all.dir(Eigen::all, idx);
      batch_targets = targets(Eigen::all, idx);
      const float loss = loss_and_gradients(model.net, trace, batch_targets, grads);
      if (!std::isfinite(loss)) {
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch));
      }
      adam.step(model.net, grads);
      loss_sum += static_cast<double>(loss) * len;
    }
    report.epoch_loss.push_back(loss_sum / static_cast<double>(n));
    if (on_epoch) on_epoch(epoch, report.epoch_loss.back());
  }
  if (!test.empty()) {
    report.test_rmse = evaluate_rmse(model, test);
    report.test_samples = test.size();
  }
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {std::move(model), std::move(report)};
}

double rmse(std::span<const ViewSample> data, const std::vector<ThematicDistribution>& predictions) {
  if (data.empty()) throw UserError("rmse: empty dataset");
  if (predictions.size() != data.size()) throw UserError("rmse: prediction count mismatch");
  double sum = 0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (predictions[i].size() != data[i].m_gt.size()) throw UserError("rmse: component count mismatch");
    for (std::size_t c = 0; c < data[i].m_gt.size(); ++c) {
      const double d = predictions[i][c] - data[i].m_gt[c];
      sum += d * d;
    }
    count += data[i].m_gt.size();
  }
  return std::sqrt(sum / static_cast<double>(count));
}

double evaluate_rmse(const ModelParams& model, std::span<const ViewSample> data) {
  if (data.empty()) throw UserError("rmse: empty dataset");
  std::vector<Viewpoint> views;
  views.reserve(data.size());
  for (const auto& s : data) views.push_back(s.viewpoint);
  return rmse(data, to_distributions(predict(model, views).output));
}

}  // namespace viewfield
