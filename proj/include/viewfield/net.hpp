#pragma once

#include "viewfield/field.hpp"
#include "viewfield/raster.hpp"

#include "json.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace viewfield {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Normalized viewpoints, one per column: (x, y, z, alpha, gamma) in [-1, 1].
using InputBatch = Eigen::Matrix<double, 5, Eigen::Dynamic>;

template <typename Scalar>
struct Layer {
  Mat<Scalar> W;  ///< out x in
  Vec<Scalar> b;

  bool operator==(const Layer& o) const { return W == o.W && b == o.b; }
};

/// Activations kept for backpropagation. Samples are columns.
template <typename Scalar>
struct ForwardTrace {
  Mat<Scalar> pos;                 ///< 60 x B
  Mat<Scalar> dir;                 ///< 40 x B
  std::vector<Mat<Scalar>> trunk;  ///< 10 post-ReLU activations, 256 x B
  Mat<Scalar> latent;              ///< 128 x B, tanh
  Mat<Scalar> output;              ///< k x B, on the simplex
};

template <typename Scalar>
struct InputGradients {
  Mat<Scalar> pos;
  Mat<Scalar> dir;
};

/// The field network: a 10-layer ReLU trunk over position features with the
/// trunk input re-injected before layer 6, then a tanh layer over trunk
/// output plus direction features and a softmax over k logits.
template <typename Scalar>
class Network {
 public:
  static constexpr int kTrunkDepth = 10;
  static constexpr int kTrunkWidth = 256;
  static constexpr int kSkipLayer = 5;
  static constexpr int kHeadWidth = 128;
  static constexpr int kHeadLayer = kTrunkDepth;
  static constexpr int kOutputLayer = kTrunkDepth + 1;
  static constexpr int kLayerCount = kTrunkDepth + 2;

  Network() = default;
  /// All weights and biases zero.
  explicit Network(int k);

  /// Uniform fan-based initialization, zero biases.
  static Network init(std::uint64_t seed, int k);

  int k() const { return layers.empty() ? 0 : static_cast<int>(layers.back().b.size()); }
  std::size_t parameter_count() const;

  /// Flat view over all parameters, layer by layer, row-major weights then bias.
  Scalar& param(std::size_t index);
  Scalar param(std::size_t index) const;

  void set_zero();

  template <typename To>
  Network<To> cast() const {
    Network<To> out;
    for (const auto& l : layers) out.layers.push_back({l.W.template cast<To>(), l.b.template cast<To>()});
    return out;
  }

  /// Fills trace.trunk/latent/output from trace.pos and trace.dir.
  void forward(ForwardTrace<Scalar>& trace) const;

  /// Backpropagates d(loss)/d(output). Parameter gradients are accumulated
  /// into `grads` and input gradients written to `inputs`; either may be null.
  void backward(const ForwardTrace<Scalar>& trace, const Mat<Scalar>& d_output, Network* grads,
                InputGradients<Scalar>* inputs) const;

  std::vector<Layer<Scalar>> layers;

  bool operator==(const Network&) const = default;
};

extern template class Network<float>;
extern template class Network<double>;

/// Writes features for raw viewpoints into trace.pos/trace.dir. Throws
/// UserError naming the first non-finite sample.
template <typename Scalar>
void encode_batch(const Normalizer& normalizer, std::span<const Viewpoint> viewpoints, ForwardTrace<Scalar>& trace);

template <typename Scalar>
void encode_batch(const InputBatch& u, ForwardTrace<Scalar>& trace);

/// Chains feature gradients through the encoding: d(loss)/du, 5 x B.
template <typename Scalar>
InputBatch encoding_backward(const InputBatch& u, const InputGradients<Scalar>& g);

InputBatch normalize_batch(const Normalizer& normalizer, std::span<const Viewpoint> viewpoints);

/// Mean squared error (1/N) sum ||m - t||^2 and its gradient. `grads` is
/// overwritten. Targets are k x B.
template <typename Scalar>
Scalar loss_and_gradients(const Network<Scalar>& net, ForwardTrace<Scalar>& trace, const Mat<Scalar>& targets,
                          Network<Scalar>& grads);

/// Scalar loss over one output m; writes d(loss)/dm.
using OutputLoss = std::function<double(std::span<const double> m, std::span<double> dm)>;

struct InputGradientResult {
  double loss = 0;
  std::vector<double> m;
  std::array<double, 5> gradient{};  ///< w.r.t. raw x, y, z, alpha, gamma
};

template <typename Scalar>
InputGradientResult backward_inputs(const Network<Scalar>& net, const Normalizer& normalizer, const Viewpoint& v,
                                    const OutputLoss& loss);

struct ModelMeta {
  std::vector<std::string> class_names;
  BinSpec bins;
  Normalizer normalizer;
  RenderSettings render;
  nlohmann::json provenance = nlohmann::json::object();

  bool operator==(const ModelMeta&) const = default;
};

struct ModelParams {
  Network<float> net;
  ModelMeta meta;

  int k() const { return net.k(); }
  bool operator==(const ModelParams&) const = default;
};

/// Fresh model with default metadata: generic component names, categorical bins.
ModelParams init_model(std::uint64_t seed, int k);

struct Prediction {
  Eigen::MatrixXf output;  ///< k x B
  Eigen::MatrixXf latent;  ///< 128 x B
};

/// Batched inference, evaluated in fixed-size chunks so memory stays bounded.
Prediction predict(const ModelParams& model, std::span<const Viewpoint> viewpoints, bool want_latent = false);
Prediction predict(const ModelParams& model, const InputBatch& u, bool want_latent = false);

std::vector<ThematicDistribution> to_distributions(const Eigen::MatrixXf& output);

std::vector<std::uint8_t> checkpoint_bytes(const ModelParams& model);
ModelParams checkpoint_from_bytes(std::span<const std::uint8_t> bytes);
void save_checkpoint(const ModelParams& model, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace viewfield
