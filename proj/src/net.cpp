#include "viewfield/net.hpp"

#include "viewfield/error.hpp"
#include "viewfield/parallel.hpp"
#include "viewfield/random.hpp"

#include <cmath>
#include <numbers>

namespace viewfield {

namespace {

struct Shape {
  int out, in;
};

std::vector<Shape> layer_shapes(int k) {
  using N = Network<float>;
  std::vector<Shape> s;
  s.push_back({N::kTrunkWidth, kPositionFeatures});
  for (int i = 1; i < N::kTrunkDepth; ++i) {
    s.push_back({N::kTrunkWidth, N::kTrunkWidth + (i == N::kSkipLayer ? kPositionFeatures : 0)});
  }
  s.push_back({N::kHeadWidth, N::kTrunkWidth + kDirectionFeatures});
  s.push_back({k, N::kHeadWidth});
  return s;
}

template <typename Scalar>
void softmax_columns(Mat<Scalar>& z) {
  for (Eigen::Index c = 0; c < z.cols(); ++c) {
    auto col = z.col(c);
    col.array() -= col.maxCoeff();
    col = col.array().exp().matrix();
    col /= col.sum();
  }
}

}  // namespace

template <typename Scalar>
Network<Scalar>::Network(int k) {
  if (k < 2) throw UserError("network: need at least 2 output components");
  for (const auto& s : layer_shapes(k)) layers.push_back({Mat<Scalar>::Zero(s.out, s.in), Vec<Scalar>::Zero(s.out)});
}

template <typename Scalar>
Network<Scalar> Network<Scalar>::init(std::uint64_t seed, int k) {
  Network net(k);
  Rng rng(seed);
  for (auto& l : net.layers) {
    const double limit = std::sqrt(6.0 / static_cast<double>(l.W.rows() + l.W.cols()));
    for (Eigen::Index r = 0; r < l.W.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.W.cols(); ++c) l.W(r, c) = static_cast<Scalar>(rng.uniform(-limit, limit));
    }
  }
  return net;
}

template <typename Scalar>
std::size_t Network<Scalar>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.W.size() + l.b.size();
  return n;
}

template <typename Scalar>
Scalar& Network<Scalar>::param(std::size_t index) {
  for (auto& l : layers) {
    const auto w = static_cast<std::size_t>(l.W.size());
    if (index < w) return l.W(index / l.W.cols(), index % l.W.cols());
    index -= w;
    if (index < static_cast<std::size_t>(l.b.size())) return l.b(index);
    index -= l.b.size();
  }
  throw UserError("network: parameter index out of range");
}

template <typename Scalar>
Scalar Network<Scalar>::param(std::size_t index) const {
  return const_cast<Network*>(this)->param(index);
}

template <typename Scalar>
void Network<Scalar>::set_zero() {
  for (auto& l : layers) {
    l.W.setZero();
    l.b.setZero();
  }
}

template <typename Scalar>
void Network<Scalar>::forward(ForwardTrace<Scalar>& t) const {
  const Eigen::Index batch = t.pos.cols();
  if (batch == 0) throw UserError("network: empty batch");
  t.trunk.resize(kTrunkDepth);
  for (int i = 0; i < kTrunkDepth; ++i) {
    const auto& l = layers[i];
    auto& h = t.trunk[i];
    h.resize(kTrunkWidth, batch);
    if (i == 0) {
      h.noalias() = l.W * t.pos;
    } else if (i == kSkipLayer) {
      h.noalias() = l.W.leftCols(kTrunkWidth) * t.trunk[i - 1];
      h.noalias() += l.W.rightCols(kPositionFeatures) * t.pos;
    } else {
      h.noalias() = l.W * t.trunk[i - 1];
    }
    h.colwise() += l.b;
    h = h.cwiseMax(Scalar(0));
  }
  const auto& head = layers[kHeadLayer];
  t.latent.resize(kHeadWidth, batch);
  t.latent.noalias() = head.W.leftCols(kTrunkWidth) * t.trunk.back();
  t.latent.noalias() += head.W.rightCols(kDirectionFeatures) * t.dir;
  t.latent.colwise() += head.b;
  t.latent = t.latent.array().tanh().matrix();

  const auto& out = layers[kOutputLayer];
  t.output.resize(out.W.rows(), batch);
  t.output.noalias() = out.W * t.latent;
  t.output.colwise() += out.b;
  softmax_columns(t.output);
}

template <typename Scalar>
void Network<Scalar>::backward(const ForwardTrace<Scalar>& t, const Mat<Scalar>& d_output, Network* grads,
                               InputGradients<Scalar>* inputs) const {
  const Eigen::Index batch = t.output.cols();
  // Softmax: dz = m * (g - <m, g>).
  Mat<Scalar> dz = t.output.cwiseProduct(d_output);
  const Eigen::Matrix<Scalar, 1, Eigen::Dynamic> dots = dz.colwise().sum();
  dz -= t.output * dots.asDiagonal();

  const auto& out = layers[kOutputLayer];
  if (grads) {
    grads->layers[kOutputLayer].W.noalias() += dz * t.latent.transpose();
    grads->layers[kOutputLayer].b += dz.rowwise().sum();
  }
  Mat<Scalar> da = out.W.transpose() * dz;
  da.array() *= Scalar(1) - t.latent.array().square();

  const auto& head = layers[kHeadLayer];
  if (grads) {
    auto& g = grads->layers[kHeadLayer];
    g.W.leftCols(kTrunkWidth).noalias() += da * t.trunk.back().transpose();
    g.W.rightCols(kDirectionFeatures).noalias() += da * t.dir.transpose();
    g.b += da.rowwise().sum();
  }
  if (inputs) inputs->dir.noalias() = head.W.rightCols(kDirectionFeatures).transpose() * da;
  if (inputs) inputs->pos.setZero(kPositionFeatures, batch);

  Mat<Scalar> dh = head.W.leftCols(kTrunkWidth).transpose() * da;
  Mat<Scalar> dprev;
  for (int i = kTrunkDepth - 1; i >= 0; --i) {
    dh.array() *= (t.trunk[i].array() > Scalar(0)).template cast<Scalar>();
    const auto& l = layers[i];
    const Mat<Scalar>& x = i == 0 ? t.pos : t.trunk[i - 1];
    if (grads) {
      auto& g = grads->layers[i];
      g.b += dh.rowwise().sum();
      if (i == kSkipLayer) {
        g.W.leftCols(kTrunkWidth).noalias() += dh * x.transpose();
        g.W.rightCols(kPositionFeatures).noalias() += dh * t.pos.transpose();
      } else {
        g.W.noalias() += dh * x.transpose();
      }
    }
    if (i == 0) {
      if (inputs) inputs->pos.noalias() += l.W.transpose() * dh;
      break;
    }
    if (i == kSkipLayer) {
      if (inputs) inputs->pos.noalias() += l.W.rightCols(kPositionFeatures).transpose() * dh;
      dprev.noalias() = l.W.leftCols(kTrunkWidth).transpose() * dh;
    } else {
      dprev.noalias() = l.W.transpose() * dh;
    }
    dh.swap(dprev);
  }
}

template class Network<float>;
template class Network<double>;

InputBatch normalize_batch(const Normalizer& normalizer, std::span<const Viewpoint> viewpoints) {
  InputBatch u(5, static_cast<Eigen::Index>(viewpoints.size()));
  for (std::size_t i = 0; i < viewpoints.size(); ++i) {
    const auto& v = viewpoints[i];
    if (!std::isfinite(v.x) || !std::isfinite(v.y) || !std::isfinite(v.z) || !std::isfinite(v.alpha) ||
        !std::isfinite(v.gamma)) {
      throw UserError("viewpoint " + std::to_string(i) + ": non-finite coordinate");
    }
    const auto n = normalizer.normalize(v);
    for (int c = 0; c < 5; ++c) u(c, static_cast<Eigen::Index>(i)) = n[c];
  }
  return u;
}

template <typename Scalar>
void encode_batch(const InputBatch& u, ForwardTrace<Scalar>& trace) {
  const Eigen::Index n = u.cols();
  trace.pos.resize(kPositionFeatures, n);
  trace.dir.resize(kDirectionFeatures, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    std::array<double, 5> col{u(0, i), u(1, i), u(2, i), u(3, i), u(4, i)};
    encode_normalized<Scalar>(col, std::span<Scalar, kPositionFeatures>(trace.pos.col(i).data(), kPositionFeatures),
                              std::span<Scalar, kDirectionFeatures>(trace.dir.col(i).data(), kDirectionFeatures));
  }
}

template <typename Scalar>
void encode_batch(const Normalizer& normalizer, std::span<const Viewpoint> viewpoints, ForwardTrace<Scalar>& trace) {
  encode_batch(normalize_batch(normalizer, viewpoints), trace);
}

template <typename Scalar>
InputBatch encoding_backward(const InputBatch& u, const InputGradients<Scalar>& g) {
  InputBatch du(5, u.cols());
  for (Eigen::Index i = 0; i < u.cols(); ++i) {
    for (int c = 0; c < 5; ++c) {
      const auto d = encode_derivative(u(c, i));
      const Scalar* src = c < 3 ? g.pos.col(i).data() + c * kEncodingWidth : g.dir.col(i).data() + (c - 3) * kEncodingWidth;
      double s = 0;
      for (int j = 0; j < kEncodingWidth; ++j) s += static_cast<double>(src[j]) * d[j];
      du(c, i) = s;
    }
  }
  return du;
}

template <typename Scalar>
Scalar loss_and_gradients(const Network<Scalar>& net, ForwardTrace<Scalar>& trace, const Mat<Scalar>& targets,
                          Network<Scalar>& grads) {
  net.forward(trace);
  if (targets.rows() != trace.output.rows() || targets.cols() != trace.output.cols()) {
    throw UserError("loss: targets do not match the batch shape");
  }
  if (grads.layers.size() != net.layers.size()) grads = Network<Scalar>(net.k());
  grads.set_zero();
  const Scalar n = static_cast<Scalar>(targets.cols());
  const Mat<Scalar> diff = trace.output - targets;
  const Scalar loss = diff.squaredNorm() / n;
  net.backward(trace, (Scalar(2) / n) * diff, &grads, nullptr);
  return loss;
}

template <typename Scalar>
InputGradientResult backward_inputs(const Network<Scalar>& net, const Normalizer& normalizer, const Viewpoint& v,
                                    const OutputLoss& loss) {
  ForwardTrace<Scalar> trace;
  const InputBatch u = normalize_batch(normalizer, std::span(&v, 1));
  encode_batch(u, trace);
  net.forward(trace);
  InputGradientResult r;
  r.m.assign(trace.output.data(), trace.output.data() + trace.output.size());
  std::vector<double> dm(r.m.size());
  r.loss = loss(r.m, dm);
  Mat<Scalar> d_output(dm.size(), 1);
  for (std::size_t i = 0; i < dm.size(); ++i) d_output(i, 0) = static_cast<Scalar>(dm[i]);
  InputGradients<Scalar> g;
  net.backward(trace, d_output, nullptr, &g);
  const InputBatch du = encoding_backward(u, g);
  const auto scale = normalizer.scale();
  for (int c = 0; c < 5; ++c) r.gradient[c] = du(c, 0) * scale[c];
  return r;
}

template void encode_batch<float>(const InputBatch&, ForwardTrace<float>&);
template void encode_batch<double>(const InputBatch&, ForwardTrace<double>&);
template void encode_batch<float>(const Normalizer&, std::span<const Viewpoint>, ForwardTrace<float>&);
template void encode_batch<double>(const Normalizer&, std::span<const Viewpoint>, ForwardTrace<double>&);
template InputBatch encoding_backward<float>(const InputBatch&, const InputGradients<float>&);
template InputBatch encoding_backward<double>(const InputBatch&, const InputGradients<double>&);
template float loss_and_gradients<float>(const Network<float>&, ForwardTrace<float>&, const Mat<float>&,
                                         Network<float>&);
template double loss_and_gradients<double>(const Network<double>&, ForwardTrace<double>&, const Mat<double>&,
                                           Network<double>&);
template InputGradientResult backward_inputs<float>(const Network<float>&, const Normalizer&, const Viewpoint&,
                                                    const OutputLoss&);
template InputGradientResult backward_inputs<double>(const Network<double>&, const Normalizer&, const Viewpoint&,
                                                     const OutputLoss&);

ModelParams init_model(std::uint64_t seed, int k) {
  ModelParams m;
  m.net = Network<float>::init(seed, k);
  m.meta.bins = BinSpec::categorical(k);
  for (int i = 0; i < k; ++i) m.meta.class_names.push_back("m" + std::to_string(i));
  return m;
}

namespace {

constexpr Eigen::Index kPredictChunk = 1024;

}  // namespace

Prediction predict(const ModelParams& model, std::span<const Viewpoint> viewpoints, bool want_latent) {
  const InputBatch u = normalize_batch(model.meta.normalizer, viewpoints);
  return predict(model, u, want_latent);
}

Prediction predict(const ModelParams& model, const InputBatch& u, bool want_latent) {
  const Eigen::Index n = u.cols();
  if (n == 0) throw UserError("predict: empty batch");
  Prediction p;
  p.output.resize(model.k(), n);
  if (want_latent) p.latent.resize(Network<float>::kHeadWidth, n);
  const std::size_t chunks = static_cast<std::size_t>((n + kPredictChunk - 1) / kPredictChunk);
  parallel_for(chunks, chunks > 1 ? resolve_threads() : 1, [&](std::size_t c) {
    const Eigen::Index start = static_cast<Eigen::Index>(c) * kPredictChunk;
    const Eigen::Index len = std::min(kPredictChunk, n - start);
    // The GEMM kernels work on groups of 4 columns; padding every chunk to a
    // multiple of 4 makes each sample's result independent of its batch.
    const Eigen::Index padded = (len + 3) / 4 * 4;
    InputBatch chunk(5, padded);
    chunk.leftCols(len) = u.middleCols(start, len);
    for (Eigen::Index i = len; i < padded; ++i) chunk.col(i) = u.col(start + len - 1);
    // Reused across calls: fresh activation buffers cost more in page faults than the GEMMs.
    thread_local ForwardTrace<float> trace;
    encode_batch<float>(chunk, trace);
    model.net.forward(trace);
    p.output.middleCols(start, len) = trace.output.leftCols(len);
    if (want_latent) p.latent.middleCols(start, len) = trace.latent.leftCols(len);
  });
  return p;
}

std::vector<ThematicDistribution> to_distributions(const Eigen::MatrixXf& output) {
  std::vector<ThematicDistribution> out(output.cols());
  for (Eigen::Index c = 0; c < output.cols(); ++c) {
    out[c].m.assign(output.col(c).data(), output.col(c).data() + output.rows());
  }
  return out;
}

}  // namespace viewfield
