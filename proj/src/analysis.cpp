#include "viewfield/analysis.hpp"

#include "viewfield/error.hpp"
#include "viewfield/parallel.hpp"
#include "viewfield/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <queue>

namespace viewfield {

Eigen::MatrixXd latent_codes(const ModelParams& model, std::span<const Viewpoint> viewpoints) {
  return predict(model, viewpoints, true).latent.cast<double>();
}

Projection Projection::parse(const std::string& text) {
  Projection p;
  if (text == "pca" || text.empty()) return p;
  int a = 0, b = 0;
  char tail = 0;
  if (std::sscanf(text.c_str(), "axes:%d,%d%c", &a, &b, &tail) == 2 && a >= 0 && b >= 0) {
    p.kind = Kind::axis_pair;
    p.first = a;
    p.second = b;
    return p;
  }
  throw UserError("projection must be 'pca' or 'axes:i,j', got '" + text + "'");
}

Pca principal_components(const Eigen::MatrixXd& x, int components, double tol, int max_iterations) {
  const Eigen::Index d = x.rows(), n = x.cols();
  if (n < 2) throw UserError("pca: need at least 2 points");
  if (components < 1 || components > d) throw UserError("pca: bad component count");
  Pca out;
  out.mean = x.rowwise().mean();
  const Eigen::MatrixXd centered = x.colwise() - out.mean;
  Eigen::MatrixXd cov = centered * centered.transpose() / static_cast<double>(n - 1);
  out.axes.resize(d, components);
  out.variances.resize(components);

  auto orthogonalize = [&](Eigen::VectorXd& v, int count) {
    for (int j = 0; j < count; ++j) v -= out.axes.col(j).dot(v) * out.axes.col(j);
  };
  Rng rng(0x9e3779b97f4a7c15ULL);
  for (int c = 0; c < components; ++c) {
    Eigen::VectorXd v(d);
    for (Eigen::Index i = 0; i < d; ++i) v(i) = rng.uniform(-1, 1);
    orthogonalize(v, c);
    v.normalize();
    double lambda = 0;
    for (int it = 0; it < max_iterations; ++it) {
      Eigen::VectorXd w = cov * v;
      orthogonalize(w, c);
      const double norm = w.norm();
      if (norm < 1e-300) {
        lambda = 0;
        break;
      }
      w /= norm;
      const double change = (w - v).norm();
      v = w;
      lambda = norm;
      if (change < tol) break;
    }
    if (lambda <= 0) {
      // Zero variance left: any unit vector orthogonal to the previous axes.
      for (Eigen::Index i = 0; i < d; ++i) {
        v = Eigen::VectorXd::Unit(d, i);
        orthogonalize(v, c);
        if (v.norm() > 1e-6) break;
      }
      v.normalize();
    }
    Eigen::Index big = 0;
    v.cwiseAbs().maxCoeff(&big);
    if (v(big) < 0) v = -v;
    out.axes.col(c) = v;
    out.variances(c) = lambda;
    cov -= lambda * v * v.transpose();
  }
  return out;
}

Eigen::MatrixXd project_2d(const Eigen::MatrixXd& latents, const Projection& projection) {
  if (projection.kind == Projection::Kind::axis_pair) {
    if (projection.first >= latents.rows() || projection.second >= latents.rows()) {
      throw UserError("projection: axis index out of range");
    }
    Eigen::MatrixXd out(2, latents.cols());
    out.row(0) = latents.row(projection.first);
    out.row(1) = latents.row(projection.second);
    return out;
  }
  const Pca pca = principal_components(latents, 2);
  return pca.axes.transpose() * (latents.colwise() - pca.mean);
}

namespace {

using Point5 = std::array<double, 5>;

std::vector<Point5> normalized_points(std::span<const ViewSample> data, const Normalizer& normalizer) {
  std::vector<Point5> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) out[i] = normalizer.normalize(data[i].viewpoint);
  return out;
}

ThematicDistribution knn_from_points(std::span<const ViewSample> train, const std::vector<Point5>& pts,
                                     const Point5& q, int k) {
  // Max-heap of (distance, index) keeps the k best; pair ordering breaks ties by index.
  std::priority_queue<std::pair<double, std::size_t>> heap;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    double d2 = 0;
    for (int c = 0; c < 5; ++c) {
      const double d = pts[i][c] - q[c];
      d2 += d * d;
    }
    if (static_cast<int>(heap.size()) < k) {
      heap.emplace(d2, i);
    } else if (std::make_pair(d2, i) < heap.top()) {
      heap.pop();
      heap.emplace(d2, i);
    }
  }
  std::vector<std::size_t> chosen;
  while (!heap.empty()) {
    chosen.push_back(heap.top().second);
    heap.pop();
  }
  std::sort(chosen.begin(), chosen.end());
  ThematicDistribution m;
  m.m.assign(train[0].m_gt.size(), 0.0);
  for (auto i : chosen) {
    for (std::size_t c = 0; c < m.m.size(); ++c) m.m[c] += train[i].m_gt[c];
  }
  for (auto& v : m.m) v /= static_cast<double>(chosen.size());
  return m;
}

void check_knn(std::span<const ViewSample> train, int k) {
  if (train.empty()) throw UserError("knn: empty training set");
  if (k < 1 || static_cast<std::size_t>(k) > train.size()) throw UserError("knn: need 1 <= k <= training size");
}

std::string percent_label(double f) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g%%", 100 * f);
  return buf;
}

}  // namespace

ThematicDistribution knn_predict(std::span<const ViewSample> train, const Normalizer& normalizer,
                                 const Viewpoint& query, int k) {
  check_knn(train, k);
  return knn_from_points(train, normalized_points(train, normalizer), normalizer.normalize(query), k);
}

std::vector<ThematicDistribution> knn_predict(std::span<const ViewSample> train, const Normalizer& normalizer,
                                              std::span<const Viewpoint> queries, int k, int threads) {
  check_knn(train, k);
  const auto pts = normalized_points(train, normalizer);
  std::vector<ThematicDistribution> out(queries.size());
  parallel_for(queries.size(), resolve_threads(threads), [&](std::size_t i) {
    out[i] = knn_from_points(train, pts, normalizer.normalize(queries[i]), k);
  });
  return out;
}

nlohmann::json to_json(const Comparison& c) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t m = 0; m < c.models.size(); ++m) rows.push_back({{"model", c.models[m]}, {"rmse", c.rmse[m]}});
  return {{"fractions", c.fractions}, {"train_sizes", c.train_sizes}, {"rows", rows}};
}

std::string to_table(const Comparison& c) {
  std::size_t width = 5;
  for (const auto& m : c.models) width = std::max(width, m.size());
  std::string out;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-*s", static_cast<int>(width), "Model");
  out += buf;
  for (std::size_t f = 0; f < c.fractions.size(); ++f) {
    const std::string label = percent_label(c.fractions[f]) + " (" + std::to_string(c.train_sizes[f]) + ")";
    std::snprintf(buf, sizeof buf, "  %14s", label.c_str());
    out += buf;
  }
  out += '\n';
  for (std::size_t m = 0; m < c.models.size(); ++m) {
    std::snprintf(buf, sizeof buf, "%-*s", static_cast<int>(width), c.models[m].c_str());
    out += buf;
    for (double v : c.rmse[m]) {
      std::snprintf(buf, sizeof buf, "  %14.3f", v);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

Comparison compare_models(std::span<const ViewSample> train, std::span<const ViewSample> test,
                          const std::vector<double>& fractions, const std::vector<int>& knn_ks,
                          const TrainConfig& config, const ModelParams& base, std::uint64_t init_seed,
                          std::uint64_t subset_seed, int threads) {
  if (fractions.empty()) throw UserError("compare: no training fractions");
  if (test.empty()) throw UserError("compare: empty test set");
  Comparison c;
  c.fractions = fractions;
  for (int k : knn_ks) c.models.push_back(std::to_string(k) + "-Neighbors");
  c.models.push_back("Ours");
  c.rmse.assign(c.models.size(), {});
  std::vector<Viewpoint> queries;
  for (const auto& s : test) queries.push_back(s.viewpoint);

  for (double f : fractions) {
    const auto part = subset(train, f, subset_seed);
    c.train_sizes.push_back(part.size());
    for (std::size_t j = 0; j < knn_ks.size(); ++j) {
      c.rmse[j].push_back(rmse(test, knn_predict(part, base.meta.normalizer, queries, knn_ks[j], threads)));
    }
    ModelParams init = base;
    init.net = Network<float>::init(init_seed, base.k());
    const auto result = viewfield::train(part, config, std::move(init));
    c.rmse.back().push_back(evaluate_rmse(result.model, test));
  }
  return c;
}

namespace {

constexpr double kFreeSearchStep = 1.0;

bool blocked(const Scene& scene, const Vec3& p) {
  return std::any_of(scene.buildings.begin(), scene.buildings.end(),
                     [&](const Building& b) { return b.contains(p, 0.3); });
}

}  // namespace

RegionErrorReport region_error(const Scene& scene, const Predictor& predictor, const BinSpec& bins,
                               const RenderSettings& settings, double region_side, double threshold,
                               int threads) {
  if (!(region_side > 0)) throw UserError("region error: region side must be > 0");
  if (!(threshold >= 0)) throw UserError("region error: threshold must be >= 0");
  const Aabb box = scene.aabb();
  const int k = bins.bin_count();
  RegionErrorReport r;
  r.region_side = region_side;
  r.threshold = threshold;
  r.classes = bins.names(scene.class_names());
  r.cells_x = std::max(1, static_cast<int>(std::ceil(box.extent().x() / region_side - 1e-9)));
  r.cells_y = std::max(1, static_cast<int>(std::ceil(box.extent().y() / region_side - 1e-9)));
  const double z = box.min.z() + kEyeHeight;

  for (int iy = 0; iy < r.cells_y; ++iy) {
    for (int ix = 0; ix < r.cells_x; ++ix) {
      const double x0 = box.min.x() + ix * region_side, x1 = std::min(box.max.x(), x0 + region_side);
      const double y0 = box.min.y() + iy * region_side, y1 = std::min(box.max.y(), y0 + region_side);
      const Vec3 center(0.5 * (x0 + x1), 0.5 * (y0 + y1), z);
      Vec3 eye = center;
      if (blocked(scene, center)) {
        double best = std::numeric_limits<double>::infinity();
        for (double y = y0 + 0.5 * kFreeSearchStep; y < y1; y += kFreeSearchStep) {
          for (double x = x0 + 0.5 * kFreeSearchStep; x < x1; x += kFreeSearchStep) {
            const Vec3 p(x, y, z);
            const double d = (p - center).squaredNorm();
            if (d < best && !blocked(scene, p)) {
              best = d;
              eye = p;
            }
          }
        }
        if (!std::isfinite(best)) {
          ++r.skipped;
          continue;
        }
      }
      r.centers.push_back({center.x(), center.y()});
      r.anchors.push_back({eye.x(), eye.y(), eye.z(), 0.0, 0.0});
    }
  }

  std::vector<Viewpoint> views;
  for (const auto& a : r.anchors) {
    for (int d = 0; d < kRegionDirections; ++d) {
      Viewpoint v = a;
      v.alpha = d * 2 * std::numbers::pi / kRegionDirections;
      views.push_back(v);
    }
  }
  const auto truth = build_dataset(scene, views, bins, settings, threads);
  const auto predicted = views.empty() ? std::vector<ThematicDistribution>{} : predictor(views);
  if (predicted.size() != views.size()) throw UserError("region error: predictor returned the wrong count");

  std::vector<int> under(k, 0);
  for (std::size_t region = 0; region < r.anchors.size(); ++region) {
    std::vector<double> err(k, 0.0);
    for (int d = 0; d < kRegionDirections; ++d) {
      const std::size_t i = region * kRegionDirections + d;
      if (static_cast<int>(predicted[i].size()) != k) throw UserError("region error: component count mismatch");
      for (int c = 0; c < k; ++c) err[c] += std::abs(predicted[i][c] - truth[i].m_gt[c]);
    }
    for (int c = 0; c < k; ++c) {
      err[c] /= kRegionDirections;
      if (err[c] <= threshold) ++under[c];
    }
    r.error.push_back(std::move(err));
  }
  r.percent_under.assign(k, 0.0);
  if (!r.anchors.empty()) {
    for (int c = 0; c < k; ++c) r.percent_under[c] = 100.0 * under[c] / static_cast<double>(r.anchors.size());
  }
  return r;
}

RegionErrorReport region_error(const Scene& scene, const ModelParams& model, double region_side, double threshold,
                               int threads) {
  const Predictor predictor = [&](std::span<const Viewpoint> views) {
    return to_distributions(predict(model, views).output);
  };
  return region_error(scene, predictor, model.meta.bins, model.meta.render, region_side, threshold, threads);
}

nlohmann::json to_json(const RegionErrorReport& r) {
  nlohmann::json regions = nlohmann::json::array();
  for (std::size_t i = 0; i < r.anchors.size(); ++i) {
    regions.push_back({{"center", r.centers[i]},
                       {"eye", {r.anchors[i].x, r.anchors[i].y, r.anchors[i].z}},
                       {"error", r.error[i]}});
  }
  nlohmann::json percent = nlohmann::json::object();
  for (std::size_t c = 0; c < r.classes.size(); ++c) percent[r.classes[c]] = r.percent_under[c];
  return {{"region_side", r.region_side},
          {"threshold", r.threshold},
          {"directions", kRegionDirections},
          {"grid", {r.cells_x, r.cells_y}},
          {"regions", r.anchors.size()},
          {"skipped", r.skipped},
          {"classes", r.classes},
          {"percent_under", percent},
          {"per_region", regions}};
}

std::string to_table(const RegionErrorReport& r) {
  std::string out;
  char buf[96];
  std::snprintf(buf, sizeof buf, "Regions: %zu (%dx%d grid, %g m, %d skipped), threshold %g\n", r.anchors.size(),
                r.cells_x, r.cells_y, r.region_side, r.skipped, r.threshold);
  out += buf;
  for (std::size_t c = 0; c < r.classes.size(); ++c) {
    std::snprintf(buf, sizeof buf, "%-10s regions (%%)  %6.2f\n", r.classes[c].c_str(), r.percent_under[c]);
    out += buf;
  }
  return out;
}

}  // namespace viewfield
