#pragma once

#include "viewfield/dataset.hpp"
#include "viewfield/net.hpp"
#include "viewfield/train.hpp"

#include "json.hpp"

#include <Eigen/Core>

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace viewfield {

/// Tanh-layer activations, one 128-column per viewpoint.
Eigen::MatrixXd latent_codes(const ModelParams& model, std::span<const Viewpoint> viewpoints);

struct Projection {
  enum class Kind { principal_components, axis_pair };

  Kind kind = Kind::principal_components;
  int first = 0;  ///< axis_pair dimensions
  int second = 1;

  static Projection parse(const std::string& text);  ///< "pca" or "axes:i,j"
};

struct Pca {
  Eigen::VectorXd mean;
  Eigen::MatrixXd axes;  ///< d x components, orthonormal columns
  Eigen::VectorXd variances;
};

/// Power iteration with deflation on the covariance of the columns of x.
Pca principal_components(const Eigen::MatrixXd& x, int components, double tol = 1e-9, int max_iterations = 1000);

/// Returns 2 x N coordinates.
Eigen::MatrixXd project_2d(const Eigen::MatrixXd& latents, const Projection& projection);

/// Mean distribution of the k nearest training samples in normalized
/// viewpoint space; ties go to the lower sample index.
ThematicDistribution knn_predict(std::span<const ViewSample> train, const Normalizer& normalizer,
                                 const Viewpoint& query, int k);

std::vector<ThematicDistribution> knn_predict(std::span<const ViewSample> train, const Normalizer& normalizer,
                                              std::span<const Viewpoint> queries, int k, int threads = 0);

struct Comparison {
  std::vector<double> fractions;
  std::vector<std::size_t> train_sizes;
  std::vector<std::string> models;         ///< row labels
  std::vector<std::vector<double>> rmse;   ///< [model][fraction]
};

nlohmann::json to_json(const Comparison& c);
std::string to_table(const Comparison& c);

/// One network training run and one KNN evaluation per k for each nested
/// training subset, all scored on the same test set. `base` supplies the
/// model metadata; its weights are re-initialized from `init_seed`.
Comparison compare_models(std::span<const ViewSample> train, std::span<const ViewSample> test,
                          const std::vector<double>& fractions, const std::vector<int>& knn_ks,
                          const TrainConfig& config, const ModelParams& base, std::uint64_t init_seed,
                          std::uint64_t subset_seed, int threads = 0);

using Predictor = std::function<std::vector<ThematicDistribution>(std::span<const Viewpoint>)>;

struct RegionErrorReport {
  double region_side = 0;
  double threshold = 0;
  int cells_x = 0, cells_y = 0;
  std::vector<std::string> classes;
  std::vector<std::array<double, 2>> centers;     ///< region xy centers (cells with a free viewpoint)
  std::vector<Viewpoint> anchors;                 ///< eye-level viewpoint per region, yaw 0
  std::vector<std::vector<double>> error;         ///< [region][class]
  std::vector<double> percent_under;              ///< [class]
  int skipped = 0;                                ///< cells fully inside buildings
};

inline constexpr int kRegionDirections = 8;

/// Grid of square regions over the scene footprint. Each region is viewed
/// from eye height at its center (or the nearest free point of the cell),
/// pitch 0, yaw every 45 degrees. A region's class error is the mean absolute
/// component error over the 8 directions; it counts as under the threshold
/// when error <= threshold.
RegionErrorReport region_error(const Scene& scene, const Predictor& predictor, const BinSpec& bins,
                               const RenderSettings& settings, double region_side, double threshold,
                               int threads = 0);

RegionErrorReport region_error(const Scene& scene, const ModelParams& model, double region_side, double threshold,
                               int threads = 0);

nlohmann::json to_json(const RegionErrorReport& r);
std::string to_table(const RegionErrorReport& r);

}  // namespace viewfield
