#pragma once

#include "viewfield/net.hpp"
#include "viewfield/percept.hpp"
#include "viewfield/scene.hpp"

#include <chrono>
#include <cstdint>
#include <memory>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace viewfield {

/// What an inverse query is looking for.
struct TargetSpec {
  enum class Kind { exact, intervals, metric };

  Kind kind = Kind::exact;
  std::vector<double> exact;   ///< exact: target value per component
  std::vector<double> lo, hi;  ///< intervals: per-component bounds
  std::vector<bool> active;    ///< exact/intervals: which components count
  std::shared_ptr<const PerceptionMetric> metric;
  double metric_value = 0;

  static TargetSpec exact_vector(std::vector<double> m, std::vector<bool> mask = {});
  static TargetSpec interval_constraints(std::vector<double> lo, std::vector<double> hi, std::vector<bool> mask);
  static TargetSpec metric_target(std::shared_ptr<const PerceptionMetric> metric, double value);

  void validate(int k) const;

  /// Loss at m; writes d(loss)/dm when `dm` is non-empty.
  double loss(std::span<const double> m, std::span<double> dm = {}) const;
};

/// "tree:0.2-0.4,sky:0.3-0.5" (intervals) or "tree=0.3,sky=0.4" (exact,
/// masked to the listed components). ParseError offsets are byte offsets.
TargetSpec parse_target(std::string_view text, const std::vector<std::string>& names);

struct InverseConfig {
  double learning_rate = 0.01;
  int max_iterations = 500;
  double tolerance = 1e-3;
  int restarts = 32;
  std::uint64_t seed = 0;
  std::optional<Parametrization> region;
  /// Fixed (alpha, gamma); otherwise both are optimized.
  std::optional<std::pair<double, double>> direction;
  /// Position bounds; defaults to the model's scene box.
  std::optional<Aabb> bounds;
  double min_pitch = -89.0 * std::numbers::pi / 180.0;
  double max_pitch = 89.0 * std::numbers::pi / 180.0;
  /// Optional explicit starts, used before random ones.
  std::vector<Viewpoint> initial_points;
  std::optional<std::chrono::steady_clock::time_point> deadline;

  void validate() const;
};

struct InverseResult {
  enum class Status { converged, max_iterations };

  Viewpoint viewpoint;
  std::vector<double> m;
  double loss = 0;
  Status status = Status::max_iterations;
  int iterations = 0;
  int restart = 0;
  std::optional<std::pair<double, double>> ab;  ///< region coordinates, if any
};

std::string to_string(InverseResult::Status s);

struct DirectResult {
  std::vector<ThematicDistribution> m;
  std::vector<double> metric;  ///< filled when a metric is given
  std::size_t clamped = 0;     ///< viewpoints moved into the scene box
};

DirectResult direct_query(const ModelParams& model, std::span<const Viewpoint> viewpoints,
                          const PerceptionMetric* metric = nullptr);

/// Plain projected gradient descent from `restarts` seeded starts, batched
/// across restarts. Results are sorted by loss.
std::vector<InverseResult> inverse_gradient(const ModelParams& model, const TargetSpec& target,
                                            const InverseConfig& config);

/// Scores n seeded random viewpoints drawn like the descent starts and
/// returns the q best, sorted by loss.
std::vector<InverseResult> inverse_sweep(const ModelParams& model, const TargetSpec& target,
                                         const InverseConfig& config, std::size_t n, std::size_t q);

struct PatchSummary {
  FacadePatch patch;
  ThematicDistribution m;
  std::vector<Viewpoint> samples;
};

/// Mean prediction over P random points per facade patch, looking along the
/// patch normal.
std::vector<PatchSummary> facade_summary(const ModelParams& model, const Scene& scene, int building_id,
                                         double patch_size, int samples, std::uint64_t seed);

}  // namespace viewfield
