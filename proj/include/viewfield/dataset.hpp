#pragma once

#include "viewfield/field.hpp"
#include "viewfield/raster.hpp"
#include "viewfield/scene.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace viewfield {

inline constexpr double kEyeHeight = 1.7;
inline constexpr double kFacadeOffset = 0.05;

struct ViewSample {
  Viewpoint viewpoint;
  ThematicDistribution m_gt;

  bool operator==(const ViewSample&) const = default;
};

struct SamplingStrategy {
  enum class Kind { uniform, street_level, facade_mounted };

  Kind kind = Kind::uniform;
  int directions_per_position = 1;
  // Uniform: camera height range; max_height < 0 means the scene top.
  double min_height = kEyeHeight;
  double max_height = -1.0;
  // Pitch range in radians (facade-mounted: absolute pitch, yaw jitter below).
  double min_pitch = 0.0;
  double max_pitch = 0.0;
  double yaw_jitter = 0.0;  ///< facade-mounted: +- radians around the normal

  static SamplingStrategy uniform();
  static SamplingStrategy street_level();
  static SamplingStrategy facade_mounted();
  static SamplingStrategy from_name(const std::string& name);

  void validate() const;
};

/// Exactly n seeded viewpoints outside every building box.
std::vector<Viewpoint> sample_viewpoints(const Scene& scene, const SamplingStrategy& strategy, std::size_t n,
                                         std::uint64_t seed);

/// Renders each viewpoint and aggregates its histogram; output order follows
/// the input regardless of the worker count.
std::vector<ViewSample> build_dataset(const Scene& scene, std::span<const Viewpoint> viewpoints,
                                      const BinSpec& bins, const RenderSettings& settings, int threads = 0);

struct DatasetSplit {
  std::vector<ViewSample> train;
  std::vector<ViewSample> test;
};

/// Disjoint, exhaustive split; both halves keep input order.
DatasetSplit split(std::span<const ViewSample> data, double test_fraction, std::uint64_t seed);

/// Seeded subset keeping input order. For a fixed seed, smaller fractions
/// are always contained in larger ones.
std::vector<ViewSample> subset(std::span<const ViewSample> data, double fraction, std::uint64_t seed);

std::string dataset_to_csv(std::span<const ViewSample> data);
std::vector<ViewSample> dataset_from_csv(std::string_view text);
void save_dataset(std::span<const ViewSample> data, const std::filesystem::path& path);
std::vector<ViewSample> load_dataset(const std::filesystem::path& path);

/// Sidecar describing how a CSV dataset was produced (`<csv>.meta.json`).
struct DatasetMeta {
  std::vector<std::string> components;
  BinSpec bins;
  RenderSettings settings;
  Aabb aabb;

  bool operator==(const DatasetMeta&) const = default;
};

std::filesystem::path meta_path(const std::filesystem::path& csv);
void save_meta(const DatasetMeta& meta, const std::filesystem::path& path);
DatasetMeta load_meta(const std::filesystem::path& path);

}  // namespace viewfield
