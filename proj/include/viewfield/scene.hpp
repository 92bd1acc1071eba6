#pragma once

#include "viewfield/geometry.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace viewfield {

struct ThematicClass {
  int id = 0;
  std::string name;
  std::array<std::uint8_t, 3> color{0, 0, 0};

  bool operator==(const ThematicClass&) const = default;
};

/// The default seven classes. Id 0 is always "sky", the background.
std::vector<ThematicClass> default_classes();

/// Vertical rectangle on a building side. `edge_u` is horizontal, `edge_v`
/// points up; `normal` is the outward horizontal unit normal.
struct Facade {
  Vec3 origin = Vec3::Zero();
  Vec3 edge_u = Vec3::Zero();
  Vec3 edge_v = Vec3::Zero();
  Vec3 normal = Vec3::Zero();
};

struct Building {
  int id = 0;
  std::size_t tri_start = 0;
  std::size_t tri_count = 0;
  Rect footprint;
  double height = 0;

  /// South, east, north and west facades, in that order.
  std::array<Facade, 4> facades() const;
  bool contains(const Vec3& p, double margin = 0.0) const;

  bool operator==(const Building&) const = default;
};

struct Scene {
  using Triangle = std::array<std::uint32_t, 3>;

  std::vector<ThematicClass> classes;
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;
  std::vector<std::uint16_t> tri_class;
  std::optional<std::vector<double>> tri_value;
  std::vector<Building> buildings;

  std::size_t class_count() const { return classes.size(); }
  /// Index of the class called `name`, or -1.
  int class_id(std::string_view name) const;
  std::vector<std::string> class_names() const;

  /// Bounding box of all vertices (a zero box for geometry-free scenes).
  Aabb aabb() const;

  double triangle_area(std::size_t t) const;

  /// Throws ValidationError on any broken invariant.
  void validate() const;

  bool operator==(const Scene&) const = default;
};

struct CityParams {
  int grid_size = 6;           ///< blocks per side
  double block_size = 60.0;    ///< meters, including sidewalks
  double street_width = 16.0;  ///< meters
  double sidewalk_width = 3.0;
  double building_density = 0.8;
  double max_height = 60.0;
  double tree_density = 0.5;
  double water_fraction = 0.1;
};

/// Procedural grid city: road network, sidewalk rings, surface/water lots,
/// box buildings and cone-on-cylinder trees. Pure function of its inputs.
Scene generate_city(std::uint64_t seed, const CityParams& params);

/// Replaces "building" with "brick" and appends "glass"; each building is
/// assigned glass with exact proportion `glass_fraction` (rounded), chosen
/// by a seeded shuffle.
Scene relabel_materials(const Scene& scene, double glass_fraction, std::uint64_t seed);

std::string scene_to_json(const Scene& scene);
Scene scene_from_json(std::string_view text);
void save_scene(const Scene& scene, const std::filesystem::path& path);
Scene load_scene(const std::filesystem::path& path);

struct FacadePatch {
  Vec3 center;
  Vec3 normal;
  Vec3 origin;  ///< rectangle corner
  Vec3 edge_u;
  Vec3 edge_v;
  int facade = 0;  ///< index into Building::facades()
};

/// Tiles every facade with patch_size squares; the last row/column may be
/// narrower. Zero-area facades yield no patches.
std::vector<FacadePatch> facade_patches(const Building& building, double patch_size);

}  // namespace viewfield
