#pragma once

#include "viewfield/field.hpp"
#include "viewfield/scene.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace viewfield {

/// Intrinsics shared by every camera of a dataset.
struct RenderSettings {
  double vertical_fov = 60.0;  ///< degrees
  int width = 64;
  int height = 64;
  double near = 0.1;
  double far = 5000.0;

  void validate() const;
  bool operator==(const RenderSettings&) const = default;
};

struct Camera {
  Viewpoint viewpoint;
  RenderSettings settings;
};

/// Orthonormal roll-free frame of a camera. Pixel (i, j) with j growing
/// downwards looks along
///   forward + right * ndc_x * tan_half_h + up * ndc_y * tan_half_v,
///   ndc_x = 2 (i + 0.5) / width - 1,  ndc_y = 1 - 2 (j + 0.5) / height.
struct CameraFrame {
  Vec3 eye, forward, right, up;
  double tan_half_v = 0, tan_half_h = 0;
};

/// Throws UserError for invalid intrinsics or a vertical view direction.
CameraFrame camera_frame(const Camera& camera);

struct ClassImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint16_t> cls;   ///< 0 = sky
  std::vector<double> depth;        ///< view-space depth, +inf on sky
  std::optional<std::vector<double>> value;

  std::uint16_t at(int i, int j) const { return cls[static_cast<std::size_t>(j) * width + i]; }
};

/// How pixels are aggregated into distribution components.
struct BinSpec {
  enum class Kind { categorical, scalar };

  Kind kind = Kind::categorical;
  int classes = 0;            ///< categorical: one bin per class
  std::vector<double> edges;  ///< scalar: bins [e_i, e_i+1), plus bin 0 for sky

  static BinSpec categorical(int k);
  static BinSpec scalar(std::vector<double> edges);

  int bin_count() const;
  void validate() const;
  /// Component names: class names for categorical bins, "sky", "bin1".. otherwise.
  std::vector<std::string> names(const std::vector<std::string>& class_names) const;

  bool operator==(const BinSpec&) const = default;
};

/// Perspective z-buffer rasterization; pixel-center sampling, top-left fill
/// rule, no anti-aliasing, no back-face culling.
ClassImage render(const Scene& scene, const Camera& camera);

/// Fraction of pixels per bin. Scalar values outside the edges land in the
/// nearest end bin.
ThematicDistribution histogram(const ClassImage& image, const BinSpec& bins);

/// False-color RGB rendering encoded as an 8-bit PNG.
std::vector<std::uint8_t> render_falsecolor(const Scene& scene, const Camera& camera);

std::vector<std::uint8_t> encode_png_rgb(int width, int height, std::span<const std::uint8_t> rgb);

}  // namespace viewfield
