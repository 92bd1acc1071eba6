#pragma once

// nlohmann/json conversions for the small value types that appear in
// checkpoints, dataset sidecars, reports and service payloads.

#include "viewfield/field.hpp"
#include "viewfield/raster.hpp"

#include "json.hpp"

namespace viewfield {

void to_json(nlohmann::json& j, const Aabb& box);
void from_json(const nlohmann::json& j, Aabb& box);

void to_json(nlohmann::json& j, const BinSpec& bins);
void from_json(const nlohmann::json& j, BinSpec& bins);

void to_json(nlohmann::json& j, const RenderSettings& s);
void from_json(const nlohmann::json& j, RenderSettings& s);

void to_json(nlohmann::json& j, const Viewpoint& v);
/// Accepts {"x","y","z","alpha","gamma"} objects or [x,y,z,alpha,gamma] arrays.
void from_json(const nlohmann::json& j, Viewpoint& v);

}  // namespace viewfield
