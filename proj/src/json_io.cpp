#include "viewfield/json_io.hpp"

#include "viewfield/error.hpp"

namespace viewfield {

using nlohmann::json;

void to_json(json& j, const Aabb& box) {
  j = json{{"min", {box.min.x(), box.min.y(), box.min.z()}}, {"max", {box.max.x(), box.max.y(), box.max.z()}}};
}

void from_json(const json& j, Aabb& box) {
  const auto& lo = j.at("min");
  const auto& hi = j.at("max");
  box.min = Vec3(lo.at(0).get<double>(), lo.at(1).get<double>(), lo.at(2).get<double>());
  box.max = Vec3(hi.at(0).get<double>(), hi.at(1).get<double>(), hi.at(2).get<double>());
}

void to_json(json& j, const BinSpec& bins) {
  if (bins.kind == BinSpec::Kind::categorical) {
    j = json{{"kind", "categorical"}, {"classes", bins.classes}};
  } else {
    j = json{{"kind", "scalar"}, {"edges", bins.edges}};
  }
}

void from_json(const json& j, BinSpec& bins) {
  const auto kind = j.at("kind").get<std::string>();
  if (kind == "categorical") {
    bins = BinSpec::categorical(j.at("classes").get<int>());
  } else if (kind == "scalar") {
    bins = BinSpec::scalar(j.at("edges").get<std::vector<double>>());
  } else {
    throw ValidationError("bins: unknown kind '" + kind + "'");
  }
}

void to_json(json& j, const RenderSettings& s) {
  j = json{{"vertical_fov", s.vertical_fov}, {"width", s.width}, {"height", s.height},
           {"near", s.near},                 {"far", s.far}};
}

void from_json(const json& j, RenderSettings& s) {
  s.vertical_fov = j.at("vertical_fov").get<double>();
  s.width = j.at("width").get<int>();
  s.height = j.at("height").get<int>();
  s.near = j.at("near").get<double>();
  s.far = j.at("far").get<double>();
  s.validate();
}

void to_json(json& j, const Viewpoint& v) {
  j = json{{"x", v.x}, {"y", v.y}, {"z", v.z}, {"alpha", v.alpha}, {"gamma", v.gamma}};
}

void from_json(const json& j, Viewpoint& v) {
  if (j.is_array()) {
    if (j.size() != 5) throw UserError("viewpoint: expected [x,y,z,alpha,gamma]");
    v = {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>(), j[4].get<double>()};
    return;
  }
  if (!j.is_object()) throw UserError("viewpoint: expected an object or array");
  v.x = j.at("x").get<double>();
  v.y = j.at("y").get<double>();
  v.z = j.at("z").get<double>();
  v.alpha = j.at("alpha").get<double>();
  v.gamma = j.at("gamma").get<double>();
}

}  // namespace viewfield
