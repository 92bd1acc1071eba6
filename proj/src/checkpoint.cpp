#include "viewfield/error.hpp"
#include "viewfield/json_io.hpp"
#include "viewfield/net.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace viewfield {

namespace {

constexpr char kMagic[4] = {'N', 'V', 'F', '1'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

void put_f32(std::vector<std::uint8_t>& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

nlohmann::json header_json(const ModelParams& model) {
  using N = Network<float>;
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : model.net.layers) layers.push_back({{"rows", l.W.rows()}, {"cols", l.W.cols()}});
  return {{"format", "NVF1"},
          {"k", model.k()},
          {"classes", model.meta.class_names},
          {"bins", model.meta.bins},
          {"aabb", model.meta.normalizer.box()},
          {"render", model.meta.render},
          {"encoding", {{"frequencies", kEncodingFrequencies}, {"width", kEncodingWidth}}},
          {"architecture",
           {{"trunk_depth", N::kTrunkDepth},
            {"trunk_width", N::kTrunkWidth},
            {"skip_layer", N::kSkipLayer},
            {"head_width", N::kHeadWidth},
            {"position_features", kPositionFeatures},
            {"direction_features", kDirectionFeatures}}},
          {"layers", layers},
          {"parameter_count", model.net.parameter_count()},
          {"provenance", model.meta.provenance}};
}

}  // namespace

std::vector<std::uint8_t> checkpoint_bytes(const ModelParams& model) {
  const std::string header = header_json(model).dump();
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, static_cast<std::uint32_t>(header.size()));
  out.insert(out.end(), header.begin(), header.end());
  out.reserve(out.size() + 4 * model.net.parameter_count());
  for (const auto& l : model.net.layers) {
    for (Eigen::Index r = 0; r < l.W.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.W.cols(); ++c) put_f32(out, l.W(r, c));
    }
    for (Eigen::Index r = 0; r < l.b.size(); ++r) put_f32(out, l.b(r));
  }
  return out;
}

ModelParams checkpoint_from_bytes(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw UserError("checkpoint: missing NVF1 magic");
  }
  const std::size_t header_len = get_u32(bytes.data() + 4);
  if (bytes.size() < 8 + header_len) throw UserError("checkpoint: truncated header");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + header_len);
  } catch (const nlohmann::json::exception& e) {
    throw UserError(std::string("checkpoint: bad header: ") + e.what());
  }

  ModelParams model;
  try {
    const int k = h.at("k").get<int>();
    if (h.at("encoding").at("frequencies").get<int>() != kEncodingFrequencies) {
      throw UserError("checkpoint: unsupported encoding");
    }
    model.net = Network<float>(k);
    const auto& layers = h.at("layers");
    if (layers.size() != model.net.layers.size()) throw UserError("checkpoint: layer count mismatch");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& W = model.net.layers[i].W;
      if (layers[i].at("rows").get<Eigen::Index>() != W.rows() || layers[i].at("cols").get<Eigen::Index>() != W.cols()) {
        throw UserError("checkpoint: shape mismatch in layer " + std::to_string(i));
      }
    }
    model.meta.class_names = h.at("classes").get<std::vector<std::string>>();
    model.meta.bins = h.at("bins").get<BinSpec>();
    model.meta.normalizer = Normalizer(h.at("aabb").get<Aabb>());
    model.meta.render = h.at("render").get<RenderSettings>();
    model.meta.provenance = h.value("provenance", nlohmann::json::object());
    if (static_cast<int>(model.meta.class_names.size()) != k || model.meta.bins.bin_count() != k) {
      throw UserError("checkpoint: class/bin count disagrees with k");
    }
  } catch (const nlohmann::json::exception& e) {
    throw UserError(std::string("checkpoint: bad header: ") + e.what());
  }

  const std::size_t count = model.net.parameter_count();
  const std::size_t expected = 8 + header_len + 4 * count;
  if (bytes.size() < expected) throw UserError("checkpoint: truncated weights");
  if (bytes.size() > expected) throw UserError("checkpoint: trailing bytes after weights");
  const std::uint8_t* p = bytes.data() + 8 + header_len;
  for (auto& l : model.net.layers) {
    for (Eigen::Index r = 0; r < l.W.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.W.cols(); ++c, p += 4) l.W(r, c) = std::bit_cast<float>(get_u32(p));
    }
    for (Eigen::Index r = 0; r < l.b.size(); ++r, p += 4) l.b(r) = std::bit_cast<float>(get_u32(p));
  }
  for (const auto& l : model.net.layers) {
    if (!l.W.allFinite() || !l.b.allFinite()) throw UserError("checkpoint: non-finite weights");
  }
  return model;
}

void save_checkpoint(const ModelParams& model, const std::filesystem::path& path) {
  const auto bytes = checkpoint_bytes(model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UserError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw UserError("write failed: " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UserError("cannot read " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return checkpoint_from_bytes(bytes);
}

}  // namespace viewfield
