#pragma once

// Model checkpoints in two encodings.
//
// Binary (little-endian, bit-exact):
//   "SPNW" u32 version | siren block                        for a SirenNetwork
//   "SPFM" u32 version | f64 lambda | f64 time_offset | f64 time_scale |
//     u64 fourier_order | u64 M | u64 S | u8 high_frozen | low block | high block
//   siren block: u64 seed | u64 layers | per layer:
//     u64 n_out | u64 n_in | f64 omega0 | u8 is_first | u8 is_linear_output |
//     f64 weight[n_out * n_in] (row-major) | f64 bias[n_out]
//
// JSON mirrors the same fields; doubles are printed in shortest round-trip form.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sirenpose/errors.hpp"
#include "sirenpose/fusion.hpp"
#include "sirenpose/scene_io.hpp"
#include "sirenpose/siren.hpp"

namespace sirenpose {

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

class ByteWriter {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void tag(const char (&t)[5]) { bytes_.insert(bytes_.end(), t, t + 4); }
  const std::string& bytes() const { return bytes_; }

 private:
  std::string bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string bytes) : bytes_(std::move(bytes)) {}

  template <typename T>
  T get() {
    if (pos_ + sizeof(T) > bytes_.size()) throw ValidationError("checkpoint: truncated at byte " + std::to_string(pos_));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void expect_tag(const char (&t)[5]) {
    if (pos_ + 4 > bytes_.size() || bytes_.compare(pos_, 4, t) != 0) {
      throw ValidationError(std::string("checkpoint: expected '") + t + "' header");
    }
    pos_ += 4;
  }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  std::string bytes_;
  std::size_t pos_ = 0;
};

inline void write_siren(ByteWriter& w, const SirenNetwork& net) {
  w.put<std::uint64_t>(net.seed());
  w.put<std::uint64_t>(net.depth());
  for (const auto& l : net.layers()) {
    w.put<std::uint64_t>(l.fan_out());
    w.put<std::uint64_t>(l.fan_in());
    w.put<double>(l.omega0);
    w.put<std::uint8_t>(l.is_first ? 1 : 0);
    w.put<std::uint8_t>(l.is_linear_output ? 1 : 0);
    for (double v : l.weight.values()) w.put<double>(v);
    for (double v : l.bias.values()) w.put<double>(v);
  }
}

inline SirenNetwork read_siren(ByteReader& r) {
  const auto seed = r.get<std::uint64_t>();
  const auto depth = r.get<std::uint64_t>();
  if (depth == 0 || depth > 1024) throw ValidationError("checkpoint: implausible layer count");
  std::vector<SirenLayer> layers;
  for (std::uint64_t l = 0; l < depth; ++l) {
    SirenLayer layer;
    const auto n_out = r.get<std::uint64_t>();
    const auto n_in = r.get<std::uint64_t>();
    if (n_out == 0 || n_in == 0 || n_out > (1u << 20) || n_in > (1u << 20)) {
      throw ValidationError("checkpoint: implausible layer dims");
    }
    layer.omega0 = r.get<double>();
    layer.is_first = r.get<std::uint8_t>() != 0;
    layer.is_linear_output = r.get<std::uint8_t>() != 0;
    layer.weight = Tensor({n_out, n_in});
    for (double& v : layer.weight.values()) v = r.get<double>();
    layer.bias = Tensor({n_out});
    for (double& v : layer.bias.values()) v = r.get<double>();
    layers.push_back(std::move(layer));
  }
  return SirenNetwork(std::move(layers), seed);
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline bool is_json_path(const std::filesystem::path& path) { return path.extension() == ".json"; }

}  // namespace detail

inline std::string siren_to_binary(const SirenNetwork& net) {
  detail::ByteWriter w;
  w.tag("SPNW");
  w.put<std::uint32_t>(kCheckpointVersion);
  detail::write_siren(w, net);
  return w.bytes();
}

inline SirenNetwork siren_from_binary(std::string bytes) {
  detail::ByteReader r(std::move(bytes));
  r.expect_tag("SPNW");
  if (r.get<std::uint32_t>() != kCheckpointVersion) throw ValidationError("checkpoint: unsupported version");
  auto net = detail::read_siren(r);
  if (!r.at_end()) throw ValidationError("checkpoint: trailing bytes");
  return net;
}

inline json siren_to_json(const SirenNetwork& net) {
  json j;
  j["seed"] = net.seed();
  j["layers"] = json::array();
  for (const auto& l : net.layers()) {
    j["layers"].push_back({{"n_out", l.fan_out()},
                           {"n_in", l.fan_in()},
                           {"omega0", l.omega0},
                           {"is_first", l.is_first},
                           {"is_linear_output", l.is_linear_output},
                           {"weight", l.weight.data()},
                           {"bias", l.bias.data()}});
  }
  return j;
}

inline SirenNetwork siren_from_json(const json& j) {
  try {
    std::vector<SirenLayer> layers;
    for (const auto& lj : j.at("layers")) {
      SirenLayer l;
      const auto n_out = lj.at("n_out").get<std::size_t>();
      const auto n_in = lj.at("n_in").get<std::size_t>();
      l.omega0 = lj.at("omega0").get<double>();
      l.is_first = lj.at("is_first").get<bool>();
      l.is_linear_output = lj.at("is_linear_output").get<bool>();
      l.weight = Tensor({n_out, n_in}, lj.at("weight").get<std::vector<double>>());
      l.bias = Tensor({n_out}, lj.at("bias").get<std::vector<double>>());
      layers.push_back(std::move(l));
    }
    return SirenNetwork(std::move(layers), j.at("seed").get<std::uint64_t>());
  } catch (const json::exception& e) {
    throw ValidationError(std::string("checkpoint: ") + e.what());
  }
}

inline std::string fusion_to_binary(const FusionModel& m) {
  detail::ByteWriter w;
  w.tag("SPFM");
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<double>(m.lambda_blend);
  w.put<double>(m.encoding.time_offset);
  w.put<double>(m.encoding.time_scale);
  w.put<std::uint64_t>(m.encoding.fourier_order);
  w.put<std::uint64_t>(m.layout.num_keypoints);
  w.put<std::uint64_t>(m.layout.num_samples);
  w.put<std::uint8_t>(m.high_frozen ? 1 : 0);
  detail::write_siren(w, m.low);
  detail::write_siren(w, m.high);
  return w.bytes();
}

inline FusionModel fusion_from_binary(std::string bytes) {
  detail::ByteReader r(std::move(bytes));
  r.expect_tag("SPFM");
  if (r.get<std::uint32_t>() != kCheckpointVersion) throw ValidationError("checkpoint: unsupported version");
  FusionModel m;
  m.lambda_blend = r.get<double>();
  m.encoding.time_offset = r.get<double>();
  m.encoding.time_scale = r.get<double>();
  m.encoding.fourier_order = r.get<std::uint64_t>();
  m.layout.num_keypoints = r.get<std::uint64_t>();
  m.layout.num_samples = r.get<std::uint64_t>();
  m.high_frozen = r.get<std::uint8_t>() != 0;
  m.low = detail::read_siren(r);
  m.high = detail::read_siren(r);
  if (!r.at_end()) throw ValidationError("checkpoint: trailing bytes");
  m.validate();
  return m;
}

inline json fusion_to_json(const FusionModel& m) {
  json j;
  j["format"] = "sirenpose-fusion";
  j["version"] = kCheckpointVersion;
  j["lambda"] = m.lambda_blend;
  j["encoding"] = {{"time_offset", m.encoding.time_offset},
                   {"time_scale", m.encoding.time_scale},
                   {"fourier_order", m.encoding.fourier_order}};
  j["layout"] = {{"num_keypoints", m.layout.num_keypoints}, {"num_samples", m.layout.num_samples}};
  j["high_frozen"] = m.high_frozen;
  j["low"] = siren_to_json(m.low);
  j["high"] = siren_to_json(m.high);
  return j;
}

inline FusionModel fusion_from_json(const json& j) {
  FusionModel m;
  try {
    if (j.at("format").get<std::string>() != "sirenpose-fusion") {
      throw ValidationError("checkpoint: not a fusion model");
    }
    m.lambda_blend = j.at("lambda").get<double>();
    const auto& e = j.at("encoding");
    m.encoding.time_offset = e.at("time_offset").get<double>();
    m.encoding.time_scale = e.at("time_scale").get<double>();
    m.encoding.fourier_order = e.at("fourier_order").get<std::size_t>();
    m.layout.num_keypoints = j.at("layout").at("num_keypoints").get<std::size_t>();
    m.layout.num_samples = j.at("layout").at("num_samples").get<std::size_t>();
    m.high_frozen = j.at("high_frozen").get<bool>();
  } catch (const json::exception& ex) {
    throw ValidationError(std::string("checkpoint: ") + ex.what());
  }
  m.low = siren_from_json(j.at("low"));
  m.high = siren_from_json(j.at("high"));
  m.validate();
  return m;
}

/// Chooses JSON for a ".json" path, binary otherwise.
inline void save_fusion(const FusionModel& m, const std::filesystem::path& path) {
  detail::write_atomic(path, detail::is_json_path(path) ? fusion_to_json(m).dump() : fusion_to_binary(m));
}

inline FusionModel load_fusion(const std::filesystem::path& path) {
  if (detail::is_json_path(path)) return fusion_from_json(read_json_file(path));
  return fusion_from_binary(detail::read_file_bytes(path));
}

inline void save_siren(const SirenNetwork& net, const std::filesystem::path& path) {
  detail::write_atomic(path, detail::is_json_path(path) ? siren_to_json(net).dump() : siren_to_binary(net));
}

inline SirenNetwork load_siren(const std::filesystem::path& path) {
  if (detail::is_json_path(path)) return siren_from_json(read_json_file(path));
  return siren_from_binary(detail::read_file_bytes(path));
}

}  // namespace sirenpose
