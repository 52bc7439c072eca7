#include <json.hpp>
#include <string>

#include "binary_io.hpp"
#include "eegadapt/error.hpp"
#include "eegadapt/net.hpp"

namespace eegadapt {

namespace {

constexpr std::string_view kMagic = "EEGW";

nlohmann::json spec_header(const NetworkSpec& spec, const WeightStore& weights) {
  nlohmann::json h;
  h["in_channels"] = spec.in_channels;
  h["num_classes"] = spec.num_classes;
  h["bn_eps"] = spec.bn_eps;
  h["blocks"] = nlohmann::json::array();
  for (const auto& b : spec.blocks) {
    h["blocks"].push_back(
        {{"out_channels", b.out_channels}, {"kernel_size", b.kernel_size}, {"pool_stride", b.pool_stride}});
  }
  h["calibration_whitener"] = weights.calibration_whitener.has_value();
  return h;
}

template <class T>
T header_field(const nlohmann::json& j, const char* key, const std::string& path, std::size_t offset) {
  if (!j.contains(key)) throw FormatError(path + key, offset, "missing");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + key, offset, e.what());
  }
}

}  // namespace

std::vector<std::uint8_t> encode_weights(const NetworkSpec& spec, const WeightStore& weights) {
  weights.validate(spec);
  detail::ByteWriter w;
  w.bytes(kMagic);
  w.u32(kWeightFileVersion);
  const std::string header = spec_header(spec, weights).dump();
  w.u32(static_cast<std::uint32_t>(header.size()));
  w.bytes(header);
  for (const auto& b : weights.blocks) {
    w.f32s(b.conv_weight);
    w.f32s(b.conv_bias);
    w.f32s(b.bn_gamma);
    w.f32s(b.bn_beta);
    w.f32s(b.bn_running_mean);
    w.f32s(b.bn_running_var);
  }
  w.f32s(weights.classifier_weight);
  w.f32s(weights.classifier_bias);
  if (weights.calibration_whitener) w.f32s(weights.calibration_whitener->matrix().values());
  return w.take();
}

LoadedNetwork decode_weights(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  if (r.bytes(4, "magic") != kMagic) throw FormatError("magic", 0, "not an EEGW weight file");
  const std::uint32_t version = r.u32("version");
  if (version != kWeightFileVersion)
    throw FormatError("version", 4, "unsupported version " + std::to_string(version));
  const std::uint32_t header_len = r.u32("header_length");
  const std::size_t header_offset = r.offset();
  const std::string header_text = r.bytes(header_len, "header");

  nlohmann::json h;
  try {
    h = nlohmann::json::parse(header_text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("header", header_offset, e.what());
  }

  LoadedNetwork out;
  NetworkSpec& spec = out.spec;
  spec.in_channels = header_field<std::size_t>(h, "in_channels", "header.", header_offset);
  spec.num_classes = header_field<std::size_t>(h, "num_classes", "header.", header_offset);
  spec.bn_eps = header_field<double>(h, "bn_eps", "header.", header_offset);
  if (!h.contains("blocks") || !h["blocks"].is_array())
    throw FormatError("header.blocks", header_offset, "missing or not an array");
  for (std::size_t i = 0; i < h["blocks"].size(); ++i) {
    const auto& jb = h["blocks"][i];
    const std::string p = "header.blocks[" + std::to_string(i) + "].";
    spec.blocks.push_back({header_field<std::size_t>(jb, "out_channels", p, header_offset),
                           header_field<std::size_t>(jb, "kernel_size", p, header_offset),
                           header_field<std::size_t>(jb, "pool_stride", p, header_offset)});
  }
  try {
    spec.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError("header", header_offset, e.what());
  }
  const bool has_whitener = header_field<bool>(h, "calibration_whitener", "header.", header_offset);

  out.weights = WeightStore::zeros_like(spec);
  for (std::size_t l = 0; l < spec.blocks.size(); ++l) {
    auto& b = out.weights.blocks[l];
    const std::string p = "block" + std::to_string(l) + ".";
    r.f32s(b.conv_weight, p + "conv_weight");
    r.f32s(b.conv_bias, p + "conv_bias");
    r.f32s(b.bn_gamma, p + "bn_gamma");
    r.f32s(b.bn_beta, p + "bn_beta");
    r.f32s(b.bn_running_mean, p + "bn_running_mean");
    r.f32s(b.bn_running_var, p + "bn_running_var");
  }
  r.f32s(out.weights.classifier_weight, "classifier_weight");
  r.f32s(out.weights.classifier_bias, "classifier_bias");
  if (has_whitener) {
    const std::size_t c = spec.in_channels;
    const std::size_t at = r.offset();
    std::vector<double> vals(c * c);
    r.f32s(vals, "calibration_whitener");
    try {
      out.weights.calibration_whitener = SymMatrix::from_matrix(Matrix(c, c, std::move(vals)), 0.0);
    } catch (const InvalidArgument& e) {
      throw FormatError("calibration_whitener", at, e.what());
    }
  }
  if (r.remaining() != 0) {
    throw FormatError("end_of_file", r.offset(),
                      std::to_string(r.remaining()) + " unexpected trailing bytes");
  }
  try {
    out.weights.validate(spec);
  } catch (const InvalidArgument& e) {
    throw FormatError("tensors", header_offset + header_len, e.what());
  }
  return out;
}

void save_weights(const NetworkSpec& spec, const WeightStore& weights,
                  const std::filesystem::path& path) {
  detail::write_file(path, encode_weights(spec, weights));
}

LoadedNetwork load_weights(const std::filesystem::path& path) {
  return decode_weights(detail::read_file(path));
}

}  // namespace eegadapt
