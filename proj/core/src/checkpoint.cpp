#include "advdiff/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "advdiff/error.hpp"

namespace advdiff::nets {
namespace {

std::uint64_t to_little_endian(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t r = 0;
    for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
    return r;
  }
  return v;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Mlp& net,
                     const nlohmann::json& extra) {
  nlohmann::json header;
  header["format_version"] = kCheckpointFormatVersion;
  header["layer_sizes"] = net.layer_sizes();
  header["activation"] = std::string(to_string(net.hidden_activation()));
  header["seed"] = net.seed();
  header["parameter_count"] = net.parameter_count();
  header["extra"] = extra;

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path.string());
  out << header.dump() << '\n';
  for (double v : net.flatten()) {
    const std::uint64_t bits = to_little_endian(std::bit_cast<std::uint64_t>(v));
    char bytes[8];
    std::memcpy(bytes, &bits, 8);
    out.write(bytes, 8);
  }
  if (!out) throw std::runtime_error("failed writing checkpoint " + path.string());
}

MlpCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error("checkpoint " + path.string() + " has no header");
  }
  const nlohmann::json header = nlohmann::json::parse(line);
  if (header.at("format_version").get<int>() != kCheckpointFormatVersion) {
    throw std::runtime_error("unsupported checkpoint format version");
  }
  const auto sizes = header.at("layer_sizes").get<std::vector<std::size_t>>();
  const auto count = header.at("parameter_count").get<std::size_t>();
  std::vector<double> flat(count);
  for (double& v : flat) {
    char bytes[8];
    if (!in.read(bytes, 8)) {
      throw std::runtime_error("checkpoint " + path.string() + " is truncated");
    }
    std::uint64_t bits = 0;
    std::memcpy(&bits, bytes, 8);
    v = std::bit_cast<double>(to_little_endian(bits));
  }
  MlpCheckpoint ckpt;
  ckpt.net = from_parts(sizes, parse_activation(header.at("activation").get<std::string>()),
                        header.at("seed").get<std::uint64_t>(), flat);
  ckpt.extra = header.value("extra", nlohmann::json::object());
  return ckpt;
}

}  // namespace advdiff::nets
