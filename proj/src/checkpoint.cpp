#include "ractd/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace ractd {

namespace {

constexpr char kMagic[8] = {'R', 'A', 'C', 'T', 'D', 'N', 'E', 'T'};
constexpr std::uint32_t kVersion = 1;

// Weight bytes are written as-is; this format assumes a little-endian host,
// which covers every platform this project targets.

void write_u64(std::ofstream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint64_t read_u64(std::ifstream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}

}  // namespace

nlohmann::json topology_to_json(const NetworkParams& p) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : p.layers)
    layers.push_back({{"in", l.in}, {"out", l.out}, {"act", activation_name(l.act)}});
  return layers;
}

NetworkParams topology_from_json(const nlohmann::json& j) {
  std::vector<LayerSpec> layers;
  for (const auto& l : j)
    layers.push_back({l.at("in").get<Index>(), l.at("out").get<Index>(),
                      activation_from_name(l.at("act").get<std::string>())});
  return NetworkParams::make(std::move(layers));
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  ckpt.params.validate();
  nlohmann::json header = {
      {"role", ckpt.role},
      {"step", ckpt.step},
      {"config_hash", ckpt.config_hash},
      {"topology", topology_to_json(ckpt.params)},
      {"meta", ckpt.meta},
  };
  const std::string header_bytes = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path.string());
  out.write(kMagic, sizeof kMagic);
  const std::uint32_t version = kVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  write_u64(out, header_bytes.size());
  out.write(header_bytes.data(), static_cast<std::streamsize>(header_bytes.size()));
  write_u64(out, static_cast<std::uint64_t>(ckpt.params.flat.size()));
  out.write(reinterpret_cast<const char*>(ckpt.params.flat.data()),
            static_cast<std::streamsize>(ckpt.params.flat.size() * sizeof(double)));
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const std::string& expect_role) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path.string());

  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw std::runtime_error("load_checkpoint: bad magic in " + path.string());
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  if (!in || version != kVersion)
    throw std::runtime_error("load_checkpoint: unsupported version in " + path.string());

  const std::uint64_t header_len = read_u64(in);
  std::string header_bytes(header_len, '\0');
  in.read(header_bytes.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw std::runtime_error("load_checkpoint: truncated header in " + path.string());
  const nlohmann::json header = nlohmann::json::parse(header_bytes);

  Checkpoint ckpt;
  ckpt.role = header.at("role").get<std::string>();
  ckpt.step = header.at("step").get<std::int64_t>();
  ckpt.config_hash = header.at("config_hash").get<std::string>();
  ckpt.meta = header.at("meta");
  ckpt.params = topology_from_json(header.at("topology"));

  const std::uint64_t n = read_u64(in);
  if (static_cast<Index>(n) != ckpt.params.flat.size())
    throw std::runtime_error("load_checkpoint: weight count does not match topology in " +
                             path.string());
  in.read(reinterpret_cast<char*>(ckpt.params.flat.data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw std::runtime_error("load_checkpoint: truncated weights in " + path.string());
  ckpt.params.validate();
  if (!expect_role.empty() && ckpt.role != expect_role)
    throw std::runtime_error("load_checkpoint: expected role '" + expect_role + "', found '" +
                             ckpt.role + "' in " + path.string());
  return ckpt;
}

}  // namespace ractd
