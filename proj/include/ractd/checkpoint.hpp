// Model checkpoints: a small JSON header (role, step, config hash, topology,
// free-form metadata) followed by the raw little-endian weight bytes.
// Loading what save wrote reproduces the weights bit-exactly.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "ractd/network.hpp"

namespace ractd {

struct Checkpoint {
  std::string role;  // "teacher" | "student" | "reward" | "reverse-dynamics"
  std::int64_t step = 0;
  std::string config_hash;
  nlohmann::json meta;
  NetworkParams params;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

// Throws on a bad magic/version, truncated file, or topology/size mismatch.
// If expect_role is non-empty, the stored role must match.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::string& expect_role = "");

nlohmann::json topology_to_json(const NetworkParams& p);
NetworkParams topology_from_json(const nlohmann::json& j);

}  // namespace ractd
