#pragma once

// Checkpoint file: magic "SVCK", u32 version, u32 descriptor length, JSON
// architecture descriptor, then raw little-endian f32 parameter blocks in
// declaration order followed by batch-norm running-stat buffers.

#include "specvae/vae.hpp"

#include <filesystem>

namespace specvae {

constexpr std::uint32_t kCheckpointVersion = 1;

using BufferListf = std::vector<std::pair<std::string, Matf*>>;

// Checksum over the concatenated parameter + buffer bytes; stamps LatentCodes.
std::uint32_t model_checksum(const nn::ParamList<float>& params,
                             const BufferListf& buffers);
std::uint32_t model_checksum(VaeModelf& model);

void save_blocks(const std::filesystem::path& path, const std::string& desc_json,
                 const nn::ParamList<float>& params, const BufferListf& buffers);
std::string load_desc(const std::filesystem::path& path);
void load_blocks(const std::filesystem::path& path, const nn::ParamList<float>& params,
                 const BufferListf& buffers);

void save_vae(const std::filesystem::path& path, VaeModelf& model);
VaeModelf load_vae(const std::filesystem::path& path);

std::string vae_desc_json(const VaeConfig& cfg);
VaeConfig vae_config_from_desc(const std::string& desc_json);

}  // namespace specvae
