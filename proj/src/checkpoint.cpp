#include "specvae/checkpoint.hpp"

#include <json.hpp>

#include <cstring>
#include <fstream>

namespace specvae {
namespace {

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t read_u32(std::istream& is, const std::string& field) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  check(bool(is), "checkpoint: truncated " + field);
  return v;
}

void collect_vae(VaeModelf& model, nn::ParamList<float>& params, BufferListf& buffers) {
  model.net.collect(params);
  model.net.collect_buffers(buffers);
  if (model.disc) model.disc->collect("disc", params);
}

}  // namespace

std::uint32_t model_checksum(const nn::ParamList<float>& params,
                             const BufferListf& buffers) {
  std::uint32_t h = 0x811c9dc5u;
  for (const auto& p : params)
    h = fnv1a32(p.value->data(), sizeof(float) * std::size_t(p.value->size()), h);
  for (const auto& [name, value] : buffers)
    h = fnv1a32(value->data(), sizeof(float) * std::size_t(value->size()), h);
  return h;
}

std::uint32_t model_checksum(VaeModelf& model) {
  nn::ParamList<float> params;
  BufferListf buffers;
  collect_vae(model, params, buffers);
  return model_checksum(params, buffers);
}

void save_blocks(const std::filesystem::path& path, const std::string& desc_json,
                 const nn::ParamList<float>& params, const BufferListf& buffers) {
  std::ofstream os(path, std::ios::binary);
  check(bool(os), "cannot open for writing: " + path.string());
  os.write("SVCK", 4);
  write_u32(os, kCheckpointVersion);
  write_u32(os, std::uint32_t(desc_json.size()));
  os.write(desc_json.data(), std::streamsize(desc_json.size()));
  for (const auto& p : params)
    os.write(reinterpret_cast<const char*>(p.value->data()),
             std::streamsize(sizeof(float)) * p.value->size());
  for (const auto& [name, value] : buffers)
    os.write(reinterpret_cast<const char*>(value->data()),
             std::streamsize(sizeof(float)) * value->size());
  check(bool(os), "checkpoint write failed: " + path.string());
}

std::string load_desc(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  check(bool(is), "cannot open: " + path.string());
  char magic[4] = {};
  is.read(magic, 4);
  check(bool(is) && std::memcmp(magic, "SVCK", 4) == 0,
        "checkpoint: bad magic in " + path.string());
  const std::uint32_t version = read_u32(is, "version");
  check(version == kCheckpointVersion,
        "checkpoint: unsupported version " + std::to_string(version));
  const std::uint32_t len = read_u32(is, "descriptor length");
  std::string desc(len, '\0');
  is.read(desc.data(), len);
  check(bool(is), "checkpoint: truncated descriptor");
  return desc;
}

void load_blocks(const std::filesystem::path& path, const nn::ParamList<float>& params,
                 const BufferListf& buffers) {
  std::ifstream is(path, std::ios::binary);
  check(bool(is), "cannot open: " + path.string());
  is.seekg(8);
  const std::uint32_t len = read_u32(is, "descriptor length");
  is.seekg(12 + std::streamoff(len));
  for (const auto& p : params) {
    is.read(reinterpret_cast<char*>(p.value->data()),
            std::streamsize(sizeof(float)) * p.value->size());
    check(bool(is), "checkpoint: truncated block '" + p.name + "'");
  }
  for (const auto& [name, value] : buffers) {
    is.read(reinterpret_cast<char*>(value->data()),
            std::streamsize(sizeof(float)) * value->size());
    check(bool(is), "checkpoint: truncated buffer '" + name + "'");
  }
  // a longer file means the architecture descriptor does not match the model
  is.peek();
  check(is.eof(), "checkpoint: trailing bytes after parameter blocks");
}

std::string vae_desc_json(const VaeConfig& cfg) {
  nlohmann::ordered_json j;
  j["kind"] = "vae";
  j["height"] = cfg.height;
  j["width"] = cfg.width;
  j["latent_dim"] = cfg.latent_dim;
  j["base_channels"] = cfg.base_channels;
  j["encoder"] = cfg.encoder == EncoderKind::conv_stack ? "conv_stack" : "residual";
  j["beta"] = cfg.beta;
  j["gamma"] = cfg.gamma;
  j["disc_layers"] = cfg.disc_layers;
  j["disc_width"] = cfg.disc_width;
  return j.dump();
}

VaeConfig vae_config_from_desc(const std::string& desc_json) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(desc_json);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("checkpoint descriptor: ") + e.what());
  }
  check(j.value("kind", "") == "vae", "checkpoint: not a vae checkpoint");
  VaeConfig cfg;
  cfg.height = j.at("height").get<int>();
  cfg.width = j.at("width").get<int>();
  cfg.latent_dim = j.at("latent_dim").get<int>();
  cfg.base_channels = j.at("base_channels").get<int>();
  cfg.encoder = j.at("encoder").get<std::string>() == "residual" ? EncoderKind::residual
                                                                 : EncoderKind::conv_stack;
  cfg.beta = j.at("beta").get<double>();
  cfg.gamma = j.at("gamma").get<double>();
  cfg.disc_layers = j.at("disc_layers").get<int>();
  cfg.disc_width = j.at("disc_width").get<int>();
  return cfg;
}

void save_vae(const std::filesystem::path& path, VaeModelf& model) {
  nn::ParamList<float> params;
  BufferListf buffers;
  collect_vae(model, params, buffers);
  save_blocks(path, vae_desc_json(model.config()), params, buffers);
}

VaeModelf load_vae(const std::filesystem::path& path) {
  const VaeConfig cfg = vae_config_from_desc(load_desc(path));
  Rng rng(0);  // weights immediately overwritten
  VaeModelf model(cfg, rng);
  nn::ParamList<float> params;
  BufferListf buffers;
  collect_vae(model, params, buffers);
  load_blocks(path, params, buffers);
  model.net.set_training(false);
  return model;
}

}  // namespace specvae
