#pragma once

// Lossy compression codec over trained encoders. Wire frame ("LATC"):
//   magic "LATC" (4) | u8 version | u8 mode | u16 d | u32 height | u32 width
//   | u32 model_id | payload as little-endian f32
// Header is 20 bytes; total frame length = 20 + 4 * payload_len. A file of
// concatenated frames is a valid stream.

#include "specvae/vae.hpp"

namespace specvae {

enum class LatentMode : std::uint8_t {
  mu = 0,
  mu_concat_sigma = 1,  // payload stores sigma (standard deviation), not log-variance
  reparam = 2,
};

std::string to_string(LatentMode mode);
LatentMode latent_mode_from_string(const std::string& name);

constexpr std::uint8_t kLatcVersion = 1;
constexpr std::size_t kLatcHeaderBytes = 20;

struct LatentCode {
  Vecf payload;            // length d (mu, reparam) or 2d (mu_concat_sigma)
  LatentMode mode = LatentMode::mu;
  std::uint32_t height = 0;  // source spectrogram dims
  std::uint32_t width = 0;
  std::uint32_t model_id = 0;  // checksum of the producing checkpoint

  int latent_dim() const {
    return mode == LatentMode::mu_concat_sigma ? int(payload.size()) / 2
                                               : int(payload.size());
  }
};

LatentCode make_code(const LatentParamsf& p, LatentMode mode, std::uint64_t noise_seed,
                     int height, int width, std::uint32_t model_id);

LatentCode compress(VaeModelf& model, const Spectrogram& x, LatentMode mode,
                    std::uint64_t noise_seed);
std::vector<LatentCode> compress_batch(VaeModelf& model, const std::vector<Spectrogram>& xs,
                                       LatentMode mode, std::uint64_t noise_seed);

// Element-count ratio of the raw spectrogram to the latent payload; both are
// 32-bit floats so the element ratio equals the byte ratio.
double compression_rate(int height, int width, int payload_len);

std::string serialize(const LatentCode& code);
LatentCode deserialize(const std::string& bytes);

// Streams are plain concatenations of frames.
std::string serialize_stream(const std::vector<LatentCode>& codes);
std::vector<LatentCode> deserialize_stream(const std::string& bytes);

}  // namespace specvae
