#include "specvae/codec.hpp"

#include "specvae/checkpoint.hpp"

#include <cstring>

namespace specvae {
namespace {

template <class T>
void append_raw(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <class T>
T read_raw(const std::string& bytes, std::size_t offset) {
  T v;
  std::memcpy(&v, bytes.data() + offset, sizeof(T));
  return v;
}

}  // namespace

std::string to_string(LatentMode mode) {
  switch (mode) {
    case LatentMode::mu: return "mu";
    case LatentMode::mu_concat_sigma: return "mu_concat_sigma";
    case LatentMode::reparam: return "reparam";
  }
  throw std::invalid_argument("unknown mode value " + std::to_string(int(mode)));
}

LatentMode latent_mode_from_string(const std::string& name) {
  if (name == "mu") return LatentMode::mu;
  if (name == "mu_concat_sigma" || name == "mu_sigma") return LatentMode::mu_concat_sigma;
  if (name == "reparam") return LatentMode::reparam;
  throw std::invalid_argument("unknown mode '" + name + "'");
}

LatentCode make_code(const LatentParamsf& p, LatentMode mode, std::uint64_t noise_seed,
                     int height, int width, std::uint32_t model_id) {
  check(p.mu.size() == p.log_var.size(), "compress: mu/log_var length mismatch");
  const int d = int(p.mu.size());
  LatentCode code;
  code.mode = mode;
  code.height = std::uint32_t(height);
  code.width = std::uint32_t(width);
  code.model_id = model_id;
  switch (mode) {
    case LatentMode::mu:
      code.payload = p.mu;
      break;
    case LatentMode::mu_concat_sigma:
      code.payload.resize(2 * d);
      code.payload.head(d) = p.mu;
      code.payload.tail(d) = (0.5f * p.log_var.array()).exp().matrix();
      break;
    case LatentMode::reparam: {
      Rng rng(noise_seed);
      const Vecf noise = rng.gaussian_matrix<float>(d, 1).col(0);
      code.payload = reparameterize(p, noise);
      break;
    }
  }
  check(code.payload.allFinite(), "compress: non-finite payload");
  return code;
}

LatentCode compress(VaeModelf& model, const Spectrogram& x, LatentMode mode,
                    std::uint64_t noise_seed) {
  const std::vector<LatentParamsf> p = encode(model, {x});
  return make_code(p[0], mode, noise_seed, x.height(), x.width(), model_checksum(model));
}

std::vector<LatentCode> compress_batch(VaeModelf& model, const std::vector<Spectrogram>& xs,
                                       LatentMode mode, std::uint64_t noise_seed) {
  check(!xs.empty(), "compress: empty batch");
  const std::uint32_t id = model_checksum(model);
  const std::vector<LatentParamsf> params = encode(model, xs);
  std::vector<LatentCode> out;
  out.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i)
    out.push_back(make_code(params[i], mode, mix_seed(noise_seed, i), xs[i].height(),
                            xs[i].width(), id));
  return out;
}

double compression_rate(int height, int width, int payload_len) {
  check(height >= 1 && width >= 1, "compression_rate: bad dims");
  check(payload_len >= 1, "compression_rate: payload length must be >= 1");
  return double(height) * double(width) / double(payload_len);
}

std::string serialize(const LatentCode& code) {
  check(code.payload.size() >= 1, "serialize: empty payload");
  check(code.payload.allFinite(), "serialize: non-finite payload");
  const int d = code.latent_dim();
  check(d >= 1 && d <= 0xFFFF, "serialize: latent dim out of range");
  if (code.mode == LatentMode::mu_concat_sigma)
    check(code.payload.size() == 2 * d, "serialize: odd payload for mu_concat_sigma");
  std::string out;
  out.reserve(kLatcHeaderBytes + 4 * std::size_t(code.payload.size()));
  out.append("LATC", 4);
  append_raw<std::uint8_t>(out, kLatcVersion);
  append_raw<std::uint8_t>(out, std::uint8_t(code.mode));
  append_raw<std::uint16_t>(out, std::uint16_t(d));
  append_raw<std::uint32_t>(out, code.height);
  append_raw<std::uint32_t>(out, code.width);
  append_raw<std::uint32_t>(out, code.model_id);
  out.append(reinterpret_cast<const char*>(code.payload.data()),
             4 * std::size_t(code.payload.size()));
  return out;
}

LatentCode deserialize(const std::string& bytes) {
  check(bytes.size() >= kLatcHeaderBytes,
        "deserialize: truncated header (" + std::to_string(bytes.size()) +
            " of 20 bytes)");
  check(std::memcmp(bytes.data(), "LATC", 4) == 0, "deserialize: bad magic at byte 0");
  const auto version = read_raw<std::uint8_t>(bytes, 4);
  check(version == kLatcVersion,
        "deserialize: unsupported version " + std::to_string(version) + " at byte 4");
  const auto mode_byte = read_raw<std::uint8_t>(bytes, 5);
  check(mode_byte <= std::uint8_t(LatentMode::reparam),
        "deserialize: unknown mode " + std::to_string(mode_byte) + " at byte 5");
  LatentCode code;
  code.mode = LatentMode(mode_byte);
  const auto d = read_raw<std::uint16_t>(bytes, 6);
  check(d >= 1, "deserialize: zero latent dim at byte 6");
  code.height = read_raw<std::uint32_t>(bytes, 8);
  code.width = read_raw<std::uint32_t>(bytes, 12);
  code.model_id = read_raw<std::uint32_t>(bytes, 16);
  const std::size_t payload_len =
      code.mode == LatentMode::mu_concat_sigma ? 2u * d : std::size_t(d);
  const std::size_t expect = kLatcHeaderBytes + 4 * payload_len;
  check(bytes.size() == expect,
        "deserialize: length mismatch, expected " + std::to_string(expect) +
            " bytes, got " + std::to_string(bytes.size()));
  code.payload.resize(Eigen::Index(payload_len));
  std::memcpy(code.payload.data(), bytes.data() + kLatcHeaderBytes, 4 * payload_len);
  check(code.payload.allFinite(), "deserialize: non-finite payload");
  return code;
}

std::string serialize_stream(const std::vector<LatentCode>& codes) {
  std::string out;
  for (const auto& c : codes) out += serialize(c);
  return out;
}

std::vector<LatentCode> deserialize_stream(const std::string& bytes) {
  std::vector<LatentCode> out;
  std::size_t off = 0;
  while (off < bytes.size()) {
    check(bytes.size() - off >= kLatcHeaderBytes,
          "stream: truncated header at byte " + std::to_string(off));
    const auto mode_byte = read_raw<std::uint8_t>(bytes, off + 5);
    check(mode_byte <= std::uint8_t(LatentMode::reparam),
          "stream: unknown mode at byte " + std::to_string(off + 5));
    const auto d = read_raw<std::uint16_t>(bytes, off + 6);
    const std::size_t payload_len =
        LatentMode(mode_byte) == LatentMode::mu_concat_sigma ? 2u * d : std::size_t(d);
    const std::size_t frame = kLatcHeaderBytes + 4 * payload_len;
    check(bytes.size() - off >= frame,
          "stream: truncated frame at byte " + std::to_string(off));
    out.push_back(deserialize(bytes.substr(off, frame)));
    off += frame;
  }
  return out;
}

}  // namespace specvae
