#include "specvae/synth.hpp"

namespace specvae {
namespace {

constexpr double kNoiseSigmaDb = 2.0;

// Class-specific template geometry, as fractions of the frequency axis.
struct ClassShape {
  double center;     // default ridge center (frequency fraction)
  double bandwidth;  // default occupied fraction of the band
};

ClassShape shape_for(InterferenceClass c) {
  switch (c) {
    case InterferenceClass::tone: return {0.25, 0.04};
    case InterferenceClass::chirp: return {0.50, 0.04};
    case InterferenceClass::pulsed: return {0.60, 0.04};
    case InterferenceClass::wideband_noise: return {0.82, 0.24};
    case InterferenceClass::multitone: return {0.45, 0.03};
    default: return {0.0, 0.0};
  }
}

double gaussian_ridge(double y, double center, double half_width) {
  const double u = (y - center) / half_width;
  return std::exp(-0.5 * u * u);
}

}  // namespace

std::string to_string(InterferenceClass c) {
  switch (c) {
    case InterferenceClass::noise: return "noise";
    case InterferenceClass::tone: return "tone";
    case InterferenceClass::chirp: return "chirp";
    case InterferenceClass::pulsed: return "pulsed";
    case InterferenceClass::wideband_noise: return "wideband-noise";
    case InterferenceClass::multitone: return "multitone";
  }
  throw std::invalid_argument("unknown class_id value " + std::to_string(int(c)));
}

InterferenceClass interference_class_from_string(const std::string& name) {
  for (InterferenceClass c : all_interference_classes())
    if (to_string(c) == name) return c;
  throw std::invalid_argument("unknown class_id '" + name + "'");
}

std::vector<InterferenceClass> all_interference_classes() {
  return {InterferenceClass::noise,  InterferenceClass::tone,
          InterferenceClass::chirp,  InterferenceClass::pulsed,
          InterferenceClass::wideband_noise, InterferenceClass::multitone};
}

double power_min_db() { return -20.0; }
double power_max_db() { return 10.0; }

DbRange db_range_for(double noise_floor_db) {
  return {noise_floor_db - 8.0, power_max_db() + 3.0};
}

Imagef interference_power(const InterferenceRecord& record, int height, int width) {
  check(height >= 8 && width >= 8, "interference_power: dims must be >= 8");
  check(std::isfinite(record.power_db) && std::isfinite(record.bandwidth_hz) &&
            std::isfinite(record.distance_m),
        "interference_power: non-finite record parameter");
  check(record.distance_m >= 0.0, "interference_power: negative distance");
  check(record.bandwidth_hz >= 0.0, "interference_power: negative bandwidth");
  to_string(record.class_id);  // rejects out-of-range enum values

  Imagef tmpl = Imagef::Zero(height, width);
  if (record.class_id == InterferenceClass::noise) return tmpl;

  const ClassShape shape = shape_for(record.class_id);
  const double bw = record.bandwidth_hz > 0.0 ? record.bandwidth_hz : shape.bandwidth;
  const double half_width = std::max(bw / 2.0, 0.5 / height);

  // Template geometry stream; independent of power/distance so those factors
  // act as pure scalar gains on a fixed shape.
  Rng rng(mix_seed(record.seed, 0xA11CE));
  const double jitter = rng.uniform(-0.08, 0.08);
  const double center = shape.center + jitter;

  for (int yi = 0; yi < height; ++yi) {
    const double y = (yi + 0.5) / height;
    for (int xi = 0; xi < width; ++xi) {
      const double x = (xi + 0.5) / width;
      double t = 0.0;
      switch (record.class_id) {
        case InterferenceClass::tone:
          t = gaussian_ridge(y, center, half_width);
          break;
        case InterferenceClass::chirp: {
          // linear frequency ramp across the full time axis
          const double sweep = 0.6;
          const double c = center - sweep / 2.0 + sweep * x;
          t = gaussian_ridge(y, c, half_width);
          break;
        }
        case InterferenceClass::pulsed: {
          // time-gated ridge, ~50% duty cycle over four periods
          const double phase = std::fmod(x * 4.0, 1.0);
          t = phase < 0.5 ? gaussian_ridge(y, center, half_width) : 0.0;
          break;
        }
        case InterferenceClass::wideband_noise:
          t = std::abs(y - center) <= bw / 2.0 ? 1.0 : 0.0;
          break;
        case InterferenceClass::multitone: {
          for (double offset : {-0.25, 0.0, 0.25})
            t += gaussian_ridge(y, center + offset, half_width);
          t = std::min(t, 1.0);
          break;
        }
        default:
          break;
      }
      tmpl(yi, xi) = float(t);
    }
  }

  if (record.class_id == InterferenceClass::wideband_noise) {
    // random texture inside the band; support itself stays deterministic in shape
    for (int yi = 0; yi < height; ++yi)
      for (int xi = 0; xi < width; ++xi)
        if (tmpl(yi, xi) > 0.0f) tmpl(yi, xi) = float(rng.uniform(0.5, 1.0));
  }

  // inverse-square law: power falls by 20*log10(d) dB relative to 1 m
  const double atten_db = 20.0 * std::log10(std::max(record.distance_m, 1.0));
  const double gain = std::pow(10.0, (record.power_db - atten_db) / 10.0);
  return (tmpl.array() * float(gain)).matrix();
}

Spectrogram synth_spectrogram(const InterferenceRecord& record, int height, int width,
                              double noise_floor_db) {
  check(std::isfinite(noise_floor_db), "synth_spectrogram: non-finite noise floor");
  const Imagef interf = interference_power(record, height, width);

  Rng noise_rng(mix_seed(record.seed, 0xB4C6));
  const DbRange range = db_range_for(noise_floor_db);
  const double inv_span = 1.0 / (range.vmax - range.vmin);

  Spectrogram out;
  out.meta = record;
  out.data.resize(height, width);
  for (int yi = 0; yi < height; ++yi) {
    for (int xi = 0; xi < width; ++xi) {
      const double bg_db = noise_floor_db + kNoiseSigmaDb * noise_rng.gaussian();
      const double linear = std::pow(10.0, bg_db / 10.0) + double(interf(yi, xi));
      const double db = 10.0 * std::log10(linear);
      const double v = (db - range.vmin) * inv_span;
      out.data(yi, xi) = float(std::clamp(v, 0.0, 1.0));
    }
  }
  return out;
}

std::vector<std::pair<Spectrogram, InterferenceRecord>> make_dataset(const DatasetConfig& config) {
  check(!config.class_set.empty(), "make_dataset: empty class_set");
  check(!config.power_bins.empty(), "make_dataset: empty power_bins");
  check(config.n_per_class >= 1, "make_dataset: n_per_class must be >= 1");
  check(config.height >= 8 && config.width >= 8, "make_dataset: dims must be >= 8");
  check(std::is_sorted(config.power_bins.begin(), config.power_bins.end()),
        "make_dataset: power_bins must be sorted ascending");

  std::vector<std::pair<Spectrogram, InterferenceRecord>> out;
  out.reserve(std::size_t(config.n_per_class) * config.class_set.size() *
              config.power_bins.size());
  std::uint64_t index = 0;
  for (InterferenceClass c : config.class_set) {
    for (double power : config.power_bins) {
      for (int i = 0; i < config.n_per_class; ++i, ++index) {
        InterferenceRecord rec;
        rec.class_id = c;
        rec.power_db = power;
        rec.bandwidth_hz = 0.0;  // class default
        rec.distance_m = 1.0;
        rec.seed = mix_seed(config.rng_seed, index);
        Spectrogram s = synth_spectrogram(rec, config.height, config.width,
                                          config.noise_floor_db);
        out.emplace_back(std::move(s), rec);
      }
    }
  }
  return out;
}

void validate_spectrogram(const Spectrogram& s) {
  check(s.data.size() > 0, "spectrogram: empty data");
  check(s.data.allFinite(), "spectrogram: non-finite values");
  check(s.data.minCoeff() >= 0.0f && s.data.maxCoeff() <= 1.0f,
        "spectrogram: values outside [0,1]");
}

}  // namespace specvae
