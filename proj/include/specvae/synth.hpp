#pragma once

// Synthetic RF-interference spectrogram generator. Images are built in the
// dB domain: a Gaussian background around the configured noise floor plus a
// parametric interference template, combined in linear power and min-max
// normalized with dataset-global bounds so signal power survives
// normalization.

#include "specvae/common.hpp"

namespace specvae {

enum class InterferenceClass : int {
  noise = 0,
  tone = 1,
  chirp = 2,
  pulsed = 3,
  wideband_noise = 4,
  multitone = 5,
};

std::string to_string(InterferenceClass c);
InterferenceClass interference_class_from_string(const std::string& name);
std::vector<InterferenceClass> all_interference_classes();

struct InterferenceRecord {
  InterferenceClass class_id = InterferenceClass::noise;
  double power_db = 0.0;       // interference power in dB; ignored for noise
  double bandwidth_hz = 0.0;   // occupied fraction of the frequency band; 0 = class default
  double distance_m = 1.0;     // source distance; power falls off as 1/d^2
  std::uint64_t seed = 0;
  std::string provenance = "generated";  // "generated" | "synthetic-interpolated" | ...
};

struct Spectrogram {
  Imagef data;  // height x width, values in [0,1]
  InterferenceRecord meta;

  int height() const { return int(data.rows()); }
  int width() const { return int(data.cols()); }
};

struct DatasetConfig {
  int n_per_class = 25;
  int height = 64;
  int width = 64;
  std::vector<InterferenceClass> class_set = all_interference_classes();
  std::vector<double> power_bins = {-20.0, -10.0, 0.0};
  double noise_floor_db = -45.0;
  std::uint64_t rng_seed = 1;
};

// Normalization bounds shared by every sample of a dataset. vmax covers the
// strongest permitted interference (+10 dB) with headroom so no ridge pixel
// saturates; vmin sits below all but ~4-sigma noise excursions.
struct DbRange {
  double vmin;
  double vmax;
};
DbRange db_range_for(double noise_floor_db);

double power_min_db();  // -20
double power_max_db();  // +10

// Interference template alone, in linear power units (zero where absent),
// after distance attenuation. Exposes the closed-form 20*log10(d2/d1)
// attenuation relationship untouched by background noise.
Imagef interference_power(const InterferenceRecord& record, int height, int width);

Spectrogram synth_spectrogram(const InterferenceRecord& record, int height, int width,
                              double noise_floor_db = -45.0);

std::vector<std::pair<Spectrogram, InterferenceRecord>> make_dataset(const DatasetConfig& config);

void validate_spectrogram(const Spectrogram& s);

}  // namespace specvae
