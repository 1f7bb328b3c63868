#pragma once

// Latent-interpolation data augmentation and interference-to-noise-ratio
// diagnostics: codes of endpoint samples are linearly mixed per interpolation
// step and decoded into new labeled samples; INR histograms split pixels into
// noise/interference populations with a between-class-variance threshold.

#include "specvae/vae.hpp"

namespace specvae {

// z = (1 - alpha) * z1 + alpha * z2
template <class S>
VecX<S> interpolate_latent(const VecX<S>& z1, const VecX<S>& z2, double alpha) {
  check(z1.size() == z2.size(), "interpolate_latent: length mismatch");
  check(alpha >= 0.0 && alpha <= 1.0, "interpolate_latent: alpha outside [0,1]");
  return (S(1) - S(alpha)) * z1 + S(alpha) * z2;
}

enum class InterpolationFactor { power, bandwidth, distance };
enum class SkipPattern { all, every_second };

struct InterpolationSpec {
  InterpolationFactor factor = InterpolationFactor::power;
  double lo = -20.0;
  double hi = 0.0;
  int n_steps = 5;  // evenly spaced alphas including both endpoints
  SkipPattern skip_pattern = SkipPattern::all;
  bool per_class = true;
};

void validate(const InterpolationSpec& spec);

// Alphas actually decoded: all n_steps, or every second one starting at 0.
std::vector<double> interpolation_alphas(const InterpolationSpec& spec);

// For each class present in the dataset: draws pairs_per_class random pairs
// of samples whose factor equals spec.lo and spec.hi, mixes their mean codes
// at each selected alpha, decodes, and labels the result with the
// interpolated factor value. Output count = classes * selected_steps * pairs.
std::vector<std::pair<Spectrogram, InterferenceRecord>> augment_power_bins(
    VaeModelf& model, const std::vector<std::pair<Spectrogram, InterferenceRecord>>& dataset,
    const InterpolationSpec& spec, int pairs_per_class, std::uint64_t seed);

struct InrHistogram {
  Vecf bin_edges;  // n_bins + 1 edges spanning [min, max]
  std::vector<int> counts;
  double noise_mean = 0.0;
  double interference_mean = 0.0;
  double delta = 0.0;  // interference_mean - noise_mean
  bool single_population = false;
};

InrHistogram inr_histogram(const Imagef& x, int n_bins = 64);
inline InrHistogram inr_histogram(const Spectrogram& x, int n_bins = 64) {
  return inr_histogram(x.data, n_bins);
}

// Encodes x, replaces latent coordinate dim_index with each value, decodes.
std::vector<Spectrogram> latent_traversal(VaeModelf& model, const Spectrogram& x,
                                          int dim_index, const std::vector<double>& values);

}  // namespace specvae
