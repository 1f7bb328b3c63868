#include "specvae/augment.hpp"

#include <map>

namespace specvae {
namespace {

double factor_value(const InterferenceRecord& rec, InterpolationFactor f) {
  switch (f) {
    case InterpolationFactor::power: return rec.power_db;
    case InterpolationFactor::bandwidth: return rec.bandwidth_hz;
    case InterpolationFactor::distance: return rec.distance_m;
  }
  throw std::invalid_argument("unknown interpolation factor");
}

}  // namespace

void validate(const InterpolationSpec& spec) {
  check(spec.lo < spec.hi, "interpolation: lo must be < hi");
  check(spec.n_steps >= 2, "interpolation: n_steps must be >= 2");
}

std::vector<double> interpolation_alphas(const InterpolationSpec& spec) {
  validate(spec);
  std::vector<double> alphas;
  for (int k = 0; k < spec.n_steps; ++k) {
    if (spec.skip_pattern == SkipPattern::every_second && k % 2 == 1) continue;
    alphas.push_back(double(k) / double(spec.n_steps - 1));
  }
  return alphas;
}

std::vector<std::pair<Spectrogram, InterferenceRecord>> augment_power_bins(
    VaeModelf& model, const std::vector<std::pair<Spectrogram, InterferenceRecord>>& dataset,
    const InterpolationSpec& spec, int pairs_per_class, std::uint64_t seed) {
  validate(spec);
  check(pairs_per_class >= 1, "augment: pairs_per_class must be >= 1");
  check(!dataset.empty(), "augment: empty dataset");

  // bucket sample indices by (class, endpoint); every class present in the
  // dataset must supply both endpoints
  std::map<InterferenceClass, std::pair<std::vector<int>, std::vector<int>>> buckets;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const InterferenceRecord& rec = dataset[i].second;
    buckets[rec.class_id];
    const double v = factor_value(rec, spec.factor);
    if (v == spec.lo) buckets[rec.class_id].first.push_back(int(i));
    if (v == spec.hi) buckets[rec.class_id].second.push_back(int(i));
  }
  for (const auto& [cls, bucket] : buckets) {
    if (bucket.first.empty())
      throw std::invalid_argument("augment: class '" + to_string(cls) +
                                  "' has no samples at lo endpoint");
    if (bucket.second.empty())
      throw std::invalid_argument("augment: class '" + to_string(cls) +
                                  "' has no samples at hi endpoint");
  }

  const std::vector<double> alphas = interpolation_alphas(spec);
  Rng rng(mix_seed(seed, 41));
  std::vector<std::pair<Spectrogram, InterferenceRecord>> out;
  out.reserve(buckets.size() * alphas.size() * std::size_t(pairs_per_class));

  for (const auto& [cls, bucket] : buckets) {
    for (int p = 0; p < pairs_per_class; ++p) {
      const int i_lo = bucket.first[rng.index(bucket.first.size())];
      const int i_hi = bucket.second[rng.index(bucket.second.size())];
      const std::vector<LatentParamsf> codes =
          encode(model, {dataset[std::size_t(i_lo)].first, dataset[std::size_t(i_hi)].first});
      std::vector<Vecf> zs;
      zs.reserve(alphas.size());
      for (double a : alphas)
        zs.push_back(interpolate_latent(codes[0].mu, codes[1].mu, a));
      std::vector<Spectrogram> decoded = decode(model, zs);
      for (std::size_t k = 0; k < alphas.size(); ++k) {
        InterferenceRecord rec = dataset[std::size_t(i_lo)].second;
        const double v = (1.0 - alphas[k]) * spec.lo + alphas[k] * spec.hi;
        switch (spec.factor) {
          case InterpolationFactor::power: rec.power_db = v; break;
          case InterpolationFactor::bandwidth: rec.bandwidth_hz = v; break;
          case InterpolationFactor::distance: rec.distance_m = v; break;
        }
        rec.provenance = "synthetic-interpolated";
        rec.seed = mix_seed(seed, out.size());
        decoded[k].meta = rec;
        out.emplace_back(std::move(decoded[k]), std::move(rec));
      }
    }
  }
  return out;
}

InrHistogram inr_histogram(const Imagef& x, int n_bins) {
  check(x.size() > 0, "inr_histogram: empty input");
  check(x.allFinite(), "inr_histogram: non-finite input");
  check(n_bins >= 2, "inr_histogram: need at least two bins");

  InrHistogram h;
  const float lo = x.minCoeff();
  const float hi = x.maxCoeff();
  h.bin_edges.resize(n_bins + 1);
  for (int i = 0; i <= n_bins; ++i)
    h.bin_edges(i) = lo + (hi - lo) * float(i) / float(n_bins);
  h.counts.assign(std::size_t(n_bins), 0);

  if (hi - lo <= 0.0f) {
    // degenerate constant image: one population, zero separation
    h.counts[0] = int(x.size());
    h.noise_mean = h.interference_mean = double(lo);
    h.delta = 0.0;
    h.single_population = true;
    return h;
  }

  const double scale = double(n_bins) / (double(hi) - double(lo));
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    int b = int((double(x.data()[i]) - double(lo)) * scale);
    b = std::clamp(b, 0, n_bins - 1);
    h.counts[std::size_t(b)] += 1;
  }

  // between-class-variance threshold over the histogram
  const double total = double(x.size());
  double sum_all = 0.0;
  std::vector<double> centers(static_cast<std::size_t>(n_bins));
  for (int b = 0; b < n_bins; ++b) {
    centers[std::size_t(b)] = 0.5 * (double(h.bin_edges(b)) + double(h.bin_edges(b + 1)));
    sum_all += h.counts[std::size_t(b)] * centers[std::size_t(b)];
  }
  double best_var = -1.0;
  int best_t = -1;
  double w0 = 0.0, sum0 = 0.0;
  for (int t = 0; t + 1 < n_bins; ++t) {
    w0 += h.counts[std::size_t(t)];
    sum0 += h.counts[std::size_t(t)] * centers[std::size_t(t)];
    const double w1 = total - w0;
    if (w0 <= 0.0 || w1 <= 0.0) continue;
    const double m0 = sum0 / w0;
    const double m1 = (sum_all - sum0) / w1;
    const double var = w0 * w1 * (m1 - m0) * (m1 - m0);
    if (var > best_var) {
      best_var = var;
      best_t = t;
    }
  }
  if (best_t < 0) {
    h.noise_mean = h.interference_mean = sum_all / total;
    h.delta = 0.0;
    h.single_population = true;
    return h;
  }

  const double threshold = double(h.bin_edges(best_t + 1));
  double sum_lo = 0.0, sum_hi = 0.0;
  long n_lo = 0, n_hi = 0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = double(x.data()[i]);
    if (v <= threshold) {
      sum_lo += v;
      ++n_lo;
    } else {
      sum_hi += v;
      ++n_hi;
    }
  }
  if (n_lo == 0 || n_hi == 0) {
    h.noise_mean = h.interference_mean = sum_all / total;
    h.delta = 0.0;
    h.single_population = true;
    return h;
  }
  h.noise_mean = sum_lo / double(n_lo);
  h.interference_mean = sum_hi / double(n_hi);
  h.delta = h.interference_mean - h.noise_mean;
  return h;
}

std::vector<Spectrogram> latent_traversal(VaeModelf& model, const Spectrogram& x,
                                          int dim_index, const std::vector<double>& values) {
  const int d = model.config().latent_dim;
  check(dim_index >= 0 && dim_index < d, "latent_traversal: dim_index out of range");
  check(!values.empty(), "latent_traversal: empty value list");
  const std::vector<LatentParamsf> p = encode(model, {x});
  std::vector<Vecf> zs;
  zs.reserve(values.size());
  for (double v : values) {
    Vecf z = p[0].mu;
    z(dim_index) = float(v);
    zs.push_back(std::move(z));
  }
  return decode(model, zs);
}

}  // namespace specvae
