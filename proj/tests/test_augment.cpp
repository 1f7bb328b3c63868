#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "specvae/augment.hpp"
#include "specvae/synth.hpp"
#include "specvae/vae_train.hpp"

using namespace specvae;

namespace {

// mean of the brightest 5% of pixels; tracks interference ridge strength
double top_energy(const Imagef& img) {
  std::vector<float> v(img.data(), img.data() + img.size());
  auto nth = v.begin() + std::ptrdiff_t(v.size() * 95 / 100);
  std::nth_element(v.begin(), nth, v.end());
  double s = 0.0;
  int n = 0;
  for (auto it = nth; it != v.end(); ++it) {
    s += double(*it);
    ++n;
  }
  return s / n;
}

template <class Fn>
void expect_throw_contains(Fn&& fn, const std::string& substr) {
  try {
    fn();
    FAIL_CHECK("expected an exception mentioning '" << substr << "'");
  } catch (const std::exception& e) {
    INFO("message: " << e.what());
    CHECK(std::string(e.what()).find(substr) != std::string::npos);
  }
}

// Shared backbone: three ridge-geometry classes over three power bins and a
// factor-VAE trained long enough that decoded ridge strength tracks power.
struct AugFixture {
  std::vector<std::pair<Spectrogram, InterferenceRecord>> data;
  TrainedVae vae;

  static AugFixture& get() {
    static AugFixture f = build();
    return f;
  }

 private:
  static AugFixture build() {
    AugFixture f;
    DatasetConfig dc;
    dc.n_per_class = 12;
    dc.height = 32;
    dc.width = 32;
    dc.class_set = {InterferenceClass::tone, InterferenceClass::chirp,
                    InterferenceClass::pulsed};
    dc.power_bins = {-20.0, -10.0, 0.0};
    dc.rng_seed = 31;
    f.data = make_dataset(dc);

    FactorVaeTrainConfig vc;
    vc.vae.height = 32;
    vc.vae.width = 32;
    vc.vae.latent_dim = 8;
    vc.vae.base_channels = 8;
    vc.vae.gamma = 5.0;
    vc.vae.disc_layers = 4;
    vc.vae.disc_width = 256;
    vc.epochs = 120;
    vc.batch_size = 24;
    vc.lr = 1e-3;
    vc.seed = 13;
    std::vector<Spectrogram> imgs;
    for (const auto& [s, r] : f.data) imgs.push_back(s);
    f.vae = train_factorvae(imgs, vc);
    return f;
  }
};

}  // namespace

TEST_CASE("latent interpolation is exact at endpoints and affine in alpha") {
  Rng rng(3);
  const Vecf z1 = rng.gaussian_matrix<float>(6, 1);
  const Vecf z2 = rng.gaussian_matrix<float>(6, 1);

  CHECK(interpolate_latent(z1, z2, 0.0).isApprox(z1, 0.0f));
  CHECK(interpolate_latent(z1, z2, 1.0).isApprox(z2, 0.0f));

  Vecf a(2), b(2);
  a << 0.0f, 0.0f;
  b << 2.0f, 4.0f;
  const Vecf mid = interpolate_latent(a, b, 0.5);
  CHECK(mid[0] == 1.0f);
  CHECK(mid[1] == 2.0f);

  // affine map: f(s) + f(t) - f(s + t) = z1 for any s + t <= 1
  for (int trial = 0; trial < 20; ++trial) {
    const double s = rng.uniform(0.0, 0.5);
    const double t = rng.uniform(0.0, 0.5);
    const Vecf lhs = interpolate_latent(z1, z2, s) + interpolate_latent(z1, z2, t) -
                     interpolate_latent(z1, z2, s + t);
    CHECK((lhs - z1).cwiseAbs().maxCoeff() < 1e-5f);
  }

  // double-precision instantiation shares the template
  VecX<double> d1 = VecX<double>::Ones(3), d2 = VecX<double>::Zero(3);
  CHECK(interpolate_latent(d1, d2, 0.25)(0) == doctest::Approx(0.75).epsilon(1e-12));

  CHECK_THROWS_AS((void)interpolate_latent(z1, z2, -0.1), std::invalid_argument);
  CHECK_THROWS_AS((void)interpolate_latent(z1, z2, 1.1), std::invalid_argument);
  Vecf short_z = Vecf::Zero(5);
  CHECK_THROWS_AS((void)interpolate_latent(z1, short_z, 0.5), std::invalid_argument);
}

TEST_CASE("interpolation alphas honor the step count and skip pattern") {
  InterpolationSpec spec;
  spec.lo = -20.0;
  spec.hi = 0.0;
  spec.n_steps = 5;
  const std::vector<double> all = interpolation_alphas(spec);
  REQUIRE(all.size() == 5);
  for (int k = 0; k < 5; ++k) CHECK(all[std::size_t(k)] == doctest::Approx(k / 4.0).epsilon(1e-12));

  spec.skip_pattern = SkipPattern::every_second;
  const std::vector<double> skipped = interpolation_alphas(spec);
  REQUIRE(skipped.size() == 3);  // keeps k = 0, 2, 4
  CHECK(skipped[0] == 0.0);
  CHECK(skipped[1] == 0.5);
  CHECK(skipped[2] == 1.0);

  spec.skip_pattern = SkipPattern::all;
  spec.n_steps = 2;
  const std::vector<double> pair = interpolation_alphas(spec);
  REQUIRE(pair.size() == 2);
  CHECK(pair[0] == 0.0);
  CHECK(pair[1] == 1.0);

  InterpolationSpec bad = spec;
  bad.hi = bad.lo;
  CHECK_THROWS_AS((void)interpolation_alphas(bad), std::invalid_argument);
  bad = spec;
  bad.n_steps = 1;
  CHECK_THROWS_AS((void)interpolation_alphas(bad), std::invalid_argument);
}

TEST_CASE("inr histogram separates two pixel populations") {
  // 30% bright pixels at 0.8 over a 0.2 floor
  Imagef two_level = Imagef::Constant(20, 20, 0.2f);
  for (int r = 0; r < 6; ++r)
    for (int c = 0; c < 20; ++c) two_level(r, c) = 0.8f;
  const InrHistogram h = inr_histogram(two_level);
  CHECK(h.noise_mean == doctest::Approx(0.2).epsilon(1e-5));
  CHECK(h.interference_mean == doctest::Approx(0.8).epsilon(1e-5));
  CHECK(h.delta == doctest::Approx(0.6).epsilon(1e-5));
  CHECK_FALSE(h.single_population);
  CHECK(std::accumulate(h.counts.begin(), h.counts.end(), 0) == 400);
  CHECK(h.bin_edges.size() == int(h.counts.size()) + 1);

  // constant image: single population, zero separation
  const InrHistogram flat = inr_histogram(Imagef::Constant(8, 8, 0.4f));
  CHECK(flat.single_population);
  CHECK(flat.delta == 0.0);
  CHECK(flat.noise_mean == doctest::Approx(0.4).epsilon(1e-6));
  CHECK(std::accumulate(flat.counts.begin(), flat.counts.end(), 0) == 64);

  // delta ignores constant shifts and scales linearly with pixel gain
  InterferenceRecord rec;
  rec.class_id = InterferenceClass::tone;
  rec.power_db = 0.0;
  rec.seed = 9;
  const Spectrogram tone = synth_spectrogram(rec, 32, 32);
  const double base = inr_histogram(tone).delta;
  CHECK(base > 0.1);
  const Imagef shifted = tone.data.array() + 0.35f;
  CHECK(inr_histogram(shifted).delta == doctest::Approx(base).epsilon(1e-5));
  const Imagef scaled = tone.data.array() * 2.5f;
  CHECK(inr_histogram(scaled).delta == doctest::Approx(2.5 * base).epsilon(1e-4));

  // noise-only images separate far less than a strong tone
  InterferenceRecord noise_rec;
  noise_rec.class_id = InterferenceClass::noise;
  noise_rec.seed = 10;
  const Spectrogram noise_only = synth_spectrogram(noise_rec, 32, 32);
  CHECK(inr_histogram(noise_only).delta < base);

  CHECK_THROWS_AS((void)inr_histogram(Imagef()), std::invalid_argument);
  Imagef nan_img = Imagef::Constant(4, 4, std::nanf(""));
  CHECK_THROWS_AS((void)inr_histogram(nan_img), std::invalid_argument);
  CHECK_THROWS_AS((void)inr_histogram(two_level, 1), std::invalid_argument);
}

TEST_CASE("augmentation emits labeled, reproducible intermediate samples") {
  AugFixture& f = AugFixture::get();

  InterpolationSpec spec;
  spec.lo = -20.0;
  spec.hi = 0.0;
  spec.n_steps = 5;
  const auto aug = augment_power_bins(f.vae.model, f.data, spec, 2, 99);
  REQUIRE(aug.size() == 3 * 5 * 2);  // classes x steps x pairs

  const std::vector<double> powers = {-20.0, -15.0, -10.0, -5.0, 0.0};
  std::set<std::uint64_t> seeds;
  for (std::size_t i = 0; i < aug.size(); ++i) {
    const auto& [x, rec] = aug[i];
    CHECK(x.height() == 32);
    CHECK(x.width() == 32);
    CHECK(x.data.allFinite());
    CHECK(rec.provenance == "synthetic-interpolated");
    CHECK(rec.power_db == doctest::Approx(powers[i % 5]).epsilon(1e-12));
    CHECK(rec.class_id == x.meta.class_id);
    seeds.insert(rec.seed);
  }
  CHECK(seeds.size() == aug.size());  // every sample gets its own seed

  // each group of n_steps keeps one class; classes appear equally often
  std::map<InterferenceClass, int> per_class;
  for (std::size_t base = 0; base < aug.size(); base += 5) {
    for (int k = 1; k < 5; ++k)
      CHECK(aug[base + std::size_t(k)].second.class_id == aug[base].second.class_id);
    per_class[aug[base].second.class_id] += 1;
  }
  REQUIRE(per_class.size() == 3);
  for (const auto& [cls, n] : per_class) CHECK(n == 2);

  // same seed reproduces pixels bitwise; another seed pairs differently
  const auto again = augment_power_bins(f.vae.model, f.data, spec, 2, 99);
  REQUIRE(again.size() == aug.size());
  for (std::size_t i = 0; i < aug.size(); ++i)
    CHECK((aug[i].first.data.array() == again[i].first.data.array()).all());
  const auto other = augment_power_bins(f.vae.model, f.data, spec, 2, 100);
  bool any_differs = false;
  for (std::size_t i = 0; i < aug.size(); ++i)
    any_differs = any_differs || !(aug[i].first.data.array() == other[i].first.data.array()).all();
  CHECK(any_differs);

  // two steps decode the endpoints only
  InterpolationSpec ends = spec;
  ends.n_steps = 2;
  const auto pair_only = augment_power_bins(f.vae.model, f.data, ends, 1, 7);
  REQUIRE(pair_only.size() == 3 * 2);
  for (std::size_t i = 0; i < pair_only.size(); ++i)
    CHECK(pair_only[i].second.power_db == (i % 2 == 0 ? -20.0 : 0.0));

  // skipping every second step drops the odd alphas
  InterpolationSpec skip = spec;
  skip.skip_pattern = SkipPattern::every_second;
  const auto skipped = augment_power_bins(f.vae.model, f.data, skip, 1, 7);
  REQUIRE(skipped.size() == 3 * 3);
  CHECK(skipped[1].second.power_db == doctest::Approx(-10.0).epsilon(1e-12));

  // a class missing one endpoint bin is rejected by name
  std::vector<std::pair<Spectrogram, InterferenceRecord>> holed;
  for (const auto& sample : f.data)
    if (!(sample.second.class_id == InterferenceClass::chirp &&
          sample.second.power_db == spec.lo))
      holed.push_back(sample);
  expect_throw_contains(
      [&] { (void)augment_power_bins(f.vae.model, holed, spec, 1, 1); },
      "class 'chirp' has no samples at lo endpoint");

  CHECK_THROWS_AS((void)augment_power_bins(f.vae.model, f.data, spec, 0, 1),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)augment_power_bins(f.vae.model, {}, spec, 1, 1),
                  std::invalid_argument);
}

TEST_CASE("decoded interference separation grows along the power sweep") {
  AugFixture& f = AugFixture::get();

  InterpolationSpec spec;
  spec.lo = -20.0;
  spec.hi = 0.0;
  spec.n_steps = 5;
  const auto aug = augment_power_bins(f.vae.model, f.data, spec, 6, 99);
  REQUIRE(aug.size() % 5 == 0);

  std::vector<double> mean_delta(5, 0.0);
  const int pairs = int(aug.size() / 5);
  for (std::size_t base = 0; base < aug.size(); base += 5)
    for (int k = 0; k < 5; ++k)
      mean_delta[std::size_t(k)] += inr_histogram(aug[base + std::size_t(k)].first).delta;
  for (auto& d : mean_delta) d /= pairs;

  // separation rises with interpolated power, and the midpoint sits strictly
  // between the decoded endpoints
  for (int k = 0; k + 1 < 5; ++k) CHECK(mean_delta[std::size_t(k)] < mean_delta[std::size_t(k + 1)]);
  CHECK(mean_delta[2] > mean_delta[0]);
  CHECK(mean_delta[2] < mean_delta[4]);

  // real samples show the same ordering across their bins
  auto real_mean = [&](double bin) {
    double s = 0.0;
    int n = 0;
    for (const auto& [x, r] : f.data)
      if (r.power_db == bin) {
        s += inr_histogram(x).delta;
        ++n;
      }
    return s / n;
  };
  CHECK(real_mean(-20.0) < real_mean(-10.0));
  CHECK(real_mean(-10.0) < real_mean(0.0));
}

TEST_CASE("bandwidth and distance factors interpolate their own field") {
  AugFixture& f = AugFixture::get();

  auto sample_with = [](InterferenceClass cls, double bw, double dist, std::uint64_t seed) {
    InterferenceRecord rec;
    rec.class_id = cls;
    rec.power_db = -5.0;
    rec.bandwidth_hz = bw;
    rec.distance_m = dist;
    rec.seed = seed;
    Spectrogram s = synth_spectrogram(rec, 32, 32);
    return std::make_pair(std::move(s), rec);
  };

  std::vector<std::pair<Spectrogram, InterferenceRecord>> bw_set;
  for (std::uint64_t k = 0; k < 2; ++k) {
    bw_set.push_back(sample_with(InterferenceClass::wideband_noise, 0.1, 1.0, k));
    bw_set.push_back(sample_with(InterferenceClass::wideband_noise, 0.3, 1.0, 10 + k));
  }
  InterpolationSpec bw_spec;
  bw_spec.factor = InterpolationFactor::bandwidth;
  bw_spec.lo = 0.1;
  bw_spec.hi = 0.3;
  bw_spec.n_steps = 3;
  const auto bw_aug = augment_power_bins(f.vae.model, bw_set, bw_spec, 2, 5);
  REQUIRE(bw_aug.size() == 6);
  for (std::size_t i = 0; i < bw_aug.size(); ++i) {
    CHECK(bw_aug[i].second.bandwidth_hz ==
          doctest::Approx(0.1 + 0.1 * double(i % 3)).epsilon(1e-12));
    CHECK(bw_aug[i].second.power_db == -5.0);  // untouched by bandwidth mode
  }

  std::vector<std::pair<Spectrogram, InterferenceRecord>> dist_set;
  for (std::uint64_t k = 0; k < 2; ++k) {
    dist_set.push_back(sample_with(InterferenceClass::tone, 0.0, 1.0, 20 + k));
    dist_set.push_back(sample_with(InterferenceClass::tone, 0.0, 4.0, 30 + k));
  }
  InterpolationSpec dist_spec;
  dist_spec.factor = InterpolationFactor::distance;
  dist_spec.lo = 1.0;
  dist_spec.hi = 4.0;
  dist_spec.n_steps = 3;
  const auto dist_aug = augment_power_bins(f.vae.model, dist_set, dist_spec, 1, 5);
  REQUIRE(dist_aug.size() == 3);
  CHECK(dist_aug[0].second.distance_m == 1.0);
  CHECK(dist_aug[1].second.distance_m == 2.5);
  CHECK(dist_aug[2].second.distance_m == 4.0);
}

TEST_CASE("narrow power sliver keeps the upward energy trend") {
  AugFixture& f = AugFixture::get();

  DatasetConfig dc;
  dc.n_per_class = 6;
  dc.height = 32;
  dc.width = 32;
  dc.class_set = {InterferenceClass::tone};
  dc.power_bins = {-20.0, -16.0};
  dc.rng_seed = 57;
  const auto sliver = make_dataset(dc);

  InterpolationSpec spec;
  spec.lo = -20.0;
  spec.hi = -16.0;
  spec.n_steps = 5;
  const auto aug = augment_power_bins(f.vae.model, sliver, spec, 6, 3);
  REQUIRE(aug.size() == 5 * 6);

  double e_lo = 0.0, e_hi = 0.0;
  for (std::size_t base = 0; base < aug.size(); base += 5) {
    for (int k = 0; k < 5; ++k) CHECK(aug[base + std::size_t(k)].first.data.allFinite());
    e_lo += top_energy(aug[base].first.data);
    e_hi += top_energy(aug[base + 4].first.data);
  }
  CHECK(e_hi > e_lo);  // 4 dB of headroom survives encoding and decoding
}

TEST_CASE("latent traversal sweeps one coordinate at a time") {
  AugFixture& f = AugFixture::get();
  const Spectrogram* tone0 = nullptr;
  for (const auto& [x, r] : f.data)
    if (r.class_id == InterferenceClass::tone && r.power_db == 0.0) {
      tone0 = &x;
      break;
    }
  REQUIRE(tone0 != nullptr);

  // identity traversal reproduces the plain reconstruction bitwise
  const LatentParamsf p = encode(f.vae.model, {*tone0})[0];
  const std::vector<Spectrogram> recon = decode(f.vae.model, {p.mu});
  const auto identity = latent_traversal(f.vae.model, *tone0, 3, {double(p.mu[3])});
  REQUIRE(identity.size() == 1);
  CHECK((identity[0].data.array() == recon[0].data.array()).all());

  std::vector<double> grid;
  for (int k = 0; k < 7; ++k) grid.push_back(-3.0 + k * 1.0);
  const auto swept = latent_traversal(f.vae.model, *tone0, 0, grid);
  REQUIRE(swept.size() == 7);
  for (const auto& s : swept) {
    CHECK(s.data.allFinite());
    CHECK(s.data.minCoeff() >= 0.0f);
    CHECK(s.data.maxCoeff() <= 1.0f);
  }

  // sensitivity ranking: some dimension moves ridge energy strongly, another
  // barely at all
  const double base_e = top_energy(recon[0].data);
  const std::vector<double> vals = {-2.5, -1.25, 0.0, 1.25, 2.5};
  double strongest = 0.0, weakest = 1e9;
  for (int dim = 0; dim < 8; ++dim) {
    const auto series = latent_traversal(f.vae.model, *tone0, dim, vals);
    double lo = 1e9, hi = -1e9;
    for (const auto& s : series) {
      const double e = top_energy(s.data);
      lo = std::min(lo, e);
      hi = std::max(hi, e);
    }
    strongest = std::max(strongest, hi - lo);
    weakest = std::min(weakest, hi - lo);
  }
  CHECK(strongest > 0.1 * base_e);
  CHECK(weakest < 0.1 * strongest);

  CHECK_THROWS_AS((void)latent_traversal(f.vae.model, *tone0, -1, {0.0}),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)latent_traversal(f.vae.model, *tone0, 8, {0.0}),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)latent_traversal(f.vae.model, *tone0, 0, {}),
                  std::invalid_argument);
}
