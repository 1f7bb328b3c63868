#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "specvae/dataset_io.hpp"
#include "specvae/synth.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace specvae;
namespace fs = std::filesystem;

namespace {

InterferenceRecord make_record(InterferenceClass c, double power, std::uint64_t seed) {
  InterferenceRecord rec;
  rec.class_id = c;
  rec.power_db = power;
  rec.seed = seed;
  return rec;
}

fs::path temp_dir(const char* tag) {
  fs::path dir = fs::temp_directory_path() / (std::string("specvae_test_") + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("distance attenuation follows the inverse-square law exactly") {
  // 10 m -> 100 m costs 20*log10(100/10) = 20 dB, a factor 0.01 in power
  InterferenceRecord near = make_record(InterferenceClass::chirp, 0.0, 5);
  InterferenceRecord far = near;
  near.distance_m = 10.0;
  far.distance_m = 100.0;
  const Imagef p_near = interference_power(near, 64, 64);
  const Imagef p_far = interference_power(far, 64, 64);
  REQUIRE(p_near.sum() > 0.0f);
  const double ratio = double(p_far.sum()) / double(p_near.sum());
  CHECK(ratio == doctest::Approx(0.01).epsilon(1e-5));
  // the attenuation is a uniform scalar gain: pointwise ratio holds too
  const double max_dev =
      double((p_far.array() - 0.01f * p_near.array()).abs().maxCoeff());
  CHECK(max_dev < 1e-8);
}

TEST_CASE("tone ridge magnitude rises with configured power") {
  const Spectrogram strong =
      synth_spectrogram(make_record(InterferenceClass::tone, 10.0, 11), 64, 64);
  const Spectrogram weak =
      synth_spectrogram(make_record(InterferenceClass::tone, -20.0, 11), 64, 64);
  // ridge support = pixels carrying at least half the peak template energy
  const Imagef tmpl =
      interference_power(make_record(InterferenceClass::tone, 0.0, 11), 64, 64);
  const float thresh = 0.5f * tmpl.maxCoeff();
  double sum_strong = 0.0, sum_weak = 0.0;
  int n = 0;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x)
      if (tmpl(y, x) >= thresh) {
        sum_strong += strong.data(y, x);
        sum_weak += weak.data(y, x);
        ++n;
      }
  REQUIRE(n > 0);
  CHECK(sum_strong / n > sum_weak / n);
}

TEST_CASE("noise class ignores power and stays near the floor") {
  const Spectrogram a = synth_spectrogram(make_record(InterferenceClass::noise, -20.0, 7), 64, 64);
  const Spectrogram b = synth_spectrogram(make_record(InterferenceClass::noise, 10.0, 7), 64, 64);
  CHECK(a.data == b.data);  // power does not enter the pure-background path
  validate_spectrogram(a);
  // dB-domain sigma of 2 keeps the normalized spread well under full scale
  CHECK(double(a.data.maxCoeff() - a.data.minCoeff()) < 0.35);
  const Spectrogram tone = synth_spectrogram(make_record(InterferenceClass::tone, 10.0, 7), 64, 64);
  CHECK(double(tone.data.maxCoeff() - tone.data.minCoeff()) > 0.5);
}

TEST_CASE("generation is deterministic and seed-sensitive") {
  const InterferenceRecord rec = make_record(InterferenceClass::pulsed, -5.0, 123);
  const Spectrogram a = synth_spectrogram(rec, 32, 48);
  const Spectrogram b = synth_spectrogram(rec, 32, 48);
  CHECK(a.data == b.data);
  CHECK(a.height() == 32);
  CHECK(a.width() == 48);
  InterferenceRecord other = rec;
  other.seed = 124;
  CHECK(synth_spectrogram(other, 32, 48).data != a.data);
}

TEST_CASE("interference energy is strictly monotone in power on a 5-point grid") {
  const double grid[5] = {-20.0, -12.5, -5.0, 2.5, 10.0};
  for (InterferenceClass c : all_interference_classes()) {
    if (c == InterferenceClass::noise) continue;
    double prev_energy = -1.0, prev_mean = -1.0;
    for (double power : grid) {
      const InterferenceRecord rec = make_record(c, power, 99);
      const double energy = double(interference_power(rec, 64, 64).sum());
      const double mean = double(synth_spectrogram(rec, 64, 64).data.mean());
      CHECK(energy > prev_energy);
      CHECK(mean > prev_mean);  // shared noise stream, so the gain shows through
      prev_energy = energy;
      prev_mean = mean;
    }
  }
}

TEST_CASE("generator rejects invalid inputs") {
  const InterferenceRecord ok = make_record(InterferenceClass::tone, 0.0, 1);
  InterferenceRecord bad = ok;
  bad.class_id = InterferenceClass(42);
  CHECK_THROWS_AS(synth_spectrogram(bad, 64, 64), std::invalid_argument);
  bad = ok;
  bad.power_db = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(synth_spectrogram(bad, 64, 64), std::invalid_argument);
  bad = ok;
  bad.distance_m = -1.0;
  CHECK_THROWS_AS(synth_spectrogram(bad, 64, 64), std::invalid_argument);
  CHECK_THROWS_AS(synth_spectrogram(ok, 4, 64), std::invalid_argument);
  CHECK_THROWS_AS(interference_class_from_string("warble"), std::invalid_argument);
  CHECK(interference_class_from_string("wideband-noise") == InterferenceClass::wideband_noise);
}

TEST_CASE("chirp ramps across time while tone holds a fixed row") {
  const Imagef chirp =
      interference_power(make_record(InterferenceClass::chirp, 0.0, 3), 64, 64);
  const Imagef tone =
      interference_power(make_record(InterferenceClass::tone, 0.0, 3), 64, 64);
  auto argmax_row = [](const Imagef& img, int col) {
    int best = 0;
    for (int y = 1; y < img.rows(); ++y)
      if (img(y, col) > img(best, col)) best = y;
    return best;
  };
  int prev = argmax_row(chirp, 0);
  for (int x = 1; x < 64; ++x) {
    const int row = argmax_row(chirp, x);
    CHECK(row >= prev);
    prev = row;
  }
  CHECK(prev - argmax_row(chirp, 0) >= 16);  // sweep covers a wide band
  const int tone_row = argmax_row(tone, 0);
  for (int x = 1; x < 64; ++x) CHECK(argmax_row(tone, x) == tone_row);
}

TEST_CASE("dataset assembly: counts, stratification, determinism") {
  DatasetConfig cfg;
  cfg.n_per_class = 2;
  cfg.height = cfg.width = 16;
  cfg.class_set = {InterferenceClass::noise, InterferenceClass::tone, InterferenceClass::chirp};
  cfg.power_bins = {-20.0, -10.0, 0.0, 10.0};
  cfg.rng_seed = 77;
  const auto data = make_dataset(cfg);
  CHECK(data.size() == 24);  // 2 per class x 3 classes x 4 bins

  std::map<std::pair<int, double>, int> cell_counts;
  for (const auto& [spec, rec] : data) {
    validate_spectrogram(spec);
    CHECK(spec.height() == 16);
    ++cell_counts[{int(rec.class_id), rec.power_db}];
  }
  CHECK(cell_counts.size() == 12);
  for (const auto& [cell, count] : cell_counts) CHECK(count == 2);

  const auto again = make_dataset(cfg);
  REQUIRE(again.size() == data.size());
  for (std::size_t i = 0; i < data.size(); ++i)
    CHECK(again[i].first.data == data[i].first.data);

  cfg.rng_seed = 78;
  const auto other = make_dataset(cfg);
  bool any_diff = false;
  for (std::size_t i = 0; i < data.size(); ++i)
    any_diff = any_diff || other[i].first.data != data[i].first.data;
  CHECK(any_diff);

  cfg.class_set.clear();
  CHECK_THROWS_AS(make_dataset(cfg), std::invalid_argument);
}

TEST_CASE("nearest-centroid classifier separates the six classes on raw pixels") {
  DatasetConfig cfg;
  cfg.n_per_class = 50;
  cfg.height = cfg.width = 64;
  cfg.power_bins = {-5.0, 5.0};
  cfg.rng_seed = 2024;
  const auto data = make_dataset(cfg);
  REQUIRE(data.size() == 600);

  // even indices train the centroids, odd indices are held out
  std::map<int, Imagef> centroids;
  std::map<int, int> counts;
  for (std::size_t i = 0; i < data.size(); i += 2) {
    const int c = int(data[i].second.class_id);
    auto [it, fresh] = centroids.try_emplace(c, Imagef::Zero(64, 64));
    it->second += data[i].first.data;
    ++counts[c];
  }
  for (auto& [c, img] : centroids) img /= float(counts[c]);

  int correct = 0, total = 0;
  for (std::size_t i = 1; i < data.size(); i += 2) {
    int best = -1;
    float best_dist = std::numeric_limits<float>::max();
    for (const auto& [c, img] : centroids) {
      const float dist = (data[i].first.data - img).squaredNorm();
      if (dist < best_dist) {
        best_dist = dist;
        best = c;
      }
    }
    correct += best == int(data[i].second.class_id);
    ++total;
  }
  CHECK(double(correct) / total > 0.90);
}

TEST_CASE("tensor files round-trip bitwise and reject malformed input") {
  const fs::path dir = temp_dir("specfile");
  Rng rng(9);
  const Imagef img = rng.uniform_matrix<float>(24, 17, 0.0, 1.0);
  write_spec_file(dir / "a.spec", img);
  const Imagef back = read_spec_file(dir / "a.spec");
  CHECK(back == img);

  // header is exactly 16 bytes: magic + height + width + version
  CHECK(fs::file_size(dir / "a.spec") == 16 + 4u * 24 * 17);

  std::ofstream bad(dir / "bad_magic.spec", std::ios::binary);
  bad.write("SPEX\1\0\0\0\1\0\0\0\1\0\0\0", 16);
  bad.close();
  CHECK_THROWS_AS(read_spec_file(dir / "bad_magic.spec"), std::invalid_argument);

  // truncate the pixel payload
  fs::resize_file(dir / "a.spec", 16 + 4u * 24 * 17 - 5);
  CHECK_THROWS_AS(read_spec_file(dir / "a.spec"), std::invalid_argument);
  CHECK_THROWS_AS(read_spec_file(dir / "missing.spec"), std::invalid_argument);
  fs::remove_all(dir);
}

TEST_CASE("index records round-trip through JSON lines") {
  InterferenceRecord rec = make_record(InterferenceClass::multitone, -7.5, 42);
  rec.bandwidth_hz = 0.125;
  rec.distance_m = 3.0;
  rec.provenance = "synthetic-interpolated";
  const std::string line = record_to_json_line(rec, "sample_000003.spec");
  std::string file;
  const InterferenceRecord back = record_from_json_line(line, &file);
  CHECK(file == "sample_000003.spec");
  CHECK(back.class_id == rec.class_id);
  CHECK(back.power_db == rec.power_db);
  CHECK(back.bandwidth_hz == rec.bandwidth_hz);
  CHECK(back.distance_m == rec.distance_m);
  CHECK(back.seed == rec.seed);
  CHECK(back.provenance == rec.provenance);
  CHECK_THROWS_AS(record_from_json_line("{not json", &file), std::invalid_argument);
  CHECK_THROWS_AS(record_from_json_line("{\"file\":\"x\"}", &file), std::invalid_argument);
}

TEST_CASE("dataset directories round-trip samples and metadata") {
  DatasetConfig cfg;
  cfg.n_per_class = 2;
  cfg.height = cfg.width = 16;
  cfg.class_set = {InterferenceClass::tone, InterferenceClass::noise};
  cfg.power_bins = {0.0};
  cfg.rng_seed = 5;
  const auto data = make_dataset(cfg);

  const fs::path dir = temp_dir("dataset");
  write_dataset(dir, data);
  CHECK(fs::exists(dir / "index.jsonl"));
  CHECK(fs::exists(dir / "sample_000000.spec"));

  const auto back = load_dataset(dir);
  REQUIRE(back.size() == data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(back[i].first.data == data[i].first.data);
    CHECK(back[i].second.class_id == data[i].second.class_id);
    CHECK(back[i].second.power_db == data[i].second.power_db);
    CHECK(back[i].second.seed == data[i].second.seed);
  }

  const fs::path empty = temp_dir("dataset_empty");
  CHECK_THROWS_AS(load_dataset(empty), std::invalid_argument);
  fs::remove_all(dir);
  fs::remove_all(empty);
}
