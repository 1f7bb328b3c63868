// Command-line front end: dataset synthesis, VAE training, latent-code
// compression, interpolation augmentation, hyperparameter/timing sweeps and
// report/plot emission. One command per process; exit codes are a stable
// contract (0 ok, 2 config error, 3 divergence, 4 partial failure).

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "specvae/augment.hpp"
#include "specvae/checkpoint.hpp"
#include "specvae/classifier.hpp"
#include "specvae/codec.hpp"
#include "specvae/config.hpp"
#include "specvae/cvae_gan.hpp"
#include "specvae/dataset_io.hpp"
#include "specvae/plot.hpp"
#include "specvae/report.hpp"
#include "specvae/synth.hpp"
#include "specvae/vae_train.hpp"

namespace fs = std::filesystem;
using namespace specvae;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitPartial = 4;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s) {
  const RunConfig one = parse_config("v = " + s + "\n");
  return one.get_number("v", 0.0);
}

// Reads each config key once, writing the effective value back so the
// resolved snapshot materializes every default.
struct Resolver {
  RunConfig& cfg;

  std::int64_t geti(const std::string& k, std::int64_t dflt) {
    const std::int64_t v = cfg.get_int(k, dflt);
    cfg.set(k, ConfigValue::make_number(double(v)));
    return v;
  }
  double getd(const std::string& k, double dflt) {
    const double v = cfg.get_number(k, dflt);
    cfg.set(k, ConfigValue::make_number(v));
    return v;
  }
  bool getb(const std::string& k, bool dflt) {
    const bool v = cfg.get_bool(k, dflt);
    cfg.set(k, ConfigValue::make_bool(v));
    return v;
  }
  std::string gets(const std::string& k, const std::string& dflt) {
    const std::string v = cfg.get_string(k, dflt);
    cfg.set(k, ConfigValue::make_string(v));
    return v;
  }
  std::vector<double> getds(const std::string& k, const std::vector<double>& dflt) {
    const std::vector<double> v = cfg.get_numbers(k, dflt);
    std::vector<ConfigValue> items;
    for (double x : v) items.push_back(ConfigValue::make_number(x));
    cfg.set(k, ConfigValue::make_array(std::move(items)));
    return v;
  }
  std::vector<std::string> getss(const std::string& k, const std::vector<std::string>& dflt) {
    const std::vector<std::string> v = cfg.get_strings(k, dflt);
    std::vector<ConfigValue> items;
    for (const auto& x : v) items.push_back(ConfigValue::make_string(x));
    cfg.set(k, ConfigValue::make_array(std::move(items)));
    return v;
  }
  std::string need(const std::string& k, const std::string& flag) {
    const std::string v = gets(k, "");
    check(!v.empty(), "missing required " + flag + " (config key '" + k + "')");
    return v;
  }
};

std::vector<int> to_ints(const std::vector<double>& vs, const std::string& what) {
  std::vector<int> out;
  for (double v : vs) {
    check(v == double(int(v)) && v >= 1.0, what + ": expected positive integers");
    out.push_back(int(v));
  }
  return out;
}

struct RunContext {
  std::string verb;
  RunConfig& cfg;
  fs::path out;
  std::uint64_t seed = 1;
  int threads = 1;

  void snapshot() const {
    RunConfig full = cfg;
    full.set("command", ConfigValue::make_string(verb));
    full.set("seed", ConfigValue::make_string(std::to_string(seed)));
    full.set("out", ConfigValue::make_string(out.string()));
    full.set("threads", ConfigValue::make_number(double(threads)));
    write_text_file(out / "resolved_config.json", config_json(full).dump(2) + "\n");
  }
};

std::vector<std::string> with_globals(std::vector<std::string> keys) {
  keys.insert(keys.end(), {"seed", "out", "threads"});
  return keys;
}

std::vector<std::string> all_class_names() {
  std::vector<std::string> names;
  for (InterferenceClass c : all_interference_classes()) names.push_back(to_string(c));
  return names;
}

// class labels 0..K-1 name the enum directly
std::vector<std::string> class_name_labels(int n_classes) {
  std::vector<std::string> names;
  for (int i = 0; i < n_classes; ++i) names.push_back(to_string(InterferenceClass(i)));
  return names;
}

std::string mode_short(LatentMode m) {
  switch (m) {
    case LatentMode::mu: return "m";
    case LatentMode::mu_concat_sigma: return "ms";
    default: return "r";
  }
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

int cmd_synth(RunContext& ctx) {
  reject_unknown_keys(ctx.cfg, with_globals({"synth.classes", "synth.n_per_class",
                                             "synth.height", "synth.width",
                                             "synth.power_bins", "synth.noise_floor_db"}));
  Resolver r{ctx.cfg};
  DatasetConfig dc;
  dc.class_set.clear();
  for (const std::string& name : r.getss("synth.classes", all_class_names()))
    dc.class_set.push_back(interference_class_from_string(name));
  dc.n_per_class = int(r.geti("synth.n_per_class", 20));
  dc.height = int(r.geti("synth.height", 64));
  dc.width = int(r.geti("synth.width", 64));
  dc.power_bins = r.getds("synth.power_bins", {-20.0, -10.0, 0.0});
  dc.noise_floor_db = r.getd("synth.noise_floor_db", -45.0);
  dc.rng_seed = ctx.seed;

  const auto samples = make_dataset(dc);
  ctx.snapshot();
  write_dataset(ctx.out / "dataset", samples);
  std::printf("synth: wrote %zu samples (%dx%d) to %s\n", samples.size(), dc.height,
              dc.width, (ctx.out / "dataset").string().c_str());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

int cmd_train(RunContext& ctx) {
  reject_unknown_keys(
      ctx.cfg, with_globals({"train.model", "train.data", "train.latent_dim", "train.epochs",
                             "train.batch_size", "train.lr", "train.beta", "train.gamma",
                             "train.base_channels", "train.disc_layers", "train.disc_width",
                             "train.disc_lr"}));
  Resolver r{ctx.cfg};
  const std::string kind = r.gets("train.model", "factorvae");
  check(kind == "factorvae" || kind == "vae" || kind == "cvae_gan",
        "train: unknown model '" + kind + "' (factorvae|vae|cvae_gan)");
  const std::string data = r.need("train.data", "--data");
  const int latent_dim = int(r.geti("train.latent_dim", 16));
  check(latent_dim >= 1, "train: latent_dim must be >= 1");
  const int epochs = int(r.geti("train.epochs", 30));
  const int batch = int(r.geti("train.batch_size", 32));
  const double lr = r.getd("train.lr", 1e-3);
  const double beta = r.getd("train.beta", 1.0);
  const double gamma = r.getd("train.gamma", kind == "factorvae" ? 5.0 : 0.0);
  check(kind != "vae" || gamma == 0.0, "train: model 'vae' fixes gamma = 0");
  const int base_channels = int(r.geti("train.base_channels", 8));
  const int disc_layers = int(r.geti("train.disc_layers", 4));
  const int disc_width = int(r.geti("train.disc_width", 256));
  const double disc_lr = r.getd("train.disc_lr", 1e-4);

  const auto samples = load_dataset(data);
  check(!samples.empty(), "train: dataset is empty");
  const int h = samples[0].first.height(), w = samples[0].first.width();
  ctx.snapshot();

  const auto t0 = std::chrono::steady_clock::now();
  if (kind == "cvae_gan") {
    std::vector<std::pair<Spectrogram, int>> pairs;
    int n_classes = 1;
    for (const auto& [s, rec] : samples) {
      pairs.emplace_back(s, int(rec.class_id));
      n_classes = std::max(n_classes, int(rec.class_id) + 1);
    }
    CvaeGanTrainConfig tc;
    tc.net.height = h;
    tc.net.width = w;
    tc.net.latent_dim = latent_dim;
    tc.net.n_classes = n_classes;
    tc.net.base_channels = base_channels;
    tc.epochs = epochs;
    tc.batch_size = batch;
    tc.lr = lr;
    tc.disc_lr = disc_lr;
    tc.seed = ctx.seed;
    try {
      TrainedCvaeGan trained = train_cvae_gan(pairs, tc);
      save_cvae_gan(ctx.out / "model.ckpt", trained.model);
      write_text_file(ctx.out / "loss.csv", to_csv(loss_trace_table(trained.trace)));
    } catch (const CvaeGanDivergence& e) {
      // keep the partial trace so the failing run can be inspected
      write_text_file(ctx.out / "loss.csv", to_csv(loss_trace_table(e.trace)));
      throw;
    }
  } else {
    FactorVaeTrainConfig fc;
    fc.vae.height = h;
    fc.vae.width = w;
    fc.vae.latent_dim = latent_dim;
    fc.vae.base_channels = base_channels;
    fc.vae.beta = beta;
    fc.vae.gamma = kind == "vae" ? 0.0 : gamma;
    fc.vae.disc_layers = disc_layers;
    fc.vae.disc_width = disc_width;
    fc.epochs = epochs;
    fc.batch_size = batch;
    fc.lr = lr;
    fc.disc_lr = disc_lr;
    fc.seed = ctx.seed;
    try {
      TrainedVae trained = train_factorvae(strip_records(samples), fc);
      save_vae(ctx.out / "model.ckpt", trained.model);
      write_text_file(ctx.out / "loss.csv", to_csv(loss_trace_table(trained.trace)));
    } catch (const TrainingDivergence& e) {
      write_text_file(ctx.out / "loss.csv", to_csv(loss_trace_table(e.trace)));
      throw;
    }
  }
  std::printf("train: %s d=%d on %zu samples in %.1fs -> %s\n", kind.c_str(), latent_dim,
              samples.size(), seconds_since(t0), (ctx.out / "model.ckpt").string().c_str());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// compress
// ---------------------------------------------------------------------------

int cmd_compress(RunContext& ctx) {
  reject_unknown_keys(ctx.cfg,
                      with_globals({"compress.model", "compress.data", "compress.mode"}));
  Resolver r{ctx.cfg};
  const std::string model_path = r.need("compress.model", "--model");
  const std::string data = r.need("compress.data", "--data");
  const LatentMode mode = latent_mode_from_string(r.gets("compress.mode", "mu"));

  VaeModelf model = load_vae(model_path);
  const auto samples = load_dataset(data);
  check(!samples.empty(), "compress: dataset is empty");
  ctx.snapshot();

  const std::vector<LatentCode> codes =
      compress_batch(model, strip_records(samples), mode, ctx.seed);
  write_text_file(ctx.out / "codes.latc", serialize_stream(codes));

  CsvTable t;
  t.header = {"sample", "class",       "power_db", "latent_dim",
              "mode",   "payload_len", "compression_rate"};
  for (std::size_t i = 0; i < codes.size(); ++i) {
    const LatentCode& c = codes[i];
    t.rows.push_back({format_number(double(i)), to_string(samples[i].second.class_id),
                      format_number(samples[i].second.power_db),
                      format_number(double(c.latent_dim())), to_string(c.mode),
                      format_number(double(c.payload.size())),
                      format_number(compression_rate(int(c.height), int(c.width),
                                                     int(c.payload.size())))});
  }
  write_text_file(ctx.out / "codes.csv", to_csv(t));
  std::printf("compress: %zu codes (%s) -> %s\n", codes.size(), to_string(mode).c_str(),
              (ctx.out / "codes.latc").string().c_str());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// augment
// ---------------------------------------------------------------------------

InterpolationFactor factor_from_string(const std::string& name) {
  if (name == "power") return InterpolationFactor::power;
  if (name == "bandwidth") return InterpolationFactor::bandwidth;
  if (name == "distance") return InterpolationFactor::distance;
  throw std::invalid_argument("augment: unknown factor '" + name +
                              "' (power|bandwidth|distance)");
}

int cmd_augment(RunContext& ctx) {
  reject_unknown_keys(ctx.cfg, with_globals({"augment.model", "augment.data", "augment.factor",
                                             "augment.lo", "augment.hi", "augment.steps",
                                             "augment.pairs", "augment.skip"}));
  Resolver r{ctx.cfg};
  const std::string model_path = r.need("augment.model", "--model");
  const std::string data = r.need("augment.data", "--data");
  InterpolationSpec spec;
  spec.factor = factor_from_string(r.gets("augment.factor", "power"));
  spec.lo = r.getd("augment.lo", -20.0);
  spec.hi = r.getd("augment.hi", 0.0);
  spec.n_steps = int(r.geti("augment.steps", 5));
  const std::string skip = r.gets("augment.skip", "all");
  check(skip == "all" || skip == "every_second",
        "augment: unknown skip pattern '" + skip + "' (all|every_second)");
  spec.skip_pattern = skip == "all" ? SkipPattern::all : SkipPattern::every_second;
  const int pairs = int(r.geti("augment.pairs", 4));

  VaeModelf model = load_vae(model_path);
  const auto samples = load_dataset(data);
  ctx.snapshot();

  const auto aug = augment_power_bins(model, samples, spec, pairs, ctx.seed);
  write_dataset(ctx.out / "augmented", aug);

  CsvTable t;
  t.header = {"sample", "class", "power_db", "bandwidth_hz", "distance_m", "inr_delta"};
  for (std::size_t i = 0; i < aug.size(); ++i) {
    const auto& [s, rec] = aug[i];
    t.rows.push_back({format_number(double(i)), to_string(rec.class_id),
                      format_number(rec.power_db), format_number(rec.bandwidth_hz),
                      format_number(rec.distance_m),
                      format_number(inr_histogram(s).delta)});
  }
  write_text_file(ctx.out / "augment_inr.csv", to_csv(t));

  // outputs come grouped class -> pair -> alpha, so a prefix is one sweep
  const std::size_t sweep_len =
      std::min(interpolation_alphas(spec).size(), aug.size());
  std::vector<Spectrogram> first;
  for (std::size_t i = 0; i < sweep_len; ++i) first.push_back(aug[i].first);
  write_png(ctx.out / "augment_strip.png", spectrogram_strip(first, 2, 2));

  std::printf("augment: %zu interpolated samples -> %s\n", aug.size(),
              (ctx.out / "augmented").string().c_str());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

int cmd_bench(RunContext& ctx) {
  reject_unknown_keys(
      ctx.cfg,
      with_globals({"bench.data", "bench.latent_dims", "bench.modes", "bench.n_layers",
                    "bench.hidden_width", "bench.use_relu", "bench.use_batchnorm",
                    "bench.repetitions", "bench.test_fraction", "bench.vae_epochs",
                    "bench.vae_batch_size", "bench.vae_lr", "bench.gamma",
                    "bench.base_channels", "bench.disc_layers", "bench.disc_width",
                    "bench.cnn_epochs", "bench.cnn_blocks"}));
  Resolver r{ctx.cfg};
  const std::string data = r.need("bench.data", "--data");
  const std::vector<int> dims =
      to_ints(r.getds("bench.latent_dims", {16, 32, 64, 128, 256}), "bench.latent_dims");
  std::vector<LatentMode> modes;
  for (const std::string& m : r.getss("bench.modes", {"mu"}))
    modes.push_back(latent_mode_from_string(m));
  const std::vector<int> layer_list =
      to_ints(r.getds("bench.n_layers", {2}), "bench.n_layers");
  check(!dims.empty() && !modes.empty() && !layer_list.empty(), "bench: empty grid");
  const int hidden_width = int(r.geti("bench.hidden_width", 64));
  const bool use_relu = r.getb("bench.use_relu", true);
  const bool use_batchnorm = r.getb("bench.use_batchnorm", false);
  const int reps = int(r.geti("bench.repetitions", 3));
  const double test_fraction = r.getd("bench.test_fraction", 0.25);
  const int vae_epochs = int(r.geti("bench.vae_epochs", 12));
  const int vae_batch = int(r.geti("bench.vae_batch_size", 32));
  const double vae_lr = r.getd("bench.vae_lr", 1e-3);
  const double gamma = r.getd("bench.gamma", 5.0);
  const int base_channels = int(r.geti("bench.base_channels", 8));
  const int disc_layers = int(r.geti("bench.disc_layers", 4));
  const int disc_width = int(r.geti("bench.disc_width", 256));
  const int cnn_epochs = int(r.geti("bench.cnn_epochs", 12));
  const int cnn_blocks = int(r.geti("bench.cnn_blocks", 3));

  const auto samples = load_dataset(data);
  check(!samples.empty(), "bench: dataset is empty");
  std::vector<InterferenceRecord> records;
  for (const auto& [s, rec] : samples) records.push_back(rec);
  const std::vector<int> labels = class_labels(records);
  const SplitIndices split = stratified_split(records, test_fraction, mix_seed(ctx.seed, 71));
  std::vector<Spectrogram> train_specs, test_specs;
  std::vector<std::pair<Spectrogram, int>> train_pairs;
  std::vector<int> train_labels, test_labels;
  for (int i : split.train) {
    train_specs.push_back(samples[std::size_t(i)].first);
    train_pairs.emplace_back(samples[std::size_t(i)].first, labels[std::size_t(i)]);
    train_labels.push_back(labels[std::size_t(i)]);
  }
  for (int i : split.test) {
    test_specs.push_back(samples[std::size_t(i)].first);
    test_labels.push_back(labels[std::size_t(i)]);
  }
  const int h = samples[0].first.height(), w = samples[0].first.width();
  const int n_classes = *std::max_element(labels.begin(), labels.end()) + 1;
  ctx.snapshot();

  std::vector<std::string> failures;

  // one VAE per latent dim, shared across modes/layer cells
  std::map<int, VaeModelf> vaes;
  for (int d : dims) {
    if (vaes.count(d)) continue;
    try {
      FactorVaeTrainConfig fc;
      fc.vae.height = h;
      fc.vae.width = w;
      fc.vae.latent_dim = d;
      fc.vae.base_channels = base_channels;
      fc.vae.gamma = gamma;
      fc.vae.disc_layers = disc_layers;
      fc.vae.disc_width = disc_width;
      fc.epochs = vae_epochs;
      fc.batch_size = vae_batch;
      fc.lr = vae_lr;
      fc.seed = mix_seed(ctx.seed, 300 + std::uint64_t(d));
      const auto t0 = std::chrono::steady_clock::now();
      vaes.emplace(d, train_factorvae(train_specs, fc).model);
      std::printf("bench: trained encoder d=%d in %.1fs\n", d, seconds_since(t0));
    } catch (const std::exception& e) {
      failures.push_back("latent_dim " + std::to_string(d) + ": " + e.what());
    }
  }

  std::map<std::pair<int, int>, CodeSplit> split_cache;
  const auto codes_for = [&](int d, LatentMode m) -> CodeSplit {
    const auto key = std::make_pair(d, int(m));
    const auto it = split_cache.find(key);
    if (it != split_cache.end()) return it->second;
    VaeModelf& model = vaes.at(d);
    CodeSplit cs;
    cs.train_codes = compress_batch(model, train_specs, m, mix_seed(ctx.seed, 400 + std::uint64_t(d)));
    cs.test_codes = compress_batch(model, test_specs, m, mix_seed(ctx.seed, 500 + std::uint64_t(d)));
    cs.train_labels = train_labels;
    cs.test_labels = test_labels;
    cs.source_height = h;
    cs.source_width = w;
    split_cache.emplace(key, cs);
    return cs;
  };

  SweepReport all;
  std::vector<std::string> row_names;
  const bool plain_names = modes.size() == 1 && layer_list.size() == 1;
  for (int d : dims) {
    for (LatentMode m : modes) {
      for (int nl : layer_list) {
        const std::string name = plain_names
                                     ? std::to_string(d)
                                     : std::to_string(d) + "/" + mode_short(m) + "/" +
                                           std::to_string(nl);
        if (!vaes.count(d)) continue;  // encoder failure already recorded
        SweepCell cell;
        cell.latent_dim = d;
        cell.mode = m;
        cell.dense.n_layers = nl;
        cell.dense.hidden_width = hidden_width;
        cell.dense.use_relu = use_relu;
        cell.dense.use_batchnorm = use_batchnorm;
        try {
          // one-cell grids isolate failures so the rest of the sweep survives
          SweepReport rep = hyperparameter_sweep(codes_for, {cell}, reps, ctx.seed);
          all.rows.push_back(rep.rows[0]);
          row_names.push_back(name);
        } catch (const std::exception& e) {
          failures.push_back("cell " + name + ": " + e.what());
        }
      }
    }
  }

  nlohmann::ordered_json bench_json;
  bench_json["rows"] = sweep_report_json(all)["rows"];
  try {
    BaselineCnnConfig bc;
    bc.height = h;
    bc.width = w;
    bc.n_classes = n_classes;
    bc.base_channels = base_channels;
    bc.n_blocks = cnn_blocks;
    bc.epochs = cnn_epochs;
    bc.seed = mix_seed(ctx.seed, 501);
    const auto t0 = std::chrono::steady_clock::now();
    TrainedCnn cnn = train_baseline_cnn(train_pairs, bc);
    const double train_time = seconds_since(t0);
    std::vector<const Imagef*> ptrs;
    for (const Spectrogram& s : test_specs) ptrs.push_back(&s.data);
    EvalReport base =
        evaluate([&] { return cnn.model.predict(ptrs); }, test_labels, n_classes, reps);
    base.train_time_s = train_time;
    bench_json["baseline"] = eval_report_json(base, class_name_labels(n_classes));
  } catch (const std::exception& e) {
    failures.push_back(std::string("baseline: ") + e.what());
  }
  bench_json["failures"] = failures;

  write_text_file(ctx.out / "sweep.csv", to_csv(sweep_table(all)));
  write_text_file(ctx.out / "sweep_timing.csv", to_csv(sweep_timing_table(all)));
  write_text_file(ctx.out / "bench.json", bench_json.dump(2) + "\n");
  if (!all.rows.empty()) {
    std::vector<double> acc, rate;
    for (const SweepRow& row : all.rows) {
      acc.push_back(row.accuracy_mean);
      rate.push_back(row.compression_rate);
    }
    write_png(ctx.out / "accuracy_by_cell.png",
              bar_chart(row_names, acc, "ACCURACY BY CELL", "ACC"));
    write_png(ctx.out / "compression_by_cell.png",
              bar_chart(row_names, rate, "COMPRESSION RATE BY CELL", "RATE"));
  }

  std::printf("bench: %zu/%zu cells ok, %zu failures -> %s\n", all.rows.size(),
              dims.size() * modes.size() * layer_list.size(), failures.size(),
              (ctx.out / "bench.json").string().c_str());
  return failures.empty() ? kExitOk : kExitPartial;
}

// ---------------------------------------------------------------------------
// augment-eval
// ---------------------------------------------------------------------------

int label_of(double power, const std::vector<double>& grid) {
  int best = 0;
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (std::abs(grid[i] - power) < std::abs(grid[std::size_t(best)] - power)) best = int(i);
  return best;
}

int cmd_augment_eval(RunContext& ctx) {
  const std::string p = "augment-eval.";
  reject_unknown_keys(
      ctx.cfg,
      with_globals({p + "train_bins", p + "eval_bins", p + "classes", p + "n_per_class",
                    p + "eval_n_per_class", p + "height", p + "width", p + "latent_dim",
                    p + "base_channels", p + "gamma", p + "disc_layers", p + "disc_width",
                    p + "vae_epochs", p + "vae_batch_size", p + "vae_lr", p + "pairs",
                    p + "n_steps", p + "cls_epochs", p + "cls_hidden"}));
  Resolver r{ctx.cfg};
  const std::vector<double> train_bins = r.getds(p + "train_bins", {-20.0, -10.0, 0.0});
  const std::vector<double> eval_bins = r.getds(p + "eval_bins", {-15.0, -5.0});
  check(std::is_sorted(train_bins.begin(), train_bins.end()) && train_bins.size() >= 2 &&
            train_bins.front() < train_bins.back(),
        "augment-eval: train_bins must be >= 2 distinct sorted values");
  check(std::is_sorted(eval_bins.begin(), eval_bins.end()) && !eval_bins.empty(),
        "augment-eval: eval_bins must be non-empty and sorted");
  // power-bin labels make no sense for the pure-noise class
  std::vector<std::string> default_classes = all_class_names();
  default_classes.erase(default_classes.begin());
  std::vector<InterferenceClass> classes;
  for (const std::string& name : r.getss(p + "classes", default_classes)) {
    const InterferenceClass c = interference_class_from_string(name);
    check(c != InterferenceClass::noise,
          "augment-eval: the noise class has no power bin");
    classes.push_back(c);
  }
  const int n_per_class = int(r.geti(p + "n_per_class", 12));
  const int eval_n = int(r.geti(p + "eval_n_per_class", 8));
  const int h = int(r.geti(p + "height", 32));
  const int w = int(r.geti(p + "width", 32));
  const int latent_dim = int(r.geti(p + "latent_dim", 8));
  const int base_channels = int(r.geti(p + "base_channels", 8));
  const double gamma = r.getd(p + "gamma", 5.0);
  const int disc_layers = int(r.geti(p + "disc_layers", 4));
  const int disc_width = int(r.geti(p + "disc_width", 256));
  const int vae_epochs = int(r.geti(p + "vae_epochs", 300));
  const int vae_batch = int(r.geti(p + "vae_batch_size", 24));
  const double vae_lr = r.getd(p + "vae_lr", 1e-3);
  const int pairs = int(r.geti(p + "pairs", 12));
  const int n_steps_cfg = int(r.geti(p + "n_steps", 0));  // 0 = derive from the grid
  const int cls_epochs = int(r.geti(p + "cls_epochs", 200));
  const int cls_hidden = int(r.geti(p + "cls_hidden", 64));

  // label grid = union of train and eval bins
  std::vector<double> grid = train_bins;
  grid.insert(grid.end(), eval_bins.begin(), eval_bins.end());
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  const int n_bins = int(grid.size());
  std::vector<std::string> bin_names;
  for (double g : grid) bin_names.push_back(format_number(g));

  DatasetConfig dc;
  dc.class_set = classes;
  dc.n_per_class = n_per_class;
  dc.height = h;
  dc.width = w;
  dc.power_bins = train_bins;
  dc.rng_seed = mix_seed(ctx.seed, 81);
  const auto train_ds = make_dataset(dc);
  dc.n_per_class = eval_n;
  dc.power_bins = eval_bins;
  dc.rng_seed = mix_seed(ctx.seed, 82);
  const auto eval_ds = make_dataset(dc);
  ctx.snapshot();

  // shared feature extractor, trained on the sparse real bins only; both
  // classifiers below see the data through this encoder
  FactorVaeTrainConfig fc;
  fc.vae.height = h;
  fc.vae.width = w;
  fc.vae.latent_dim = latent_dim;
  fc.vae.base_channels = base_channels;
  fc.vae.gamma = gamma;
  fc.vae.disc_layers = disc_layers;
  fc.vae.disc_width = disc_width;
  fc.epochs = vae_epochs;
  fc.batch_size = vae_batch;
  fc.lr = vae_lr;
  fc.seed = mix_seed(ctx.seed, 84);
  TrainedVae vae = train_factorvae(strip_records(train_ds), fc);
  write_text_file(ctx.out / "vae_loss.csv", to_csv(loss_trace_table(vae.trace)));

  const auto bin_labels = [&](const auto& ds) {
    std::vector<int> out;
    for (const auto& [s, rec] : ds) out.push_back(label_of(rec.power_db, grid));
    return out;
  };
  const std::vector<LatentCode> train_codes =
      compress_batch(vae.model, strip_records(train_ds), LatentMode::mu, mix_seed(ctx.seed, 91));
  const std::vector<LatentCode> eval_codes =
      compress_batch(vae.model, strip_records(eval_ds), LatentMode::mu, mix_seed(ctx.seed, 92));
  const std::vector<int> train_labels = bin_labels(train_ds);
  const std::vector<int> eval_labels = bin_labels(eval_ds);
  const Matf x_eval = pack_codes(eval_codes);

  DenseClassifierConfig cc;
  cc.n_layers = 2;
  cc.hidden_width = cls_hidden;
  cc.input_len = latent_dim;
  cc.n_classes = n_bins;

  const auto train_and_eval = [&](const std::vector<LatentCode>& codes,
                                  const std::vector<int>& labels, std::uint64_t seed) {
    DenseTrainOptions opts;
    opts.epochs = cls_epochs;
    opts.batch_size = 16;
    opts.lr = 1e-2;
    opts.seed = seed;
    const auto t0 = std::chrono::steady_clock::now();
    TrainedDense td = train_dense(codes, labels, cc, opts);
    const double train_time = seconds_since(t0);
    EvalReport rep =
        evaluate([&] { return td.model.predict(x_eval); }, eval_labels, n_bins, 5);
    rep.train_time_s = train_time;
    return rep;
  };

  const EvalReport no_aug = train_and_eval(train_codes, train_labels, mix_seed(ctx.seed, 83));
  write_text_file(ctx.out / "no_aug_confusion.csv", to_csv(confusion_table(no_aug.confusion, bin_names)));
  write_png(ctx.out / "no_aug_confusion.png",
            confusion_plot(no_aug.confusion, bin_names, "WITHOUT AUGMENTATION"));
  std::printf("augment-eval: no-aug accuracy %.3f on held-out bins\n", no_aug.accuracy);

  nlohmann::ordered_json j;
  j["train_bins"] = train_bins;
  j["eval_bins"] = eval_bins;
  j["grid"] = grid;
  j["no_aug"] = eval_report_json(no_aug, bin_names);

  // the augmentation stage may fail (e.g. a class missing an endpoint bin);
  // the no-augmentation half above is still preserved
  try {
    int n_steps = n_steps_cfg;
    if (n_steps < 2) {
      // derive the step count that lands interpolations on the union grid
      double gap = grid[1] - grid[0];
      for (std::size_t i = 2; i < grid.size(); ++i) gap = std::min(gap, grid[i] - grid[i - 1]);
      n_steps = int(std::llround((grid.back() - grid.front()) / gap)) + 1;
      for (double g : grid) {
        const double k = (g - grid.front()) / gap;
        check(std::abs(k - std::llround(k)) < 1e-6,
              "augment-eval: bins are not on a uniform grid; set n_steps explicitly");
      }
    }
    InterpolationSpec spec;
    spec.factor = InterpolationFactor::power;
    spec.lo = train_bins.front();
    spec.hi = train_bins.back();
    spec.n_steps = n_steps;
    const auto aug = augment_power_bins(vae.model, train_ds, spec, pairs, mix_seed(ctx.seed, 85));
    write_dataset(ctx.out / "augmented", aug);

    // augmented samples go through the same encoder as the real ones
    const std::vector<LatentCode> aug_codes =
        compress_batch(vae.model, strip_records(aug), LatentMode::mu, mix_seed(ctx.seed, 93));
    auto codes_both = train_codes;
    auto labels_both = train_labels;
    codes_both.insert(codes_both.end(), aug_codes.begin(), aug_codes.end());
    for (const auto& [s, rec] : aug) labels_both.push_back(label_of(rec.power_db, grid));
    const EvalReport with_aug = train_and_eval(codes_both, labels_both, mix_seed(ctx.seed, 86));
    write_text_file(ctx.out / "with_aug_confusion.csv",
                    to_csv(confusion_table(with_aug.confusion, bin_names)));
    write_png(ctx.out / "with_aug_confusion.png",
              confusion_plot(with_aug.confusion, bin_names, "WITH AUGMENTATION"));

    j["with_aug"] = eval_report_json(with_aug, bin_names);
    j["n_augmented"] = aug.size();
    j["delta"] = with_aug.accuracy - no_aug.accuracy;
    write_text_file(ctx.out / "augment_eval.json", j.dump(2) + "\n");
    std::printf("augment-eval: with-aug accuracy %.3f (delta %+.3f, %zu augmented)\n",
                with_aug.accuracy, with_aug.accuracy - no_aug.accuracy, aug.size());
    return kExitOk;
  } catch (const std::invalid_argument& e) {
    j["augment_error"] = e.what();
    write_text_file(ctx.out / "augment_eval.json", j.dump(2) + "\n");
    std::fprintf(stderr, "augment-eval: augmentation stage failed: %s\n", e.what());
    return kExitPartial;
  }
}

// ---------------------------------------------------------------------------
// traverse
// ---------------------------------------------------------------------------

int cmd_traverse(RunContext& ctx) {
  reject_unknown_keys(ctx.cfg, with_globals({"traverse.model", "traverse.data",
                                             "traverse.index", "traverse.dim",
                                             "traverse.values"}));
  Resolver r{ctx.cfg};
  const std::string model_path = r.need("traverse.model", "--model");
  const std::string data = r.need("traverse.data", "--data");
  const int index = int(r.geti("traverse.index", 0));
  const int dim = int(r.geti("traverse.dim", 0));
  const std::vector<double> values =
      r.getds("traverse.values", {-2.0, -1.0, 0.0, 1.0, 2.0});

  VaeModelf model = load_vae(model_path);
  const auto samples = load_dataset(data);
  check(index >= 0 && index < int(samples.size()), "traverse: sample index out of range");
  ctx.snapshot();

  const std::vector<Spectrogram> frames =
      latent_traversal(model, samples[std::size_t(index)].first, dim, values);
  write_png(ctx.out / "traversal_strip.png", spectrogram_strip(frames, 2, 2));
  CsvTable t;
  t.header = {"value", "inr_delta"};
  for (std::size_t i = 0; i < frames.size(); ++i)
    t.rows.push_back({format_number(values[i]), format_number(inr_histogram(frames[i]).delta)});
  write_text_file(ctx.out / "traversal.csv", to_csv(t));
  std::printf("traverse: dim %d over %zu values -> %s\n", dim, values.size(),
              (ctx.out / "traversal_strip.png").string().c_str());
  return kExitOk;
}

// ---------------------------------------------------------------------------
// histogram
// ---------------------------------------------------------------------------

int cmd_histogram(RunContext& ctx) {
  reject_unknown_keys(ctx.cfg,
                      with_globals({"histogram.data", "histogram.index", "histogram.bins"}));
  Resolver r{ctx.cfg};
  const std::string data = r.need("histogram.data", "--data");
  const int index = int(r.geti("histogram.index", 0));
  const int bins = int(r.geti("histogram.bins", 64));

  const auto samples = load_dataset(data);
  check(index >= 0 && index < int(samples.size()), "histogram: sample index out of range");
  ctx.snapshot();

  const auto& [s, rec] = samples[std::size_t(index)];
  const InrHistogram hist = inr_histogram(s, bins);

  CsvTable t;
  t.header = {"bin_lo", "bin_hi", "count"};
  for (std::size_t i = 0; i < hist.counts.size(); ++i)
    t.rows.push_back({format_number(hist.bin_edges(Eigen::Index(i))),
                      format_number(hist.bin_edges(Eigen::Index(i) + 1)),
                      format_number(double(hist.counts[i]))});
  write_text_file(ctx.out / "histogram.csv", to_csv(t));

  nlohmann::ordered_json j;
  j["class"] = to_string(rec.class_id);
  j["noise_mean"] = hist.noise_mean;
  j["interference_mean"] = hist.interference_mean;
  j["delta"] = hist.delta;
  j["single_population"] = hist.single_population;
  write_text_file(ctx.out / "inr.json", j.dump(2) + "\n");
  write_png(ctx.out / "histogram.png",
            histogram_plot(hist, "INR " + to_string(rec.class_id)));
  std::printf("histogram: sample %d (%s) delta %.4f\n", index,
              to_string(rec.class_id).c_str(), hist.delta);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// wiring
// ---------------------------------------------------------------------------

struct Overrides {
  std::vector<std::pair<CLI::Option*, std::function<void(RunConfig&)>>> items;

  void apply(RunConfig& cfg) const {
    for (const auto& [opt, fn] : items)
      if (opt->count() > 0) fn(cfg);
  }
};

void opt_int(CLI::App* sub, Overrides& ov, const std::string& flag, const std::string& key,
             const std::string& help) {
  auto val = std::make_shared<std::int64_t>(0);
  CLI::Option* opt = sub->add_option(flag, *val, help);
  ov.items.emplace_back(opt, [val, key](RunConfig& c) {
    c.set(key, ConfigValue::make_number(double(*val)));
  });
}

void opt_double(CLI::App* sub, Overrides& ov, const std::string& flag, const std::string& key,
                const std::string& help) {
  auto val = std::make_shared<double>(0.0);
  CLI::Option* opt = sub->add_option(flag, *val, help);
  ov.items.emplace_back(opt, [val, key](RunConfig& c) {
    c.set(key, ConfigValue::make_number(*val));
  });
}

void opt_string(CLI::App* sub, Overrides& ov, const std::string& flag, const std::string& key,
                const std::string& help) {
  auto val = std::make_shared<std::string>();
  CLI::Option* opt = sub->add_option(flag, *val, help);
  ov.items.emplace_back(opt, [val, key](RunConfig& c) {
    c.set(key, ConfigValue::make_string(*val));
  });
}

void opt_string_list(CLI::App* sub, Overrides& ov, const std::string& flag,
                     const std::string& key, const std::string& help) {
  auto val = std::make_shared<std::string>();
  CLI::Option* opt = sub->add_option(flag, *val, help);
  ov.items.emplace_back(opt, [val, key](RunConfig& c) {
    std::vector<ConfigValue> items;
    for (const std::string& s : split_commas(*val))
      items.push_back(ConfigValue::make_string(s));
    c.set(key, ConfigValue::make_array(std::move(items)));
  });
}

void opt_number_list(CLI::App* sub, Overrides& ov, const std::string& flag,
                     const std::string& key, const std::string& help) {
  auto val = std::make_shared<std::string>();
  CLI::Option* opt = sub->add_option(flag, *val, help);
  ov.items.emplace_back(opt, [val, key](RunConfig& c) {
    std::vector<ConfigValue> items;
    for (const std::string& s : split_commas(*val))
      items.push_back(ConfigValue::make_number(parse_double(s)));
    c.set(key, ConfigValue::make_array(std::move(items)));
  });
}

// "HxW" into two keys
void opt_dims(CLI::App* sub, Overrides& ov, const std::string& key_h,
              const std::string& key_w) {
  auto val = std::make_shared<std::string>();
  CLI::Option* opt = sub->add_option("--dims", *val, "grid as HxW, e.g. 64x64");
  ov.items.emplace_back(opt, [val, key_h, key_w](RunConfig& c) {
    const auto x = val->find('x');
    check(x != std::string::npos, "--dims expects HxW, got '" + *val + "'");
    c.set(key_h, ConfigValue::make_number(parse_double(val->substr(0, x))));
    c.set(key_w, ConfigValue::make_number(parse_double(val->substr(x + 1))));
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latent-code compression and augmentation workbench for RF spectrograms"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out";
  std::uint64_t seed = 1;
  std::int64_t threads = 1;
  CLI::Option* o_config = app.add_option("--config", config_path, "TOML-style config file");
  CLI::Option* o_seed = app.add_option("--seed", seed, "root RNG seed");
  CLI::Option* o_out = app.add_option("--out", out_dir, "output directory");
  CLI::Option* o_threads = app.add_option("--threads", threads, "worker cap");

  int rc = kExitOk;
  const auto add_command = [&](const std::string& verb, const std::string& help,
                               int (*handler)(RunContext&)) {
    CLI::App* sub = app.add_subcommand(verb, help);
    sub->fallthrough();
    auto ov = std::make_shared<Overrides>();
    sub->callback([&, verb, handler, ov] {
      RunConfig cfg = o_config->count() ? load_config_file(config_path) : RunConfig{};
      ov->apply(cfg);
      const std::uint64_t eff_seed =
          o_seed->count() ? seed : std::uint64_t(cfg.get_int("seed", 1));
      const std::int64_t eff_threads =
          o_threads->count() ? threads : cfg.get_int("threads", 1);
      check(eff_threads >= 1, "threads must be >= 1");
      Eigen::setNbThreads(int(eff_threads));
      const fs::path out = o_out->count() ? fs::path(out_dir)
                                          : fs::path(cfg.get_string("out", "out"));
      fs::create_directories(out);
      RunContext ctx{verb, cfg, out, eff_seed, int(eff_threads)};
      rc = handler(ctx);
    });
    return std::make_pair(sub, ov);
  };

  {
    auto [sub, ov] = add_command("synth", "generate a synthetic spectrogram dataset", cmd_synth);
    opt_string_list(sub, *ov, "--classes", "synth.classes", "comma-separated class names");
    opt_int(sub, *ov, "--n", "synth.n_per_class", "samples per class per power bin");
    opt_dims(sub, *ov, "synth.height", "synth.width");
    opt_number_list(sub, *ov, "--power-bins", "synth.power_bins", "comma-separated dB bins");
    opt_double(sub, *ov, "--noise-floor", "synth.noise_floor_db", "noise floor in dB");
  }
  {
    auto [sub, ov] = add_command("train", "train a latent model on a dataset", cmd_train);
    opt_string(sub, *ov, "--model", "train.model", "factorvae|vae|cvae_gan");
    opt_string(sub, *ov, "--data", "train.data", "dataset directory");
    opt_int(sub, *ov, "--latent-dim", "train.latent_dim", "latent dimensionality");
    opt_int(sub, *ov, "--epochs", "train.epochs", "training epochs");
    opt_int(sub, *ov, "--batch-size", "train.batch_size", "minibatch size");
    opt_double(sub, *ov, "--lr", "train.lr", "learning rate");
    opt_double(sub, *ov, "--beta", "train.beta", "KL weight");
    opt_double(sub, *ov, "--gamma", "train.gamma", "total-correlation weight");
    opt_int(sub, *ov, "--base-channels", "train.base_channels", "conv width");
    opt_int(sub, *ov, "--disc-layers", "train.disc_layers", "TC discriminator depth");
    opt_int(sub, *ov, "--disc-width", "train.disc_width", "TC discriminator width");
  }
  {
    auto [sub, ov] =
        add_command("compress", "encode a dataset into a latent-code stream", cmd_compress);
    opt_string(sub, *ov, "--model", "compress.model", "checkpoint path");
    opt_string(sub, *ov, "--data", "compress.data", "dataset directory");
    opt_string(sub, *ov, "--mode", "compress.mode", "mu|mu_concat_sigma|reparam");
  }
  {
    auto [sub, ov] =
        add_command("augment", "interpolate latent codes into new samples", cmd_augment);
    opt_string(sub, *ov, "--model", "augment.model", "checkpoint path");
    opt_string(sub, *ov, "--data", "augment.data", "dataset directory");
    opt_string(sub, *ov, "--factor", "augment.factor", "power|bandwidth|distance");
    opt_double(sub, *ov, "--lo", "augment.lo", "factor value at alpha 0");
    opt_double(sub, *ov, "--hi", "augment.hi", "factor value at alpha 1");
    opt_int(sub, *ov, "--steps", "augment.steps", "interpolation steps incl. endpoints");
    opt_int(sub, *ov, "--pairs", "augment.pairs", "endpoint pairs per class");
    opt_string(sub, *ov, "--skip", "augment.skip", "all|every_second");
  }
  {
    auto [sub, ov] = add_command(
        "bench", "latent-dim sweep with baseline CNN timing comparison", cmd_bench);
    opt_string(sub, *ov, "--data", "bench.data", "dataset directory");
    opt_number_list(sub, *ov, "--dims", "bench.latent_dims", "comma-separated latent dims");
    opt_string_list(sub, *ov, "--modes", "bench.modes", "comma-separated latent modes");
    opt_number_list(sub, *ov, "--layers", "bench.n_layers", "comma-separated dense depths");
    opt_int(sub, *ov, "--repetitions", "bench.repetitions", "training reps per cell");
    opt_int(sub, *ov, "--vae-epochs", "bench.vae_epochs", "encoder training epochs");
    opt_double(sub, *ov, "--test-fraction", "bench.test_fraction", "held-out fraction");
  }
  {
    auto [sub, ov] = add_command(
        "augment-eval", "held-out power-bin study without/with augmentation", cmd_augment_eval);
    opt_number_list(sub, *ov, "--train-bins", "augment-eval.train_bins", "trained dB bins");
    opt_number_list(sub, *ov, "--eval-bins", "augment-eval.eval_bins", "held-out dB bins");
    opt_string_list(sub, *ov, "--classes", "augment-eval.classes", "class names");
    opt_int(sub, *ov, "--n", "augment-eval.n_per_class", "train samples per class per bin");
    opt_int(sub, *ov, "--eval-n", "augment-eval.eval_n_per_class",
            "eval samples per class per bin");
    opt_dims(sub, *ov, "augment-eval.height", "augment-eval.width");
    opt_int(sub, *ov, "--latent-dim", "augment-eval.latent_dim", "latent dimensionality");
    opt_int(sub, *ov, "--vae-epochs", "augment-eval.vae_epochs", "encoder training epochs");
    opt_int(sub, *ov, "--pairs", "augment-eval.pairs", "endpoint pairs per class");
    opt_int(sub, *ov, "--steps", "augment-eval.n_steps", "interpolation steps (0 = derive)");
    opt_int(sub, *ov, "--cnn-epochs", "augment-eval.cnn_epochs", "classifier epochs");
  }
  {
    auto [sub, ov] =
        add_command("traverse", "decode a sweep over one latent coordinate", cmd_traverse);
    opt_string(sub, *ov, "--model", "traverse.model", "checkpoint path");
    opt_string(sub, *ov, "--data", "traverse.data", "dataset directory");
    opt_int(sub, *ov, "--index", "traverse.index", "sample index");
    opt_int(sub, *ov, "--dim", "traverse.dim", "latent coordinate");
    opt_number_list(sub, *ov, "--values", "traverse.values", "comma-separated values");
  }
  {
    auto [sub, ov] =
        add_command("histogram", "INR pixel histogram of one sample", cmd_histogram);
    opt_string(sub, *ov, "--data", "histogram.data", "dataset directory");
    opt_int(sub, *ov, "--index", "histogram.index", "sample index");
    opt_int(sub, *ov, "--bins", "histogram.bins", "histogram bins");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  } catch (const TrainingDivergence& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitDivergence;
  } catch (const CvaeGanDivergence& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitDivergence;
  } catch (const ClassifierDivergence& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitDivergence;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return rc;
}
