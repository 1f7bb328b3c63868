#include "specvae/classifier.hpp"

#include <chrono>
#include <map>

namespace specvae {
namespace {

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace

// ---------------------------------------------------------------------------
// Dense classifier
// ---------------------------------------------------------------------------

DenseClassifier::DenseClassifier(const DenseClassifierConfig& cfg_, Rng& rng) : cfg(cfg_) {
  check(cfg.n_layers >= 1 && cfg.n_layers <= 3, "dense: n_layers must be in {1,2,3}");
  check(cfg.hidden_width >= 1, "dense: hidden_width must be >= 1");
  check(cfg.input_len >= 1 && cfg.n_classes >= 2, "dense: bad input/class dims");
  int in = cfg.input_len;
  for (int i = 0; i + 1 < cfg.n_layers; ++i) {
    layers.emplace_back(in, cfg.hidden_width, rng);
    if (cfg.use_batchnorm) bns.emplace_back(cfg.hidden_width);
    if (cfg.use_relu) acts.emplace_back();
    in = cfg.hidden_width;
  }
  layers.emplace_back(in, cfg.n_classes, rng);
}

Matf DenseClassifier::forward(const Matf& x) {
  check(x.rows() == cfg.input_len, "dense: input length mismatch");
  Matf a = x;
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
    a = layers[i].forward(a);
    if (cfg.use_batchnorm) a = bns[i].forward(a);
    if (cfg.use_relu) a = acts[i].forward(a);
  }
  return layers.back().forward(a);
}

void DenseClassifier::backward(const Matf& g_logits) {
  Matf g = layers.back().backward(g_logits);
  for (std::size_t i = layers.size() - 1; i-- > 0;) {
    if (cfg.use_relu) g = acts[i].backward(g);
    if (cfg.use_batchnorm) g = bns[i].backward(g);
    g = layers[i].backward(g);
  }
}

void DenseClassifier::set_training(bool t) {
  for (auto& bn : bns) bn.training = t;
}

void DenseClassifier::collect(nn::ParamList<float>& out) {
  for (std::size_t i = 0; i < layers.size(); ++i)
    layers[i].collect("fc" + std::to_string(i), out);
  for (std::size_t i = 0; i < bns.size(); ++i)
    bns[i].collect("bn" + std::to_string(i), out);
}

std::vector<int> DenseClassifier::predict(const Matf& x) {
  set_training(false);
  const Matf logits = forward(x);
  std::vector<int> out(std::size_t(logits.cols()));
  for (Eigen::Index b = 0; b < logits.cols(); ++b) {
    Eigen::Index arg = 0;
    logits.col(b).maxCoeff(&arg);
    out[std::size_t(b)] = int(arg);
  }
  return out;
}

Matf pack_codes(const std::vector<LatentCode>& codes) {
  check(!codes.empty(), "pack_codes: empty list");
  const Eigen::Index len = codes[0].payload.size();
  Matf x(len, Eigen::Index(codes.size()));
  for (std::size_t i = 0; i < codes.size(); ++i) {
    check(codes[i].payload.size() == len && codes[i].mode == codes[0].mode,
          "pack_codes: inconsistent payload length or mode");
    x.col(Eigen::Index(i)) = codes[i].payload;
  }
  return x;
}

TrainedDense train_dense(const std::vector<LatentCode>& codes,
                         const std::vector<int>& labels, const DenseClassifierConfig& cfg,
                         const DenseTrainOptions& opts) {
  check(codes.size() == labels.size(), "train_dense: codes/labels size mismatch");
  check(codes.size() >= 2, "train_dense: need at least two samples");
  const Matf x_all = pack_codes(codes);  // also validates consistency
  check(int(x_all.rows()) == cfg.input_len, "train_dense: input_len mismatch with codes");
  std::vector<bool> seen(std::size_t(cfg.n_classes), false);
  for (int y : labels) {
    check(y >= 0 && y < cfg.n_classes, "train_dense: label out of range");
    seen[std::size_t(y)] = true;
  }
  check(std::count(seen.begin(), seen.end(), true) >= 2,
        "train_dense: need at least two classes present");

  Rng rng(mix_seed(opts.seed, 11));
  TrainedDense result{DenseClassifier(cfg, rng), {}};
  DenseClassifier& m = result.model;
  nn::ParamList<float> params;
  m.collect(params);
  nn::Adam<float> opt(float(opts.lr), 0.9f, 0.999f);
  Rng shuffle_rng(mix_seed(opts.seed, 12));

  const int n = int(codes.size());
  m.set_training(true);
  double best = std::numeric_limits<double>::infinity();
  int stale = 0;
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    const std::vector<int> order = shuffle_rng.permutation(n);
    double epoch_loss = 0.0;
    int n_batches = 0;
    for (int start = 0; start < n; start += opts.batch_size) {
      const int bs = std::min(opts.batch_size, n - start);
      Matf xb(cfg.input_len, bs);
      std::vector<int> yb(static_cast<std::size_t>(bs));
      for (int i = 0; i < bs; ++i) {
        const int idx = order[std::size_t(start + i)];
        xb.col(i) = x_all.col(idx);
        yb[std::size_t(i)] = labels[std::size_t(idx)];
      }
      const Matf logits = m.forward(xb);
      const auto ce = nn::softmax_cross_entropy(logits, yb);
      m.backward(ce.grad_logits);
      opt.step(params);
      epoch_loss += double(ce.loss);
      ++n_batches;
    }
    epoch_loss /= n_batches;
    if (!std::isfinite(epoch_loss))
      throw ClassifierDivergence("train_dense: loss diverged at epoch " +
                                     std::to_string(epoch),
                                 std::move(result.loss_trace));
    result.loss_trace.push_back(epoch_loss);
    if (epoch_loss < best * (1.0 - opts.min_improve)) {
      best = epoch_loss;
      stale = 0;
    } else if (++stale >= opts.patience) {
      break;
    }
  }
  m.set_training(false);
  return result;
}

// ---------------------------------------------------------------------------
// Baseline CNN
// ---------------------------------------------------------------------------

BaselineCnn::BaselineCnn(const BaselineCnnConfig& cfg_, Rng& rng)
    : cfg(cfg_),
      stem(1, cfg_.base_channels, 3, 1, 1, rng),
      stem_bn(cfg_.base_channels) {
  check(cfg.n_classes >= 2, "baseline cnn: need at least two classes");
  int in_c = cfg.base_channels;
  int c = cfg.base_channels * 2;
  for (int i = 0; i < cfg.n_blocks; ++i) {
    blocks.emplace_back(in_c, c, 2, rng);
    in_c = c;
    c = std::min(c * 2, 64);
  }
  head = nn::Dense<float>(in_c, cfg.n_classes, rng);
}

Matf BaselineCnn::forward(const Matf& x, int batch) {
  check(x.rows() == 1 && x.cols() == Eigen::Index(batch) * cfg.height * cfg.width,
        "baseline cnn: input dims mismatch");
  Matf a = stem_act.forward(stem_bn.forward(stem.forward(x, batch, cfg.height, cfg.width)));
  int h = cfg.height, w = cfg.width;
  for (auto& blk : blocks) {
    a = blk.forward(a, batch, h, w);
    std::tie(h, w) = blk.out_dims(h, w);
  }
  pooled_cache_ = pool.forward(a, batch);
  return head.forward(pooled_cache_);
}

void BaselineCnn::backward(const Matf& g_logits) {
  backward_from_pooled(head.backward(g_logits));
}

Matf BaselineCnn::backward_from_pooled(const Matf& g_pooled) {
  Matf g = pool.backward(g_pooled);
  for (std::size_t i = blocks.size(); i-- > 0;) g = blocks[i].backward(g);
  return stem.backward(stem_bn.backward(stem_act.backward(g)));
}

void BaselineCnn::set_training(bool t) {
  stem_bn.training = t;
  for (auto& blk : blocks) blk.set_training(t);
}

void BaselineCnn::collect(nn::ParamList<float>& out) {
  stem.collect("stem", out);
  stem_bn.collect("stem_bn", out);
  for (std::size_t i = 0; i < blocks.size(); ++i)
    blocks[i].collect("block" + std::to_string(i), out);
  head.collect("head", out);
}

std::vector<int> BaselineCnn::predict(const std::vector<const Imagef*>& images) {
  set_training(false);
  std::vector<int> out;
  out.reserve(images.size());
  const int chunk = 64;
  for (std::size_t start = 0; start < images.size(); start += chunk) {
    const int bs = int(std::min<std::size_t>(chunk, images.size() - start));
    std::vector<const Imagef*> batch(images.begin() + std::ptrdiff_t(start),
                                     images.begin() + std::ptrdiff_t(start) + bs);
    const Matf logits = forward(pack_images<float>(batch, cfg.height, cfg.width), bs);
    for (Eigen::Index b = 0; b < logits.cols(); ++b) {
      Eigen::Index arg = 0;
      logits.col(b).maxCoeff(&arg);
      out.push_back(int(arg));
    }
  }
  return out;
}

TrainedCnn train_baseline_cnn(const std::vector<std::pair<Spectrogram, int>>& samples,
                              const BaselineCnnConfig& cfg) {
  check(!samples.empty(), "train_baseline_cnn: empty dataset");
  std::vector<bool> seen(std::size_t(cfg.n_classes), false);
  for (const auto& [s, y] : samples) {
    check(y >= 0 && y < cfg.n_classes, "train_baseline_cnn: label out of range");
    check(s.height() == cfg.height && s.width() == cfg.width,
          "train_baseline_cnn: sample dims mismatch");
    seen[std::size_t(y)] = true;
  }
  check(std::count(seen.begin(), seen.end(), true) >= 2,
        "train_baseline_cnn: need at least two classes present");

  Rng rng(mix_seed(cfg.seed, 21));
  TrainedCnn result{BaselineCnn(cfg, rng), {}};
  BaselineCnn& m = result.model;
  nn::ParamList<float> params;
  m.collect(params);
  nn::Adam<float> opt(float(cfg.lr), 0.9f, 0.999f);
  Rng shuffle_rng(mix_seed(cfg.seed, 22));

  const int n = int(samples.size());
  m.set_training(true);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const std::vector<int> order = shuffle_rng.permutation(n);
    double epoch_loss = 0.0;
    int n_batches = 0;
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int bs = std::min(cfg.batch_size, n - start);
      std::vector<const Imagef*> images(static_cast<std::size_t>(bs));
      std::vector<int> yb(static_cast<std::size_t>(bs));
      for (int i = 0; i < bs; ++i) {
        const int idx = order[std::size_t(start + i)];
        images[std::size_t(i)] = &samples[std::size_t(idx)].first.data;
        yb[std::size_t(i)] = samples[std::size_t(idx)].second;
      }
      const Matf logits = m.forward(pack_images<float>(images, cfg.height, cfg.width), bs);
      const auto ce = nn::softmax_cross_entropy(logits, yb);
      m.backward(ce.grad_logits);
      opt.step(params);
      epoch_loss += double(ce.loss);
      ++n_batches;
    }
    epoch_loss /= n_batches;
    if (!std::isfinite(epoch_loss))
      throw ClassifierDivergence("train_baseline_cnn: loss diverged at epoch " +
                                     std::to_string(epoch),
                                 std::move(result.loss_trace));
    result.loss_trace.push_back(epoch_loss);
  }
  m.set_training(false);
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

EvalReport evaluate(const std::function<std::vector<int>()>& predict,
                    const std::vector<int>& labels, int n_classes, int repetitions) {
  check(!labels.empty(), "evaluate: empty test set");
  check(repetitions >= 1, "evaluate: repetitions must be >= 1");

  std::vector<double> times;
  std::vector<int> preds;
  for (int r = 0; r < std::max(repetitions, 5); ++r) {
    const double t0 = now_seconds();
    preds = predict();
    times.push_back(now_seconds() - t0);
  }
  check(preds.size() == labels.size(), "evaluate: prediction count mismatch");

  EvalReport report;
  report.confusion = MatX<int>::Zero(n_classes, n_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    check(labels[i] >= 0 && labels[i] < n_classes, "evaluate: label out of range");
    check(preds[i] >= 0 && preds[i] < n_classes, "evaluate: prediction out of range");
    report.confusion(labels[i], preds[i]) += 1;
  }
  int correct = 0;
  report.per_class_accuracy.assign(std::size_t(n_classes), 0.0);
  for (int c = 0; c < n_classes; ++c) {
    const int row_total = report.confusion.row(c).sum();
    correct += report.confusion(c, c);
    report.per_class_accuracy[std::size_t(c)] =
        row_total > 0 ? double(report.confusion(c, c)) / row_total : 0.0;
  }
  report.accuracy = double(correct) / double(labels.size());
  report.infer_time_us_per_sample = median_of(times) * 1e6 / double(labels.size());
  return report;
}

// ---------------------------------------------------------------------------
// Sweep
// ---------------------------------------------------------------------------

SweepReport hyperparameter_sweep(
    const std::function<CodeSplit(int latent_dim, LatentMode mode)>& codes_for,
    const std::vector<SweepCell>& grid, int repetitions, std::uint64_t base_seed) {
  check(!grid.empty(), "sweep: empty grid");
  check(repetitions >= 1, "sweep: repetitions must be >= 1");

  // fetch each (d, mode) split once
  std::map<std::pair<int, int>, CodeSplit> splits;
  SweepReport report;
  for (const SweepCell& cell : grid) {
    const auto key = std::make_pair(cell.latent_dim, int(cell.mode));
    auto it = splits.find(key);
    if (it == splits.end())
      it = splits.emplace(key, codes_for(cell.latent_dim, cell.mode)).first;
    const CodeSplit& split = it->second;

    SweepRow row;
    row.cell = cell;
    DenseClassifierConfig cfg = cell.dense;
    cfg.input_len = int(split.train_codes[0].payload.size());
    cfg.n_classes = *std::max_element(split.train_labels.begin(),
                                      split.train_labels.end()) +
                    1;
    double time_sum = 0.0, infer_sum = 0.0;
    for (int r = 0; r < repetitions; ++r) {
      // Seed depends on the repetition only, so identical grid cells produce
      // identical statistics and distinct cells see paired training seeds.
      DenseTrainOptions opts;
      opts.seed = mix_seed(base_seed, std::uint64_t(r));
      const double t0 = now_seconds();
      TrainedDense trained = train_dense(split.train_codes, split.train_labels, cfg, opts);
      time_sum += now_seconds() - t0;
      const Matf x_test = pack_codes(split.test_codes);
      EvalReport ev = evaluate([&] { return trained.model.predict(x_test); },
                               split.test_labels, cfg.n_classes);
      row.accuracy_samples.push_back(ev.accuracy);
      infer_sum += ev.infer_time_us_per_sample;
    }
    const auto& acc = row.accuracy_samples;
    row.accuracy_mean = std::accumulate(acc.begin(), acc.end(), 0.0) / double(acc.size());
    double var = 0.0;
    for (double a : acc) var += (a - row.accuracy_mean) * (a - row.accuracy_mean);
    row.accuracy_std = acc.size() > 1 ? std::sqrt(var / double(acc.size() - 1)) : 0.0;
    row.train_time_s_mean = time_sum / repetitions;
    row.infer_us_mean = infer_sum / repetitions;
    row.compression_rate = compression_rate(
        split.source_height, split.source_width, int(split.train_codes[0].payload.size()));
    report.rows.push_back(std::move(row));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

SplitIndices stratified_split(const std::vector<InterferenceRecord>& records,
                              double test_fraction, std::uint64_t seed) {
  check(test_fraction > 0.0 && test_fraction < 1.0, "split: fraction must be in (0,1)");
  std::map<std::pair<int, long long>, std::vector<int>> cells;
  for (std::size_t i = 0; i < records.size(); ++i) {
    // power binned at 0.5 dB so distinct configured bins never merge
    const auto key = std::make_pair(int(records[i].class_id),
                                    llround(records[i].power_db * 2.0));
    cells[key].push_back(int(i));
  }
  SplitIndices out;
  Rng rng(mix_seed(seed, 31));
  for (auto& [key, idx] : cells) {
    const std::vector<int> order = rng.permutation(int(idx.size()));
    const int n_test = std::max(1, int(std::lround(test_fraction * double(idx.size()))));
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const int sample = idx[std::size_t(order[k])];
      (int(k) < n_test ? out.test : out.train).push_back(sample);
    }
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

std::vector<int> class_labels(const std::vector<InterferenceRecord>& records) {
  std::vector<int> out(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) out[i] = int(records[i].class_id);
  return out;
}

}  // namespace specvae
