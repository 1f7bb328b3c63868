#pragma once

// Two classification paths: a dense network on latent-code payloads and a
// small residual CNN on raw pixels, both trained with softmax cross-entropy,
// plus shared evaluation (accuracy, confusion, single-threaded timing).

#include "specvae/codec.hpp"
#include "specvae/nn.hpp"

#include <functional>

namespace specvae {

struct DenseClassifierConfig {
  int n_layers = 2;        // total fully connected layers, 1..3 (1 = linear head only)
  int hidden_width = 128;  // width of the non-final layers
  bool use_relu = true;
  bool use_batchnorm = false;
  int input_len = 16;
  int n_classes = 6;
};

struct DenseTrainOptions {
  double lr = 1e-3;
  int epochs = 100;
  int batch_size = 64;
  int patience = 15;          // early stop when the loss stops improving
  double min_improve = 1e-4;  // relative improvement threshold for the plateau check
  std::uint64_t seed = 1;
};

struct DenseClassifier {
  DenseClassifierConfig cfg;
  std::vector<nn::Dense<float>> layers;
  std::vector<nn::BatchNorm<float>> bns;
  std::vector<nn::Relu<float>> acts;

  DenseClassifier() = default;
  DenseClassifier(const DenseClassifierConfig& cfg_, Rng& rng);

  // x: (input_len x B) -> logits (n_classes x B)
  Matf forward(const Matf& x);
  void backward(const Matf& g_logits);
  void set_training(bool t);
  void collect(nn::ParamList<float>& out);

  std::vector<int> predict(const Matf& x);
};

struct TrainedDense {
  DenseClassifier model;
  std::vector<double> loss_trace;  // per epoch
};

// Thrown when a classifier objective goes non-finite; carries the loss trace
// accumulated up to the failing epoch.
struct ClassifierDivergence : std::runtime_error {
  std::vector<double> trace;
  ClassifierDivergence(const std::string& msg, std::vector<double> t)
      : std::runtime_error(msg), trace(std::move(t)) {}
};

TrainedDense train_dense(const std::vector<LatentCode>& codes,
                         const std::vector<int>& labels, const DenseClassifierConfig& cfg,
                         const DenseTrainOptions& opts);

// Codes packed column-wise into a feature matrix.
Matf pack_codes(const std::vector<LatentCode>& codes);

// ---------------------------------------------------------------------------
// Baseline residual CNN on raw pixels
// ---------------------------------------------------------------------------

struct BaselineCnnConfig {
  int height = 64;
  int width = 64;
  int n_classes = 6;
  int base_channels = 8;
  int n_blocks = 3;  // stride-2 residual blocks after the stem
  double lr = 1e-3;
  int epochs = 20;
  int batch_size = 32;
  std::uint64_t seed = 1;
};

struct BaselineCnn {
  BaselineCnnConfig cfg;
  nn::Conv2d<float> stem;
  nn::BatchNorm<float> stem_bn;
  nn::Relu<float> stem_act;
  std::vector<nn::ResidualBlock<float>> blocks;
  nn::GlobalAvgPool<float> pool;
  nn::Dense<float> head;

  BaselineCnn() = default;
  BaselineCnn(const BaselineCnnConfig& cfg_, Rng& rng);

  Matf forward(const Matf& x, int batch);  // x: (1 x B*H*W) -> logits
  void backward(const Matf& g_logits);
  // gradient entering at the pooled features instead of the logits
  Matf backward_from_pooled(const Matf& g_pooled);
  void set_training(bool t);
  void collect(nn::ParamList<float>& out);

  std::vector<int> predict(const std::vector<const Imagef*>& images);
  // penultimate features (channels x B) from the last forward pass
  Matf pooled_features() const { return pooled_cache_; }

 private:
  Matf pooled_cache_;
};

struct TrainedCnn {
  BaselineCnn model;
  std::vector<double> loss_trace;
};

TrainedCnn train_baseline_cnn(const std::vector<std::pair<Spectrogram, int>>& samples,
                              const BaselineCnnConfig& cfg);

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvalReport {
  double accuracy = 0.0;
  std::vector<double> per_class_accuracy;
  MatX<int> confusion;  // rows = true class, cols = predicted
  double train_time_s = 0.0;
  double infer_time_us_per_sample = 0.0;
};

// predict is timed as a whole batch; the median over `repetitions` timed runs
// divided by the sample count gives infer_time_us_per_sample.
EvalReport evaluate(const std::function<std::vector<int>()>& predict,
                    const std::vector<int>& labels, int n_classes, int repetitions = 5);

// ---------------------------------------------------------------------------
// Hyperparameter sweep
// ---------------------------------------------------------------------------

struct SweepCell {
  int latent_dim = 16;
  LatentMode mode = LatentMode::mu;
  DenseClassifierConfig dense;
};

struct SweepRow {
  SweepCell cell;
  double accuracy_mean = 0.0;
  double accuracy_std = 0.0;
  std::vector<double> accuracy_samples;
  double train_time_s_mean = 0.0;
  double infer_us_mean = 0.0;
  double compression_rate = 0.0;
};

struct SweepReport {
  std::vector<SweepRow> rows;
};

struct CodeSplit {
  std::vector<LatentCode> train_codes;
  std::vector<int> train_labels;
  std::vector<LatentCode> test_codes;
  std::vector<int> test_labels;
  int source_height = 0;
  int source_width = 0;
};

// Codes for each latent-dim are produced once by the caller (the backing
// model is trained once per dimension); the sweep only retrains the dense
// classifiers, `repetitions` times with one seed per repetition shared
// across cells so cell comparisons are paired.
SweepReport hyperparameter_sweep(
    const std::function<CodeSplit(int latent_dim, LatentMode mode)>& codes_for,
    const std::vector<SweepCell>& grid, int repetitions, std::uint64_t base_seed);

// ---------------------------------------------------------------------------
// Split helpers
// ---------------------------------------------------------------------------

// Stratified by (class, power-bin): within each cell, a deterministic
// fraction goes to test.
struct SplitIndices {
  std::vector<int> train;
  std::vector<int> test;
};
SplitIndices stratified_split(const std::vector<InterferenceRecord>& records,
                              double test_fraction, std::uint64_t seed);

std::vector<int> class_labels(const std::vector<InterferenceRecord>& records);

}  // namespace specvae
