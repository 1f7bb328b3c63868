#pragma once

// Class-conditional VAE-GAN: a conditional encoder (label one-hot joined at
// the head), a generator fed z concatenated with the one-hot label, a
// seven-conv + linear discriminator, and an auxiliary residual classifier.
// The encoder/generator step minimizes
//   w_recon*MSE + w_kl*KL + w_gan*BCE(D(fake),1)
//   + w_fm*||mean f_D(real) - mean f_D(fake)||^2
//   + w_cls*sum_c ||mean f_C(real|c) - mean f_C(fake|c)||^2
// while the discriminator trains on real vs reconstructed vs prior-sampled
// batches and the classifier trains on real samples only. Prior samples are
// routed only to the discriminator.

#include "specvae/classifier.hpp"
#include "specvae/vae.hpp"

#include <filesystem>

namespace specvae {

struct CvaeGanConfig {
  int height = 64;
  int width = 64;
  int latent_dim = 16;
  int n_classes = 6;
  int base_channels = 8;
  int cls_blocks = 3;  // residual depth of the auxiliary classifier
  double w_recon = 1.0;
  double w_kl = 0.1;
  double w_gan = 0.05;
  double w_fm = 1.0;
  double w_cls = 1.0;
};

template <class S>
MatX<S> one_hot(const std::vector<int>& labels, int n_classes) {
  MatX<S> y = MatX<S>::Zero(n_classes, Eigen::Index(labels.size()));
  for (std::size_t b = 0; b < labels.size(); ++b) {
    check(labels[b] >= 0 && labels[b] < n_classes, "one_hot: label out of range");
    y(labels[b], Eigen::Index(b)) = S(1);
  }
  return y;
}

// Conv trunk identical to the plain stack encoder; the label one-hot joins
// the flattened features right before the dense head.
template <class S>
struct CondEncoder {
  std::vector<nn::Conv2d<S>> convs;
  std::vector<nn::BatchNorm<S>> bns;
  std::vector<nn::Relu<S>> acts;
  nn::Dense<S> head;
  int height = 0, width = 0, latent_dim = 0, n_classes = 0, feat_len = 0;

  CondEncoder() = default;
  CondEncoder(const CvaeGanConfig& cfg, Rng& rng)
      : height(cfg.height), width(cfg.width), latent_dim(cfg.latent_dim),
        n_classes(cfg.n_classes) {
    const int n = vae_num_blocks(cfg.height, cfg.width);
    const std::vector<int> ch = vae_channel_plan(n, cfg.base_channels);
    int in_c = 1;
    for (int i = 0; i < n; ++i) {
      convs.emplace_back(in_c, ch[std::size_t(i)], 5, 2, 2, rng);
      bns.emplace_back(ch[std::size_t(i)]);
      acts.emplace_back();
      in_c = ch[std::size_t(i)];
    }
    feat_len = in_c * 2 * 2;
    head = nn::Dense<S>(feat_len + n_classes, 2 * cfg.latent_dim, rng);
  }

  // x: (1 x B*H*W), onehot: (K x B) -> mu, log_var each (d x B)
  std::pair<MatX<S>, MatX<S>> forward(const MatX<S>& x, const MatX<S>& onehot, int batch) {
    check(x.rows() == 1 && x.cols() == Eigen::Index(batch) * height * width,
          "cond encoder: input dims mismatch");
    check(onehot.rows() == n_classes && onehot.cols() == batch,
          "cond encoder: one-hot shape mismatch");
    MatX<S> a = x;
    int h = height, w = width;
    for (std::size_t i = 0; i < convs.size(); ++i) {
      a = acts[i].forward(bns[i].forward(convs[i].forward(a, batch, h, w)));
      std::tie(h, w) = convs[i].out_dims(h, w);
    }
    MatX<S> aug(feat_len + n_classes, batch);
    aug.topRows(feat_len) = nn::flatten_spatial(a, batch);
    aug.bottomRows(n_classes) = onehot;
    MatX<S> out = head.forward(aug);
    raw_log_var_ = out.bottomRows(latent_dim);
    MatX<S> mu = out.topRows(latent_dim);
    MatX<S> log_var = raw_log_var_.cwiseMax(S(-20)).cwiseMin(S(20));
    return {std::move(mu), std::move(log_var)};
  }

  MatX<S> backward(const MatX<S>& g_mu, const MatX<S>& g_log_var) {
    MatX<S> g_out(2 * latent_dim, g_mu.cols());
    g_out.topRows(latent_dim) = g_mu;
    g_out.bottomRows(latent_dim) =
        ((raw_log_var_.array().abs() < S(20)).template cast<S>() * g_log_var.array())
            .matrix();
    const MatX<S> g_aug = head.backward(g_out);  // label rows carry no gradient onward
    MatX<S> g = nn::unflatten_spatial(MatX<S>(g_aug.topRows(feat_len)),
                                      convs.back().out_ch);
    for (std::size_t i = convs.size(); i-- > 0;)
      g = convs[i].backward(bns[i].backward(acts[i].backward(g)));
    return g;
  }

  void set_training(bool t) {
    for (auto& bn : bns) bn.training = t;
  }
  void collect(const std::string& prefix, nn::ParamList<S>& out) {
    for (std::size_t i = 0; i < convs.size(); ++i) {
      convs[i].collect(prefix + ".conv" + std::to_string(i), out);
      bns[i].collect(prefix + ".bn" + std::to_string(i), out);
    }
    head.collect(prefix + ".head", out);
  }
  void collect_buffers(const std::string& prefix,
                       std::vector<std::pair<std::string, MatX<S>*>>& out) {
    for (std::size_t i = 0; i < bns.size(); ++i) {
      out.push_back({prefix + ".bn" + std::to_string(i) + ".running_mean",
                     &bns[i].running_mean});
      out.push_back({prefix + ".bn" + std::to_string(i) + ".running_var",
                     &bns[i].running_var});
    }
  }

 private:
  MatX<S> raw_log_var_;
};

// Seven convolutions (stride 2 down to a 2x2 grid, stride 1 after) with
// leaky-ReLU activations, then one linear layer to a single logit. The
// flattened input of that linear layer is the feature-matching tap.
template <class S>
struct ConvDiscriminator {
  std::vector<nn::Conv2d<S>> convs;
  std::vector<nn::LeakyRelu<S>> acts;
  nn::Dense<S> out_layer;
  int height = 0, width = 0, feat_len = 0;

  ConvDiscriminator() = default;
  ConvDiscriminator(int height_, int width_, int base_channels, Rng& rng)
      : height(height_), width(width_) {
    int h = height, in_c = 1, c = base_channels;
    for (int i = 0; i < 7; ++i) {
      if (h > 2) {
        convs.emplace_back(in_c, c, 5, 2, 2, rng);
        h /= 2;
      } else {
        convs.emplace_back(in_c, c, 3, 1, 1, rng);
      }
      acts.emplace_back();
      in_c = c;
      c = std::min(c * 2, 64);
    }
    check(h == 2, "discriminator: input must reduce to a 2x2 grid within 7 convs");
    feat_len = in_c * 2 * 2;
    out_layer = nn::Dense<S>(feat_len, 1, rng);
  }

  // x: (1 x B*H*W) -> logits (1 x B); features cached for matching
  MatX<S> forward(const MatX<S>& x, int batch) {
    MatX<S> a = x;
    int h = height, w = width;
    for (std::size_t i = 0; i < convs.size(); ++i) {
      a = acts[i].forward(convs[i].forward(a, batch, h, w));
      std::tie(h, w) = convs[i].out_dims(h, w);
    }
    feat_cache_ = nn::flatten_spatial(a, batch);
    return out_layer.forward(feat_cache_);
  }

  const MatX<S>& features() const { return feat_cache_; }

  // combined gradient entry: through the logit and directly into the features
  MatX<S> backward(const MatX<S>& g_logits, const MatX<S>& g_feat) {
    MatX<S> g_f = out_layer.backward(g_logits);
    if (g_feat.size() > 0) g_f += g_feat;
    MatX<S> g = nn::unflatten_spatial(g_f, convs.back().out_ch);
    for (std::size_t i = convs.size(); i-- > 0;)
      g = convs[i].backward(acts[i].backward(g));
    return g;
  }

  void collect(const std::string& prefix, nn::ParamList<S>& out) {
    for (std::size_t i = 0; i < convs.size(); ++i)
      convs[i].collect(prefix + ".conv" + std::to_string(i), out);
    out_layer.collect(prefix + ".out", out);
  }

 private:
  MatX<S> feat_cache_;
};

// ---------------------------------------------------------------------------
// Mean feature matching
// ---------------------------------------------------------------------------

// ||rowmean(real) - rowmean(fake)||^2 with gradient w.r.t. the fake features.
template <class S>
std::pair<S, MatX<S>> mean_feature_distance(const MatX<S>& f_real, const MatX<S>& f_fake) {
  check(f_real.rows() == f_fake.rows() && f_real.cols() == f_fake.cols(),
        "feature matching: shape mismatch");
  check(f_real.cols() >= 1, "feature matching: empty batch");
  const VecX<S> delta = f_real.rowwise().mean() - f_fake.rowwise().mean();
  MatX<S> grad = (S(-2) / S(f_fake.cols())) * delta.replicate(1, f_fake.cols());
  return {delta.squaredNorm(), std::move(grad)};
}

// Class-wise means; both sides share the labels vector (fake batch is
// generated with the real batch's labels).
template <class S>
std::pair<S, MatX<S>> per_class_feature_distance(const MatX<S>& f_real,
                                                 const MatX<S>& f_fake,
                                                 const std::vector<int>& labels,
                                                 int n_classes) {
  check(f_real.rows() == f_fake.rows() && f_real.cols() == f_fake.cols(),
        "feature matching: shape mismatch");
  check(Eigen::Index(labels.size()) == f_real.cols(), "feature matching: labels mismatch");
  S loss = S(0);
  MatX<S> grad = MatX<S>::Zero(f_fake.rows(), f_fake.cols());
  for (int c = 0; c < n_classes; ++c) {
    VecX<S> mr = VecX<S>::Zero(f_real.rows()), mf = VecX<S>::Zero(f_real.rows());
    int count = 0;
    for (std::size_t b = 0; b < labels.size(); ++b) {
      check(labels[b] >= 0 && labels[b] < n_classes, "feature matching: label out of range");
      if (labels[b] != c) continue;
      mr += f_real.col(Eigen::Index(b));
      mf += f_fake.col(Eigen::Index(b));
      ++count;
    }
    if (count == 0) continue;
    mr /= S(count);
    mf /= S(count);
    const VecX<S> delta = mr - mf;
    loss += delta.squaredNorm();
    for (std::size_t b = 0; b < labels.size(); ++b)
      if (labels[b] == c) grad.col(Eigen::Index(b)) -= (S(2) / S(count)) * delta;
  }
  return {loss, std::move(grad)};
}

// ---------------------------------------------------------------------------
// Encoder+generator step (shared by training and the gradient checks)
// ---------------------------------------------------------------------------

// Optional classifier tap so the float production path can plug in the
// auxiliary CNN while double-precision checks plug in a small replica.
template <class S>
struct ClsTap {
  std::function<MatX<S>(const MatX<S>&, int)> pooled;          // x -> features
  std::function<MatX<S>(const MatX<S>&)> backward_from_pooled; // g_feat -> g_x
};

struct CvaeGanLoss {
  double recon = 0.0;
  double kl = 0.0;
  double gan = 0.0;      // generator-side adversarial term
  double fm_disc = 0.0;
  double fm_cls = 0.0;
  double disc_ce = 0.0;  // discriminator phase cross-entropy
  double cls_ce = 0.0;   // classifier phase cross-entropy
  double total = 0.0;    // weighted encoder+generator objective
};

// Full encoder+generator forward/backward; leaves gradients in enc and gen.
// Discriminator/classifier gradients are clobbered as a side effect; their
// own phases recompute them. noise and z_prior are (d x B).
template <class S>
CvaeGanLoss cvae_eg_forward_backward(CondEncoder<S>& enc, Decoder<S>& gen,
                                     ConvDiscriminator<S>& disc, const ClsTap<S>* cls,
                                     const CvaeGanConfig& cfg, const MatX<S>& x,
                                     const MatX<S>& onehot, const std::vector<int>& labels,
                                     int batch, const MatX<S>& noise,
                                     const MatX<S>& z_prior) {
  const auto [mu, log_var] = enc.forward(x, onehot, batch);
  check(noise.rows() == mu.rows() && noise.cols() == mu.cols(),
        "cvae step: noise shape mismatch");
  const MatX<S> std_dev = (S(0.5) * log_var.array()).exp().matrix();
  const MatX<S> z = (mu.array() + std_dev.array() * noise.array()).matrix();

  MatX<S> zy(z.rows() + onehot.rows(), batch);
  zy.topRows(z.rows()) = z;
  zy.bottomRows(onehot.rows()) = onehot;
  const MatX<S> xhat = gen.forward(zy, batch);

  CvaeGanLoss out;
  const auto [recon, g_recon] = nn::sum_squared_error(xhat, x, batch);
  out.recon = double(recon);
  out.kl = double(batched_kl(mu, log_var));
  MatX<S> g_xhat = S(cfg.w_recon) * g_recon;

  const bool use_disc = cfg.w_gan > 0.0 || cfg.w_fm > 0.0;
  if (use_disc) {
    disc.forward(x, batch);
    const MatX<S> f_real = disc.features();
    const MatX<S> logits_fake = disc.forward(xhat, batch);
    MatX<S> g_logits = MatX<S>::Zero(1, batch);
    if (cfg.w_gan > 0.0) {
      const auto [gan_loss, g_bce] = nn::binary_ce_with_logits(logits_fake, S(1));
      out.gan += double(gan_loss);
      g_logits = S(cfg.w_gan) * g_bce;
    }
    MatX<S> g_feat;
    if (cfg.w_fm > 0.0) {
      auto [fm, g_fm] = mean_feature_distance(f_real, disc.features());
      out.fm_disc = double(fm);
      g_feat = S(cfg.w_fm) * g_fm;
    }
    g_xhat += disc.backward(g_logits, g_feat);
  }

  if (cls && cfg.w_cls > 0.0) {
    const MatX<S> c_real = cls->pooled(x, batch);
    const MatX<S> c_fake = cls->pooled(xhat, batch);
    auto [fm_c, g_fm_c] = per_class_feature_distance(c_real, c_fake, labels,
                                                     cfg.n_classes);
    out.fm_cls = double(fm_c);
    g_xhat += cls->backward_from_pooled(S(cfg.w_cls) * MatX<S>(g_fm_c));
  }

  MatX<S> g_zy = gen.backward(g_xhat);

  if (cfg.w_gan > 0.0) {
    // prior-sampled branch: adversarial pressure only, through the generator
    MatX<S> zy_p(zy.rows(), batch);
    zy_p.topRows(z.rows()) = z_prior;
    zy_p.bottomRows(onehot.rows()) = onehot;
    nn::ParamList<S> gen_params;
    gen.collect("gen", gen_params);
    std::vector<MatX<S>> saved;
    saved.reserve(gen_params.size());
    for (const auto& p : gen_params) saved.push_back(*p.grad);

    const MatX<S> x_p = gen.forward(zy_p, batch);
    const auto [gan_p, g_bce_p] = nn::binary_ce_with_logits(disc.forward(x_p, batch), S(1));
    out.gan += double(gan_p);
    gen.backward(disc.backward(S(cfg.w_gan) * g_bce_p, MatX<S>()));
    for (std::size_t i = 0; i < gen_params.size(); ++i) *gen_params[i].grad += saved[i];
  }

  auto [g_mu, g_lv] = batched_kl_grad(mu, log_var, S(cfg.w_kl));
  const MatX<S> g_z = g_zy.topRows(z.rows());
  g_mu += g_z;
  g_lv.array() += S(0.5) * g_z.array() * noise.array() * std_dev.array();
  enc.backward(g_mu, g_lv);

  out.total = cfg.w_recon * out.recon + cfg.w_kl * out.kl + cfg.w_gan * out.gan +
              cfg.w_fm * out.fm_disc + cfg.w_cls * out.fm_cls;
  if (!std::isfinite(out.total)) throw std::runtime_error("cvae step: non-finite loss");
  return out;
}

// ---------------------------------------------------------------------------
// Model, training, persistence
// ---------------------------------------------------------------------------

struct CvaeGanModel {
  CvaeGanConfig cfg;
  CondEncoder<float> enc;
  Decoder<float> gen;
  ConvDiscriminator<float> disc;
  BaselineCnn cls;

  CvaeGanModel() = default;
  CvaeGanModel(const CvaeGanConfig& cfg_, Rng& rng);
  void set_training(bool t);
  void collect(nn::ParamList<float>& params);  // all four parts, declaration order
  void collect_buffers(std::vector<std::pair<std::string, Matf*>>& out);
};

struct CvaeGanDivergence : std::runtime_error {
  std::vector<CvaeGanLoss> trace;
  CvaeGanDivergence(const std::string& msg, std::vector<CvaeGanLoss> t)
      : std::runtime_error(msg), trace(std::move(t)) {}
};

struct CvaeGanTrainConfig {
  CvaeGanConfig net;
  int epochs = 30;
  int batch_size = 64;
  double lr = 1e-3;
  double disc_lr = 1e-4;
  double cls_lr = 1e-3;
  std::uint64_t seed = 1;
};

struct TrainedCvaeGan {
  CvaeGanModel model;
  std::vector<CvaeGanLoss> trace;  // per-epoch batch means
};

// labels are class indices in [0, n_classes)
TrainedCvaeGan train_cvae_gan(const std::vector<std::pair<Spectrogram, int>>& samples,
                              const CvaeGanTrainConfig& cfg);

std::vector<LatentParamsf> cond_encode(CvaeGanModel& model,
                                       const std::vector<Spectrogram>& xs,
                                       const std::vector<int>& labels);
Spectrogram generate(CvaeGanModel& model, const Vecf& z, int label);
std::vector<Spectrogram> generate(CvaeGanModel& model, const Matf& z,
                                  const std::vector<int>& labels);

void save_cvae_gan(const std::filesystem::path& path, CvaeGanModel& model);
CvaeGanModel load_cvae_gan(const std::filesystem::path& path);

}  // namespace specvae
