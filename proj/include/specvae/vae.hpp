#pragma once

// Variational autoencoder core: conv-stack or residual encoder, transposed-conv
// decoder, Gaussian reparameterization, the beta-weighted evidence bound, and
// the total-correlation penalty estimated by a density-ratio discriminator on
// dimension-permuted latents.
//
// Latent batches are (d x B); image batches are (1 x B*H*W) row-major per
// sample. Penalty conventions: total = recon + beta*kl + gamma*tc.

#include "specvae/nn.hpp"
#include "specvae/synth.hpp"

namespace specvae {

template <class S>
struct LatentParams {
  VecX<S> mu;
  VecX<S> log_var;
};
using LatentParamsf = LatentParams<float>;

// z = mu + exp(0.5*log_var) .* noise
template <class S>
VecX<S> reparameterize(const LatentParams<S>& p, const VecX<S>& noise) {
  check(p.mu.size() == p.log_var.size(), "reparameterize: mu/log_var length mismatch");
  check(noise.size() == p.mu.size(), "reparameterize: noise length mismatch");
  return (p.mu.array() + (S(0.5) * p.log_var.array()).exp() * noise.array()).matrix();
}

// KL(N(mu, diag(exp(log_var))) || N(0, I)) = sum_j 0.5*(mu_j^2 + s2_j - 1 - log s2_j)
template <class S>
S kl_gaussian(const LatentParams<S>& p) {
  check(p.mu.size() == p.log_var.size(), "kl_gaussian: mu/log_var length mismatch");
  check(p.mu.allFinite() && p.log_var.allFinite(), "kl_gaussian: non-finite input");
  const auto s2 = p.log_var.array().exp();
  const S kl = S(0.5) * (p.mu.array().square() + s2 - S(1) - p.log_var.array()).sum();
  return std::max(kl, S(0));  // clamp tiny negative rounding
}

// columns = latent dimensions, rows = batch; each column permuted independently
template <class S>
MatX<S> permute_dims(const MatX<S>& z_batch, Rng& rng) {
  const Eigen::Index batch = z_batch.rows();
  check(batch >= 1, "permute_dims: empty batch");
  MatX<S> out(batch, z_batch.cols());
  for (Eigen::Index j = 0; j < z_batch.cols(); ++j) {
    const std::vector<int> p = rng.permutation(int(batch));
    for (Eigen::Index i = 0; i < batch; ++i) out(i, j) = z_batch(p[std::size_t(i)], j);
  }
  return out;
}

struct LossBreakdown {
  double recon = 0.0;  // squared error summed over pixels, mean over batch
  double kl = 0.0;
  double tc_estimate = 0.0;
  double total = 0.0;
};

enum class EncoderKind { conv_stack, residual };

struct VaeConfig {
  int height = 64;
  int width = 64;
  int latent_dim = 16;
  int base_channels = 8;
  EncoderKind encoder = EncoderKind::conv_stack;
  double beta = 1.0;
  double gamma = 0.0;  // gamma > 0 enables the TC discriminator
  // discriminator shape; defaults follow the reference architecture
  int disc_layers = 6;
  int disc_width = 1000;
};

// Number of stride-2 stages between the image and the 2x2 bottleneck.
inline int vae_num_blocks(int height, int width) {
  check(height == width, "vae: square inputs required");
  check(height >= 8 && (height & (height - 1)) == 0, "vae: height must be a power of two >= 8");
  int n = 0;
  for (int s = height; s > 2; s /= 2) ++n;
  return n;
}

inline std::vector<int> vae_channel_plan(int n_blocks, int base_channels) {
  std::vector<int> ch(static_cast<std::size_t>(n_blocks));
  int c = base_channels;
  for (int i = 0; i < n_blocks; ++i) {
    ch[std::size_t(i)] = c;
    c = std::min(c * 2, 64);
  }
  return ch;
}

// ---------------------------------------------------------------------------
// Encoders
// ---------------------------------------------------------------------------

// Mirror of the decoder with non-transposed convolutions: stride-2 5x5 conv
// blocks with batch norm and ReLU, then one dense head emitting (mu, log_var).
template <class S>
struct ConvStackEncoder {
  std::vector<nn::Conv2d<S>> convs;
  std::vector<nn::BatchNorm<S>> bns;
  std::vector<nn::Relu<S>> acts;
  nn::Dense<S> head;
  int height = 0, width = 0, latent_dim = 0;
  int batch_cache = 0;

  ConvStackEncoder() = default;
  ConvStackEncoder(const VaeConfig& cfg, Rng& rng)
      : height(cfg.height), width(cfg.width), latent_dim(cfg.latent_dim) {
    const int n = vae_num_blocks(cfg.height, cfg.width);
    const std::vector<int> ch = vae_channel_plan(n, cfg.base_channels);
    int in_c = 1;
    for (int i = 0; i < n; ++i) {
      convs.emplace_back(in_c, ch[std::size_t(i)], 5, 2, 2, rng);
      bns.emplace_back(ch[std::size_t(i)]);
      acts.emplace_back();
      in_c = ch[std::size_t(i)];
    }
    head = nn::Dense<S>(in_c * 2 * 2, 2 * cfg.latent_dim, rng);
  }

  // x: (1 x B*H*W) -> mu, log_var each (d x B)
  std::pair<MatX<S>, MatX<S>> forward(const MatX<S>& x, int batch) {
    check(x.rows() == 1 && x.cols() == Eigen::Index(batch) * height * width,
          "encoder: input dims mismatch");
    batch_cache = batch;
    MatX<S> a = x;
    int h = height, w = width;
    for (std::size_t i = 0; i < convs.size(); ++i) {
      a = acts[i].forward(bns[i].forward(convs[i].forward(a, batch, h, w)));
      std::tie(h, w) = convs[i].out_dims(h, w);
    }
    MatX<S> feat = nn::flatten_spatial(a, batch);
    MatX<S> out = head.forward(feat);
    MatX<S> mu = out.topRows(latent_dim);
    MatX<S> log_var = out.bottomRows(latent_dim).cwiseMax(S(-20)).cwiseMin(S(20));
    raw_log_var_ = out.bottomRows(latent_dim);
    return {std::move(mu), std::move(log_var)};
  }

  MatX<S> backward(const MatX<S>& g_mu, const MatX<S>& g_log_var) {
    MatX<S> g_out(2 * latent_dim, g_mu.cols());
    g_out.topRows(latent_dim) = g_mu;
    // zero gradient where the clamp was active
    g_out.bottomRows(latent_dim) =
        ((raw_log_var_.array().abs() < S(20)).template cast<S>() * g_log_var.array())
            .matrix();
    MatX<S> g = nn::unflatten_spatial(head.backward(g_out), convs.back().out_ch);
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

// Small residual CNN encoder: stem conv, stride-2 residual blocks, global
// average pooling, dense head.
template <class S>
struct ResidualEncoder {
  nn::Conv2d<S> stem;
  nn::BatchNorm<S> stem_bn;
  nn::Relu<S> stem_act;
  std::vector<nn::ResidualBlock<S>> blocks;
  nn::GlobalAvgPool<S> pool;
  nn::Dense<S> head;
  int height = 0, width = 0, latent_dim = 0;

  ResidualEncoder() = default;
  ResidualEncoder(const VaeConfig& cfg, Rng& rng)
      : stem(1, cfg.base_channels, 3, 1, 1, rng),
        stem_bn(cfg.base_channels),
        height(cfg.height), width(cfg.width), latent_dim(cfg.latent_dim) {
    const int n = vae_num_blocks(cfg.height, cfg.width);
    const std::vector<int> ch = vae_channel_plan(n, cfg.base_channels);
    int in_c = cfg.base_channels;
    for (int i = 0; i < n; ++i) {
      blocks.emplace_back(in_c, ch[std::size_t(i)], 2, rng);
      in_c = ch[std::size_t(i)];
    }
    head = nn::Dense<S>(in_c, 2 * cfg.latent_dim, rng);
  }

  std::pair<MatX<S>, MatX<S>> forward(const MatX<S>& x, int batch) {
    check(x.rows() == 1 && x.cols() == Eigen::Index(batch) * height * width,
          "encoder: input dims mismatch");
    MatX<S> a = stem_act.forward(stem_bn.forward(stem.forward(x, batch, height, width)));
    int h = height, w = width;
    for (auto& blk : blocks) {
      a = blk.forward(a, batch, h, w);
      std::tie(h, w) = blk.out_dims(h, w);
    }
    MatX<S> out = head.forward(pool.forward(a, batch));
    MatX<S> mu = out.topRows(latent_dim);
    MatX<S> log_var = out.bottomRows(latent_dim).cwiseMax(S(-20)).cwiseMin(S(20));
    raw_log_var_ = out.bottomRows(latent_dim);
    return {std::move(mu), std::move(log_var)};
  }

  MatX<S> backward(const MatX<S>& g_mu, const MatX<S>& g_log_var) {
    MatX<S> g_out(2 * latent_dim, g_mu.cols());
    g_out.topRows(latent_dim) = g_mu;
    g_out.bottomRows(latent_dim) =
        ((raw_log_var_.array().abs() < S(20)).template cast<S>() * g_log_var.array())
            .matrix();
    MatX<S> g = pool.backward(head.backward(g_out));
    for (std::size_t i = blocks.size(); i-- > 0;) g = blocks[i].backward(g);
    return stem.backward(stem_bn.backward(stem_act.backward(g)));
  }

  void set_training(bool t) {
    stem_bn.training = t;
    for (auto& blk : blocks) blk.set_training(t);
  }
  void collect(const std::string& prefix, nn::ParamList<S>& out) {
    stem.collect(prefix + ".stem", out);
    stem_bn.collect(prefix + ".stem_bn", out);
    for (std::size_t i = 0; i < blocks.size(); ++i)
      blocks[i].collect(prefix + ".block" + std::to_string(i), out);
    head.collect(prefix + ".head", out);
  }
  void collect_buffers(const std::string& prefix,
                       std::vector<std::pair<std::string, MatX<S>*>>& out) {
    out.push_back({prefix + ".stem_bn.running_mean", &stem_bn.running_mean});
    out.push_back({prefix + ".stem_bn.running_var", &stem_bn.running_var});
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const std::string p = prefix + ".block" + std::to_string(i);
      out.push_back({p + ".bn1.running_mean", &blocks[i].bn1.running_mean});
      out.push_back({p + ".bn1.running_var", &blocks[i].bn1.running_var});
      out.push_back({p + ".bn2.running_mean", &blocks[i].bn2.running_mean});
      out.push_back({p + ".bn2.running_var", &blocks[i].bn2.running_var});
      if (blocks[i].bn_proj) {
        out.push_back({p + ".bn_proj.running_mean", &blocks[i].bn_proj->running_mean});
        out.push_back({p + ".bn_proj.running_var", &blocks[i].bn_proj->running_var});
      }
    }
  }

 private:
  MatX<S> raw_log_var_;
};

// ---------------------------------------------------------------------------
// Decoder: dense projection to a 2x2 bottleneck, then 5x5 stride-2 transposed
// convolutions (output padding 1) with batch norm and ReLU; final block uses a
// sigmoid and no batch norm so outputs live in (0,1).
// ---------------------------------------------------------------------------

template <class S>
struct Decoder {
  nn::Dense<S> fc;
  std::vector<nn::ConvTranspose2d<S>> convs;
  std::vector<nn::BatchNorm<S>> bns;   // one per non-final block
  std::vector<nn::Relu<S>> acts;
  nn::Sigmoid<S> out_act;
  int height = 0, width = 0, latent_dim = 0, bottleneck_ch = 0;
  int batch_cache = 0;

  Decoder() = default;
  Decoder(const VaeConfig& cfg, Rng& rng)
      : height(cfg.height), width(cfg.width), latent_dim(cfg.latent_dim) {
    const int n = vae_num_blocks(cfg.height, cfg.width);
    std::vector<int> ch = vae_channel_plan(n, cfg.base_channels);
    std::reverse(ch.begin(), ch.end());  // widest at the bottleneck
    bottleneck_ch = ch.front();
    fc = nn::Dense<S>(cfg.latent_dim, bottleneck_ch * 2 * 2, rng);
    int in_c = bottleneck_ch;
    for (int i = 0; i < n; ++i) {
      const int out_c = i + 1 < n ? ch[std::size_t(i + 1)] : 1;
      convs.emplace_back(in_c, out_c, 5, 2, 2, 1, rng);
      if (i + 1 < n) {
        bns.emplace_back(out_c);
        bns.back().momentum = S(0.9);
        acts.emplace_back();
      }
      in_c = out_c;
    }
  }

  // z: (d x B) -> (1 x B*H*W)
  MatX<S> forward(const MatX<S>& z, int batch) {
    check(z.rows() == latent_dim, "decode: latent length mismatch");
    batch_cache = batch;
    MatX<S> a = nn::unflatten_spatial(fc.forward(z), bottleneck_ch);
    int h = 2, w = 2;
    for (std::size_t i = 0; i < convs.size(); ++i) {
      a = convs[i].forward(a, batch, h, w);
      std::tie(h, w) = convs[i].out_dims(h, w);
      if (i + 1 < convs.size()) a = acts[i].forward(bns[i].forward(a));
    }
    return out_act.forward(a);
  }

  MatX<S> backward(const MatX<S>& gy) {
    MatX<S> g = out_act.backward(gy);
    for (std::size_t i = convs.size(); i-- > 0;) {
      if (i + 1 < convs.size()) g = bns[i].backward(acts[i].backward(g));
      g = convs[i].backward(g);
    }
    return fc.backward(nn::flatten_spatial(g, batch_cache));
  }

  void set_training(bool t) {
    for (auto& bn : bns) bn.training = t;
  }
  void collect(const std::string& prefix, nn::ParamList<S>& out) {
    fc.collect(prefix + ".fc", out);
    for (std::size_t i = 0; i < convs.size(); ++i) {
      convs[i].collect(prefix + ".convt" + std::to_string(i), out);
      if (i < bns.size()) bns[i].collect(prefix + ".bn" + std::to_string(i), out);
    }
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
};

// ---------------------------------------------------------------------------
// TC discriminator: fully connected stack with leaky-ReLU activations and a
// two-logit output (class 0 = joint latents, class 1 = permuted latents).
// ---------------------------------------------------------------------------

template <class S>
struct TcDiscriminator {
  std::vector<nn::Dense<S>> layers;
  std::vector<nn::LeakyRelu<S>> acts;
  nn::Dense<S> out_layer;

  TcDiscriminator() = default;
  TcDiscriminator(int latent_dim, int n_layers, int width, Rng& rng) {
    int in = latent_dim;
    for (int i = 0; i < n_layers; ++i) {
      layers.emplace_back(in, width, rng);
      acts.emplace_back();
      in = width;
    }
    out_layer = nn::Dense<S>(in, 2, rng);
  }

  // z: (d x B) -> logits (2 x B)
  MatX<S> forward(const MatX<S>& z) {
    MatX<S> a = z;
    for (std::size_t i = 0; i < layers.size(); ++i)
      a = acts[i].forward(layers[i].forward(a));
    return out_layer.forward(a);
  }

  MatX<S> backward(const MatX<S>& g_logits) {
    MatX<S> g = out_layer.backward(g_logits);
    for (std::size_t i = layers.size(); i-- > 0;)
      g = layers[i].backward(acts[i].backward(g));
    return g;
  }

  void collect(const std::string& prefix, nn::ParamList<S>& out) {
    for (std::size_t i = 0; i < layers.size(); ++i)
      layers[i].collect(prefix + ".fc" + std::to_string(i), out);
    out_layer.collect(prefix + ".out", out);
  }
};

// Density-ratio TC estimate: mean over the batch of (joint logit - permuted
// logit) evaluated on latents from the posterior.
template <class S>
S tc_penalty(const MatX<S>& z_batch, TcDiscriminator<S>& discriminator) {
  check(z_batch.cols() >= 1, "tc_penalty: empty batch");
  const MatX<S> logits = discriminator.forward(z_batch);
  return (logits.row(0) - logits.row(1)).mean();
}

// ---------------------------------------------------------------------------
// Full model
// ---------------------------------------------------------------------------

template <class S>
struct VaeNet {
  VaeConfig cfg;
  EncoderKind kind = EncoderKind::conv_stack;
  std::optional<ConvStackEncoder<S>> conv_enc;
  std::optional<ResidualEncoder<S>> res_enc;
  Decoder<S> decoder;

  VaeNet() = default;
  VaeNet(const VaeConfig& cfg_, Rng& rng) : cfg(cfg_), kind(cfg_.encoder) {
    if (kind == EncoderKind::conv_stack)
      conv_enc.emplace(cfg, rng);
    else
      res_enc.emplace(cfg, rng);
    decoder = Decoder<S>(cfg, rng);
  }

  std::pair<MatX<S>, MatX<S>> encode_batch(const MatX<S>& x, int batch) {
    return kind == EncoderKind::conv_stack ? conv_enc->forward(x, batch)
                                           : res_enc->forward(x, batch);
  }
  MatX<S> encoder_backward(const MatX<S>& g_mu, const MatX<S>& g_log_var) {
    return kind == EncoderKind::conv_stack ? conv_enc->backward(g_mu, g_log_var)
                                           : res_enc->backward(g_mu, g_log_var);
  }
  MatX<S> decode_batch(const MatX<S>& z, int batch) { return decoder.forward(z, batch); }

  void set_training(bool t) {
    if (conv_enc) conv_enc->set_training(t);
    if (res_enc) res_enc->set_training(t);
    decoder.set_training(t);
  }
  void collect(nn::ParamList<S>& out) {
    if (conv_enc) conv_enc->collect("encoder", out);
    if (res_enc) res_enc->collect("encoder", out);
    decoder.collect("decoder", out);
  }
  void collect_buffers(std::vector<std::pair<std::string, MatX<S>*>>& out) {
    if (conv_enc) conv_enc->collect_buffers("encoder", out);
    if (res_enc) res_enc->collect_buffers("encoder", out);
    decoder.collect_buffers("decoder", out);
  }
};

template <class S>
struct VaeModel {
  VaeNet<S> net;
  std::optional<TcDiscriminator<S>> disc;
  double beta = 1.0;
  double gamma = 0.0;

  VaeModel() = default;
  VaeModel(const VaeConfig& cfg, Rng& rng) : net(cfg, rng), beta(cfg.beta), gamma(cfg.gamma) {
    check(cfg.beta >= 1.0, "vae: beta must be >= 1");
    check(cfg.gamma >= 0.0, "vae: gamma must be >= 0");
    if (cfg.gamma > 0.0)
      disc.emplace(cfg.latent_dim, cfg.disc_layers, cfg.disc_width, rng);
  }
  const VaeConfig& config() const { return net.cfg; }
};
using VaeModelf = VaeModel<float>;

// Assembles the objective; recon = squared error summed over pixels, mean
// over batch. Throws naming the offending component on non-finite values.
inline LossBreakdown elbo_loss(double recon, double kl, double beta, double gamma,
                               double tc) {
  LossBreakdown out;
  out.recon = recon;
  out.kl = kl;
  out.tc_estimate = tc;
  out.total = recon + beta * kl + gamma * tc;
  if (!std::isfinite(out.recon)) throw std::runtime_error("loss: recon is non-finite");
  if (!std::isfinite(out.kl)) throw std::runtime_error("loss: kl is non-finite");
  if (!std::isfinite(out.tc_estimate)) throw std::runtime_error("loss: tc is non-finite");
  return out;
}

// Mean over batch columns of the per-sample closed-form KL.
template <class S>
S batched_kl(const MatX<S>& mu, const MatX<S>& log_var) {
  check(mu.rows() == log_var.rows() && mu.cols() == log_var.cols(),
        "batched_kl: shape mismatch");
  const auto s2 = log_var.array().exp();
  const S kl = S(0.5) *
               (mu.array().square() + s2 - S(1) - log_var.array()).colwise().sum().sum() /
               S(mu.cols());
  return std::max(kl, S(0));
}

template <class S>
LossBreakdown elbo_loss(const MatX<S>& x, const MatX<S>& xhat, const MatX<S>& mu,
                        const MatX<S>& log_var, double beta, double gamma, double tc) {
  check(x.rows() == xhat.rows() && x.cols() == xhat.cols(), "elbo_loss: dims mismatch");
  const auto [recon, grad] = nn::sum_squared_error(xhat, x, int(mu.cols()));
  (void)grad;
  const S kl = batched_kl(mu, log_var);
  return elbo_loss(double(recon), double(kl), beta, gamma, tc);
}

// Gradients of batched_kl * weight w.r.t. mu and log_var.
template <class S>
std::pair<MatX<S>, MatX<S>> batched_kl_grad(const MatX<S>& mu, const MatX<S>& log_var,
                                            S weight) {
  const S scale = weight / S(mu.cols());
  MatX<S> g_mu = scale * mu;
  MatX<S> g_lv = (S(0.5) * scale) * (log_var.array().exp() - S(1)).matrix();
  return {std::move(g_mu), std::move(g_lv)};
}

// ---------------------------------------------------------------------------
// Spectrogram <-> batch-matrix packing
// ---------------------------------------------------------------------------

template <class S>
MatX<S> pack_images(const std::vector<const Imagef*>& images, int height, int width) {
  MatX<S> x(1, Eigen::Index(images.size()) * height * width);
  for (std::size_t b = 0; b < images.size(); ++b) {
    check(images[b]->rows() == height && images[b]->cols() == width,
          "pack_images: dims mismatch");
    for (Eigen::Index i = 0; i < images[b]->size(); ++i)
      x(0, Eigen::Index(b) * height * width + i) = S(images[b]->data()[i]);
  }
  return x;
}

inline Imagef unpack_image(const Matf& x, int sample, int height, int width) {
  Imagef img(height, width);
  const Eigen::Index off = Eigen::Index(sample) * height * width;
  for (Eigen::Index i = 0; i < img.size(); ++i) img.data()[i] = x(0, off + i);
  return img;
}

// Spec-shaped wrappers over the batched forms.
std::vector<LatentParamsf> encode(VaeModelf& model, const std::vector<Spectrogram>& xs);
std::vector<Spectrogram> decode(VaeModelf& model, const std::vector<Vecf>& zs);

}  // namespace specvae
