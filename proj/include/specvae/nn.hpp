#pragma once

// Minimal dense/conv network building blocks on Eigen. Layers are templated
// on the scalar so the same graph can run in float for training and in
// double for finite-difference checks. Activations are stored as 2-D
// matrices: dense features as (F x B), conv feature maps as
// (C x B*H*W) with pixel column index ((b*H + y)*W + x).
//
// backward() overwrites parameter gradients; combine multi-term losses by
// summing output gradients before the single backward pass.

#include "specvae/common.hpp"

#include <optional>
#include <utility>

namespace specvae::nn {

template <class S>
struct ParamRef {
  std::string name;
  MatX<S>* value;
  MatX<S>* grad;
};

template <class S>
using ParamList = std::vector<ParamRef<S>>;

// ---------------------------------------------------------------------------
// im2col / col2im
// ---------------------------------------------------------------------------

struct ConvGeom {
  int batch, img_h, img_w;  // side the patches are gathered from / scattered to
  int out_h, out_w;         // grid of patch centers
  int k, stride, pad;
};

inline int conv_out_dim(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

inline int conv_transpose_out_dim(int in, int k, int stride, int pad, int out_pad) {
  return (in - 1) * stride - 2 * pad + k + out_pad;
}

// x: (C x B*img_h*img_w) -> (C*k*k x B*out_h*out_w), zero padded.
template <class S>
MatX<S> im2col(const MatX<S>& x, const ConvGeom& g) {
  const int C = int(x.rows());
  MatX<S> cols = MatX<S>::Zero(Eigen::Index(C) * g.k * g.k,
                               Eigen::Index(g.batch) * g.out_h * g.out_w);
  for (int b = 0; b < g.batch; ++b) {
    for (int oy = 0; oy < g.out_h; ++oy) {
      for (int ox = 0; ox < g.out_w; ++ox) {
        const Eigen::Index col = (Eigen::Index(b) * g.out_h + oy) * g.out_w + ox;
        for (int dy = 0; dy < g.k; ++dy) {
          const int iy = oy * g.stride - g.pad + dy;
          if (iy < 0 || iy >= g.img_h) continue;
          for (int dx = 0; dx < g.k; ++dx) {
            const int ix = ox * g.stride - g.pad + dx;
            if (ix < 0 || ix >= g.img_w) continue;
            const Eigen::Index pix = (Eigen::Index(b) * g.img_h + iy) * g.img_w + ix;
            const Eigen::Index row0 = Eigen::Index(dy) * g.k + dx;
            for (int c = 0; c < C; ++c)
              cols(Eigen::Index(c) * g.k * g.k + row0, col) = x(c, pix);
          }
        }
      }
    }
  }
  return cols;
}

// Adjoint of im2col: scatter-adds columns back into an image.
template <class S>
MatX<S> col2im(const MatX<S>& cols, int channels, const ConvGeom& g) {
  MatX<S> x = MatX<S>::Zero(channels, Eigen::Index(g.batch) * g.img_h * g.img_w);
  for (int b = 0; b < g.batch; ++b) {
    for (int oy = 0; oy < g.out_h; ++oy) {
      for (int ox = 0; ox < g.out_w; ++ox) {
        const Eigen::Index col = (Eigen::Index(b) * g.out_h + oy) * g.out_w + ox;
        for (int dy = 0; dy < g.k; ++dy) {
          const int iy = oy * g.stride - g.pad + dy;
          if (iy < 0 || iy >= g.img_h) continue;
          for (int dx = 0; dx < g.k; ++dx) {
            const int ix = ox * g.stride - g.pad + dx;
            if (ix < 0 || ix >= g.img_w) continue;
            const Eigen::Index pix = (Eigen::Index(b) * g.img_h + iy) * g.img_w + ix;
            const Eigen::Index row0 = Eigen::Index(dy) * g.k + dx;
            for (int c = 0; c < channels; ++c)
              x(c, pix) += cols(Eigen::Index(c) * g.k * g.k + row0, col);
          }
        }
      }
    }
  }
  return x;
}

// (C x B*P) -> (C*P x B), channel-major per sample. P inferred from columns.
template <class S>
MatX<S> flatten_spatial(const MatX<S>& a, int batch) {
  const Eigen::Index C = a.rows();
  const Eigen::Index P = a.cols() / batch;
  MatX<S> out(C * P, batch);
  for (Eigen::Index b = 0; b < batch; ++b)
    for (Eigen::Index c = 0; c < C; ++c)
      out.block(c * P, b, P, 1) = a.block(c, b * P, 1, P).transpose();
  return out;
}

template <class S>
MatX<S> unflatten_spatial(const MatX<S>& x, int channels) {
  const Eigen::Index batch = x.cols();
  const Eigen::Index P = x.rows() / channels;
  MatX<S> out(channels, batch * P);
  for (Eigen::Index b = 0; b < batch; ++b)
    for (Eigen::Index c = 0; c < channels; ++c)
      out.block(c, b * P, 1, P) = x.block(c * P, b, P, 1).transpose();
  return out;
}

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------

template <class S>
void he_uniform_init(MatX<S>& w, int fan_in, Rng& rng) {
  const double limit = std::sqrt(6.0 / double(fan_in));
  for (Eigen::Index c = 0; c < w.cols(); ++c)
    for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = S(rng.uniform(-limit, limit));
}

template <class S>
struct Dense {
  MatX<S> weight, bias;            // weight: out x in, bias: out x 1
  MatX<S> grad_weight, grad_bias;
  MatX<S> in_cache;

  Dense() = default;
  Dense(int in, int out, Rng& rng)
      : weight(out, in),
        bias(MatX<S>::Zero(out, 1)),
        grad_weight(MatX<S>::Zero(out, in)),
        grad_bias(MatX<S>::Zero(out, 1)) {
    he_uniform_init(weight, in, rng);
  }

  MatX<S> forward(const MatX<S>& x) {
    in_cache = x;
    return (weight * x).colwise() + bias.col(0);
  }

  MatX<S> backward(const MatX<S>& gy) {
    grad_weight = gy * in_cache.transpose();
    grad_bias = gy.rowwise().sum();
    return weight.transpose() * gy;
  }

  void collect(const std::string& prefix, ParamList<S>& out) {
    out.push_back({prefix + ".weight", &weight, &grad_weight});
    out.push_back({prefix + ".bias", &bias, &grad_bias});
  }
};

template <class S>
struct Conv2d {
  int in_ch = 0, out_ch = 0, k = 3, stride = 1, pad = 1;
  MatX<S> weight, bias;  // weight: out_ch x in_ch*k*k
  MatX<S> grad_weight, grad_bias;
  MatX<S> cols_cache;
  ConvGeom geom_cache{};

  Conv2d() = default;
  Conv2d(int in_c, int out_c, int kernel, int stride_, int pad_, Rng& rng)
      : in_ch(in_c), out_ch(out_c), k(kernel), stride(stride_), pad(pad_),
        weight(out_c, in_c * kernel * kernel),
        bias(MatX<S>::Zero(out_c, 1)),
        grad_weight(MatX<S>::Zero(out_c, in_c * kernel * kernel)),
        grad_bias(MatX<S>::Zero(out_c, 1)) {
    he_uniform_init(weight, in_c * kernel * kernel, rng);
  }

  std::pair<int, int> out_dims(int h, int w) const {
    return {conv_out_dim(h, k, stride, pad), conv_out_dim(w, k, stride, pad)};
  }

  // x: (in_ch x B*H*W) -> (out_ch x B*OH*OW)
  MatX<S> forward(const MatX<S>& x, int batch, int h, int w) {
    const auto [oh, ow] = out_dims(h, w);
    geom_cache = {batch, h, w, oh, ow, k, stride, pad};
    cols_cache = im2col(x, geom_cache);
    return (weight * cols_cache).colwise() + bias.col(0);
  }

  MatX<S> backward(const MatX<S>& gy) {
    grad_weight = gy * cols_cache.transpose();
    grad_bias = gy.rowwise().sum();
    return col2im<S>(weight.transpose() * gy, in_ch, geom_cache);
  }

  void collect(const std::string& prefix, ParamList<S>& out) {
    out.push_back({prefix + ".weight", &weight, &grad_weight});
    out.push_back({prefix + ".bias", &bias, &grad_bias});
  }
};

template <class S>
struct ConvTranspose2d {
  int in_ch = 0, out_ch = 0, k = 5, stride = 2, pad = 2, out_pad = 1;
  MatX<S> weight, bias;  // weight: in_ch x out_ch*k*k
  MatX<S> grad_weight, grad_bias;
  MatX<S> in_cache;
  ConvGeom geom_cache{};

  ConvTranspose2d() = default;
  ConvTranspose2d(int in_c, int out_c, int kernel, int stride_, int pad_, int out_pad_,
                  Rng& rng)
      : in_ch(in_c), out_ch(out_c), k(kernel), stride(stride_), pad(pad_), out_pad(out_pad_),
        weight(in_c, out_c * kernel * kernel),
        bias(MatX<S>::Zero(out_c, 1)),
        grad_weight(MatX<S>::Zero(in_c, out_c * kernel * kernel)),
        grad_bias(MatX<S>::Zero(out_c, 1)) {
    // fan_in of the equivalent forward conv
    he_uniform_init(weight, in_c * kernel * kernel, rng);
  }

  std::pair<int, int> out_dims(int h, int w) const {
    return {conv_transpose_out_dim(h, k, stride, pad, out_pad),
            conv_transpose_out_dim(w, k, stride, pad, out_pad)};
  }

  // x: (in_ch x B*H*W) -> (out_ch x B*OH*OW)
  MatX<S> forward(const MatX<S>& x, int batch, int h, int w) {
    const auto [oh, ow] = out_dims(h, w);
    // the transposed conv scatters into the larger output image
    geom_cache = {batch, oh, ow, h, w, k, stride, pad};
    in_cache = x;
    MatX<S> y = col2im<S>(weight.transpose() * x, out_ch, geom_cache);
    y.colwise() += bias.col(0);
    return y;
  }

  MatX<S> backward(const MatX<S>& gy) {
    const MatX<S> gcols = im2col(gy, geom_cache);  // (out_ch*k*k x B*H*W)
    grad_weight = in_cache * gcols.transpose();
    grad_bias = gy.rowwise().sum();
    return weight * gcols;
  }

  void collect(const std::string& prefix, ParamList<S>& out) {
    out.push_back({prefix + ".weight", &weight, &grad_weight});
    out.push_back({prefix + ".bias", &bias, &grad_bias});
  }
};

// Normalizes each row over all columns; rows are channels (spatial maps) or
// features (dense). Running stats follow decay*running + (1-decay)*batch.
template <class S>
struct BatchNorm {
  MatX<S> gamma, beta;
  MatX<S> grad_gamma, grad_beta;
  MatX<S> running_mean, running_var;
  S momentum = S(0.9);
  S eps = S(1e-5);
  bool training = true;

  MatX<S> xhat_cache;
  VecX<S> inv_std_cache;

  BatchNorm() = default;
  explicit BatchNorm(int channels)
      : gamma(MatX<S>::Ones(channels, 1)),
        beta(MatX<S>::Zero(channels, 1)),
        grad_gamma(MatX<S>::Zero(channels, 1)),
        grad_beta(MatX<S>::Zero(channels, 1)),
        running_mean(MatX<S>::Zero(channels, 1)),
        running_var(MatX<S>::Ones(channels, 1)) {}

  MatX<S> forward(const MatX<S>& x) {
    const Eigen::Index n = x.cols();
    if (training) {
      const VecX<S> mean = x.rowwise().mean();
      const MatX<S> centered = x.colwise() - mean;
      const VecX<S> var = centered.array().square().rowwise().mean();
      inv_std_cache = (var.array() + eps).rsqrt();
      xhat_cache = (centered.array().colwise() * inv_std_cache.array()).matrix();
      const S unbias = n > 1 ? S(n) / S(n - 1) : S(1);
      running_mean = momentum * running_mean + (S(1) - momentum) * mean;
      running_var = (momentum * running_var.array() +
                     (S(1) - momentum) * unbias * var.array())
                        .matrix();
      return ((xhat_cache.array().colwise() * gamma.col(0).array()).colwise() +
              beta.col(0).array())
          .matrix();
    }
    const VecX<S> inv_std = (running_var.col(0).array() + eps).rsqrt();
    inv_std_cache = inv_std;
    xhat_cache =
        ((x.colwise() - running_mean.col(0)).array().colwise() * inv_std.array()).matrix();
    return ((xhat_cache.array().colwise() * gamma.col(0).array()).colwise() +
            beta.col(0).array())
        .matrix();
  }

  MatX<S> backward(const MatX<S>& gy) {
    grad_gamma = (gy.array() * xhat_cache.array()).rowwise().sum().matrix();
    grad_beta = gy.rowwise().sum();
    const MatX<S> g = (gy.array().colwise() * gamma.col(0).array()).matrix();
    if (!training)
      return (g.array().colwise() * inv_std_cache.array()).matrix();
    const S n = S(gy.cols());
    const VecX<S> sum_g = g.rowwise().sum();
    const VecX<S> sum_gx = (g.array() * xhat_cache.array()).rowwise().sum().matrix();
    MatX<S> gx = n * g;
    gx.colwise() -= sum_g;
    gx -= (xhat_cache.array().colwise() * sum_gx.array()).matrix();
    return ((gx.array().colwise() * inv_std_cache.array()) / n).matrix();
  }

  void collect(const std::string& prefix, ParamList<S>& out) {
    out.push_back({prefix + ".gamma", &gamma, &grad_gamma});
    out.push_back({prefix + ".beta", &beta, &grad_beta});
  }
};

template <class S>
struct Relu {
  MatX<S> in_cache;
  MatX<S> forward(const MatX<S>& x) {
    in_cache = x;
    return x.cwiseMax(S(0));
  }
  MatX<S> backward(const MatX<S>& gy) {
    return ((in_cache.array() > S(0)).template cast<S>() * gy.array()).matrix();
  }
};

template <class S>
struct LeakyRelu {
  S slope = S(0.2);
  MatX<S> in_cache;
  MatX<S> forward(const MatX<S>& x) {
    in_cache = x;
    return x.array().max(slope * x.array()).matrix();
  }
  MatX<S> backward(const MatX<S>& gy) {
    return (((in_cache.array() > S(0)).template cast<S>() +
             (in_cache.array() <= S(0)).template cast<S>() * slope) *
            gy.array())
        .matrix();
  }
};

template <class S>
struct Sigmoid {
  MatX<S> out_cache;
  MatX<S> forward(const MatX<S>& x) {
    out_cache = (S(1) / (S(1) + (-x.array()).exp())).matrix();
    return out_cache;
  }
  MatX<S> backward(const MatX<S>& gy) {
    return (gy.array() * out_cache.array() * (S(1) - out_cache.array())).matrix();
  }
};

// Mean over each sample's pixels, per channel: (C x B*P) -> (C x B).
template <class S>
struct GlobalAvgPool {
  Eigen::Index pixels = 0;
  MatX<S> forward(const MatX<S>& x, int batch) {
    pixels = x.cols() / batch;
    MatX<S> y(x.rows(), batch);
    for (Eigen::Index b = 0; b < batch; ++b)
      y.col(b) = x.middleCols(b * pixels, pixels).rowwise().mean();
    return y;
  }
  MatX<S> backward(const MatX<S>& gy) {
    MatX<S> gx(gy.rows(), gy.cols() * pixels);
    for (Eigen::Index b = 0; b < gy.cols(); ++b)
      gx.middleCols(b * pixels, pixels) = (gy.col(b) / S(pixels)).replicate(1, pixels);
    return gx;
  }
};

// conv-bn-relu-conv-bn plus identity or 1x1 projection skip
template <class S>
struct ResidualBlock {
  Conv2d<S> conv1, conv2;
  BatchNorm<S> bn1, bn2;
  Relu<S> act1, act2;
  std::optional<Conv2d<S>> proj;
  std::optional<BatchNorm<S>> bn_proj;
  MatX<S> skip_cache;
  int in_h = 0, in_w = 0, batch = 0;

  ResidualBlock() = default;
  ResidualBlock(int in_c, int out_c, int stride, Rng& rng)
      : conv1(in_c, out_c, 3, stride, 1, rng),
        conv2(out_c, out_c, 3, 1, 1, rng),
        bn1(out_c),
        bn2(out_c) {
    if (stride != 1 || in_c != out_c) {
      proj.emplace(in_c, out_c, 1, stride, 0, rng);
      bn_proj.emplace(out_c);
    }
  }

  MatX<S> forward(const MatX<S>& x, int b, int h, int w) {
    batch = b; in_h = h; in_w = w;
    const auto [oh, ow] = conv1.out_dims(h, w);
    MatX<S> y = act1.forward(bn1.forward(conv1.forward(x, b, h, w)));
    y = bn2.forward(conv2.forward(y, b, oh, ow));
    skip_cache = proj ? bn_proj->forward(proj->forward(x, b, h, w)) : x;
    return act2.forward(y + skip_cache);
  }

  MatX<S> backward(const MatX<S>& gy) {
    const MatX<S> g = act2.backward(gy);
    MatX<S> gx_main = conv1.backward(bn1.backward(act1.backward(
        conv2.backward(bn2.backward(g)))));
    MatX<S> gx_skip = proj ? proj->backward(bn_proj->backward(g)) : g;
    return gx_main + gx_skip;
  }

  std::pair<int, int> out_dims(int h, int w) const { return conv1.out_dims(h, w); }

  void set_training(bool t) {
    bn1.training = t;
    bn2.training = t;
    if (bn_proj) bn_proj->training = t;
  }

  void collect(const std::string& prefix, ParamList<S>& out) {
    conv1.collect(prefix + ".conv1", out);
    bn1.collect(prefix + ".bn1", out);
    conv2.collect(prefix + ".conv2", out);
    bn2.collect(prefix + ".bn2", out);
    if (proj) {
      proj->collect(prefix + ".proj", out);
      bn_proj->collect(prefix + ".bn_proj", out);
    }
  }
};

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

// Squared error summed over all per-sample entries, averaged over the batch.
// The batch count is explicit because layouts pack samples differently.
// Returns the loss and d(loss)/d(xhat).
template <class S>
std::pair<S, MatX<S>> sum_squared_error(const MatX<S>& xhat, const MatX<S>& x,
                                        int batch) {
  check(xhat.rows() == x.rows() && xhat.cols() == x.cols(),
        "sum_squared_error: shape mismatch");
  check(batch >= 1, "sum_squared_error: batch must be >= 1");
  const MatX<S> diff = xhat - x;
  const S loss = diff.array().square().sum() / S(batch);
  return {loss, (S(2) / S(batch)) * diff};
}

template <class S>
struct SoftmaxCeResult {
  S loss;
  MatX<S> grad_logits;
  MatX<S> probs;
};

// logits: (K x B); mean cross-entropy over the batch.
template <class S>
SoftmaxCeResult<S> softmax_cross_entropy(const MatX<S>& logits,
                                         const std::vector<int>& labels) {
  const Eigen::Index batch = logits.cols();
  check(Eigen::Index(labels.size()) == batch, "softmax_cross_entropy: label count");
  MatX<S> probs(logits.rows(), batch);
  S loss = S(0);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const S mx = logits.col(b).maxCoeff();
    VecX<S> e = (logits.col(b).array() - mx).exp();
    const S z = e.sum();
    probs.col(b) = e / z;
    loss -= std::log(std::max(probs(labels[std::size_t(b)], b),
                              std::numeric_limits<S>::min()));
  }
  loss /= S(batch);
  MatX<S> grad = probs;
  for (Eigen::Index b = 0; b < batch; ++b) grad(labels[std::size_t(b)], b) -= S(1);
  grad /= S(batch);
  return {loss, std::move(grad), std::move(probs)};
}

// logits: (1 x B), target: 1 for "real", 0 for "fake"; mean over batch.
template <class S>
std::pair<S, MatX<S>> binary_ce_with_logits(const MatX<S>& logits, S target) {
  const Eigen::Index batch = logits.cols();
  S loss = S(0);
  MatX<S> grad(1, batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const S v = logits(0, b);
    // log(1+exp(-|v|)) + max(v,0) - v*target, numerically stable
    loss += std::log1p(std::exp(-std::abs(v))) + std::max(v, S(0)) - v * target;
    const S sig = S(1) / (S(1) + std::exp(-v));
    grad(0, b) = (sig - target) / S(batch);
  }
  return {loss / S(batch), grad};
}

// Per-column targets (mixed real/fake batches), same mean reduction.
template <class S>
std::pair<S, MatX<S>> binary_ce_with_logits(const MatX<S>& logits, const VecX<S>& targets) {
  check(logits.rows() == 1 && logits.cols() == targets.size(),
        "binary_ce: logits/targets shape mismatch");
  const Eigen::Index batch = logits.cols();
  S loss = S(0);
  MatX<S> grad(1, batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    const S v = logits(0, b), t = targets(b);
    loss += std::log1p(std::exp(-std::abs(v))) + std::max(v, S(0)) - v * t;
    const S sig = S(1) / (S(1) + std::exp(-v));
    grad(0, b) = (sig - t) / S(batch);
  }
  return {loss / S(batch), grad};
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

template <class S>
struct Adam {
  S lr = S(1e-4);
  S beta1 = S(0.9);
  S beta2 = S(0.999);
  S eps = S(1e-8);
  long t = 0;
  std::vector<MatX<S>> m, v;

  Adam() = default;
  Adam(S lr_, S b1, S b2) : lr(lr_), beta1(b1), beta2(b2) {}

  void step(const ParamList<S>& params) {
    if (m.empty()) {
      for (const auto& p : params) {
        m.push_back(MatX<S>::Zero(p.value->rows(), p.value->cols()));
        v.push_back(MatX<S>::Zero(p.value->rows(), p.value->cols()));
      }
    }
    check(m.size() == params.size(), "Adam: parameter list changed size");
    ++t;
    const S bc1 = S(1) - S(std::pow(double(beta1), double(t)));
    const S bc2 = S(1) - S(std::pow(double(beta2), double(t)));
    for (std::size_t i = 0; i < params.size(); ++i) {
      const MatX<S>& g = *params[i].grad;
      m[i] = beta1 * m[i] + (S(1) - beta1) * g;
      v[i] = (beta2 * v[i].array() + (S(1) - beta2) * g.array().square()).matrix();
      params[i].value->array() -=
          lr * (m[i].array() / bc1) / ((v[i].array() / bc2).sqrt() + eps);
    }
  }
};

template <class S>
void zero_grads(const ParamList<S>& params) {
  for (const auto& p : params) p.grad->setZero();
}

}  // namespace specvae::nn
