// Layer-level checks for the network building blocks: direct-convolution
// oracles, adjointness of the gather/scatter pair, double-precision central
// finite differences for every backward pass, and an optimizer reference.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "specvae/nn.hpp"

using namespace specvae;
using Mat = MatX<double>;

namespace {

// Direct nested-loop convolution oracle: x (C x B*H*W), w (out x in*k*k).
Mat conv_oracle(const Mat& x, const Mat& w, const Mat& bias, int batch, int in_ch, int h,
                int w_img, int k, int stride, int pad) {
  const int oh = nn::conv_out_dim(h, k, stride, pad);
  const int ow = nn::conv_out_dim(w_img, k, stride, pad);
  const int out_ch = int(w.rows());
  Mat y = Mat::Zero(out_ch, Eigen::Index(batch) * oh * ow);
  for (int b = 0; b < batch; ++b)
    for (int oc = 0; oc < out_ch; ++oc)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double acc = bias(oc, 0);
          for (int ic = 0; ic < in_ch; ++ic)
            for (int dy = 0; dy < k; ++dy)
              for (int dx = 0; dx < k; ++dx) {
                const int iy = oy * stride - pad + dy;
                const int ix = ox * stride - pad + dx;
                if (iy < 0 || iy >= h || ix < 0 || ix >= w_img) continue;
                acc += w(oc, (ic * k + dy) * k + dx) *
                       x(ic, (Eigen::Index(b) * h + iy) * w_img + ix);
              }
          y(oc, (Eigen::Index(b) * oh + oy) * ow + ox) = acc;
        }
  return y;
}

// Central finite difference of scalar_fn w.r.t. every entry of *param.
template <class Fn>
Mat finite_diff(Mat* param, Fn scalar_fn, double eps = 1e-5) {
  Mat grad(param->rows(), param->cols());
  for (Eigen::Index c = 0; c < param->cols(); ++c)
    for (Eigen::Index r = 0; r < param->rows(); ++r) {
      const double keep = (*param)(r, c);
      (*param)(r, c) = keep + eps;
      const double up = scalar_fn();
      (*param)(r, c) = keep - eps;
      const double down = scalar_fn();
      (*param)(r, c) = keep;
      grad(r, c) = (up - down) / (2 * eps);
    }
  return grad;
}

void check_close(const Mat& a, const Mat& b, double tol, const char* what) {
  REQUIRE(a.rows() == b.rows());
  REQUIRE(a.cols() == b.cols());
  const double denom = std::max(1.0, std::max(a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff()));
  const double err = (a - b).cwiseAbs().maxCoeff() / denom;
  INFO(what << " relative error " << err);
  CHECK(err < tol);
}

}  // namespace

TEST_CASE("im2col/col2im are exact adjoints") {
  Rng rng(7);
  const nn::ConvGeom g{2, 6, 5, 3, 3, 3, 2, 1};
  const int C = 3;
  const Mat x = rng.gaussian_matrix<double>(C, g.batch * g.img_h * g.img_w);
  const Mat cols = rng.gaussian_matrix<double>(C * g.k * g.k, g.batch * g.out_h * g.out_w);
  const double lhs = (nn::im2col(x, g).array() * cols.array()).sum();
  const double rhs = (x.array() * nn::col2im(cols, C, g).array()).sum();
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("conv forward matches the direct-convolution oracle") {
  Rng rng(11);
  for (auto [k, stride, pad] : {std::tuple{3, 1, 1}, {3, 2, 1}, {5, 2, 2}, {1, 2, 0}}) {
    const int batch = 2, in_ch = 3, out_ch = 4, h = 8, w = 6;
    nn::Conv2d<double> conv(in_ch, out_ch, k, stride, pad, rng);
    conv.bias = rng.gaussian_matrix<double>(out_ch, 1);
    const Mat x = rng.gaussian_matrix<double>(in_ch, batch * h * w);
    const Mat got = conv.forward(x, batch, h, w);
    const Mat want =
        conv_oracle(x, conv.weight, conv.bias, batch, in_ch, h, w, k, stride, pad);
    check_close(got, want, 1e-12, "conv forward");
  }
}

TEST_CASE("conv transpose forward is the adjoint of conv forward") {
  Rng rng(13);
  // shared weight matrix: conv maps a->b over stride-2 5x5; transpose maps back
  const int a_ch = 2, b_ch = 3, h = 8, w = 8, batch = 2;
  nn::Conv2d<double> conv(a_ch, b_ch, 5, 2, 2, rng);
  conv.bias.setZero();
  nn::ConvTranspose2d<double> convt(b_ch, a_ch, 5, 2, 2, 1, rng);
  convt.weight = conv.weight;
  convt.bias.setZero();

  const auto [oh, ow] = conv.out_dims(h, w);
  REQUIRE(convt.out_dims(oh, ow) == std::pair{h, w});

  const Mat v = rng.gaussian_matrix<double>(a_ch, batch * h * w);
  const Mat u = rng.gaussian_matrix<double>(b_ch, batch * oh * ow);
  const double lhs = (conv.forward(v, batch, h, w).array() * u.array()).sum();
  const double rhs = (v.array() * convt.forward(u, batch, oh, ow).array()).sum();
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
}

TEST_CASE("conv transpose doubles spatial dims with the reference geometry") {
  Rng rng(17);
  nn::ConvTranspose2d<double> convt(4, 2, 5, 2, 2, 1, rng);
  CHECK(convt.out_dims(8, 8) == std::pair{16, 16});
  CHECK(convt.out_dims(2, 2) == std::pair{4, 4});
  const Mat x = rng.gaussian_matrix<double>(4, 3 * 8 * 8);
  CHECK(convt.forward(x, 3, 8, 8).cols() == 3 * 16 * 16);
}

TEST_CASE("dense gradients match finite differences") {
  Rng rng(19);
  nn::Dense<double> layer(4, 3, rng);
  Mat x = rng.gaussian_matrix<double>(4, 5);
  const Mat proj = rng.gaussian_matrix<double>(3, 5);
  auto loss = [&] { return (layer.forward(x).array() * proj.array()).sum(); };
  loss();
  layer.backward(proj);
  check_close(layer.grad_weight, finite_diff(&layer.weight, loss), 1e-7, "dense dW");
  check_close(layer.grad_bias, finite_diff(&layer.bias, loss), 1e-7, "dense db");
  layer.forward(x);
  check_close(layer.backward(proj), finite_diff(&x, loss), 1e-7, "dense dx");
}

TEST_CASE("conv gradients match finite differences") {
  Rng rng(23);
  const int batch = 2, in_ch = 2, h = 6, w = 6;
  nn::Conv2d<double> conv(in_ch, 3, 3, 2, 1, rng);
  Mat x = rng.gaussian_matrix<double>(in_ch, batch * h * w);
  const auto [oh, ow] = conv.out_dims(h, w);
  const Mat proj = rng.gaussian_matrix<double>(3, batch * oh * ow);
  auto loss = [&] { return (conv.forward(x, batch, h, w).array() * proj.array()).sum(); };
  loss();
  conv.backward(proj);
  check_close(conv.grad_weight, finite_diff(&conv.weight, loss), 1e-7, "conv dW");
  check_close(conv.grad_bias, finite_diff(&conv.bias, loss), 1e-7, "conv db");
  conv.forward(x, batch, h, w);
  check_close(conv.backward(proj), finite_diff(&x, loss), 1e-7, "conv dx");
}

TEST_CASE("conv transpose gradients match finite differences") {
  Rng rng(29);
  const int batch = 2, in_ch = 3, h = 3, w = 3;
  nn::ConvTranspose2d<double> convt(in_ch, 2, 5, 2, 2, 1, rng);
  Mat x = rng.gaussian_matrix<double>(in_ch, batch * h * w);
  const auto [oh, ow] = convt.out_dims(h, w);
  const Mat proj = rng.gaussian_matrix<double>(2, batch * oh * ow);
  auto loss = [&] { return (convt.forward(x, batch, h, w).array() * proj.array()).sum(); };
  loss();
  convt.backward(proj);
  check_close(convt.grad_weight, finite_diff(&convt.weight, loss), 1e-7, "convt dW");
  check_close(convt.grad_bias, finite_diff(&convt.bias, loss), 1e-7, "convt db");
  convt.forward(x, batch, h, w);
  check_close(convt.backward(proj), finite_diff(&x, loss), 1e-7, "convt dx");
}

TEST_CASE("batch norm: forward statistics, running update, and gradients") {
  Rng rng(31);
  nn::BatchNorm<double> bn(3);
  bn.momentum = 0.9;
  Mat x = rng.gaussian_matrix<double>(3, 12);
  x.array() += 2.0;  // nonzero mean

  const Mat y = bn.forward(x);
  // normalized rows have mean ~0 and biased variance v/(v+eps)
  for (int r = 0; r < 3; ++r) {
    const double mean = y.row(r).mean();
    const double var = (y.row(r).array() - mean).square().mean();
    const double row_mean = x.row(r).mean();
    const double row_var = (x.row(r).array() - row_mean).square().mean();
    CHECK(std::abs(mean) < 1e-12);
    CHECK(var == doctest::Approx(row_var / (row_var + bn.eps)).epsilon(1e-9));
  }
  // running stats: decay*old + (1-decay)*batch, unbiased variance
  const double batch_mean = x.row(1).mean();
  const double batch_var =
      (x.row(1).array() - batch_mean).square().sum() / double(x.cols() - 1);
  CHECK(bn.running_mean(1, 0) == doctest::Approx(0.1 * batch_mean).epsilon(1e-12));
  CHECK(bn.running_var(1, 0) == doctest::Approx(0.9 + 0.1 * batch_var).epsilon(1e-12));

  const Mat proj = rng.gaussian_matrix<double>(3, 12);
  const Mat run_mean = bn.running_mean, run_var = bn.running_var;
  auto loss = [&] {
    bn.running_mean = run_mean;  // keep side effects out of the finite differences
    bn.running_var = run_var;
    return (bn.forward(x).array() * proj.array()).sum();
  };
  loss();
  const Mat gx = bn.backward(proj);
  check_close(bn.grad_gamma, finite_diff(&bn.gamma, loss), 1e-6, "bn dgamma");
  check_close(bn.grad_beta, finite_diff(&bn.beta, loss), 1e-6, "bn dbeta");
  loss();
  bn.backward(proj);
  check_close(gx, finite_diff(&x, loss), 1e-6, "bn dx");

  // eval mode uses running stats and its own backward path
  bn.training = false;
  auto eval_loss = [&] { return (bn.forward(x).array() * proj.array()).sum(); };
  eval_loss();
  const Mat gx_eval = bn.backward(proj);
  check_close(gx_eval, finite_diff(&x, eval_loss), 1e-6, "bn eval dx");
}

TEST_CASE("activation gradients match finite differences") {
  Rng rng(37);
  Mat x = rng.gaussian_matrix<double>(4, 6);
  const Mat proj = rng.gaussian_matrix<double>(4, 6);

  nn::Relu<double> relu;
  auto relu_loss = [&] { return (relu.forward(x).array() * proj.array()).sum(); };
  relu_loss();
  check_close(relu.backward(proj), finite_diff(&x, relu_loss), 1e-6, "relu dx");

  nn::LeakyRelu<double> lrelu;
  auto lrelu_loss = [&] { return (lrelu.forward(x).array() * proj.array()).sum(); };
  lrelu_loss();
  check_close(lrelu.backward(proj), finite_diff(&x, lrelu_loss), 1e-6, "leaky relu dx");
  // slope 0.2 on the negative side
  Mat neg(1, 1);
  neg(0, 0) = -3.0;
  CHECK(lrelu.forward(neg)(0, 0) == doctest::Approx(-0.6));

  nn::Sigmoid<double> sig;
  auto sig_loss = [&] { return (sig.forward(x).array() * proj.array()).sum(); };
  sig_loss();
  check_close(sig.backward(proj), finite_diff(&x, sig_loss), 1e-6, "sigmoid dx");
}

TEST_CASE("softmax cross entropy: closed-form value and gradient") {
  Rng rng(41);
  Mat logits = rng.gaussian_matrix<double>(5, 7);
  std::vector<int> labels = {0, 4, 2, 2, 1, 3, 0};

  const auto res = nn::softmax_cross_entropy(logits, labels);
  double want = 0.0;
  for (int b = 0; b < 7; ++b) {
    const double z = (logits.col(b).array() - logits.col(b).maxCoeff()).exp().sum();
    want -= std::log(std::exp(logits(labels[std::size_t(b)], b) -
                              logits.col(b).maxCoeff()) /
                     z);
  }
  CHECK(res.loss == doctest::Approx(want / 7).epsilon(1e-12));

  auto loss = [&] { return nn::softmax_cross_entropy(logits, labels).loss; };
  check_close(res.grad_logits, finite_diff(&logits, loss), 1e-6, "softmax ce grad");
}

TEST_CASE("binary cross entropy with logits: value and gradient") {
  Rng rng(43);
  Mat logits = rng.gaussian_matrix<double>(1, 9);
  for (double target : {0.0, 1.0}) {
    const auto [value, grad] = nn::binary_ce_with_logits(logits, target);
    double want = 0.0;
    for (int b = 0; b < 9; ++b) {
      const double p = 1.0 / (1.0 + std::exp(-logits(0, b)));
      want -= target * std::log(p) + (1.0 - target) * std::log(1.0 - p);
    }
    CHECK(value == doctest::Approx(want / 9).epsilon(1e-9));
    auto loss = [&] { return nn::binary_ce_with_logits(logits, target).first; };
    check_close(grad, finite_diff(&logits, loss), 1e-6, "bce grad");
  }
}

TEST_CASE("sum squared error reduction: sum over features, mean over batch") {
  Mat xhat(2, 2), x(2, 2);
  xhat << 1, 2, 3, 4;
  x << 0, 2, 3, 1;
  const auto [loss, grad] = nn::sum_squared_error(xhat, x, 2);
  CHECK(loss == doctest::Approx((1.0 + 9.0) / 2.0));
  CHECK(grad(0, 0) == doctest::Approx(2.0 * 1.0 / 2.0));
  CHECK(grad(1, 1) == doctest::Approx(2.0 * 3.0 / 2.0));
  const Mat mismatched = Mat::Zero(3, 2);
  CHECK_THROWS_AS(nn::sum_squared_error(xhat, mismatched, 2), std::invalid_argument);
}

TEST_CASE("flatten/unflatten spatial: ordering and round trip") {
  // 2 channels, 2 samples, 3 pixels: a(c, b*P + p)
  Mat a(2, 6);
  a << 0, 1, 2, 10, 11, 12,
       100, 101, 102, 110, 111, 112;
  const Mat flat = nn::flatten_spatial(a, 2);
  REQUIRE(flat.rows() == 6);
  REQUIRE(flat.cols() == 2);
  // sample 0 column: channel 0 pixels then channel 1 pixels
  CHECK(flat(0, 0) == 0);
  CHECK(flat(2, 0) == 2);
  CHECK(flat(3, 0) == 100);
  CHECK(flat(5, 1) == 112);
  check_close(nn::unflatten_spatial(flat, 2), a, 1e-15, "unflatten round trip");
}

TEST_CASE("global average pool: forward means and gradient") {
  Rng rng(47);
  Mat x = rng.gaussian_matrix<double>(3, 8);  // 2 samples, 4 pixels
  nn::GlobalAvgPool<double> gap;
  const Mat y = gap.forward(x, 2);
  CHECK(y(1, 0) == doctest::Approx(x.row(1).head(4).mean()));
  CHECK(y(2, 1) == doctest::Approx(x.row(2).tail(4).mean()));
  const Mat proj = rng.gaussian_matrix<double>(3, 2);
  auto loss = [&] { return (gap.forward(x, 2).array() * proj.array()).sum(); };
  loss();
  check_close(gap.backward(proj), finite_diff(&x, loss), 1e-7, "gap dx");
}

TEST_CASE("residual block gradients match finite differences") {
  Rng rng(53);
  const int batch = 2, h = 4, w = 4;
  nn::ResidualBlock<double> blk(2, 3, 2, rng);  // projection path engaged
  Mat x = rng.gaussian_matrix<double>(2, batch * h * w);
  const auto [oh, ow] = blk.out_dims(h, w);
  const Mat proj = rng.gaussian_matrix<double>(3, batch * oh * ow);
  auto loss = [&] { return (blk.forward(x, batch, h, w).array() * proj.array()).sum(); };
  loss();
  const Mat gx = blk.backward(proj);
  check_close(gx, finite_diff(&x, loss), 1e-6, "residual dx");

  nn::ParamList<double> params;
  blk.collect("blk", params);
  REQUIRE(params.size() == 12);  // 2 convs + 2 bns + proj conv + proj bn
  loss();
  blk.backward(proj);
  for (const auto& p : params) {
    check_close(*p.grad, finite_diff(p.value, loss), 1e-6, p.name.c_str());
    loss();  // refresh caches clobbered by the finite-difference sweeps
    blk.backward(proj);
  }
}

TEST_CASE("adam matches a two-step hand reference") {
  Mat w(1, 1), g(1, 1);
  w(0, 0) = 1.0;
  nn::ParamList<double> params{{"w", &w, &g}};
  nn::Adam<double> opt(0.1, 0.9, 0.999);

  double m = 0, v = 0, ref = 1.0;
  for (int t = 1; t <= 2; ++t) {
    const double grad = t == 1 ? 0.5 : -0.25;
    g(0, 0) = grad;
    opt.step(params);
    m = 0.9 * m + 0.1 * grad;
    v = 0.999 * v + 0.001 * grad * grad;
    const double mhat = m / (1 - std::pow(0.9, t));
    const double vhat = v / (1 - std::pow(0.999, t));
    ref -= 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
    CHECK(w(0, 0) == doctest::Approx(ref).epsilon(1e-12));
  }
}

TEST_CASE("rng permutation is a permutation and matrices are deterministic") {
  Rng a(99), b(99);
  const auto p = a.permutation(50);
  std::vector<int> sorted = p;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) CHECK(sorted[std::size_t(i)] == i);
  check_close(b.gaussian_matrix<double>(3, 3), Rng(99).gaussian_matrix<double>(3, 3),
              1e-300, "rng determinism");
}
