#pragma once

// Shared test utilities: an independent probe discriminator trained from
// scratch on a latent sample, used to measure total correlation without
// trusting the code path under test.

#include "specvae/vae.hpp"

namespace specvae::testing {

struct ProbeConfig {
  int layers = 4;
  int width = 256;
  int steps = 400;
  int batch = 128;
  float lr = 1e-3f;
};

// z columns are samples (d x N). Trains joint-vs-permuted on z_train and
// returns the density-ratio TC estimate on z_eval.
inline double probe_tc(const Matf& z_train, const Matf& z_eval, std::uint64_t seed,
                       const ProbeConfig& pc = {}) {
  const int d = int(z_train.rows());
  Rng rng(seed);
  TcDiscriminator<float> disc(d, pc.layers, pc.width, rng);
  nn::ParamList<float> params;
  disc.collect("probe", params);
  nn::Adam<float> opt(pc.lr, 0.9f, 0.999f);

  const int n = int(z_train.cols());
  const int bs = std::min(pc.batch, n);
  std::vector<int> labels(std::size_t(2 * bs), 0);
  std::fill(labels.begin() + bs, labels.end(), 1);
  for (int step = 0; step < pc.steps; ++step) {
    Matf joint(d, bs);
    for (int i = 0; i < bs; ++i) joint.col(i) = z_train.col(rng.index(n));
    const Matf perm = permute_dims(Matf(joint.transpose()), rng).transpose();
    Matf both(d, 2 * bs);
    both.leftCols(bs) = joint;
    both.rightCols(bs) = perm;
    const auto ce = nn::softmax_cross_entropy(disc.forward(both), labels);
    disc.backward(ce.grad_logits);
    opt.step(params);
  }
  return double(tc_penalty(z_eval, disc));
}

}  // namespace specvae::testing
