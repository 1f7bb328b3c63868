#pragma once

// FactorVAE training: alternating steps of (1) Adam on encoder+decoder with
// the beta/gamma objective, gradients flowing through the reparameterized
// latents into the discriminator's TC estimate, and (2) Adam on the
// discriminator with a two-class cross-entropy on joint vs dimension-permuted
// latents drawn from the same batch.

#include "specvae/vae.hpp"

namespace specvae {

struct TrainingDivergence : std::runtime_error {
  std::vector<LossBreakdown> trace;
  TrainingDivergence(const std::string& msg, std::vector<LossBreakdown> t)
      : std::runtime_error(msg), trace(std::move(t)) {}
};

// One full VAE gradient computation (no optimizer step). Parameter gradients
// are overwritten in place; returns the loss pieces and the sampled latents.
// noise must be (d x B). Shared by training and by the finite-difference
// gradient checks, which run it with a double-precision model.
template <class S>
struct VaeStepResult {
  LossBreakdown loss;
  MatX<S> z;
};

template <class S>
VaeStepResult<S> vae_forward_backward(VaeModel<S>& m, const MatX<S>& x, int batch,
                                      const MatX<S>& noise) {
  auto [mu, log_var] = m.net.encode_batch(x, batch);
  check(noise.rows() == mu.rows() && noise.cols() == mu.cols(),
        "vae step: noise shape mismatch");
  const MatX<S> std_dev = (S(0.5) * log_var.array()).exp().matrix();
  MatX<S> z = (mu.array() + std_dev.array() * noise.array()).matrix();

  MatX<S> xhat = m.net.decode_batch(z, batch);
  auto [recon, g_xhat] = nn::sum_squared_error(xhat, x, batch);
  const S kl = batched_kl(mu, log_var);

  double tc = 0.0;
  MatX<S> g_z = m.net.decoder.backward(g_xhat);
  if (m.gamma > 0.0 && m.disc) {
    const MatX<S> logits = m.disc->forward(z);
    tc = double((logits.row(0) - logits.row(1)).mean());
    MatX<S> g_logits = MatX<S>::Zero(2, z.cols());
    g_logits.row(0).setConstant(S(m.gamma) / S(z.cols()));
    g_logits.row(1).setConstant(-S(m.gamma) / S(z.cols()));
    g_z += m.disc->backward(g_logits);  // discriminator grads rewritten by its own step
  }

  auto [g_mu, g_lv] = batched_kl_grad(mu, log_var, S(m.beta));
  g_mu += g_z;
  g_lv.array() += S(0.5) * g_z.array() * noise.array() * std_dev.array();
  m.net.encoder_backward(g_mu, g_lv);

  VaeStepResult<S> out;
  out.loss = elbo_loss(double(recon), double(kl), m.beta, m.gamma, tc);
  out.z = std::move(z);
  return out;
}

struct FactorVaeTrainConfig {
  VaeConfig vae;
  int epochs = 30;
  int batch_size = 64;
  double lr = 1e-4;
  double disc_lr = 1e-4;
  double disc_beta1 = 0.5;
  std::uint64_t seed = 1;
};

struct TrainedVae {
  VaeModelf model;
  std::vector<LossBreakdown> trace;  // one entry per epoch (batch means)
};

// gamma = 0 trains a plain beta-VAE (beta = 1: vanilla VAE); gamma > 0 adds
// the discriminator alternation. Throws TrainingDivergence carrying the trace
// accumulated so far if any loss term goes non-finite.
TrainedVae train_factorvae(const std::vector<Spectrogram>& data,
                           const FactorVaeTrainConfig& cfg);

std::vector<Spectrogram> strip_records(
    const std::vector<std::pair<Spectrogram, InterferenceRecord>>& samples);

}  // namespace specvae
