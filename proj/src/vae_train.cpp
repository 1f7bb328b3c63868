#include "specvae/vae_train.hpp"

namespace specvae {

std::vector<Spectrogram> strip_records(
    const std::vector<std::pair<Spectrogram, InterferenceRecord>>& samples) {
  std::vector<Spectrogram> out;
  out.reserve(samples.size());
  for (const auto& [s, r] : samples) out.push_back(s);
  return out;
}

TrainedVae train_factorvae(const std::vector<Spectrogram>& data,
                           const FactorVaeTrainConfig& cfg) {
  check(!data.empty(), "train: empty dataset");
  check(cfg.epochs >= 1 && cfg.batch_size >= 1, "train: bad epoch/batch config");
  check(cfg.vae.latent_dim >= 1, "train: latent_dim must be >= 1");
  for (const auto& s : data)
    check(s.height() == cfg.vae.height && s.width() == cfg.vae.width,
          "train: sample dims do not match model config");

  Rng init_rng(mix_seed(cfg.seed, 1));
  TrainedVae result{VaeModelf(cfg.vae, init_rng), {}};
  VaeModelf& m = result.model;

  nn::ParamList<float> vae_params;
  m.net.collect(vae_params);
  nn::Adam<float> opt_vae(float(cfg.lr), 0.9f, 0.999f);

  nn::ParamList<float> disc_params;
  std::optional<nn::Adam<float>> opt_disc;
  if (m.disc) {
    m.disc->collect("disc", disc_params);
    opt_disc.emplace(float(cfg.disc_lr), float(cfg.disc_beta1), 0.999f);
  }

  // independent streams so enabling/disabling the discriminator does not
  // perturb the shuffle or reparameterization noise sequences
  Rng shuffle_rng(mix_seed(cfg.seed, 2));
  Rng noise_rng(mix_seed(cfg.seed, 3));
  Rng perm_rng(mix_seed(cfg.seed, 4));

  const int n = int(data.size());
  const int d = cfg.vae.latent_dim;
  m.net.set_training(true);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const std::vector<int> order = shuffle_rng.permutation(n);
    LossBreakdown epoch_mean;
    int n_batches = 0;
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int bs = std::min(cfg.batch_size, n - start);
      std::vector<const Imagef*> images(static_cast<std::size_t>(bs));
      for (int i = 0; i < bs; ++i)
        images[std::size_t(i)] = &data[std::size_t(order[std::size_t(start + i)])].data;
      const Matf x = pack_images<float>(images, cfg.vae.height, cfg.vae.width);
      const Matf noise = noise_rng.gaussian_matrix<float>(d, bs);

      VaeStepResult<float> step;
      try {
        step = vae_forward_backward(m, x, bs, noise);
      } catch (const std::runtime_error& e) {
        throw TrainingDivergence(std::string("epoch ") + std::to_string(epoch) + ": " +
                                     e.what(),
                                 std::move(result.trace));
      }
      opt_vae.step(vae_params);

      if (m.disc) {
        // joint latents labeled 0, dimension-permuted labeled 1, one batch
        const Matf z_perm = permute_dims(Matf(step.z.transpose()), perm_rng).transpose();
        Matf both(d, 2 * bs);
        both.leftCols(bs) = step.z;
        both.rightCols(bs) = z_perm;
        std::vector<int> labels(std::size_t(2 * bs), 0);
        std::fill(labels.begin() + bs, labels.end(), 1);
        const Matf logits = m.disc->forward(both);
        const auto ce = nn::softmax_cross_entropy(logits, labels);
        if (!std::isfinite(double(ce.loss)))
          throw TrainingDivergence("discriminator loss non-finite at epoch " +
                                       std::to_string(epoch),
                                   std::move(result.trace));
        m.disc->backward(ce.grad_logits);
        opt_disc->step(disc_params);
      }

      epoch_mean.recon += step.loss.recon;
      epoch_mean.kl += step.loss.kl;
      epoch_mean.tc_estimate += step.loss.tc_estimate;
      epoch_mean.total += step.loss.total;
      ++n_batches;
    }
    epoch_mean.recon /= n_batches;
    epoch_mean.kl /= n_batches;
    epoch_mean.tc_estimate /= n_batches;
    epoch_mean.total /= n_batches;
    if (!std::isfinite(epoch_mean.total))
      throw TrainingDivergence("loss diverged at epoch " + std::to_string(epoch),
                               std::move(result.trace));
    result.trace.push_back(epoch_mean);
  }

  m.net.set_training(false);
  return result;
}

std::vector<LatentParamsf> encode(VaeModelf& model, const std::vector<Spectrogram>& xs) {
  check(!xs.empty(), "encode: empty batch");
  const VaeConfig& cfg = model.config();
  std::vector<const Imagef*> images(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    check(xs[i].height() == cfg.height && xs[i].width() == cfg.width,
          "encode: input dims mismatch");
    images[i] = &xs[i].data;
  }
  model.net.set_training(false);
  const Matf x = pack_images<float>(images, cfg.height, cfg.width);
  auto [mu, log_var] = model.net.encode_batch(x, int(xs.size()));
  std::vector<LatentParamsf> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    out[i].mu = mu.col(Eigen::Index(i));
    out[i].log_var = log_var.col(Eigen::Index(i));
  }
  return out;
}

std::vector<Spectrogram> decode(VaeModelf& model, const std::vector<Vecf>& zs) {
  check(!zs.empty(), "decode: empty batch");
  const VaeConfig& cfg = model.config();
  Matf z(cfg.latent_dim, Eigen::Index(zs.size()));
  for (std::size_t i = 0; i < zs.size(); ++i) {
    check(int(zs[i].size()) == cfg.latent_dim, "decode: latent length mismatch");
    z.col(Eigen::Index(i)) = zs[i];
  }
  model.net.set_training(false);
  const Matf xhat = model.net.decode_batch(z, int(zs.size()));
  std::vector<Spectrogram> out(zs.size());
  for (std::size_t i = 0; i < zs.size(); ++i) {
    out[i].data = unpack_image(xhat, int(i), cfg.height, cfg.width);
    out[i].meta.provenance = "decoded";
  }
  return out;
}

}  // namespace specvae
