#include "specvae/cvae_gan.hpp"

#include "specvae/checkpoint.hpp"

#include "json.hpp"

namespace specvae {
namespace {

BaselineCnnConfig aux_cls_config(const CvaeGanConfig& cfg) {
  BaselineCnnConfig c;
  c.height = cfg.height;
  c.width = cfg.width;
  c.n_classes = cfg.n_classes;
  c.base_channels = cfg.base_channels;
  c.n_blocks = cfg.cls_blocks;
  return c;
}

VaeConfig generator_config(const CvaeGanConfig& cfg) {
  VaeConfig v;
  v.height = cfg.height;
  v.width = cfg.width;
  v.latent_dim = cfg.latent_dim + cfg.n_classes;  // z joined with the one-hot label
  v.base_channels = cfg.base_channels;
  return v;
}

void validate(const CvaeGanConfig& cfg) {
  check(cfg.latent_dim >= 1, "cvae: latent_dim must be >= 1");
  check(cfg.n_classes >= 2, "cvae: need at least two classes");
  check(cfg.w_recon >= 0.0 && cfg.w_kl >= 0.0 && cfg.w_gan >= 0.0 && cfg.w_fm >= 0.0 &&
            cfg.w_cls >= 0.0,
        "cvae: loss weights must be >= 0");
}

}  // namespace

CvaeGanModel::CvaeGanModel(const CvaeGanConfig& cfg_, Rng& rng) : cfg(cfg_) {
  validate(cfg);
  enc = CondEncoder<float>(cfg, rng);
  gen = Decoder<float>(generator_config(cfg), rng);
  disc = ConvDiscriminator<float>(cfg.height, cfg.width, cfg.base_channels, rng);
  cls = BaselineCnn(aux_cls_config(cfg), rng);
}

void CvaeGanModel::set_training(bool t) {
  enc.set_training(t);
  gen.set_training(t);
  cls.set_training(t);
}

void CvaeGanModel::collect(nn::ParamList<float>& params) {
  enc.collect("enc", params);
  gen.collect("gen", params);
  disc.collect("disc", params);
  cls.collect(params);
}

void CvaeGanModel::collect_buffers(std::vector<std::pair<std::string, Matf*>>& out) {
  enc.collect_buffers("enc", out);
  gen.collect_buffers("gen", out);
  out.push_back({"cls.stem_bn.running_mean", &cls.stem_bn.running_mean});
  out.push_back({"cls.stem_bn.running_var", &cls.stem_bn.running_var});
  for (std::size_t i = 0; i < cls.blocks.size(); ++i) {
    const std::string p = "cls.block" + std::to_string(i);
    out.push_back({p + ".bn1.running_mean", &cls.blocks[i].bn1.running_mean});
    out.push_back({p + ".bn1.running_var", &cls.blocks[i].bn1.running_var});
    out.push_back({p + ".bn2.running_mean", &cls.blocks[i].bn2.running_mean});
    out.push_back({p + ".bn2.running_var", &cls.blocks[i].bn2.running_var});
    if (cls.blocks[i].bn_proj) {
      out.push_back({p + ".bn_proj.running_mean", &cls.blocks[i].bn_proj->running_mean});
      out.push_back({p + ".bn_proj.running_var", &cls.blocks[i].bn_proj->running_var});
    }
  }
}

TrainedCvaeGan train_cvae_gan(const std::vector<std::pair<Spectrogram, int>>& samples,
                              const CvaeGanTrainConfig& cfg) {
  check(!samples.empty(), "cvae train: empty dataset");
  check(cfg.epochs >= 1 && cfg.batch_size >= 1, "cvae train: bad epoch/batch config");
  validate(cfg.net);
  for (const auto& [s, y] : samples) {
    check(s.height() == cfg.net.height && s.width() == cfg.net.width,
          "cvae train: sample dims do not match model config");
    check(y >= 0 && y < cfg.net.n_classes, "cvae train: label out of range");
  }

  Rng init_rng(mix_seed(cfg.seed, 1));
  TrainedCvaeGan result{CvaeGanModel(cfg.net, init_rng), {}};
  CvaeGanModel& m = result.model;
  const bool use_disc = cfg.net.w_gan > 0.0 || cfg.net.w_fm > 0.0;
  const bool use_cls = cfg.net.w_cls > 0.0;

  nn::ParamList<float> eg_params;
  m.enc.collect("enc", eg_params);
  m.gen.collect("gen", eg_params);
  nn::Adam<float> opt_eg(float(cfg.lr), 0.9f, 0.999f);
  nn::ParamList<float> disc_params;
  m.disc.collect("disc", disc_params);
  nn::Adam<float> opt_disc(float(cfg.disc_lr), 0.5f, 0.999f);
  nn::ParamList<float> cls_params;
  m.cls.collect(cls_params);
  nn::Adam<float> opt_cls(float(cfg.cls_lr), 0.9f, 0.999f);

  Rng shuffle_rng(mix_seed(cfg.seed, 2));
  Rng noise_rng(mix_seed(cfg.seed, 3));
  Rng prior_rng(mix_seed(cfg.seed, 5));

  ClsTap<float> tap;
  tap.pooled = [&m](const Matf& x, int batch) {
    m.cls.forward(x, batch);
    return m.cls.pooled_features();
  };
  tap.backward_from_pooled = [&m](const Matf& g) { return m.cls.backward_from_pooled(g); };

  const int n = int(samples.size());
  const int d = cfg.net.latent_dim;
  m.set_training(true);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const std::vector<int> order = shuffle_rng.permutation(n);
    CvaeGanLoss mean;
    int n_batches = 0;
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int bs = std::min(cfg.batch_size, n - start);
      std::vector<const Imagef*> images(static_cast<std::size_t>(bs));
      std::vector<int> labels(static_cast<std::size_t>(bs));
      for (int i = 0; i < bs; ++i) {
        const auto& [s, y] = samples[std::size_t(order[std::size_t(start + i)])];
        images[std::size_t(i)] = &s.data;
        labels[std::size_t(i)] = y;
      }
      const Matf x = pack_images<float>(images, cfg.net.height, cfg.net.width);
      const Matf y1h = one_hot<float>(labels, cfg.net.n_classes);
      const Matf noise = noise_rng.gaussian_matrix<float>(d, bs);
      const Matf z_prior =
          use_disc ? Matf(prior_rng.gaussian_matrix<float>(d, bs)) : Matf::Zero(d, bs);

      CvaeGanLoss step;
      // discriminator phase: real vs reconstruction vs prior sample
      if (use_disc) {
        const auto [mu, log_var] = m.enc.forward(x, y1h, bs);
        const Matf std_dev = (0.5f * log_var.array()).exp().matrix();
        const Matf z = (mu.array() + std_dev.array() * noise.array()).matrix();
        Matf zy(d + cfg.net.n_classes, 2 * bs);
        zy.block(0, 0, d, bs) = z;
        zy.block(0, bs, d, bs) = z_prior;
        zy.bottomRows(cfg.net.n_classes) = y1h.replicate(1, 2);
        const Matf fakes = m.gen.forward(zy, 2 * bs);

        Matf all(1, Eigen::Index(3 * bs) * cfg.net.height * cfg.net.width);
        all.leftCols(x.cols()) = x;
        all.rightCols(fakes.cols()) = fakes;
        Vecf targets = Vecf::Zero(3 * bs);
        targets.head(bs).setOnes();
        const auto [d_loss, g_logits] =
            nn::binary_ce_with_logits(m.disc.forward(all, 3 * bs), targets);
        if (!std::isfinite(double(d_loss)))
          throw CvaeGanDivergence("discriminator loss non-finite at epoch " +
                                      std::to_string(epoch),
                                  std::move(result.trace));
        m.disc.backward(g_logits, Matf());
        opt_disc.step(disc_params);
        step.disc_ce = double(d_loss);
      }

      // classifier phase: cross-entropy on real samples
      if (use_cls) {
        const auto ce = nn::softmax_cross_entropy(m.cls.forward(x, bs), labels);
        if (!std::isfinite(double(ce.loss)))
          throw CvaeGanDivergence("classifier loss non-finite at epoch " +
                                      std::to_string(epoch),
                                  std::move(result.trace));
        m.cls.backward(ce.grad_logits);
        opt_cls.step(cls_params);
        step.cls_ce = double(ce.loss);
      }

      // encoder+generator phase
      CvaeGanLoss eg;
      try {
        eg = cvae_eg_forward_backward<float>(m.enc, m.gen, m.disc,
                                             use_cls ? &tap : nullptr, cfg.net, x, y1h,
                                             labels, bs, noise, z_prior);
      } catch (const std::runtime_error& e) {
        throw CvaeGanDivergence(std::string("epoch ") + std::to_string(epoch) + ": " +
                                    e.what(),
                                std::move(result.trace));
      }
      opt_eg.step(eg_params);

      mean.recon += eg.recon;
      mean.kl += eg.kl;
      mean.gan += eg.gan;
      mean.fm_disc += eg.fm_disc;
      mean.fm_cls += eg.fm_cls;
      mean.disc_ce += step.disc_ce;
      mean.cls_ce += step.cls_ce;
      mean.total += eg.total;
      ++n_batches;
    }
    mean.recon /= n_batches;
    mean.kl /= n_batches;
    mean.gan /= n_batches;
    mean.fm_disc /= n_batches;
    mean.fm_cls /= n_batches;
    mean.disc_ce /= n_batches;
    mean.cls_ce /= n_batches;
    mean.total /= n_batches;
    if (!std::isfinite(mean.total))
      throw CvaeGanDivergence("loss diverged at epoch " + std::to_string(epoch),
                              std::move(result.trace));
    result.trace.push_back(mean);
  }

  m.set_training(false);
  return result;
}

std::vector<LatentParamsf> cond_encode(CvaeGanModel& model,
                                       const std::vector<Spectrogram>& xs,
                                       const std::vector<int>& labels) {
  check(!xs.empty(), "cond_encode: empty batch");
  check(xs.size() == labels.size(), "cond_encode: labels/batch size mismatch");
  std::vector<const Imagef*> images(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    check(xs[i].height() == model.cfg.height && xs[i].width() == model.cfg.width,
          "cond_encode: input dims mismatch");
    images[i] = &xs[i].data;
  }
  model.set_training(false);
  const Matf x = pack_images<float>(images, model.cfg.height, model.cfg.width);
  const Matf y1h = one_hot<float>(labels, model.cfg.n_classes);
  auto [mu, log_var] = model.enc.forward(x, y1h, int(xs.size()));
  std::vector<LatentParamsf> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    out[i].mu = mu.col(Eigen::Index(i));
    out[i].log_var = log_var.col(Eigen::Index(i));
  }
  return out;
}

std::vector<Spectrogram> generate(CvaeGanModel& model, const Matf& z,
                                  const std::vector<int>& labels) {
  check(z.cols() == Eigen::Index(labels.size()), "generate: labels/batch size mismatch");
  check(z.cols() >= 1, "generate: empty batch");
  check(z.rows() == model.cfg.latent_dim, "generate: latent length mismatch");
  model.set_training(false);
  const int bs = int(z.cols());
  Matf zy(model.cfg.latent_dim + model.cfg.n_classes, bs);
  zy.topRows(model.cfg.latent_dim) = z;
  zy.bottomRows(model.cfg.n_classes) = one_hot<float>(labels, model.cfg.n_classes);
  const Matf xhat = model.gen.forward(zy, bs);
  std::vector<Spectrogram> out{std::size_t(bs)};
  for (int i = 0; i < bs; ++i) {
    out[std::size_t(i)].data = unpack_image(xhat, i, model.cfg.height, model.cfg.width);
    out[std::size_t(i)].meta.provenance = "cvae-generated";
  }
  return out;
}

Spectrogram generate(CvaeGanModel& model, const Vecf& z, int label) {
  check(int(z.size()) == model.cfg.latent_dim, "generate: latent length mismatch");
  Matf zm(z.size(), 1);
  zm.col(0) = z;
  return generate(model, zm, std::vector<int>{label})[0];
}

void save_cvae_gan(const std::filesystem::path& path, CvaeGanModel& model) {
  nlohmann::ordered_json j;
  j["kind"] = "cvae_gan";
  j["height"] = model.cfg.height;
  j["width"] = model.cfg.width;
  j["latent_dim"] = model.cfg.latent_dim;
  j["n_classes"] = model.cfg.n_classes;
  j["base_channels"] = model.cfg.base_channels;
  j["cls_blocks"] = model.cfg.cls_blocks;
  j["w_recon"] = model.cfg.w_recon;
  j["w_kl"] = model.cfg.w_kl;
  j["w_gan"] = model.cfg.w_gan;
  j["w_fm"] = model.cfg.w_fm;
  j["w_cls"] = model.cfg.w_cls;
  nn::ParamList<float> params;
  model.collect(params);
  BufferListf buffers;
  model.collect_buffers(buffers);
  save_blocks(path, j.dump(), params, buffers);
}

CvaeGanModel load_cvae_gan(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(load_desc(path));
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("checkpoint descriptor: ") + e.what());
  }
  check(j.value("kind", "") == "cvae_gan", "checkpoint: not a cvae_gan model");
  CvaeGanConfig cfg;
  cfg.height = j.at("height").get<int>();
  cfg.width = j.at("width").get<int>();
  cfg.latent_dim = j.at("latent_dim").get<int>();
  cfg.n_classes = j.at("n_classes").get<int>();
  cfg.base_channels = j.at("base_channels").get<int>();
  cfg.cls_blocks = j.at("cls_blocks").get<int>();
  cfg.w_recon = j.at("w_recon").get<double>();
  cfg.w_kl = j.at("w_kl").get<double>();
  cfg.w_gan = j.at("w_gan").get<double>();
  cfg.w_fm = j.at("w_fm").get<double>();
  cfg.w_cls = j.at("w_cls").get<double>();
  Rng rng(0);
  CvaeGanModel model(cfg, rng);
  nn::ParamList<float> params;
  model.collect(params);
  BufferListf buffers;
  model.collect_buffers(buffers);
  load_blocks(path, params, buffers);
  model.set_training(false);
  return model;
}

}  // namespace specvae
