#include "specvae/diag.hpp"

namespace specvae {
namespace {

constexpr double kLog2Pi = 1.8378770664093453;

// log N(z; mu, diag(exp(log_var))), all length-d vectors in double
double log_gaussian(const Eigen::VectorXd& z, const Eigen::VectorXd& mu,
                    const Eigen::VectorXd& log_var) {
  const Eigen::ArrayXd diff = z.array() - mu.array();
  return -0.5 * (double(z.size()) * kLog2Pi + log_var.sum() +
                 (diff.square() / log_var.array().exp()).sum());
}

double logsumexp(const std::vector<double>& v) {
  const double mx = *std::max_element(v.begin(), v.end());
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - mx);
  return mx + std::log(acc);
}

}  // namespace

KlDecomposition kl_decomposition_from_params(const Matf& mu, const Matf& log_var,
                                             std::uint64_t seed) {
  const Eigen::Index n = mu.cols();
  const Eigen::Index d = mu.rows();
  check(n >= 256, "kl decomposition: sample too small (need >= 256)");
  check(mu.rows() == log_var.rows() && mu.cols() == log_var.cols(),
        "kl decomposition: shape mismatch");

  const Eigen::MatrixXd mu_d = mu.cast<double>();
  const Eigen::MatrixXd lv_d = log_var.cast<double>();

  Rng rng(seed);
  Eigen::MatrixXd z(d, n);
  for (Eigen::Index i = 0; i < n; ++i)
    z.col(i) = mu_d.col(i).array() +
               (0.5 * lv_d.col(i).array()).exp() *
                   rng.gaussian_matrix<double>(d, 1).col(0).array();

  KlDecomposition out;
  const double log_n = std::log(double(n));
  std::vector<double> log_cond(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    // closed-form per-sample KL for the lhs
    out.lhs += 0.5 * (mu_d.col(i).array().square() + lv_d.col(i).array().exp() - 1.0 -
                      lv_d.col(i).array())
                         .sum();

    for (Eigen::Index j = 0; j < n; ++j)
      log_cond[std::size_t(j)] = log_gaussian(z.col(i), mu_d.col(j), lv_d.col(j));
    const double log_marginal = logsumexp(log_cond) - log_n;
    const double log_posterior = log_cond[std::size_t(i)];
    const double log_prior =
        -0.5 * (double(d) * kLog2Pi + z.col(i).array().square().sum());

    out.mutual_info += log_posterior - log_marginal;
    out.marginal_kl += log_marginal - log_prior;
  }
  out.lhs /= double(n);
  out.mutual_info /= double(n);
  out.marginal_kl /= double(n);
  out.mi_plus_marginal = out.mutual_info + out.marginal_kl;
  return out;
}

KlDecomposition kl_decomposition_diagnostic(VaeModelf& model,
                                            const std::vector<Spectrogram>& sample,
                                            std::uint64_t seed) {
  check(sample.size() >= 256, "kl decomposition: sample too small (need >= 256)");
  const std::vector<LatentParamsf> params = encode(model, sample);
  const int d = model.config().latent_dim;
  Matf mu(d, Eigen::Index(sample.size()));
  Matf log_var(d, Eigen::Index(sample.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    mu.col(Eigen::Index(i)) = params[i].mu;
    log_var.col(Eigen::Index(i)) = params[i].log_var;
  }
  return kl_decomposition_from_params(mu, log_var, seed);
}

}  // namespace specvae
