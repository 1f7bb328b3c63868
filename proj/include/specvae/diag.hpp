#pragma once

// Monte-Carlo check of the KL decomposition identity
//   E_x[KL(q(z|x) || p(z))] = I(x; z) + KL(q(z) || p(z))
// lhs uses the closed form per sample; the right-hand terms draw one z per
// sample and estimate log q(z) by a full logsumexp over all per-sample
// posteriors (the marginal-posterior mixture).

#include "specvae/vae.hpp"

namespace specvae {

struct KlDecomposition {
  double lhs = 0.0;              // mean closed-form KL(q(z|x) || p(z))
  double mutual_info = 0.0;      // MC estimate of I(x; z)
  double marginal_kl = 0.0;      // MC estimate of KL(q(z) || p(z))
  double mi_plus_marginal = 0.0; // right-hand side of the identity
};

KlDecomposition kl_decomposition_diagnostic(VaeModelf& model,
                                            const std::vector<Spectrogram>& sample,
                                            std::uint64_t seed);

// Same estimator on raw posterior parameter batches; used by tests that
// bypass the encoder. mu/log_var are (d x N).
KlDecomposition kl_decomposition_from_params(const Matf& mu, const Matf& log_var,
                                             std::uint64_t seed);

}  // namespace specvae
