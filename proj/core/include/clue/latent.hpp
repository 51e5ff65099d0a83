#pragma once

// Autoencoder / variational autoencoder branch over dense tf-idf features.

#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "clue/tape.hpp"
#include "clue/tensor.hpp"

namespace clue::latent {

/// f: V -> D_h (relu) -> two linear heads of width D. The AE uses only the
/// first head, as z.
struct EncoderParams {
  ad::Tensor w_hidden, b_hidden;  // [V, Dh], [Dh]
  ad::Tensor w_mu, b_mu;          // [Dh, D], [D]
  ad::Tensor w_logvar, b_logvar;  // [Dh, D], [D]; undefined for the AE

  static EncoderParams init(std::size_t input_dim, std::size_t hidden_dim,
                            std::size_t latent_dim, bool variational,
                            std::mt19937_64& rng);
  static EncoderParams zeros(std::size_t input_dim, std::size_t hidden_dim,
                             std::size_t latent_dim, bool variational);

  bool variational() const { return w_logvar.defined(); }
  std::vector<std::pair<std::string, ad::Tensor>> named() const;
};

/// g: D -> D_h (relu) -> V, linear output.
struct DecoderParams {
  ad::Tensor w_hidden, b_hidden;  // [D, Dh], [Dh]
  ad::Tensor w_out, b_out;        // [Dh, V], [V]

  static DecoderParams init(std::size_t latent_dim, std::size_t hidden_dim,
                            std::size_t output_dim, std::mt19937_64& rng);
  static DecoderParams zeros(std::size_t latent_dim, std::size_t hidden_dim,
                             std::size_t output_dim);

  std::vector<std::pair<std::string, ad::Tensor>> named() const;
};

/// Batched [N, D] posterior statistics and sample.
struct LatentSample {
  ad::Tensor mu;
  ad::Tensor logvar;
  ad::Tensor z;
  ad::Tensor eps;  // the standard-normal draw; zeros in eval mode
};

/// mu, logvar from the encoder; z = mu + exp(logvar / 2) * eps when
/// training (eps drawn from `rng`), z = mu otherwise.
LatentSample encode_vae(ad::Tape& tape, const ad::Tensor& x,
                        const EncoderParams& params, bool training,
                        std::mt19937_64& rng);

/// Same with a caller-supplied noise draw (used to freeze noise).
LatentSample encode_vae(ad::Tape& tape, const ad::Tensor& x,
                        const EncoderParams& params, const ad::Tensor& eps);

/// Deterministic z for the plain autoencoder.
ad::Tensor encode_ae(ad::Tape& tape, const ad::Tensor& x, const EncoderParams& params);

ad::Tensor decode(ad::Tape& tape, const ad::Tensor& z, const DecoderParams& params);

/// (1/N) sum_i |x_i - x'_i|^2
ad::Tensor recon_loss(ad::Tape& tape, const ad::Tensor& x, const ad::Tensor& x_recon);

/// Batch mean of -1/2 sum_j (1 + logvar_j - mu_j^2 - exp(logvar_j)), the
/// KL divergence from N(mu, exp(logvar)) to N(0, I).
ad::Tensor prior_kl(ad::Tape& tape, const ad::Tensor& mu, const ad::Tensor& logvar);

}  // namespace clue::latent
