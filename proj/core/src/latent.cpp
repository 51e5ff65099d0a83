#include "clue/latent.hpp"

#include <cmath>

#include "clue/errors.hpp"
#include "clue/init.hpp"
#include "clue/ops.hpp"

namespace clue::latent {

namespace {

ad::Tensor dense(ad::Tape& tape, const ad::Tensor& x, const ad::Tensor& w,
                 const ad::Tensor& b) {
  return ad::add(tape, ad::matmul(tape, x, w), b);
}

void check_finite(const ad::Tensor& t, const char* what) {
  for (double v : t.values()) {
    if (!std::isfinite(v)) throw NumericError(std::string(what) + ": non-finite activation");
  }
}

ad::Tensor encoder_hidden(ad::Tape& tape, const ad::Tensor& x, const EncoderParams& p) {
  if (x.rank() != 2 || x.dim(1) != p.w_hidden.dim(0)) {
    throw ShapeError("encoder: input " + ad::shape_string(x.shape()) +
                     " does not match vocabulary width " + std::to_string(p.w_hidden.dim(0)));
  }
  return ad::relu(tape, dense(tape, x, p.w_hidden, p.b_hidden));
}

}  // namespace

EncoderParams EncoderParams::init(std::size_t input_dim, std::size_t hidden_dim,
                                  std::size_t latent_dim, bool variational,
                                  std::mt19937_64& rng) {
  EncoderParams p;
  p.w_hidden = glorot_param(input_dim, hidden_dim, rng);
  p.b_hidden = constant_param({hidden_dim}, 0.0);
  p.w_mu = glorot_param(hidden_dim, latent_dim, rng);
  p.b_mu = constant_param({latent_dim}, 0.0);
  if (variational) {
    p.w_logvar = glorot_param(hidden_dim, latent_dim, rng);
    p.b_logvar = constant_param({latent_dim}, 0.0);
  }
  return p;
}

EncoderParams EncoderParams::zeros(std::size_t input_dim, std::size_t hidden_dim,
                                   std::size_t latent_dim, bool variational) {
  EncoderParams p;
  p.w_hidden = constant_param({input_dim, hidden_dim}, 0.0);
  p.b_hidden = constant_param({hidden_dim}, 0.0);
  p.w_mu = constant_param({hidden_dim, latent_dim}, 0.0);
  p.b_mu = constant_param({latent_dim}, 0.0);
  if (variational) {
    p.w_logvar = constant_param({hidden_dim, latent_dim}, 0.0);
    p.b_logvar = constant_param({latent_dim}, 0.0);
  }
  return p;
}

std::vector<std::pair<std::string, ad::Tensor>> EncoderParams::named() const {
  std::vector<std::pair<std::string, ad::Tensor>> out = {
      {"enc.w_hidden", w_hidden}, {"enc.b_hidden", b_hidden},
      {"enc.w_mu", w_mu},         {"enc.b_mu", b_mu}};
  if (variational()) {
    out.emplace_back("enc.w_logvar", w_logvar);
    out.emplace_back("enc.b_logvar", b_logvar);
  }
  return out;
}

DecoderParams DecoderParams::init(std::size_t latent_dim, std::size_t hidden_dim,
                                  std::size_t output_dim, std::mt19937_64& rng) {
  DecoderParams p;
  p.w_hidden = glorot_param(latent_dim, hidden_dim, rng);
  p.b_hidden = constant_param({hidden_dim}, 0.0);
  p.w_out = glorot_param(hidden_dim, output_dim, rng);
  p.b_out = constant_param({output_dim}, 0.0);
  return p;
}

DecoderParams DecoderParams::zeros(std::size_t latent_dim, std::size_t hidden_dim,
                                   std::size_t output_dim) {
  DecoderParams p;
  p.w_hidden = constant_param({latent_dim, hidden_dim}, 0.0);
  p.b_hidden = constant_param({hidden_dim}, 0.0);
  p.w_out = constant_param({hidden_dim, output_dim}, 0.0);
  p.b_out = constant_param({output_dim}, 0.0);
  return p;
}

std::vector<std::pair<std::string, ad::Tensor>> DecoderParams::named() const {
  return {{"dec.w_hidden", w_hidden},
          {"dec.b_hidden", b_hidden},
          {"dec.w_out", w_out},
          {"dec.b_out", b_out}};
}

LatentSample encode_vae(ad::Tape& tape, const ad::Tensor& x,
                        const EncoderParams& params, const ad::Tensor& eps) {
  if (!params.variational()) throw ShapeError("encode_vae: encoder has no log-variance head");
  ad::Tensor h = encoder_hidden(tape, x, params);
  LatentSample s;
  s.mu = dense(tape, h, params.w_mu, params.b_mu);
  s.logvar = dense(tape, h, params.w_logvar, params.b_logvar);
  check_finite(s.mu, "encode_vae");
  check_finite(s.logvar, "encode_vae");
  if (eps.shape() != s.mu.shape()) throw ShapeError("encode_vae: noise shape mismatch");
  s.eps = eps;
  ad::Tensor sigma = ad::exp(tape, ad::scale(tape, s.logvar, 0.5));
  s.z = ad::add(tape, s.mu, ad::mul(tape, sigma, eps));
  return s;
}

LatentSample encode_vae(ad::Tape& tape, const ad::Tensor& x,
                        const EncoderParams& params, bool training,
                        std::mt19937_64& rng) {
  if (!training) {
    if (!params.variational()) throw ShapeError("encode_vae: encoder has no log-variance head");
    ad::Tensor h = encoder_hidden(tape, x, params);
    LatentSample s;
    s.mu = dense(tape, h, params.w_mu, params.b_mu);
    s.logvar = dense(tape, h, params.w_logvar, params.b_logvar);
    check_finite(s.mu, "encode_vae");
    check_finite(s.logvar, "encode_vae");
    s.eps = ad::Tensor(s.mu.shape(), 0.0);
    s.z = s.mu;
    return s;
  }
  ad::Tensor eps({x.dim(0), params.w_mu.dim(1)});
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : eps.values()) v = normal(rng);
  return encode_vae(tape, x, params, eps);
}

ad::Tensor encode_ae(ad::Tape& tape, const ad::Tensor& x, const EncoderParams& params) {
  ad::Tensor h = encoder_hidden(tape, x, params);
  ad::Tensor z = dense(tape, h, params.w_mu, params.b_mu);
  check_finite(z, "encode_ae");
  return z;
}

ad::Tensor decode(ad::Tape& tape, const ad::Tensor& z, const DecoderParams& params) {
  if (z.rank() != 2 || z.dim(1) != params.w_hidden.dim(0)) {
    throw ShapeError("decode: latent " + ad::shape_string(z.shape()) +
                     " does not match decoder input width");
  }
  ad::Tensor h = ad::relu(tape, dense(tape, z, params.w_hidden, params.b_hidden));
  return dense(tape, h, params.w_out, params.b_out);
}

ad::Tensor recon_loss(ad::Tape& tape, const ad::Tensor& x, const ad::Tensor& x_recon) {
  return ad::mse(tape, x_recon, x);
}

ad::Tensor prior_kl(ad::Tape& tape, const ad::Tensor& mu, const ad::Tensor& logvar) {
  if (mu.shape() != logvar.shape()) {
    throw ShapeError("prior_kl: mu " + ad::shape_string(mu.shape()) + " vs logvar " +
                     ad::shape_string(logvar.shape()));
  }
  ad::Tensor terms = ad::sub(tape, ad::add_scalar(tape, logvar, 1.0), ad::mul(tape, mu, mu));
  terms = ad::sub(tape, terms, ad::exp(tape, logvar));
  const double n = mu.rank() == 1 ? 1.0 : static_cast<double>(mu.dim(0));
  return ad::scale(tape, ad::sum(tape, terms), -0.5 / n);
}

}  // namespace clue::latent
