#pragma once

// The clustering-enhanced classifier: embedding + bi-LSTM encoder, a stack
// of cluster-token interaction layers, a max-pooling head, and the joint
// loss of the three variants.

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "clue/corpus.hpp"
#include "clue/latent.hpp"
#include "clue/tape.hpp"
#include "clue/tensor.hpp"

namespace clue::model {

enum class Variant { kBaseline, kCae, kCvae };
enum class ScoreKind { kDot, kGeneral, kConcat };

std::string_view to_string(Variant v);
std::string_view to_string(ScoreKind s);
Variant parse_variant(std::string_view name);
ScoreKind parse_score_kind(std::string_view name);

struct LossWeights {
  double cluster = 1.0;  // lambda_1
  double recon = 1.0;    // lambda_2
  double kld = 1.0;      // lambda_3
};

struct CluEConfig {
  Variant variant = Variant::kCvae;
  std::size_t vocab_size = 0;
  std::size_t num_classes = 2;
  std::size_t clusters = 4;        // K
  std::size_t layers = 3;          // N interaction layers
  std::size_t embed_dim = 300;     // D, split evenly between LSTM directions
  std::size_t head_dim = 0;        // D'; 0 means D
  std::size_t latent_hidden = 500; // D_h of the AE/VAE encoder and decoder
  ScoreKind score = ScoreKind::kDot;
  LossWeights lambda;
  double dropout = 0.2;
  std::size_t max_len = 20;
  double alpha = 1.0;  // Student's-t degrees of freedom, fixed

  std::size_t resolved_head_dim() const { return head_dim == 0 ? embed_dim : head_dim; }
  /// Throws ConfigError on inconsistent values, including a nonzero lambda
  /// for a loss term the variant does not have.
  void validate() const;
};

/// Time-major batch: row t * B + b of every [T*B, .] tensor is token t of
/// document b.
struct Batch {
  std::size_t size = 0;     // B
  std::size_t seq_len = 0;  // T
  std::vector<int> ids;     // T*B
  // Row permutation mapping each valid position t of document b to
  // position len_b - 1 - t (an involution; PAD rows map to themselves).
  std::vector<int> reverse_rows;
  std::vector<char> mask;  // T*B, 1 at valid positions
  std::vector<std::size_t> lengths;
  std::vector<int> labels;
  ad::Tensor targets;  // [B, C] one-hot
  ad::Tensor tfidf;    // [B, V] dense; undefined when not requested
};

struct BatchOptions {
  // Use the longest true length in the batch as T instead of the padded
  // document length.
  bool trim_to_longest = true;
};

/// `tfidf` may be empty (no latent branch) or hold one vector per document.
Batch make_batch(std::span<const corpus::Document* const> docs,
                 std::span<const corpus::TfIdfVector* const> tfidf,
                 std::size_t vocab_size, std::size_t num_classes,
                 BatchOptions options = {});

struct LstmParams {
  ad::Tensor w_input;   // [D_in, 4H], gate order i, f, g, o
  ad::Tensor w_hidden;  // [H, 4H]
  ad::Tensor bias;      // [4H]
};

struct InteractionLayer {
  ad::Tensor w_reduce;  // [K*D, D]
  ad::Tensor ln_gain, ln_bias;
};

/// Score parameters shared across layers. `w_align` is used by the general
/// score; the concat score is v . tanh(W_c [c; h]) with W_c split into a
/// centroid part and a token part.
struct ScoreParams {
  ad::Tensor w_align;          // [D, D]
  ad::Tensor w_concat_c;       // [D, D]
  ad::Tensor w_concat_h;       // [D, D]
  ad::Tensor v_concat;         // [D, 1]
};

struct HeadParams {
  ad::Tensor ln_gain, ln_bias;  // [D]
  ad::Tensor w_out;             // W_O [D, D']
  ad::Tensor w_pred;            // W_p [D', C]
  ad::Tensor w_cluster;         // [D', D], baseline clustering projection
};

/// Individual loss terms; undefined tensors are terms the variant lacks.
struct LossTerms {
  ad::Tensor cls;
  ad::Tensor cluster;
  ad::Tensor recon;
  ad::Tensor kld;
};

/// L = L_cls + l1 L_cluster + l2 L_recon + l3 L_kld, gated by variant.
/// Zero-weight terms are left out of the sum. Throws ConfigError for a
/// nonzero weight on a term the variant does not produce.
ad::Tensor joint_loss(ad::Tape& tape, const LossTerms& terms, Variant variant,
                      const LossWeights& weights);

struct ForwardResult {
  ad::Tensor logits;  // [B, C]
  ad::Tensor pooled;  // o, [B, D']
  ad::Tensor z;       // clustering input, [B, D]
  ad::Tensor mu, logvar;
  ad::Tensor q;       // soft assignment, [B, K]
  std::vector<ad::Tensor> alignments;  // per layer, [T*B, K]
  LossTerms terms;
  ad::Tensor loss;
};

class CluEModel {
 public:
  /// `centroids` is [K, D]; `embeddings` has one row per vocabulary id.
  CluEModel(CluEConfig config, const corpus::EmbeddingTable& embeddings,
            const ad::Tensor& centroids, std::uint64_t seed);

  const CluEConfig& config() const { return config_; }

  /// Every trainable block in a fixed order.
  std::vector<std::pair<std::string, ad::Tensor>> named_parameters() const;

  const ad::Tensor& embedding() const { return embedding_; }
  const ad::Tensor& centroids() const { return centroids_; }

  /// `target` replaces the per-batch P computed from Q (shape [B, K]).
  ForwardResult forward(ad::Tape& tape, const Batch& batch, bool training,
                        std::mt19937_64& rng, const ad::Tensor* target = nullptr) const;

  /// Clears gradients of frozen entries (the PAD embedding row).
  void mask_frozen_grads();

  // Building blocks, exposed for tests and exports.
  ad::Tensor encode(ad::Tape& tape, const Batch& batch, bool training,
                    std::mt19937_64& rng) const;
  ad::Tensor interaction_stack(ad::Tape& tape, const ad::Tensor& h,
                               std::vector<ad::Tensor>* alignments) const;
  ad::Tensor pool(ad::Tape& tape, const ad::Tensor& s, const ad::Tensor& h,
                  const Batch& batch) const;

 private:
  CluEConfig config_;
  ad::Tensor embedding_;
  ad::Tensor centroids_;
  LstmParams lstm_fwd_, lstm_bwd_;
  std::vector<InteractionLayer> layers_;
  ScoreParams score_;
  HeadParams head_;
  latent::EncoderParams encoder_;
  latent::DecoderParams decoder_;
};

// Free-standing pieces of the interaction layer.

/// Single-pair relevance score of centroid c [D] and token h [D].
double score(std::span<const double> c, std::span<const double> h, ScoreKind kind,
             const ScoreParams& params);

/// Alignment weights [T, K]: row t is the softmax over clusters of the
/// scores between h_t and every centroid.
ad::Tensor align(ad::Tape& tape, const ad::Tensor& centroids, const ad::Tensor& h,
                 ScoreKind kind, const ScoreParams& params);

/// u_t = (a_t (x) h_t) W_d for every row t: [R, K], [R, D] -> [R, D].
ad::Tensor kronecker_update(ad::Tape& tape, const ad::Tensor& alignment,
                            const ad::Tensor& h, const ad::Tensor& w_reduce);

/// s_t = layer_norm(u_t + h_t) for every row t.
ad::Tensor aggregate(ad::Tape& tape, const ad::Tensor& alignment, const ad::Tensor& h,
                     const InteractionLayer& layer);

/// Unidirectional LSTM over a time-major [T*B, D_in] input.
ad::Tensor lstm(ad::Tape& tape, const ad::Tensor& x, const LstmParams& params,
                std::size_t seq_len, std::size_t batch);

}  // namespace clue::model
