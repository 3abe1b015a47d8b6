#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ramm/rng.hpp"
#include "ramm/stream.hpp"

namespace ramm {

struct GeneratorConfig {
  int text_vocab_size = 0;  // content words
  int codebook_size = 0;    // image codes
  int d_model = 128;
  int n_heads = 4;
  int n_layers = 4;
  int max_seq_len = 768;
  double p_infill = 0.5;
  double span_frac = 0.25;  // max span length fraction of stream length

  int vocab_size() const {
    return kNumReservedIds + text_vocab_size + codebook_size;
  }
  VocabLayout layout() const { return {text_vocab_size, codebook_size}; }
  void validate() const;
};

struct LayerParams {
  Eigen::VectorXd ln1_g, ln1_b;
  Eigen::MatrixXd w_qkv;  // d x 3d
  Eigen::VectorXd b_qkv;
  Eigen::MatrixXd w_o;  // d x d
  Eigen::VectorXd b_o;
  Eigen::VectorXd ln2_g, ln2_b;
  Eigen::MatrixXd w_fc;  // d x 4d
  Eigen::VectorXd b_fc;
  Eigen::MatrixXd w_pr;  // 4d x d
  Eigen::VectorXd b_pr;
};

// Pre-LN causal Transformer decoder with learned positions. The output
// projection is tied to the token embedding table, so in-context copies of
// never-trained tokens still score above chance.
struct GeneratorParams {
  GeneratorConfig config;
  Eigen::MatrixXd tok_emb;  // vocab x d, tied output projection
  Eigen::MatrixXd pos_emb;  // max_seq_len x d
  std::vector<LayerParams> layers;
  Eigen::VectorXd lnf_g, lnf_b;

  static GeneratorParams init(const GeneratorConfig& config, Rng& rng);
  static GeneratorParams zeros_like(const GeneratorParams& other);
};

// Flat view over every parameter tensor, in a fixed order shared by the
// optimizer, the checkpoint format, and the finite-difference oracle.
struct TensorView {
  std::string name;
  double* data;
  size_t size;
};
std::vector<TensorView> tensor_views(GeneratorParams& p);

struct ForwardCache;  // opaque; defined in transformer.cpp

// Full-sequence logits (seq_len x vocab). Strictly causal: position t reads
// tokens 0..t only. Throws on unknown token ids or overflow of max_seq_len.
Eigen::MatrixXd generator_forward(const GeneratorParams& params,
                                  const std::vector<int>& tokens,
                                  ForwardCache* cache = nullptr);

// Accumulates parameter gradients for d(loss)/d(logits) into `grads`.
void generator_backward(const GeneratorParams& params,
                        const std::vector<int>& tokens,
                        const ForwardCache& cache,
                        const Eigen::MatrixXd& dlogits,
                        GeneratorParams& grads);

ForwardCache* new_forward_cache();
void free_forward_cache(ForwardCache*);

// RAII holder so call sites don't juggle raw cache pointers.
class CacheBox {
 public:
  CacheBox() : cache_(new_forward_cache()) {}
  ~CacheBox() { free_forward_cache(cache_); }
  CacheBox(const CacheBox&) = delete;
  CacheBox& operator=(const CacheBox&) = delete;
  ForwardCache* get() { return cache_; }

 private:
  ForwardCache* cache_;
};

// ---- Loss (Eq. total = main + alpha * retr) --------------------------------

struct LossBreakdown {
  double total = 0;
  double main = 0;
  double retr = 0;
  double alpha = 0;
  int main_targets = 0;
  int retr_targets = 0;
};

// Per-position next-token negative log-likelihood. Entry t is the NLL of
// predicting tokens[t+1] from position t; the last entry is unused (0).
Eigen::VectorXd position_nll(const Eigen::MatrixXd& logits,
                             const std::vector<int>& tokens);

// Mean NLL within each role group of the TARGET token; total = main +
// alpha * retr. A group with no targets contributes 0.
LossBreakdown sequence_loss(const Eigen::MatrixXd& logits,
                            const TokenStream& stream, double alpha);

// d(weighted sum of NLL)/d(logits) where each target position is weighted
// w_main or w_retr by its target's role. Used by the batch trainer, which
// pools the role means across the whole batch.
Eigen::MatrixXd loss_dlogits(const Eigen::MatrixXd& logits,
                             const TokenStream& stream, double w_main,
                             double w_retr);

enum class NllFilter { all, text_targets, image_targets };

// Sum and count of next-token NLL over target positions passing the filter.
// Only main-role targets are counted when main_only is set.
std::pair<double, long> sequence_nll(const Eigen::MatrixXd& logits,
                                     const TokenStream& stream,
                                     const VocabLayout& layout,
                                     NllFilter filter, bool main_only = true);

// ---- Infilling --------------------------------------------------------------

// With probability p_infill, masks one contiguous span inside a content run
// (never covering a structural marker), replaces it with <mask> and moves it
// behind an <infill> marker at the end. Too-short documents pass through.
TokenStream to_infill_instance(const TokenStream& stream, Rng& rng,
                               double p_infill, double span_frac,
                               const VocabLayout& layout);

// Exact inverse of to_infill_instance for single-span instances; identity
// for streams without a <mask>.
TokenStream reconstruct_from_infill(const TokenStream& stream);

// ---- Sampling ---------------------------------------------------------------

struct SamplingConfig {
  double temperature = 1.0;
  double top_p = 0.9;
  int max_new = 64;
};

enum class ContinuationKind {
  image_span,  // exactly n_image_tokens image-range ids, then '>'
  image_fill,  // exactly n_image_tokens image-range ids (infill spans)
  caption,     // text ids until <eos> (dropped) or max_new
};

// Grammar-constrained nucleus sampling. temperature <= 0 means argmax
// decoding (deterministic regardless of rng).
std::vector<int> sample_continuation(const GeneratorParams& params,
                                     const std::vector<int>& prompt,
                                     const SamplingConfig& sampling,
                                     ContinuationKind kind,
                                     int n_image_tokens, Rng& rng);

// Softmax of the last position's logits (full vocabulary).
Eigen::VectorXd next_token_distribution(const GeneratorParams& params,
                                        const std::vector<int>& tokens);

Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

}  // namespace ramm
