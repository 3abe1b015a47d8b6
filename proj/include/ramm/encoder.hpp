#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ramm/codebook.hpp"
#include "ramm/document.hpp"
#include "ramm/text_vocab.hpp"

namespace ramm {

// Unit-norm embedding, the retriever's currency. relevance() is the
// bi-encoder score: a plain dot product of two unit vectors.
struct Embedding {
  Eigen::VectorXd values;

  int dim() const { return static_cast<int>(values.size()); }
};

double relevance(const Embedding& a, const Embedding& b);

struct DualEncoderConfig {
  int dim = 64;           // output embedding dimension d
  int hidden = 64;        // token table width
  double temperature_init = 0.07;
  double temperature_min = 1e-3;
  double temperature_max = 1.0;
  int epochs = 60;
  int batch_size = 64;
  double lr = 1e-2;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  uint64_t seed = 0;
};

// One tower: token embedding table, mean pool, single linear map, then L2
// normalization. The text tower indexes content word ids relative to the
// vocabulary start; the image tower indexes raw codebook codes.
struct TowerParams {
  Eigen::MatrixXd table;  // n_tokens x hidden
  Eigen::MatrixXd w;      // dim x hidden
  Eigen::VectorXd b;      // dim
};

struct DualEncoderParams {
  TowerParams text;
  TowerParams image;
  double temperature = 0.07;
  DualEncoderConfig config;

  void save(const std::string& path) const;
  static DualEncoderParams load(const std::string& path);
};

// `tokens` are absolute text token ids (>= kNumReservedIds).
Embedding embed_text(const std::vector<int>& tokens,
                     const DualEncoderParams& params);
// `codes` are codebook codes in [0, k).
Embedding embed_image(const std::vector<int>& codes,
                      const DualEncoderParams& params);

struct ContrastivePair {
  std::vector<int> text_tokens;  // absolute text ids
  std::vector<int> image_codes;  // codebook codes
};

struct EncoderTrainLog {
  std::vector<double> loss_per_epoch;
};

// Symmetric in-batch InfoNCE over the pair list. Deterministic given the
// config seed. Throws if batch_size < 2 or fewer pairs than one batch.
DualEncoderParams train_dual_encoder(const std::vector<ContrastivePair>& pairs,
                                     const DualEncoderConfig& config,
                                     EncoderTrainLog* log = nullptr);

// Loss + analytic gradients for one batch; exposed for the finite-difference
// oracle in tests.
struct EncoderGrads {
  TowerParams text;
  TowerParams image;
  double temperature = 0;
};
double contrastive_loss_and_grads(const DualEncoderParams& params,
                                  const std::vector<ContrastivePair>& batch,
                                  EncoderGrads* grads);

class CheckpointFile;
void write_encoder_section(CheckpointFile& ck, const DualEncoderParams& p);
DualEncoderParams read_encoder_section(const CheckpointFile& ck);

// Frozen retrieval encoder: params plus the tokenizers it needs to turn a
// Document into a vector. This is the E_Q = E_M mixed-modal encoder.
struct FrozenEncoder {
  DualEncoderParams params;
  TextVocab vocab;
  Codebook codebook;
  int image_size = 16;  // corpus image side, for tokenize/detokenize

  int tokens_per_image() const { return codebook.tokens_per_image(image_size); }

  Embedding embed_text_str(const std::string& text) const;
  Embedding embed_image_pixels(const Image& img,
                               const std::vector<int>& kept_patches = {}) const;
  // Mixed-modal rule: encode text part and image part separately, average,
  // rescale to unit norm. Single-part documents pass through unchanged.
  Embedding embed_document(const Document& doc) const;
};

}  // namespace ramm
