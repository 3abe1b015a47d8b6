#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "ramm/generator.hpp"
#include "ramm/memory.hpp"
#include "ramm/train.hpp"

namespace ramm {

struct PipelineProvenance {
  std::vector<std::string> retrieved_ids;
  std::vector<double> retrieved_scores;
  bool retrieval_bypassed = false;
  std::vector<double> candidate_scores;  // rerank scores / per-token NLLs
  int chosen = -1;
  uint64_t seed = 0;

  std::string to_json() const;
};

struct TextToImageResult {
  Image image;
  std::vector<int> image_codes;
  PipelineProvenance prov;
};

// Caption -> image: retrieve K documents with the caption as query, decode
// n_samples constrained image continuations, rerank by the frozen dual
// encoder's caption-image relevance, return the best.
TextToImageResult text_to_image(const std::string& caption,
                                const GeneratorParams& gen,
                                const FrozenEncoder& enc,
                                const MemoryIndex& index, int K,
                                const RetrievalStrategy& strategy,
                                int n_samples, const SamplingConfig& sampling,
                                uint64_t seed,
                                InferContext ctx = InferContext::retrieve,
                                ContextContent content = ContextContent::full_doc);

// Same decoder and reranker, but with a caller-specified context and no
// retrieval at all.
TextToImageResult controlled_generate(const std::string& caption,
                                      const std::vector<Document>& manual_docs,
                                      const GeneratorParams& gen,
                                      const FrozenEncoder& enc, int n_samples,
                                      const SamplingConfig& sampling,
                                      uint64_t seed);

struct CaptionResult {
  std::string caption;
  PipelineProvenance prov;
};

// Image -> caption: infill prompt over a masked alt text, sample n_samples
// captions, return the lowest mean per-token NLL.
CaptionResult image_to_caption(const Image& pixels, const GeneratorParams& gen,
                               const FrozenEncoder& enc,
                               const MemoryIndex& index, int K,
                               const RetrievalStrategy& strategy,
                               int n_samples, const SamplingConfig& sampling,
                               uint64_t seed,
                               InferContext ctx = InferContext::retrieve);

struct InfillResult {
  Image image;
  std::vector<int> generated_codes;
  PipelineProvenance prov;
};

// Masked-patch infilling. Context comes from retrieval on the unmasked part
// or, when manual_context is non-null, from the caller (image editing).
InfillResult infill_image(const Image& pixels,
                          const std::set<int>& mask_patches,
                          const GeneratorParams& gen, const FrozenEncoder& enc,
                          const MemoryIndex* index,
                          const std::vector<Document>* manual_context, int K,
                          const RetrievalStrategy& strategy,
                          const SamplingConfig& sampling, uint64_t seed);

struct KshotDemo {
  Image pixels;
  int label_id = kLabelXId;  // kLabelXId or kLabelYId
};

struct KshotResult {
  double p_x = 0;
  double p_y = 0;
};

// Ensemble k-shot binary classification with fresh non-semantic labels:
// each pass scores one (class X, class Y) demonstration pair plus the test
// image; the per-pass renormalized label probabilities are averaged.
KshotResult kshot_classify(
    const std::vector<std::pair<KshotDemo, KshotDemo>>& demo_pairs,
    const Image& test_pixels, const GeneratorParams& gen,
    const FrozenEncoder& enc, int k, bool swap_demo_order = false);

// Prompt-construction helpers shared by the pipelines (exposed for the
// leakage tests).
std::vector<int> caption_to_image_prompt(const std::string& caption,
                                         const std::vector<TokenStream>& ctx,
                                         const FrozenEncoder& enc);
std::vector<int> image_to_caption_prompt(const Image& pixels,
                                         const std::vector<TokenStream>& ctx,
                                         const FrozenEncoder& enc);

}  // namespace ramm
