#include "ramm/infer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace ramm {

std::string PipelineProvenance::to_json() const {
  nlohmann::json j = {{"retrieved_ids", retrieved_ids},
                      {"retrieved_scores", retrieved_scores},
                      {"retrieval_bypassed", retrieval_bypassed},
                      {"candidate_scores", candidate_scores},
                      {"chosen", chosen},
                      {"seed", seed}};
  return j.dump();
}

namespace {

std::vector<int> flatten_context(const std::vector<TokenStream>& ctx) {
  std::vector<int> out;
  for (const TokenStream& s : ctx) {
    out.insert(out.end(), s.tokens.begin(), s.tokens.end());
    out.push_back(kEosId);
  }
  return out;
}

std::vector<RetrievedDoc> gather_context(const Document& query,
                                         const MemoryIndex& index, int K,
                                         const RetrievalStrategy& strategy,
                                         InferContext ctx, uint64_t seed,
                                         const FrozenEncoder& enc) {
  std::vector<RetrievedDoc> out;
  if (K <= 0 || ctx == InferContext::none) return out;
  Rng rng(rng_mix(seed, 0xc047e87));
  if (ctx == InferContext::retrieve)
    return retrieve_scored(index, query, K, strategy, RetrievalMode::infer,
                           rng, enc);
  while (static_cast<int>(out.size()) < K) {
    int row = static_cast<int>(rng.below(index.size()));
    out.push_back({index.doc(row), 0.0, row});
  }
  return out;
}

std::vector<TokenStream> serialize_context(const std::vector<RetrievedDoc>& docs,
                                           ContextContent content,
                                           const FrozenEncoder& enc) {
  std::vector<TokenStream> out;
  for (const RetrievedDoc& r : docs) {
    Document sliced = r.doc;
    if (content == ContextContent::text_only) sliced = text_part_doc(r.doc);
    if (content == ContextContent::image_only) sliced = image_part_doc(r.doc);
    out.push_back(serialize_document(sliced, enc.vocab, enc.codebook));
  }
  return out;
}

void fill_provenance(PipelineProvenance& prov,
                     const std::vector<RetrievedDoc>& ctx) {
  for (const RetrievedDoc& r : ctx) {
    prov.retrieved_ids.push_back(r.doc.id);
    prov.retrieved_scores.push_back(r.score);
  }
}

// Shared decode loop of text_to_image and controlled_generate: sample
// n_samples constrained image continuations, rerank by the frozen encoder.
TextToImageResult decode_and_rerank(const std::string& caption,
                                    const std::vector<TokenStream>& ctx,
                                    const GeneratorParams& gen,
                                    const FrozenEncoder& enc, int n_samples,
                                    const SamplingConfig& sampling,
                                    uint64_t seed, PipelineProvenance prov) {
  if (n_samples < 1)
    throw std::invalid_argument("text_to_image: n_samples must be >= 1");
  const VocabLayout layout = gen.config.layout();
  const int tpi = enc.tokens_per_image();
  std::vector<int> prompt = caption_to_image_prompt(caption, ctx, enc);
  const Embedding cap_emb = enc.embed_text_str(caption);

  std::vector<std::vector<int>> candidates;
  int best = -1;
  double best_score = -1e300;
  for (int s = 0; s < n_samples; ++s) {
    Rng rng(rng_mix(rng_mix(seed, 0x7e87), static_cast<uint64_t>(s)));
    std::vector<int> cont = sample_continuation(
        gen, prompt, sampling, ContinuationKind::image_span, tpi, rng);
    std::vector<int> codes;
    for (int id : cont)
      if (layout.is_image(id)) codes.push_back(layout.image_code(id));
    double score = relevance(cap_emb, embed_image(codes, enc.params));
    prov.candidate_scores.push_back(score);
    candidates.push_back(std::move(codes));
    if (score > best_score) {  // ties keep the first sampled
      best_score = score;
      best = s;
    }
  }
  prov.chosen = best;

  TextToImageResult out;
  out.image_codes = candidates[best];
  out.image = enc.codebook.detokenize(out.image_codes, enc.image_size);
  out.prov = std::move(prov);
  return out;
}

}  // namespace

std::vector<int> caption_to_image_prompt(const std::string& caption,
                                         const std::vector<TokenStream>& ctx,
                                         const FrozenEncoder& enc) {
  std::vector<int> prompt = flatten_context(ctx);
  prompt.push_back(kImgAltId);
  for (int id : enc.vocab.encode(caption)) prompt.push_back(id);
  prompt.push_back(kSrcId);
  return prompt;
}

std::vector<int> image_to_caption_prompt(const Image& pixels,
                                         const std::vector<TokenStream>& ctx,
                                         const FrozenEncoder& enc) {
  const VocabLayout layout{enc.vocab.size(), enc.codebook.k()};
  std::vector<int> prompt = flatten_context(ctx);
  prompt.push_back(kImgAltId);
  prompt.push_back(kMaskId);
  prompt.push_back(kSrcId);
  for (int code : enc.codebook.tokenize(pixels))
    prompt.push_back(layout.image_id(code));
  prompt.push_back(kImgEndId);
  prompt.push_back(kInfillId);
  return prompt;
}

TextToImageResult text_to_image(const std::string& caption,
                                const GeneratorParams& gen,
                                const FrozenEncoder& enc,
                                const MemoryIndex& index, int K,
                                const RetrievalStrategy& strategy,
                                int n_samples, const SamplingConfig& sampling,
                                uint64_t seed, InferContext ctx,
                                ContextContent content) {
  // The retrieval query is the prompt (caption) alone; the ground-truth
  // continuation never exists here.
  Document query;
  query.id = "query";
  query.segments.push_back(Segment::make_text(caption));

  auto context = gather_context(query, index, K, strategy, ctx, seed, enc);
  PipelineProvenance prov;
  prov.seed = seed;
  fill_provenance(prov, context);

  return decode_and_rerank(caption, serialize_context(context, content, enc),
                           gen, enc, n_samples, sampling, seed,
                           std::move(prov));
}

TextToImageResult controlled_generate(const std::string& caption,
                                      const std::vector<Document>& manual_docs,
                                      const GeneratorParams& gen,
                                      const FrozenEncoder& enc, int n_samples,
                                      const SamplingConfig& sampling,
                                      uint64_t seed) {
  PipelineProvenance prov;
  prov.seed = seed;
  prov.retrieval_bypassed = true;
  for (const Document& d : manual_docs) prov.retrieved_ids.push_back(d.id);

  std::vector<TokenStream> ctx_streams;
  for (const Document& d : manual_docs)  // order preserved exactly as given
    ctx_streams.push_back(serialize_document(d, enc.vocab, enc.codebook));
  return decode_and_rerank(caption, ctx_streams, gen, enc, n_samples, sampling,
                           seed, std::move(prov));
}

CaptionResult image_to_caption(const Image& pixels, const GeneratorParams& gen,
                               const FrozenEncoder& enc,
                               const MemoryIndex& index, int K,
                               const RetrievalStrategy& strategy,
                               int n_samples, const SamplingConfig& sampling,
                               uint64_t seed, InferContext ctx) {
  if (n_samples < 1)
    throw std::invalid_argument("image_to_caption: n_samples must be >= 1");
  Document query;
  query.id = "query";
  query.segments.push_back(Segment::make_image(pixels));

  auto context = gather_context(query, index, K, strategy, ctx, seed, enc);
  PipelineProvenance prov;
  prov.seed = seed;
  fill_provenance(prov, context);

  std::vector<TokenStream> ctx_streams =
      serialize_context(context, ContextContent::full_doc, enc);
  std::vector<int> prompt = image_to_caption_prompt(pixels, ctx_streams, enc);

  int best = -1;
  double best_nll = 1e300;
  std::vector<std::string> captions;
  for (int s = 0; s < n_samples; ++s) {
    Rng rng(rng_mix(rng_mix(seed, 0xca97), static_cast<uint64_t>(s)));
    std::vector<int> cont = sample_continuation(
        gen, prompt, sampling, ContinuationKind::caption, 0, rng);
    double mean_nll;
    if (cont.empty()) {
      mean_nll = 1e299;  // an empty caption never wins unless all are empty
      captions.emplace_back();
    } else {
      std::vector<int> full = prompt;
      full.insert(full.end(), cont.begin(), cont.end());
      Eigen::MatrixXd logits = generator_forward(gen, full);
      Eigen::VectorXd nll = position_nll(logits, full);
      double sum = 0;
      for (size_t i = prompt.size() - 1; i + 1 < full.size(); ++i)
        sum += nll(static_cast<Eigen::Index>(i));
      mean_nll = sum / static_cast<double>(cont.size());
      captions.push_back(enc.vocab.decode(cont));
    }
    prov.candidate_scores.push_back(mean_nll);
    if (mean_nll < best_nll) {  // ties keep the first sampled
      best_nll = mean_nll;
      best = s;
    }
  }
  prov.chosen = best;
  return {captions[best], std::move(prov)};
}

InfillResult infill_image(const Image& pixels,
                          const std::set<int>& mask_patches,
                          const GeneratorParams& gen, const FrozenEncoder& enc,
                          const MemoryIndex* index,
                          const std::vector<Document>* manual_context, int K,
                          const RetrievalStrategy& strategy,
                          const SamplingConfig& sampling, uint64_t seed) {
  const VocabLayout layout = gen.config.layout();
  const int side = pixels.width;
  const int tpi = enc.codebook.tokens_per_image(side);
  if (mask_patches.empty())
    throw std::invalid_argument("infill_image: empty patch mask");
  if (static_cast<int>(mask_patches.size()) >= tpi)
    throw std::invalid_argument("infill_image: mask covers every patch");
  for (int idx : mask_patches)
    if (idx < 0 || idx >= tpi)
      throw std::invalid_argument("infill_image: patch index out of range");

  std::vector<int> codes = enc.codebook.tokenize(pixels);

  PipelineProvenance prov;
  prov.seed = seed;
  std::vector<TokenStream> ctx_streams;
  if (manual_context) {
    prov.retrieval_bypassed = true;
    for (const Document& d : *manual_context) {
      prov.retrieved_ids.push_back(d.id);
      ctx_streams.push_back(serialize_document(d, enc.vocab, enc.codebook));
    }
  } else if (index && K > 0) {
    // Query = the unmasked part of the image only.
    Document query;
    query.id = "query";
    Segment seg = Segment::make_image(pixels);
    for (int i = 0; i < tpi; ++i)
      if (!mask_patches.count(i)) seg.kept_patches.push_back(i);
    query.segments.push_back(std::move(seg));
    auto context = gather_context(query, *index, K, strategy,
                                  InferContext::retrieve, seed, enc);
    fill_provenance(prov, context);
    ctx_streams = serialize_context(context, ContextContent::full_doc, enc);
  }

  std::vector<int> prompt = flatten_context(ctx_streams);
  prompt.push_back(kImgAltId);
  prompt.push_back(kSrcId);
  // Each maximal masked run collapses to a single <mask>.
  for (int i = 0; i < tpi; ++i) {
    if (mask_patches.count(i)) {
      if (i == 0 || !mask_patches.count(i - 1)) prompt.push_back(kMaskId);
    } else {
      prompt.push_back(layout.image_id(codes[i]));
    }
  }
  prompt.push_back(kImgEndId);
  prompt.push_back(kInfillId);

  Rng rng(rng_mix(seed, 0x1f177));
  std::vector<int> cont = sample_continuation(
      gen, prompt, sampling, ContinuationKind::image_fill,
      static_cast<int>(mask_patches.size()), rng);

  InfillResult out;
  auto it = mask_patches.begin();
  for (int id : cont) {
    out.generated_codes.push_back(layout.image_code(id));
    codes[*it] = layout.image_code(id);
    ++it;
  }
  out.image = enc.codebook.detokenize(codes, side);
  out.prov = std::move(prov);
  return out;
}

namespace {

// Demonstrations are plain documents whose alt text is the label, matching
// the serialized shape of retrieved context documents seen in training.
std::vector<int> kshot_demo_tokens(const KshotDemo& demo,
                                   const FrozenEncoder& enc,
                                   const VocabLayout& layout) {
  std::vector<int> t;
  t.push_back(kImgAltId);
  t.push_back(demo.label_id);
  t.push_back(kSrcId);
  for (int code : enc.codebook.tokenize(demo.pixels))
    t.push_back(layout.image_id(code));
  t.push_back(kImgEndId);
  return t;
}

}  // namespace

KshotResult kshot_classify(
    const std::vector<std::pair<KshotDemo, KshotDemo>>& demo_pairs,
    const Image& test_pixels, const GeneratorParams& gen,
    const FrozenEncoder& enc, int k, bool swap_demo_order) {
  if (k < 1) throw std::invalid_argument("kshot_classify: k must be >= 1");
  if (k > static_cast<int>(demo_pairs.size()))
    throw std::invalid_argument("kshot_classify: k exceeds available demos (" +
                                std::to_string(demo_pairs.size()) + ")");
  const VocabLayout layout = gen.config.layout();

  // Accumulate in extended precision so k identical passes average to the
  // single-pass value bit-exactly.
  long double px_acc = 0, py_acc = 0;
  for (int pass = 0; pass < k; ++pass) {
    const KshotDemo& first =
        swap_demo_order ? demo_pairs[pass].second : demo_pairs[pass].first;
    const KshotDemo& second =
        swap_demo_order ? demo_pairs[pass].first : demo_pairs[pass].second;
    std::vector<int> tokens = kshot_demo_tokens(first, enc, layout);
    tokens.push_back(kEosId);
    std::vector<int> t2 = kshot_demo_tokens(second, enc, layout);
    tokens.insert(tokens.end(), t2.begin(), t2.end());
    tokens.push_back(kEosId);
    tokens.push_back(kImgAltId);
    tokens.push_back(kMaskId);
    tokens.push_back(kSrcId);
    for (int code : enc.codebook.tokenize(test_pixels))
      tokens.push_back(layout.image_id(code));
    tokens.push_back(kImgEndId);
    tokens.push_back(kInfillId);

    Eigen::VectorXd dist = next_token_distribution(gen, tokens);
    double px = dist(kLabelXId), py = dist(kLabelYId);
    double z = px + py;
    px_acc += px / z;
    py_acc += py / z;
  }
  return {static_cast<double>(px_acc / k), static_cast<double>(py_acc / k)};
}

}  // namespace ramm
