#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ramm/generator.hpp"
#include "ramm/memory.hpp"

namespace ramm {

enum class TrainMode { retrieval, baseline };
// What part of a retrieved document is serialized into the context
// (the retrieval-modality ablation).
enum class ContextContent { full_doc, text_only, image_only };

std::string train_mode_name(TrainMode m);
TrainMode train_mode_from_name(const std::string& s);
std::string context_content_name(ContextContent c);
ContextContent context_content_from_name(const std::string& s);

struct TrainConfig {
  int steps = 400;
  int batch_size = 8;
  double peak_lr = 1e-3;
  int warmup_steps = 100;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.98;
  double adam_eps = 1e-8;
  double grad_clip = 1.0;
  double alpha = 0.1;
  uint64_t seed = 0;
  TrainMode mode = TrainMode::retrieval;
  double p_text_query = 0.5;  // train-time probability of a text-part query
  ContextContent context_content = ContextContent::full_doc;
  bool most_relevant_first = true;
  int checkpoint_every = 0;  // 0 = final checkpoint only
  int log_every = 1;

  void validate() const;
};

// Linear warmup to peak_lr at step == warmup_steps, then linear decay to 0
// at step == steps. Steps are 1-based.
double lr_at_step(const TrainConfig& cfg, int step);

// Global-norm gradient clipping over every tensor in the bag; returns the
// pre-clip norm.
double clip_global_norm(GeneratorParams& grads, double clip);

// One training example: pick a text or image part query, draw
// K ~ Uniform({0,1,2}), fetch context (retrieved or random), serialize +
// infill the main document, terminate it with <eos>, and concatenate.
// Context documents that would overflow max_seq_len are dropped
// lowest-relevance first.
TokenStream make_training_example(const Document& doc, const MemoryIndex& index,
                                  const RetrievalStrategy& strategy, Rng& rng,
                                  TrainMode mode, ContextContent content,
                                  bool most_relevant_first,
                                  double p_text_query,
                                  const FrozenEncoder& enc,
                                  const GeneratorConfig& gcfg);

struct MetricsRecord {
  int step = 0;
  double lr = 0;
  double loss_main = 0;
  double loss_retr = 0;
  double loss_total = 0;
  long wall_ms = 0;
};

struct TrainResult {
  GeneratorParams params;
  std::vector<MetricsRecord> log;
};

// Adam + bias correction, global-norm clipping, warmup/decay schedule.
// Deterministic given (seed, config, corpus). `checkpoint_path` receives the
// final checkpoint (and periodic ones when checkpoint_every > 0, written to
// <path>.step<N>); `metrics_path` receives JSONL records; either may be
// empty. `resume_from` continues a run from a saved checkpoint.
TrainResult train_generator(const std::vector<Document>& train_docs,
                            const MemoryIndex& index, const FrozenEncoder& enc,
                            const GeneratorConfig& gcfg,
                            const TrainConfig& tcfg,
                            const RetrievalStrategy& strategy,
                            const std::string& checkpoint_path = "",
                            const std::string& metrics_path = "",
                            const std::string& resume_from = "");

// Generator checkpoint IO (params + optimizer state + rng + step).
struct GeneratorCheckpoint {
  GeneratorParams params;
  GeneratorParams adam_m;
  GeneratorParams adam_v;
  std::string rng_state;
  int step = 0;
  TrainConfig train_config;
};
void save_generator_checkpoint(const std::string& path,
                               const GeneratorCheckpoint& ck);
GeneratorCheckpoint load_generator_checkpoint(const std::string& path);

// How context documents are chosen at evaluation/inference time.
enum class InferContext { retrieve, random, none };

struct HeldoutPpl {
  double image_ppl = 0;
  double text_ppl = 0;
  double total_ppl = 0;  // all main targets, structural included
  long image_targets = 0;
  long text_targets = 0;
  long total_targets = 0;
};

// Held-out perplexity with K_infer retrieved (or random) documents in
// context; the query is the document's text part; no infilling, no dropout.
HeldoutPpl evaluate_heldout(const GeneratorParams& params,
                            const std::vector<Document>& eval_docs,
                            const MemoryIndex& index, const FrozenEncoder& enc,
                            int K_infer, const RetrievalStrategy& strategy,
                            InferContext ctx, ContextContent content,
                            uint64_t seed);

void append_metrics_jsonl(const std::string& path,
                          const std::vector<MetricsRecord>& records);

}  // namespace ramm
