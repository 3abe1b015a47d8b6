#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ramm/infer.hpp"
#include "ramm/synth.hpp"
#include "ramm/train.hpp"

namespace ramm {

enum class QueryMode { text, image, mixture };
std::string query_mode_name(QueryMode m);

// recall@k over the eval pairs: a hit when the paired ground-truth memory
// document appears in the top-k of a search with the stated query part(s).
std::map<int, double> retrieval_recall(const MemoryIndex& index,
                                       const std::vector<Document>& eval_pairs,
                                       QueryMode mode,
                                       const FrozenEncoder& enc,
                                       const std::vector<int>& ks = {1, 3, 5});

struct EvalRecord {
  std::string arm;
  uint64_t seed = 0;
  double image_ppl = 0;
  double text_ppl = 0;
  double total_ppl = 0;
  int steps = 0;
  double wall_s = 0;
  std::string config_hash;
  std::string version;
};

void append_eval_records(const std::string& path,
                         const std::vector<EvalRecord>& records);
std::vector<EvalRecord> load_eval_records(const std::string& path);

// Plain-text table grouped the way the design-choice analysis is reported:
// relevance / modality / diversity / alpha, then anything else.
std::string render_report(const std::vector<EvalRecord>& records);

struct AblationArm {
  std::string group;
  std::string name;  // unique, "group/variant"
  TrainMode train_mode = TrainMode::retrieval;
  InferContext infer_ctx = InferContext::retrieve;
  ContextContent content = ContextContent::full_doc;
  bool redundancy_skip = true;
  double query_dropout_rate = 0.20;
  double alpha = 0.1;
};

// The 4 + 3 + 3 + 4 = 14 design-choice arms.
std::vector<AblationArm> ablation_arms(double base_alpha,
                                       double base_dropout);

// Trains and evaluates every arm at every seed, matched in steps, batch
// size and model config. `jobs` > 1 runs arms in parallel threads (the arms
// share nothing mutable).
std::vector<EvalRecord> run_ablation_grid(
    const std::vector<Document>& train_docs,
    const std::vector<Document>& eval_docs, const MemoryIndex& index,
    const FrozenEncoder& enc, const GeneratorConfig& gcfg,
    const TrainConfig& base_tcfg, const RetrievalStrategy& base_strategy,
    const std::vector<uint64_t>& seeds, int k_infer,
    const std::string& config_hash, int jobs = 1);

// Held-out perplexity for each K. K > 2 is handled by averaging per-token
// probabilities across ceil(K/2) passes of two documents each; K <= 2 is
// the plain single-pass evaluation.
std::map<int, HeldoutPpl> k_sweep(const GeneratorParams& params,
                                  const std::vector<Document>& eval_docs,
                                  const MemoryIndex& index,
                                  const FrozenEncoder& enc,
                                  const std::vector<int>& Ks,
                                  const RetrievalStrategy& strategy,
                                  uint64_t seed);

struct CompositionAccuracy {
  double ra = 0;
  double baseline = 0;
  int probes = 0;
};

// Generates an image for each held-out caption with both models (identical
// captions and seeds), classifies outputs by nearest rendered template over
// `all_compositions`, and reports the per-model accuracy.
CompositionAccuracy composition_accuracy(
    const GeneratorParams& ra_params, const GeneratorParams& baseline_params,
    const std::vector<Composition>& heldout_comps,
    const std::vector<Composition>& all_compositions, const MemoryIndex& index,
    const FrozenEncoder& enc, int K, const RetrievalStrategy& strategy,
    int n_probes, int n_samples, const SamplingConfig& sampling,
    uint64_t seed);

struct ScaleSpec {
  std::string name;
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
};

// Retrieval vs baseline at several model sizes under an equal step budget.
std::vector<EvalRecord> mini_scaling_sweep(
    const std::vector<Document>& train_docs,
    const std::vector<Document>& eval_docs, const MemoryIndex& index,
    const FrozenEncoder& enc, const GeneratorConfig& base_gcfg,
    const TrainConfig& base_tcfg, const RetrievalStrategy& strategy,
    const std::vector<ScaleSpec>& sizes, const std::vector<uint64_t>& seeds,
    int k_infer, const std::string& config_hash);

}  // namespace ramm
