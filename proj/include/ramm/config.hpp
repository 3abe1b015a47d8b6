#pragma once

#include <map>
#include <string>

#include "ramm/encoder.hpp"
#include "ramm/generator.hpp"
#include "ramm/memory.hpp"
#include "ramm/synth.hpp"
#include "ramm/train.hpp"

namespace ramm {

struct TokenizerConfig {
  int codebook_k = 64;
  int patch_size = 4;
  int kmeans_iters = 25;
  uint64_t seed = 0;
};

struct EvalConfig {
  int k_infer = 2;
  int n_samples_image = 10;   // candidates per caption->image call
  int n_samples_caption = 32; // candidates per image->caption call
  int recall_pairs = 500;
  int composition_probes = 60;
  int kshot_probes = 100;
};

// The full configuration tree. Layering: built-in defaults < config file
// < RAMM_* environment variables < command-line flags.
struct Config {
  SynthConfig synth;
  TokenizerConfig tokenizer;
  DualEncoderConfig encoder;
  RetrievalStrategy strategy;
  GeneratorConfig generator;
  TrainConfig train;
  SamplingConfig sampling;
  EvalConfig eval;
  uint64_t seed = 0;  // global fallback (RAMM_SEED)
};

// Parses the JSON config file (empty path = defaults only), then applies
// RAMM_<SECTION>_<KEY> environment overrides from `env`. Unknown keys and
// invalid values raise std::invalid_argument naming the offending key.
Config load_config(const std::string& path,
                   const std::map<std::string, std::string>& env);

// Reads RAMM_* variables from the process environment.
std::map<std::string, std::string> env_from_process();

// Re-validates every section (useful after flag overrides).
void validate_config(const Config& config);

std::string config_to_json(const Config& config);

// FNV-1a hash of the canonical JSON dump; stamped into manifests and
// metric records.
std::string config_hash(const Config& config);

}  // namespace ramm
