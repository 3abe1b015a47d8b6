#include "ramm/config.hpp"

#include <cstdlib>
#include <set>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "ramm/manifest.hpp"

extern char** environ;

namespace ramm {

using nlohmann::json;

namespace {

// Setter table per section: key -> assignment from a JSON scalar. Errors
// name the full dotted key.
template <class T>
T get_as(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw std::invalid_argument("config key '" + key + "': invalid value " +
                                v.dump());
  }
}

void apply_key(Config& c, const std::string& section, const std::string& key,
               const json& v) {
  const std::string full = section + "." + key;
  auto unknown = [&]() -> std::invalid_argument {
    return std::invalid_argument("unknown config key '" + full + "'");
  };

  if (section == "synth") {
    auto& s = c.synth;
    if (key == "shapes") s.shapes = get_as<std::vector<std::string>>(v, full);
    else if (key == "colors") s.colors = get_as<std::vector<std::string>>(v, full);
    else if (key == "backgrounds") s.backgrounds = get_as<std::vector<std::string>>(v, full);
    else if (key == "image_size") s.image_size = get_as<int>(v, full);
    else if (key == "n_train") s.n_train = get_as<int>(v, full);
    else if (key == "n_heldout_compositions") s.n_heldout_compositions = get_as<int>(v, full);
    else if (key == "n_heldout_docs") s.n_heldout_docs = get_as<int>(v, full);
    else if (key == "seed") s.seed = get_as<uint64_t>(v, full);
    else throw unknown();
  } else if (section == "tokenizer") {
    auto& t = c.tokenizer;
    if (key == "codebook_k") t.codebook_k = get_as<int>(v, full);
    else if (key == "patch_size") t.patch_size = get_as<int>(v, full);
    else if (key == "kmeans_iters") t.kmeans_iters = get_as<int>(v, full);
    else if (key == "seed") t.seed = get_as<uint64_t>(v, full);
    else throw unknown();
  } else if (section == "encoder") {
    auto& e = c.encoder;
    if (key == "dim") e.dim = get_as<int>(v, full);
    else if (key == "hidden") e.hidden = get_as<int>(v, full);
    else if (key == "temperature_init") e.temperature_init = get_as<double>(v, full);
    else if (key == "epochs") e.epochs = get_as<int>(v, full);
    else if (key == "batch_size") e.batch_size = get_as<int>(v, full);
    else if (key == "lr") e.lr = get_as<double>(v, full);
    else if (key == "seed") e.seed = get_as<uint64_t>(v, full);
    else throw unknown();
  } else if (section == "strategy") {
    auto& s = c.strategy;
    if (key == "tau_dup") s.tau_dup = get_as<double>(v, full);
    else if (key == "redundancy_skip") s.redundancy_skip = get_as<bool>(v, full);
    else if (key == "query_dropout_rate") s.query_dropout_rate = get_as<double>(v, full);
    else if (key == "pool_size") s.pool_size = get_as<int>(v, full);
    else throw unknown();
  } else if (section == "generator") {
    auto& g = c.generator;
    if (key == "d_model") g.d_model = get_as<int>(v, full);
    else if (key == "n_heads") g.n_heads = get_as<int>(v, full);
    else if (key == "n_layers") g.n_layers = get_as<int>(v, full);
    else if (key == "max_seq_len") g.max_seq_len = get_as<int>(v, full);
    else if (key == "p_infill") g.p_infill = get_as<double>(v, full);
    else if (key == "span_frac") g.span_frac = get_as<double>(v, full);
    else throw unknown();
  } else if (section == "train") {
    auto& t = c.train;
    if (key == "steps") t.steps = get_as<int>(v, full);
    else if (key == "batch_size") t.batch_size = get_as<int>(v, full);
    else if (key == "peak_lr") t.peak_lr = get_as<double>(v, full);
    else if (key == "warmup_steps") t.warmup_steps = get_as<int>(v, full);
    else if (key == "adam_beta1") t.adam_beta1 = get_as<double>(v, full);
    else if (key == "adam_beta2") t.adam_beta2 = get_as<double>(v, full);
    else if (key == "grad_clip") t.grad_clip = get_as<double>(v, full);
    else if (key == "alpha") t.alpha = get_as<double>(v, full);
    else if (key == "seed") t.seed = get_as<uint64_t>(v, full);
    else if (key == "mode") t.mode = train_mode_from_name(get_as<std::string>(v, full));
    else if (key == "p_text_query") t.p_text_query = get_as<double>(v, full);
    else if (key == "context_content") t.context_content = context_content_from_name(get_as<std::string>(v, full));
    else if (key == "most_relevant_first") t.most_relevant_first = get_as<bool>(v, full);
    else if (key == "checkpoint_every") t.checkpoint_every = get_as<int>(v, full);
    else if (key == "log_every") t.log_every = get_as<int>(v, full);
    else throw unknown();
  } else if (section == "sampling") {
    auto& s = c.sampling;
    if (key == "temperature") s.temperature = get_as<double>(v, full);
    else if (key == "top_p") s.top_p = get_as<double>(v, full);
    else if (key == "max_new") s.max_new = get_as<int>(v, full);
    else throw unknown();
  } else if (section == "eval") {
    auto& e = c.eval;
    if (key == "k_infer") e.k_infer = get_as<int>(v, full);
    else if (key == "n_samples_image") e.n_samples_image = get_as<int>(v, full);
    else if (key == "n_samples_caption") e.n_samples_caption = get_as<int>(v, full);
    else if (key == "recall_pairs") e.recall_pairs = get_as<int>(v, full);
    else if (key == "composition_probes") e.composition_probes = get_as<int>(v, full);
    else if (key == "kshot_probes") e.kshot_probes = get_as<int>(v, full);
    else throw unknown();
  } else {
    throw std::invalid_argument("unknown config section '" + section + "'");
  }
}

}  // namespace

Config load_config(const std::string& path,
                   const std::map<std::string, std::string>& env) {
  Config c;
  if (!path.empty()) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file: " + path);
    std::string body((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
    if (body.find_first_not_of(" \t\r\n") != std::string::npos) {
      json j;
      try {
        j = json::parse(body);
      } catch (const json::exception& e) {
        throw std::invalid_argument("config file " + path +
                                    ": invalid JSON: " + e.what());
      }
      static const std::set<std::string> kSections = {
          "synth", "tokenizer", "encoder", "strategy",
          "generator", "train", "sampling", "eval"};
      for (auto& [section, body_j] : j.items()) {
        if (section == "seed") {
          c.seed = get_as<uint64_t>(body_j, "seed");
          continue;
        }
        if (!kSections.count(section))
          throw std::invalid_argument("unknown config section '" + section +
                                      "'");
        if (!body_j.is_object())
          throw std::invalid_argument("config section '" + section +
                                      "' must be an object");
        for (auto& [key, v] : body_j.items()) apply_key(c, section, key, v);
      }
    }
  }

  // RAMM_SECTION_KEY=value; RAMM_SEED is the global seed fallback.
  for (const auto& [name, value] : env) {
    if (name.rfind("RAMM_", 0) != 0) continue;
    std::string rest = name.substr(5);
    json v;
    try {
      v = json::parse(value);
    } catch (const json::exception&) {
      v = value;  // plain strings allowed unquoted
    }
    if (rest == "SEED") {
      c.seed = get_as<uint64_t>(v, "RAMM_SEED");
      continue;
    }
    auto us = rest.find('_');
    if (us == std::string::npos)
      throw std::invalid_argument("malformed env override " + name +
                                  " (expected RAMM_SECTION_KEY)");
    std::string section = rest.substr(0, us);
    std::string key = rest.substr(us + 1);
    for (auto& ch : section) ch = static_cast<char>(std::tolower(ch));
    for (auto& ch : key) ch = static_cast<char>(std::tolower(ch));
    apply_key(c, section, key, v);
  }
  return c;
}

std::map<std::string, std::string> env_from_process() {
  std::map<std::string, std::string> out;
  for (char** e = environ; e && *e; ++e) {
    std::string entry(*e);
    auto eq = entry.find('=');
    if (eq == std::string::npos) continue;
    std::string name = entry.substr(0, eq);
    if (name.rfind("RAMM_", 0) == 0) out[name] = entry.substr(eq + 1);
  }
  return out;
}

void validate_config(const Config& config) {
  validate_synth_config(config.synth);
  if (config.tokenizer.codebook_k < 2)
    throw std::invalid_argument("config key 'tokenizer.codebook_k': must be >= 2");
  if (config.tokenizer.patch_size < 1 ||
      config.synth.image_size % config.tokenizer.patch_size != 0)
    throw std::invalid_argument(
        "config key 'tokenizer.patch_size': must divide synth.image_size");
  if (config.tokenizer.kmeans_iters < 1)
    throw std::invalid_argument("config key 'tokenizer.kmeans_iters': must be >= 1");
  if (config.encoder.dim < 1 || config.encoder.hidden < 1)
    throw std::invalid_argument("config key 'encoder.dim': must be >= 1");
  if (config.encoder.batch_size < 2)
    throw std::invalid_argument("config key 'encoder.batch_size': must be >= 2");
  validate_strategy(config.strategy);
  try {
    config.train.validate();
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(std::string("config section 'train': ") +
                                e.what());
  }
  if (!(config.train.alpha >= 0))
    throw std::invalid_argument("config key 'train.alpha': must be >= 0");
  if (!(config.sampling.top_p > 0 && config.sampling.top_p <= 1))
    throw std::invalid_argument("config key 'sampling.top_p': must be in (0,1]");
  if (config.sampling.max_new < 1)
    throw std::invalid_argument("config key 'sampling.max_new': must be >= 1");
  if (config.eval.k_infer < 0)
    throw std::invalid_argument("config key 'eval.k_infer': must be >= 0");
  // Generator dims are validated when the vocabulary is attached; check the
  // architecture fields that do not depend on it.
  if (config.generator.d_model <= 0 || config.generator.n_heads <= 0 ||
      config.generator.n_layers <= 0 || config.generator.max_seq_len <= 0)
    throw std::invalid_argument("config key 'generator.d_model': non-positive dimension");
  if (config.generator.d_model % config.generator.n_heads != 0)
    throw std::invalid_argument(
        "config key 'generator.n_heads': must divide d_model");
  if (!(config.generator.p_infill >= 0 && config.generator.p_infill <= 1))
    throw std::invalid_argument("config key 'generator.p_infill': must be in [0,1]");
}

std::string config_to_json(const Config& c) {
  json j;
  j["seed"] = c.seed;
  j["synth"] = {{"shapes", c.synth.shapes},
                {"colors", c.synth.colors},
                {"backgrounds", c.synth.backgrounds},
                {"image_size", c.synth.image_size},
                {"n_train", c.synth.n_train},
                {"n_heldout_compositions", c.synth.n_heldout_compositions},
                {"n_heldout_docs", c.synth.n_heldout_docs},
                {"seed", c.synth.seed}};
  j["tokenizer"] = {{"codebook_k", c.tokenizer.codebook_k},
                    {"patch_size", c.tokenizer.patch_size},
                    {"kmeans_iters", c.tokenizer.kmeans_iters},
                    {"seed", c.tokenizer.seed}};
  j["encoder"] = {{"dim", c.encoder.dim},
                  {"hidden", c.encoder.hidden},
                  {"temperature_init", c.encoder.temperature_init},
                  {"epochs", c.encoder.epochs},
                  {"batch_size", c.encoder.batch_size},
                  {"lr", c.encoder.lr},
                  {"seed", c.encoder.seed}};
  j["strategy"] = {{"tau_dup", c.strategy.tau_dup},
                   {"redundancy_skip", c.strategy.redundancy_skip},
                   {"query_dropout_rate", c.strategy.query_dropout_rate},
                   {"pool_size", c.strategy.pool_size}};
  j["generator"] = {{"d_model", c.generator.d_model},
                    {"n_heads", c.generator.n_heads},
                    {"n_layers", c.generator.n_layers},
                    {"max_seq_len", c.generator.max_seq_len},
                    {"p_infill", c.generator.p_infill},
                    {"span_frac", c.generator.span_frac}};
  j["train"] = {{"steps", c.train.steps},
                {"batch_size", c.train.batch_size},
                {"peak_lr", c.train.peak_lr},
                {"warmup_steps", c.train.warmup_steps},
                {"adam_beta1", c.train.adam_beta1},
                {"adam_beta2", c.train.adam_beta2},
                {"grad_clip", c.train.grad_clip},
                {"alpha", c.train.alpha},
                {"seed", c.train.seed},
                {"mode", train_mode_name(c.train.mode)},
                {"p_text_query", c.train.p_text_query},
                {"context_content", context_content_name(c.train.context_content)},
                {"most_relevant_first", c.train.most_relevant_first},
                {"checkpoint_every", c.train.checkpoint_every},
                {"log_every", c.train.log_every}};
  j["sampling"] = {{"temperature", c.sampling.temperature},
                   {"top_p", c.sampling.top_p},
                   {"max_new", c.sampling.max_new}};
  j["eval"] = {{"k_infer", c.eval.k_infer},
               {"n_samples_image", c.eval.n_samples_image},
               {"n_samples_caption", c.eval.n_samples_caption},
               {"recall_pairs", c.eval.recall_pairs},
               {"composition_probes", c.eval.composition_probes},
               {"kshot_probes", c.eval.kshot_probes}};
  return j.dump(2);
}

std::string config_hash(const Config& config) {
  return fnv1a64_hex(config_to_json(config));
}

}  // namespace ramm
