#include "ramm/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <atomic>
#include <thread>

#include <nlohmann/json.hpp>

#include "ramm/manifest.hpp"

namespace ramm {

std::string query_mode_name(QueryMode m) {
  switch (m) {
    case QueryMode::text: return "text";
    case QueryMode::image: return "image";
    case QueryMode::mixture: return "mixture";
  }
  throw std::logic_error("query_mode_name");
}

std::map<int, double> retrieval_recall(const MemoryIndex& index,
                                       const std::vector<Document>& eval_pairs,
                                       QueryMode mode, const FrozenEncoder& enc,
                                       const std::vector<int>& ks) {
  if (eval_pairs.empty())
    throw std::invalid_argument("retrieval_recall: no eval pairs");
  const int max_k = *std::max_element(ks.begin(), ks.end());
  std::map<int, long> hits;
  for (int k : ks) hits[k] = 0;

  for (const Document& pair : eval_pairs) {
    Document query;
    switch (mode) {
      case QueryMode::text: query = text_part_doc(pair); break;
      case QueryMode::image: query = image_part_doc(pair); break;
      case QueryMode::mixture: query = pair; break;
    }
    Embedding q = enc.embed_document(query);
    auto top = index.search(q, max_k);
    for (int k : ks) {
      for (int i = 0; i < std::min<int>(k, static_cast<int>(top.size())); ++i) {
        if (top[i].doc_id == pair.id) {
          ++hits[k];
          break;
        }
      }
    }
  }
  std::map<int, double> recall;
  for (int k : ks)
    recall[k] = static_cast<double>(hits[k]) / eval_pairs.size();
  return recall;
}

void append_eval_records(const std::string& path,
                         const std::vector<EvalRecord>& records) {
  std::ofstream f(path, std::ios::app);
  if (!f) throw std::runtime_error("cannot open eval records file: " + path);
  for (const EvalRecord& r : records) {
    nlohmann::json j = {{"arm", r.arm},         {"seed", r.seed},
                        {"image_ppl", r.image_ppl}, {"text_ppl", r.text_ppl},
                        {"total_ppl", r.total_ppl}, {"steps", r.steps},
                        {"wall_s", r.wall_s},   {"config_hash", r.config_hash},
                        {"version", r.version}};
    f << j.dump() << '\n';
  }
}

std::vector<EvalRecord> load_eval_records(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open eval records file: " + path);
  std::vector<EvalRecord> out;
  std::string line;
  size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("eval records line " + std::to_string(line_no) +
                               ": " + e.what());
    }
    EvalRecord r;
    r.arm = j.at("arm");
    r.seed = j.at("seed");
    r.image_ppl = j.at("image_ppl");
    r.text_ppl = j.at("text_ppl");
    r.total_ppl = j.at("total_ppl");
    r.steps = j.at("steps");
    r.wall_s = j.at("wall_s");
    r.config_hash = j.value("config_hash", "");
    r.version = j.value("version", "");
    out.push_back(std::move(r));
  }
  return out;
}

std::string render_report(const std::vector<EvalRecord>& records) {
  // Average over seeds per arm, preserve first-seen arm order within groups.
  std::vector<std::string> arm_order;
  std::map<std::string, std::vector<const EvalRecord*>> by_arm;
  for (const EvalRecord& r : records) {
    if (!by_arm.count(r.arm)) arm_order.push_back(r.arm);
    by_arm[r.arm].push_back(&r);
  }
  const std::vector<std::string> groups = {"relevance", "modality",
                                           "diversity", "alpha"};
  std::ostringstream os;
  os << "Method design                 | Choice                          |"
        " Image ppl | Text ppl | Total ppl | Seeds\n";
  os << std::string(110, '-') << '\n';
  auto emit = [&](const std::string& arm) {
    const auto& rs = by_arm[arm];
    double img = 0, txt = 0, tot = 0;
    for (auto* r : rs) {
      img += r->image_ppl;
      txt += r->text_ppl;
      tot += r->total_ppl;
    }
    img /= rs.size();
    txt /= rs.size();
    tot /= rs.size();
    std::string group = arm.substr(0, arm.find('/'));
    std::string choice = arm.substr(arm.find('/') + 1);
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "%-29s | %-31s | %9.3f | %8.3f | %9.3f | %zu\n",
                  group.c_str(), choice.c_str(), img, txt, tot, rs.size());
    os << buf;
  };
  for (const std::string& g : groups) {
    bool any = false;
    for (const std::string& arm : arm_order) {
      if (arm.rfind(g + "/", 0) == 0) {
        emit(arm);
        any = true;
      }
    }
    if (any) os << std::string(110, '-') << '\n';
  }
  for (const std::string& arm : arm_order) {
    bool in_group = false;
    for (const std::string& g : groups)
      if (arm.rfind(g + "/", 0) == 0) in_group = true;
    if (!in_group) emit(arm);
  }
  return os.str();
}

std::vector<AblationArm> ablation_arms(double base_alpha, double base_dropout) {
  std::vector<AblationArm> arms;
  auto arm = [&](std::string group, std::string variant) {
    AblationArm a;
    a.group = group;
    a.name = group + "/" + variant;
    a.alpha = base_alpha;
    a.query_dropout_rate = base_dropout;
    return a;
  };

  {  // Relevance: retrieved vs random context at train/infer time.
    AblationArm a = arm("relevance", "random_train_random_infer");
    a.train_mode = TrainMode::baseline;
    a.infer_ctx = InferContext::random;
    arms.push_back(a);
    a = arm("relevance", "retrieve_train_random_infer");
    a.infer_ctx = InferContext::random;
    arms.push_back(a);
    a = arm("relevance", "random_train_retrieve_infer");
    a.train_mode = TrainMode::baseline;
    arms.push_back(a);
    arms.push_back(arm("relevance", "retrieve_both"));
  }
  {  // Modality: what part of the retrieved document enters the context.
    AblationArm a = arm("modality", "image_only");
    a.content = ContextContent::image_only;
    arms.push_back(a);
    a = arm("modality", "text_only");
    a.content = ContextContent::text_only;
    arms.push_back(a);
    arms.push_back(arm("modality", "multimodal"));
  }
  {  // Diversity: plain top-K vs redundancy skip vs skip + query dropout.
    AblationArm a = arm("diversity", "top_k");
    a.redundancy_skip = false;
    a.query_dropout_rate = 0.0;
    arms.push_back(a);
    a = arm("diversity", "avoid_redundancy");
    a.query_dropout_rate = 0.0;
    arms.push_back(a);
    arms.push_back(arm("diversity", "redundancy_dropout"));
  }
  {  // Alpha: joint-loss weight sweep; identical example streams per seed.
    for (double alpha : {0.0, 0.1, 0.3, 1.0}) {
      std::ostringstream name;
      name << "alpha_" << alpha;
      AblationArm a = arm("alpha", name.str());
      a.alpha = alpha;
      arms.push_back(a);
    }
  }
  return arms;
}

namespace {

EvalRecord run_arm(const AblationArm& arm, uint64_t seed,
                   const std::vector<Document>& train_docs,
                   const std::vector<Document>& eval_docs,
                   const MemoryIndex& index, const FrozenEncoder& enc,
                   GeneratorConfig gcfg, TrainConfig tcfg,
                   RetrievalStrategy strategy, int k_infer,
                   const std::string& config_hash) {
  tcfg.mode = arm.train_mode;
  tcfg.context_content = arm.content;
  tcfg.alpha = arm.alpha;
  tcfg.seed = seed;
  strategy.redundancy_skip = arm.redundancy_skip;
  strategy.query_dropout_rate = arm.query_dropout_rate;

  const auto t0 = std::chrono::steady_clock::now();
  TrainResult trained =
      train_generator(train_docs, index, enc, gcfg, tcfg, strategy);
  HeldoutPpl ppl =
      evaluate_heldout(trained.params, eval_docs, index, enc, k_infer,
                       strategy, arm.infer_ctx, arm.content, seed);
  const auto t1 = std::chrono::steady_clock::now();

  EvalRecord r;
  r.arm = arm.name;
  r.seed = seed;
  r.image_ppl = ppl.image_ppl;
  r.text_ppl = ppl.text_ppl;
  r.total_ppl = ppl.total_ppl;
  r.steps = tcfg.steps;
  r.wall_s = std::chrono::duration<double>(t1 - t0).count();
  r.config_hash = config_hash;
  r.version = kArtifactVersion;
  return r;
}

}  // namespace

std::vector<EvalRecord> run_ablation_grid(
    const std::vector<Document>& train_docs,
    const std::vector<Document>& eval_docs, const MemoryIndex& index,
    const FrozenEncoder& enc, const GeneratorConfig& gcfg,
    const TrainConfig& base_tcfg, const RetrievalStrategy& base_strategy,
    const std::vector<uint64_t>& seeds, int k_infer,
    const std::string& config_hash, int jobs) {
  const auto arms =
      ablation_arms(base_tcfg.alpha, base_strategy.query_dropout_rate);
  struct Unit {
    const AblationArm* arm;
    uint64_t seed;
  };
  std::vector<Unit> units;
  for (const AblationArm& a : arms)
    for (uint64_t s : seeds) units.push_back({&a, s});

  std::vector<EvalRecord> records(units.size());
  if (jobs <= 1) {
    for (size_t i = 0; i < units.size(); ++i)
      records[i] = run_arm(*units[i].arm, units[i].seed, train_docs, eval_docs,
                           index, enc, gcfg, base_tcfg, base_strategy, k_infer,
                           config_hash);
    return records;
  }
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    while (true) {
      size_t i = next.fetch_add(1);
      if (i >= units.size()) return;
      records[i] = run_arm(*units[i].arm, units[i].seed, train_docs, eval_docs,
                           index, enc, gcfg, base_tcfg, base_strategy, k_infer,
                           config_hash);
    }
  };
  std::vector<std::thread> threads;
  for (int j = 0; j < jobs; ++j) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  return records;
}

std::map<int, HeldoutPpl> k_sweep(const GeneratorParams& params,
                                  const std::vector<Document>& eval_docs,
                                  const MemoryIndex& index,
                                  const FrozenEncoder& enc,
                                  const std::vector<int>& Ks,
                                  const RetrievalStrategy& strategy,
                                  uint64_t seed) {
  const VocabLayout layout = params.config.layout();
  std::map<int, HeldoutPpl> out;
  for (int K : Ks) {
    if (K < 0) throw std::invalid_argument("k_sweep: K must be >= 0");
    if (K <= 2) {
      // Identical computation to the plain held-out evaluation.
      out[K] = evaluate_heldout(params, eval_docs, index, enc, K, strategy,
                                InferContext::retrieve,
                                ContextContent::full_doc, seed);
      continue;
    }
    // Ensemble: ceil(K/2) passes of two documents each; average the
    // per-token target probabilities across passes before taking NLL.
    Rng rng(rng_mix(seed, 0xeba1));
    double text_sum = 0, image_sum = 0, total_sum = 0;
    long text_n = 0, image_n = 0, total_n = 0;
    for (const Document& doc : eval_docs) {
      std::vector<Document> retrieved =
          retrieve(index, text_part_doc(doc), K, strategy,
                   RetrievalMode::infer, rng, enc);
      TokenStream main = serialize_document(doc, enc.vocab, enc.codebook);
      main.push(kEosId, Role::main);

      const int n_passes =
          std::max<int>(1, (static_cast<int>(retrieved.size()) + 1) / 2);
      std::vector<std::vector<long double>> probs;  // per pass, per target
      for (int p = 0; p < n_passes; ++p) {
        std::vector<TokenStream> ctx;
        for (int j = 2 * p;
             j < std::min<int>(2 * p + 2, static_cast<int>(retrieved.size()));
             ++j)
          ctx.push_back(
              serialize_document(retrieved[j], enc.vocab, enc.codebook));
        TokenStream seq =
            build_training_sequence(ctx, main, params.config.max_seq_len);
        Eigen::MatrixXd logits = generator_forward(params, seq.tokens);
        Eigen::VectorXd nll = position_nll(logits, seq.tokens);
        std::vector<long double> pass_probs;
        for (int t = seq.main_begin; t + 1 < seq.size(); ++t)
          pass_probs.push_back(std::exp(static_cast<long double>(-nll(t))));
        probs.push_back(std::move(pass_probs));
      }
      // All passes share the main-part target layout.
      const size_t n_targets = probs[0].size();
      for (size_t t = 0; t < n_targets; ++t) {
        long double mean = 0;
        for (int p = 0; p < n_passes; ++p) mean += probs[p][t];
        mean /= n_passes;
        const double nll_t = -static_cast<double>(std::log(mean));
        const int target = main.tokens[t + 1];
        total_sum += nll_t;
        ++total_n;
        if (layout.is_text(target)) {
          text_sum += nll_t;
          ++text_n;
        } else if (layout.is_image(target)) {
          image_sum += nll_t;
          ++image_n;
        }
      }
    }
    HeldoutPpl ppl;
    ppl.text_targets = text_n;
    ppl.image_targets = image_n;
    ppl.total_targets = total_n;
    ppl.text_ppl = text_n ? std::exp(text_sum / text_n) : 0.0;
    ppl.image_ppl = image_n ? std::exp(image_sum / image_n) : 0.0;
    ppl.total_ppl = total_n ? std::exp(total_sum / total_n) : 0.0;
    out[K] = ppl;
  }
  return out;
}

CompositionAccuracy composition_accuracy(
    const GeneratorParams& ra_params, const GeneratorParams& baseline_params,
    const std::vector<Composition>& heldout_comps,
    const std::vector<Composition>& all_compositions, const MemoryIndex& index,
    const FrozenEncoder& enc, int K, const RetrievalStrategy& strategy,
    int n_probes, int n_samples, const SamplingConfig& sampling,
    uint64_t seed) {
  if (heldout_comps.empty())
    throw std::invalid_argument("composition_accuracy: no held-out captions");
  CompositionAccuracy out;
  out.probes = n_probes;
  int ra_hits = 0, base_hits = 0;
  for (int i = 0; i < n_probes; ++i) {
    const Composition& comp = heldout_comps[i % heldout_comps.size()];
    const std::string caption = composition_caption(comp);
    const uint64_t probe_seed = rng_mix(seed, static_cast<uint64_t>(i));

    TextToImageResult ra =
        text_to_image(caption, ra_params, enc, index, K, strategy, n_samples,
                      sampling, probe_seed, InferContext::retrieve);
    TextToImageResult base =
        text_to_image(caption, baseline_params, enc, index, K, strategy,
                      n_samples, sampling, probe_seed, InferContext::random);
    if (classify_nearest_template(ra.image, all_compositions) == comp)
      ++ra_hits;
    if (classify_nearest_template(base.image, all_compositions) == comp)
      ++base_hits;
  }
  out.ra = static_cast<double>(ra_hits) / n_probes;
  out.baseline = static_cast<double>(base_hits) / n_probes;
  return out;
}

std::vector<EvalRecord> mini_scaling_sweep(
    const std::vector<Document>& train_docs,
    const std::vector<Document>& eval_docs, const MemoryIndex& index,
    const FrozenEncoder& enc, const GeneratorConfig& base_gcfg,
    const TrainConfig& base_tcfg, const RetrievalStrategy& strategy,
    const std::vector<ScaleSpec>& sizes, const std::vector<uint64_t>& seeds,
    int k_infer, const std::string& config_hash) {
  std::vector<EvalRecord> records;
  for (const ScaleSpec& size : sizes) {
    GeneratorConfig gcfg = base_gcfg;
    gcfg.d_model = size.d_model;
    gcfg.n_layers = size.n_layers;
    gcfg.n_heads = size.n_heads;
    for (TrainMode mode : {TrainMode::retrieval, TrainMode::baseline}) {
      for (uint64_t seed : seeds) {
        AblationArm arm;
        arm.group = "scale";
        arm.name = "scale/" + size.name + "_" + train_mode_name(mode);
        arm.train_mode = mode;
        arm.infer_ctx = mode == TrainMode::retrieval ? InferContext::retrieve
                                                     : InferContext::random;
        arm.alpha = base_tcfg.alpha;
        arm.query_dropout_rate = strategy.query_dropout_rate;
        records.push_back(run_arm(arm, seed, train_docs, eval_docs, index, enc,
                                  gcfg, base_tcfg, strategy, k_infer,
                                  config_hash));
      }
    }
  }
  return records;
}

}  // namespace ramm
