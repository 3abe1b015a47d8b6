// ramm: one CLI wiring the corpus, tokenizers, encoder, memory index,
// generator training, evaluation and the task pipelines.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ramm/config.hpp"
#include "ramm/corpus_io.hpp"
#include "ramm/eval.hpp"
#include "ramm/image_io.hpp"
#include "ramm/infer.hpp"
#include "ramm/manifest.hpp"

namespace fs = std::filesystem;
using namespace ramm;

namespace {

struct GlobalOpts {
  std::string workdir = ".";
  std::string config_path;
  uint64_t seed = 0;
  bool seed_set = false;
  bool force = false;
  int threads = 1;
};

std::string resolve(const GlobalOpts& g, const std::string& path) {
  if (path.empty() || fs::path(path).is_absolute()) return path;
  return (fs::path(g.workdir) / path).string();
}

void check_overwrite(const GlobalOpts& g, const std::string& path) {
  if (!g.force && fs::exists(path))
    throw CLI::ValidationError("--out", "refusing to overwrite existing " +
                                            path + " (use --force)");
}

Config make_config(const GlobalOpts& g) {
  Config c = load_config(g.config_path.empty() ? "" : resolve(g, g.config_path),
                         env_from_process());
  if (g.seed_set) c.seed = g.seed;
  validate_config(c);
  return c;
}

uint64_t pick_seed(uint64_t section_seed, const Config& c) {
  return section_seed != 0 ? section_seed : c.seed;
}

// Artifact bundle shared by the model-facing subcommands.
struct Artifacts {
  TextVocab vocab;
  Codebook codebook;
  FrozenEncoder enc;
  std::vector<Document> corpus;
  MemoryIndex index;
};

struct ArtifactPaths {
  std::string corpus, vocab, codebook, encoder, index;
};

void add_artifact_flags(CLI::App* cmd, ArtifactPaths& p, bool need_index,
                        bool need_encoder = true) {
  cmd->add_option("--corpus", p.corpus, "corpus JSONL (memory documents)")
      ->required();
  cmd->add_option("--vocab", p.vocab, "fitted text vocab file")->required();
  cmd->add_option("--codebook", p.codebook, "fitted codebook file")
      ->required();
  if (need_encoder)
    cmd->add_option("--encoder", p.encoder, "trained dual-encoder checkpoint")
        ->required();
  if (need_index)
    cmd->add_option("--index", p.index, "memory index file")->required();
}

Artifacts load_artifacts(const GlobalOpts& g, const Config& c,
                         const ArtifactPaths& p, bool need_index,
                         bool need_encoder = true) {
  Artifacts a;
  a.vocab = TextVocab::load(resolve(g, p.vocab));
  a.codebook = Codebook::load(resolve(g, p.codebook));
  a.corpus = load_corpus(resolve(g, p.corpus));
  a.enc.vocab = a.vocab;
  a.enc.codebook = a.codebook;
  a.enc.image_size = c.synth.image_size;
  if (need_encoder && !p.encoder.empty())
    a.enc.params = DualEncoderParams::load(resolve(g, p.encoder));
  if (need_index && !p.index.empty())
    a.index = MemoryIndex::load(resolve(g, p.index), a.corpus);
  return a;
}

RunManifest base_manifest(const std::string& command, int argc, char** argv,
                          const Config& c, uint64_t seed) {
  RunManifest m;
  m.command = command;
  for (int i = 0; i < argc; ++i) m.argv.push_back(argv[i]);
  m.config_json = config_to_json(c);
  m.config_hash = config_hash(c);
  m.seed = seed;
  return m;
}

void finish_manifest(const GlobalOpts& g, RunManifest& m,
                     const ArtifactPaths& p,
                     const std::vector<std::string>& outputs) {
  for (const std::string& in :
       {p.corpus, p.vocab, p.codebook, p.encoder, p.index}) {
    if (!in.empty()) m.input_hashes[in] = file_hash_hex(resolve(g, in));
  }
  m.outputs = outputs;
  if (!outputs.empty()) write_manifest(resolve(g, outputs[0]) + ".manifest.json", m);
}

GeneratorConfig attach_vocab(GeneratorConfig gcfg, const Artifacts& a) {
  gcfg.text_vocab_size = a.vocab.size();
  gcfg.codebook_size = a.codebook.k();
  return gcfg;
}

std::vector<uint64_t> parse_seeds(const std::string& s) {
  std::vector<uint64_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoull(item));
  if (out.empty()) throw CLI::ValidationError("--seeds", "no seeds given");
  return out;
}

std::vector<int> parse_ints(const std::string& s, const char* flag) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
  if (out.empty()) throw CLI::ValidationError(flag, "empty list");
  return out;
}

ContrastivePair pair_from_doc(const Document& doc, const TextVocab& tv,
                              const Codebook& cb) {
  ContrastivePair p;
  auto text = text_part(doc);
  if (!text) throw std::runtime_error("corpus document " + doc.id +
                                      " has no text part");
  p.text_tokens = tv.encode(*text);
  for (const Segment& seg : doc.segments)
    if (seg.kind == SegmentKind::image) {
      p.image_codes = cb.tokenize(seg.pixels);
      break;
    }
  if (p.image_codes.empty())
    throw std::runtime_error("corpus document " + doc.id +
                             " has no image part");
  return p;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ramm: retrieval-augmented multimodal language modeling, desk scale"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may appear after the subcommand
  GlobalOpts g;
  app.add_option("--workdir", g.workdir, "base directory for relative paths");
  app.add_option("--config", g.config_path, "JSON config file");
  app.add_option("--seed", g.seed, "global seed fallback (env: RAMM_SEED)")
      ->each([&](const std::string&) { g.seed_set = true; });
  app.add_flag("--force", g.force, "overwrite existing outputs");
  app.add_option("--threads", g.threads, "worker threads where supported");

  // ---- synth ----------------------------------------------------------
  auto* synth_cmd = app.add_subcommand("synth", "generate the synthetic corpus");
  std::string synth_out, synth_heldout_out, synth_png_dir;
  uint64_t synth_seed = 0;
  synth_cmd->add_option("--out", synth_out, "train corpus JSONL")->required();
  synth_cmd->add_option("--heldout-out", synth_heldout_out,
                        "held-out corpus JSONL");
  synth_cmd->add_option("--png-dir", synth_png_dir,
                        "also export rendered PNGs here");
  synth_cmd->add_option("--seed", synth_seed, "corpus seed");
  synth_cmd->callback([&] {
    Config c = make_config(g);
    if (synth_seed != 0) c.synth.seed = synth_seed;
    else if (g.seed_set) c.synth.seed = g.seed;
    check_overwrite(g, resolve(g, synth_out));
    SynthCorpus corpus = synth_corpus(c.synth);
    save_corpus(corpus.train, resolve(g, synth_out));
    std::vector<std::string> outputs = {synth_out};
    if (!synth_heldout_out.empty()) {
      check_overwrite(g, resolve(g, synth_heldout_out));
      save_corpus(corpus.heldout, resolve(g, synth_heldout_out));
      outputs.push_back(synth_heldout_out);
    }
    if (!synth_png_dir.empty()) {
      fs::create_directories(resolve(g, synth_png_dir));
      for (const Document& d : corpus.train)
        for (const Segment& s : d.segments)
          if (s.kind == SegmentKind::image)
            write_png(resolve(g, synth_png_dir) + "/" + d.id + ".png",
                      s.pixels);
    }
    RunManifest m = base_manifest("synth", argc, argv, c, c.synth.seed);
    m.outputs = outputs;
    write_manifest(resolve(g, synth_out) + ".manifest.json", m);
    std::cout << "wrote " << corpus.train.size() << " train docs, "
              << corpus.heldout.size() << " heldout docs ("
              << corpus.heldout_compositions.size()
              << " held-out compositions)\n";
  });

  // ---- fit-tokenizers --------------------------------------------------
  auto* fit_cmd =
      app.add_subcommand("fit-tokenizers", "fit text vocab and image codebook");
  std::string fit_corpus, fit_vocab_out, fit_codebook_out;
  bool fit_dump_json = false;
  fit_cmd->add_option("--corpus", fit_corpus, "corpus JSONL")->required();
  fit_cmd->add_option("--vocab-out", fit_vocab_out, "vocab output")->required();
  fit_cmd->add_option("--codebook-out", fit_codebook_out, "codebook output")
      ->required();
  fit_cmd->add_flag("--dump-json", fit_dump_json,
                    "also write human-readable .json dumps");
  fit_cmd->callback([&] {
    Config c = make_config(g);
    check_overwrite(g, resolve(g, fit_vocab_out));
    check_overwrite(g, resolve(g, fit_codebook_out));
    std::vector<Document> docs = load_corpus(resolve(g, fit_corpus));
    TextVocab tv = TextVocab::fit(docs);
    std::vector<Image> images;
    for (const Document& d : docs)
      for (const Segment& s : d.segments)
        if (s.kind == SegmentKind::image) images.push_back(s.pixels);
    Codebook cb = Codebook::fit(images, c.tokenizer.codebook_k,
                                c.tokenizer.patch_size, c.tokenizer.kmeans_iters,
                                pick_seed(c.tokenizer.seed, c));
    tv.save(resolve(g, fit_vocab_out));
    cb.save(resolve(g, fit_codebook_out));
    if (fit_dump_json) {
      std::ofstream(resolve(g, fit_vocab_out) + ".json") << tv.dump_json();
      std::ofstream(resolve(g, fit_codebook_out) + ".json") << cb.dump_json();
    }
    RunManifest m = base_manifest("fit-tokenizers", argc, argv, c,
                                  pick_seed(c.tokenizer.seed, c));
    m.input_hashes[fit_corpus] = file_hash_hex(resolve(g, fit_corpus));
    m.outputs = {fit_vocab_out, fit_codebook_out};
    write_manifest(resolve(g, fit_vocab_out) + ".manifest.json", m);
    std::cout << "vocab: " << tv.size() << " words; codebook: k=" << cb.k()
              << " patch=" << cb.patch_size() << "\n";
  });

  // ---- train-encoder ---------------------------------------------------
  auto* tenc_cmd =
      app.add_subcommand("train-encoder", "train the contrastive dual encoder");
  std::string tenc_corpus, tenc_vocab, tenc_codebook, tenc_out;
  bool tenc_no_dedupe = false;
  tenc_cmd->add_option("--corpus", tenc_corpus, "corpus JSONL")->required();
  tenc_cmd->add_option("--vocab", tenc_vocab, "vocab file")->required();
  tenc_cmd->add_option("--codebook", tenc_codebook, "codebook file")
      ->required();
  tenc_cmd->add_option("--out", tenc_out, "encoder checkpoint output")
      ->required();
  tenc_cmd->add_flag("--no-dedupe", tenc_no_dedupe,
                     "train on raw pairs instead of caption-deduped pairs");
  tenc_cmd->callback([&] {
    Config c = make_config(g);
    check_overwrite(g, resolve(g, tenc_out));
    std::vector<Document> docs = load_corpus(resolve(g, tenc_corpus));
    TextVocab tv = TextVocab::load(resolve(g, tenc_vocab));
    Codebook cb = Codebook::load(resolve(g, tenc_codebook));
    // Duplicate captions in one batch are false negatives for the
    // contrastive loss, so dedupe by caption by default.
    std::vector<ContrastivePair> pairs;
    std::set<std::string> seen;
    for (const Document& d : docs) {
      auto text = text_part(d);
      if (!tenc_no_dedupe && text && !seen.insert(*text).second) continue;
      pairs.push_back(pair_from_doc(d, tv, cb));
    }
    DualEncoderConfig ecfg = c.encoder;
    ecfg.seed = pick_seed(ecfg.seed, c);
    if (static_cast<int>(pairs.size()) < ecfg.batch_size)
      ecfg.batch_size = std::max<int>(2, static_cast<int>(pairs.size()));
    EncoderTrainLog log;
    DualEncoderParams params = train_dual_encoder(pairs, ecfg, &log);
    params.save(resolve(g, tenc_out));
    RunManifest m = base_manifest("train-encoder", argc, argv, c, ecfg.seed);
    m.input_hashes[tenc_corpus] = file_hash_hex(resolve(g, tenc_corpus));
    m.outputs = {tenc_out};
    write_manifest(resolve(g, tenc_out) + ".manifest.json", m);
    std::cout << "trained on " << pairs.size() << " pairs, final epoch loss "
              << (log.loss_per_epoch.empty() ? 0.0 : log.loss_per_epoch.back())
              << "\n";
  });

  // ---- build-index -----------------------------------------------------
  auto* bidx_cmd = app.add_subcommand("build-index", "embed memory and build the MIPS index");
  ArtifactPaths bidx_paths;
  std::string bidx_out;
  add_artifact_flags(bidx_cmd, bidx_paths, /*need_index=*/false);
  bidx_cmd->add_option("--out", bidx_out, "index output")->required();
  bidx_cmd->callback([&] {
    Config c = make_config(g);
    check_overwrite(g, resolve(g, bidx_out));
    Artifacts a = load_artifacts(g, c, bidx_paths, false);
    MemoryIndex index = MemoryIndex::build(a.corpus, a.enc);
    index.save(resolve(g, bidx_out));
    RunManifest m = base_manifest("build-index", argc, argv, c, c.seed);
    finish_manifest(g, m, bidx_paths, {bidx_out});
    std::cout << "indexed " << index.size() << " documents, d=" << index.dim()
              << "\n";
  });

  // ---- train -----------------------------------------------------------
  auto* train_cmd = app.add_subcommand("train", "train the generator");
  ArtifactPaths train_paths;
  std::string train_mode_str = "retrieval", train_out, train_metrics,
              train_resume;
  uint64_t train_seed = 0;
  int train_steps = 0;
  add_artifact_flags(train_cmd, train_paths, /*need_index=*/true);
  train_cmd->add_option("--mode", train_mode_str, "retrieval|baseline");
  train_cmd->add_option("--out", train_out, "generator checkpoint output")
      ->required();
  train_cmd->add_option("--metrics", train_metrics, "metrics JSONL output");
  train_cmd->add_option("--resume", train_resume, "checkpoint to resume from");
  train_cmd->add_option("--steps", train_steps, "override train.steps");
  train_cmd->add_option("--seed", train_seed, "train seed");
  train_cmd->callback([&] {
    Config c = make_config(g);
    check_overwrite(g, resolve(g, train_out));
    Artifacts a = load_artifacts(g, c, train_paths, true);
    TrainConfig tcfg = c.train;
    tcfg.mode = train_mode_from_name(train_mode_str);
    if (train_steps > 0) tcfg.steps = train_steps;
    tcfg.seed = train_seed != 0 ? train_seed : pick_seed(tcfg.seed, c);
    GeneratorConfig gcfg = attach_vocab(c.generator, a);
    TrainResult result = train_generator(
        a.corpus, a.index, a.enc, gcfg, tcfg, c.strategy,
        resolve(g, train_out),
        train_metrics.empty() ? "" : resolve(g, train_metrics),
        train_resume.empty() ? "" : resolve(g, train_resume));
    RunManifest m = base_manifest("train", argc, argv, c, tcfg.seed);
    finish_manifest(g, m, train_paths, {train_out});
    std::cout << "trained " << tcfg.steps << " steps ("
              << train_mode_name(tcfg.mode) << "), final loss "
              << (result.log.empty() ? 0.0 : result.log.back().loss_total)
              << "\n";
  });

  // ---- eval ------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("eval", "held-out perplexity and retrieval recall");
  ArtifactPaths eval_paths;
  std::string eval_ckpt, eval_heldout, eval_records, eval_ctx = "retrieve";
  int eval_k = -1;
  bool eval_recall = false;
  add_artifact_flags(eval_cmd, eval_paths, /*need_index=*/true);
  eval_cmd->add_option("--checkpoint", eval_ckpt, "generator checkpoint")
      ->required();
  eval_cmd->add_option("--heldout", eval_heldout, "held-out corpus JSONL")
      ->required();
  eval_cmd->add_option("--records", eval_records, "append eval records here");
  eval_cmd->add_option("--k-infer", eval_k, "context documents at eval time");
  eval_cmd->add_option("--infer-context", eval_ctx, "retrieve|random|none");
  eval_cmd->add_flag("--recall", eval_recall, "also run retrieval recall");
  eval_cmd->callback([&] {
    Config c = make_config(g);
    Artifacts a = load_artifacts(g, c, eval_paths, true);
    std::vector<Document> heldout = load_corpus(resolve(g, eval_heldout));
    GeneratorCheckpoint ck = load_generator_checkpoint(resolve(g, eval_ckpt));
    const int k_infer = eval_k >= 0 ? eval_k : c.eval.k_infer;
    InferContext ctx = eval_ctx == "retrieve" ? InferContext::retrieve
                       : eval_ctx == "random" ? InferContext::random
                                              : InferContext::none;
    HeldoutPpl ppl = evaluate_heldout(ck.params, heldout, a.index, a.enc,
                                      k_infer, c.strategy, ctx,
                                      ContextContent::full_doc, c.seed);
    std::cout << "image_ppl=" << ppl.image_ppl << " text_ppl=" << ppl.text_ppl
              << " total_ppl=" << ppl.total_ppl << " (K=" << k_infer << ", "
              << eval_ctx << ")\n";
    if (eval_recall) {
      const int n =
          std::min<int>(c.eval.recall_pairs, static_cast<int>(a.corpus.size()));
      std::vector<Document> pairs(a.corpus.begin(), a.corpus.begin() + n);
      for (QueryMode mode :
           {QueryMode::text, QueryMode::image, QueryMode::mixture}) {
        auto recall = retrieval_recall(a.index, pairs, mode, a.enc);
        std::cout << "recall[" << query_mode_name(mode) << "]:";
        for (auto [k, v] : recall) std::cout << " @" << k << "=" << v;
        std::cout << "\n";
      }
    }
    if (!eval_records.empty()) {
      EvalRecord r;
      r.arm = "eval/" + train_mode_name(ck.train_config.mode) + "_" + eval_ctx;
      r.seed = ck.train_config.seed;
      r.image_ppl = ppl.image_ppl;
      r.text_ppl = ppl.text_ppl;
      r.total_ppl = ppl.total_ppl;
      r.steps = ck.step;
      r.config_hash = config_hash(c);
      r.version = kArtifactVersion;
      append_eval_records(resolve(g, eval_records), {r});
    }
  });

  // ---- ablate ----------------------------------------------------------
  auto* abl_cmd = app.add_subcommand("ablate", "run the design-choice ablation grid");
  ArtifactPaths abl_paths;
  std::string abl_heldout, abl_records, abl_seeds = "0,1";
  add_artifact_flags(abl_cmd, abl_paths, /*need_index=*/true);
  abl_cmd->add_option("--heldout", abl_heldout, "held-out corpus JSONL")
      ->required();
  abl_cmd->add_option("--records", abl_records, "append eval records here")
      ->required();
  abl_cmd->add_option("--seeds", abl_seeds, "comma-separated seeds");
  abl_cmd->callback([&] {
    Config c = make_config(g);
    Artifacts a = load_artifacts(g, c, abl_paths, true);
    std::vector<Document> heldout = load_corpus(resolve(g, abl_heldout));
    GeneratorConfig gcfg = attach_vocab(c.generator, a);
    auto records = run_ablation_grid(a.corpus, heldout, a.index, a.enc, gcfg,
                                     c.train, c.strategy,
                                     parse_seeds(abl_seeds), c.eval.k_infer,
                                     config_hash(c), g.threads);
    append_eval_records(resolve(g, abl_records), records);
    std::cout << render_report(records);
  });

  // ---- k-sweep ---------------------------------------------------------
  auto* ks_cmd = app.add_subcommand("k-sweep", "held-out ppl for several K");
  ArtifactPaths ks_paths;
  std::string ks_ckpt, ks_heldout, ks_records, ks_list = "1,2,4,8";
  add_artifact_flags(ks_cmd, ks_paths, /*need_index=*/true);
  ks_cmd->add_option("--checkpoint", ks_ckpt, "generator checkpoint")
      ->required();
  ks_cmd->add_option("--heldout", ks_heldout, "held-out corpus JSONL")
      ->required();
  ks_cmd->add_option("--ks", ks_list, "comma-separated K values");
  ks_cmd->add_option("--records", ks_records, "append eval records here");
  ks_cmd->callback([&] {
    Config c = make_config(g);
    Artifacts a = load_artifacts(g, c, ks_paths, true);
    std::vector<Document> heldout = load_corpus(resolve(g, ks_heldout));
    GeneratorCheckpoint ck = load_generator_checkpoint(resolve(g, ks_ckpt));
    auto sweep = k_sweep(ck.params, heldout, a.index, a.enc,
                         parse_ints(ks_list, "--ks"), c.strategy, c.seed);
    std::vector<EvalRecord> records;
    for (auto& [K, ppl] : sweep) {
      std::cout << "K=" << K << " image_ppl=" << ppl.image_ppl
                << " text_ppl=" << ppl.text_ppl
                << " total_ppl=" << ppl.total_ppl << "\n";
      EvalRecord r;
      r.arm = "k_sweep/K" + std::to_string(K);
      r.seed = c.seed;
      r.image_ppl = ppl.image_ppl;
      r.text_ppl = ppl.text_ppl;
      r.total_ppl = ppl.total_ppl;
      r.steps = ck.step;
      r.config_hash = config_hash(c);
      r.version = kArtifactVersion;
      records.push_back(std::move(r));
    }
    if (!ks_records.empty())
      append_eval_records(resolve(g, ks_records), records);
  });

  // ---- generate --------------------------------------------------------
  auto* gen_cmd = app.add_subcommand("generate", "caption -> image");
  ArtifactPaths gen_paths;
  std::string gen_caption, gen_ckpt, gen_out, gen_manual;
  int gen_k = -1, gen_samples = -1;
  add_artifact_flags(gen_cmd, gen_paths, /*need_index=*/true);
  gen_cmd->add_option("--caption", gen_caption, "source caption")->required();
  gen_cmd->add_option("--checkpoint", gen_ckpt, "generator checkpoint")
      ->required();
  gen_cmd->add_option("--out", gen_out, "output PNG")->required();
  gen_cmd->add_option("--k", gen_k, "retrieved documents");
  gen_cmd->add_option("--n-samples", gen_samples, "candidates to rerank");
  gen_cmd->add_option("--manual-context", gen_manual,
                      "JSONL documents to use instead of retrieval");
  gen_cmd->callback([&] {
    Config c = make_config(g);
    check_overwrite(g, resolve(g, gen_out));
    Artifacts a = load_artifacts(g, c, gen_paths, true);
    GeneratorCheckpoint ck = load_generator_checkpoint(resolve(g, gen_ckpt));
    const int K = gen_k >= 0 ? gen_k : c.eval.k_infer;
    const int n = gen_samples > 0 ? gen_samples : c.eval.n_samples_image;
    TextToImageResult result;
    if (!gen_manual.empty()) {
      std::vector<Document> manual = load_corpus(resolve(g, gen_manual));
      result = controlled_generate(gen_caption, manual, ck.params, a.enc, n,
                                   c.sampling, c.seed);
    } else {
      result = text_to_image(gen_caption, ck.params, a.enc, a.index, K,
                             c.strategy, n, c.sampling, c.seed);
    }
    write_png(resolve(g, gen_out), result.image);
    std::ofstream(resolve(g, gen_out) + ".provenance.json")
        << result.prov.to_json() << "\n";
    RunManifest m = base_manifest("generate", argc, argv, c, c.seed);
    finish_manifest(g, m, gen_paths, {gen_out});
    std::cout << "wrote " << gen_out << " (chosen sample "
              << result.prov.chosen << ")\n";
  });

  // ---- caption ---------------------------------------------------------
  auto* cap_cmd = app.add_subcommand("caption", "image -> caption");
  ArtifactPaths cap_paths;
  std::string cap_image, cap_ckpt;
  int cap_k = -1, cap_samples = -1;
  add_artifact_flags(cap_cmd, cap_paths, /*need_index=*/true);
  cap_cmd->add_option("--image", cap_image, "input PNG")->required();
  cap_cmd->add_option("--checkpoint", cap_ckpt, "generator checkpoint")
      ->required();
  cap_cmd->add_option("--k", cap_k, "retrieved documents");
  cap_cmd->add_option("--n-samples", cap_samples, "candidates to rank");
  cap_cmd->callback([&] {
    Config c = make_config(g);
    Artifacts a = load_artifacts(g, c, cap_paths, true);
    GeneratorCheckpoint ck = load_generator_checkpoint(resolve(g, cap_ckpt));
    Image img = read_png(resolve(g, cap_image));
    const int K = cap_k >= 0 ? cap_k : c.eval.k_infer;
    const int n = cap_samples > 0 ? cap_samples : c.eval.n_samples_caption;
    CaptionResult result = image_to_caption(img, ck.params, a.enc, a.index, K,
                                            c.strategy, n, c.sampling, c.seed);
    std::cout << result.caption << "\n";
    std::cerr << result.prov.to_json() << "\n";
  });

  // ---- infill ----------------------------------------------------------
  auto* inf_cmd = app.add_subcommand("infill", "image patch infilling / editing");
  ArtifactPaths inf_paths;
  std::string inf_image, inf_ckpt, inf_out, inf_mask, inf_manual;
  int inf_k = -1;
  add_artifact_flags(inf_cmd, inf_paths, /*need_index=*/true);
  inf_cmd->add_option("--image", inf_image, "input PNG")->required();
  inf_cmd->add_option("--mask", inf_mask, "comma-separated patch indices")
      ->required();
  inf_cmd->add_option("--checkpoint", inf_ckpt, "generator checkpoint")
      ->required();
  inf_cmd->add_option("--out", inf_out, "output PNG")->required();
  inf_cmd->add_option("--k", inf_k, "retrieved documents");
  inf_cmd->add_option("--manual-context", inf_manual,
                      "JSONL documents to use instead of retrieval");
  inf_cmd->callback([&] {
    Config c = make_config(g);
    check_overwrite(g, resolve(g, inf_out));
    Artifacts a = load_artifacts(g, c, inf_paths, true);
    GeneratorCheckpoint ck = load_generator_checkpoint(resolve(g, inf_ckpt));
    Image img = read_png(resolve(g, inf_image));
    std::set<int> mask;
    for (int idx : parse_ints(inf_mask, "--mask")) mask.insert(idx);
    const int K = inf_k >= 0 ? inf_k : c.eval.k_infer;
    InfillResult result;
    if (!inf_manual.empty()) {
      std::vector<Document> manual = load_corpus(resolve(g, inf_manual));
      result = infill_image(img, mask, ck.params, a.enc, nullptr, &manual, K,
                            c.strategy, c.sampling, c.seed);
    } else {
      result = infill_image(img, mask, ck.params, a.enc, &a.index, nullptr, K,
                            c.strategy, c.sampling, c.seed);
    }
    write_png(resolve(g, inf_out), result.image);
    std::ofstream(resolve(g, inf_out) + ".provenance.json")
        << result.prov.to_json() << "\n";
    std::cout << "wrote " << inf_out << "\n";
  });

  // ---- classify --------------------------------------------------------
  auto* cls_cmd = app.add_subcommand("classify", "k-shot ensemble classification");
  ArtifactPaths cls_paths;
  std::string cls_demos, cls_test, cls_ckpt;
  int cls_k = 1;
  bool cls_swap = false;
  add_artifact_flags(cls_cmd, cls_paths, /*need_index=*/false);
  cls_cmd->add_option("--demos", cls_demos,
                      "JSONL demos: {label: x|y, image_b64, w, h}")
      ->required();
  cls_cmd->add_option("--test", cls_test, "test image PNG")->required();
  cls_cmd->add_option("--checkpoint", cls_ckpt, "generator checkpoint")
      ->required();
  cls_cmd->add_option("--k", cls_k, "ensemble passes");
  cls_cmd->add_flag("--swap-demo-order", cls_swap,
                    "present class-Y demo before class-X demo");
  cls_cmd->callback([&] {
    Config c = make_config(g);
    Artifacts a = load_artifacts(g, c, cls_paths, false, false);
    GeneratorCheckpoint ck = load_generator_checkpoint(resolve(g, cls_ckpt));
    Image test = read_png(resolve(g, cls_test));
    std::ifstream f(resolve(g, cls_demos));
    if (!f) throw std::runtime_error("cannot open demos: " + cls_demos);
    std::vector<KshotDemo> xs, ys;
    std::string line;
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      auto j = nlohmann::json::parse(line);
      KshotDemo d;
      d.pixels.width = j.at("w");
      d.pixels.height = j.at("h");
      d.pixels.rgb = base64_decode(j.at("image_b64"));
      d.label_id = j.at("label") == "x" ? kLabelXId : kLabelYId;
      (d.label_id == kLabelXId ? xs : ys).push_back(std::move(d));
    }
    std::vector<std::pair<KshotDemo, KshotDemo>> pairs;
    for (size_t i = 0; i < std::min(xs.size(), ys.size()); ++i)
      pairs.emplace_back(xs[i], ys[i]);
    KshotResult r =
        kshot_classify(pairs, test, ck.params, a.enc, cls_k, cls_swap);
    std::cout << "p_x=" << r.p_x << " p_y=" << r.p_y << "\n";
  });

  // ---- report ----------------------------------------------------------
  auto* rep_cmd = app.add_subcommand("report", "render a results table");
  std::string rep_records;
  rep_cmd->add_option("--records", rep_records, "eval records JSONL")
      ->required();
  rep_cmd->callback([&] {
    std::cout << render_report(load_eval_records(resolve(g, rep_records)));
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
