#include "ramm/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "ramm/checkpoint.hpp"

namespace ramm {

std::string train_mode_name(TrainMode m) {
  return m == TrainMode::retrieval ? "retrieval" : "baseline";
}
TrainMode train_mode_from_name(const std::string& s) {
  if (s == "retrieval") return TrainMode::retrieval;
  if (s == "baseline") return TrainMode::baseline;
  throw std::invalid_argument("unknown train mode: " + s);
}
std::string context_content_name(ContextContent c) {
  switch (c) {
    case ContextContent::full_doc: return "full_doc";
    case ContextContent::text_only: return "text_only";
    case ContextContent::image_only: return "image_only";
  }
  throw std::logic_error("context_content_name");
}
ContextContent context_content_from_name(const std::string& s) {
  if (s == "full_doc") return ContextContent::full_doc;
  if (s == "text_only") return ContextContent::text_only;
  if (s == "image_only") return ContextContent::image_only;
  throw std::invalid_argument("unknown context content: " + s);
}

void TrainConfig::validate() const {
  if (steps < 1) throw std::invalid_argument("train config: steps must be >= 1");
  if (batch_size < 1)
    throw std::invalid_argument("train config: batch_size must be >= 1");
  if (warmup_steps < 1 || warmup_steps >= steps)
    throw std::invalid_argument(
        "train config: warmup_steps must be in [1, steps)");
  if (!(grad_clip > 0))
    throw std::invalid_argument("train config: grad_clip must be > 0");
  if (!(alpha >= 0))
    throw std::invalid_argument("train config: alpha must be >= 0");
  if (!(peak_lr > 0))
    throw std::invalid_argument("train config: peak_lr must be > 0");
  if (!(p_text_query >= 0 && p_text_query <= 1))
    throw std::invalid_argument(
        "train config: p_text_query must be in [0, 1]");
}

double lr_at_step(const TrainConfig& cfg, int step) {
  if (step <= cfg.warmup_steps)
    return cfg.peak_lr * static_cast<double>(step) / cfg.warmup_steps;
  return cfg.peak_lr * static_cast<double>(cfg.steps - step) /
         (cfg.steps - cfg.warmup_steps);
}

double clip_global_norm(GeneratorParams& grads, double clip) {
  double sq = 0;
  for (const TensorView& v : tensor_views(grads))
    for (size_t i = 0; i < v.size; ++i) sq += v.data[i] * v.data[i];
  const double norm = std::sqrt(sq);
  if (norm > clip) {
    const double scale = clip / norm;
    for (const TensorView& v : tensor_views(grads))
      for (size_t i = 0; i < v.size; ++i) v.data[i] *= scale;
  }
  return norm;
}

namespace {

Document slice_content(const Document& doc, ContextContent content) {
  switch (content) {
    case ContextContent::full_doc: return doc;
    case ContextContent::text_only: return text_part_doc(doc);
    case ContextContent::image_only: return image_part_doc(doc);
  }
  throw std::logic_error("slice_content");
}

}  // namespace

TokenStream make_training_example(const Document& doc, const MemoryIndex& index,
                                  const RetrievalStrategy& strategy, Rng& rng,
                                  TrainMode mode, ContextContent content,
                                  bool most_relevant_first,
                                  double p_text_query,
                                  const FrozenEncoder& enc,
                                  const GeneratorConfig& gcfg) {
  const bool text_query = rng.bernoulli(p_text_query);
  const int K = sample_K(rng);

  std::vector<Document> context;
  if (K > 0) {
    if (mode == TrainMode::retrieval) {
      RetrievalStrategy s = strategy;
      s.exclude_ids.insert(doc.id);  // never leak the training target
      Document query = text_query ? text_part_doc(doc) : image_part_doc(doc);
      context = retrieve(index, query, K, s, RetrievalMode::train, rng, enc);
    } else if (index.size() > 1 || index.doc(0).id != doc.id) {
      // "Random at train": K uniform random memory documents, self excluded.
      while (static_cast<int>(context.size()) < K) {
        int row = static_cast<int>(rng.below(index.size()));
        if (index.doc(row).id == doc.id) continue;
        context.push_back(index.doc(row));
      }
    }
  }
  if (!most_relevant_first) std::reverse(context.begin(), context.end());

  TokenStream main =
      serialize_document(doc, enc.vocab, enc.codebook);
  main = to_infill_instance(main, rng, gcfg.p_infill, gcfg.span_frac,
                            gcfg.layout());
  main.push(kEosId, Role::main);  // learned terminator

  std::vector<TokenStream> ctx_streams;
  for (const Document& c : context)
    ctx_streams.push_back(
        serialize_document(slice_content(c, content), enc.vocab, enc.codebook));

  // Overflow policy: drop the lowest-relevance context documents until the
  // sequence fits.
  while (true) {
    size_t total = main.tokens.size();
    for (const auto& s : ctx_streams) total += s.tokens.size() + 1;
    if (total <= static_cast<size_t>(gcfg.max_seq_len)) break;
    if (ctx_streams.empty())
      throw std::length_error(
          "training example: main document alone exceeds max_seq_len");
    if (most_relevant_first)
      ctx_streams.pop_back();
    else
      ctx_streams.erase(ctx_streams.begin());
  }
  return build_training_sequence(ctx_streams, main, gcfg.max_seq_len);
}

namespace {

TokenStream build_example(const Document& doc, const MemoryIndex& index,
                          const RetrievalStrategy& strategy, Rng& rng,
                          const TrainConfig& tcfg, const FrozenEncoder& enc,
                          const GeneratorConfig& gcfg) {
  return make_training_example(doc, index, strategy, rng, tcfg.mode,
                               tcfg.context_content, tcfg.most_relevant_first,
                               tcfg.p_text_query, enc, gcfg);
}

void write_params_section(CheckpointFile& ck, const std::string& tag,
                          GeneratorParams& p) {
  auto views = tensor_views(p);
  ck.set(tag, [&](BinWriter& w) {
    w.u64(views.size());
    for (const TensorView& v : views) {
      w.str(v.name);
      w.u64(v.size);
      w.bytes(v.data, v.size * sizeof(double));
    }
  });
}

void read_params_section(const CheckpointFile& ck, const std::string& tag,
                         GeneratorParams& p) {
  BinReader r = ck.reader(tag);
  auto views = tensor_views(p);
  uint64_t n = r.u64();
  if (n != views.size())
    throw std::runtime_error("checkpoint section '" + tag +
                             "': tensor count mismatch");
  for (TensorView& v : views) {
    std::string name = r.str();
    uint64_t size = r.u64();
    if (name != v.name || size != v.size)
      throw std::runtime_error("checkpoint section '" + tag +
                               "': tensor layout mismatch at " + v.name);
    r.bytes(v.data, v.size * sizeof(double));
  }
}

nlohmann::json generator_config_json(const GeneratorConfig& g) {
  return {{"text_vocab_size", g.text_vocab_size},
          {"codebook_size", g.codebook_size},
          {"d_model", g.d_model},
          {"n_heads", g.n_heads},
          {"n_layers", g.n_layers},
          {"max_seq_len", g.max_seq_len},
          {"p_infill", g.p_infill},
          {"span_frac", g.span_frac}};
}

GeneratorConfig generator_config_from_json(const nlohmann::json& j) {
  GeneratorConfig g;
  g.text_vocab_size = j.at("text_vocab_size");
  g.codebook_size = j.at("codebook_size");
  g.d_model = j.at("d_model");
  g.n_heads = j.at("n_heads");
  g.n_layers = j.at("n_layers");
  g.max_seq_len = j.at("max_seq_len");
  g.p_infill = j.at("p_infill");
  g.span_frac = j.at("span_frac");
  return g;
}

nlohmann::json train_config_json(const TrainConfig& t) {
  return {{"steps", t.steps},
          {"batch_size", t.batch_size},
          {"peak_lr", t.peak_lr},
          {"warmup_steps", t.warmup_steps},
          {"adam_beta1", t.adam_beta1},
          {"adam_beta2", t.adam_beta2},
          {"adam_eps", t.adam_eps},
          {"grad_clip", t.grad_clip},
          {"alpha", t.alpha},
          {"seed", t.seed},
          {"mode", train_mode_name(t.mode)},
          {"p_text_query", t.p_text_query},
          {"context_content", context_content_name(t.context_content)},
          {"most_relevant_first", t.most_relevant_first},
          {"checkpoint_every", t.checkpoint_every},
          {"log_every", t.log_every}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig t;
  t.steps = j.at("steps");
  t.batch_size = j.at("batch_size");
  t.peak_lr = j.at("peak_lr");
  t.warmup_steps = j.at("warmup_steps");
  t.adam_beta1 = j.at("adam_beta1");
  t.adam_beta2 = j.at("adam_beta2");
  t.adam_eps = j.at("adam_eps");
  t.grad_clip = j.at("grad_clip");
  t.alpha = j.at("alpha");
  t.seed = j.at("seed");
  t.mode = train_mode_from_name(j.at("mode"));
  t.p_text_query = j.at("p_text_query");
  t.context_content = context_content_from_name(j.at("context_content"));
  t.most_relevant_first = j.at("most_relevant_first");
  t.checkpoint_every = j.at("checkpoint_every");
  t.log_every = j.at("log_every");
  return t;
}

}  // namespace

void save_generator_checkpoint(const std::string& path,
                               const GeneratorCheckpoint& ck) {
  CheckpointFile file;
  file.set("gcfg", [&](BinWriter& w) {
    w.str(generator_config_json(ck.params.config).dump());
  });
  file.set("tcfg", [&](BinWriter& w) {
    w.str(train_config_json(ck.train_config).dump());
  });
  auto& mut = const_cast<GeneratorCheckpoint&>(ck);
  write_params_section(file, "genr", mut.params);
  write_params_section(file, "admm", mut.adam_m);
  write_params_section(file, "admv", mut.adam_v);
  file.set("rngs", [&](BinWriter& w) { w.str(ck.rng_state); });
  file.set("step", [&](BinWriter& w) {
    w.u64(static_cast<uint64_t>(ck.step));
  });
  file.save(path);
}

GeneratorCheckpoint load_generator_checkpoint(const std::string& path) {
  CheckpointFile file = CheckpointFile::load(path);
  GeneratorCheckpoint ck;
  {
    BinReader r = file.reader("gcfg");
    GeneratorConfig gcfg =
        generator_config_from_json(nlohmann::json::parse(r.str()));
    Rng dummy(0);
    ck.params = GeneratorParams::init(gcfg, dummy);
  }
  {
    BinReader r = file.reader("tcfg");
    ck.train_config = train_config_from_json(nlohmann::json::parse(r.str()));
  }
  ck.adam_m = GeneratorParams::zeros_like(ck.params);
  ck.adam_v = GeneratorParams::zeros_like(ck.params);
  read_params_section(file, "genr", ck.params);
  read_params_section(file, "admm", ck.adam_m);
  read_params_section(file, "admv", ck.adam_v);
  {
    BinReader r = file.reader("rngs");
    ck.rng_state = r.str();
  }
  {
    BinReader r = file.reader("step");
    ck.step = static_cast<int>(r.u64());
  }
  return ck;
}

TrainResult train_generator(const std::vector<Document>& train_docs,
                            const MemoryIndex& index, const FrozenEncoder& enc,
                            const GeneratorConfig& gcfg,
                            const TrainConfig& tcfg,
                            const RetrievalStrategy& strategy,
                            const std::string& checkpoint_path,
                            const std::string& metrics_path,
                            const std::string& resume_from) {
  gcfg.validate();
  tcfg.validate();
  validate_strategy(strategy);
  if (train_docs.empty())
    throw std::invalid_argument("train_generator: empty corpus");

  GeneratorParams params;
  GeneratorParams adam_m = GeneratorParams{};
  GeneratorParams adam_v = GeneratorParams{};
  Rng data_rng(0);
  int start_step = 0;

  if (resume_from.empty()) {
    Rng master(rng_mix(tcfg.seed, 0x6e6e6e));
    Rng init_rng = master.child(0);
    params = GeneratorParams::init(gcfg, init_rng);
    adam_m = GeneratorParams::zeros_like(params);
    adam_v = GeneratorParams::zeros_like(params);
    data_rng = master.child(1);
  } else {
    GeneratorCheckpoint ck = load_generator_checkpoint(resume_from);
    params = std::move(ck.params);
    adam_m = std::move(ck.adam_m);
    adam_v = std::move(ck.adam_v);
    data_rng.load_state(ck.rng_state);
    start_step = ck.step;
  }

  TrainResult result;
  const auto t0 = std::chrono::steady_clock::now();

  for (int step = start_step + 1; step <= tcfg.steps; ++step) {
    // Assemble the batch first so the role-group means pool over the whole
    // batch.
    std::vector<TokenStream> batch;
    batch.reserve(tcfg.batch_size);
    for (int b = 0; b < tcfg.batch_size; ++b) {
      const Document& doc =
          train_docs[data_rng.below(train_docs.size())];
      batch.push_back(
          build_example(doc, index, strategy, data_rng, tcfg, enc, gcfg));
    }
    long main_count = 0, retr_count = 0;
    for (const TokenStream& s : batch) {
      for (int t = 0; t + 1 < s.size(); ++t)
        (s.roles[t + 1] == Role::main ? main_count : retr_count) += 1;
    }
    const double w_main = main_count > 0 ? 1.0 / main_count : 0.0;
    const double w_retr = retr_count > 0 ? tcfg.alpha / retr_count : 0.0;

    GeneratorParams grads = GeneratorParams::zeros_like(params);
    double main_sum = 0, retr_sum = 0;
    for (const TokenStream& s : batch) {
      CacheBox cache;
      Eigen::MatrixXd logits = generator_forward(params, s.tokens, cache.get());
      Eigen::VectorXd nll = position_nll(logits, s.tokens);
      for (int t = 0; t + 1 < s.size(); ++t)
        (s.roles[t + 1] == Role::main ? main_sum : retr_sum) += nll(t);
      Eigen::MatrixXd dlogits = loss_dlogits(logits, s, w_main, w_retr);
      generator_backward(params, s.tokens, *cache.get(), dlogits, grads);
    }
    const double loss_main = main_count > 0 ? main_sum / main_count : 0.0;
    const double loss_retr = retr_count > 0 ? retr_sum / retr_count : 0.0;
    const double loss_total = loss_main + tcfg.alpha * loss_retr;
    if (!std::isfinite(loss_total))
      throw std::runtime_error("train_generator: non-finite loss at step " +
                               std::to_string(step) +
                               " (main=" + std::to_string(loss_main) +
                               ", retr=" + std::to_string(loss_retr) + ")");

    clip_global_norm(grads, tcfg.grad_clip);

    const double lr = lr_at_step(tcfg, step);
    auto pviews = tensor_views(params);
    auto gviews = tensor_views(grads);
    auto mviews = tensor_views(adam_m);
    auto vviews = tensor_views(adam_v);
    const double bc1 = 1.0 - std::pow(tcfg.adam_beta1, step);
    const double bc2 = 1.0 - std::pow(tcfg.adam_beta2, step);
    for (size_t vi = 0; vi < pviews.size(); ++vi) {
      double* p = pviews[vi].data;
      double* g = gviews[vi].data;
      double* m = mviews[vi].data;
      double* v = vviews[vi].data;
      for (size_t i = 0; i < pviews[vi].size; ++i) {
        m[i] = tcfg.adam_beta1 * m[i] + (1 - tcfg.adam_beta1) * g[i];
        v[i] = tcfg.adam_beta2 * v[i] + (1 - tcfg.adam_beta2) * g[i] * g[i];
        p[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + tcfg.adam_eps);
      }
    }

    if (step % tcfg.log_every == 0 || step == tcfg.steps) {
      auto now = std::chrono::steady_clock::now();
      long wall_ms = static_cast<long>(
          std::chrono::duration_cast<std::chrono::milliseconds>(now - t0)
              .count());
      result.log.push_back(
          {step, lr, loss_main, loss_retr, loss_total, wall_ms});
    }

    if (!checkpoint_path.empty() && tcfg.checkpoint_every > 0 &&
        step % tcfg.checkpoint_every == 0 && step < tcfg.steps) {
      GeneratorCheckpoint ck{params, adam_m, adam_v, data_rng.save_state(),
                             step, tcfg};
      save_generator_checkpoint(
          checkpoint_path + ".step" + std::to_string(step), ck);
    }
  }

  if (!checkpoint_path.empty()) {
    GeneratorCheckpoint ck{params, adam_m, adam_v, data_rng.save_state(),
                           tcfg.steps, tcfg};
    save_generator_checkpoint(checkpoint_path, ck);
  }
  if (!metrics_path.empty()) append_metrics_jsonl(metrics_path, result.log);

  result.params = std::move(params);
  return result;
}

HeldoutPpl evaluate_heldout(const GeneratorParams& params,
                            const std::vector<Document>& eval_docs,
                            const MemoryIndex& index, const FrozenEncoder& enc,
                            int K_infer, const RetrievalStrategy& strategy,
                            InferContext ctx, ContextContent content,
                            uint64_t seed) {
  const VocabLayout layout = params.config.layout();
  Rng rng(rng_mix(seed, 0xeba1));
  double text_sum = 0, image_sum = 0, total_sum = 0;
  long text_n = 0, image_n = 0, total_n = 0;

  for (const Document& doc : eval_docs) {
    std::vector<Document> context;
    if (K_infer > 0 && ctx == InferContext::retrieve) {
      context = retrieve(index, text_part_doc(doc), K_infer, strategy,
                         RetrievalMode::infer, rng, enc);
    } else if (K_infer > 0 && ctx == InferContext::random) {
      while (static_cast<int>(context.size()) < K_infer) {
        int row = static_cast<int>(rng.below(index.size()));
        if (index.doc(row).id == doc.id) continue;
        context.push_back(index.doc(row));
      }
    }
    std::vector<TokenStream> ctx_streams;
    for (const Document& c : context) {
      Document sliced = c;
      if (content == ContextContent::text_only) sliced = text_part_doc(c);
      if (content == ContextContent::image_only) sliced = image_part_doc(c);
      ctx_streams.push_back(serialize_document(sliced, enc.vocab, enc.codebook));
    }
    TokenStream main = serialize_document(doc, enc.vocab, enc.codebook);
    main.push(kEosId, Role::main);
    TokenStream seq =
        build_training_sequence(ctx_streams, main, params.config.max_seq_len);

    Eigen::MatrixXd logits = generator_forward(params, seq.tokens);
    auto [tsum, tcount] =
        sequence_nll(logits, seq, layout, NllFilter::text_targets, true);
    auto [isum, icount] =
        sequence_nll(logits, seq, layout, NllFilter::image_targets, true);
    auto [asum, acount] =
        sequence_nll(logits, seq, layout, NllFilter::all, true);
    text_sum += tsum;
    text_n += tcount;
    image_sum += isum;
    image_n += icount;
    total_sum += asum;
    total_n += acount;
  }

  HeldoutPpl out;
  out.text_targets = text_n;
  out.image_targets = image_n;
  out.total_targets = total_n;
  out.text_ppl = text_n > 0 ? std::exp(text_sum / text_n) : 0.0;
  out.image_ppl = image_n > 0 ? std::exp(image_sum / image_n) : 0.0;
  out.total_ppl = total_n > 0 ? std::exp(total_sum / total_n) : 0.0;
  return out;
}

void append_metrics_jsonl(const std::string& path,
                          const std::vector<MetricsRecord>& records) {
  std::ofstream f(path, std::ios::app);
  if (!f) throw std::runtime_error("cannot open metrics log: " + path);
  for (const MetricsRecord& r : records) {
    nlohmann::json j = {{"step", r.step},
                        {"lr", r.lr},
                        {"loss_main", r.loss_main},
                        {"loss_retr", r.loss_retr},
                        {"loss_total", r.loss_total},
                        {"wall_ms", r.wall_ms}};
    f << j.dump() << '\n';
  }
}

}  // namespace ramm
