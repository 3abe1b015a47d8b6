// Python bindings for the core operations: corpus synthesis, tokenizers,
// the dual encoder, the memory index with retrieval, generator training and
// the task pipelines.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ramm/corpus_io.hpp"
#include "ramm/eval.hpp"
#include "ramm/image_io.hpp"
#include "ramm/infer.hpp"
#include "ramm/manifest.hpp"

namespace py = pybind11;
using namespace ramm;

namespace {

Image image_from_array(const py::array_t<uint8_t>& arr) {
  if (arr.ndim() != 3 || arr.shape(2) != 3)
    throw std::invalid_argument("expected an (H, W, 3) uint8 array");
  Image img;
  img.height = static_cast<int>(arr.shape(0));
  img.width = static_cast<int>(arr.shape(1));
  img.rgb.resize(static_cast<size_t>(img.width) * img.height * 3);
  auto view = arr.unchecked<3>();
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) img.at(x, y)[c] = view(y, x, c);
  return img;
}

py::array_t<uint8_t> image_to_array(const Image& img) {
  py::array_t<uint8_t> arr({img.height, img.width, 3});
  auto view = arr.mutable_unchecked<3>();
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) view(y, x, c) = img.at(x, y)[c];
  return arr;
}

py::array_t<double> vec_to_array(const Eigen::VectorXd& v) {
  py::array_t<double> arr(v.size());
  std::memcpy(arr.mutable_data(), v.data(), sizeof(double) * v.size());
  return arr;
}

Embedding embedding_from_array(const py::array_t<double>& arr) {
  if (arr.ndim() != 1) throw std::invalid_argument("expected a 1-d array");
  Embedding e;
  e.values.resize(arr.shape(0));
  std::memcpy(e.values.data(), arr.data(), sizeof(double) * arr.shape(0));
  return e;
}

py::dict provenance_dict(const PipelineProvenance& p) {
  py::dict d;
  d["retrieved_ids"] = p.retrieved_ids;
  d["retrieved_scores"] = p.retrieved_scores;
  d["retrieval_bypassed"] = p.retrieval_bypassed;
  d["candidate_scores"] = p.candidate_scores;
  d["chosen"] = p.chosen;
  d["seed"] = p.seed;
  return d;
}

SynthConfig synth_config_from_kwargs(
    std::vector<std::string> shapes, std::vector<std::string> colors,
    std::vector<std::string> backgrounds, int image_size, int n_train,
    int n_heldout_compositions, int n_heldout_docs, uint64_t seed) {
  SynthConfig c;
  if (!shapes.empty()) c.shapes = std::move(shapes);
  if (!colors.empty()) c.colors = std::move(colors);
  if (!backgrounds.empty()) c.backgrounds = std::move(backgrounds);
  c.image_size = image_size;
  c.n_train = n_train;
  c.n_heldout_compositions = n_heldout_compositions;
  c.n_heldout_docs = n_heldout_docs;
  c.seed = seed;
  return c;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() =
      "Retrieval-augmented multimodal language modeling, desk scale: "
      "mixed-modal dense retrieval over an external memory plus a "
      "causal-masked Transformer generator.";
  m.attr("__version__") = kArtifactVersion;

  py::class_<Document>(m, "Document")
      .def(py::init([](const std::string& id, const std::string& caption,
                       py::object image) {
             Document d;
             d.id = id;
             if (!caption.empty())
               d.segments.push_back(Segment::make_text(caption));
             if (!image.is_none())
               d.segments.push_back(Segment::make_image(
                   image_from_array(image.cast<py::array_t<uint8_t>>())));
             validate_document(d);
             return d;
           }),
           py::arg("id"), py::arg("caption") = "",
           py::arg("image") = py::none())
      .def_readonly("id", &Document::id)
      .def_property_readonly("split",
                             [](const Document& d) { return split_name(d.split); })
      .def_property_readonly("caption",
                             [](const Document& d) {
                               auto t = text_part(d);
                               return t ? *t : std::string();
                             })
      .def_property_readonly("image",
                             [](const Document& d) -> py::object {
                               for (const Segment& s : d.segments)
                                 if (s.kind == SegmentKind::image)
                                   return image_to_array(s.pixels);
                               return py::none();
                             })
      .def("__repr__", [](const Document& d) {
        return "<Document id='" + d.id + "' segments=" +
               std::to_string(d.segments.size()) + ">";
      });

  py::class_<Composition>(m, "Composition")
      .def_readonly("shape", &Composition::shape)
      .def_readonly("color", &Composition::color)
      .def_readonly("background", &Composition::background)
      .def("caption", &composition_caption)
      .def("__repr__", [](const Composition& c) {
        return "<Composition " + composition_caption(c) + ">";
      });

  m.def("synth_corpus", [](std::vector<std::string> shapes,
                           std::vector<std::string> colors,
                           std::vector<std::string> backgrounds,
                           int image_size, int n_train,
                           int n_heldout_compositions, int n_heldout_docs,
                           uint64_t seed) {
          SynthCorpus corpus = synth_corpus(synth_config_from_kwargs(
              std::move(shapes), std::move(colors), std::move(backgrounds),
              image_size, n_train, n_heldout_compositions, n_heldout_docs,
              seed));
          return py::make_tuple(corpus.train, corpus.heldout,
                                corpus.train_compositions,
                                corpus.heldout_compositions);
        },
        py::arg("shapes") = std::vector<std::string>{},
        py::arg("colors") = std::vector<std::string>{},
        py::arg("backgrounds") = std::vector<std::string>{},
        py::arg("image_size") = 16, py::arg("n_train") = 5000,
        py::arg("n_heldout_compositions") = 6,
        py::arg("n_heldout_docs") = 500, py::arg("seed") = 0,
        "Generate the synthetic shapes corpus with held-out compositions.");

  m.def("render_composition",
        [](const std::string& shape, const std::string& color,
           const std::string& background, int image_size) {
          return image_to_array(
              render_composition({shape, color, background}, image_size));
        },
        py::arg("shape"), py::arg("color"), py::arg("background"),
        py::arg("image_size") = 16);

  m.def("save_corpus", &save_corpus, py::arg("docs"), py::arg("path"));
  m.def("load_corpus", &load_corpus, py::arg("path"));
  m.def("write_png",
        [](const std::string& path, const py::array_t<uint8_t>& img) {
          write_png(path, image_from_array(img));
        });
  m.def("read_png",
        [](const std::string& path) { return image_to_array(read_png(path)); });

  py::class_<TextVocab>(m, "TextVocab")
      .def_static("fit", &TextVocab::fit, py::arg("corpus"))
      .def("encode", &TextVocab::encode)
      .def("decode", &TextVocab::decode)
      .def_property_readonly("size", &TextVocab::size)
      .def_property_readonly("words", &TextVocab::words)
      .def("save", &TextVocab::save)
      .def_static("load", &TextVocab::load);

  py::class_<Codebook>(m, "Codebook")
      .def_static("fit",
                  [](const std::vector<py::array_t<uint8_t>>& images, int k,
                     int patch_size, int iters, uint64_t seed) {
                    std::vector<Image> imgs;
                    for (const auto& a : images)
                      imgs.push_back(image_from_array(a));
                    return Codebook::fit(imgs, k, patch_size, iters, seed);
                  },
                  py::arg("images"), py::arg("k") = 64,
                  py::arg("patch_size") = 4, py::arg("iters") = 25,
                  py::arg("seed") = 0)
      .def("tokenize",
           [](const Codebook& cb, const py::array_t<uint8_t>& img) {
             return cb.tokenize(image_from_array(img));
           })
      .def("detokenize",
           [](const Codebook& cb, const std::vector<int>& codes,
              int image_size) {
             return image_to_array(cb.detokenize(codes, image_size));
           })
      .def_property_readonly("k", &Codebook::k)
      .def_property_readonly("patch_size", &Codebook::patch_size)
      .def("tokens_per_image", &Codebook::tokens_per_image)
      .def("save", &Codebook::save)
      .def_static("load", &Codebook::load);

  py::class_<FrozenEncoder>(m, "Encoder")
      .def("embed_text",
           [](const FrozenEncoder& e, const std::string& text) {
             return vec_to_array(e.embed_text_str(text).values);
           })
      .def("embed_image",
           [](const FrozenEncoder& e, const py::array_t<uint8_t>& img) {
             return vec_to_array(
                 e.embed_image_pixels(image_from_array(img)).values);
           })
      .def("embed_document",
           [](const FrozenEncoder& e, const Document& d) {
             return vec_to_array(e.embed_document(d).values);
           })
      .def("save",
           [](const FrozenEncoder& e, const std::string& path) {
             e.params.save(path);
           })
      .def_property_readonly("temperature", [](const FrozenEncoder& e) {
        return e.params.temperature;
      });

  m.def("relevance",
        [](const py::array_t<double>& a, const py::array_t<double>& b) {
          return relevance(embedding_from_array(a), embedding_from_array(b));
        },
        "Bi-encoder relevance: dot product of two unit embeddings.");

  m.def("train_encoder",
        [](const std::vector<Document>& docs, const TextVocab& tv,
           const Codebook& cb, int image_size, int dim, int hidden,
           int epochs, int batch_size, double lr, uint64_t seed,
           bool dedupe) {
          std::vector<ContrastivePair> pairs;
          std::set<std::string> seen;
          for (const Document& d : docs) {
            auto text = text_part(d);
            if (!text || !has_image_part(d))
              throw std::invalid_argument(
                  "train_encoder needs caption-image pair documents");
            if (dedupe && !seen.insert(*text).second) continue;
            ContrastivePair p;
            p.text_tokens = tv.encode(*text);
            for (const Segment& s : d.segments)
              if (s.kind == SegmentKind::image) {
                p.image_codes = cb.tokenize(s.pixels);
                break;
              }
            pairs.push_back(std::move(p));
          }
          DualEncoderConfig cfg;
          cfg.dim = dim;
          cfg.hidden = hidden;
          cfg.epochs = epochs;
          cfg.batch_size =
              std::min<int>(batch_size, static_cast<int>(pairs.size()));
          cfg.lr = lr;
          cfg.seed = seed;
          FrozenEncoder enc;
          enc.params = train_dual_encoder(pairs, cfg);
          enc.vocab = tv;
          enc.codebook = cb;
          enc.image_size = image_size;
          return enc;
        },
        py::arg("docs"), py::arg("vocab"), py::arg("codebook"),
        py::arg("image_size") = 16, py::arg("dim") = 64,
        py::arg("hidden") = 64, py::arg("epochs") = 60,
        py::arg("batch_size") = 64, py::arg("lr") = 1e-2, py::arg("seed") = 0,
        py::arg("dedupe") = true,
        "Contrastively train the mixed-modal dual encoder.");

  py::class_<MemoryIndex>(m, "MemoryIndex")
      .def_static("build", &MemoryIndex::build, py::arg("docs"),
                  py::arg("encoder"))
      .def("search",
           [](const MemoryIndex& idx, const py::array_t<double>& q, int n) {
             py::list out;
             for (const auto& hit : idx.search(embedding_from_array(q), n))
               out.append(py::make_tuple(hit.doc_id, hit.score));
             return out;
           },
           py::arg("query"), py::arg("n"))
      .def("retrieve",
           [](const MemoryIndex& idx, const Document& query, int K,
              const FrozenEncoder& enc, bool train_mode, double tau_dup,
              double query_dropout_rate, int pool_size,
              const std::vector<std::string>& exclude_ids, uint64_t seed) {
             RetrievalStrategy s;
             s.tau_dup = tau_dup;
             s.query_dropout_rate = query_dropout_rate;
             s.pool_size = pool_size;
             s.exclude_ids.insert(exclude_ids.begin(), exclude_ids.end());
             Rng rng(seed);
             return retrieve(idx, query, K, s,
                             train_mode ? RetrievalMode::train
                                        : RetrievalMode::infer,
                             rng, enc);
           },
           py::arg("query"), py::arg("k"), py::arg("encoder"),
           py::arg("train_mode") = false, py::arg("tau_dup") = 0.9,
           py::arg("query_dropout_rate") = 0.2, py::arg("pool_size") = 100,
           py::arg("exclude_ids") = std::vector<std::string>{},
           py::arg("seed") = 0)
      .def_property_readonly("size", &MemoryIndex::size)
      .def_property_readonly("dim", &MemoryIndex::dim)
      .def("save", &MemoryIndex::save)
      .def_static("load", &MemoryIndex::load, py::arg("path"),
                  py::arg("docs"));

  py::class_<HeldoutPpl>(m, "HeldoutPpl")
      .def_readonly("image_ppl", &HeldoutPpl::image_ppl)
      .def_readonly("text_ppl", &HeldoutPpl::text_ppl)
      .def_readonly("total_ppl", &HeldoutPpl::total_ppl)
      .def("__repr__", [](const HeldoutPpl& p) {
        return "<HeldoutPpl image=" + std::to_string(p.image_ppl) +
               " text=" + std::to_string(p.text_ppl) + ">";
      });

  py::class_<GeneratorParams>(m, "Generator")
      .def_property_readonly("d_model",
                             [](const GeneratorParams& p) {
                               return p.config.d_model;
                             })
      .def_property_readonly("n_layers", [](const GeneratorParams& p) {
        return p.config.n_layers;
      });

  m.def("train_generator",
        [](const std::vector<Document>& docs, const MemoryIndex& index,
           const FrozenEncoder& enc, const std::string& mode, int steps,
           int batch_size, int d_model, int n_heads, int n_layers,
           int max_seq_len, double peak_lr, int warmup_steps, double alpha,
           uint64_t seed, const std::string& checkpoint_path) {
          GeneratorConfig gcfg;
          gcfg.text_vocab_size = enc.vocab.size();
          gcfg.codebook_size = enc.codebook.k();
          gcfg.d_model = d_model;
          gcfg.n_heads = n_heads;
          gcfg.n_layers = n_layers;
          gcfg.max_seq_len = max_seq_len;
          TrainConfig tcfg;
          tcfg.mode = train_mode_from_name(mode);
          tcfg.steps = steps;
          tcfg.batch_size = batch_size;
          tcfg.peak_lr = peak_lr;
          tcfg.warmup_steps = warmup_steps;
          tcfg.alpha = alpha;
          tcfg.seed = seed;
          RetrievalStrategy strategy;
          TrainResult r = train_generator(docs, index, enc, gcfg, tcfg,
                                          strategy, checkpoint_path);
          return r.params;
        },
        py::arg("docs"), py::arg("index"), py::arg("encoder"),
        py::arg("mode") = "retrieval", py::arg("steps") = 400,
        py::arg("batch_size") = 8, py::arg("d_model") = 128,
        py::arg("n_heads") = 4, py::arg("n_layers") = 4,
        py::arg("max_seq_len") = 768, py::arg("peak_lr") = 1e-3,
        py::arg("warmup_steps") = 100, py::arg("alpha") = 0.1,
        py::arg("seed") = 0, py::arg("checkpoint_path") = "",
        "Train the generator with retrieved (or random) context documents; "
        "joint loss main + alpha * retrieved.");

  m.def("load_generator",
        [](const std::string& path) {
          return load_generator_checkpoint(path).params;
        },
        py::arg("path"));

  m.def("evaluate_heldout",
        [](const GeneratorParams& params, const std::vector<Document>& docs,
           const MemoryIndex& index, const FrozenEncoder& enc, int k_infer,
           const std::string& context, uint64_t seed) {
          RetrievalStrategy strategy;
          InferContext ctx = context == "retrieve" ? InferContext::retrieve
                             : context == "random" ? InferContext::random
                                                   : InferContext::none;
          return evaluate_heldout(params, docs, index, enc, k_infer, strategy,
                                  ctx, ContextContent::full_doc, seed);
        },
        py::arg("generator"), py::arg("docs"), py::arg("index"),
        py::arg("encoder"), py::arg("k_infer") = 2,
        py::arg("context") = "retrieve", py::arg("seed") = 0);

  m.def("text_to_image",
        [](const std::string& caption, const GeneratorParams& gen,
           const FrozenEncoder& enc, const MemoryIndex& index, int K,
           int n_samples, double temperature, double top_p, uint64_t seed) {
          RetrievalStrategy strategy;
          SamplingConfig sampling;
          sampling.temperature = temperature;
          sampling.top_p = top_p;
          TextToImageResult r = text_to_image(
              caption, gen, enc, index, K, strategy, n_samples, sampling,
              seed);
          return py::make_tuple(image_to_array(r.image),
                                provenance_dict(r.prov));
        },
        py::arg("caption"), py::arg("generator"), py::arg("encoder"),
        py::arg("index"), py::arg("k") = 2, py::arg("n_samples") = 10,
        py::arg("temperature") = 1.0, py::arg("top_p") = 0.9,
        py::arg("seed") = 0,
        "Caption to image: sample candidates, rerank by the frozen encoder.");

  m.def("controlled_generate",
        [](const std::string& caption, const std::vector<Document>& manual,
           const GeneratorParams& gen, const FrozenEncoder& enc,
           int n_samples, double temperature, double top_p, uint64_t seed) {
          SamplingConfig sampling;
          sampling.temperature = temperature;
          sampling.top_p = top_p;
          TextToImageResult r = controlled_generate(caption, manual, gen, enc,
                                                    n_samples, sampling, seed);
          return py::make_tuple(image_to_array(r.image),
                                provenance_dict(r.prov));
        },
        py::arg("caption"), py::arg("manual_docs"), py::arg("generator"),
        py::arg("encoder"), py::arg("n_samples") = 10,
        py::arg("temperature") = 1.0, py::arg("top_p") = 0.9,
        py::arg("seed") = 0);

  m.def("image_to_caption",
        [](const py::array_t<uint8_t>& pixels, const GeneratorParams& gen,
           const FrozenEncoder& enc, const MemoryIndex& index, int K,
           int n_samples, double temperature, double top_p, uint64_t seed) {
          RetrievalStrategy strategy;
          SamplingConfig sampling;
          sampling.temperature = temperature;
          sampling.top_p = top_p;
          sampling.max_new = 12;
          CaptionResult r =
              image_to_caption(image_from_array(pixels), gen, enc, index, K,
                               strategy, n_samples, sampling, seed);
          return py::make_tuple(r.caption, provenance_dict(r.prov));
        },
        py::arg("image"), py::arg("generator"), py::arg("encoder"),
        py::arg("index"), py::arg("k") = 2, py::arg("n_samples") = 32,
        py::arg("temperature") = 1.0, py::arg("top_p") = 0.9,
        py::arg("seed") = 0,
        "Image to caption: sample candidates, rank by perplexity.");

  m.def("infill_image",
        [](const py::array_t<uint8_t>& pixels, const std::set<int>& mask,
           const GeneratorParams& gen, const FrozenEncoder& enc,
           const MemoryIndex& index, int K, double temperature, double top_p,
           uint64_t seed) {
          RetrievalStrategy strategy;
          SamplingConfig sampling;
          sampling.temperature = temperature;
          sampling.top_p = top_p;
          InfillResult r = infill_image(image_from_array(pixels), mask, gen,
                                        enc, &index, nullptr, K, strategy,
                                        sampling, seed);
          return py::make_tuple(image_to_array(r.image),
                                provenance_dict(r.prov));
        },
        py::arg("image"), py::arg("mask_patches"), py::arg("generator"),
        py::arg("encoder"), py::arg("index"), py::arg("k") = 2,
        py::arg("temperature") = 1.0, py::arg("top_p") = 0.9,
        py::arg("seed") = 0);

  m.def("kshot_classify",
        [](const std::vector<std::pair<py::array_t<uint8_t>,
                                       py::array_t<uint8_t>>>& demo_pairs,
           const py::array_t<uint8_t>& test, const GeneratorParams& gen,
           const FrozenEncoder& enc, int k, bool swap_demo_order) {
          std::vector<std::pair<KshotDemo, KshotDemo>> demos;
          for (const auto& [x, y] : demo_pairs)
            demos.push_back({{image_from_array(x), kLabelXId},
                             {image_from_array(y), kLabelYId}});
          KshotResult r = kshot_classify(demos, image_from_array(test), gen,
                                         enc, k, swap_demo_order);
          return py::make_tuple(r.p_x, r.p_y);
        },
        py::arg("demo_pairs"), py::arg("test_image"), py::arg("generator"),
        py::arg("encoder"), py::arg("k") = 1,
        py::arg("swap_demo_order") = false,
        "Ensemble k-shot binary classification with fresh labels; returns "
        "(p_x, p_y).");

  m.def("retrieval_recall",
        [](const MemoryIndex& index, const std::vector<Document>& pairs,
           const std::string& mode, const FrozenEncoder& enc,
           const std::vector<int>& ks) {
          QueryMode m = mode == "text"    ? QueryMode::text
                        : mode == "image" ? QueryMode::image
                                          : QueryMode::mixture;
          return retrieval_recall(index, pairs, m, enc, ks);
        },
        py::arg("index"), py::arg("eval_pairs"), py::arg("mode"),
        py::arg("encoder"), py::arg("ks") = std::vector<int>{1, 3, 5});
}
