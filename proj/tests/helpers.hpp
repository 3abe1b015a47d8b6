#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "ramm/config.hpp"
#include "ramm/corpus_io.hpp"
#include "ramm/encoder.hpp"
#include "ramm/eval.hpp"
#include "ramm/generator.hpp"
#include "ramm/infer.hpp"
#include "ramm/memory.hpp"
#include "ramm/synth.hpp"
#include "ramm/train.hpp"

namespace ramm::testing {

// A small but complete fixture: corpus, tokenizers, trained encoder, index,
// and a tiny generator config. Built once per test binary.
struct TinyWorld {
  SynthConfig scfg;
  SynthCorpus corpus;
  TextVocab tv;
  Codebook cb;
  FrozenEncoder enc;
  MemoryIndex index;
  GeneratorConfig gcfg;
  RetrievalStrategy strategy;
};

inline const TinyWorld& tiny_world() {
  static TinyWorld* world = [] {
    auto* w = new TinyWorld();
    w->scfg.shapes = {"circle", "square", "triangle"};
    w->scfg.colors = {"red", "green", "blue", "yellow"};
    w->scfg.backgrounds = {"white", "black"};
    w->scfg.image_size = 16;
    w->scfg.n_train = 240;
    w->scfg.n_heldout_compositions = 3;
    w->scfg.n_heldout_docs = 40;
    w->scfg.seed = 11;
    w->corpus = synth_corpus(w->scfg);

    w->tv = TextVocab::fit(w->corpus.train);
    std::vector<Image> images;
    for (const Document& d : w->corpus.train)
      for (const Segment& s : d.segments)
        if (s.kind == SegmentKind::image) images.push_back(s.pixels);
    w->cb = Codebook::fit(images, 32, 4, 15, 5);

    std::vector<ContrastivePair> pairs;
    std::set<std::string> seen;
    for (const Document& d : w->corpus.train) {
      auto text = text_part(d);
      if (!seen.insert(*text).second) continue;
      ContrastivePair p;
      p.text_tokens = w->tv.encode(*text);
      p.image_codes = w->cb.tokenize(d.segments[1].pixels);
      pairs.push_back(std::move(p));
    }
    DualEncoderConfig ecfg;
    ecfg.dim = 32;
    ecfg.hidden = 32;
    ecfg.epochs = 60;
    ecfg.lr = 1e-2;
    ecfg.batch_size = static_cast<int>(pairs.size());
    ecfg.seed = 3;
    w->enc.params = train_dual_encoder(pairs, ecfg);
    w->enc.vocab = w->tv;
    w->enc.codebook = w->cb;
    w->enc.image_size = w->scfg.image_size;

    w->index = MemoryIndex::build(w->corpus.train, w->enc);

    w->gcfg.text_vocab_size = w->tv.size();
    w->gcfg.codebook_size = w->cb.k();
    w->gcfg.d_model = 32;
    w->gcfg.n_heads = 2;
    w->gcfg.n_layers = 2;
    w->gcfg.max_seq_len = 256;
    return w;
  }();
  return *world;
}

// Unit vectors realizing a target Gram matrix (must be PSD with unit
// diagonal). Rows of the result are the vectors, padded to `dim`.
inline Eigen::MatrixXd vectors_from_gram(const Eigen::MatrixXd& gram,
                                         int dim) {
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("vectors_from_gram: gram not PSD");
  Eigen::MatrixXd l = llt.matrixL();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(gram.rows(), dim);
  out.leftCols(gram.cols()) = l;
  return out;
}

inline std::string temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("ramm_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

// Central finite difference of f over one coordinate of a tensor view.
template <class F>
double central_diff(double* coord, double h, F&& f) {
  const double orig = *coord;
  *coord = orig + h;
  const double fp = f();
  *coord = orig - h;
  const double fm = f();
  *coord = orig;
  return (fp - fm) / (2 * h);
}

}  // namespace ramm::testing
