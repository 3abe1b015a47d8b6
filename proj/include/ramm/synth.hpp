#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "ramm/document.hpp"

namespace ramm {

struct SynthConfig {
  std::vector<std::string> shapes = {"circle", "square", "triangle"};
  std::vector<std::string> colors = {"red",    "green", "blue", "yellow",
                                     "orange", "purple", "teal", "pink"};
  std::vector<std::string> backgrounds = {"white", "black", "slate", "navy"};
  int image_size = 16;
  int n_train = 5000;
  int n_heldout_compositions = 6;
  int n_heldout_docs = 500;
  uint64_t seed = 0;
};

struct Composition {
  std::string shape;
  std::string color;
  std::string background;

  bool operator==(const Composition&) const = default;
  bool operator<(const Composition& o) const {
    return std::tie(shape, color, background) <
           std::tie(o.shape, o.color, o.background);
  }
};

struct SynthCorpus {
  std::vector<Document> train;
  std::vector<Document> heldout;
  std::vector<Composition> train_compositions;
  std::vector<Composition> heldout_compositions;
};

// RGB lookup for the renderer's named color table. Throws on unknown name.
std::array<uint8_t, 3> color_rgb(const std::string& name);

// Deterministic caption template: "a <color> <shape> on <background> background".
std::string composition_caption(const Composition& c);

// Rasterize one filled shape. jx/jy shift the center by one pixel at most,
// shrink trims the radius by at most one pixel; both default to the
// centered, full-radius render.
Image render_composition(const Composition& c, int image_size, int jx = 0,
                         int jy = 0, int shrink = 0);

// Nearest (shape, color, background) triple to `img` by pixel-space L2 over
// the canonical (jitter-free) renders of `candidates`.
Composition classify_nearest_template(const Image& img,
                                      const std::vector<Composition>& candidates);

// Generates the corpus: caption-image pair documents, held-out compositions
// absent from every train document. Pure function of the config.
SynthCorpus synth_corpus(const SynthConfig& config);

void validate_synth_config(const SynthConfig& config);

}  // namespace ramm
