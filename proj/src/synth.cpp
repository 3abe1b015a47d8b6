#include "ramm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <stdexcept>

#include "ramm/rng.hpp"

namespace ramm {

namespace {

struct NamedColor {
  const char* name;
  std::array<uint8_t, 3> rgb;
};

// Shared table for shape colors and backgrounds.
constexpr NamedColor kColorTable[] = {
    {"red", {220, 40, 40}},    {"green", {40, 180, 70}},
    {"blue", {50, 90, 220}},   {"yellow", {230, 200, 50}},
    {"orange", {240, 140, 40}}, {"purple", {150, 60, 200}},
    {"teal", {40, 180, 180}},  {"pink", {240, 130, 180}},
    {"white", {245, 245, 245}}, {"black", {25, 25, 25}},
    {"slate", {120, 130, 140}}, {"navy", {20, 30, 80}},
};

void check_unique_names(const std::vector<std::string>& names,
                        const char* what) {
  std::set<std::string> seen;
  for (const auto& n : names) {
    if (!seen.insert(n).second)
      throw std::invalid_argument(std::string("synth config: duplicate ") +
                                  what + " name: " + n);
    color_rgb(n);  // unknown shape names are checked separately
  }
}

bool inside_shape(const std::string& shape, int x, int y, int cx, int cy,
                  int r) {
  if (shape == "circle") {
    int dx = x - cx, dy = y - cy;
    return dx * dx + dy * dy <= r * r;
  }
  if (shape == "square") {
    int s = r - 1;
    return std::abs(x - cx) <= s && std::abs(y - cy) <= s;
  }
  if (shape == "triangle") {
    // Filled upward triangle: apex (cx, cy-r), base at y = cy+r.
    if (y < cy - r || y > cy + r) return false;
    double half_width = (y - (cy - r)) * 0.5;
    return std::abs(x - cx) <= half_width;
  }
  throw std::invalid_argument("unknown shape name: " + shape);
}

std::string doc_id(const char* prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s-%06d", prefix, i);
  return buf;
}

Document make_pair_doc(std::string id, Split split, const Composition& comp,
                       int image_size, int jx, int jy, int shrink) {
  Document doc;
  doc.id = std::move(id);
  doc.split = split;
  doc.segments.push_back(Segment::make_text(composition_caption(comp)));
  doc.segments.push_back(
      Segment::make_image(render_composition(comp, image_size, jx, jy, shrink)));
  return doc;
}

}  // namespace

std::array<uint8_t, 3> color_rgb(const std::string& name) {
  for (const auto& c : kColorTable)
    if (name == c.name) return c.rgb;
  throw std::invalid_argument("unknown color name: " + name);
}

std::string composition_caption(const Composition& c) {
  return "a " + c.color + " " + c.shape + " on " + c.background + " background";
}

Image render_composition(const Composition& c, int image_size, int jx, int jy,
                         int shrink) {
  if (jx < -1 || jx > 1 || jy < -1 || jy > 1 || shrink < 0 || shrink > 1)
    throw std::invalid_argument("render_composition: jitter out of range");
  const auto fg = color_rgb(c.color);
  const auto bg = color_rgb(c.background);
  Image img;
  img.width = img.height = image_size;
  img.rgb.resize(static_cast<size_t>(image_size) * image_size * 3);

  const int cx = image_size / 2 + jx;
  const int cy = image_size / 2 + jy;
  const int r = (image_size * 5) / 16 - shrink;
  for (int y = 0; y < image_size; ++y) {
    for (int x = 0; x < image_size; ++x) {
      const auto& px = inside_shape(c.shape, x, y, cx, cy, r) ? fg : bg;
      uint8_t* p = img.at(x, y);
      p[0] = px[0];
      p[1] = px[1];
      p[2] = px[2];
    }
  }
  return img;
}

Composition classify_nearest_template(
    const Image& img, const std::vector<Composition>& candidates) {
  if (candidates.empty())
    throw std::invalid_argument("classify_nearest_template: no candidates");
  double best = std::numeric_limits<double>::infinity();
  const Composition* best_comp = nullptr;
  for (const auto& comp : candidates) {
    Image tmpl = render_composition(comp, img.width);
    if (tmpl.rgb.size() != img.rgb.size())
      throw std::invalid_argument("classify_nearest_template: size mismatch");
    double d = 0.0;
    for (size_t i = 0; i < img.rgb.size(); ++i) {
      double diff = static_cast<double>(img.rgb[i]) - tmpl.rgb[i];
      d += diff * diff;
    }
    if (d < best) {
      best = d;
      best_comp = &comp;
    }
  }
  return *best_comp;
}

void validate_synth_config(const SynthConfig& config) {
  if (config.shapes.empty() || config.colors.empty() ||
      config.backgrounds.empty())
    throw std::invalid_argument("synth config: empty attribute list");
  if (config.image_size < 8)
    throw std::invalid_argument("synth config: image_size < 8");
  check_unique_names(config.colors, "color");
  check_unique_names(config.backgrounds, "background");
  std::set<std::string> shapes(config.shapes.begin(), config.shapes.end());
  if (shapes.size() != config.shapes.size())
    throw std::invalid_argument("synth config: duplicate shape name");
  for (const auto& s : config.shapes)
    inside_shape(s, 0, 0, 0, 0, 1);  // rejects unknown shape names
  const size_t n_comp =
      config.shapes.size() * config.colors.size() * config.backgrounds.size();
  if (config.n_heldout_compositions < 0 ||
      static_cast<size_t>(config.n_heldout_compositions) >= n_comp)
    throw std::invalid_argument(
        "synth config: n_heldout_compositions must be < number of "
        "compositions");
  if (config.n_train <= 0 || config.n_heldout_docs < 0)
    throw std::invalid_argument("synth config: bad document counts");
}

SynthCorpus synth_corpus(const SynthConfig& config) {
  validate_synth_config(config);

  std::vector<Composition> all;
  for (const auto& s : config.shapes)
    for (const auto& c : config.colors)
      for (const auto& b : config.backgrounds) all.push_back({s, c, b});

  // Seeded shuffle, then split off the held-out triples.
  Rng rng(rng_mix(config.seed, 0x5f3759df));
  for (size_t i = all.size(); i > 1; --i)
    std::swap(all[i - 1], all[rng.below(i)]);

  SynthCorpus out;
  out.heldout_compositions.assign(
      all.begin(), all.begin() + config.n_heldout_compositions);
  out.train_compositions.assign(all.begin() + config.n_heldout_compositions,
                                all.end());
  std::sort(out.heldout_compositions.begin(), out.heldout_compositions.end());
  std::sort(out.train_compositions.begin(), out.train_compositions.end());

  Rng jitter = rng.child(1);
  auto emit = [&](const char* prefix, Split split,
                  const std::vector<Composition>& comps, int count,
                  std::vector<Document>& dst) {
    for (int i = 0; i < count; ++i) {
      const Composition& comp = comps[i % comps.size()];
      int jx = static_cast<int>(jitter.uniform_int(-1, 1));
      int jy = static_cast<int>(jitter.uniform_int(-1, 1));
      int shrink = static_cast<int>(jitter.uniform_int(0, 1));
      dst.push_back(make_pair_doc(doc_id(prefix, i), split, comp,
                                  config.image_size, jx, jy, shrink));
    }
  };
  emit("train", Split::train, out.train_compositions, config.n_train,
       out.train);
  if (config.n_heldout_docs > 0 && !out.heldout_compositions.empty())
    emit("held", Split::heldout, out.heldout_compositions,
         config.n_heldout_docs, out.heldout);
  return out;
}

}  // namespace ramm
